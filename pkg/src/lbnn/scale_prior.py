"""Prior distribution of the output-channel scale matrix.

Integrating the first layer out of a depth-``d`` linear network leaves a
random ``nd x nd`` scale matrix built from the remaining weights,

    L = W_d ... W_2 W_2^T ... W_d^T,

whose prior law (induced by the isotropic Gaussian weight priors with
variance ``1/n_{l-1}`` per layer) has mean exactly the identity. For
``d = 2`` the law is Wishart with ``n1`` degrees of freedom and scale
``I/n1``, collapsing to a Gamma-distributed scalar when ``nd = 1``; for
deeper networks only sampling access is provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, multigammaln

from .linalg import symmetrize
from .model import NetworkShape
from .seeding import as_generator, substream


@dataclass
class ScaleSample:
    """One draw of the scale matrix with an optional posterior log-weight.

    ``log_weight`` holds the log of the unnormalized data reweighting
    relative to the prior; it is filled in by the posterior machinery,
    not at sampling time.
    """

    L: np.ndarray
    log_weight: float | None = None

    @property
    def lam(self) -> float:
        """Scalar value for single-output networks."""
        if self.L.shape != (1, 1):
            raise ValueError("lam is only defined for 1x1 scale matrices")
        return float(self.L[0, 0])


def _draw_scale_matrix(shape: NetworkShape, rng: np.random.Generator) -> np.ndarray:
    # Chain product of layers 2..d; each W_l has i.i.d. N(0, 1/n_{l-1}) entries.
    widths = shape.widths
    m = None
    for ell in range(2, shape.d + 1):
        n_in, n_out = widths[ell - 1], widths[ell]
        w = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
        m = w if m is None else w @ m
    return symmetrize(m @ m.T)


def sample_scale(shape: NetworkShape, seed) -> ScaleSample:
    """Draw the scale matrix of a depth >= 2 network from its prior.

    Deterministic given ``seed`` (an int, SeedSequence, or Generator).
    Depth-1 networks have no scale matrix; callers use the identity.
    """
    if shape.d < 2:
        raise ValueError("the scale matrix exists only for depth >= 2")
    return ScaleSample(L=_draw_scale_matrix(shape, as_generator(seed)))


def sample_scale_many(shape: NetworkShape, seed: int, size: int) -> np.ndarray:
    """Stack of ``size`` prior draws, one per-index substream of ``seed``.

    Draw ``i`` uses the stream keyed by ``(seed, i)``, so any contiguous
    slice of the output can be recomputed independently (the property the
    sharded estimators rely on).
    """
    if shape.d < 2:
        raise ValueError("the scale matrix exists only for depth >= 2")
    nd = shape.nd
    out = np.empty((size, nd, nd))
    for i in range(size):
        out[i] = _draw_scale_matrix(shape, substream(seed, i))
    return out


def sample_wishart(n1: int, n2: int, seed) -> ScaleSample:
    """Exact Wishart draw with scale ``I/n1`` and ``n1`` degrees of freedom.

    Uses the Bartlett decomposition; requires ``n1 >= n2`` so the draw is
    almost surely nonsingular.
    """
    if n1 < n2:
        raise ValueError(f"degrees of freedom n1={n1} must be >= dimension n2={n2}")
    rng = as_generator(seed)
    a = _bartlett_factor(n1, n2, rng)
    return ScaleSample(L=symmetrize(a @ a.T / n1))


def sample_wishart_many(n1: int, n2: int, seed: int, size: int) -> np.ndarray:
    """Vectorized stack of ``size`` Wishart draws from a single stream."""
    if n1 < n2:
        raise ValueError(f"degrees of freedom n1={n1} must be >= dimension n2={n2}")
    rng = as_generator(seed)
    a = np.zeros((size, n2, n2))
    for j in range(n2):
        a[:, j, j] = np.sqrt(rng.chisquare(n1 - j, size=size))
        if j > 0:
            a[:, j, :j] = rng.normal(size=(size, j))
    l = np.einsum("sik,sjk->sij", a, a) / n1
    return 0.5 * (l + np.swapaxes(l, 1, 2))


def _bartlett_factor(n1: int, n2: int, rng: np.random.Generator) -> np.ndarray:
    a = np.zeros((n2, n2))
    for j in range(n2):
        a[j, j] = np.sqrt(rng.chisquare(n1 - j))
        if j > 0:
            a[j, :j] = rng.normal(size=j)
    return a


def log_scale_density_d2(L, n1: int, n2: int) -> float:
    """Exact log-density of the depth-2 scale prior at ``L``.

    This is the Wishart density with ``n1`` degrees of freedom and scale
    ``I/n1``; for ``n2 = 1`` it coincides with a Gamma density with shape
    ``n1/2`` and scale ``2/n1``. Singular ``L`` maps to ``-inf``.
    """
    if n1 < n2:
        raise ValueError(f"degrees of freedom n1={n1} must be >= dimension n2={n2}")
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape != (n2, n2):
        raise ValueError(f"L must be {n2}x{n2}, got {L.shape}")
    sign, logdet = np.linalg.slogdet(L)
    if sign <= 0:
        return -np.inf
    w_min = float(np.linalg.eigvalsh(symmetrize(L)).min())
    if w_min <= 0:
        return -np.inf
    half_dof = 0.5 * n1
    log_norm = (
        half_dof * n2 * np.log(2.0)
        - half_dof * n2 * np.log(n1)  # -(dof/2) log det(scale), scale = I/n1
        + multigammaln(half_dof, n2)
    )
    return float(
        0.5 * (n1 - n2 - 1) * logdet - 0.5 * n1 * np.trace(L) - log_norm
    )


def log_gamma_density(lam: float, shape: float, scale: float) -> float:
    """Gamma log-density, the scalar reference for the depth-2 prior."""
    if lam <= 0:
        return -np.inf
    return float(
        (shape - 1.0) * np.log(lam) - lam / scale
        - shape * np.log(scale) - gammaln(shape)
    )
