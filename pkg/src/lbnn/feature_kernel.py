"""Posterior-mean feature kernel of the first hidden layer.

The posterior average of the first layer's training-set feature kernel is
the input Gram matrix plus a width-suppressed, data-dependent correction:
``<K> = gxx + E[corr(L)] / n1`` where the correction at a fixed scale is
quadratic in the per-scale predictive mean and a trace term. The scale
average uses the same self-normalized importance sampling machinery as
the predictive moments. The zero-temperature limit trades the correction
for the posterior reciprocal mean of the scale matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import symmetrize
from .matrix_io import matrix_from_dict, matrix_to_dict
from .model import Dataset, GramSet, NetworkShape, build_gram_set
from .posterior import MixturePlan, _check_instance
from .scale_prior import _draw_scale_matrix
from .seeding import substream
from .snis import DEFAULT_BLOCKS, DEFAULT_ESS_FLOOR, snis_reduce
from .zero_temp import ScaleMoments, mgig_params_from_data, require_interpolatable

#: Valid regime tags for kernel estimates.
REGIMES = ("monte_carlo", "zero_temp", "wide", "large_p", "li_sompolinsky",
           "aitchison")


@dataclass
class KernelEstimate:
    """A ``p x p`` kernel estimate with provenance and errors.

    ``regime`` records which computational route produced the estimate;
    ``residual`` is populated by the Riccati-equation regimes.
    """

    kernel: np.ndarray
    se: np.ndarray
    ess: float
    regime: str
    num_samples: int | None = None
    seed: int | None = None
    residual: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")

    def to_dict(self) -> dict:
        return {
            "kernel": matrix_to_dict(self.kernel),
            "se": matrix_to_dict(self.se),
            # deterministic results carry no meaningful ESS; serialized as null
            "ess": float(self.ess) if math.isfinite(self.ess) else None,
            "regime": self.regime,
            "samples": None if self.num_samples is None else int(self.num_samples),
            "seed": None if self.seed is None else int(self.seed),
            "residual": None if self.residual is None else float(self.residual),
        }


def kernel_estimate_from_dict(obj: dict) -> KernelEstimate:
    return KernelEstimate(
        kernel=matrix_from_dict(obj["kernel"], "kernel"),
        se=matrix_from_dict(obj["se"], "se"),
        ess=math.inf if obj.get("ess") is None else float(obj["ess"]),
        regime=str(obj["regime"]),
        num_samples=None if obj.get("samples") is None else int(obj["samples"]),
        seed=None if obj.get("seed") is None else int(obj["seed"]),
        residual=None if obj.get("residual") is None else float(obj["residual"]),
    )


class _KernelPlan:
    """Shared eigenstructure for evaluating the correction over many scales."""

    def __init__(self, grams: GramSet, Y: np.ndarray, beta: float):
        self.inner = MixturePlan(grams, Y, beta)
        self.gram_evecs_scaled = grams.gxx @ self.inner.evecs  # = U diag(d)

    def correction(self, L: np.ndarray) -> np.ndarray:
        """Kernel correction at one scale matrix (all entries from one solve)."""
        plan = self.inner
        beta = plan.beta
        e_l, v_l = np.linalg.eigh(symmetrize(L))
        if e_l.min() <= 0:
            raise ValueError("scale matrix must be positive definite")
        grid = beta * np.outer(plan.evals, e_l)
        w = 1.0 / (1.0 + grid)
        y_t = plan.proj_y @ v_l
        z = plan.evecs @ (y_t * w) @ v_l.T
        gz = plan.grams.gxx @ z
        term1 = beta**2 * gz @ L @ gz.T
        trace_coef = (w * e_l[None, :]).sum(axis=1)       # sum_a e_a / (1 + b d e)
        h = self.gram_evecs_scaled
        term2 = beta * (h * trace_coef) @ h.T
        return symmetrize(term1 - term2)

    def correction_batch_scalar(self, lams: np.ndarray) -> np.ndarray:
        """Vectorized single-output corrections, one ``p x p`` slab per scale."""
        plan = self.inner
        beta = plan.beta
        lams = np.asarray(lams, dtype=float)
        d = plan.evals
        w = 1.0 / (1.0 + beta * lams[:, None] * d[None, :])    # (S, p)
        a = w * (d * plan.proj_y[:, 0])[None, :]               # eigen-basis G ridge^-1 y
        u_a = a @ plan.evecs.T                                  # (S, p) rows in data basis
        term1 = beta**2 * lams[:, None, None] * np.einsum("si,sj->sij", u_a, u_a)
        term2 = beta * lams[:, None, None] * np.einsum(
            "ia,sa,ja->sij", plan.evecs, w * d[None, :] ** 2, plan.evecs
        )
        return term1 - term2


def kernel_correction(grams: GramSet, Y: np.ndarray, L: np.ndarray,
                      beta: float) -> np.ndarray:
    """Data-dependent kernel correction at a fixed scale matrix.

    Entry ``(mu, nu)`` is the quadratic form of the ridge solve against
    the selector-sandwiched Gram, minus the matching trace term; the whole
    matrix costs ``O(p^2 nd^2)`` after one eigendecomposition pair rather
    than ``p^2`` independent solves.
    """
    plan = _KernelPlan(grams, Y, beta)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape != (plan.inner.nd, plan.inner.nd):
        raise ValueError(f"scale matrix must be {plan.inner.nd}x{plan.inner.nd}")
    return plan.correction(L)


def kernel_correction_scalar(grams: GramSet, y: np.ndarray, lam: float,
                             beta: float) -> np.ndarray:
    """Single-output kernel correction in closed form.

    The first term is the outer product of the (non-averaged) training
    mean predictor with itself; the second is the scaled ridge trace term.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    lam = float(lam)
    gamma = np.eye(grams.p) + beta * lam * grams.gxx
    gy = grams.gxx @ np.linalg.solve(gamma, y)
    gg = grams.gxx @ np.linalg.solve(gamma, grams.gxx)
    return lam * beta**2 * np.outer(gy, gy) - lam * beta * gg


def mean_kernel(ds: Dataset, shape: NetworkShape, num_samples: int, seed: int,
                *, workers: int = 1, ess_floor: float = DEFAULT_ESS_FLOOR,
                n_blocks: int = DEFAULT_BLOCKS) -> KernelEstimate:
    """Monte Carlo posterior-mean feature kernel at finite temperature.

    Self-normalized average of the per-scale corrections added to the
    input Gram, with jackknife standard errors. Depth-1 networks have no
    correction and return the Gram exactly.
    """
    _check_instance(ds, shape)
    if shape.zero_temperature:
        raise ValueError("beta is infinite; use zt_mean_kernel")
    grams = build_gram_set(ds)
    p = ds.p
    if shape.d == 1:
        return KernelEstimate(kernel=grams.gxx, se=np.zeros((p, p)),
                              ess=float(num_samples), regime="monte_carlo",
                              num_samples=num_samples, seed=seed)
    if num_samples < 2:
        raise ValueError("need at least two scale samples")
    plan = _KernelPlan(grams, ds.Y, shape.beta)
    inner = plan.inner
    n1 = shape.widths[1]

    def sample_block(block: range):
        if ds.nd == 1:
            lams = np.array([
                _draw_scale_matrix(shape, substream(seed, i))[0, 0]
                for i in block
            ])
            log_w = inner.scalar_batch(lams)[0]
            deltas = plan.correction_batch_scalar(lams)
            return log_w, {"delta": deltas}
        log_w = np.empty(len(block))
        deltas = np.empty((len(block), p, p))
        for j, i in enumerate(block):
            L = _draw_scale_matrix(shape, substream(seed, i))
            log_w[j] = inner.components(L)[0]
            deltas[j] = plan.correction(L)
        return log_w, {"delta": deltas}

    res = snis_reduce(sample_block, num_samples, workers=workers, n_blocks=n_blocks)
    res.check_ess(ess_floor)
    kernel, se = res.jackknife(
        "delta", fn=lambda dm: symmetrize(grams.gxx + dm / n1)
    )
    return KernelEstimate(kernel=symmetrize(kernel), se=se, ess=res.ess,
                          regime="monte_carlo", num_samples=num_samples,
                          seed=seed)


def zt_mean_kernel(ds: Dataset, shape: NetworkShape,
                   moments: ScaleMoments) -> KernelEstimate:
    """Zero-temperature posterior-mean feature kernel for depth-2 networks.

    ``K = (1 - nd/n1) gxx + Y E[inv(L)] Y^T / n1`` with the reciprocal
    scale mean supplied by the zero-temperature module; standard errors
    propagate entrywise from the moment errors.
    """
    mgig_params_from_data(ds, shape)  # validates depth-2, n1 > p
    require_interpolatable(ds)
    n1 = shape.widths[1]
    nd = ds.nd
    mean_inv = np.atleast_2d(np.asarray(moments.mean_Linv, dtype=float))
    se_inv = np.atleast_2d(np.asarray(moments.se_Linv, dtype=float))
    if mean_inv.shape != (nd, nd):
        raise ValueError(f"moments dimension {mean_inv.shape} does not match nd={nd}")
    grams = build_gram_set(ds)
    kernel = (1.0 - nd / n1) * grams.gxx + (ds.Y @ mean_inv @ ds.Y.T) / n1
    y_sq = ds.Y**2
    se = np.sqrt(y_sq @ se_inv**2 @ y_sq.T) / n1
    diag = moments.diagnostics or {}
    ess = float(min(diag.get("ess_per_coord", [moments.num_samples])
                    or [moments.num_samples]))
    return KernelEstimate(kernel=symmetrize(kernel), se=se, ess=ess,
                          regime="zero_temp", num_samples=moments.num_samples)
