"""Zero-temperature (interpolation) limit of the posterior predictive.

As the likelihood precision diverges, the predictive mean collapses to
the least-norm interpolant, the covariance factorizes into the input
Schur complement times the posterior mean of the scale matrix, and, for
depth-2 networks, the scale matrix follows a matrix generalized inverse
Gaussian (MGIG) law. This module provides those closed forms, an exact
sampler for the scalar (GIG) case, and a Metropolis chain for the matrix
case, together with the scale-moment estimates the limiting covariance
and kernel need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .chainstats import batch_means_se, effective_draws
from .exceptions import ChainDiagnosticError
from .linalg import kron, psd_clamp, require_well_conditioned, symmetrize
from .model import Dataset, GramSet, NetworkShape, build_gram_set
from .seeding import as_generator


@dataclass(frozen=True)
class MgigParams:
    """Parameters of the zero-temperature scale law for depth-2 networks.

    The density over PD matrices is proportional to
    ``det(L)^(nu - (n+1)/2) * etr(-(b @ L + a @ inv(L)) / 2)``.
    """

    a: np.ndarray
    b: np.ndarray
    nu: float

    def __post_init__(self):
        a = symmetrize(np.atleast_2d(np.asarray(self.a, dtype=float)))
        b = symmetrize(np.atleast_2d(np.asarray(self.b, dtype=float)))
        if a.shape != b.shape:
            raise ValueError("a and b must have matching shapes")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(self.nu)):
            raise ValueError("MGIG parameters must be finite")
        if np.linalg.eigvalsh(a).min() < -1e-10 * max(1.0, float(np.linalg.norm(a))):
            raise ValueError("a must be PSD")
        if np.linalg.eigvalsh(b).min() <= 0:
            raise ValueError("b must be PD")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def mgig_params_from_data(ds: Dataset, shape: NetworkShape) -> MgigParams:
    """Zero-temperature scale-law parameters of a depth-2 instance."""
    if shape.d != 2:
        raise ValueError("the zero-temperature scale law is a depth-2 result")
    n1 = shape.widths[1]
    if n1 <= ds.p:
        raise ValueError(
            f"hidden width n1={n1} must exceed the number of examples p={ds.p} "
            "for the zero-temperature scale law used here"
        )
    gxx = build_gram_set(ds).gxx
    a = symmetrize(ds.Y.T @ np.linalg.solve(gxx, ds.Y))
    return MgigParams(a=a, b=float(n1) * np.eye(ds.nd), nu=0.5 * (n1 - ds.p))


@dataclass
class ScaleMoments:
    """Posterior mean of the scale matrix and of its inverse, with errors."""

    mean_L: np.ndarray
    mean_Linv: np.ndarray
    se_L: np.ndarray
    se_Linv: np.ndarray
    num_samples: int = 0
    diagnostics: dict | None = None


def require_interpolatable(ds: Dataset, tol: float = 1e-8) -> None:
    """Check that some weight matrix maps the inputs exactly onto the targets."""
    residual = float(np.linalg.norm(ds.X @ (np.linalg.pinv(ds.X) @ ds.Y) - ds.Y))
    if residual > tol:
        raise ValueError(
            f"training targets are not linearly interpolatable "
            f"(residual {residual:.3e} > {tol:.1e}); the zero-temperature "
            "limit is ill-posed for this dataset"
        )


def zt_mean(grams: GramSet, Y: np.ndarray) -> np.ndarray:
    """Limiting mean predictor: the least-norm interpolant at the test inputs."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    gxx = require_well_conditioned(grams.gxx, grams.cond_cap, name="gxx")
    return grams.gxxh.T @ np.linalg.solve(gxx, Y)


def zt_covariance(grams: GramSet, EL: np.ndarray) -> np.ndarray:
    """Limiting predictive covariance: input Schur complement times ``E[L]``.

    The Schur complement is eigenvalue-clamped at round-off scale, so a
    test set equal to the training set yields an exactly zero matrix;
    negativity beyond round-off raises.
    """
    EL = symmetrize(np.atleast_2d(np.asarray(EL, dtype=float)))
    schur = grams.gxhxh - grams.gxxh.T @ np.linalg.solve(grams.gxx, grams.gxxh)
    scale = max(1.0, float(np.linalg.norm(grams.gxhxh)))
    schur = psd_clamp(schur, clamp_tol=1e-12 * scale, error_tol=1e-8 * scale,
                      name="input Schur complement")
    return kron(schur, EL)


def mgig_log_density(L: np.ndarray, params: MgigParams) -> float:
    """Unnormalized log-density of the MGIG law at a PD matrix ``L``.

    Evaluates ``(nu - (n+1)/2) logdet L - (tr(b L) + tr(a inv(L)))/2``;
    singular or indefinite ``L`` maps to ``-inf``.
    """
    L = symmetrize(np.atleast_2d(np.asarray(L, dtype=float)))
    n = params.dim
    if L.shape != (n, n):
        raise ValueError(f"L must be {n}x{n}")
    w = np.linalg.eigvalsh(L)
    if w.min() <= 0:
        return -np.inf
    logdet = float(np.log(w).sum())
    tr_b = float(np.sum(params.b * L))
    tr_a = float(np.sum(params.a * np.linalg.inv(L)))
    return (params.nu - 0.5 * (n + 1)) * logdet - 0.5 * (tr_b + tr_a)


# ---------------------------------------------------------------------------
# Scalar generalized inverse Gaussian sampling
# ---------------------------------------------------------------------------


def _gig_log_kernel(x: np.ndarray, nu: float, omega: float) -> np.ndarray:
    return (nu - 1.0) * np.log(x) - 0.5 * omega * (x + 1.0 / x)


def _gig_rou_bounds(nu: float, omega: float):
    """Mode and rectangle bounds of the mode-shifted ratio-of-uniforms region."""
    mode = ((nu - 1.0) + np.hypot(nu - 1.0, omega)) / omega
    log_k_mode = _gig_log_kernel(np.array(mode), nu, omega)

    def dlogq(x):
        return (nu - 1.0) / x - 0.5 * omega * (1.0 - 1.0 / x**2)

    def stat(x):
        return 2.0 / (x - mode) + dlogq(x)

    hi = mode * 2.0 + 1.0
    while stat(hi) > 0:
        hi *= 2.0
    x_plus = brentq(stat, mode * (1 + 1e-12) + 1e-300, hi, xtol=1e-14, rtol=1e-14)
    lo = mode / 2.0
    while stat(lo) < 0:
        lo /= 2.0
    x_minus = brentq(stat, lo, mode * (1 - 1e-12), xtol=1e-14, rtol=1e-14)

    def h(x):
        return (x - mode) * np.exp(0.5 * (_gig_log_kernel(np.array(x), nu, omega) - log_k_mode))

    return mode, float(log_k_mode), float(h(x_plus)), float(h(x_minus))


def sample_gig(nu: float, chi: float, psi: float, seed, size: int | None = None):
    """Exact draws from the generalized inverse Gaussian distribution.

    The density is proportional to ``x^(nu-1) exp(-(chi/x + psi x)/2)`` on
    the positive half-line. ``chi = 0`` (requires ``nu > 0``) degenerates
    to a Gamma draw; otherwise sampling uses mode-shifted
    ratio-of-uniforms rejection, exact and deterministic given ``seed``.
    Returns a float when ``size`` is None, else an array.
    """
    if psi <= 0:
        raise ValueError("psi must be positive")
    if chi < 0:
        raise ValueError("chi must be non-negative")
    rng = as_generator(seed)
    n = 1 if size is None else int(size)
    if n < 1:
        raise ValueError("size must be positive")

    if chi == 0.0:
        if nu <= 0:
            raise ValueError("chi = 0 requires nu > 0 for a proper density")
        out = rng.gamma(nu, 2.0 / psi, size=n)
        return float(out[0]) if size is None else out

    omega = float(np.sqrt(chi * psi))
    mode, log_k_mode, v_max, v_min = _gig_rou_bounds(nu, omega)
    out = np.empty(n)
    filled = 0
    while filled < n:
        k = max(n - filled, 256)
        u = rng.uniform(0.0, 1.0, size=k)
        v = rng.uniform(v_min, v_max, size=k)
        ok = u > 0.0
        x = np.empty_like(u)
        x[ok] = mode + v[ok] / u[ok]
        ok &= x > 0.0
        accept = np.zeros(k, dtype=bool)
        if ok.any():
            log_k = _gig_log_kernel(x[ok], nu, omega)
            accept[ok] = 2.0 * np.log(u[ok]) <= log_k - log_k_mode
        n_acc = min(int(accept.sum()), n - filled)
        if n_acc > 0:
            out[filled:filled + n_acc] = x[accept][:n_acc]
            filled += n_acc
    out *= np.sqrt(chi / psi)
    return float(out[0]) if size is None else out


# ---------------------------------------------------------------------------
# Matrix case: random-walk Metropolis on the Cholesky factor
# ---------------------------------------------------------------------------


@dataclass
class MgigChain:
    """Retained MGIG samples plus chain diagnostics.

    Behaves as a sequence of PD matrices; ``acceptance_rate`` and
    ``ess_per_coord`` describe the post-burn-in chain.
    """

    samples: np.ndarray
    acceptance_rate: float
    step_size: float
    ess_per_coord: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)

    def diagnostics(self) -> dict:
        return {
            "acceptance_rate": float(self.acceptance_rate),
            "step_size": float(self.step_size),
            "ess_per_coord": [float(v) for v in self.ess_per_coord],
            "kept_samples": int(len(self)),
        }


def _chol_assemble(theta: np.ndarray, n: int) -> np.ndarray:
    t = np.zeros((n, n))
    t[np.diag_indices(n)] = np.exp(theta[:n])
    if n > 1:
        t[np.tril_indices(n, -1)] = theta[n:]
    return t


def _mgig_log_target(theta: np.ndarray, params: MgigParams) -> float:
    # Density over theta = (log diag T, strict lower T) for L = T T^T.
    # The change of variables contributes sum_i (n + 2 - i) log T_ii
    # (1-based row index i), absorbing both the Cholesky Jacobian and the
    # log-diagonal reparameterization.
    n = params.dim
    t = _chol_assemble(theta, n)
    diag = np.diag(t)
    log_diag = theta[:n]
    logdet_l = 2.0 * float(log_diag.sum())
    tr_b = float(np.sum(params.b * (t @ t.T)))
    s = solve_triangular(t, params.a, lower=True)
    s2 = solve_triangular(t, s.T, lower=True)
    tr_a_inv = float(np.trace(s2))
    jac = float(np.sum((n + 2.0 - np.arange(1, n + 1)) * log_diag))
    return (params.nu - 0.5 * (n + 1)) * logdet_l - 0.5 * (tr_b + tr_a_inv) + jac


def sample_mgig_mcmc(params: MgigParams, steps: int, burn_in: int, seed, *,
                     thin: int = 1, initial_step: float = 0.2) -> MgigChain:
    """Random-walk Metropolis targeting the MGIG law, for dimension >= 2.

    The walk lives on the Cholesky factor of ``L`` with log-parameterized
    diagonal, so every proposal is automatically PD. The step size is
    tuned toward 20-40% acceptance during burn-in and then frozen; the
    post-burn-in chain is thinned by ``thin``. An acceptance rate below
    1% after tuning raises a diagnostic error.
    """
    n = params.dim
    if n < 2:
        raise ValueError("use sample_gig for the scalar case")
    if steps < 1 or burn_in < 0:
        raise ValueError("steps must be positive and burn_in non-negative")
    rng = as_generator(seed)
    dim = n + n * (n - 1) // 2
    theta = np.zeros(dim)  # L = I
    log_p = _mgig_log_target(theta, params)
    step = float(initial_step)

    window = 100
    accepted_window = 0
    for i in range(burn_in):
        theta, log_p, acc = _rwm_step(theta, log_p, step, params, rng)
        accepted_window += acc
        if (i + 1) % window == 0:
            rate = accepted_window / window
            if rate < 0.2:
                step /= 1.3
            elif rate > 0.4:
                step *= 1.3
            accepted_window = 0

    kept = []
    accepted = 0
    for i in range(steps):
        theta, log_p, acc = _rwm_step(theta, log_p, step, params, rng)
        accepted += acc
        if (i + 1) % thin == 0:
            t = _chol_assemble(theta, n)
            kept.append(symmetrize(t @ t.T))
    rate = accepted / steps
    if rate < 0.01:
        raise ChainDiagnosticError(
            f"Metropolis acceptance rate {rate:.4f} below 1% after tuning; "
            "the target may be ill-conditioned"
        )
    if not kept:
        raise ValueError("thinning retained no samples; lower thin or raise steps")
    samples = np.stack(kept)
    flat = samples.reshape(samples.shape[0], -1)
    ess = np.array([
        effective_draws(flat[:, j:j + 1]) for j in range(flat.shape[1])
    ])
    return MgigChain(samples=samples, acceptance_rate=rate, step_size=step,
                     ess_per_coord=ess)


def _rwm_step(theta, log_p, step, params, rng):
    prop = theta + step * rng.normal(size=theta.shape)
    log_p_prop = _mgig_log_target(prop, params)
    if np.log(rng.uniform()) < log_p_prop - log_p:
        return prop, log_p_prop, 1
    return theta, log_p, 0


def zt_scale_moments(ds: Dataset, shape: NetworkShape, num_samples: int,
                     seed, *, burn_in: int | None = None,
                     thin: int = 5) -> ScaleMoments:
    """Posterior mean of the scale matrix and its inverse at zero temperature.

    Depth-2 only, with hidden width exceeding the number of examples.
    Single-output instances use exact GIG draws; larger output dimensions
    run the Metropolis chain, with autocorrelation-adjusted errors.
    """
    params = mgig_params_from_data(ds, shape)
    require_interpolatable(ds)
    if num_samples < 2:
        raise ValueError("need at least two samples")
    nd = ds.nd

    if nd == 1:
        chi = float(params.a[0, 0])
        psi = float(params.b[0, 0])
        lams = sample_gig(params.nu, chi, psi, seed, size=num_samples)
        inv = 1.0 / lams
        root_n = np.sqrt(num_samples)
        return ScaleMoments(
            mean_L=np.array([[lams.mean()]]),
            mean_Linv=np.array([[inv.mean()]]),
            se_L=np.array([[lams.std(ddof=1) / root_n]]),
            se_Linv=np.array([[inv.std(ddof=1) / root_n]]),
            num_samples=num_samples,
            diagnostics={"sampler": "gig", "kept_samples": num_samples},
        )

    if burn_in is None:
        burn_in = max(1000, num_samples // 5)
    chain = sample_mgig_mcmc(params, steps=num_samples * thin, burn_in=burn_in,
                             seed=seed, thin=thin)
    samples = chain.samples
    inverses = np.stack([np.linalg.inv(s) for s in samples])
    se_l, _ = batch_means_se(samples)
    se_inv, _ = batch_means_se(inverses)
    diagnostics = chain.diagnostics()
    diagnostics["sampler"] = "mgig_metropolis"
    return ScaleMoments(
        mean_L=symmetrize(samples.mean(axis=0)),
        mean_Linv=symmetrize(inverses.mean(axis=0)),
        se_L=se_l,
        se_Linv=se_inv,
        num_samples=len(chain),
        diagnostics=diagnostics,
    )


def zt_predictive_moments(ds: Dataset, shape: NetworkShape, num_samples: int,
                          seed) -> "PredictiveMoments":
    """Zero-temperature predictive moments for depth 1 or 2 networks.

    The mean is exact; the covariance couples the input Schur complement
    with the estimated scale mean (identity for depth 1, MGIG moments for
    depth 2).
    """
    from .posterior import PredictiveMoments

    require_interpolatable(ds)
    grams = build_gram_set(ds)
    mean = zt_mean(grams, ds.Y)
    nd, phat = ds.nd, ds.phat
    if shape.d == 1:
        el = np.eye(nd)
        se_l = np.zeros((nd, nd))
        ess = float(num_samples)
        kept = num_samples
    elif shape.d == 2:
        moments = zt_scale_moments(ds, shape, num_samples, seed)
        el, se_l = moments.mean_L, moments.se_L
        kept = moments.num_samples
        diag = moments.diagnostics or {}
        ess = float(min(diag.get("ess_per_coord", [kept]) or [kept]))
    else:
        raise ValueError(
            "zero-temperature moments are implemented for depth 1 and 2 only"
        )
    cov = zt_covariance(grams, el)
    schur = grams.gxhxh - grams.gxxh.T @ np.linalg.solve(grams.gxx, grams.gxxh)
    cov_se = kron(np.abs(schur), se_l)
    return PredictiveMoments(
        mean=mean, cov=cov,
        mean_se=np.zeros((phat, nd)), cov_se=cov_se,
        ess=ess, num_samples=kept, seed=seed if isinstance(seed, int) else None,
    )
