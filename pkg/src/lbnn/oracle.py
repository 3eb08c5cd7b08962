"""Ground-truth posterior computation in weight space.

Everything here works directly with the weight matrices and never touches
the scale-mixture machinery, so agreement between the two routes is a
meaningful end-to-end check. Three independent oracles are provided:

* a cyclic Gibbs sampler whose layer conditionals are exactly Gaussian in
  a linear network;
* naive prior importance sampling over all weights;
* deterministic one-dimensional quadrature for the scalar-output depth-2
  case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .chainstats import batch_means_se, effective_draws
from .exceptions import ChainDiagnosticError, QuadratureError
from .feature_kernel import KernelEstimate
from .linalg import kron, symmetrize, vec
from .model import Dataset, NetworkShape
from .posterior import PredictiveMoments
from .seeding import as_generator, substream
from .snis import DEFAULT_BLOCKS, DEFAULT_ESS_FLOOR, snis_reduce


@dataclass
class WeightState:
    """All weight matrices of one posterior draw, first layer first."""

    W: tuple

    def __post_init__(self):
        object.__setattr__(self, "W", tuple(np.asarray(w, dtype=float) for w in self.W))
        for w in self.W:
            if not np.all(np.isfinite(w)):
                raise ValueError("weight state contains non-finite entries")

    def outputs(self, X: np.ndarray) -> np.ndarray:
        """Network outputs ``X W1^T ... Wd^T`` for row-wise inputs."""
        f = np.asarray(X, dtype=float)
        for w in self.W:
            f = f @ w.T
        return f

    def first_layer_kernel(self, X: np.ndarray) -> np.ndarray:
        """Normalized first-layer feature kernel ``X W1^T W1 X^T / n1``."""
        phi = np.asarray(X, dtype=float) @ self.W[0].T
        return symmetrize(phi @ phi.T / self.W[0].shape[0])


def layer_conditional(P: np.ndarray, Q: np.ndarray, Y: np.ndarray, beta: float,
                      prior_precision: float):
    """Gaussian conditional of one layer given all others.

    With the layer's input prefix ``P`` (p x n_in) and output suffix ``Q``
    (nd x n_out), the outputs are ``P W^T Q^T``, so the row-major
    vectorization of ``W^T`` has precision
    ``prior_precision I + beta kron(P^T P, Q^T Q)`` and mean solving
    ``precision m = beta vec(P^T Y Q)``. Returns ``(mean, chol_lower)``.
    """
    precision = prior_precision * np.eye(P.shape[1] * Q.shape[1])
    precision += beta * kron(P.T @ P, Q.T @ Q)
    try:
        chol, lower = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ChainDiagnosticError(
            f"layer conditional precision is not PD: {exc}"
        ) from exc
    rhs = beta * vec(P.T @ Y @ Q)
    mean = cho_solve((chol, lower), rhs)
    return mean, np.tril(chol)


def _draw_layer(rng: np.random.Generator, P: np.ndarray, Q: np.ndarray,
                Y: np.ndarray, beta: float, prior_precision: float) -> np.ndarray:
    mean, chol = layer_conditional(P, Q, Y, beta, prior_precision)
    noise = solve_triangular(chol.T, rng.normal(size=mean.size), lower=False)
    w_vec = mean + noise
    return w_vec.reshape(P.shape[1], Q.shape[1]).T


def _prior_state(shape: NetworkShape, rng: np.random.Generator) -> list:
    return [
        rng.normal(0.0, 1.0 / np.sqrt(shape.widths[ell - 1]),
                   size=(shape.widths[ell], shape.widths[ell - 1]))
        for ell in range(1, shape.d + 1)
    ]


def gibbs_posterior(ds: Dataset, shape: NetworkShape, sweeps: int,
                    burn_in: int, seed) -> list:
    """Cyclic Gibbs sampling over the weight matrices.

    Each sweep redraws every layer from its exact Gaussian conditional
    (via Cholesky), so the chain targets the posterior with no tuning.
    Returns the post-burn-in states in order; deterministic given seed.
    """
    if not (0 < shape.beta < math.inf):
        raise ValueError("Gibbs sampling needs a finite positive beta")
    if ds.n0 != shape.n0 or ds.nd != shape.nd:
        raise ValueError("dataset dimensions do not match the network shape")
    if sweeps < 1 or burn_in < 0:
        raise ValueError("sweeps must be positive and burn_in non-negative")
    rng = as_generator(seed)
    weights = _prior_state(shape, rng)
    d = shape.d
    states = []
    for sweep in range(sweeps + burn_in):
        for ell in range(d):
            p = ds.X
            for k in range(ell):
                p = p @ weights[k].T
            q = np.eye(shape.nd)
            for k in range(d - 1, ell, -1):
                q = q @ weights[k]
            weights[ell] = _draw_layer(rng, p, q, ds.Y, shape.beta,
                                       float(shape.widths[ell]))
        if sweep >= burn_in:
            states.append(WeightState(tuple(w.copy() for w in weights)))
    return states


def log_posterior(state: WeightState, ds: Dataset, beta: float) -> float:
    """Unnormalized log posterior density of a weight state."""
    f = state.outputs(ds.X)
    log_lik = -0.5 * beta * float(np.sum((f - ds.Y) ** 2))
    log_prior = 0.0
    n_in = ds.n0
    for w in state.W:
        log_prior -= 0.5 * n_in * float(np.sum(w**2))
        n_in = w.shape[0]
    return log_lik + log_prior


def prior_importance(ds: Dataset, shape: NetworkShape, num_samples: int,
                     seed: int, *, workers: int = 1,
                     ess_floor: float = DEFAULT_ESS_FLOOR,
                     n_blocks: int = DEFAULT_BLOCKS) -> PredictiveMoments:
    """Naive importance sampling with the weight prior as proposal.

    Weights every prior draw by its data likelihood. Only usable while
    ``beta * p`` stays small; the ESS floor guards the rest.
    """
    if not (0 <= shape.beta < math.inf):
        raise ValueError("prior importance sampling needs a finite beta")
    if ds.n0 != shape.n0 or ds.nd != shape.nd:
        raise ValueError("dataset dimensions do not match the network shape")
    phat, nd = ds.phat, ds.nd
    m = phat * nd

    def sample_block(block: range):
        log_w = np.empty(len(block))
        means = np.empty((len(block), m))
        seconds = np.empty((len(block), m, m))
        for j, i in enumerate(block):
            state = WeightState(tuple(_prior_state(shape, substream(seed, i))))
            f = state.outputs(ds.X)
            log_w[j] = -0.5 * shape.beta * float(np.sum((f - ds.Y) ** 2))
            fhat = vec(state.outputs(ds.Xhat))
            means[j] = fhat
            seconds[j] = np.outer(fhat, fhat)
        return log_w, {"mu": means, "second": seconds}

    res = snis_reduce(sample_block, num_samples, workers=workers, n_blocks=n_blocks)
    res.check_ess(ess_floor)
    mean, mean_se = res.jackknife("mu")
    cov, cov_se = res.jackknife(
        ["second", "mu"], fn=lambda sec, mu: sec - np.outer(mu, mu)
    )
    return PredictiveMoments(
        mean=mean.reshape(phat, nd), cov=symmetrize(cov),
        mean_se=mean_se.reshape(phat, nd), cov_se=cov_se,
        ess=res.ess, num_samples=num_samples, seed=seed,
    )


def empirical_moments(states, ds: Dataset):
    """Predictive moments and first-layer kernel from a weight chain.

    Means and covariances over the supplied states with batch-means
    standard errors (autocorrelation-adjusted). A degenerate chain of
    identical states yields zero covariance and NaN standard errors.
    Returns ``(PredictiveMoments, KernelEstimate)``.
    """
    states = list(states)
    if not states:
        raise ValueError("empty chain")
    n = len(states)
    phat, nd = ds.phat, ds.nd
    f_hat = np.stack([vec(s.outputs(ds.Xhat)) for s in states])     # (n, m)
    kernels = np.stack([s.first_layer_kernel(ds.X) for s in states])

    mean = f_hat.mean(axis=0)
    mean_se, degenerate = batch_means_se(f_hat)
    kernel = symmetrize(kernels.mean(axis=0))
    if degenerate:
        # identical states: zero covariance by definition, SE undefined
        cov = np.zeros((f_hat.shape[1], f_hat.shape[1]))
        mean_se = np.full_like(mean, np.nan)
        cov_se = np.full_like(cov, np.nan)
        kernel_se = np.full((ds.p, ds.p), np.nan)
        chain_ess = float(n)
    else:
        centered = f_hat - mean
        prods = np.einsum("si,sj->sij", centered, centered)
        cov = prods.mean(axis=0)
        cov_se, _ = batch_means_se(prods)
        kernel_se, _ = batch_means_se(kernels)
        chain_ess = effective_draws(f_hat)
    moments = PredictiveMoments(
        mean=mean.reshape(phat, nd), cov=symmetrize(cov),
        mean_se=mean_se.reshape(phat, nd), cov_se=cov_se,
        ess=chain_ess, num_samples=n,
    )
    estimate = KernelEstimate(kernel=kernel, se=kernel_se, ess=chain_ess,
                              regime="monte_carlo", num_samples=n)
    return moments, estimate


# ---------------------------------------------------------------------------
# Deterministic scalar-output quadrature (depth 2)
# ---------------------------------------------------------------------------


def _scalar_parts(ds: Dataset, beta: float):
    n0 = float(ds.n0)
    gxx = symmetrize(ds.X @ ds.X.T / n0)
    gxxh = ds.X @ ds.Xhat.T / n0
    gxhxh = symmetrize(ds.Xhat @ ds.Xhat.T / n0)
    y = ds.Y[:, 0]

    def at(lam: float):
        gamma = np.eye(ds.p) + beta * lam * gxx
        sol_y = np.linalg.solve(gamma, y)
        sol_g = np.linalg.solve(gamma, gxxh)
        mu = beta * lam * gxxh.T @ sol_y
        sig = lam * gxhxh - beta * lam**2 * gxxh.T @ sol_g
        log_r = (-0.5 * np.linalg.slogdet(gamma)[1]
                 - 0.5 * beta * float(y @ sol_y))
        return mu, sig, log_r

    return at


def _quad_component(f, *, epsabs=1e-12, epsrel=1e-10):
    val, err = quad(f, 0.0, np.inf, epsabs=epsabs, epsrel=epsrel, limit=400)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError(
            f"scale quadrature did not converge (value {val:.6e}, "
            f"error {err:.2e})"
        )
    return val


def quadrature_scalar(ds: Dataset, shape: NetworkShape) -> PredictiveMoments:
    """Deterministic predictive moments for scalar-output depth-2 networks.

    Integrates the per-scale mean, covariance, and data reweighting
    against the Gamma prior of the scalar scale with adaptive quadrature;
    the reference all scalar Monte Carlo estimators are tested against.
    """
    if shape.d != 2 or ds.nd != 1:
        raise ValueError("scalar quadrature covers depth-2, single-output networks")
    if not (0 <= shape.beta < math.inf):
        raise ValueError("scalar quadrature needs a finite beta")
    if ds.n0 != shape.n0:
        raise ValueError("dataset dimensions do not match the network shape")
    n1 = shape.widths[1]
    at = _scalar_parts(ds, shape.beta)
    phat = ds.phat

    from .scale_prior import log_gamma_density

    log_r_ref = at(1.0)[2]

    def weight(lam: float) -> float:
        if lam <= 0:
            return 0.0
        mu, sig, log_r = at(lam)
        return float(np.exp(log_gamma_density(lam, n1 / 2.0, 2.0 / n1)
                            + log_r - log_r_ref))

    z = _quad_component(weight)

    def averaged(extract):
        return _quad_component(lambda lam: weight(lam) * extract(*at(lam))) / z

    mean = np.array([averaged(lambda mu, sig, lr, i=i: float(mu[i]))
                     for i in range(phat)])
    second = np.empty((phat, phat))
    for i in range(phat):
        for j in range(i + 1):
            second[i, j] = averaged(
                lambda mu, sig, lr, i=i, j=j: float(sig[i, j] + mu[i] * mu[j])
            )
            second[j, i] = second[i, j]
    cov = second - np.outer(mean, mean)
    return PredictiveMoments(
        mean=mean.reshape(phat, 1), cov=symmetrize(cov),
        mean_se=np.zeros((phat, 1)), cov_se=np.zeros((phat, phat)),
        ess=math.inf, num_samples=0,
    )


def quadrature_scalar_kernel(ds: Dataset, shape: NetworkShape) -> np.ndarray:
    """Deterministic posterior-mean feature kernel for the scalar depth-2 case.

    Same quadrature as :func:`quadrature_scalar` applied to the kernel
    correction, using its own dense evaluation of the per-scale terms.
    """
    if shape.d != 2 or ds.nd != 1:
        raise ValueError("scalar quadrature covers depth-2, single-output networks")
    n1 = shape.widths[1]
    beta = shape.beta
    n0 = float(ds.n0)
    gxx = symmetrize(ds.X @ ds.X.T / n0)
    y = ds.Y[:, 0]
    at = _scalar_parts(ds, beta)

    from .scale_prior import log_gamma_density

    log_r_ref = at(1.0)[2]

    def weight(lam: float) -> float:
        if lam <= 0:
            return 0.0
        return float(np.exp(log_gamma_density(lam, n1 / 2.0, 2.0 / n1)
                            + at(lam)[2] - log_r_ref))

    def correction(lam: float) -> np.ndarray:
        gamma = np.eye(ds.p) + beta * lam * gxx
        gy = gxx @ np.linalg.solve(gamma, y)
        gg = gxx @ np.linalg.solve(gamma, gxx)
        return lam * beta**2 * np.outer(gy, gy) - lam * beta * gg

    z = _quad_component(weight)
    corr = np.empty((ds.p, ds.p))
    for i in range(ds.p):
        for j in range(i + 1):
            corr[i, j] = _quad_component(
                lambda lam, i=i, j=j: weight(lam) * correction(lam)[i, j]
            ) / z
            corr[j, i] = corr[i, j]
    return symmetrize(gxx + corr / n1)


def gp_closed_form(ds: Dataset, beta: float) -> PredictiveMoments:
    """Exact depth-1 posterior predictive (independent output channels).

    Bayesian linear regression in function space: kernel ``gxx`` with
    observation noise ``1/beta``; the reference for depth-1 reductions.
    Dense solves only, no shared code with the mixture route.
    """
    if not (0 < beta < math.inf):
        raise ValueError("the closed form needs a finite positive beta")
    n0 = float(ds.n0)
    gxx = symmetrize(ds.X @ ds.X.T / n0)
    gxxh = ds.X @ ds.Xhat.T / n0
    gxhxh = symmetrize(ds.Xhat @ ds.Xhat.T / n0)
    reg = gxx + np.eye(ds.p) / beta
    mean = gxxh.T @ np.linalg.solve(reg, ds.Y)
    cov_in = gxhxh - gxxh.T @ np.linalg.solve(reg, gxxh)
    cov = kron(symmetrize(cov_in), np.eye(ds.nd))
    phat, nd = ds.phat, ds.nd
    return PredictiveMoments(
        mean=mean, cov=cov,
        mean_se=np.zeros((phat, nd)), cov_se=np.zeros_like(cov),
        ess=math.inf, num_samples=0,
    )


# ---------------------------------------------------------------------------
# Chain persistence
# ---------------------------------------------------------------------------


def save_chain(states, path: str, *, seed: int, beta: float) -> None:
    """Persist a weight chain as flat row-major float64 plus a JSON sidecar."""
    states = list(states)
    if not states:
        raise ValueError("empty chain")
    shapes = [list(w.shape) for w in states[0].W]
    flat = np.concatenate([
        np.concatenate([w.reshape(-1) for w in s.W]) for s in states
    ])
    flat.astype("<f8").tofile(path)
    sidecar = {
        "states": len(states),
        "layer_shapes": shapes,
        "seed": int(seed),
        "beta": float(beta),
        "dtype": "<f8",
        "order": "row-major",
    }
    with open(path + ".json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_chain(path: str):
    """Load a chain written by :func:`save_chain`; returns (states, sidecar)."""
    with open(path + ".json", "r", encoding="ascii") as fh:
        sidecar = json.load(fh)
    shapes = [tuple(s) for s in sidecar["layer_shapes"]]
    per_state = sum(int(np.prod(s)) for s in shapes)
    flat = np.fromfile(path, dtype="<f8")
    n = int(sidecar["states"])
    if flat.size != n * per_state:
        raise ValueError(
            f"chain file {path} has {flat.size} values; expected {n * per_state}"
        )
    states = []
    for i in range(n):
        chunk = flat[i * per_state:(i + 1) * per_state]
        ws = []
        offset = 0
        for s in shapes:
            size = int(np.prod(s))
            ws.append(chunk[offset:offset + size].reshape(s))
            offset += size
        states.append(WeightState(tuple(ws)))
    return states, sidecar
