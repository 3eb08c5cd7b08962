"""Finite-temperature posterior predictive as a scale mixture of GPs.

Conditioned on the scale matrix ``L``, the network posterior predictive
is Gaussian with a mean and covariance built from the data Grams; the
exact posterior is the average of those Gaussian components under a
data-reweighted scale distribution. This module computes the per-scale
components and estimates the averages by self-normalized importance
sampling with the prior as proposal.

Per-scale quantities are evaluated through the joint eigendecomposition
of the training Gram and the scale matrix, so the cost per sample is
``O(p^3 + nd^3 + p^2 nd^2)`` and never cubic in ``p * nd``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import kron, psd_clamp, symmetrize, vec
from .matrix_io import matrix_from_dict, matrix_to_dict
from .model import Dataset, GramSet, NetworkShape, build_gram_set
from .scale_prior import _draw_scale_matrix
from .seeding import substream
from .snis import DEFAULT_BLOCKS, DEFAULT_ESS_FLOOR, snis_reduce

#: Largest magnitude allowed in any per-sample exponent before bailing out.
EXP_GUARD = 700.0


@dataclass
class GPComponents:
    """Per-scale Gaussian component of the posterior predictive.

    Attributes
    ----------
    ridge : (p*nd, p*nd) ndarray
        Identity plus the likelihood-scaled Kronecker Gram, the matrix
        every other quantity is solved against.
    cov : (phat*nd, phat*nd) ndarray
        Predictive covariance of the component.
    mean : (phat*nd,) ndarray
        Predictive mean of the component (row-major vectorization).
    log_weight : float
        Log of the unnormalized data reweighting of this scale relative
        to the prior.
    """

    ridge: np.ndarray
    cov: np.ndarray
    mean: np.ndarray
    log_weight: float


@dataclass
class PredictiveMoments:
    """Posterior predictive mean/covariance with Monte Carlo errors."""

    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    ess: float
    num_samples: int
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "mean": matrix_to_dict(self.mean),
            "cov": matrix_to_dict(self.cov),
            "mean_se": matrix_to_dict(self.mean_se),
            "cov_se": matrix_to_dict(self.cov_se),
            # deterministic results carry no meaningful ESS; serialized as null
            "ess": float(self.ess) if math.isfinite(self.ess) else None,
            "samples": int(self.num_samples),
            "seed": None if self.seed is None else int(self.seed),
        }


def moments_from_dict(obj: dict) -> PredictiveMoments:
    return PredictiveMoments(
        mean=matrix_from_dict(obj["mean"], "mean"),
        cov=matrix_from_dict(obj["cov"], "cov"),
        mean_se=matrix_from_dict(obj["mean_se"], "mean_se"),
        cov_se=matrix_from_dict(obj["cov_se"], "cov_se"),
        ess=math.inf if obj.get("ess") is None else float(obj["ess"]),
        num_samples=int(obj["samples"]),
        seed=None if obj.get("seed") is None else int(obj["seed"]),
    )


class MixturePlan:
    """Eigenstructure of a (grams, targets, beta) triple, reused per sample.

    The training Gram is diagonalized once; each scale sample then needs
    only its own ``nd x nd`` eigendecomposition plus dense products in the
    small dimensions.
    """

    def __init__(self, grams: GramSet, Y: np.ndarray, beta: float):
        if beta < 0 or math.isinf(beta):
            raise ValueError("beta must be finite and non-negative here")
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y.reshape(-1, 1)
        if Y.shape[0] != grams.p:
            raise ValueError("Y row count must match the training Gram")
        self.beta = float(beta)
        self.grams = grams
        self.Y = Y
        self.nd = Y.shape[1]
        self.evals, self.evecs = np.linalg.eigh(grams.gxx)
        self.proj_test = self.evecs.T @ grams.gxxh      # (p, phat)
        self.proj_y = self.evecs.T @ Y                  # (p, nd)

    def components(self, L: np.ndarray):
        """(log_weight, mean, cov) of the Gaussian component at scale ``L``."""
        beta = self.beta
        e_l, v_l = np.linalg.eigh(symmetrize(L))
        if e_l.min() <= 0:
            raise ValueError("scale matrix must be positive definite")
        grid = beta * np.outer(self.evals, e_l)          # (p, nd)
        w = 1.0 / (1.0 + grid)
        y_t = self.proj_y @ v_l                          # (p, nd)
        log_det = float(np.log1p(grid).sum())
        quad = float(np.sum(y_t * y_t * w))
        log_weight = -0.5 * log_det - 0.5 * beta * quad
        z = self.evecs @ (y_t * w) @ v_l.T               # unvec of ridge solve
        mean = beta * vec(self.grams.gxxh.T @ z @ L)
        q = L @ v_l                                      # = v_l * e_l
        b = np.einsum("ia,im,ja->iamj", np.sqrt(w), self.proj_test, q)
        b = b.reshape(self.proj_test.shape[0] * self.nd, -1)
        cov = kron(self.grams.gxhxh, L) - beta * (b.T @ b)
        return log_weight, mean, symmetrize(cov)

    def scalar_batch(self, lams: np.ndarray):
        """Vectorized single-output components for an array of scales."""
        if self.nd != 1:
            raise ValueError("scalar path requires a single output channel")
        beta = self.beta
        lams = np.asarray(lams, dtype=float)
        grid = beta * lams[:, None] * self.evals[None, :]      # (S, p)
        w = 1.0 / (1.0 + grid)
        y_t = self.proj_y[:, 0]
        log_det = np.log1p(grid).sum(axis=1)
        quad = (y_t * y_t * w).sum(axis=1)
        log_w = -0.5 * log_det - 0.5 * beta * quad
        mean = beta * lams[:, None] * ((w * y_t) @ self.proj_test)  # (S, phat)
        pwp = np.einsum("si,ia,ib->sab", w, self.proj_test, self.proj_test)
        cov = (lams[:, None, None] * self.grams.gxhxh[None]
               - beta * lams[:, None, None] ** 2 * pwp)
        return log_w, mean, cov


def gp_components(grams: GramSet, L: np.ndarray, beta: float,
                  Y: np.ndarray) -> GPComponents:
    """Gaussian component of the posterior predictive at a fixed scale.

    ``ridge = I + beta * kron(gxx, L)``; the mean, covariance, and log
    reweighting are the standard Gaussian-conditioning expressions solved
    against it via the joint eigendecomposition.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    plan = MixturePlan(grams, Y, beta)
    if L.shape != (plan.nd, plan.nd):
        raise ValueError(f"scale matrix must be {plan.nd}x{plan.nd}, got {L.shape}")
    log_weight, mean, cov = plan.components(L)
    ridge = np.eye(grams.p * plan.nd) + beta * kron(grams.gxx, L)
    return GPComponents(ridge=ridge, cov=cov, mean=mean, log_weight=log_weight)


def gp_components_scalar(grams: GramSet, lam: float, beta: float,
                         y: np.ndarray) -> GPComponents:
    """Single-output specialization with a scalar scale ``lam >= 0``.

    Matches :func:`gp_components` at ``nd = 1`` while avoiding all
    Kronecker bookkeeping; also accepts ``lam = 0`` (the degenerate
    zero-scale component).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != grams.p:
        raise ValueError("y length must match the training Gram")
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if beta < 0 or math.isinf(beta):
        raise ValueError("beta must be finite and non-negative here")
    evals, evecs = np.linalg.eigh(grams.gxx)
    p_test = evecs.T @ grams.gxxh
    y_t = evecs.T @ y
    grid = beta * lam * evals
    w = 1.0 / (1.0 + grid)
    log_det = float(np.log1p(grid).sum())
    quad = float(np.sum(y_t * y_t * w))
    mean = beta * lam * ((w * y_t) @ p_test)
    cov = lam * grams.gxhxh - beta * lam**2 * (p_test.T * w) @ p_test
    ridge = np.eye(grams.p) + beta * lam * grams.gxx
    return GPComponents(
        ridge=ridge,
        cov=symmetrize(cov),
        mean=mean,
        log_weight=-0.5 * log_det - 0.5 * beta * quad,
    )


def _clamp_cov(cov: np.ndarray) -> np.ndarray:
    w_min = float(np.linalg.eigvalsh(cov).min()) if cov.size else 0.0
    if w_min >= 0.0:
        return cov
    tol = 1e-8 * max(float(np.trace(cov)), np.finfo(float).tiny)
    return psd_clamp(cov, clamp_tol=0.0, error_tol=tol, name="predictive covariance")


def predictive_moments(ds: Dataset, shape: NetworkShape, num_samples: int,
                       seed: int, *, workers: int = 1,
                       ess_floor: float = DEFAULT_ESS_FLOOR,
                       n_blocks: int = DEFAULT_BLOCKS) -> PredictiveMoments:
    """Posterior predictive mean and covariance at finite temperature.

    Draws scale matrices from the prior, reweights them by the data
    likelihood of each Gaussian component, and reports the
    self-normalized averages: the mean is the weighted component mean and
    the covariance follows the law of total covariance (average component
    covariance plus the weighted scatter of the component means).
    Standard errors come from a delete-one-block jackknife; the effective
    sample size of the weights is reported and checked against
    ``ess_floor``. Depth-1 networks have no scale average and return the
    exact Gaussian-process posterior.
    """
    _check_instance(ds, shape)
    if num_samples < 2:
        raise ValueError("need at least two scale samples")
    if shape.zero_temperature:
        raise ValueError("beta is infinite; use the zero-temperature module")
    grams = build_gram_set(ds)
    phat, nd = ds.phat, ds.nd

    if shape.d == 1:
        comp = gp_components(grams, np.eye(nd), shape.beta, ds.Y)
        zero_m = np.zeros((phat, nd))
        zero_c = np.zeros_like(comp.cov)
        return PredictiveMoments(
            mean=comp.mean.reshape(phat, nd), cov=comp.cov,
            mean_se=zero_m, cov_se=zero_c,
            ess=float(num_samples), num_samples=num_samples, seed=seed,
        )

    plan = MixturePlan(grams, ds.Y, shape.beta)

    def sample_block(block: range):
        if nd == 1:
            lams = np.array([
                _draw_scale_matrix(shape, substream(seed, i))[0, 0]
                for i in block
            ])
            log_w, mean, cov = plan.scalar_batch(lams)
            second = cov + np.einsum("sa,sb->sab", mean, mean)
            return log_w, {"mu": mean, "second": second}
        log_w = np.empty(len(block))
        mean = np.empty((len(block), phat * nd))
        second = np.empty((len(block), phat * nd, phat * nd))
        for j, i in enumerate(block):
            L = _draw_scale_matrix(shape, substream(seed, i))
            log_w[j], mu, cov = plan.components(L)
            mean[j] = mu
            second[j] = cov + np.outer(mu, mu)
        return log_w, {"mu": mean, "second": second}

    res = snis_reduce(sample_block, num_samples, workers=workers, n_blocks=n_blocks)
    res.check_ess(ess_floor)
    mean_vec, mean_se_vec = res.jackknife("mu")
    cov, cov_se = res.jackknife(
        ["second", "mu"], fn=lambda sec, mu: sec - np.outer(mu, mu)
    )
    cov = _clamp_cov(symmetrize(cov))
    return PredictiveMoments(
        mean=mean_vec.reshape(phat, nd), cov=cov,
        mean_se=mean_se_vec.reshape(phat, nd), cov_se=cov_se,
        ess=res.ess, num_samples=num_samples, seed=seed,
    )


def log_mgf(ds: Dataset, shape: NetworkShape, J: np.ndarray, num_samples: int,
            seed: int) -> float:
    """Log moment generating function of the posterior predictive at ``J``.

    Estimated on the same scale samples as :func:`predictive_moments`
    with log-sum-exp stabilization; exactly zero at ``J = 0``. Raises
    when any per-sample exponent exceeds the double-precision guard.
    """
    _check_instance(ds, shape)
    if shape.zero_temperature:
        raise ValueError("beta is infinite; use the zero-temperature module")
    J = np.asarray(J, dtype=float)
    if J.shape != (ds.phat, ds.nd):
        raise ValueError(f"J must have shape ({ds.phat}, {ds.nd})")
    grams = build_gram_set(ds)
    j_vec = vec(J)

    if shape.d == 1:
        comp = gp_components(grams, np.eye(ds.nd), shape.beta, ds.Y)
        return float(comp.mean @ j_vec + 0.5 * j_vec @ comp.cov @ j_vec)

    plan = MixturePlan(grams, ds.Y, shape.beta)
    log_w = np.empty(num_samples)
    shift = np.empty(num_samples)
    for i in range(num_samples):
        L = _draw_scale_matrix(shape, substream(seed, i))
        lw, mu, cov = plan.components(L)
        log_w[i] = lw
        shift[i] = mu @ j_vec + 0.5 * j_vec @ cov @ j_vec
    if np.max(np.abs(shift)) > EXP_GUARD:
        raise ValueError(
            "source J is too large: a per-sample exponent exceeded "
            f"{EXP_GUARD:g}; shrink J"
        )
    m = log_w.max()
    lse_num = m + np.log(np.sum(np.exp(log_w - m + shift)))
    lse_den = m + np.log(np.sum(np.exp(log_w - m)))
    return float(lse_num - lse_den)


def _check_instance(ds: Dataset, shape: NetworkShape) -> None:
    if ds.n0 != shape.n0:
        raise ValueError(f"dataset n0={ds.n0} does not match widths[0]={shape.n0}")
    if ds.nd != shape.nd:
        raise ValueError(f"dataset nd={ds.nd} does not match widths[-1]={shape.nd}")
