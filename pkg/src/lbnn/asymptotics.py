"""Closed-form kernel predictions in the tractable asymptotic regimes.

Four regimes admit closed forms for the posterior-mean feature kernel:

* wide: hidden widths to infinity at fixed dataset size and output
  dimension — the Gram plus a width-suppressed correction evaluated at
  the prior mode of the scale matrix;
* large_p: dataset size to infinity at fixed width — a saddle point of
  the zero-temperature scale density;
* li_sompolinsky: width and dataset size jointly to infinity at fixed
  output dimension (zero temperature, depth 2) — the scale saddle solves
  a continuous algebraic Riccati equation (CARE);
* aitchison: width and output dimension jointly to infinity at fixed
  dataset size — a CARE directly in kernel space.

Both CAREs reduce to matrix quadratics whose solutions commute with
their data matrix; the principal (PSD) branch is selected throughout,
and solvers report the Frobenius residual of the returned solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import psd_sqrt, require_well_conditioned, similarity_sqrt, symmetrize
from .model import GramSet


@dataclass(frozen=True)
class RegimeRatios:
    """Scaling ratios ``alpha = p/n`` and ``gamma = nd/n`` of a regime."""

    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")


def kernel_wide(grams: GramSet, gamma: float, beta: float) -> np.ndarray:
    """Leading large-width kernel: Gram plus the mode-scale correction.

    ``K = gxx + gamma * gxx inv(R) (gyy - R) inv(R) gxx`` with
    ``R = gxx + I/beta`` (``R = gxx`` at infinite beta).
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if beta <= 0:
        raise ValueError("beta must be positive (or infinite)")
    p = grams.p
    if math.isinf(beta):
        reg = grams.gxx.copy()
    else:
        reg = grams.gxx + np.eye(p) / beta
    reg = require_well_conditioned(reg, grams.cond_cap, name="regularized Gram")
    m = np.linalg.solve(reg, grams.gxx)
    return symmetrize(grams.gxx + gamma * m.T @ (grams.gyy - reg) @ m)


def kernel_large_p(grams: GramSet, Y: np.ndarray, n1: int) -> np.ndarray:
    """Large-dataset kernel from the zero-temperature scale saddle point.

    ``K = (1 - nd/n1) gxx + Y inv(Y^T inv(gxx) Y / p) Y^T / n1``; the
    normalized target quadratic must be full rank.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    p, nd = Y.shape
    if p != grams.p:
        raise ValueError("Y row count must match the training Gram")
    gamma = nd / n1
    m = symmetrize(Y.T @ np.linalg.solve(grams.gxx, Y)) / p
    w = np.linalg.eigvalsh(m)
    if w.min() <= 1e-12 * max(1.0, float(w.max())):
        raise ValueError(
            "Y^T inv(gxx) Y is rank deficient; the large-dataset saddle "
            "point is not defined"
        )
    return symmetrize((1.0 - gamma) * grams.gxx
                      + (Y @ np.linalg.solve(m, Y.T)) / n1)


def care_li_sompolinsky(grams: GramSet, Y: np.ndarray, n1: int, alpha: float):
    """Scale saddle of the joint width/dataset regime, with CARE residual.

    Solves ``I - inv(L) M inv(L) - (1 - alpha) inv(L) = 0`` for
    ``M = Y^T inv(gxx) Y / n1``. The solution commutes with ``M``, so the
    equation reduces to the matrix quadratic ``L^2 - (1-alpha) L - M = 0``
    whose principal root is
    ``L = ((1-alpha) I + sqrt((1-alpha)^2 I + 4 M)) / 2``.
    Returns ``(L, residual)`` with the Frobenius norm of the CARE left
    side at the returned solution.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    nd = Y.shape[1]
    m = symmetrize(Y.T @ np.linalg.solve(grams.gxx, Y)) / n1
    one = np.eye(nd)
    l_star = 0.5 * ((1.0 - alpha) * one
                    + psd_sqrt((1.0 - alpha) ** 2 * one + 4.0 * m))
    l_inv = np.linalg.inv(l_star)
    residual = float(np.linalg.norm(
        one - l_inv @ m @ l_inv - (1.0 - alpha) * l_inv
    ))
    return l_star, residual


def kernel_li_sompolinsky(grams: GramSet, alpha: float, gamma: float, *,
                          leading_order: bool = False) -> np.ndarray:
    """Joint width/dataset-regime kernel in closed form.

    ``K = gxx [(1+alpha) I + sqrt((1-alpha)^2 I + 4 gamma inv(gxx) gyy)] / 2``
    evaluated through the similarity square root, which keeps the product
    symmetric. With ``leading_order=True`` returns the small-gamma form
    ``(1-gamma) gxx + gamma/(1-alpha) gyy`` instead.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if leading_order:
        return symmetrize((1.0 - gamma) * grams.gxx
                          + gamma / (1.0 - alpha) * grams.gyy)
    p = grams.p
    one = np.eye(p)
    root = similarity_sqrt(
        grams.gxx, (1.0 - alpha) ** 2 * grams.gxx + 4.0 * gamma * grams.gyy,
        cond_cap=grams.cond_cap,
    )
    return symmetrize(0.5 * grams.gxx @ ((1.0 + alpha) * one + root))


def kernel_aitchison(grams: GramSet, gamma: float):
    """Joint width/output-dimension-regime kernel, with CARE residual.

    The kernel-space CARE ``inv(gxx) - gamma inv(K) gyy inv(K) +
    (gamma - 1) inv(K) = 0`` has principal solution
    ``K = gxx [(1-gamma) I + sqrt((1-gamma)^2 I + 4 gamma inv(gxx) gyy)] / 2``.
    Returns ``(K, residual)`` where the residual is the Frobenius norm of
    ``K inv(gxx) K + (gamma - 1) K - gamma gyy`` (the CARE multiplied
    through by ``K`` on both sides).
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    p = grams.p
    one = np.eye(p)
    root = similarity_sqrt(
        grams.gxx, (1.0 - gamma) ** 2 * grams.gxx + 4.0 * gamma * grams.gyy,
        cond_cap=grams.cond_cap,
    )
    kernel = symmetrize(0.5 * grams.gxx @ ((1.0 - gamma) * one + root))
    w = np.linalg.eigvalsh(kernel)
    if w.min() <= 0:
        raise ValueError("closed-form kernel is singular; cannot evaluate residual")
    residual = float(np.linalg.norm(
        kernel @ np.linalg.solve(grams.gxx, kernel)
        + (gamma - 1.0) * kernel - gamma * grams.gyy
    ))
    return kernel, residual
