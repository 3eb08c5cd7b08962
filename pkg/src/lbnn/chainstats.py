"""Monte Carlo error estimation for correlated sequences."""

from __future__ import annotations

import numpy as np


def batch_means_se(values: np.ndarray, n_batches: int = 50):
    """Autocorrelation-adjusted standard error of the mean via batch means.

    ``values`` may be any array whose leading axis indexes draws. Returns
    (se, degenerate) where ``se`` has the trailing shape of ``values`` and
    ``degenerate`` flags an all-identical sequence (SE undefined; returned
    as NaN).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        return np.full(values.shape[1:], np.nan), True
    n_batches = max(2, min(n_batches, n // 2))
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    means = np.stack([values[a:b].mean(axis=0) for a, b in zip(edges[:-1], edges[1:])])
    if np.all(values == values[0]):
        return np.full(values.shape[1:], np.nan), True
    se = means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return se, False


def effective_draws(values: np.ndarray, n_batches: int = 50) -> float:
    """Smallest per-coordinate effective sample size of a chain."""
    values = np.asarray(values, dtype=float).reshape(values.shape[0], -1)
    se, degenerate = batch_means_se(values, n_batches)
    if degenerate:
        return float(values.shape[0])
    var = values.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ess = var / se**2
    ess = ess[np.isfinite(ess) & (var > 0)]
    if ess.size == 0:
        return float(values.shape[0])
    return float(min(float(ess.min()), values.shape[0]))


def geweke_z(trace: np.ndarray, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke convergence score comparing early and late segment means."""
    trace = np.asarray(trace, dtype=float).reshape(-1)
    n = trace.size
    a = trace[: max(2, int(first * n))]
    b = trace[-max(2, int(last * n)):]
    se_a, dega = batch_means_se(a[:, None], n_batches=10)
    se_b, degb = batch_means_se(b[:, None], n_batches=10)
    if dega or degb:
        return 0.0
    denom = float(np.hypot(se_a[0], se_b[0]))
    if denom == 0.0:
        return 0.0
    return float((a.mean() - b.mean()) / denom)
