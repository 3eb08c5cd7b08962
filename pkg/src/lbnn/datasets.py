"""Synthetic dataset generation for experiments and verification runs."""

from __future__ import annotations

import numpy as np

from .model import Dataset
from .seeding import as_generator

MODES = ("teacher", "noisy", "orthogonal")


def generate_dataset(mode: str, p: int, phat: int, n0: int, nd: int, seed,
                     noise: float = 0.1) -> Dataset:
    """Draw a synthetic regression dataset.

    ``teacher`` draws Gaussian inputs and sets ``Y = X W* / sqrt(n0)`` for
    a Gaussian teacher ``W*`` (targets exactly interpolatable);
    ``noisy`` adds ``noise``-scaled Gaussian corruption to the teacher
    targets; ``orthogonal`` is the teacher mode with inputs whose rows are
    orthonormal scaled by ``sqrt(n0)``, making the training input Gram the
    identity. Test targets are always the noiseless teacher outputs.
    """
    if mode not in MODES:
        raise ValueError(f"unknown dataset mode {mode!r}; expected one of {MODES}")
    if p > n0:
        raise ValueError(f"p={p} must not exceed n0={n0}")
    if min(p, phat, n0, nd) < 1:
        raise ValueError("all dimensions must be positive")
    rng = as_generator(seed)
    if mode == "orthogonal":
        q, _ = np.linalg.qr(rng.normal(size=(n0, p)))
        x = np.sqrt(n0) * q.T
    else:
        x = rng.normal(size=(p, n0))
    xhat = rng.normal(size=(phat, n0))
    w_star = rng.normal(size=(n0, nd))
    y = x @ w_star / np.sqrt(n0)
    yhat = xhat @ w_star / np.sqrt(n0)
    if mode == "noisy":
        y = y + noise * rng.normal(size=y.shape)
    return Dataset(X=x, Y=y, Xhat=xhat, Yhat=yhat)
