"""Datasets, network configuration, and normalized Gram matrices.

A model instance is described by a :class:`Dataset` (training and test
matrices), a :class:`NetworkShape` (layer widths plus the likelihood's
inverse temperature), and the :class:`GramSet` of normalized inner-product
matrices that every estimator downstream consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import COND_CAP, require_well_conditioned, symmetrize


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class Dataset:
    """Training and test data matrices.

    Attributes
    ----------
    X : (p, n0) ndarray
        Training inputs, one example per row.
    Y : (p, nd) ndarray
        Training targets.
    Xhat : (phat, n0) ndarray
        Test inputs.
    Yhat : (phat, nd) ndarray, optional
        Test targets (only needed when test-target Grams are requested).
    """

    X: np.ndarray
    Y: np.ndarray
    Xhat: np.ndarray
    Yhat: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", _as_matrix(self.X, "X"))
        object.__setattr__(self, "Y", _as_matrix(self.Y, "Y"))
        object.__setattr__(self, "Xhat", _as_matrix(self.Xhat, "Xhat"))
        if self.Yhat is not None:
            object.__setattr__(self, "Yhat", _as_matrix(self.Yhat, "Yhat"))
        p, n0 = self.X.shape
        if p < 1:
            raise ValueError("need at least one training example")
        if n0 < p:
            raise ValueError(
                f"input dimension n0={n0} must be >= number of examples p={p} "
                "so the training Gram matrix can be invertible"
            )
        if self.Y.shape[0] != p:
            raise ValueError("X and Y disagree on the number of training examples")
        if self.Xhat.shape[1] != n0:
            raise ValueError("X and Xhat disagree on the input dimension")
        if self.Yhat is not None and self.Yhat.shape != (self.Xhat.shape[0], self.Y.shape[1]):
            raise ValueError("Yhat shape must be (phat, nd)")

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n0(self) -> int:
        return self.X.shape[1]

    @property
    def nd(self) -> int:
        return self.Y.shape[1]

    @property
    def phat(self) -> int:
        return self.Xhat.shape[0]


@dataclass(frozen=True)
class NetworkShape:
    """Layer widths ``[n0, n1, ..., nd]`` and inverse temperature ``beta``.

    ``beta`` may be ``math.inf`` to request the zero-temperature
    (interpolation) limit. The hidden widths must not bottleneck the
    output: ``n_l >= nd`` for every hidden layer ``l``.
    """

    widths: tuple
    beta: float = 1.0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("widths must list at least [n0, nd] (depth >= 1)")
        if any(w < 1 for w in widths):
            raise ValueError("all layer widths must be positive")
        nd = widths[-1]
        for w in widths[1:-1]:
            if w < nd:
                raise ValueError(
                    f"hidden width {w} is below the output dimension {nd}; "
                    "intermediate bottlenecks are not supported"
                )
        beta = float(self.beta)
        if math.isnan(beta) or beta < 0:
            raise ValueError("beta must be a non-negative real or infinity")
        object.__setattr__(self, "beta", beta)

    @property
    def d(self) -> int:
        return len(self.widths) - 1

    @property
    def n0(self) -> int:
        return self.widths[0]

    @property
    def nd(self) -> int:
        return self.widths[-1]

    @property
    def hidden(self) -> tuple:
        return self.widths[1:-1]

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)


@dataclass(frozen=True)
class GramSet:
    """The five normalized Gram matrices of a dataset.

    ``gxx`` is symmetric positive definite (condition number capped),
    ``gxhxh`` and ``gyy`` symmetric PSD, and the combined train/test input
    Gram ``[[gxx, gxxh], [gxxh.T, gxhxh]]`` PSD up to round-off.
    """

    gxx: np.ndarray
    gxxh: np.ndarray
    gxhxh: np.ndarray
    gyy: np.ndarray
    gyhyh: np.ndarray | None = None
    cond_cap: float = field(default=COND_CAP, repr=False)

    def __post_init__(self):
        gxx = require_well_conditioned(self.gxx, self.cond_cap, name="gxx")
        if float(np.linalg.eigvalsh(gxx).min()) <= 0:
            raise ValueError("gxx must be positive definite")
        object.__setattr__(self, "gxx", gxx)
        object.__setattr__(self, "gxxh", _as_matrix(self.gxxh, "gxxh"))
        for name in ("gxhxh", "gyy"):
            mat = symmetrize(_as_matrix(getattr(self, name), name))
            w_min = float(np.linalg.eigvalsh(mat).min()) if mat.size else 0.0
            if w_min < -1e-8 * max(1.0, float(np.linalg.norm(mat))):
                raise ValueError(f"{name} is not PSD (min eigenvalue {w_min:.3e})")
            object.__setattr__(self, name, mat)
        if self.gyhyh is not None:
            object.__setattr__(self, "gyhyh", symmetrize(_as_matrix(self.gyhyh, "gyhyh")))
        p = self.gxx.shape[0]
        phat = self.gxhxh.shape[0]
        if self.gxxh.shape != (p, phat):
            raise ValueError("gxxh must have shape (p, phat)")
        if self.gyy.shape != (p, p):
            raise ValueError("gyy must have shape (p, p)")
        combined = np.block([[self.gxx, self.gxxh], [self.gxxh.T, self.gxhxh]])
        w_min = float(np.linalg.eigvalsh(symmetrize(combined)).min())
        if w_min < -1e-8 * max(1.0, float(np.linalg.norm(combined))):
            raise ValueError(
                f"combined train/test input Gram is not PSD (min eigenvalue {w_min:.3e})"
            )

    @property
    def p(self) -> int:
        return self.gxx.shape[0]

    @property
    def phat(self) -> int:
        return self.gxhxh.shape[0]


def build_gram_set(ds: Dataset, cond_cap: float = COND_CAP) -> GramSet:
    """Normalized Gram matrices of a dataset.

    ``gxx = X X^T / n0`` and friends, with every symmetric output averaged
    with its transpose so downstream eigendecompositions see exactly
    symmetric input. Rejects training Grams whose condition number exceeds
    ``cond_cap``.
    """
    n0 = float(ds.n0)
    nd = float(ds.nd)
    gxx = symmetrize(ds.X @ ds.X.T / n0)
    gxxh = ds.X @ ds.Xhat.T / n0
    gxhxh = symmetrize(ds.Xhat @ ds.Xhat.T / n0)
    gyy = symmetrize(ds.Y @ ds.Y.T / nd)
    gyhyh = None
    if ds.Yhat is not None:
        gyhyh = symmetrize(ds.Yhat @ ds.Yhat.T / nd)
    return GramSet(gxx=gxx, gxxh=gxxh, gxhxh=gxhxh, gyy=gyy, gyhyh=gyhyh,
                   cond_cap=cond_cap)
