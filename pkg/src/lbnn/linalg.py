"""Structured linear algebra used throughout the package.

The global convention is row-major vectorization: ``vec(A)`` flattens the
rows of ``A`` in order (numpy's default ``reshape(-1)``), under which
``vec(A B C) = (A kron C^T) vec(B)``. Every Kronecker-structured identity
in this package assumes that convention.

All symmetric decompositions go through ``numpy.linalg.eigh`` (never a
general eigensolver) for determinism and accuracy on symmetric input.
"""

from __future__ import annotations

import numpy as np

#: Condition-number cap above which a nominally invertible matrix is rejected.
COND_CAP = 1e12


def vec(a: np.ndarray) -> np.ndarray:
    """Row-major vectorization of a 2-D array."""
    return np.asarray(a).reshape(-1)


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``rows x cols`` matrix."""
    return np.asarray(v).reshape(rows, cols)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product.

    With row-major vectorization this satisfies
    ``kron(A, C.T) @ vec(B) == vec(A @ B @ C)`` for conformable matrices.
    """
    return np.kron(np.asarray(a), np.asarray(b))


def symmetrize(s: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose."""
    s = np.asarray(s)
    return 0.5 * (s + s.T)


def require_symmetric(s: np.ndarray, rtol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    """Validate symmetry of ``s`` within relative tolerance and return it.

    Raises ``ValueError`` when the asymmetry norm exceeds ``rtol`` times
    the Frobenius norm of ``s`` (with a floor of ``rtol`` for matrices of
    negligible norm).
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"{name} must be square, got shape {s.shape}")
    scale = max(1.0, float(np.linalg.norm(s)))
    asym = float(np.linalg.norm(s - s.T))
    if asym > rtol * scale:
        raise ValueError(
            f"{name} is not symmetric: asymmetry norm {asym:.3e} exceeds "
            f"{rtol:.1e} * {scale:.3e}"
        )
    return s


def sym_condition_number(s: np.ndarray) -> float:
    """2-norm condition number of a symmetric matrix via its spectrum.

    Returns ``inf`` for singular (or indefinite-through-zero) input.
    """
    w = np.linalg.eigvalsh(symmetrize(np.asarray(s, dtype=float)))
    lo = float(np.min(np.abs(w)))
    hi = float(np.max(np.abs(w)))
    if lo == 0.0:
        return np.inf
    return hi / lo


def require_well_conditioned(s: np.ndarray, cond_cap: float = COND_CAP,
                             name: str = "matrix") -> np.ndarray:
    """Reject a symmetric matrix whose condition number exceeds ``cond_cap``."""
    s = require_symmetric(s, name=name)
    cond = sym_condition_number(s)
    if not np.isfinite(cond) or cond > cond_cap:
        raise ValueError(
            f"{name} is numerically singular: condition number {cond:.3e} "
            f"exceeds cap {cond_cap:.1e}"
        )
    return s


def psd_sqrt(s: np.ndarray, neg_tol: float = 1e-10) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues in ``[-neg_tol * max(1, spectral radius), 0)`` are treated
    as round-off and clamped to zero; anything more negative is an error.
    The result ``R`` is symmetric PSD with ``R @ R == s`` up to round-off.
    """
    s = require_symmetric(s, name="psd_sqrt input")
    w, v = np.linalg.eigh(s)
    floor = -neg_tol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and float(w.min()) < floor:
        raise ValueError(
            f"matrix is not PSD: minimum eigenvalue {w.min():.3e} "
            f"below tolerance {floor:.3e}"
        )
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def psd_clamp(s: np.ndarray, clamp_tol: float, error_tol: float | None = None,
              name: str = "matrix") -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by eigenvalue clamping.

    Eigenvalues below ``clamp_tol`` are set to zero. If ``error_tol`` is
    given, eigenvalues below ``-error_tol`` raise instead of clamping,
    distinguishing round-off from genuinely indefinite input.
    """
    s = symmetrize(np.asarray(s, dtype=float))
    w, v = np.linalg.eigh(s)
    if error_tol is not None and w.size and float(w.min()) < -error_tol:
        raise ValueError(
            f"{name} has eigenvalue {w.min():.3e} below -{error_tol:.3e}; "
            "not a round-off-level PSD violation"
        )
    w = np.where(w < clamp_tol, 0.0, w)
    return symmetrize((v * w) @ v.T)


def similarity_sqrt(g: np.ndarray, h: np.ndarray, cond_cap: float = COND_CAP) -> np.ndarray:
    """Principal square root of ``inv(g) @ h`` for PD ``g`` and PSD ``h``.

    Computed as ``g^{-1/2} sqrt(g^{-1/2} h g^{-1/2}) g^{1/2}``, which keeps
    the whole calculation inside symmetric eigendecompositions. The result
    squares to ``inv(g) @ h`` and commutes with it.
    """
    g = require_well_conditioned(g, cond_cap=cond_cap, name="similarity_sqrt base")
    h = require_symmetric(h, name="similarity_sqrt numerator")
    w, v = np.linalg.eigh(g)
    if w.size and float(w.min()) <= 0.0:
        raise ValueError("similarity_sqrt base must be positive definite")
    g_half = (v * np.sqrt(w)) @ v.T
    g_inv_half = (v / np.sqrt(w)) @ v.T
    inner = psd_sqrt(symmetrize(g_inv_half @ h @ g_inv_half))
    return g_inv_half @ inner @ g_half
