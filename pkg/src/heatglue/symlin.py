"""Small dense symmetric eigen-solver and spectral calculus.

Sizes here are graph-sized (tens, occasionally a couple hundred), and the
small eigenvalues are the ones that matter at large times, so the solver is a
cyclic-by-rows Jacobi iteration: slower than LAPACK but simple, deterministic,
and with high relative accuracy on small eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ConvergenceError",
    "SymMatrix",
    "SpectralDecomp",
    "eigh",
    "spectral_apply",
    "block",
]

_OFFDIAG_TOL = 1e-14
_MAX_SWEEPS = 100


class ConvergenceError(RuntimeError):
    """Jacobi sweeps failed to shrink the off-diagonal mass below tolerance."""


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SymMatrix:
    """An exactly symmetric real matrix.

    Parameters
    ----------
    entries : array_like
        Square matrix.  Rejected unless exactly symmetric; pass
        ``symmetrize=True`` to average ``(A + A^T)/2`` instead.
    """

    entries: np.ndarray
    symmetrize: bool = False

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"need a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        if self.symmetrize:
            a = (a + a.T) / 2.0
        elif not np.array_equal(a, a.T):
            raise ValueError(
                "matrix is not exactly symmetric; pass symmetrize=True to average"
            )
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues in ascending order with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "eigenvalues", _frozen_array(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _frozen_array(self.eigenvectors))


def eigh(a: SymMatrix) -> SpectralDecomp:
    """Full eigendecomposition by cyclic-by-rows Jacobi rotations.

    Deterministic for a fixed input.  Raises :class:`ConvergenceError` if 100
    sweeps do not bring the off-diagonal Frobenius mass below ``1e-14 ||A||_F``
    or the residual checks fail afterwards.
    """
    if not isinstance(a, SymMatrix):
        a = SymMatrix(a)
    n = a.n
    m = a.entries.copy()
    q = np.eye(n)
    fro = float(np.linalg.norm(m))
    if n == 1 or fro == 0.0:
        return SpectralDecomp(np.diag(m).copy(), q)

    others = np.arange(n)
    diag_mask = ~np.eye(n, dtype=bool)
    converged = False
    for _ in range(_MAX_SWEEPS):
        off = math.sqrt(float(np.sum(m[diag_mask] ** 2)))
        if off < _OFFDIAG_TOL * fro:
            converged = True
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = m[p, r]
                if apq == 0.0:
                    continue
                theta = (m[r, r] - m[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                dpp = t * apq
                m[p, p] -= dpp
                m[r, r] += dpp
                m[p, r] = m[r, p] = 0.0
                mask = (others != p) & (others != r)
                mp = m[mask, p]
                mr = m[mask, r]
                m[mask, p] = m[p, mask] = mp - s * (mr + tau * mp)
                m[mask, r] = m[r, mask] = mr + s * (mp - tau * mr)
                qp = q[:, p].copy()
                qr = q[:, r]
                q[:, p] = qp - s * (qr + tau * qp)
                q[:, r] = qr + s * (qp - tau * qr)
    if not converged:
        raise ConvergenceError(f"Jacobi did not converge in {_MAX_SWEEPS} sweeps")

    w = np.diag(m).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    q = q[:, order]

    amax = float(np.abs(a.entries).max())
    if np.abs(q.T @ q - np.eye(n)).max() > 1e-12:
        raise ConvergenceError("eigenvector columns lost orthonormality")
    if np.abs(a.entries @ q - q * w[None, :]).max() > 1e-11 * (1.0 + amax):
        raise ConvergenceError("eigenpair residual above tolerance")
    return SpectralDecomp(w, q)


def spectral_apply(d: SpectralDecomp, phi: Callable[[float], float]) -> np.ndarray:
    """Q diag(phi(omega)) Q^T; rejects phi values that are not finite."""
    vals = np.array([float(phi(float(w))) for w in d.eigenvalues])
    if not np.all(np.isfinite(vals)):
        bad = d.eigenvalues[~np.isfinite(vals)]
        raise ValueError(f"phi is not finite at eigenvalue(s) {bad}")
    q = d.eigenvectors
    return (q * vals[None, :]) @ q.T


def block(a, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    """Submatrix with rows and columns in the given index order."""
    mat = a.entries if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
    ri = np.asarray(list(rows), dtype=int)
    ci = np.asarray(list(cols), dtype=int)
    if ri.size and (ri.min() < 0 or ri.max() >= mat.shape[0]):
        raise IndexError(f"row set {ri.tolist()} out of range for shape {mat.shape}")
    if ci.size and (ci.min() < 0 or ci.max() >= mat.shape[1]):
        raise IndexError(f"column set {ci.tolist()} out of range for shape {mat.shape}")
    if not ri.size or not ci.size:
        return np.zeros((ri.size, ci.size))
    return mat[np.ix_(ri, ci)].copy()
