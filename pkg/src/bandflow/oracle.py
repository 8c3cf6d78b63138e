"""Reference eigensolvers used to verify flow results.

Two deliberately independent algorithms: Sturm-sequence bisection for
symmetric tridiagonal matrices and cyclic Jacobi rotations for small dense
symmetric matrices.  Neither shares any code with the flow engine, so they
can serve as oracles for it (and for each other).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SpectrumResult", "eigenvalues_tridiag", "eigenvalues_dense"]

_DENSE_CAP = 512


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues plus an absolute accuracy bound."""

    eigenvalues: np.ndarray
    residual_bound: float


def sturm_count(diag: np.ndarray, offdiag_sq: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Number of eigenvalues below each shift, via the LDL^T pivot recurrence.

    Vectorized over shifts.  Zero pivots are handled through IEEE infinities:
    a 0 pivot sends the next pivot to -inf, which is counted and then
    self-heals (b^2 / -inf == -0).
    """
    shifts = np.asarray(shifts, dtype=float)
    d = diag[0] - shifts
    count = (d < 0.0).astype(np.int64)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for i in range(1, diag.shape[0]):
            d = (diag[i] - shifts) - offdiag_sq[i - 1] / d
            d = np.where(np.isnan(d), -0.0, d)  # 0/0 from consecutive zeros
            count += d < 0.0
    return count


def eigenvalues_tridiag(diag, offdiag) -> SpectrumResult:
    """All eigenvalues of a symmetric tridiagonal matrix by bisection.

    Parameters
    ----------
    diag : array of N diagonal entries.
    offdiag : array of N-1 off-diagonal entries.

    Eigenvalues are located to an absolute tolerance of 1e-12 times the
    matrix scale; multiplicities are counted correctly because bisection
    brackets eigenvalue counts, not roots.
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    n = diag.shape[0]
    if offdiag.shape != (max(n - 1, 0),):
        raise ValueError(f"offdiag must have length {n - 1}, got {offdiag.shape}")
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
        raise ValueError("non-finite entry in tridiagonal input")
    if n == 1:
        return SpectrumResult(diag.copy(), 0.0)

    # Gershgorin enclosure of the whole spectrum.
    radius = np.zeros(n)
    radius[:-1] += np.abs(offdiag)
    radius[1:] += np.abs(offdiag)
    lo_all = float(np.min(diag - radius))
    hi_all = float(np.max(diag + radius))
    scale = max(abs(lo_all), abs(hi_all), 1e-300)
    tol = 1e-12 * scale

    off_sq = offdiag * offdiag
    lo = np.full(n, lo_all)
    hi = np.full(n, hi_all)
    targets = np.arange(1, n + 1)
    # Each bisection halves every bracket; run until all are below tol.
    while True:
        width = hi - lo
        if float(width.max()) <= 2.0 * tol:
            break
        mid = 0.5 * (lo + hi)
        cnt = sturm_count(diag, off_sq, mid)
        below = cnt < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    eig = 0.5 * (lo + hi)
    return SpectrumResult(np.sort(eig), tol)


def eigenvalues_dense(matrix) -> SpectrumResult:
    """All eigenvalues of a dense symmetric matrix by cyclic Jacobi sweeps.

    Rotations are applied until the off-diagonal Frobenius norm falls below
    1e-13 times the matrix norm.  Input asymmetry beyond 1e-12 (relative to
    the largest entry) is rejected.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > _DENSE_CAP:
        raise ValueError(f"dense oracle capped at N <= {_DENSE_CAP}, got {n}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entry in dense input")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if float(np.max(np.abs(a - a.T))) > 1e-12 * max(scale, 1.0):
        raise ValueError("input is not symmetric within 1e-12")
    a = 0.5 * (a + a.T)
    if n == 1:
        return SpectrumResult(a[0:1, 0].copy(), 0.0)

    norm = np.sqrt(np.sum(a * a))
    target = 1e-13 * max(norm, 1e-300)

    off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
    for _ in range(60):  # sweeps; quadratic convergence ends this early
        if off <= target:
            break
        skip = off / (n * n)  # entries below this cannot matter yet
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= min(skip, target / n):
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # two-sided rotation on rows/columns p and q
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
    else:  # pragma: no cover - defensive
        raise RuntimeError("Jacobi iteration failed to converge in 60 sweeps")

    return SpectrumResult(np.sort(np.diag(a)), float(off) + 1e-15 * norm)
