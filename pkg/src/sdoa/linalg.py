"""Dense complex linear-algebra kernels used by the estimators.

Everything here targets small matrices (a few dozen rows at most): a
Hermitian eigensolver based on cyclic Jacobi rotations, an SVD layered on
it through the Gram matrix of the short side, projection onto the PSD
cone, and least squares via the normal equations.  The Jacobi sweeps are
compiled with numba because the atomic-norm solver projects onto the PSD
cone once per ADMM iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = ["EigResult", "hermitian_eig", "svd", "psd_project", "lstsq"]

_EPS = np.finfo(np.float64).eps


@dataclass
class EigResult:
    """Eigendecomposition A = V diag(w) V^H with w sorted descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@njit(cache=True)
def _jacobi_sweeps(a, v, max_sweeps, off_tol):
    """Cyclic-by-row complex Jacobi rotations, in place.

    Each rotation zeroes one off-diagonal pair of the Hermitian matrix
    `a` with a unitary 2x2 transform; `v` accumulates the eigenvectors.
    Converged when the off-diagonal Frobenius mass drops below off_tol.
    """
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += abs(a[p, q]) ** 2
        if np.sqrt(2.0 * off) <= off_tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                m = abs(apq)
                if m == 0.0:
                    continue
                phase = apq / m  # rotate the pivot onto the real axis
                tau = (a[q, q].real - a[p, p].real) / (2.0 * m)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c * phase
                sc = np.conj(s)
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - sc * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = sc * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - sc * vkq
                    v[k, q] = s * vkp + c * vkq
    return max_sweeps


def _check_square_hermitian(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > rtol * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian within tolerance")
    return a


def hermitian_eig(a, tol: float = 1e-10) -> EigResult:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Args:
        a: Square Hermitian matrix (validated to 1e-12 relative).
        tol: Accepted relative reconstruction error ||A - V L V^H||_F / ||A||_F.

    Returns:
        EigResult with real eigenvalues in descending order and a unitary
        eigenvector matrix (columns).
    """
    a = _check_square_hermitian(a)
    n = a.shape[0]
    work = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(work)
    _jacobi_sweeps(work, v, 60, 64.0 * _EPS * max(scale, np.finfo(np.float64).tiny))
    w = np.diag(work).real.copy()
    order = np.argsort(w)[::-1]
    w = w[order]
    v = np.ascontiguousarray(v[:, order])
    if scale > 0.0:
        err = np.linalg.norm((v * w) @ v.conj().T - a) / scale
        if err > tol:
            raise ArithmeticError(f"eigendecomposition failed to converge: residual {err:.3e}")
    return EigResult(w, v)


def _complete_orthonormal(cols: np.ndarray, need: int, n: int) -> np.ndarray:
    """Extend the orthonormal columns in `cols` by `need` more (Gram-Schmidt)."""
    basis = [cols[:, i] for i in range(cols.shape[1])]
    added = []
    candidates = list(np.eye(n, dtype=np.complex128).T)
    k = 0
    while len(added) < need:
        if candidates:
            cand = candidates.pop(0)
        else:  # canonical vectors exhausted by near-parallel basis; rare
            rng = np.random.default_rng(k)
            cand = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            k += 1
        for b in basis:
            cand = cand - (b.conj() @ cand) * b
        norm = np.linalg.norm(cand)
        if norm > 0.25:
            cand = cand / norm
            basis.append(cand)
            added.append(cand)
    return np.column_stack(added)


def svd(a):
    """SVD of a small complex matrix: A = U @ diag(s) @ V^H.

    Computed from the Hermitian eigendecomposition of the Gram matrix on
    the short side.  The Gram route squares the condition number, so
    singular values below ~sqrt(eps) of the largest are reported as
    exactly zero; that is plenty for the subspace splits used here.

    Returns:
        (U, s, V) with s descending, U and V having orthonormal columns,
        and each right singular vector phase-fixed so that its first
        non-negligible component is real positive.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    m, n = a.shape
    if m > n:
        u, s, v = svd(a.conj().T)
        return v, s, u

    gram = a @ a.conj().T
    eig = hermitian_eig(0.5 * (gram + gram.conj().T))
    lam = eig.eigenvalues
    u = eig.eigenvectors
    cutoff = 8.0 * max(m, n) * _EPS * max(lam[0], 0.0)
    s = np.sqrt(np.maximum(lam, 0.0))
    s[lam <= cutoff] = 0.0

    v = np.zeros((n, m), dtype=np.complex128)
    nonzero = s > 0.0
    if np.any(nonzero):
        v[:, nonzero] = (a.conj().T @ u[:, nonzero]) / s[nonzero]
    n_zero = int(np.count_nonzero(~nonzero))
    if n_zero:
        v[:, ~nonzero] = _complete_orthonormal(v[:, nonzero], n_zero, n)

    # phase fixing: first non-negligible component of each V column real > 0
    for i in range(m):
        col = v[:, i]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            ph = col[idx[0]] / abs(col[idx[0]])
            v[:, i] = col / ph
            u[:, i] = u[:, i] / ph
    return u, s, v


def psd_project(a) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix to a Hermitian input."""
    a = _check_square_hermitian(a)
    eig = hermitian_eig(a)
    w = np.maximum(eig.eigenvalues, 0.0)
    out = (eig.eigenvectors * w) @ eig.eigenvectors.conj().T
    return 0.5 * (out + out.conj().T)


def lstsq(a, b) -> np.ndarray:
    """Least squares min ||A x - b||_2 via the normal equations.

    Requires rows >= cols and full column rank; raises otherwise.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    m, n = a.shape
    if m < n:
        raise ValueError(f"need rows >= cols, got {a.shape}")
    if b.shape != (m,):
        raise ValueError(f"rhs shape {b.shape} does not match {m} rows")
    gram = a.conj().T @ a
    eig = hermitian_eig(0.5 * (gram + gram.conj().T))
    lam = eig.eigenvalues
    if lam[-1] <= 8.0 * max(m, n) * _EPS * max(lam[0], 0.0):
        raise ValueError("matrix is rank deficient")
    rhs = eig.eigenvectors.conj().T @ (a.conj().T @ b)
    return eig.eigenvectors @ (rhs / lam)
