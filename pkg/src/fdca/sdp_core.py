"""Hermitian Toeplitz algebra and PSD eigen-operations shared by the solvers."""

from __future__ import annotations

import numpy as np

PSD_TOL = 1e-8


class InvalidDiagonalError(ValueError):
    """A Hermitian Toeplitz generator must have a real first entry."""


class NotPsdError(ValueError):
    pass


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def toeplitz_embed(z: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian Toeplitz ``T(z)`` with ``z`` as first column.

    ``T[i, j] = z[i - j]`` for ``i >= j`` and ``conj(z[j - i])`` otherwise.
    """
    z = np.asarray(z, dtype=complex)
    if abs(z[0].imag) > tol * max(1.0, abs(z[0])):
        raise InvalidDiagonalError(f'z[0] = {z[0]} is not real')
    absk, upper = _embed_index(len(z))
    T = z[absk]
    np.conjugate(T, out=T, where=upper)
    T.flat[::len(z) + 1] = z[0].real
    return T


_EMBED_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _embed_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _EMBED_CACHE:
        k = np.subtract.outer(np.arange(n), np.arange(n))
        _EMBED_CACHE[n] = (np.abs(k), k < 0)
    return _EMBED_CACHE[n]


_DIAG_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _lower_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _DIAG_CACHE:
        i, j = np.tril_indices(n)
        _DIAG_CACHE[n] = (i * n + j, i - j)
    return _DIAG_CACHE[n]


def diagonal_sums(A: np.ndarray) -> np.ndarray:
    """Sum of the ``k``-th subdiagonal ``A[i + k, i]`` for ``k = 0 .. n-1``."""
    n = A.shape[0]
    flat, k = _lower_index(n)
    vals = A.ravel()[flat]
    return (np.bincount(k, weights=vals.real, minlength=n)
            + 1j * np.bincount(k, weights=vals.imag, minlength=n))


def toeplitz_adjoint(W: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`toeplitz_embed` under ``<A, B> = Re tr(A^H B)``.

    Component ``k`` is the gradient of ``Re tr[W^H T(z)]`` with respect to
    ``z[k]`` (real and imaginary parts packed as one complex number), so
    ``Re tr[W^H T(z)] = Re(sum(conj(adj) * z))``. For Hermitian ``W`` the
    components reduce to twice the ``k``-th subdiagonal sum, and ``k = 0``
    to the trace.
    """
    W = np.asarray(W, dtype=complex)
    lower = diagonal_sums(W)
    upper = diagonal_sums(W.T)  # W[i, i + k]
    adj = lower + upper.conj()
    adj[0] = np.trace(W).real
    return adj


def toeplitz_project(A: np.ndarray) -> np.ndarray:
    """Generator of the Frobenius-nearest Hermitian Toeplitz matrix to ``A``."""
    n = A.shape[0]
    lower = diagonal_sums(A)
    upper = diagonal_sums(A.T)
    z = 0.5 * (lower + upper.conj()) / (n - np.arange(n))
    z[0] = z[0].real
    return z


def sorted_eigh(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the Hermitian part of ``A``, eigenvalues descending."""
    w, V = np.linalg.eigh(hermitian_part(A))
    return w[::-1], V[:, ::-1]


def psd_project(A: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero."""
    w, V = np.linalg.eigh(hermitian_part(A))
    keep = w > 0
    Vk = V[:, keep]
    return hermitian_part((Vk * w[keep]) @ Vk.conj().T)


def is_psd(A: np.ndarray, tol: float = PSD_TOL) -> bool:
    w = np.linalg.eigvalsh(hermitian_part(A))
    scale = max(abs(w).max(), 1e-300)
    return bool(w.min() >= -tol * scale)


def omega_filter(T: np.ndarray, gamma: float, tol: float = PSD_TOL,
                 strict: bool = True) -> np.ndarray:
    """Weight matrix minimizing ``||W - gamma I||_F^2 + 2 tr[W T]`` over ``W >= 0``.

    With ``T = U diag(lam) U^H`` the minimizer keeps ``T``'s eigenvectors and
    uses eigenvalues ``max(gamma - lam, 0)``, so ``0 <= W <= gamma I`` and
    ``W`` vanishes on every eigendirection of ``T`` above ``gamma``. For an
    exactly rank-r ``T`` with ``gamma`` below its r-th eigenvalue this is
    ``gamma`` times the projector onto the null space of ``T``.

    The formula is the exact minimizer for any Hermitian ``T``; ``strict``
    additionally rejects inputs with eigenvalues below ``-tol * max|lam|``.
    """
    if gamma <= 0:
        raise ValueError('gamma must be positive')
    lam, U = sorted_eigh(T)
    if strict and lam[-1] < -tol * max(abs(lam).max(), 1e-300):
        raise NotPsdError(f'smallest eigenvalue {lam[-1]:.3e} is negative')
    g = np.maximum(gamma - lam, 0.0)
    return hermitian_part((U * g) @ U.conj().T)


def numerical_rank(A: np.ndarray, rel_tol: float = 1e-3) -> int:
    w = np.linalg.eigvalsh(hermitian_part(A))
    if w.max() <= 0:
        return 0
    return int(np.sum(w > rel_tol * w.max()))


def assemble_blocks(tl, tr, br) -> np.ndarray:
    """``[[tl, tr], [tr^H, br]]``."""
    return np.block([[tl, tr], [tr.conj().T, br]])


def split_blocks(C: np.ndarray):
    n = C.shape[0] // 2
    return C[:n, :n], C[:n, n:], C[n:, :n], C[n:, n:]
