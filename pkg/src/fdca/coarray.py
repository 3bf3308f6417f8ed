"""Space-frequency difference coarray of a coprime array."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import CoprimeLayout


@dataclass(frozen=True)
class DifferenceSet:
    lags: np.ndarray
    holes: np.ndarray
    consecutive_u: int
    max_lag: int

    @property
    def n_lags(self) -> int:
        return len(self.lags)

    def contains(self, lag: int) -> bool:
        return bool(np.isin(lag, self.lags))


@dataclass(frozen=True)
class VirtualSignal:
    """Zero-filled coarray matrix and its observation mask.

    Row ``a`` holds spatial lag ``a - L`` and column ``b`` frequency lag
    ``b - L``. Noiseless entries equal
    ``sum_k p_k exp(-j pi l1 sin(theta_k)) exp(-j l2 phi_k)`` with
    ``phi_k = 4 pi df r_k / c``, i.e. the matrix is ``A_p P A_f^H``.
    """

    xv: np.ndarray
    mask: np.ndarray
    max_lag: int

    @property
    def dim(self) -> int:
        return 2 * self.max_lag + 1

    def at(self, l1: int, l2: int) -> complex:
        L = self.max_lag
        return self.xv[l1 + L, l2 + L]


def difference_set(layout: CoprimeLayout) -> DifferenceSet:
    M, N = layout.m_coprime, layout.n_coprime
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    cross = (N * m - M * n).ravel()
    lags = np.union1d(cross, -cross)
    L = layout.max_lag
    holes = np.setdiff1d(np.arange(-L, L + 1), lags)
    u = 0
    while u + 1 <= L and (u + 1) in lags and -(u + 1) in lags:
        u += 1
    return DifferenceSet(lags.astype(int), holes.astype(int), u, L)


def brute_force_lags(layout: CoprimeLayout) -> np.ndarray:
    """All pairwise differences of the integer set."""
    s = layout.integer_set
    return np.unique(np.subtract.outer(s, s).ravel())


def lag_index_maps(layout: CoprimeLayout) -> tuple[np.ndarray, np.ndarray]:
    """Spatial and frequency lag of every covariance entry.

    Entry ``((i, q), (i', q'))`` maps to ``l1 = s_i - s_i'`` and
    ``l2 = s_q' - s_q``.
    """
    s = layout.integer_set
    n = layout.size
    si = np.repeat(s, n)  # sensor index of each flattened row
    sq = np.tile(s, n)  # frequency index of each flattened row
    l1 = np.subtract.outer(si, si)
    l2 = -np.subtract.outer(sq, sq)
    return l1, l2


def lag_multiplicity(layout: CoprimeLayout) -> np.ndarray:
    """Number of physical pairs behind each ``(l1, l2)`` coarray entry."""
    L = layout.max_lag
    l1, l2 = lag_index_maps(layout)
    counts = np.zeros((2 * L + 1, 2 * L + 1), dtype=int)
    np.add.at(counts, (l1.ravel() + L, l2.ravel() + L), 1)
    return counts


def derive_virtual_signal(layout: CoprimeLayout, covariance: np.ndarray) -> VirtualSignal:
    """Average redundant covariance entries into the zero-filled coarray matrix."""
    n2 = layout.size ** 2
    R = np.asarray(covariance)
    if R.shape != (n2, n2):
        raise ValueError(f'covariance must be {n2}x{n2}, got {R.shape}')
    L = layout.max_lag
    dim = 2 * L + 1
    l1, l2 = lag_index_maps(layout)
    idx = (l1.ravel() + L, l2.ravel() + L)
    sums = np.zeros((dim, dim), dtype=complex)
    counts = np.zeros((dim, dim), dtype=int)
    np.add.at(sums, idx, R.ravel())
    np.add.at(counts, idx, 1)
    mask = counts > 0
    xv = np.zeros((dim, dim), dtype=complex)
    xv[mask] = sums[mask] / counts[mask]
    xv = 0.5 * (xv + xv[::-1, ::-1].conj())
    return VirtualSignal(xv, mask, L)


def coarray_matrix(layout: CoprimeLayout, thetas, ranges, powers) -> np.ndarray:
    """Noiseless full coarray matrix ``A_p diag(p) A_f^H`` over lags ``[-L, L]``."""
    L = layout.max_lag
    Ap, Af = coarray_manifolds(layout, thetas, ranges, L)
    return (Ap * np.asarray(powers, dtype=float)) @ Af.conj().T


def coarray_manifolds(layout: CoprimeLayout, thetas, ranges, half_width: int,
                      start: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Spatial and frequency manifolds on the lags ``start .. start + 2*half_width``.

    Columns are ``exp(-j pi l sin(theta))`` and ``exp(+j l phi(r))``. The
    default start is ``-half_width``.
    """
    if start is None:
        start = -half_width
    lags = np.arange(start, start + 2 * half_width + 1)
    u = np.sin(np.deg2rad(np.atleast_1d(np.asarray(thetas, dtype=float))))
    phi = layout.range_phase(np.atleast_1d(np.asarray(ranges, dtype=float)))
    Ap = np.exp(-1j * np.pi * np.multiply.outer(lags, u))
    Af = np.exp(1j * np.multiply.outer(lags, phi))
    return Ap, Af


def consecutive_submatrix(vs: VirtualSignal, diffset: DifferenceSet) -> np.ndarray:
    U = diffset.consecutive_u
    if U < 1:
        raise ValueError('consecutive segment is empty')
    L = vs.max_lag
    sl = slice(L - U, L + U + 1)
    if not vs.mask[sl, sl].all():
        raise ValueError('central block is not fully observed')
    return vs.xv[sl, sl].copy()


def table_counts(layout: CoprimeLayout) -> dict[str, tuple[int, int]]:
    """(elements per axis, DoF) for each processing model.

    The physical array resolves ``|S|^2 - 1`` targets, the difference
    coarray as many as non-negative unique lags, the consecutive segment
    ``U^2 + 2U`` and the interpolated coarray ``L^2 + 2L``.
    """
    ds = difference_set(layout)
    n = layout.size
    U, L = ds.consecutive_u, ds.max_lag
    nonneg = int(np.sum(ds.lags >= 0))
    return {
        'physical': (n, n * n - 1),
        'difference': (ds.n_lags, nonneg * nonneg),
        'consecutive': (2 * U + 1, U * U + 2 * U),
        'interpolated': (2 * L + 1, L * L + 2 * L),
    }
