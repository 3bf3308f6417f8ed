"""2D spatial smoothing, 2D MUSIC and peak extraction on a coarray block."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .array_model import CoprimeLayout
from .sdp_core import sorted_eigh

# Floor on the MUSIC denominator relative to ||a||^2, keeps the spectrum finite.
DENOM_FLOOR = 1e-14
# Maxima further below the strongest peak are treated as sidelobes.
DEFAULT_DYNAMIC_RANGE_DB = 20.0


class SubspaceError(ValueError):
    """Requested source count leaves no noise subspace."""


class UnderResolvedError(RuntimeError):
    def __init__(self, found: int, requested: int):
        super().__init__(f'spectrum has {found} local maxima, {requested} requested')
        self.found = found
        self.requested = requested


@dataclass(frozen=True)
class SmoothedCovariance:
    r_ss: np.ndarray
    window_v: int

    @property
    def dim(self) -> int:
        return (self.window_v + 1) ** 2


@dataclass(frozen=True)
class Spectrum2D:
    theta_grid: np.ndarray
    range_grid: np.ndarray
    values: np.ndarray  # (len(theta_grid), len(range_grid))


@dataclass
class EstimateSet:
    thetas: np.ndarray
    ranges: np.ndarray
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return len(self.thetas)


def smoothing_windows(block: np.ndarray) -> np.ndarray:
    """All ``(V+1)^2`` subarray windows as columns.

    Window ``(s1, s2)`` holds the lags ``(a - s1, s2 - b)`` for
    ``a, b = 0 .. V`` at position ``a (V+1) + b``. With this ordering each
    window of a single-target block is the reference window scaled by a
    unit-modulus constant, and the signal part lies on
    ``exp(-j pi a sin(theta)) (x) exp(+j b phi(r))``.
    """
    block = np.asarray(block)
    n = block.shape[0]
    if block.shape != (n, n) or n % 2 == 0:
        raise ValueError('block must be square with odd size 2V+1')
    V = (n - 1) // 2
    a = np.arange(V + 1)
    s = np.arange(V + 1)
    rows = a[None, :] - s[:, None] + V  # (s1, a)
    cols = s[:, None] - a[None, :] + V  # (s2, b)
    # W[s1, s2, a, b] = block[rows[s1, a], cols[s2, b]]
    W = block[rows[:, None, :, None], cols[None, :, None, :]]
    return W.reshape((V + 1) ** 2, (V + 1) ** 2).T


def spatial_smooth_2d(block: np.ndarray, mask: np.ndarray | None = None) -> SmoothedCovariance:
    """Average the outer products of all overlapping windows of ``block``.

    Raises:
        ValueError: if ``mask`` marks any entry of the block as unobserved.
    """
    if mask is not None and not np.all(mask):
        raise ValueError('block contains unobserved coarray entries; interpolate first')
    W = smoothing_windows(block)
    V = int(np.sqrt(W.shape[1])) - 1
    R = (W @ W.conj().T) / W.shape[1]
    return SmoothedCovariance(0.5 * (R + R.conj().T), V)


def music_manifolds(layout: CoprimeLayout, V: int, theta_grid, range_grid):
    v = np.arange(V + 1)
    u = np.sin(np.deg2rad(np.asarray(theta_grid, dtype=float)))
    Ap = np.exp(-1j * np.pi * np.multiply.outer(v, u))
    Af = np.exp(1j * np.multiply.outer(v, layout.range_phase(range_grid)))
    return Ap, Af


def noise_projection(r_ss: SmoothedCovariance, K: int) -> np.ndarray:
    """Noise subspace ``U_N`` (columns) of the smoothed covariance."""
    n = r_ss.dim
    if K < 0 or K >= n:
        raise SubspaceError(f'K={K} must be below the smoothed dimension {n}')
    _, U = sorted_eigh(r_ss.r_ss)
    return U[:, K:]


def music_denominator(r_ss: SmoothedCovariance, K: int, layout, theta_grid, range_grid):
    """``a^H U_N U_N^H a`` over the grid, shape ``(n_theta, n_range)``.

    Uses the smaller of the signal and noise subspaces; the joint steering
    vector is separable so the contraction runs one axis at a time.
    """
    n = r_ss.dim
    V = r_ss.window_v
    if K < 0 or K >= n:
        raise SubspaceError(f'K={K} must be below the smoothed dimension {n}')
    _, U = sorted_eigh(r_ss.r_ss)
    use_signal = K < n - K
    basis = U[:, :K] if use_signal else U[:, K:]
    Ap, Af = music_manifolds(layout, V, theta_grid, range_grid)
    m = basis.shape[1]
    B = basis.conj().reshape(V + 1, V + 1, m)  # [a, b, i]
    # P[t, b, i] = sum_a conj(U[a, b, i]) * Ap[a, t]
    P = np.einsum('abi,at->tbi', B, Ap)
    proj = np.zeros((Ap.shape[1], Af.shape[1]))
    for i in range(m):
        proj += np.abs(P[:, :, i] @ Af) ** 2
    if use_signal:
        return np.maximum(n - proj, DENOM_FLOOR * n)
    return np.maximum(proj, DENOM_FLOOR * n)


def music_spectrum_2d(r_ss: SmoothedCovariance, K: int, theta_grid, range_grid,
                      layout: CoprimeLayout) -> Spectrum2D:
    theta_grid = np.asarray(theta_grid, dtype=float)
    range_grid = np.asarray(range_grid, dtype=float)
    if theta_grid.size == 0 or range_grid.size == 0:
        raise ValueError('grids must be nonempty')
    den = music_denominator(r_ss, K, layout, theta_grid, range_grid)
    return Spectrum2D(theta_grid, range_grid, 1.0 / den)


def local_maxima(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of strict maxima over the 8-neighborhood (borders included)."""
    padded = np.pad(values, 1, constant_values=-np.inf)
    center = padded[1:-1, 1:-1]
    is_max = np.ones(values.shape, dtype=bool)
    nt, nr = values.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = padded[1 + di:1 + di + nt, 1 + dj:1 + dj + nr]
            is_max &= center > nb
    return np.nonzero(is_max)


def _parabolic_offset(ym, y0, yp) -> float:
    den = ym - 2.0 * y0 + yp
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def pick_peaks(spectrum: Spectrum2D, K: int, refine: bool = True,
               dynamic_range_db: float | None = DEFAULT_DYNAMIC_RANGE_DB) -> EstimateSet:
    """Return the ``K`` largest local maxima, refined by a parabola per axis.

    Only maxima within ``dynamic_range_db`` of the strongest one count as
    peaks; ``None`` keeps every strict local maximum.

    Raises:
        UnderResolvedError: if fewer than ``K`` peaks are found.
    """
    vals = spectrum.values
    it, ir = local_maxima(vals)
    if dynamic_range_db is not None and len(it):
        floor = vals[it, ir].max() * 10.0 ** (-dynamic_range_db / 10.0)
        keep = vals[it, ir] >= floor
        it, ir = it[keep], ir[keep]
    if len(it) < K:
        raise UnderResolvedError(len(it), K)
    order = np.argsort(-vals[it, ir], kind='stable')[:K]
    tg, rg = spectrum.theta_grid, spectrum.range_grid
    thetas, ranges, peak_vals = [], [], []
    logv = np.log(vals)
    for idx in order:
        i, j = it[idx], ir[idx]
        th, rr = tg[i], rg[j]
        if refine:
            if 0 < i < len(tg) - 1:
                th += _parabolic_offset(logv[i - 1, j], logv[i, j], logv[i + 1, j]) * (tg[i + 1] - tg[i])
            if 0 < j < len(rg) - 1:
                rr += _parabolic_offset(logv[i, j - 1], logv[i, j], logv[i, j + 1]) * (rg[j + 1] - rg[j])
        thetas.append(th)
        ranges.append(rr)
        peak_vals.append(vals[i, j])
    return EstimateSet(np.array(thetas), np.array(ranges), np.array(peak_vals))


def polish_peaks(est: EstimateSet, r_ss: SmoothedCovariance, K: int, layout: CoprimeLayout,
                 theta_step: float, range_step: float) -> EstimateSet:
    """Minimize the MUSIC denominator around each peak, one grid cell each way.

    Grid-snapped peaks are biased toward grid nodes; this removes that bias
    at the cost of a few dozen spectrum evaluations per peak.
    """
    n = r_ss.dim
    if K < 0 or K >= n:
        raise SubspaceError(f'K={K} must be below the smoothed dimension {n}')
    _, U = sorted_eigh(r_ss.r_ss)
    use_signal = K < n - K
    basis = U[:, :K] if use_signal else U[:, K:]
    V = r_ss.window_v

    def den(x):
        ap, af = music_manifolds(layout, V, [x[0] * theta_step], [x[1] * range_step])
        a = (ap[:, :1] * af[:, 0]).ravel()  # a[v1 (V+1) + v2]
        proj = float(np.sum(np.abs(basis.conj().T @ a) ** 2))
        return np.log(max(n - proj if use_signal else proj, DENOM_FLOOR * n))

    thetas, ranges = est.thetas.copy(), est.ranges.copy()
    for k in range(est.n):
        x0 = np.array([thetas[k] / theta_step, ranges[k] / range_step])
        res = minimize(den, x0, method='L-BFGS-B', bounds=[(x0[0] - 1, x0[0] + 1), (x0[1] - 1, x0[1] + 1)])
        if res.fun <= den(x0):
            thetas[k], ranges[k] = res.x[0] * theta_step, res.x[1] * range_step
    return EstimateSet(thetas, ranges, est.values)


def write_spectrum_csv(spectrum: Spectrum2D, path) -> None:
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['theta_deg', 'range_m', 'music_value'])
        for i, th in enumerate(spectrum.theta_grid):
            for j, r in enumerate(spectrum.range_grid):
                w.writerow([f'{th:.6f}', f'{r:.6f}', f'{spectrum.values[i, j]:.12g}'])
