"""Decoupled atomic-norm interpolation of the coarray matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, AdmmState, admm_solve
from .coarray import VirtualSignal, coarray_manifolds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DanmConfig:
    mu: float = 50.0
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError('mu must be positive')


@dataclass
class InterpolationResult:
    """Filled coarray matrix plus the Toeplitz generators behind it."""

    xv_full: np.ndarray
    z_p: np.ndarray
    z_f: np.ndarray
    state: AdmmState

    @property
    def max_lag(self) -> int:
        return (self.xv_full.shape[0] - 1) // 2


def danm_weights(max_lag: int) -> np.ndarray:
    """Constant weight with ``2 tr[W T(z)] = tr T(z) / (2L)``."""
    return np.eye(2 * max_lag + 1) / (4.0 * max_lag)


def solve_danm(vs: VirtualSignal, cfg: DanmConfig | None = None,
               init: AdmmState | None = None) -> InterpolationResult:
    """Minimize ``(tr T(z_p) + tr T(z_f)) / (2L) + mu ||X o B - X~||_F^2``.

    The trace objective is the weighted program solved by the ADMM engine
    with identity-scaled weights, so no external SDP solver is involved.
    """
    cfg = cfg or DanmConfig()
    W = danm_weights(vs.max_lag)
    admm_cfg = AdmmConfig(**{**cfg.admm.__dict__, 'mu': cfg.mu})
    state = admm_solve(W, W, vs.xv, vs.mask, admm_cfg, init=init)
    return InterpolationResult(state.xv, state.z_p, state.z_f, state)


def danm_mu_bound(max_lag: int, total_power: float, noise_power: float, snapshots: int) -> float:
    """Smallest ``mu`` covered by the DANM reconstruction guarantee."""
    return max_lag ** 2 * (total_power + noise_power) / np.sqrt(snapshots)


def danm_error_bound(mu: float, max_lag: int, total_power: float, noise_power: float) -> float:
    """Bound on the masked DANM reconstruction error for a given ``mu``."""
    return mu + np.sqrt(mu ** 2 + max_lag / (2.0 * mu) * (total_power + noise_power))


def crm_error_bound(mu: float, n_targets: int) -> float:
    """Bound on the masked CRM reconstruction error for ``n_targets`` sources."""
    return mu + np.sqrt(mu ** 2 + 2.0 * n_targets / mu)


def masked_error(xv_hat: np.ndarray, xv_true: np.ndarray, mask: np.ndarray) -> float:
    """``||X_hat o B - X o B||_F^2``."""
    return float(np.linalg.norm((xv_hat - xv_true) * mask) ** 2)


def atoms_check(layout, xv_full: np.ndarray, thetas, ranges) -> float:
    """Relative residual of ``X`` against its least-squares fit on the given atoms.

    Powers are fitted by unconstrained least squares on the vectorized
    atoms ``a_p(theta) a_f(r)^H``.
    """
    L = (xv_full.shape[0] - 1) // 2
    Ap, Af = coarray_manifolds(layout, thetas, ranges, L)
    G = np.stack([np.outer(Ap[:, k], Af[:, k].conj()).ravel() for k in range(Ap.shape[1])], axis=1)
    x = xv_full.ravel()
    p, *_ = np.linalg.lstsq(G, x, rcond=None)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0
    return float(np.linalg.norm(x - G @ p) / nrm)
