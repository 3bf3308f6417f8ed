"""Coarray Cramer-Rao bound for joint DoA-range estimation.

The parameter vector is ``[theta_1..K (rad), r_1..K, p_1..K, noise]`` and the
observation is ``vec(R_x)`` estimated from ``T`` snapshots. The Fisher
information is evaluated in trace form, ``J_ij = T tr(U_i R^-1 U_j R^-1)``
with ``U_i = dR/dzeta_i``, which never forms the Kronecker inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import CoprimeLayout, TargetScene, frequency_steering, spatial_steering

SINGULAR_COND = 1e12


class SingularCovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class FimResult:
    fim: np.ndarray
    crb_theta: np.ndarray  # deg^2
    crb_range: np.ndarray  # m^2
    singular: bool
    cond: float

    @property
    def n_targets(self) -> int:
        return (self.fim.shape[0] - 1) // 3


def pack_params(scene: TargetScene) -> np.ndarray:
    return np.concatenate([np.deg2rad(scene.thetas), scene.ranges, scene.powers,
                           [scene.noise_power]])


def covariance_from_params(layout: CoprimeLayout, zeta: np.ndarray) -> np.ndarray:
    """``R_x(zeta)`` with angles in radians."""
    K = (len(zeta) - 1) // 3
    th, r, p, s2 = zeta[:K], zeta[K:2 * K], zeta[2 * K:3 * K], zeta[-1]
    H = _steering(layout, th, r)
    return (H * p) @ H.conj().T + s2 * np.eye(H.shape[0])


def _steering(layout, th_rad, r):
    n = layout.size
    hp = spatial_steering(layout, np.rad2deg(th_rad))
    hf = frequency_steering(layout, r)
    return (hp[:, None, :] * hf[None, :, :]).reshape(n * n, -1)


def covariance_derivatives(layout: CoprimeLayout, scene: TargetScene) -> np.ndarray:
    """Stack of ``dR/dzeta_i``, shape ``(3K+1, n^2, n^2)``."""
    s = layout.integer_set.astype(float)
    n = layout.size
    th = np.deg2rad(scene.thetas)
    r = scene.ranges
    p = scene.powers
    K = len(th)
    hp = spatial_steering(layout, scene.thetas)
    hf = frequency_steering(layout, r)
    dhp = (-1j * np.pi * np.multiply.outer(s, np.cos(th))) * hp
    dhf = (1j * 4.0 * np.pi * layout.unit_offset_df / layout.c * s)[:, None] * hf
    H = (hp[:, None, :] * hf[None, :, :]).reshape(n * n, K)
    Ht = (dhp[:, None, :] * hf[None, :, :]).reshape(n * n, K)
    Hr = (hp[:, None, :] * dhf[None, :, :]).reshape(n * n, K)
    D = np.empty((3 * K + 1, n * n, n * n), dtype=complex)
    for k in range(K):
        a = p[k] * np.outer(Ht[:, k], H[:, k].conj())
        D[k] = a + a.conj().T
        b = p[k] * np.outer(Hr[:, k], H[:, k].conj())
        D[K + k] = b + b.conj().T
        D[2 * K + k] = np.outer(H[:, k], H[:, k].conj())
    D[3 * K] = np.eye(n * n)
    return D


def derivative_columns(layout: CoprimeLayout, scene: TargetScene) -> np.ndarray:
    """``d vec(R_x) / d zeta`` as a ``(n^4, 3K+1)`` matrix (row-major vec)."""
    D = covariance_derivatives(layout, scene)
    return D.reshape(D.shape[0], -1).T


def finite_difference_columns(layout: CoprimeLayout, scene: TargetScene,
                              rel_step: float = 1e-7) -> np.ndarray:
    """Central differences of ``vec(R_x)`` along each parameter."""
    zeta = pack_params(scene)
    cols = []
    for i in range(len(zeta)):
        h = rel_step * max(abs(zeta[i]), 1.0)
        zp, zm = zeta.copy(), zeta.copy()
        zp[i] += h
        zm[i] -= h
        diff = covariance_from_params(layout, zp) - covariance_from_params(layout, zm)
        cols.append(diff.ravel() / (2.0 * h))
    return np.stack(cols, axis=1)


def coarray_fim(layout: CoprimeLayout, scene: TargetScene) -> FimResult:
    """Fisher information of ``vec(R_x)`` and the resulting CRBs.

    Raises:
        SingularCovarianceError: if the noise power is zero.
    """
    if scene.noise_power <= 0:
        raise SingularCovarianceError('coarray CRB needs a positive noise power')
    K = scene.n_targets
    R = covariance_from_params(layout, pack_params(scene))
    Rinv = np.linalg.inv(R)
    D = covariance_derivatives(layout, scene)
    A = np.einsum('ab,ibc->iac', Rinv, D)
    J = scene.snapshots * np.real(np.einsum('iab,jba->ij', A, A))
    J = 0.5 * (J + J.T)
    return _finish(J, K)


def _finish(J: np.ndarray, K: int) -> FimResult:
    w = np.linalg.eigvalsh(J)
    wmax = max(abs(w).max(), 1e-300)
    cond = float(wmax / max(w.min(), 1e-300 * wmax)) if w.min() > 0 else np.inf
    singular = cond > SINGULAR_COND
    ct, cr = crb_values_from_fim(J, K, singular)
    return FimResult(J, ct, cr, singular, cond)


def crb_values_from_fim(J: np.ndarray, K: int, singular: bool = False):
    if singular:
        Jinv = np.linalg.pinv(J, rcond=1e-12, hermitian=True)
    else:
        Jinv = np.linalg.inv(J)
    d = np.diag(Jinv)
    return d[:K] * np.rad2deg(1.0) ** 2, d[K:2 * K].copy()


def crb_values(fim: FimResult, K: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-target CRB of DoA (deg^2) and range (m^2).

    Raises:
        np.linalg.LinAlgError: if the FIM was flagged singular.
    """
    if fim.singular:
        raise np.linalg.LinAlgError(f'FIM is singular (cond {fim.cond:.3e})')
    K = fim.n_targets if K is None else K
    return fim.crb_theta[:K], fim.crb_range[:K]


def fim_from_matrix(J: np.ndarray) -> FimResult:
    """Wrap an externally built FIM (angles in radians)."""
    J = np.asarray(J, dtype=float)
    return _finish(0.5 * (J + J.T), (J.shape[0] - 1) // 3)
