"""Closed-form ADMM for the two-Toeplitz-block PSD program shared by DANM and CRM.

The solver minimizes

    2 tr[W_p T(z_p)] + 2 tr[W_f T(z_f)] + mu ||X o B - X~||_F^2

subject to ``[[T(z_p), X], [X^H, T(z_f)]] >= 0`` and, when ``fit_bound`` is
set, the spectral-norm bound ``||X o B - X~||_2 <= fit_bound`` written as a
second PSD block ``[[eta I, X o B - X~], [(.)^H, eta I]] >= 0``. Both PSD
blocks are split off as auxiliary variables ``C`` with multipliers ``R`` and
every block of the augmented Lagrangian is minimized in closed form.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .sdp_core import hermitian_part, psd_project, toeplitz_embed, toeplitz_project

log = logging.getLogger(__name__)


class AdmmDivergenceError(RuntimeError):
    def __init__(self, iteration: int, residual: float):
        super().__init__(f'ADMM diverged at iteration {iteration} (residual {residual:.3e})')
        self.iteration = iteration
        self.residual = residual


@dataclass(frozen=True)
class AdmmConfig:
    """Penalty, stopping and data-fit settings.

    ``primal_tol`` and ``dual_tol`` are relative to ``||X~||_F``.
    ``mu`` weighs the squared-Frobenius data fit; ``fit_bound`` enables the
    optional spectral-norm fit block.
    """

    rho: float = 1.0
    mu: float = 50.0
    max_iters: int = 2000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-6
    adaptive_rho: bool = True
    adapt_until: int = 500
    fit_bound: float | None = None
    relax: float = 1.0
    trace: bool = False

    def __post_init__(self):
        if self.rho <= 0 or self.max_iters < 1 or self.primal_tol <= 0 or self.dual_tol <= 0:
            raise ValueError('ADMM settings must be positive')
        if self.mu < 0:
            raise ValueError('mu must be nonnegative')
        if not 0.0 < self.relax < 2.0:
            raise ValueError('relax must lie in (0, 2)')
        if self.fit_bound is not None and self.fit_bound <= 0:
            raise ValueError('fit_bound must be positive')


@dataclass
class AdmmState:
    z_p: np.ndarray
    z_f: np.ndarray
    xv: np.ndarray
    c_und: np.ndarray
    r_und: np.ndarray
    c_bar: np.ndarray | None = None
    r_bar: np.ndarray | None = None
    rho: float = 1.0
    iter: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.z_p)

    @property
    def t_p(self) -> np.ndarray:
        return toeplitz_embed(self.z_p)

    @property
    def t_f(self) -> np.ndarray:
        return toeplitz_embed(self.z_f)

    def copy(self) -> AdmmState:
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return replace(self, z_p=self.z_p.copy(), z_f=self.z_f.copy(), xv=self.xv.copy(),
                       c_und=self.c_und.copy(), r_und=self.r_und.copy(),
                       c_bar=cp(self.c_bar), r_bar=cp(self.r_bar), history=list(self.history))


def zero_state(dim: int, rho: float = 1.0, with_bound: bool = False) -> AdmmState:
    z = np.zeros(dim, dtype=complex)
    big = np.zeros((2 * dim, 2 * dim), dtype=complex)
    return AdmmState(z.copy(), z.copy(), np.zeros((dim, dim), dtype=complex),
                     big.copy(), big.copy(),
                     big.copy() if with_bound else None,
                     big.copy() if with_bound else None, rho)


def structure_block(state: AdmmState) -> np.ndarray:
    """``[[T(z_p), X], [X^H, T(z_f)]]``."""
    n = state.dim
    E = np.empty((2 * n, 2 * n), dtype=complex)
    E[:n, :n] = toeplitz_embed(state.z_p)
    E[:n, n:] = state.xv
    E[n:, :n] = state.xv.conj().T
    E[n:, n:] = toeplitz_embed(state.z_f)
    return E


def fit_block(xv: np.ndarray, xv_tilde: np.ndarray, mask: np.ndarray, bound: float) -> np.ndarray:
    """``[[eta I, X o B - X~], [(X o B - X~)^H, eta I]]``."""
    n = xv.shape[0]
    Y = xv * mask - xv_tilde
    D = np.empty((2 * n, 2 * n), dtype=complex)
    D[:n, :n] = bound * np.eye(n)
    D[:n, n:] = Y
    D[n:, :n] = Y.conj().T
    D[n:, n:] = bound * np.eye(n)
    return D


def augmented_lagrangian(state: AdmmState, w_p, w_f, xv_tilde, mask, cfg: AdmmConfig) -> float:
    """Value of the augmented Lagrangian (constants in ``W`` dropped)."""
    rho = state.rho
    val = 2.0 * np.real(np.vdot(w_p, toeplitz_embed(state.z_p)))
    val += 2.0 * np.real(np.vdot(w_f, toeplitz_embed(state.z_f)))
    val += cfg.mu * np.linalg.norm(state.xv * mask - xv_tilde) ** 2
    E = structure_block(state)
    val += 0.5 * rho * np.linalg.norm(state.c_und - E + state.r_und / rho) ** 2
    val -= 0.5 / rho * np.linalg.norm(state.r_und) ** 2
    if cfg.fit_bound is not None:
        D = fit_block(state.xv, xv_tilde, mask, cfg.fit_bound)
        val += 0.5 * rho * np.linalg.norm(state.c_bar - D + state.r_bar / rho) ** 2
        val -= 0.5 / rho * np.linalg.norm(state.r_bar) ** 2
    return float(val)


def objective(state: AdmmState, w_p, w_f, xv_tilde, mask, cfg: AdmmConfig) -> float:
    val = 2.0 * np.real(np.vdot(w_p, toeplitz_embed(state.z_p)))
    val += 2.0 * np.real(np.vdot(w_f, toeplitz_embed(state.z_f)))
    val += cfg.mu * np.linalg.norm(state.xv * mask - xv_tilde) ** 2
    return float(val)


def update_toeplitz_block(side: str, state: AdmmState, weights: np.ndarray) -> np.ndarray:
    """Exact minimizer of the augmented Lagrangian over ``z_p`` or ``z_f``.

    Averages each diagonal of ``C + R / rho - 2 W / rho`` in the matching
    diagonal block.
    """
    n = state.dim
    sl = slice(0, n) if side == 'p' else slice(n, 2 * n)
    target = state.c_und[sl, sl] + state.r_und[sl, sl] / state.rho - 2.0 * weights / state.rho
    return toeplitz_project(target)


def update_xv_block(state: AdmmState, xv_tilde: np.ndarray, mask: np.ndarray,
                    cfg: AdmmConfig) -> np.ndarray:
    """Exact minimizer of the augmented Lagrangian over the coarray matrix.

    Off the mask only the structure block pulls on ``X``. On the mask the
    data fit and, when enabled, the fit block join in with weights ``mu``
    and ``rho``.
    """
    n = state.dim
    rho = state.rho
    M = state.c_und + state.r_und / rho
    h = 0.5 * (M[:n, n:] + M[n:, :n].conj().T)
    num = rho * h + cfg.mu * xv_tilde * mask
    den = rho + cfg.mu * mask
    if cfg.fit_bound is not None:
        Mb = state.c_bar + state.r_bar / rho
        g = 0.5 * (Mb[:n, n:] + Mb[n:, :n].conj().T)
        num = num + rho * mask * (xv_tilde + g)
        den = den + rho * mask
    return num / den


def _blocks(state: AdmmState, xv_tilde, mask, cfg: AdmmConfig):
    E = structure_block(state)
    D = fit_block(state.xv, xv_tilde, mask, cfg.fit_bound) if cfg.fit_bound is not None else None
    return E, D


def update_psd_blocks(state: AdmmState, xv_tilde: np.ndarray, mask: np.ndarray,
                      cfg: AdmmConfig, blocks=None) -> tuple[np.ndarray | None, np.ndarray]:
    """PSD projections of both constraint blocks shifted by their multipliers.

    ``blocks`` optionally supplies precomputed ``(structure, fit)`` blocks.
    """
    E, D = blocks if blocks is not None else _blocks(state, xv_tilde, mask, cfg)
    rho = state.rho
    c_bar = psd_project(D - state.r_bar / rho) if D is not None else None
    return c_bar, psd_project(E - state.r_und / rho)


def update_duals(state: AdmmState, xv_tilde: np.ndarray, mask: np.ndarray,
                 cfg: AdmmConfig, blocks=None) -> tuple[np.ndarray | None, np.ndarray]:
    """Ascent step ``R <- R + rho (C - constraint block)``."""
    E, D = blocks if blocks is not None else _blocks(state, xv_tilde, mask, cfg)
    rho = state.rho
    r_bar = hermitian_part(state.r_bar + rho * (state.c_bar - D)) if D is not None else None
    return r_bar, hermitian_part(state.r_und + rho * (state.c_und - E))


def admm_solve(weights_wp: np.ndarray, weights_wf: np.ndarray, xv_tilde: np.ndarray,
               mask: np.ndarray, cfg: AdmmConfig, init: AdmmState | None = None) -> AdmmState:
    """Run the seven-step ADMM until both residuals fall below tolerance.

    ``weights_wp``/``weights_wf`` enter the objective as ``2 tr[W T(z)]``.
    A warm start ``init`` is copied, never mutated. With ``relax != 1`` the
    PSD and dual steps see ``relax * block + (1 - relax) * C`` (standard
    over-relaxation).
    """
    n = xv_tilde.shape[0]
    mask = np.asarray(mask, dtype=float)
    xv_tilde = np.asarray(xv_tilde, dtype=complex)
    w_p = hermitian_part(np.asarray(weights_wp, dtype=complex))
    w_f = hermitian_part(np.asarray(weights_wf, dtype=complex))
    with_bound = cfg.fit_bound is not None
    if init is None:
        state = zero_state(n, cfg.rho, with_bound)
    else:
        state = init.copy()
        state.iter = 0
        state.converged = False
        state.history = []
        if with_bound and state.c_bar is None:
            state.c_bar = np.zeros((2 * n, 2 * n), dtype=complex)
            state.r_bar = np.zeros((2 * n, 2 * n), dtype=complex)

    scale = max(np.linalg.norm(xv_tilde), np.linalg.norm(w_p) + np.linalg.norm(w_f), 1e-12)
    tol_p = cfg.primal_tol * scale
    tol_d = cfg.dual_tol * scale
    a = cfg.relax
    prev_E, prev_D = _blocks(state, xv_tilde, mask, cfg)
    first_res = None
    primal = dual = np.inf

    for it in range(1, cfg.max_iters + 1):
        state.z_p = update_toeplitz_block('p', state, w_p)
        state.z_f = update_toeplitz_block('f', state, w_f)
        state.xv = update_xv_block(state, xv_tilde, mask, cfg)
        E, D = _blocks(state, xv_tilde, mask, cfg)
        if a != 1.0:
            Eh = a * E + (1.0 - a) * state.c_und
            Dh = a * D + (1.0 - a) * state.c_bar if D is not None else None
        else:
            Eh, Dh = E, D
        try:
            state.c_bar, state.c_und = update_psd_blocks(state, xv_tilde, mask, cfg, (Eh, Dh))
        except np.linalg.LinAlgError as exc:  # eigh on non-finite input
            raise AdmmDivergenceError(it, float('nan')) from exc
        state.r_bar, state.r_und = update_duals(state, xv_tilde, mask, cfg, (Eh, Dh))
        state.iter = it

        primal = np.linalg.norm(state.c_und - E)
        dual = state.rho * np.linalg.norm(E - prev_E)
        if D is not None:
            primal = np.hypot(primal, np.linalg.norm(state.c_bar - D))
            dual = np.hypot(dual, state.rho * np.linalg.norm(D - prev_D))
        prev_E, prev_D = E, D
        if cfg.trace:
            state.history.append((it, objective(state, w_p, w_f, xv_tilde, mask, cfg),
                                  primal, dual, state.rho))
        res = max(primal, dual)
        if first_res is None:
            first_res = max(res, 1e-12 * scale, 1e-300)
        elif res > 1e6 * first_res or not np.isfinite(res):
            raise AdmmDivergenceError(it, res)
        if primal < tol_p and dual < tol_d:
            state.converged = True
            break
        if cfg.adaptive_rho and it <= cfg.adapt_until and it % 10 == 0:
            if primal > 10.0 * dual:
                state.rho *= 2.0
            elif dual > 10.0 * primal:
                state.rho *= 0.5
    if not state.converged:
        log.debug('ADMM stopped at max_iters=%d (primal %.2e, dual %.2e)',
                  cfg.max_iters, primal, dual)
    return state


def write_trace_csv(state: AdmmState, path) -> None:
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['iter', 'objective', 'primal_res', 'dual_res', 'rho'])
        for row in state.history:
            w.writerow([row[0]] + [f'{v:.12g}' for v in row[1:]])
