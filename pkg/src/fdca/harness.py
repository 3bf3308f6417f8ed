"""Scenario configuration, end-to-end pipelines and Monte Carlo aggregation."""

from __future__ import annotations

import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .admm import AdmmConfig, AdmmDivergenceError
from .array_model import (CoprimeLayout, TargetScene, build_coprime_layout, make_scene,
                          sample_covariance, simulate_snapshots)
from .coarray import consecutive_submatrix, derive_virtual_signal, difference_set
from .crb import coarray_fim
from .crm import CrmConfig, solve_crm
from .danm import DanmConfig, solve_danm
from .spectral import (DEFAULT_DYNAMIC_RANGE_DB, UnderResolvedError, music_spectrum_2d,
                       pick_peaks, polish_peaks, spatial_smooth_2d)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

METHODS = ('sst', 'danm', 'crm')
EXACT_ASSIGNMENT_MAX = 100
RMSE_HEADER = ['snr_db', 'method', 'rmse_theta_deg', 'rmse_range_m', 'crb_sqrt_theta_deg',
               'crb_sqrt_range_m', 'trials_ok', 'trials_failed']


class ConfigError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class LayoutSection:
    M: int = 3
    N: int = 5
    d: float = 0.015
    f0: float = 10e9
    df: float = 30e3
    c: float = 299_792_458.0


@dataclass(frozen=True)
class SceneSection:
    """Targets and noise.

    ``preset`` is one of ``single``, ``grid49``, ``grid63`` or empty for the
    explicit ``thetas``/``ranges``. ``snr_mode = 'total'`` sets
    ``noise = sum(p) / 10^(snr/10)`` with unit total power, ``'per_target'``
    uses unit power per target and ``noise = 1 / 10^(snr/10)``.
    ``theta_jitter``/``range_jitter`` draw fresh Gaussian offsets per trial.
    """

    preset: str = ''
    thetas: tuple = ()
    ranges: tuple = ()
    snr_db: float = 20.0
    snr_mode: str = 'total'
    noise_power: float | None = None
    snapshots: int = 200
    seed: int = 0
    theta_jitter: float = 0.0
    range_jitter: float = 0.0


@dataclass(frozen=True)
class MethodSection:
    name: str = 'crm'
    mu: float = 50.0
    gamma_p: float = 0.6
    gamma_f: float = 0.4
    epsilon: float = 1e-4
    max_outer: int = 30
    inner_max_iters: int | None = None
    rho: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-6
    trace: bool = False


@dataclass(frozen=True)
class GridSection:
    theta_min: float = -70.0
    theta_max: float = 70.0
    theta_step: float = 0.1
    range_min: float = 0.0
    range_max: float | None = None  # defaults to the unambiguous range
    range_step: float = 5.0
    refine: bool = True
    polish: bool = True
    dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB


@dataclass(frozen=True)
class McSection:
    trials: int = 100
    snr_list: tuple = (0.0, 10.0, 20.0, 30.0)
    methods: tuple = ('danm', 'crm')
    with_crb: bool = True
    workers: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    layout: LayoutSection = field(default_factory=LayoutSection)
    scene: SceneSection = field(default_factory=SceneSection)
    method: MethodSection = field(default_factory=MethodSection)
    grids: GridSection = field(default_factory=GridSection)
    mc: McSection = field(default_factory=McSection)

    def build_layout(self) -> CoprimeLayout:
        lo = self.layout
        return build_coprime_layout(lo.M, lo.N, lo.d, lo.f0, lo.df, lo.c)

    def with_method(self, name: str) -> ScenarioConfig:
        return replace(self, method=replace(self.method, name=name))

    def with_snr(self, snr_db: float) -> ScenarioConfig:
        return replace(self, scene=replace(self.scene, snr_db=float(snr_db), noise_power=None))


PRESETS = {
    'single': ([30.0], [2500.0]),
    'grid49': (np.repeat(np.linspace(-60, 60, 7), 7), np.tile(np.linspace(400, 4600, 7), 7)),
    'grid63': (np.repeat(np.linspace(-60, 60, 7), 9), np.tile(np.linspace(500, 4500, 9), 7)),
}


def preset_targets(name: str) -> tuple[np.ndarray, np.ndarray]:
    if name not in PRESETS:
        raise ConfigError(f'unknown scene preset {name!r}')
    th, r = PRESETS[name]
    return np.asarray(th, dtype=float), np.asarray(r, dtype=float)


def _section(cls, raw: dict, name: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f'unknown keys in [{name}]: {sorted(unknown)}')
    for k, v in raw.items():
        if isinstance(v, list):
            raw[k] = tuple(v)
    return cls(**raw)


def config_from_dict(raw: dict) -> ScenarioConfig:
    unknown = set(raw) - {'layout', 'scene', 'method', 'grids', 'mc'}
    if unknown:
        raise ConfigError(f'unknown sections: {sorted(unknown)}')
    cfg = ScenarioConfig(
        _section(LayoutSection, raw.get('layout'), 'layout'),
        _section(SceneSection, raw.get('scene'), 'scene'),
        _section(MethodSection, raw.get('method'), 'method'),
        _section(GridSection, raw.get('grids'), 'grids'),
        _section(McSection, raw.get('mc'), 'mc'),
    )
    validate_config(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, 'rb') as fh:
        return config_from_dict(tomllib.load(fh))


def validate_config(cfg: ScenarioConfig) -> None:
    if cfg.method.name not in METHODS:
        raise ConfigError(f'method must be one of {METHODS}')
    for m in cfg.mc.methods:
        if m not in METHODS:
            raise ConfigError(f'unknown method {m!r} in [mc]')
    if cfg.scene.snr_mode not in ('total', 'per_target'):
        raise ConfigError("snr_mode must be 'total' or 'per_target'")
    if not cfg.scene.preset and len(cfg.scene.thetas) != len(cfg.scene.ranges):
        raise ConfigError('thetas and ranges differ in length')
    if cfg.mc.trials < 1:
        raise ConfigError('need at least one trial')
    if cfg.grids.theta_step <= 0 or cfg.grids.range_step <= 0:
        raise ConfigError('grid steps must be positive')


def nominal_targets(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.scene.preset:
        return preset_targets(cfg.scene.preset)
    return (np.asarray(cfg.scene.thetas, dtype=float), np.asarray(cfg.scene.ranges, dtype=float))


def powers_and_noise(cfg: ScenarioConfig, K: int) -> tuple[np.ndarray, float]:
    sc = cfg.scene
    if sc.snr_mode == 'total':
        p = np.full(K, 1.0 / K)
    else:
        p = np.ones(K)
    if sc.noise_power is not None:
        return p, float(sc.noise_power)
    ref = p.sum() if sc.snr_mode == 'total' else 1.0
    return p, float(ref / 10.0 ** (sc.snr_db / 10.0))


def build_scene(cfg: ScenarioConfig, seed: int, rng: np.random.Generator | None = None) -> TargetScene:
    """Scene for one trial; jittered targets are drawn from ``rng``."""
    th, r = nominal_targets(cfg)
    if rng is not None and cfg.scene.theta_jitter > 0:
        th = th + cfg.scene.theta_jitter * rng.standard_normal(th.shape)
    if rng is not None and cfg.scene.range_jitter > 0:
        r = r + cfg.scene.range_jitter * rng.standard_normal(r.shape)
    p, noise = powers_and_noise(cfg, len(th))
    return make_scene(th, r, p, noise, cfg.scene.snapshots, seed)


def nominal_scene(cfg: ScenarioConfig) -> TargetScene:
    return build_scene(cfg, cfg.scene.seed)


def search_grids(cfg: ScenarioConfig, layout: CoprimeLayout) -> tuple[np.ndarray, np.ndarray]:
    g = cfg.grids
    thetas = np.arange(g.theta_min, g.theta_max + 0.5 * g.theta_step, g.theta_step)
    rmax = layout.max_range if g.range_max is None else g.range_max
    ranges = np.arange(g.range_min, rmax, g.range_step)
    return thetas, ranges


def admm_config(cfg: ScenarioConfig) -> AdmmConfig:
    m = cfg.method
    return AdmmConfig(rho=m.rho, mu=m.mu, max_iters=m.max_iters, primal_tol=m.tol,
                      dual_tol=m.tol, trace=m.trace)


def crm_config(cfg: ScenarioConfig, seed: int) -> CrmConfig:
    m = cfg.method
    return CrmConfig(gamma_p=m.gamma_p, gamma_f=m.gamma_f, mu=m.mu, epsilon=m.epsilon,
                     max_outer=m.max_outer, seed=seed, inner_max_iters=m.inner_max_iters,
                     admm=admm_config(cfg))


@dataclass
class Assignment:
    est_idx: np.ndarray
    truth_idx: np.ndarray
    cost: float
    unmatched_est: np.ndarray
    unmatched_truth: np.ndarray


def _cost_matrix(est_t, est_r, tru_t, tru_r, theta_scale=1.0, range_scale=50.0):
    return (np.subtract.outer(est_t, tru_t) / theta_scale) ** 2 + \
        (np.subtract.outer(est_r, tru_r) / range_scale) ** 2


def match_estimates(est_thetas, est_ranges, true_thetas, true_ranges) -> Assignment:
    """Minimum-cost pairing under ``(dtheta / 1 deg)^2 + (dr / 50 m)^2``.

    Exact assignment up to ``EXACT_ASSIGNMENT_MAX`` targets, greedy beyond.
    With unequal counts the surplus on either side is reported unmatched.
    """
    C = _cost_matrix(np.asarray(est_thetas, float), np.asarray(est_ranges, float),
                     np.asarray(true_thetas, float), np.asarray(true_ranges, float))
    ne, nt = C.shape
    if max(ne, nt) <= EXACT_ASSIGNMENT_MAX:
        ei, ti = linear_sum_assignment(C)
    else:
        ei, ti = _greedy_assignment(C)
    order = np.argsort(ti, kind='stable')
    ei, ti = ei[order], ti[order]
    return Assignment(ei, ti, float(C[ei, ti].sum()),
                      np.setdiff1d(np.arange(ne), ei), np.setdiff1d(np.arange(nt), ti))


def _greedy_assignment(C: np.ndarray):
    flat = np.argsort(C, axis=None, kind='stable')
    used_e, used_t, ei, ti = set(), set(), [], []
    for f in flat:
        e, t = divmod(int(f), C.shape[1])
        if e in used_e or t in used_t:
            continue
        used_e.add(e)
        used_t.add(t)
        ei.append(e)
        ti.append(t)
        if len(ei) == min(C.shape):
            break
    return np.array(ei, dtype=int), np.array(ti, dtype=int)


@dataclass
class TrialResult:
    seed: int
    method: str
    true_thetas: np.ndarray
    true_ranges: np.ndarray
    est_thetas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    est_ranges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ok: bool = True
    failure: str = ''
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def theta_errors(self) -> np.ndarray:
        """Matched ``theta_hat - theta`` per true target."""
        return self.est_thetas - self.true_thetas

    @property
    def range_errors(self) -> np.ndarray:
        return self.est_ranges - self.true_ranges

    def fraction_within(self, theta_tol: float, range_tol: float) -> float:
        if not self.ok:
            return 0.0
        hit = (np.abs(self.theta_errors) <= theta_tol) & (np.abs(self.range_errors) <= range_tol)
        return float(hit.mean())


def interpolate(method: str, vs, cfg: ScenarioConfig, seed: int):
    """Filled coarray matrix and solver diagnostics for ``danm`` or ``crm``."""
    if method == 'danm':
        res = solve_danm(vs, DanmConfig(mu=cfg.method.mu, admm=admm_config(cfg)))
        return res, {'admm_iters': res.state.iter, 'admm_converged': res.state.converged}
    res = solve_crm(vs, crm_config(cfg, seed))
    return res, {'admm_iters': int(sum(res.trace.admm_iters)), 'crm_outer': res.trace.n_outer,
                 'crm_converged': res.trace.converged}


def estimate_from_covariance(cfg: ScenarioConfig, layout: CoprimeLayout, R: np.ndarray, K: int,
                             seed: int = 0, method: str | None = None):
    """Coarray, optional interpolation, smoothing, MUSIC and peaks.

    Returns ``(estimates, spectrum, diagnostics, solver_result)``.
    """
    method = method or cfg.method.name
    vs = derive_virtual_signal(layout, R)
    diag: dict = {}
    solver = None
    if method == 'sst':
        block = consecutive_submatrix(vs, difference_set(layout))
    else:
        solver, diag = interpolate(method, vs, cfg, seed)
        block = solver.xv_full
    rss = spatial_smooth_2d(block)
    tg, rg = search_grids(cfg, layout)
    spec = music_spectrum_2d(rss, K, tg, rg, layout)
    est = pick_peaks(spec, K, refine=cfg.grids.refine, dynamic_range_db=cfg.grids.dynamic_range_db)
    if cfg.grids.polish:
        est = polish_peaks(est, rss, K, layout, cfg.grids.theta_step, cfg.grids.range_step)
    return est, spec, diag, solver


def run_pipeline(cfg: ScenarioConfig, seed: int, method: str | None = None) -> TrialResult:
    """Simulate one trial and estimate with the configured method.

    Under-resolved spectra and diverged solvers are recorded as failed
    trials rather than raised.
    """
    method = method or cfg.method.name
    t0 = time.perf_counter()
    layout = cfg.build_layout()
    rng = np.random.default_rng(seed)
    scene = build_scene(cfg, seed, rng)
    x = simulate_snapshots(layout, scene, rng)
    R = sample_covariance(x)
    res = TrialResult(seed, method, scene.thetas, scene.ranges)
    try:
        est, _, diag, _ = estimate_from_covariance(cfg, layout, R, scene.n_targets, seed, method)
    except UnderResolvedError as exc:
        res.ok, res.failure = False, f'under-resolved ({exc.found} of {exc.requested} peaks)'
        res.diagnostics = {'peaks_found': exc.found}
    except AdmmDivergenceError as exc:
        res.ok, res.failure = False, f'diverged at iteration {exc.iteration}'
    else:
        a = match_estimates(est.thetas, est.ranges, scene.thetas, scene.ranges)
        th = np.full(scene.n_targets, np.nan)
        rr = np.full(scene.n_targets, np.nan)
        th[a.truth_idx] = est.thetas[a.est_idx]
        rr[a.truth_idx] = est.ranges[a.est_idx]
        res.est_thetas, res.est_ranges = th, rr
        res.diagnostics = diag
    res.wall_time = time.perf_counter() - t0
    return res


def rmse(results, param: str) -> float:
    """Root mean square error over all targets of all successful trials."""
    errs = [getattr(r, f'{param}_errors') for r in results if r.ok]
    if not errs:
        return float('nan')
    e = np.concatenate(errs)
    return float(np.sqrt(np.mean(e ** 2)))


def mape(results, param: str) -> float:
    """Mean absolute percentage error, in percent.

    Raises:
        UndefinedMetricError: if the true parameters sum to zero in magnitude.
    """
    ok = [r for r in results if r.ok]
    if not ok:
        return float('nan')
    num = sum(np.abs(getattr(r, f'{param}_errors')).sum() for r in ok)
    truth = np.abs(getattr(ok[0], 'true_thetas' if param == 'theta' else 'true_ranges')).sum()
    den = len(ok) * truth
    if den == 0:
        raise UndefinedMetricError('MAPE undefined for all-zero true parameters')
    return float(100.0 * num / den)


@dataclass
class McRow:
    snr_db: float
    method: str
    rmse_theta: float
    rmse_range: float
    crb_theta: float
    crb_range: float
    trials_ok: int
    trials_failed: int
    mape_theta: float = float('nan')
    mape_range: float = float('nan')

    def csv_row(self) -> list[str]:
        return [f'{self.snr_db:g}', self.method, f'{self.rmse_theta:.10g}', f'{self.rmse_range:.10g}',
                f'{self.crb_theta:.10g}', f'{self.crb_range:.10g}', str(self.trials_ok),
                str(self.trials_failed)]


@dataclass
class McReport:
    rows: list[McRow]
    trials: dict  # (snr, method) -> list[TrialResult]
    snr_mode: str

    def row(self, snr_db: float, method: str) -> McRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.method == method:
                return r
        raise KeyError((snr_db, method))


def _run_trial(args):
    cfg, seed, method = args
    return run_pipeline(cfg, seed, method)


def sqrt_crb(cfg: ScenarioConfig) -> tuple[float, float]:
    """Root of the target-averaged CRB at the nominal scene."""
    fim = coarray_fim(cfg.build_layout(), nominal_scene(cfg))
    return float(np.sqrt(fim.crb_theta.mean())), float(np.sqrt(fim.crb_range.mean()))


def run_monte_carlo(cfg: ScenarioConfig, base_seed: int | None = None,
                    methods=None, snr_list=None) -> McReport:
    """Seeded trials over the SNR list for every method.

    Trial ``i`` uses seed ``base + i`` for all SNRs and methods, so methods
    see the same noise draws. Results are reduced in a fixed order and are
    independent of ``workers``.
    """
    base = cfg.scene.seed if base_seed is None else int(base_seed)
    methods = tuple(methods or cfg.mc.methods)
    snrs = tuple(cfg.mc.snr_list if snr_list is None else snr_list)
    log.info('SNR convention: %s', cfg.scene.snr_mode)
    jobs = [(cfg.with_snr(s), base + i, m) for s in snrs for m in methods
            for i in range(cfg.mc.trials)]
    if cfg.mc.workers > 1:
        with ProcessPoolExecutor(cfg.mc.workers) as ex:
            out = list(ex.map(_run_trial, jobs, chunksize=4))
    else:
        out = [_run_trial(j) for j in jobs]
    rows, trials = [], {}
    k = 0
    for s in snrs:
        scfg = cfg.with_snr(s)
        crb_t, crb_r = sqrt_crb(scfg) if cfg.mc.with_crb else (float('nan'), float('nan'))
        for m in methods:
            res = out[k:k + cfg.mc.trials]
            k += cfg.mc.trials
            for r in res:
                if not r.ok:
                    log.warning('trial seed=%d method=%s snr=%g failed: %s', r.seed, m, s, r.failure)
            n_ok = sum(r.ok for r in res)
            row = McRow(float(s), m, rmse(res, 'theta'), rmse(res, 'range'), crb_t, crb_r,
                        n_ok, len(res) - n_ok)
            if n_ok:
                row.mape_theta, row.mape_range = _safe_mape(res, 'theta'), _safe_mape(res, 'range')
            rows.append(row)
            trials[(float(s), m)] = res
    return McReport(rows, trials, cfg.scene.snr_mode)


def _safe_mape(res, param):
    try:
        return mape(res, param)
    except UndefinedMetricError:
        return float('nan')


def write_rmse_csv(report: McReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(RMSE_HEADER)
        for row in report.rows:
            w.writerow(row.csv_row())


def write_estimates_csv(result: TrialResult, path) -> None:
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['k', 'theta_true_deg', 'range_true_m', 'theta_hat_deg', 'range_hat_m'])
        for k in range(len(result.true_thetas)):
            th = result.est_thetas[k] if result.ok else float('nan')
            rr = result.est_ranges[k] if result.ok else float('nan')
            w.writerow([k, f'{result.true_thetas[k]:.6f}', f'{result.true_ranges[k]:.6f}',
                        f'{th:.6f}', f'{rr:.6f}'])
