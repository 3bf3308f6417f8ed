"""Command line entry point: ``fdca <subcommand> [options]``."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import harness
from .admm import write_trace_csv
from .array_model import sample_covariance, simulate_snapshots
from .coarray import derive_virtual_signal, difference_set, table_counts
from .crb import coarray_fim
from .spectral import UnderResolvedError, write_spectrum_csv


def _load(config: str | None, seed: int | None) -> harness.ScenarioConfig:
    cfg = harness.load_config(config) if config else harness.ScenarioConfig()
    if seed is not None:
        cfg = replace(cfg, scene=replace(cfg.scene, seed=seed))
    return cfg


def _outdir(out: str) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


config_opt = click.option('--config', 'config', type=click.Path(exists=True, dir_okay=False),
                          help='TOML scenario file.')
seed_opt = click.option('--seed', type=click.IntRange(min=0), default=None,
                        help='Base seed (overrides [scene] seed).')
out_opt = click.option('--out', 'out', default='out', show_default=True, help='Output directory.')
method_opt = click.option('--method', type=click.Choice(harness.METHODS), default=None,
                          help='Override [method] name.')


@click.group()
@click.option('-v', '--verbose', count=True)
def main(verbose):
    """Joint DoA-range estimation with frequency diverse coprime arrays."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


@main.command('coarray-info')
@config_opt
@out_opt
def coarray_info(config, out):
    """Print lags, holes and per-model DoF counts."""
    cfg = _load(config, None)
    layout = cfg.build_layout()
    ds = difference_set(layout)
    click.echo(f'integer set: {layout.integer_set.tolist()}')
    click.echo(f'L = {ds.max_lag}, unique lags = {ds.n_lags}, U = {ds.consecutive_u}')
    click.echo(f'holes: {ds.holes.tolist()}')
    rows = table_counts(layout)
    for name, (elems, dof) in rows.items():
        click.echo(f'{name:>12}: {elems} elements per axis, {dof} DoF')
    if config:
        p = _outdir(out) / 'coarray.csv'
        with open(p, 'w', newline='') as fh:
            w = csv.writer(fh, lineterminator='\n')
            w.writerow(['model', 'elements', 'dof'])
            for name, (elems, dof) in rows.items():
                w.writerow([name, elems, dof])


@main.command()
@config_opt
@seed_opt
@out_opt
def simulate(config, seed, out):
    """Draw snapshots and write the covariance-derived coarray signal."""
    cfg = _load(config, seed)
    layout = cfg.build_layout()
    s = cfg.scene.seed
    rng = np.random.default_rng(s)
    scene = harness.build_scene(cfg, s, rng)
    x = simulate_snapshots(layout, scene, rng)
    vs = derive_virtual_signal(layout, sample_covariance(x))
    d = _outdir(out)
    np.save(d / 'snapshots.npy', x)
    with open(d / 'targets.csv', 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['k', 'theta_deg', 'range_m', 'power'])
        for k, t in enumerate(scene.targets):
            w.writerow([k, f'{t.theta:.6f}', f'{t.range:.6f}', f'{t.power:.6g}'])
    L = vs.max_lag
    with open(d / 'virtual_signal.csv', 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['l1', 'l2', 're', 'im', 'observed'])
        for a in range(vs.dim):
            for b in range(vs.dim):
                v = vs.xv[a, b]
                w.writerow([a - L, b - L, f'{v.real:.12g}', f'{v.imag:.12g}', int(vs.mask[a, b])])
    click.echo(f'{scene.n_targets} targets, noise power {scene.noise_power:.4g}, '
               f'{scene.snapshots} snapshots -> {d}')


@main.command()
@config_opt
@seed_opt
@out_opt
@method_opt
@click.option('--trace', is_flag=True, help='Write solver traces.')
def estimate(config, seed, out, method, trace):
    """Run one trial and write estimates, spectrum and optional traces."""
    cfg = _load(config, seed)
    if method:
        cfg = cfg.with_method(method)
    if trace:
        cfg = replace(cfg, method=replace(cfg.method, trace=True))
    layout = cfg.build_layout()
    s = cfg.scene.seed
    rng = np.random.default_rng(s)
    scene = harness.build_scene(cfg, s, rng)
    R = sample_covariance(simulate_snapshots(layout, scene, rng))
    d = _outdir(out)
    try:
        est, spec, diag, solver = harness.estimate_from_covariance(
            cfg, layout, R, scene.n_targets, s)
    except UnderResolvedError as exc:
        raise click.ClickException(str(exc)) from exc
    a = harness.match_estimates(est.thetas, est.ranges, scene.thetas, scene.ranges)
    res = harness.TrialResult(s, cfg.method.name, scene.thetas, scene.ranges)
    res.est_thetas = np.full(scene.n_targets, np.nan)
    res.est_ranges = np.full(scene.n_targets, np.nan)
    res.est_thetas[a.truth_idx] = est.thetas[a.est_idx]
    res.est_ranges[a.truth_idx] = est.ranges[a.est_idx]
    harness.write_estimates_csv(res, d / 'estimates.csv')
    write_spectrum_csv(spec, d / 'spectrum.csv')
    if trace and solver is not None:
        write_trace_csv(solver.state, d / 'admm_trace.csv')
        if hasattr(solver, 'trace'):
            solver.trace.write_csv(d / 'crm_trace.csv')
    click.echo(f'method={cfg.method.name} rmse_theta={harness.rmse([res], "theta"):.4g} deg '
               f'rmse_range={harness.rmse([res], "range"):.4g} m {diag}')


@main.command()
@config_opt
@seed_opt
@out_opt
@method_opt
def montecarlo(config, seed, out, method):
    """Seeded Monte Carlo sweep over [mc] snr_list, written to rmse.csv."""
    cfg = _load(config, seed)
    methods = (method,) if method else None
    report = harness.run_monte_carlo(cfg, methods=methods)
    d = _outdir(out)
    harness.write_rmse_csv(report, d / 'rmse.csv')
    for row in report.rows:
        click.echo(f'snr={row.snr_db:g} {row.method}: rmse_theta={row.rmse_theta:.4g} '
                   f'rmse_range={row.rmse_range:.4g} ok={row.trials_ok} failed={row.trials_failed}')


@main.command()
@config_opt
@out_opt
def crb(config, out):
    """Coarray CRB of the nominal scene, written to crb.csv."""
    cfg = _load(config, None)
    scene = harness.nominal_scene(cfg)
    fim = coarray_fim(cfg.build_layout(), scene)
    if fim.singular:
        click.echo(f'warning: FIM singular (cond {fim.cond:.3e}), pseudo-inverse used', err=True)
    d = _outdir(out)
    with open(d / 'crb.csv', 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['k', 'theta_deg', 'range_m', 'crb_theta_deg2', 'crb_range_m2'])
        for k in range(scene.n_targets):
            w.writerow([k, f'{scene.thetas[k]:.6f}', f'{scene.ranges[k]:.6f}',
                        f'{fim.crb_theta[k]:.10g}', f'{fim.crb_range[k]:.10g}'])
    click.echo(f'mean sqrt CRB: theta {np.sqrt(fim.crb_theta.mean()):.4g} deg, '
               f'range {np.sqrt(fim.crb_range.mean()):.4g} m')


if __name__ == '__main__':
    main()
