import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdca.harness import (ConfigError, ScenarioConfig, TrialResult, UndefinedMetricError,
                          build_scene, config_from_dict, load_config, mape, match_estimates,
                          powers_and_noise, rmse, run_monte_carlo, run_pipeline, search_grids,
                          write_rmse_csv)


def _trial(true_t, true_r, est_t, est_r, ok=True):
    r = TrialResult(0, 'danm', np.asarray(true_t, float), np.asarray(true_r, float))
    r.est_thetas, r.est_ranges, r.ok = np.asarray(est_t, float), np.asarray(est_r, float), ok
    return r


def test_rmse_example():
    res = [_trial([10, 20], [100, 200], [11, 20], [100, 203]), _trial([10, 20], [100, 200], [10, 19], [104, 200])]
    assert rmse(res, 'theta') == pytest.approx(np.sqrt(2 / 4))
    assert rmse(res, 'range') == pytest.approx(np.sqrt(25 / 4))


def test_failed_trials_excluded():
    res = [_trial([10], [100], [11], [100]), _trial([10], [100], [50], [900], ok=False)]
    assert rmse(res, 'theta') == pytest.approx(1.0)
    assert np.isnan(rmse([res[1]], 'theta'))


def test_mape_example_and_undefined():
    res = [_trial([10, -20], [100, 300], [11, -18], [110, 300])]
    assert mape(res, 'theta') == pytest.approx(100 * 3 / 30)
    assert mape(res, 'range') == pytest.approx(100 * 10 / 400)
    with pytest.raises(UndefinedMetricError):
        mape([_trial([0.0], [100], [1.0], [100])], 'theta')


def test_match_permutation():
    a = match_estimates([20.0, 10.0], [2000.0, 1000.0], [10.0, 20.0], [1000.0, 2000.0])
    assert a.est_idx.tolist() == [1, 0] and a.truth_idx.tolist() == [0, 1]
    assert a.cost == 0


@given(st.integers(0, 1000), st.integers(1, 8))
@settings(max_examples=30)
def test_match_recovers_shuffle(seed, K):
    rng = np.random.default_rng(seed)
    th = rng.uniform(-60, 60, K)
    r = rng.uniform(0, 5000, K)
    perm = rng.permutation(K)
    a = match_estimates(th[perm], r[perm], th, r)
    np.testing.assert_array_equal(perm[a.est_idx], a.truth_idx)


def test_match_unequal_counts():
    a = match_estimates([10.0, 50.0, 11.0], [100.0, 900.0, 100.0], [10.0], [100.0])
    assert a.est_idx.tolist() == [0]
    assert a.unmatched_est.tolist() == [1, 2]


def test_greedy_above_limit():
    K = 120
    th = np.linspace(-60, 60, K)
    r = np.full(K, 1000.0)
    a = match_estimates(th[::-1], r, th, r)
    np.testing.assert_array_equal(a.est_idx, np.arange(K)[::-1])


def test_snr_conventions():
    cfg = config_from_dict({'scene': {'preset': 'grid49', 'snr_db': 10}})
    p, n = powers_and_noise(cfg, 49)
    assert p.sum() == pytest.approx(1.0) and n == pytest.approx(0.1)
    cfg = config_from_dict({'scene': {'preset': 'grid49', 'snr_db': 10, 'snr_mode': 'per_target'}})
    p, n = powers_and_noise(cfg, 49)
    assert np.all(p == 1.0) and n == pytest.approx(0.1)


def test_presets_and_jitter():
    cfg = config_from_dict({'scene': {'preset': 'grid63'}})
    sc = build_scene(cfg, 0)
    assert sc.n_targets == 63
    assert sorted(set(np.round(sc.ranges))) == list(np.linspace(500, 4500, 9))
    cfg = config_from_dict({'scene': {'preset': 'single', 'theta_jitter': 1.0, 'range_jitter': 10.0}})
    a = build_scene(cfg, 1, np.random.default_rng(1))
    b = build_scene(cfg, 1, np.random.default_rng(1))
    assert a.thetas[0] == b.thetas[0] != 30.0


@pytest.mark.parametrize('raw', [{'bogus': {}}, {'scene': {'nope': 1}}, {'method': {'name': 'x'}},
                                 {'scene': {'snr_mode': 'avg'}}, {'scene': {'thetas': [1.0], 'ranges': []}},
                                 {'mc': {'trials': 0}}, {'mc': {'methods': ['sst', 'foo']}},
                                 {'grids': {'theta_step': 0}}])
def test_config_rejects(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_load_shipped_configs():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / 'configs'
    for name in ('single', 'grid49', 'grid63'):
        cfg = load_config(root / f'{name}.toml')
        assert cfg.scene.preset == name


def test_search_grid_defaults():
    cfg = ScenarioConfig()
    tg, rg = search_grids(cfg, cfg.build_layout())
    assert tg[0] == -70 and tg[-1] == pytest.approx(70)
    assert rg[-1] < cfg.build_layout().max_range


def test_pipeline_sst_high_snr():
    cfg = config_from_dict({'scene': {'preset': 'single', 'snr_db': 30, 'snapshots': 200}})
    res = run_pipeline(cfg, 3, 'sst')
    assert res.ok
    assert abs(res.theta_errors[0]) < 0.05 and abs(res.range_errors[0]) < 2


def test_pipeline_records_under_resolved():
    cfg = config_from_dict({'scene': {'preset': 'grid63', 'snr_db': 15, 'snapshots': 400}})
    res = run_pipeline(cfg, 1, 'sst')
    assert not res.ok and 'under-resolved' in res.failure
    assert res.fraction_within(2, 100) == 0.0


def test_monte_carlo_seeding_and_csv(tmp_path):
    cfg = config_from_dict({'scene': {'preset': 'single', 'snapshots': 50, 'theta_jitter': 0.5},
                            'mc': {'trials': 3, 'snr_list': [10.0, 20.0], 'methods': ['sst']}})
    rep = run_monte_carlo(cfg, base_seed=11)
    assert [t.seed for t in rep.trials[(10.0, 'sst')]] == [11, 12, 13]
    # same seed, same jitter at every SNR
    np.testing.assert_array_equal(rep.trials[(10.0, 'sst')][0].true_thetas,
                                  rep.trials[(20.0, 'sst')][0].true_thetas)
    assert rep.row(20.0, 'sst').rmse_theta < rep.row(10.0, 'sst').rmse_theta
    write_rmse_csv(rep, tmp_path / 'r.csv')
    lines = (tmp_path / 'r.csv').read_text().splitlines()
    assert lines[0].startswith('snr_db,method,rmse_theta_deg')
    assert len(lines) == 3
