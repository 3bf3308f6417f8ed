import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdca.array_model import build_coprime_layout, make_scene, theoretical_covariance
from fdca.coarray import (brute_force_lags, coarray_matrix, consecutive_submatrix,
                          derive_virtual_signal, difference_set, lag_multiplicity, table_counts)


def test_difference_set_3_5(layout):
    ds = difference_set(layout)
    expected = sorted(set(range(-12, 13)) - {-11, -8, 8, 11})
    assert ds.lags.tolist() == expected
    assert ds.n_lags == 21
    assert ds.holes.tolist() == [-11, -8, 8, 11]
    assert ds.consecutive_u == 7
    assert ds.contains(7) and not ds.contains(8)


def test_table_counts(layout):
    assert table_counts(layout) == {'physical': (7, 48), 'difference': (21, 121),
                                    'consecutive': (15, 63), 'interpolated': (25, 168)}


@given(st.integers(2, 6), st.integers(3, 9))
@settings(max_examples=25)
def test_cross_differences_match_brute_force(M, N):
    from math import gcd
    if M >= N or gcd(M, N) != 1:
        return
    lay = build_coprime_layout(M, N)
    ds = difference_set(lay)
    assert set(ds.lags) <= set(brute_force_lags(lay))
    assert ds.max_lag == M * (N - 1)
    assert ds.lags.tolist() == sorted(-ds.lags)


def test_multiplicity_covers_lags(layout):
    mult = lag_multiplicity(layout)
    assert mult.sum() == 49 ** 2
    L = layout.max_lag
    ds = difference_set(layout)
    seen = np.nonzero(mult.sum(axis=1))[0] - L
    assert set(seen) == set(brute_force_lags(layout))
    # holes of the cross differences are still missing along both axes
    for h in ds.holes:
        assert mult[h + L, :].sum() == 0
        assert mult[:, h + L].sum() == 0


def test_virtual_signal_noiseless(layout):
    th, r, p = [20.0, -35.0], [900.0, 3100.0], [1.0, 0.7]
    sc = make_scene(th, r, p)
    vs = derive_virtual_signal(layout, theoretical_covariance(layout, sc))
    X = coarray_matrix(layout, th, r, p)
    np.testing.assert_allclose(vs.xv[vs.mask], X[vs.mask], atol=1e-12)
    assert np.all(vs.xv[~vs.mask] == 0)
    assert vs.at(0, 0) == pytest.approx(sum(p))


def test_noise_lands_on_zero_lag(layout):
    sc = make_scene([20.0], [900.0], [1.0], noise_power=0.3)
    vs = derive_virtual_signal(layout, theoretical_covariance(layout, sc))
    X = coarray_matrix(layout, [20.0], [900.0], [1.0])
    D = vs.xv - X * vs.mask
    L = layout.max_lag
    assert D[L, L] == pytest.approx(0.3)
    D[L, L] = 0
    assert np.abs(D).max() < 1e-12


def test_virtual_signal_centro_hermitian(layout):
    rng = np.random.default_rng(0)
    G = rng.standard_normal((49, 49)) + 1j * rng.standard_normal((49, 49))
    vs = derive_virtual_signal(layout, G @ G.conj().T)
    np.testing.assert_allclose(vs.xv, vs.xv[::-1, ::-1].conj())


def test_consecutive_block(layout):
    sc = make_scene([10.0], [1200.0])
    vs = derive_virtual_signal(layout, theoretical_covariance(layout, sc))
    B = consecutive_submatrix(vs, difference_set(layout))
    assert B.shape == (15, 15)


def test_wrong_covariance_shape(layout):
    with pytest.raises(ValueError):
        derive_virtual_signal(layout, np.eye(7))


def test_averaging_reduces_variance(layout):
    """Averaged entries vary less across trials than a single covariance pair."""
    from fdca.array_model import sample_covariance, simulate_snapshots
    from fdca.coarray import lag_index_maps
    sc = make_scene([15.0], [1700.0], [1.0], 0.5, 50)
    l1, l2 = lag_index_maps(layout)
    L = layout.max_lag
    mult = lag_multiplicity(layout)
    a, b = 3, 0  # lag (3, 0) has several physical pairs
    assert mult[a + L, b + L] >= 2
    i, j = np.argwhere((l1 == a) & (l2 == b))[0]
    avg, single = [], []
    for seed in range(200):
        R = sample_covariance(simulate_snapshots(layout, sc, np.random.default_rng(seed)))
        avg.append(derive_virtual_signal(layout, R).at(a, b))
        single.append(R[i, j])
    assert np.var(avg) < np.var(single)
