import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdca.array_model import make_scene, theoretical_covariance
from fdca.coarray import coarray_matrix, consecutive_submatrix, derive_virtual_signal, difference_set
from fdca.spectral import (Spectrum2D, SubspaceError, UnderResolvedError, local_maxima,
                           music_denominator, music_spectrum_2d, pick_peaks, polish_peaks,
                           smoothing_windows, spatial_smooth_2d, write_spectrum_csv)


def _block(layout, th, r, p=None, noise=0.0):
    sc = make_scene(th, r, p, noise)
    vs = derive_virtual_signal(layout, theoretical_covariance(layout, sc))
    return consecutive_submatrix(vs, difference_set(layout))


def test_windows_shape_and_reference(layout):
    B = _block(layout, [10.0], [1000.0])
    W = smoothing_windows(B)
    assert W.shape == (64, 64)
    # window (0, 0) holds lags (a, -b)
    V = 7
    a, b = 2, 5
    assert W[a * (V + 1) + b, 0] == pytest.approx(B[a + V, -b + V])


@given(st.floats(-60, 60), st.floats(100, 4800))
@settings(max_examples=15, deadline=None)
def test_single_target_rank_one(theta, r):
    from fdca.array_model import build_coprime_layout
    lay = build_coprime_layout(3, 5)
    rss = spatial_smooth_2d(_block(lay, [theta], [r]))
    w = np.linalg.eigvalsh(rss.r_ss)
    assert w[-2] < 1e-10 * w[-1]


def test_smoothing_rejects_holes(layout):
    sc = make_scene([10.0], [1000.0])
    vs = derive_virtual_signal(layout, theoretical_covariance(layout, sc))
    with pytest.raises(ValueError):
        spatial_smooth_2d(vs.xv, vs.mask)
    with pytest.raises(ValueError):
        spatial_smooth_2d(np.ones((4, 4)))


def test_denominator_vanishes_at_truth(layout):
    rss = spatial_smooth_2d(_block(layout, [25.0, -10.0], [1800.0, 3500.0]))
    den = music_denominator(rss, 2, layout, [25.0, -10.0, 0.0], [1800.0, 3500.0])
    assert den[0, 0] < 1e-9 and den[1, 1] < 1e-9
    assert den[2, 0] > 1e-3


def test_signal_and_noise_forms_agree(layout):
    rss = spatial_smooth_2d(_block(layout, [25.0], [1800.0], noise=0.5))
    tg, rg = np.linspace(-50, 50, 11), np.linspace(100, 4000, 9)
    # K = 1 uses the signal subspace, K = 40 the noise subspace
    for K in (1, 40):
        den = music_denominator(rss, K, layout, tg, rg)
        w, U = np.linalg.eigh(rss.r_ss)
        Un = U[:, ::-1][:, K:]
        from fdca.spectral import music_manifolds
        Ap, Af = music_manifolds(layout, rss.window_v, tg, rg)
        ref = np.array([[np.linalg.norm(Un.conj().T @ np.kron(Ap[:, i], Af[:, j])) ** 2
                         for j in range(len(rg))] for i in range(len(tg))])
        np.testing.assert_allclose(den, ref, rtol=1e-8, atol=1e-12)


def test_subspace_error(layout):
    rss = spatial_smooth_2d(_block(layout, [25.0], [1800.0]))
    with pytest.raises(SubspaceError):
        music_denominator(rss, 64, layout, [0.0], [0.0])


def test_local_maxima_strict():
    v = np.zeros((5, 5))
    v[1, 1] = 2
    v[3, 3] = 1
    v[0, 4] = v[1, 4] = 0.5  # plateau, not strict
    it, ir = local_maxima(v)
    assert sorted(zip(it.tolist(), ir.tolist())) == [(1, 1), (3, 3)]


def test_pick_peaks_order_and_refine():
    tg = np.arange(0.0, 10.0)
    rg = np.arange(0.0, 8.0)
    T, R = np.meshgrid(tg, rg, indexing='ij')
    vals = 5 * np.exp(-((T - 3.3) ** 2 + (R - 2.0) ** 2)) + np.exp(-((T - 7) ** 2 + (R - 5.2) ** 2)) + 1e-3
    est = pick_peaks(Spectrum2D(tg, rg, vals), 2)
    assert est.thetas[0] == pytest.approx(3.3, abs=0.05)
    assert est.ranges[1] == pytest.approx(5.2, abs=0.05)
    raw = pick_peaks(Spectrum2D(tg, rg, vals), 2, refine=False)
    assert raw.thetas.tolist() == [3.0, 7.0]


def test_under_resolved_and_dynamic_range():
    tg = np.arange(0.0, 10.0)
    rg = np.arange(0.0, 8.0)
    T, R = np.meshgrid(tg, rg, indexing='ij')
    vals = 1000 * np.exp(-((T - 3) ** 2 + (R - 2) ** 2)) + np.exp(-((T - 7) ** 2 + (R - 5) ** 2)) + 1e-3
    with pytest.raises(UnderResolvedError) as err:
        pick_peaks(Spectrum2D(tg, rg, vals), 2)
    assert (err.value.found, err.value.requested) == (1, 2)
    assert pick_peaks(Spectrum2D(tg, rg, vals), 2, dynamic_range_db=None).n == 2


def test_end_to_end_noiseless(layout):
    rss = spatial_smooth_2d(_block(layout, [30.0], [2500.0]))
    tg = np.arange(20.0, 40.0, 0.1)
    rg = np.arange(2400.0, 2600.0, 5.0)
    spec = music_spectrum_2d(rss, 1, tg, rg, layout)
    est = pick_peaks(spec, 1)
    assert abs(est.thetas[0] - 30.0) <= 0.1 and abs(est.ranges[0] - 2500.0) <= 5.0
    off = pick_peaks(Spectrum2D(tg, rg, spec.values), 1)
    off.thetas[:] += 0.07
    off.ranges[:] -= 3.0
    pol = polish_peaks(off, rss, 1, layout, 0.1, 5.0)
    assert abs(pol.thetas[0] - 30.0) < 1e-3 and abs(pol.ranges[0] - 2500.0) < 0.1


def test_spectrum_csv(tmp_path):
    spec = Spectrum2D(np.array([0.0, 1.0]), np.array([5.0]), np.array([[1.0], [2.0]]))
    write_spectrum_csv(spec, tmp_path / 's.csv')
    assert (tmp_path / 's.csv').read_text().splitlines() == [
        'theta_deg,range_m,music_value', '0.000000,5.000000,1', '1.000000,5.000000,2']


def test_empty_grid(layout):
    rss = spatial_smooth_2d(_block(layout, [30.0], [2500.0]))
    with pytest.raises(ValueError):
        music_spectrum_2d(rss, 1, [], [1.0], layout)


def test_noise_projector_idempotent(layout):
    from fdca.spectral import noise_projection
    rss = spatial_smooth_2d(_block(layout, [25.0, 0.0], [1800.0, 700.0], noise=0.2))
    Un = noise_projection(rss, 2)
    P = Un @ Un.conj().T
    assert np.linalg.norm(P @ P - P) < 1e-10
    np.testing.assert_allclose(P, P.conj().T, atol=1e-12)


def test_identifiability_small_window(layout):
    """Distinct angles and ranges: MUSIC nulls sit exactly on the targets."""
    from fdca.spectral import music_manifolds
    rng = np.random.default_rng(7)
    K = 4
    th = rng.uniform(-50, 50, K)
    r = rng.uniform(200, 4700, K)
    X = coarray_matrix(layout, th, r, rng.uniform(0.5, 1.5, K))
    V = 4
    L = layout.max_lag
    block = X[L - V:L + V + 1, L - V:L + V + 1]
    rss = spatial_smooth_2d(block)
    den_true = np.diag(music_denominator(rss, K, layout, th, r))
    assert den_true.max() < 1e-6
    probes_t, probes_r = rng.uniform(-60, 60, 100), rng.uniform(0, 4990, 100)
    Ap, Af = music_manifolds(layout, V, probes_t, probes_r)
    w, U = np.linalg.eigh(rss.r_ss)
    Un = U[:, :-K]
    den = [np.linalg.norm(Un.conj().T @ np.kron(Ap[:, i], Af[:, i])) ** 2 for i in range(100)]
    assert min(den) > 1e-3


def test_shared_angle_rank_deficiency(layout):
    """V + 2 targets on one angle cannot all be resolved by a (V+1)-wide window."""
    from fdca.spectral import music_manifolds
    V = 4
    r = np.linspace(300, 4500, V + 2)
    Ap, Af = music_manifolds(layout, V, np.full(V + 2, 20.0), r)
    A = np.stack([np.kron(Ap[:, k], Af[:, k]) for k in range(V + 2)], axis=1)
    s = np.linalg.svd(A, compute_uv=False)
    assert s[-1] < 1e-8 * s[0]
