import math

import numpy as np
import pytest
from scipy import stats

from photon_sorter.bloch import DriveParams, FieldModel, G2Calibration, bloch_steady_state
from photon_sorter.trajectory import (
    ClickStream,
    HbtHistogram,
    OvercoupledError,
    binned_autocorrelation,
    expected_click_rate,
    expected_histogram,
    g2_zero_estimate,
    hbt_histogram,
    mc_jump_clicks,
    mc_jump_shards,
    merged_histogram,
)
from photon_sorter.units import CavityModel, EmitterParams

P = EmitterParams(r0=0.2552)
G = P.gamma
D0 = DriveParams.from_emitter(P, 0.0)
CAV = CavityModel(0.38298447062074426, 0.8989, 7.069, 7.302, -2.479128420503158)
CAL = G2Calibration(1.4568910736838852, 3.7119594819374777)


def test_clickstream_invariants():
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0, 1.0]), 10.0)
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0, 12.0]), 10.0)
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0]), 10.0, tags=np.array([0, 1]))
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0]), 10.0, seed=-1)


def test_coherent_is_poisson():
    f = FieldModel(0.8, 0.0)
    s = mc_jump_clicks(f, D0, 5e4, seed=11)
    gaps = np.diff(s.times)
    assert stats.kstest(gaps, "expon", args=(0, 1 / 0.64)).pvalue > 0.01
    n_exp = 0.64 * 5e4
    assert abs(len(s) - n_exp) < 3 * math.sqrt(n_exp)
    h = hbt_histogram(s, 0.05, 1.0)
    z = (h.g2 - 1) / h.sigma()
    assert np.mean(np.abs(z) > 3) < 0.05
    v, e = g2_zero_estimate(h)
    assert abs(v - 1) < 3 * e


def test_antibunching():
    d = DriveParams(G / 5, 0.0, G)
    s = mc_jump_clicks(FieldModel(0.0, 1.0), d, 2e5, seed=5)
    h = hbt_histogram(s, 0.002, 0.1)
    v, e = g2_zero_estimate(h)
    assert v < 0.05
    exp = expected_histogram(FieldModel(0.0, 1.0), d, h.centers[h.half_bins :], 0.002)
    assert abs(v - exp[0]) < 3 * max(e, 1e-3)


def test_rate_consistency_and_determinism():
    f = CAL.field_at(CAV, -8.7)
    d = CAL.drive_at(D0, -8.7)
    a = mc_jump_clicks(f, d, 2e4, seed=42)
    b = mc_jump_clicks(f, d, 2e4, seed=42)
    c = mc_jump_clicks(f, d, 2e4, seed=43)
    assert np.array_equal(a.times, b.times)
    assert not np.array_equal(a.times[:10], c.times[:10])
    r = expected_click_rate(f, d)
    # clicks are sub-Poissonian here, so a Poisson 3σ band is conservative
    assert abs(len(a) - r * 2e4) < 3 * math.sqrt(r * 2e4)


def test_shards_independent_of_workers():
    f = CAL.field_at(CAV, 2.1)
    d = CAL.drive_at(D0, 2.1)
    a = mc_jump_shards(f, d, 1.2e4, 9, shards=4, workers=1)
    b = mc_jump_shards(f, d, 1.2e4, 9, shards=4, workers=4)
    assert all(np.array_equal(x.times, y.times) for x, y in zip(a, b))
    h1 = merged_histogram(a, 0.05, 1.0)
    h2 = merged_histogram(a[::-1], 0.05, 1.0)
    assert np.array_equal(h1.counts, h2.counts) and h1.normalization == pytest.approx(h2.normalization)


def test_histogram_symmetry_and_centre():
    t = np.cumsum(np.random.default_rng(0).exponential(1.0, 5000))
    s = ClickStream(t, float(t[-1]) + 1)
    h = hbt_histogram(s, 0.5, 10.0)
    K = h.half_bins
    assert np.array_equal(h.counts[:K][::-1], h.counts[K + 1 :])
    assert h.counts[K] % 2 == 0
    assert h.bin_edges.size == h.counts.size + 1
    assert h.normalization == pytest.approx(5000**2 * 0.5 / s.duration)


def test_histogram_errors():
    with pytest.raises(ValueError):
        hbt_histogram(ClickStream(np.array([]), 1.0), 0.1, 1.0)
    s = ClickStream(np.arange(1, 2000) * 0.5, 1000.0)
    with pytest.raises(ValueError):
        hbt_histogram(s, 0.3, 1.0)
    with pytest.raises(ZeroDivisionError):
        g2_zero_estimate(HbtHistogram(0.1, np.array([0, 0, 0]), 0.0))


def test_narrower_bins_move_away_from_one():
    d = DriveParams(G / 3, 0.0, G)
    s = mc_jump_clicks(FieldModel(0.0, 1.0), d, 3e5, seed=8)
    v_wide, _ = g2_zero_estimate(hbt_histogram(s, 0.1, 0.4))
    v_narrow, _ = g2_zero_estimate(hbt_histogram(s, 0.02, 0.4))
    assert v_narrow < v_wide < 1


def test_overcoupled():
    with pytest.raises(OvercoupledError):
        mc_jump_clicks(FieldModel(0.1, 1.0), D0, 1e3, 0, rate_scale=2 * G)


def test_binned_autocorrelation_poisson():
    rng = np.random.default_rng(4)
    t = np.sort(rng.random(200_000) * 1e5)
    lags, g = binned_autocorrelation(ClickStream(t, 1e5), 10.0, 20)
    assert np.allclose(lags, np.arange(1, 21) * 10.0)
    # Poisson: σ ≈ 1/sqrt(pairs per lag) ≈ 1/sqrt(N·rate·w)
    assert np.all(np.abs(g - 1) < 4 / math.sqrt(200_000 * 2 * 10))
