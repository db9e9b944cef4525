import math

import numpy as np
import pytest
from scipy import integrate, stats

from photon_sorter.spin import (
    TAG_L,
    ChargeSpinParams,
    ChargeTrajectory,
    PolCorrResult,
    SpinOrientation,
    analytic_degree,
    background_for_g2_zero,
    blinking_g2,
    blinking_g2_values,
    emit_polarized_clicks,
    fit_exponential,
    gillespie_charge_spin,
    pol_correlation,
)
from photon_sorter.trajectory import ClickStream, binned_correlation, triangular_average


def test_params_validation():
    with pytest.raises(ValueError):
        ChargeSpinParams(r_charge=-1.0)
    with pytest.raises(ValueError):
        ChargeSpinParams(r_charge=0.0, r_discharge=0.0)
    assert ChargeSpinParams().p_on == pytest.approx(0.5)
    assert ChargeSpinParams().r_reset == pytest.approx(1 / 315)


def test_never_discharging():
    p = ChargeSpinParams(r_charge=1e-3, r_discharge=0.0, r_spinflip=0.0)
    tr = gillespie_charge_spin(p, 1e5, 1, start_charged=True)
    assert tr.charged_intervals() == [(0.0, 1e5)]
    assert tr.occupancy == 1.0


def test_all_rates_zero_rejected():
    p = ChargeSpinParams(r_charge=0.0, r_discharge=1e-9, r_spinflip=0.0)
    object.__setattr__(p, "r_discharge", 0.0)
    with pytest.raises(ValueError):
        gillespie_charge_spin(p, 10.0, 0)


def test_occupancy_and_dwell_laws():
    p = ChargeSpinParams(r_charge=0.03, r_discharge=0.01, r_spinflip=0.0)
    tr = gillespie_charge_spin(p, 2e6, 7)
    lengths = tr.stops - tr.starts
    # drop the censored first and last segments
    on = lengths[1:-1][tr.charged[1:-1]]
    off = lengths[1:-1][~tr.charged[1:-1]]
    assert stats.kstest(on, "expon", args=(0, 1 / p.r_discharge)).pvalue > 0.01
    assert stats.kstest(off, "expon", args=(0, 1 / p.r_charge)).pvalue > 0.01
    # batch means across independent runs for the occupancy error
    occ = [gillespie_charge_spin(p, 2e5, s).occupancy for s in range(30)]
    se = np.std(occ, ddof=1) / math.sqrt(len(occ))
    assert abs(np.mean(occ) - 0.75) < 3 * se


def test_spin_flip_dwell_law():
    p = ChargeSpinParams(r_charge=1.0, r_discharge=1e-9, r_spinflip=0.02)
    tr = gillespie_charge_spin(p, 5e5, 3, start_charged=True)
    seg = (tr.stops - tr.starts)[1:-1]
    assert stats.kstest(seg, "expon", args=(0, 1 / (p.r_spinflip + p.r_discharge))).pvalue > 0.01
    # orientations are redrawn uniformly: cos θ uniform on [−1, 1]
    assert stats.kstest(tr.cos_theta, "uniform", args=(-1, 2)).pvalue > 0.01


def _fixed(cos_theta, duration=1e5):
    return ChargeTrajectory(
        np.array([0.0]), np.array([duration]), np.array([True]), np.array([cos_theta]), np.array([0.0]), duration
    )


def test_tag_probabilities():
    p = ChargeSpinParams(rrs_rate=0.5)
    up = emit_polarized_clicks(_fixed(1.0), p, 0)
    assert np.all(up.tags == TAG_L)
    eq = emit_polarized_clicks(_fixed(0.0), p, 0)
    n = len(eq)
    assert abs(np.sum(eq.tags == TAG_L) - n / 2) < 3 * math.sqrt(n / 4)
    assert SpinOrientation(0.0, 0.0).p_left == 1.0
    assert np.linalg.norm(SpinOrientation(1.1, 2.3).vector) == pytest.approx(1.0)


def test_sphere_average_single_click():
    p = ChargeSpinParams(r_charge=1.0, r_discharge=1e-9, r_spinflip=0.05, rrs_rate=0.2)
    s = emit_polarized_clicks(gillespie_charge_spin(p, 5e5, 2, start_charged=True), p, 2)
    n = len(s)
    frac = np.mean(s.tags == TAG_L)
    # clustered by epoch; use epoch count for a conservative error
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / (5e5 * 0.05) + 1 / (12 * 5e5 * 0.05))


def test_sphere_average_identity():
    # integral oracle: ∫ [((1+u)/2)² + ((1−u)/2)²] du/2 = 2/3
    same = integrate.quad(lambda u: ((1 + u) / 2) ** 2 + ((1 - u) / 2) ** 2, -1, 1)[0] / 2
    assert same == pytest.approx(2 / 3, abs=1e-14)
    rng = np.random.default_rng(0)
    v = rng.normal(size=(1_000_000, 3))
    u = v[:, 2] / np.linalg.norm(v, axis=1)
    pl = (1 + u) / 2
    mc_same = np.mean(pl**2 + (1 - pl) ** 2)
    assert mc_same == pytest.approx(2 / 3, abs=0.002)
    assert 2 * mc_same - 1 == pytest.approx(1 / 3, abs=0.003)


def test_polcorr_trivial_cases():
    t = np.cumsum(np.random.default_rng(1).exponential(1.0, 20_000))
    same = pol_correlation(ClickStream(t, t[-1] + 1, tags=np.zeros(t.size)), 1.0, 10.0)
    assert np.all(same.degree[same.n_same > 0] == 1.0)
    tags = np.random.default_rng(2).integers(0, 2, t.size)
    r = pol_correlation(ClickStream(t, t[-1] + 1, tags=tags), 1.0, 10.0)
    z = r.degree / r.degree_sigma
    assert np.mean(np.abs(z) > 3) <= 1 / len(z)
    swapped = pol_correlation(ClickStream(t, t[-1] + 1, tags=1 - tags), 1.0, 10.0)
    assert np.array_equal(r.degree, swapped.degree)
    with pytest.raises(ValueError):
        pol_correlation(ClickStream(np.array([]), 1.0, tags=np.array([])), 1.0, 10.0)
    with pytest.raises(ValueError):
        pol_correlation(ClickStream(t, t[-1] + 1), 1.0, 10.0)


def test_empty_bins_marked():
    r = PolCorrResult(1.0, np.array([0, 3]), np.array([0, 1]))
    assert math.isnan(r.degree[0]) and r.degree[1] == 0.5


def test_degree_no_background_is_one_third():
    p = ChargeSpinParams(r_charge=1.0, r_discharge=1e-9, r_spinflip=0.0, rrs_rate=0.2)
    # many short epochs so the orientation average converges
    starts = np.arange(0, 2e6, 200.0)
    n = starts.size
    rng = np.random.default_rng(4)
    tr = ChargeTrajectory(starts, starts + 200.0, np.ones(n, bool), rng.uniform(-1, 1, n), np.zeros(n), 2e6)
    s = emit_polarized_clicks(tr, p, 4)
    r = pol_correlation(s, 10.0, 50.0)
    assert r.degree[0] == pytest.approx(1 / 3, abs=0.02)
    assert analytic_degree(ChargeSpinParams(bg_rate=0.0), 0.0) == pytest.approx(1 / 3, abs=1e-15)
    assert analytic_degree(ChargeSpinParams(), 1e6) < 1e-12


def test_analytic_degree_with_background_matches_mc():
    p = ChargeSpinParams(r_charge=0.01, r_discharge=0.01, r_spinflip=0.01, rrs_rate=0.2, bg_rate=0.05)
    same = np.zeros(31, dtype=np.int64)
    cross = np.zeros(31, dtype=np.int64)
    for seed in range(8):
        s = emit_polarized_clicks(gillespie_charge_spin(p, 1e6, seed), p, seed)
        r = pol_correlation(s, 10.0, 300.0)
        same += r.n_same
        cross += r.n_cross
    r = PolCorrResult(10.0, same, cross)
    model = analytic_degree(p, r.centers)
    # orientation sampling adds noise beyond Poisson; allow 4σ on the mean
    assert np.mean(np.abs(r.degree - model) / r.degree_sigma > 4) < 0.1
    assert r.degree[1] == pytest.approx(model[1], abs=0.02)


def test_fit_exponential():
    tau = np.arange(40) * 10.0
    deg = 0.3 * np.exp(-tau / 120.0)
    n = 10**8
    r = PolCorrResult(10.0, np.round(n * (1 + deg) / 2).astype(np.int64), np.round(n * (1 - deg) / 2).astype(np.int64))
    f = fit_exponential(r)
    assert f.reliable
    assert f.amplitude == pytest.approx(0.3, rel=1e-6) and f.timescale == pytest.approx(120.0, rel=1e-6)
    flat = PolCorrResult(10.0, np.full(40, 1000), np.full(40, 1000))
    assert not fit_exponential(flat).reliable
    with pytest.raises(ValueError):
        fit_exponential(PolCorrResult(10.0, np.full(3, 5), np.full(3, 1)))


def test_fit_exponential_exact_on_noiseless_data():
    # with exact degrees the log-linear start is already the answer
    tau = np.arange(30) * 5.0
    deg = (1 / 3) * np.exp(-tau / 315.0)
    big = 10**15
    r = PolCorrResult(5.0, np.round(big * (1 + deg)).astype(np.int64), np.round(big * (1 - deg)).astype(np.int64))
    f = fit_exponential(r)
    assert f.timescale == pytest.approx(315.0, rel=1e-9)
    assert f.amplitude == pytest.approx(1 / 3, rel=1e-9)


def test_blinking_g2_examples():
    t = np.linspace(0, 1e4, 50)
    assert np.allclose(blinking_g2(ChargeSpinParams(r_charge=1e-3, r_discharge=0.0), t).values, 1.0)
    half = blinking_g2(ChargeSpinParams(r_charge=1e-3, r_discharge=1e-3), t)
    assert half.g2_zero == pytest.approx(2.0)
    assert half.values[-1] == pytest.approx(1.0, abs=1e-6)


def test_blinking_g2_matches_monte_carlo():
    # Poissonian light while charged: the long-delay correlation is the telegraph law
    p = ChargeSpinParams(r_charge=2e-3, r_discharge=1e-3, r_spinflip=0.0, rrs_rate=0.3)
    streams = [emit_polarized_clicks(gillespie_charge_spin(p, 4e5, s), p, s) for s in range(24)]
    bc = binned_correlation(streams, 50.0, 30)
    model = triangular_average(lambda x: blinking_g2_values(p, x), bc.lags, 50.0)
    z = (bc.values - model) / bc.sigma
    assert np.all(np.abs(z) < 3.5)
    assert np.mean(np.abs(z) > 3) < 0.05


def test_background_calibration_hits_target():
    p = ChargeSpinParams()
    ge = lambda t: (1 - np.exp(-5.0 * t)) ** 2
    B = background_for_g2_zero(0.28, p, ge, 0.1, 1.5)
    x = np.linspace(0, 0.05, 257)
    q = ChargeSpinParams(p.r_charge, p.r_discharge, p.r_spinflip, 1.5, B)
    v = blinking_g2(q, x, ge).values
    assert integrate.simpson(v, x=x) / 0.05 == pytest.approx(0.28, abs=1e-9)
    with pytest.raises(ValueError):
        background_for_g2_zero(1.5, p, ge, 0.1, 1.5)


def test_seed_determinism():
    p = ChargeSpinParams(rrs_rate=0.1, bg_rate=0.02)
    a = emit_polarized_clicks(gillespie_charge_spin(p, 1e5, 17), p, 17)
    b = emit_polarized_clicks(gillespie_charge_spin(p, 1e5, 17), p, 17)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.tags, b.tags)
