import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photon_sorter.scatter import (
    ModulationMetrics,
    Spectrum,
    UnfittableError,
    cavity_field,
    cavity_reflectivity,
    default_grid,
    emitter_field,
    fit_modulation,
    modulation_metrics,
    reflectivity_spectrum,
    response_components,
    total_reflectivity,
)
from photon_sorter.units import CavityModel, EmitterParams

P1 = EmitterParams(gamma0_hwhm=3.85, r0=1.0)


def test_emitter_field_examples():
    assert emitter_field(0.0, P1) == pytest.approx(-1j)
    assert emitter_field(3.85, P1) == pytest.approx(0.5 - 0.5j)
    assert abs(emitter_field(1e9, P1)) < 1e-8


@given(st.floats(-200, 200), st.floats(0.0, 1.0), st.floats(0.1, 20))
def test_emitter_parity_and_lorentzian(d, r0, g0):
    p = EmitterParams(gamma0_hwhm=g0, r0=r0)
    a, b = emitter_field(d, p), emitter_field(-d, p)
    assert a.real == pytest.approx(-b.real, abs=1e-12)
    assert a.imag == pytest.approx(b.imag, abs=1e-12)
    closed = r0 * g0**2 / (d**2 + g0**2)
    assert abs(a) ** 2 == pytest.approx(closed, rel=1e-12, abs=1e-300)


def test_cavity_examples():
    flat = CavityModel(r_background=0.6, dip_depth=0.0)
    d = np.linspace(-50, 50, 11)
    assert np.allclose(np.abs(cavity_field(d, flat)), math.sqrt(0.6))
    full = CavityModel(r_background=0.8, dip_depth=1.0, center=2.0, kappa_fwhm=6.0)
    assert abs(cavity_field(2.0, full)) == 0.0
    assert cavity_reflectivity(5.0, full) == pytest.approx(0.4)
    assert cavity_reflectivity(-1.0, full) == pytest.approx(0.4)


def test_cavity_phase():
    c = CavityModel(r_background=1.0, phase_offset=0.7)
    assert cavity_field(3.0, c) == pytest.approx(np.exp(0.7j))


def test_total_reflectivity_examples():
    p = EmitterParams(r0=0.3)
    c = CavityModel(r_background=0.5, dip_depth=0.2, center=1.0, kappa_fwhm=8.0)
    d = np.linspace(-40, 40, 101)
    assert np.allclose(total_reflectivity(d, p, CavityModel(0.5), False), 0.5)
    assert total_reflectivity(0.0, p, c) == pytest.approx(cavity_reflectivity(0.0, c) + 0.3, rel=1e-12)
    r = total_reflectivity(d, p, c)
    assert np.all(r >= 0)


def test_fano_lineshape_bruteforce():
    # direct complex sum on a dense grid: one lobe above, one below the background
    p = EmitterParams(r0=0.3)
    c = CavityModel(r_background=0.5, phase_offset=0.0)
    d = np.linspace(-40, 40, 8001)
    g0 = p.gamma0_hwhm
    brute = np.array([abs(math.sqrt(0.5) + g0 * math.sqrt(0.3) / complex(x, g0)) ** 2 for x in d])
    r = total_reflectivity(d, p, c)
    assert np.allclose(r, brute, rtol=1e-13)
    assert r.max() > 0.5 and r.min() < 0.5
    assert d[np.argmax(r)] * d[np.argmin(r)] < 0


def test_response_components():
    p = EmitterParams(r0=0.36)
    g = np.linspace(-20, 20, 4001)
    re, im = response_components(g, p)
    assert re.values[2000] == 0.0
    assert im.values[2000] == pytest.approx(-0.6)
    assert np.all(im.values < 0)
    k = np.argmax(np.abs(re.values))
    assert abs(g[k]) == pytest.approx(p.gamma0_hwhm, abs=0.01)
    assert np.abs(re.values).max() == pytest.approx(0.3, rel=1e-4)
    with pytest.raises(ValueError):
        response_components([], p)


def test_spectrum_invariants():
    with pytest.raises(ValueError):
        Spectrum([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        Spectrum([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        Spectrum([], [])


def test_metrics_examples():
    g = default_grid()
    p, c = EmitterParams(), CavityModel(0.5, 0.3, 2.0, 10.0, 1.0)
    a = reflectivity_spectrum(g, p, c)
    i = reflectivity_spectrum(g, p, c, transition_active=False)
    assert modulation_metrics(i, i) == ModulationMetrics(0.0, 0.0, 0.0)
    m = modulation_metrics(a, i)
    m2 = modulation_metrics(Spectrum(g, 2 * a.values), Spectrum(g, 2 * i.values))
    assert m2.enhancement_pct == pytest.approx(m.enhancement_pct, rel=1e-12)
    assert m2.suppression_pct == pytest.approx(m.suppression_pct, rel=1e-12)
    assert m.total_pct == m.enhancement_pct + m.suppression_pct


def test_metrics_excludes_zeros():
    g = np.array([0.0, 1.0, 2.0])
    m = modulation_metrics(Spectrum(g, np.array([1.0, 2.0, 1.0])), Spectrum(g, np.array([0.0, 1.0, 1.0])))
    assert m.excluded_points == 1
    assert m.enhancement_pct == pytest.approx(100.0)
    with pytest.raises(ValueError):
        modulation_metrics(Spectrum(g, np.ones(3)), Spectrum(g, np.zeros(3)))


def test_fit_default_targets_flat_cavity():
    fit = fit_modulation(ModulationMetrics.from_targets(210, 26), EmitterParams(r0=0.3))
    assert fit.residual < 1e-2
    assert fit.metrics.total_pct == pytest.approx(236, rel=1e-2)
    assert 0 < fit.cavity.r_background <= 1


def test_fit_fixed_point_and_determinism():
    p = EmitterParams(r0=0.2)
    tmpl = CavityModel(dip_depth=0.5, center=3.0, kappa_fwhm=12.0)
    a = fit_modulation(ModulationMetrics.from_targets(120, 40), p, tmpl)
    b = fit_modulation(ModulationMetrics.from_targets(120, 40), p, tmpl)
    assert a.cavity == b.cavity and a.residual == b.residual
    again = fit_modulation(a.metrics, p, tmpl)
    assert again.residual < 1e-8


def test_fit_degenerate_and_unfittable():
    d = fit_modulation(ModulationMetrics(0.0, 0.0, 0.0), EmitterParams())
    assert d.degenerate and d.cavity.r_background > 0
    with pytest.raises(UnfittableError) as ei:
        fit_modulation(ModulationMetrics.from_targets(1e6, 99.0), EmitterParams(r0=0.01))
    assert ei.value.residual > 1e-2
    with pytest.raises(UnfittableError):
        fit_modulation(ModulationMetrics.from_targets(50.0, 0.0), EmitterParams())
