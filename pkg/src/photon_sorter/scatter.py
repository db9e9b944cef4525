"""Steady-state interference of the cavity-reflected field and the transition.

The reflected amplitude (input-field units) is

    E(Δ) = √R_cavity(Δ)·exp(iφ) + Γ₀√R₀ / (Δ + iΓ₀)

and the measured reflectivity is |E|².  Detunings are in µeV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .units import CavityModel, EmitterParams

DEFAULT_GRID = (-40.0, 40.0, 2001)


class UnfittableError(RuntimeError):
    """Raised when a calibration cannot reach its targets.

    ``residual`` carries the best residual found.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def default_grid() -> np.ndarray:
    lo, hi, n = DEFAULT_GRID
    return np.linspace(lo, hi, n)


def emitter_field(delta, p: EmitterParams):
    """Γ₀√R₀ / (Δ + iΓ₀); scalar or array in, same shape out."""
    g0 = p.gamma0_hwhm
    return g0 * math.sqrt(p.r0) / (np.asarray(delta, dtype=float) + 1j * g0)


def cavity_reflectivity(delta, c: CavityModel):
    x = (np.asarray(delta, dtype=float) - c.center) / (0.5 * c.kappa_fwhm)
    return c.r_background * (1.0 - c.dip_depth / (1.0 + x * x))


def cavity_field(delta, c: CavityModel):
    r = np.clip(cavity_reflectivity(delta, c), 0.0, None)
    return np.sqrt(r) * np.exp(1j * c.phase_offset)


def total_reflectivity(delta, p: EmitterParams, c: CavityModel, transition_active: bool = True):
    e = cavity_field(delta, c)
    if transition_active:
        e = e + emitter_field(delta, p)
    return np.abs(e) ** 2


@dataclass(frozen=True)
class Spectrum:
    """Values on a strictly increasing detuning grid (µeV).

    ``values`` is real for reflectivities and complex for field spectra.
    """

    detunings: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.detunings, dtype=float)
        v = np.asarray(self.values)
        if d.ndim != 1 or v.shape != d.shape:
            raise ValueError("detunings and values must be 1-D with equal length")
        if d.size == 0:
            raise ValueError("empty spectrum")
        if np.any(np.diff(d) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if not np.all(np.isfinite(d)) or not np.all(np.isfinite(v)):
            raise ValueError("spectrum contains non-finite values")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.detunings.size


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D sequence")
    return g


def reflectivity_spectrum(grid, p: EmitterParams, c: CavityModel, transition_active: bool = True) -> Spectrum:
    g = _check_grid(grid)
    return Spectrum(g, total_reflectivity(g, p, c, transition_active))


def response_components(grid, p: EmitterParams) -> tuple[Spectrum, Spectrum]:
    """Real and imaginary parts of the emitter field on ``grid``."""
    g = _check_grid(grid)
    e = emitter_field(g, p)
    return Spectrum(g, e.real.copy()), Spectrum(g, e.imag.copy())


@dataclass(frozen=True)
class ModulationMetrics:
    enhancement_pct: float
    suppression_pct: float
    total_pct: float
    excluded_points: int = 0

    def __post_init__(self) -> None:
        if self.enhancement_pct < 0 or self.suppression_pct < 0:
            raise ValueError("enhancement and suppression must be non-negative")

    @classmethod
    def from_targets(cls, enhancement_pct: float, suppression_pct: float) -> "ModulationMetrics":
        return cls(enhancement_pct, suppression_pct, enhancement_pct + suppression_pct)


def _metrics_from_ratio(ratio: np.ndarray) -> tuple[float, float]:
    enh = max(0.0, 100.0 * float(np.max(ratio) - 1.0))
    sup = max(0.0, 100.0 * float(1.0 - np.min(ratio)))
    return enh, sup


def modulation_metrics(active: Spectrum, inactive: Spectrum) -> ModulationMetrics:
    """Extrema of the pointwise active/inactive ratio.

    Points where the inactive reflectivity vanishes are excluded and counted.
    """
    if not np.array_equal(active.detunings, inactive.detunings):
        raise ValueError("spectra must share the same detuning grid")
    a = np.asarray(active.values, dtype=float)
    i = np.asarray(inactive.values, dtype=float)
    ok = i > 0
    if not np.any(ok):
        raise ValueError("inactive spectrum is zero everywhere")
    enh, sup = _metrics_from_ratio(a[ok] / i[ok])
    return ModulationMetrics(enh, sup, enh + sup, int(np.count_nonzero(~ok)))


@dataclass(frozen=True)
class ModulationFit:
    cavity: CavityModel
    residual: float
    metrics: ModulationMetrics
    degenerate: bool = False
    evaluations: int = field(default=0, compare=False)


def _relative_residual(enh: float, sup: float, targets: ModulationMetrics) -> float:
    # squared relative error, summed over the two independent metrics
    r = 0.0
    for got, want in ((enh, targets.enhancement_pct), (sup, targets.suppression_pct)):
        r += ((got - want) / want) ** 2
    return math.sqrt(r)


def fit_modulation(
    targets: ModulationMetrics,
    fixed: EmitterParams,
    template: CavityModel | None = None,
    grid=None,
    enhance_side: str = "negative",
    threshold: float = 1e-2,
) -> ModulationFit:
    """Fit ``r_background`` and ``phase_offset`` of ``template`` to the targets.

    A coarse grid over (r_background, phase) is followed by Nelder-Mead
    refinement.  ``enhance_side`` ("negative", "positive" or "any") restricts
    the detuning sign at which the enhancement maximum sits, selecting between
    the mirror-image solutions.  The dip shape (depth, centre, width) is held
    at the template values.
    """
    template = template or CavityModel()
    g = default_grid() if grid is None else _check_grid(grid)

    if targets.enhancement_pct <= 0 and targets.suppression_pct <= 0:
        # no modulation requested: the transition contributes nothing
        cav = replace(template, phase_offset=0.0)
        m = ModulationMetrics(0.0, 0.0, 0.0)
        return ModulationFit(cav, 0.0, m, degenerate=True)
    if targets.enhancement_pct <= 0 or targets.suppression_pct <= 0:
        raise UnfittableError("enhancement and suppression targets must both be > 0", math.inf)
    if enhance_side not in ("negative", "positive", "any"):
        raise ValueError(f"unknown enhance_side {enhance_side!r}")

    e_field = emitter_field(g, fixed)
    unit_cav = np.sqrt(np.clip(cavity_reflectivity(g, replace(template, r_background=1.0)), 0.0, None))
    ok = unit_cav > 0
    e_field, unit_cav, gg = e_field[ok], unit_cav[ok], g[ok]
    n_eval = 0

    def evaluate(rb: float, phase: float) -> tuple[float, float, float]:
        nonlocal n_eval
        n_eval += 1
        bg = math.sqrt(rb) * unit_cav
        ratio = np.abs(1.0 + e_field * np.exp(-1j * phase) / bg) ** 2
        enh, sup = _metrics_from_ratio(ratio)
        return enh, sup, float(gg[int(np.argmax(ratio))])

    def side_ok(at: float) -> bool:
        if enhance_side == "negative":
            return at < 0
        if enhance_side == "positive":
            return at > 0
        return True

    # coarse grid, vectorised over phase
    rbs = np.linspace(0.02, 1.0, 50)
    phases = np.linspace(-math.pi, math.pi, 72, endpoint=False)
    rot = np.exp(-1j * phases)[:, None]
    best = (math.inf, None, None)
    for rb in rbs:
        ratio = np.abs(1.0 + rot * (e_field / (math.sqrt(rb) * unit_cav))[None, :]) ** 2
        n_eval += phases.size
        hi = ratio.max(axis=1)
        lo = ratio.min(axis=1)
        at = gg[np.argmax(ratio, axis=1)]
        for k in range(phases.size):
            if not side_ok(at[k]):
                continue
            res = _relative_residual(100 * (hi[k] - 1), 100 * (1 - lo[k]), targets)
            if res < best[0]:
                best = (res, float(rb), float(phases[k]))
    if best[1] is None:
        raise UnfittableError("no candidate with enhancement on the requested side", math.inf)

    def objective(x):
        rb, phase = x
        if not 0.0 < rb <= 1.0:
            return 1e6 + abs(rb)
        enh, sup, at = evaluate(rb, phase)
        pen = 0.0 if side_ok(at) else 1.0
        return _relative_residual(enh, sup, targets) ** 2 + pen

    opt = minimize(
        objective,
        np.array(best[1:]),
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-20, "maxiter": 4000, "maxfev": 8000},
    )
    rb, phase = float(opt.x[0]), float(opt.x[1])
    phase = math.atan2(math.sin(phase), math.cos(phase))
    cav = replace(template, r_background=rb, phase_offset=phase)
    enh, sup, _ = evaluate(rb, phase)
    residual = _relative_residual(enh, sup, targets)
    metrics = ModulationMetrics(enh, sup, enh + sup)
    if residual > threshold:
        raise UnfittableError(f"unfittable targets: best relative residual {residual:.3g}", residual)
    return ModulationFit(cav, residual, metrics, evaluations=n_eval)
