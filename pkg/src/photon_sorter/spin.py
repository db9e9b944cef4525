"""Charge blinking and hole-spin–sorted polarisation correlations.

The emitter is a telegraph process: empty (dark) or charged (bright).  While
charged it carries a spin orientation, redrawn uniformly on the sphere on
every charging and spin-flip event.  A scattered photon is tagged L with
probability (1 + cos θ)/2, θ the angle to the optical axis.  Detection does
not act back on the orientation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, curve_fit

from . import kernels
from .bloch import G2Curve
from .trajectory import ClickStream, run_jumps, default_rate_scale

TAG_L = 0
TAG_R = 1


@dataclass(frozen=True)
class ChargeSpinParams:
    """Rates in ns⁻¹.

    The default attributes the polarisation memory time to spin flips at
    1/315 ns⁻¹ with slow, balanced charging (p_on = 1/2).
    """

    r_charge: float = 2e-4
    r_discharge: float = 2e-4
    r_spinflip: float = 1.0 / 315.0
    rrs_rate: float = 0.05
    bg_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("r_charge", "r_discharge", "r_spinflip", "rrs_rate", "bg_rate"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.r_charge + self.r_discharge <= 0:
            raise ValueError("r_charge + r_discharge must be > 0")

    @property
    def p_on(self) -> float:
        return self.r_charge / (self.r_charge + self.r_discharge)

    @property
    def r_switch(self) -> float:
        return self.r_charge + self.r_discharge

    @property
    def r_reset(self) -> float:
        """Initial decay rate of the correlation degree.

        Losing the charge costs r_discharge, but the pair normalisation drops
        by (1 − p_on)·(r_charge + r_discharge) = r_discharge at the same
        order, so the net slope at τ = 0 is the spin-flip rate alone.
        """
        return self.r_spinflip


@dataclass(frozen=True)
class SpinOrientation:
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta <= math.pi and math.isfinite(self.phi)):
            raise ValueError("theta must lie in [0, π] and phi must be finite")

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    @property
    def p_left(self) -> float:
        return 0.5 * (1.0 + math.cos(self.theta))


@dataclass(frozen=True)
class ChargeTrajectory:
    """Piecewise-constant state: segment i spans [starts[i], stops[i]).

    ``cos_theta`` and ``phi`` are NaN on empty segments.
    """

    starts: np.ndarray
    stops: np.ndarray
    charged: np.ndarray
    cos_theta: np.ndarray
    phi: np.ndarray
    duration: float

    def orientation(self, i: int) -> SpinOrientation | None:
        if not self.charged[i]:
            return None
        return SpinOrientation(math.acos(float(np.clip(self.cos_theta[i], -1, 1))), float(self.phi[i]))

    def charged_intervals(self) -> list[tuple[float, float]]:
        """Charged stretches with spin-flip boundaries merged."""
        out: list[list[float]] = []
        for a, b, c in zip(self.starts, self.stops, self.charged):
            if not c:
                continue
            if out and out[-1][1] == a:
                out[-1][1] = b
            else:
                out.append([float(a), float(b)])
        return [tuple(x) for x in out]

    @property
    def occupancy(self) -> float:
        return float(np.sum((self.stops - self.starts)[self.charged]) / self.duration)


def _rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def gillespie_charge_spin(p: ChargeSpinParams, duration: float, seed: int, start_charged: bool | None = None) -> ChargeTrajectory:
    """Exact continuous-time Markov simulation on [0, duration).

    ``start_charged=None`` draws the initial state from the stationary law.
    """
    if not duration > 0:
        raise ValueError("duration must be > 0")
    if p.r_charge == 0 and p.r_discharge == 0 and p.r_spinflip == 0:
        raise ValueError("all rates are zero")
    rng = _rng(seed, 0xC5)
    charged = bool(rng.random() < p.p_on) if start_charged is None else bool(start_charged)
    starts, stops, ch, cth, ph = [], [], [], [], []
    t = 0.0

    def draw():
        return 2.0 * rng.random() - 1.0, 2.0 * math.pi * rng.random()

    u, f = draw() if charged else (math.nan, math.nan)
    while t < duration:
        if charged:
            total = p.r_discharge + p.r_spinflip
        else:
            total = p.r_charge
        dwell = rng.exponential(1.0 / total) if total > 0 else math.inf
        end = min(t + dwell, duration)
        starts.append(t)
        stops.append(end)
        ch.append(charged)
        cth.append(u)
        ph.append(f)
        t = end
        if t >= duration:
            break
        if charged and rng.random() * total < p.r_spinflip:
            u, f = draw()
        elif charged:
            charged = False
            u, f = math.nan, math.nan
        else:
            charged = True
            u, f = draw()
    return ChargeTrajectory(
        np.array(starts), np.array(stops), np.array(ch, dtype=bool), np.array(cth), np.array(ph), float(duration)
    )


def _merge(times_list, tags_list, duration, seed) -> ClickStream:
    t = np.concatenate(times_list)
    g = np.concatenate(tags_list).astype(np.int8)
    order = np.argsort(t, kind="stable")
    t, g = t[order], g[order]
    # coincident floats are vanishingly rare; keep the first
    keep = np.ones(t.size, dtype=bool)
    if t.size > 1:
        keep[1:] = np.diff(t) > 0
    return ClickStream(t[keep], duration, seed, g[keep])


def _background(rate, duration, rng):
    n = rng.poisson(rate * duration)
    return np.sort(rng.random(n) * duration), (rng.random(n) < 0.5).astype(np.int8)


def emit_polarized_clicks(traj: ChargeTrajectory, p: ChargeSpinParams, seed: int) -> ClickStream:
    """Poisson RRS clicks on charged segments plus unpolarised background."""
    rng = _rng(seed, 0xE1)
    lengths = (traj.stops - traj.starts) * traj.charged
    n = rng.poisson(p.rrs_rate * lengths)
    idx = np.repeat(np.arange(lengths.size), n)
    t_rrs = traj.starts[idx] + rng.random(idx.size) * lengths[idx]
    p_left = 0.5 * (1.0 + traj.cos_theta[idx])
    g_rrs = np.where(rng.random(idx.size) < p_left, TAG_L, TAG_R)
    t_bg, g_bg = _background(p.bg_rate, traj.duration, rng)
    return _merge([t_rrs, t_bg], [g_rrs, g_bg], traj.duration, seed)


def blinking_emitter_clicks(f, d, p: ChargeSpinParams, duration: float, seed: int, shard: int = 0, rate_scale=None) -> ClickStream:
    """Quantum-jump clicks gated by the charge state, plus Poisson background.

    The emitter restarts in its ground state at every charging event.  Tags
    are unpolarised (fair coin) since no analyser is assumed.
    """
    traj = gillespie_charge_spin(p, duration, _shard_key(seed, shard))
    s = default_rate_scale(f, d) if rate_scale is None else rate_scale
    rng = _rng(seed, shard, 0x7A)
    t_rrs = run_jumps(f, d, traj.charged_intervals(), rng, s, 0.0)
    t_bg, _ = _background(p.bg_rate, duration, rng)
    t = np.concatenate([t_rrs, t_bg])
    return _merge([t], [np.zeros(t.size, dtype=np.int8)], duration, seed)


def _shard_key(seed: int, shard: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(shard)]).generate_state(1, np.uint64)[0])


# ----------------------------------------------------------------------------
# Correlations


@dataclass(frozen=True)
class PolCorrResult:
    """Same-tag and cross-tag coincidences at bin centres k·w, k ≥ 0."""

    bin_width: float
    n_same: np.ndarray
    n_cross: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.n_same.size) * self.bin_width

    @property
    def tau_bins(self) -> np.ndarray:
        """Bin edges; the first bin is (0, w/2)."""
        e = (np.arange(self.n_same.size + 1) - 0.5) * self.bin_width
        e[0] = 0.0
        return e

    @property
    def degree(self) -> np.ndarray:
        tot = self.n_same + self.n_cross
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, (self.n_same - self.n_cross) / tot, np.nan)

    @property
    def degree_sigma(self) -> np.ndarray:
        tot = (self.n_same + self.n_cross).astype(float)
        dg = np.nan_to_num(self.degree)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, np.sqrt(np.maximum(1.0 - dg**2, 1.0 / np.maximum(tot, 1))) / np.sqrt(tot), np.nan)


def pol_correlation(s: ClickStream, bin_width: float, tau_max: float) -> PolCorrResult:
    if len(s) == 0:
        raise ValueError("empty click stream")
    if s.tags is None:
        raise ValueError("click stream carries no polarisation tags")
    K = tau_max / bin_width
    if not bin_width > 0 or K < 1 or abs(K - round(K)) > 1e-9 * K:
        raise ValueError("tau_max must be a positive multiple of bin_width")
    same, cross = kernels.pair_counts_tagged(s.times, s.tags, float(bin_width), int(round(K)) + 1)
    return PolCorrResult(float(bin_width), same, cross)


def analytic_degree(p: ChargeSpinParams, tau):
    """Expected degree of polarisation correlation at delay τ (ns).

    Only pairs scattered within one orientation epoch correlate: the second
    click needs the dot still charged with no spin flip, probability
    exp(−(r_spinflip + r_discharge)τ), and such pairs have degree 1/3.  All
    other pairs (different epochs, background) have degree 0, so

        D(τ) = (I²·p_on·e^{−(r_s + r_d)τ}/3) / G(τ),
        G(τ) = I²·p_on·(p_on + (1 − p_on)e^{−kτ}) + 2·I·p_on·B + B²,

    with I the RRS rate while charged, B the background rate and
    k = r_charge + r_discharge.  At B = 0 and τ = 0 this is exactly 1/3.
    """
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0):
        raise ValueError("tau must be >= 0")
    I, B, po = p.rrs_rate, p.bg_rate, p.p_on
    num = I * I * po * np.exp(-(p.r_spinflip + p.r_discharge) * t) / 3.0
    den = I * I * po * (po + (1 - po) * np.exp(-p.r_switch * t)) + 2 * I * po * B + B * B
    if np.all(den == 0):
        return np.zeros_like(t) if t.ndim else 0.0
    out = num / den
    return float(out) if out.ndim == 0 else out


def blinking_g2(p: ChargeSpinParams, taus, emitter_g2=None, rrs_rate: float | None = None) -> G2Curve:
    """Telegraph intensity correlation, optionally with background and emitter g².

    Without background g²(τ) = 1 + (1 − p_on)/p_on·e^{−kτ}.  With a Poisson
    background B the emitter term is diluted:

        g² = [I²·p_on·(p_on + (1 − p_on)e^{−kτ})·g_e(τ) + 2·I·p_on·B + B²] / (I·p_on + B)².

    ``emitter_g2`` (a callable of τ or an array on ``taus``) supplies g_e;
    the product assumes the emitter and blinking timescales separate.
    """
    t = np.asarray(taus, dtype=float)
    return G2Curve(t, blinking_g2_values(p, t, emitter_g2, rrs_rate))


def blinking_g2_values(p: ChargeSpinParams, taus, emitter_g2=None, rrs_rate: float | None = None) -> np.ndarray:
    """:func:`blinking_g2` on an arbitrary array of delays."""
    t = np.asarray(taus, dtype=float)
    po = p.p_on
    if po == 0:
        raise ValueError("emitter is never charged")
    I = p.rrs_rate if rrs_rate is None else rrs_rate
    B = p.bg_rate
    if emitter_g2 is None:
        ge = np.ones_like(t)
    elif callable(emitter_g2):
        ge = np.asarray(emitter_g2(t), dtype=float)
    else:
        ge = np.asarray(emitter_g2, dtype=float)
    a = I * po
    tele = po + (1 - po) * np.exp(-p.r_switch * t)
    if a + B == 0:
        raise ValueError("no light: rrs and background rates are zero")
    return (I * I * po * tele * ge + 2 * a * B + B * B) / (a + B) ** 2


def background_for_g2_zero(target: float, p: ChargeSpinParams, emitter_g2, bin_width: float, rrs_rate: float) -> float:
    """Background rate B giving a centre-bin g² of ``target``.

    The centre bin averages g² over |τ| < w/2; ``emitter_g2`` is a vectorised
    callable.  Raises if the target is outside the reachable range.
    """
    x = np.linspace(0.0, 0.5 * bin_width, 257)

    def centre(B):
        q = ChargeSpinParams(p.r_charge, p.r_discharge, p.r_spinflip, rrs_rate, B)
        v = blinking_g2_values(q, x, emitter_g2)
        return simpson(v, x=x) / x[-1]

    lo, hi = 0.0, 1e3 * rrs_rate
    f_lo, f_hi = centre(lo) - target, centre(hi) - target
    if f_lo * f_hi > 0:
        raise ValueError(f"g2(0)={target} unreachable: range [{centre(lo):.4g}, {centre(hi):.4g}]")
    return float(brentq(lambda B: centre(B) - target, lo, hi, xtol=1e-14, rtol=1e-12))


@dataclass(frozen=True)
class ExpFit:
    amplitude: float
    timescale: float
    amplitude_err: float
    timescale_err: float
    reliable: bool


def fit_exponential(r: PolCorrResult, skip_first: bool = False, tau_max: float | None = None) -> ExpFit:
    """Weighted least squares of degree(τ) = A·exp(−τ/T).

    Starts from a log-linear fit, then refines with ``curve_fit``.  The fit is
    flagged unreliable when T's standard error exceeds T or the data do not
    decay.
    """
    tau = r.centers
    y = r.degree
    sig = r.degree_sigma
    ok = np.isfinite(y) & np.isfinite(sig) & (sig > 0)
    if skip_first:
        ok[0] = False
    if tau_max is not None:
        ok &= tau <= tau_max
    if np.count_nonzero(ok) < 5:
        raise ValueError("need at least 5 occupied bins")
    tau, y, sig = tau[ok], y[ok], sig[ok]
    pos = y > 0
    if np.count_nonzero(pos) >= 2:
        w = (y[pos] / sig[pos]) ** 2
        slope, icpt = np.polyfit(tau[pos], np.log(y[pos]), 1, w=np.sqrt(w))
    else:
        slope, icpt = 0.0, 0.0
    if slope >= 0:
        return ExpFit(float(np.mean(y)), math.inf, math.inf, math.inf, False)
    p0 = (math.exp(icpt), -1.0 / slope)

    def model(t, A, T):
        return A * np.exp(-t / T)

    try:
        popt, pcov = curve_fit(model, tau, y, p0=p0, sigma=sig, absolute_sigma=True, xtol=1e-15, ftol=1e-15, gtol=1e-15, maxfev=10000)
    except RuntimeError:
        return ExpFit(p0[0], p0[1], math.inf, math.inf, False)
    A, T = float(popt[0]), float(popt[1])
    err = np.sqrt(np.abs(np.diag(pcov)))
    reliable = bool(T > 0 and math.isfinite(err[1]) and err[1] < T)
    return ExpFit(A, T, float(err[0]), float(err[1]), reliable)
