"""Quantum-jump click streams and Hanbury-Brown–Twiss histograms.

The detected channel has collapse operator √s·(β + c·σ₋), where ``s`` is the
rate scale mapping field units to clicks per ns.  The remaining emitter decay
Γ − s·c² goes to an undetected channel so the ensemble obeys the same master
equation as :mod:`photon_sorter.bloch`.  Because the detected operator is
displaced, the no-jump Hamiltonian carries a compensating term; without it
the unravelling would describe a different (extra-driven) master equation.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels
from .bloch import DriveParams, FieldModel, SIGMA_MINUS, bloch_steady_state, g2_superposed, _mean_intensity

_UNIFORM_CHUNK = 1 << 16


class OvercoupledError(ValueError):
    """Detected emitter decay exceeds the total decay rate."""


@dataclass(frozen=True)
class ClickStream:
    """Detection times in ns, optionally with L/R tags (stored as 0/1)."""

    times: np.ndarray
    duration: float
    seed: int = 0
    tags: np.ndarray | None = None

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.times, dtype=float)
        if t.ndim != 1:
            raise ValueError("times must be 1-D")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError("duration must be finite and > 0")
        if t.size and (t[0] < 0 or t[-1] > self.duration):
            raise ValueError("click times must lie within [0, duration]")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("click times must be strictly increasing")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "times", t)
        if self.tags is not None:
            g = np.ascontiguousarray(self.tags, dtype=np.int8)
            if g.shape != t.shape:
                raise ValueError("tags must match times")
            if g.size and (g.min() < 0 or g.max() > 1):
                raise ValueError("tags must be 0 (L) or 1 (R)")
            object.__setattr__(self, "tags", g)

    def __len__(self) -> int:
        return self.times.size

    @property
    def rate(self) -> float:
        return self.times.size / self.duration


@dataclass(frozen=True)
class HbtHistogram:
    """Symmetric coincidence histogram with bin centres k·w, k = −K..K.

    ``counts`` holds ordered pairs.  The centre bin collects both orderings
    of pairs closer than w/2, so its counts come in pairs.  ``normalization``
    is the expected count per bin for uncorrelated light, Σ N²·w/T over the
    merged shards.
    """

    bin_width: float
    counts: np.ndarray
    normalization: float
    n_clicks: int = 0
    shard_values: tuple = field(default=(), compare=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("counts must have an odd number of bins")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def half_bins(self) -> int:
        return self.counts.size // 2

    @property
    def centers(self) -> np.ndarray:
        k = np.arange(-self.half_bins, self.half_bins + 1)
        return k * self.bin_width

    @property
    def bin_edges(self) -> np.ndarray:
        k = np.arange(-self.half_bins, self.half_bins + 2) - 0.5
        return k * self.bin_width

    @property
    def g2(self) -> np.ndarray:
        if not self.normalization > 0:
            raise ZeroDivisionError("zero normalization")
        return self.counts / self.normalization

    @property
    def positive(self) -> tuple[np.ndarray, np.ndarray]:
        """(centres, counts) for k ≥ 0."""
        K = self.half_bins
        return self.centers[K:], self.counts[K:]

    def sigma(self) -> np.ndarray:
        """Poisson standard error of the normalised bins."""
        var = self.counts.astype(float)
        var[self.half_bins] *= 2.0
        return np.sqrt(np.maximum(var, 1.0)) / self.normalization

    def merge(self, other: "HbtHistogram") -> "HbtHistogram":
        if other.bin_width != self.bin_width or other.counts.size != self.counts.size:
            raise ValueError("histograms must share binning")
        return HbtHistogram(
            self.bin_width,
            self.counts + other.counts,
            self.normalization + other.normalization,
            self.n_clicks + other.n_clicks,
            self.shard_values + other.shard_values,
        )


# ----------------------------------------------------------------------------
# Monte Carlo


def default_rate_scale(f: FieldModel, d: DriveParams) -> float:
    """Unit detection efficiency: every emitted photon lands in the detected mode."""
    return d.gamma / f.coupling**2 if f.coupling > 0 else 1.0


def _operators(f: FieldModel, d: DriveParams, s: float):
    g = d.gamma
    sc2 = s * f.coupling**2
    if sc2 > g * (1 + 1e-12):
        raise OvercoupledError(f"overcoupled detector: s·c² = {sc2:.6g} exceeds Γ = {g:.6g}")
    b = f.background
    D = d.delta_rate
    om = d.omega
    C1 = math.sqrt(s) * f.operator
    C2 = math.sqrt(max(g - sc2, 0.0)) * SIGMA_MINUS
    if d.gamma_deph > 0:
        raise ValueError("quantum-jump unravelling does not support pure dephasing")
    # K = −i H_eff in the (g, e) basis
    K = np.array(
        [
            [-0.5 * s * abs(b) ** 2, -0.5j * om - s * np.conj(b) * f.coupling],
            [-0.5j * om, 1j * D - 0.5 * g - 0.5 * s * abs(b) ** 2],
        ],
        dtype=np.complex128,
    )
    J = C1.conj().T @ C1 + C2.conj().T @ C2
    return K, np.ascontiguousarray(C1), np.ascontiguousarray(C2), np.ascontiguousarray(J)


def _shard_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def run_jumps(f, d, intervals, rng, s, t_record_offset):
    """Clicks from trajectories on each ``(start, stop)`` interval.

    Every interval starts in the ground state; clicks before
    ``start + t_record_offset`` are dropped.
    """
    K, C1, C2, J = _operators(f, d, s)
    dt_probe = 0.5 / (d.gamma + s * abs(f.background) ** 2)
    chunks = []
    buf = np.empty(1 << 16)
    for start, stop in intervals:
        psi = np.array([1.0 + 0j, 0j])
        t = float(start)
        t_rec = float(start) + t_record_offset
        u = rng.random(_UNIFORM_CHUNK)
        pos = 0
        n = 0
        while True:
            status, t, pos, n = kernels.jump_kernel(K, C1, C2, J, psi, t, float(stop), t_rec, u, pos, buf, n, dt_probe)
            if status == kernels.DONE:
                break
            if status == kernels.NEED_UNIFORMS:
                u = rng.random(_UNIFORM_CHUNK)
                pos = 0
            elif status == kernels.BUFFER_FULL:
                chunks.append(buf[:n].copy())
                n = 0
        if n:
            chunks.append(buf[:n].copy())
    return np.concatenate(chunks) if chunks else np.empty(0)


def _one_shard(f, d, duration, seed, index, s, burn_in):
    rng = np.random.default_rng(_shard_seed(seed, index))
    clicks = run_jumps(f, d, [(0.0, burn_in + duration)], rng, s, burn_in) - burn_in
    clicks = clicks[(clicks >= 0) & (clicks <= duration)]
    return ClickStream(np.unique(clicks), duration, seed)


def mc_jump_shards(
    f: FieldModel,
    d: DriveParams,
    duration: float,
    seed: int,
    shards: int = 1,
    rate_scale: float | None = None,
    workers: int | None = None,
) -> list[ClickStream]:
    """Independent trajectories, each ``duration / shards`` long after burn-in.

    Shard ``i`` is seeded from ``(seed, i)`` so results do not depend on the
    worker count.
    """
    if shards < 1:
        raise ValueError("shards must be >= 1")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    if duration < 100.0 / d.gamma:
        warnings.warn("duration shorter than 100 emitter lifetimes", RuntimeWarning, stacklevel=2)
    s = default_rate_scale(f, d) if rate_scale is None else float(rate_scale)
    _operators(f, d, s)  # validate before spawning work
    burn_in = 20.0 / d.gamma
    per = duration / shards
    args = [(f, d, per, seed, i, s, burn_in) for i in range(shards)]
    if shards == 1 or workers == 1:
        return [_one_shard(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda a: _one_shard(*a), args))


def mc_jump_clicks(
    f: FieldModel,
    d: DriveParams,
    duration: float,
    seed: int,
    rate_scale: float | None = None,
) -> ClickStream:
    """Single stationary click stream of length ``duration`` ns."""
    return mc_jump_shards(f, d, duration, seed, 1, rate_scale)[0]


def expected_click_rate(f: FieldModel, d: DriveParams, rate_scale: float | None = None) -> float:
    s = default_rate_scale(f, d) if rate_scale is None else rate_scale
    return s * float(_mean_intensity(f, bloch_steady_state(d).bloch))


# ----------------------------------------------------------------------------
# Histograms


def _check_binning(bin_width: float, tau_max: float) -> int:
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    K = tau_max / bin_width
    if K < 1 or abs(K - round(K)) > 1e-9 * max(1.0, K):
        raise ValueError("tau_max must be a positive multiple of bin_width")
    return int(round(K))


def hbt_histogram(s: ClickStream, bin_width: float, tau_max: float) -> HbtHistogram:
    """Coincidences out to ±tau_max (a bin centre) in bins of ``bin_width``."""
    K = _check_binning(bin_width, tau_max)
    if len(s) == 0:
        raise ValueError("empty click stream")
    if len(s) < 1000:
        warnings.warn("fewer than 1000 clicks; histogram will be noisy", RuntimeWarning, stacklevel=2)
    pos = kernels.pair_counts(s.times, float(bin_width), K + 1)
    full = np.concatenate([pos[:0:-1], [2 * pos[0]], pos[1:]])
    norm = len(s) ** 2 * bin_width / s.duration
    g = full / norm
    return HbtHistogram(float(bin_width), full, norm, len(s), (g,))


def merged_histogram(streams, bin_width: float, tau_max: float) -> HbtHistogram:
    hists = [hbt_histogram(s, bin_width, tau_max) for s in streams]
    out = hists[0]
    for h in hists[1:]:
        out = out.merge(h)
    return out


def g2_zero_estimate(h: HbtHistogram) -> tuple[float, float]:
    """Centre-bin g² and its Poisson error.

    The centre bin averages g² over |τ| < w/2, so a wide bin pulls the
    estimate toward 1.
    """
    if not h.normalization > 0:
        raise ZeroDivisionError("zero normalization")
    k = h.half_bins
    return float(h.g2[k]), float(h.sigma()[k])


def bin_averaged(fn, centers, bin_width: float, sub: int = 16) -> np.ndarray:
    """Average of ``fn(|τ|)`` over each bin [c − w/2, c + w/2]; ``fn`` is vectorised."""
    out = np.empty(len(centers))
    for i, c in enumerate(centers):
        lo, hi = c - 0.5 * bin_width, c + 0.5 * bin_width
        if lo < 0 < hi:
            lo = 0.0
        x = np.linspace(lo, hi, 2 * sub + 1)
        out[i] = integrate.simpson(fn(np.abs(x)), x=x) / (hi - lo)
    return out


def expected_histogram(f: FieldModel, d: DriveParams, centers, bin_width: float, sub: int = 16) -> np.ndarray:
    """Bin-averaged g² from the regression-theorem curve."""
    c = np.asarray(centers, dtype=float)
    taus = []
    for x in c:
        lo, hi = x - 0.5 * bin_width, x + 0.5 * bin_width
        if lo < 0 < hi:
            lo = 0.0
        taus.append(np.abs(np.linspace(lo, hi, 2 * sub + 1)))
    grid = np.unique(np.concatenate(taus + [[0.0]]))
    curve = g2_superposed(f, d, grid)
    return bin_averaged(lambda t: np.interp(t, curve.taus, curve.values), c, bin_width, sub)


# ----------------------------------------------------------------------------
# Long delays


@dataclass(frozen=True)
class BinnedCorrelation:
    """Normalised intensity autocorrelation of binned counts at lags k·w, k ≥ 1.

    ``shard_values`` holds per-shard estimates; ``sigma`` is their standard
    error of the mean (batch means), which captures slow correlated noise
    that Poisson errors miss.
    """

    lags: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    shard_values: np.ndarray


def binned_autocorrelation(s: ClickStream, bin_width: float, n_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """g² estimate at lags k·w (k = 1..n_lags) from binned counts via FFT.

    With counts nᵢ in bins of width w, E[nᵢ nᵢ₊ₖ] = (N/T)²·w²·g̃ₖ where g̃ₖ is g²
    averaged with a triangular kernel of half-width w around k·w.
    """
    if len(s) == 0:
        raise ValueError("empty click stream")
    m = int(s.duration // bin_width)
    if m <= n_lags:
        raise ValueError("stream too short for the requested lags")
    counts = np.bincount((s.times // bin_width).astype(np.int64), minlength=m + 1)[:m].astype(float)
    nfft = 1 << int(math.ceil(math.log2(2 * m)))
    F = np.fft.rfft(counts, nfft)
    ac = np.fft.irfft(F * np.conj(F), nfft)[: n_lags + 1]
    k = np.arange(1, n_lags + 1)
    rate = counts.sum() / (m * bin_width)
    g = ac[1:] / (rate**2 * bin_width**2 * (m - k))
    return k * bin_width, g


def binned_correlation(streams, bin_width: float, n_lags: int) -> BinnedCorrelation:
    vals = []
    for s in streams:
        lags, g = binned_autocorrelation(s, bin_width, n_lags)
        vals.append(g)
    v = np.array(vals)
    n = v.shape[0]
    sig = v.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(v.shape[1], np.nan)
    return BinnedCorrelation(lags, v.mean(axis=0), sig, v)


def triangular_average(fn, lags, bin_width: float, sub: int = 64) -> np.ndarray:
    """∫ fn(τ)·tri((τ − lag)/w) dτ / w for each lag (lags ≥ w)."""
    out = np.empty(len(lags))
    u = np.linspace(-1.0, 1.0, 2 * sub + 1)
    wts = 1.0 - np.abs(u)
    for i, lag in enumerate(lags):
        x = np.abs(lag + u * bin_width)
        out[i] = integrate.simpson(fn(x) * wts, x=u)
    return out
