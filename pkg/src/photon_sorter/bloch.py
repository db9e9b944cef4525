"""Driven two-level emitter and second-order correlations of the output field.

Rotating frame with H = −Δ σ₊σ₋ + (Ω/2)(σ₊ + σ₋), Δ = ω_laser − ω_transition,
population decay Γ and optional pure dephasing γ_φ.  With this sign
convention the weak-drive coherence is ⟨σ₋⟩ = (Ω/2)/(Δ + iΓ/2), the same
lineshape as :func:`photon_sorter.scatter.emitter_field`.

The detected field is a = β + c·σ₋: a c-number coherent background β plus
the dipole field scaled by the coupling c.  Correlations follow from the
quantum regression theorem on the Bloch vector x = (ρ_ee, Re ρ_eg, Im ρ_eg),
where ρ_eg = ⟨e|ρ|g⟩ = ⟨σ₋⟩.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares

from .scatter import UnfittableError, cavity_field
from .units import CavityModel, EmitterParams, detuning_to_rate

# basis order (g, e)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


class DarkFieldError(ValueError):
    """Mean detected intensity is zero, so g² is undefined."""


@dataclass(frozen=True)
class DriveParams:
    """Drive and decay. ``delta`` in µeV; rates in angular ns⁻¹."""

    omega: float
    delta: float
    gamma: float
    gamma_deph: float = 0.0

    def __post_init__(self) -> None:
        for name in ("omega", "delta", "gamma", "gamma_deph"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.gamma_deph < 0:
            raise ValueError("gamma_deph must be >= 0")

    @classmethod
    def from_emitter(cls, p: EmitterParams, delta: float, gamma_deph: float = 0.0) -> "DriveParams":
        return cls(omega=p.omega, delta=delta, gamma=p.gamma, gamma_deph=gamma_deph)

    @property
    def delta_rate(self) -> float:
        return detuning_to_rate(self.delta)

    @property
    def gamma2(self) -> float:
        """Coherence decay rate."""
        return 0.5 * self.gamma + self.gamma_deph

    def with_delta(self, delta: float) -> "DriveParams":
        return DriveParams(self.omega, delta, self.gamma, self.gamma_deph)


@dataclass(frozen=True)
class DensityMatrix2:
    rho_ee: float
    rho_eg: complex

    def __post_init__(self) -> None:
        ee = float(self.rho_ee)
        eg = complex(self.rho_eg)
        if not (math.isfinite(ee) and math.isfinite(eg.real) and math.isfinite(eg.imag)):
            raise ValueError("density matrix entries must be finite")
        if ee < -1e-9 or ee > 1 + 1e-9:
            raise ValueError(f"rho_ee={ee} outside [0, 1]")
        if abs(eg) ** 2 > ee * (1 - ee) + 1e-9:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "rho_ee", ee)
        object.__setattr__(self, "rho_eg", eg)

    @classmethod
    def ground(cls) -> "DensityMatrix2":
        return cls(0.0, 0j)

    @classmethod
    def from_matrix(cls, rho: np.ndarray) -> "DensityMatrix2":
        rho = np.asarray(rho, dtype=complex)
        tr = rho[0, 0].real + rho[1, 1].real
        return cls(rho[1, 1].real / tr, rho[1, 0] / tr)

    @classmethod
    def from_bloch(cls, x) -> "DensityMatrix2":
        return cls(float(x[0]), complex(x[1], x[2]))

    @property
    def matrix(self) -> np.ndarray:
        ee, eg = self.rho_ee, self.rho_eg
        return np.array([[1.0 - ee, np.conj(eg)], [eg, ee]], dtype=complex)

    @property
    def bloch(self) -> np.ndarray:
        return np.array([self.rho_ee, self.rho_eg.real, self.rho_eg.imag])


@dataclass(frozen=True)
class FieldModel:
    """Detected field a = background + coupling·σ₋."""

    background: complex
    coupling: float

    def __post_init__(self) -> None:
        b = complex(self.background)
        if not (math.isfinite(b.real) and math.isfinite(b.imag) and math.isfinite(self.coupling)):
            raise ValueError("field model must be finite")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")
        object.__setattr__(self, "background", b)

    @property
    def operator(self) -> np.ndarray:
        return self.background * np.eye(2, dtype=complex) + self.coupling * SIGMA_MINUS


@dataclass(frozen=True)
class G2Curve:
    taus: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.taus, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.shape != t.shape or t.size == 0:
            raise ValueError("taus and values must be 1-D of equal non-zero length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("taus must start at 0 and be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("g2 values must be finite")
        object.__setattr__(self, "taus", t)
        object.__setattr__(self, "values", v)

    @property
    def g2_zero(self) -> float:
        return float(self.values[0])


# ----------------------------------------------------------------------------
# Bloch equations


def bloch_generator(d: DriveParams) -> tuple[np.ndarray, np.ndarray]:
    """Affine generator: dx/dt = A x + b for x = (ρ_ee, Re ρ_eg, Im ρ_eg)."""
    D = d.delta_rate
    g, g2, om = d.gamma, d.gamma2, d.omega
    A = np.array(
        [
            [-g, 0.0, -om],
            [0.0, -g2, -D],
            [om, D, -g2],
        ]
    )
    b = np.array([0.0, 0.0, -0.5 * om])
    return A, b


def _augmented(d: DriveParams) -> np.ndarray:
    A, b = bloch_generator(d)
    M = np.zeros((4, 4))
    M[:3, :3] = A
    M[:3, 3] = b
    return M


def liouvillian(d: DriveParams) -> np.ndarray:
    """Full 4×4 superoperator acting on row-major vec(ρ); used as a check."""
    D = d.delta_rate
    H = np.array([[0.0, 0.5 * d.omega], [0.5 * d.omega, -D]], dtype=complex)
    I2 = np.eye(2)
    sm = SIGMA_MINUS
    sz = np.diag([-1.0, 1.0]).astype(complex)

    def left(X):
        return np.kron(X, I2)

    def right(X):
        return np.kron(I2, X.T)

    def dissipator(C, rate):
        CdC = C.conj().T @ C
        return rate * (np.kron(C, C.conj()) - 0.5 * left(CdC) - 0.5 * right(CdC))

    L = -1j * (left(H) - right(H))
    L = L + dissipator(sm, d.gamma)
    if d.gamma_deph > 0:
        L = L + dissipator(sz, 0.5 * d.gamma_deph)
    return L


def bloch_steady_state(d: DriveParams) -> DensityMatrix2:
    """Closed-form steady state."""
    D = d.delta_rate
    g2 = d.gamma2
    s = d.omega**2 * g2 / (2.0 * d.gamma * (D * D + g2 * g2))
    ee = s / (1.0 + 2.0 * s)
    eg = 0.5 * d.omega * (1.0 - 2.0 * ee) / (D + 1j * g2)
    return DensityMatrix2(ee, eg)


def _propagate(x0: np.ndarray, d: DriveParams, times: np.ndarray) -> np.ndarray:
    """Bloch vectors at each time; returns shape (len(times), 3)."""
    M = _augmented(d)
    stack = expm(times[:, None, None] * M[None, :, :])
    y0 = np.append(x0, 1.0)
    return (stack @ y0)[:, :3]


def bloch_evolve(rho0: DensityMatrix2, d: DriveParams, t):
    """Evolve ``rho0`` for time ``t`` (ns).

    Scalar ``t`` returns a :class:`DensityMatrix2`; an array returns a list.
    The trace is fixed at one by construction (ρ_gg = 1 − ρ_ee).
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0) or not np.all(np.isfinite(ts)):
        raise ValueError("evolution time must be finite and >= 0")
    xs = _propagate(rho0.bloch, d, ts)
    if not np.all(np.isfinite(xs)):
        raise FloatingPointError(f"matrix exponential produced non-finite values (max t={ts.max()})")
    out = [DensityMatrix2.from_bloch(x) for x in xs]
    return out[0] if np.ndim(t) == 0 else out


# ----------------------------------------------------------------------------
# Correlations


def default_taus(gamma: float, n: int = 400, t_lin: float = 2.0, t_max: float = 50.0) -> np.ndarray:
    """Linear on [0, t_lin/Γ], geometric on (t_lin/Γ, t_max/Γ]."""
    n_lin = n // 2
    lin = np.linspace(0.0, t_lin / gamma, n_lin)
    geo = np.geomspace(t_lin / gamma, t_max / gamma, n - n_lin + 1)[1:]
    return np.concatenate([lin, geo])


def _mean_intensity(f: FieldModel, x: np.ndarray) -> np.ndarray:
    """⟨a†a⟩ for Bloch vectors x (..., 3)."""
    b, c = f.background, f.coupling
    eg = x[..., 1] + 1j * x[..., 2]
    return abs(b) ** 2 + 2.0 * c * np.real(np.conj(b) * eg) + c * c * x[..., 0]


def mean_intensity(f: FieldModel, d: DriveParams) -> float:
    return float(_mean_intensity(f, bloch_steady_state(d).bloch))


def _conditional_state(f: FieldModel, rho: np.ndarray) -> tuple[np.ndarray, float]:
    A = f.operator
    rc = A @ rho @ A.conj().T
    n = rc[0, 0].real + rc[1, 1].real
    return rc, n


def g2_superposed(f: FieldModel, d: DriveParams, taus=None) -> G2Curve:
    """g²(τ) of a = β + c·σ₋ by quantum regression from the post-detection state."""
    taus = default_taus(d.gamma) if taus is None else np.asarray(taus, dtype=float)
    ss = bloch_steady_state(d)
    mean = float(_mean_intensity(f, ss.bloch))
    if not mean > 1e-300:
        raise DarkFieldError("dark field: mean detected intensity is zero")
    rc, n = _conditional_state(f, ss.matrix)
    if n <= 1e-300 * mean:
        # detection leaves nothing to evolve: g² vanishes identically at τ = 0
        xc = ss.bloch
    else:
        xc = np.array([rc[1, 1].real, rc[1, 0].real, rc[1, 0].imag]) / n
    xs = _propagate(xc, d, taus)
    num = _mean_intensity(f, xs) * (n / mean)
    g = num / mean
    # round-off can push an exact zero slightly negative
    g = np.where((g < 0) & (g > -1e-12), 0.0, g)
    return G2Curve(taus, g)


def g2_zero_direct(f: FieldModel, d: DriveParams) -> float:
    """tr[A†A†AA ρ] / tr[A†A ρ]², computed without the regression step."""
    A = f.operator
    rho = bloch_steady_state(d).matrix
    Ad = A.conj().T
    num = np.trace(Ad @ Ad @ A @ A @ rho).real
    den = np.trace(Ad @ A @ rho).real
    if not den > 1e-300:
        raise DarkFieldError("dark field: mean detected intensity is zero")
    return float(num / den**2)


# ----------------------------------------------------------------------------
# Detuning maps and calibration


@dataclass(frozen=True)
class G2Calibration:
    """Coupling and detuning offset of the superposed-field model.

    Model detuning = label detuning + ``delta_offset``; the background at each
    detuning is the cavity field there.
    """

    coupling: float
    delta_offset: float = 0.0
    residual: float = 0.0
    alternatives: tuple = field(default=(), compare=False)

    def field_at(self, cavity: CavityModel, delta_label: float) -> FieldModel:
        bg = complex(cavity_field(delta_label + self.delta_offset, cavity))
        return FieldModel(bg, self.coupling)

    def drive_at(self, d_base: DriveParams, delta_label: float) -> DriveParams:
        return d_base.with_delta(delta_label + self.delta_offset)


def g2_map(
    cavity: CavityModel,
    calibration: G2Calibration,
    d_base: DriveParams,
    delta_grid,
    taus=None,
) -> np.ndarray:
    """g²(τ) rows for each label detuning; shape (len(delta_grid), len(taus))."""
    deltas = np.asarray(delta_grid, dtype=float)
    if deltas.ndim != 1 or deltas.size == 0:
        raise ValueError("delta grid must be non-empty")
    taus = default_taus(d_base.gamma) if taus is None else np.asarray(taus, dtype=float)
    if taus.size == 0:
        raise ValueError("tau grid must be non-empty")
    rows = np.empty((deltas.size, taus.size))
    for i, dl in enumerate(deltas):
        f = calibration.field_at(cavity, dl)
        rows[i] = g2_superposed(f, calibration.drive_at(d_base, dl), taus).values
    return rows


def classify_g2_shape(g: G2Curve, eps: float = 0.02, gamma: float | None = None) -> str:
    """One of poissonian, bunched, antibunched, w_shaped, unclassified.

    Rules are applied in that order.  ``gamma`` (ns⁻¹), when given, enforces
    that the curve spans at least ten emitter lifetimes.
    """
    v = g.values
    if gamma is not None and g.taus[-1] < 10.0 / gamma:
        raise ValueError("curve must extend to at least 10 emitter lifetimes")
    g0 = v[0]
    if np.max(np.abs(v - 1.0)) < eps:
        return "poissonian"
    if g0 >= v.max() and g0 > 1.0 + eps:
        return "bunched"
    if g0 <= v.min() and g0 < 1.0 - eps:
        return "antibunched"
    k = int(np.argmin(v))
    if k > 0 and v[k] < 1.0 - eps and g0 > v[k]:
        return "w_shaped"
    return "unclassified"


class UnderdeterminedError(ValueError):
    """Fewer distinct calibration points than free parameters."""


def _g2_zero_at(cavity, d_base, coupling, offset, delta_label):
    bg = complex(cavity_field(delta_label + offset, cavity))
    return g2_zero_direct(FieldModel(bg, coupling), d_base.with_delta(delta_label + offset))


def fit_g2_map(
    targets,
    d_base: DriveParams,
    cavity: CavityModel,
    fit_offset: bool = True,
    shape_hints=(),
    threshold: float = 0.05,
    coupling_range: tuple[float, float] = (0.2, 12.0),
    offset_range: tuple[float, float] = (-10.0, 10.0),
) -> G2Calibration:
    """Least-squares calibration of (coupling, detuning offset) to g²(0) points.

    ``targets`` is a sequence of ``(delta_label, g2_zero)`` pairs.  The
    objective is Σ(g²(0; Δᵢ) − targetᵢ)².  Several exact solutions can
    exist; every start point of a deterministic grid is refined and the
    distinct minima below ``threshold`` are kept.  ``shape_hints``, given as
    ``(delta_label, label)`` pairs, only choose among those minima; otherwise the
    solution with the smallest |offset| wins.
    """
    pts = [(float(a), float(b)) for a, b in targets]
    n_free = 2 if fit_offset else 1
    if len({a for a, _ in pts}) < n_free:
        raise UnderdeterminedError(
            f"{len({a for a, _ in pts})} distinct detuning(s) for {n_free} free parameter(s)"
        )
    deltas = np.array([a for a, _ in pts])
    want = np.array([b for _, b in pts])

    def resid(x):
        c = x[0]
        off = x[1] if fit_offset else 0.0
        return np.array([_g2_zero_at(cavity, d_base, c, off, dl) for dl in deltas]) - want

    lo = [coupling_range[0]] + ([offset_range[0]] if fit_offset else [])
    hi = [coupling_range[1]] + ([offset_range[1]] if fit_offset else [])
    c_starts = np.geomspace(coupling_range[0] * 1.5, coupling_range[1] / 1.5, 8)
    o_starts = np.linspace(offset_range[0] * 0.8, offset_range[1] * 0.8, 9) if fit_offset else [None]

    found: list[tuple[float, float, float]] = []
    best_any = math.inf
    for c0 in c_starts:
        for o0 in o_starts:
            x0 = [c0] if o0 is None else [c0, o0]
            try:
                r = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
            except DarkFieldError:
                continue
            res = float(np.sqrt(np.sum(r.fun**2)))
            best_any = min(best_any, res)
            if res > threshold:
                continue
            c = float(r.x[0])
            off = float(r.x[1]) if fit_offset else 0.0
            if any(abs(c - fc) < 1e-6 * max(1.0, fc) and abs(off - fo) < 1e-6 for fc, fo, _ in found):
                continue
            found.append((c, off, res))
    if not found:
        raise UnfittableError(f"unfittable g2 targets: best residual {best_any:.3g}", best_any)

    def matches(sol) -> bool:
        c, off, _ = sol
        cal = G2Calibration(c, off)
        for dl, label in shape_hints:
            f = cal.field_at(cavity, dl)
            curve = g2_superposed(f, cal.drive_at(d_base, dl))
            if classify_g2_shape(curve) != label:
                return False
        return True

    # residual below 1e-9 counts as exact, so ties are broken by |offset|
    found.sort(key=lambda s: (round(s[2], 9), abs(s[1]), s[0]))
    pool = [s for s in found if matches(s)] if shape_hints else found
    if not pool:
        pool = found
    c, off, res = pool[0]
    alts = tuple((fc, fo, fr) for fc, fo, fr in found if (fc, fo) != (c, off))
    return G2Calibration(c, off, res, alts)
