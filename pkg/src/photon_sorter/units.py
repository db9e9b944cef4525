"""Units and shared parameter types.

Energies (detunings, linewidths) are in µeV, times in ns and dynamical rates
in angular ns⁻¹.  There is exactly one conversion point between the two,
:func:`energy_to_rate`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

#: Reduced Planck constant in µeV·ns.
HBAR_UEV_NS = 0.6582119569


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def energy_to_rate(e: float) -> float:
    """Convert an energy in µeV to an angular rate in ns⁻¹."""
    e = _finite("energy", e)
    if e < 0:
        raise ValueError(f"energy must be non-negative, got {e}")
    return e / HBAR_UEV_NS


def rate_to_energy(rate: float) -> float:
    """Inverse of :func:`energy_to_rate`."""
    rate = _finite("rate", rate)
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    return rate * HBAR_UEV_NS


def detuning_to_rate(delta: float) -> float:
    """Signed variant of :func:`energy_to_rate` for detunings."""
    return _finite("detuning", delta) / HBAR_UEV_NS


def fwhm_to_hwhm(e: float) -> float:
    e = _finite("linewidth", e)
    if e < 0:
        raise ValueError(f"linewidth must be non-negative, got {e}")
    return e / 2.0


def rabi_ghz_to_omega(rabi_ghz: float) -> float:
    """Cyclic Rabi frequency in GHz -> angular Rabi frequency in ns⁻¹."""
    rabi_ghz = _finite("rabi_ghz", rabi_ghz)
    if rabi_ghz < 0:
        raise ValueError("rabi_ghz must be non-negative")
    return 2.0 * math.pi * rabi_ghz


@dataclass(frozen=True)
class EmitterParams:
    """Transition parameters.

    ``gamma0_hwhm`` is the half-width of the amplitude Lorentzian in µeV;
    ``r0`` the peak reflectivity of the transition; ``rabi_ghz`` the cyclic
    Rabi frequency; ``beta`` the collection β-factor (informational only).
    """

    gamma0_hwhm: float = fwhm_to_hwhm(7.7)
    r0: float = 0.3
    rabi_ghz: float = 0.83
    beta: float = 0.9

    def __post_init__(self) -> None:
        for name in ("gamma0_hwhm", "r0", "rabi_ghz", "beta"):
            _finite(name, getattr(self, name))
        if self.gamma0_hwhm <= 0:
            raise ValueError("gamma0_hwhm must be > 0")
        if not 0.0 <= self.r0 <= 1.0:
            raise ValueError("r0 must lie in [0, 1]")
        if self.rabi_ghz < 0:
            raise ValueError("rabi_ghz must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @property
    def gamma(self) -> float:
        """Population decay rate Γ = 2Γ₀/ħ in ns⁻¹."""
        return 2.0 * energy_to_rate(self.gamma0_hwhm)

    @property
    def omega(self) -> float:
        return rabi_ghz_to_omega(self.rabi_ghz)


@dataclass(frozen=True)
class CavityModel:
    """Lorentzian dip on a flat background, with a global phase.

    R_cavity(Δ) = r_background · (1 − dip_depth · L(Δ − center)), L a
    unit-peak Lorentzian of FWHM ``kappa_fwhm`` (µeV).
    """

    r_background: float = 1.0
    dip_depth: float = 0.0
    center: float = 0.0
    kappa_fwhm: float = 100.0
    phase_offset: float = 0.0

    def __post_init__(self) -> None:
        for name in ("r_background", "dip_depth", "center", "kappa_fwhm", "phase_offset"):
            _finite(name, getattr(self, name))
        if not 0.0 <= self.r_background <= 1.0:
            raise ValueError("r_background must lie in [0, 1]")
        if not 0.0 <= self.dip_depth <= 1.0:
            raise ValueError("dip_depth must lie in [0, 1]")
        if self.kappa_fwhm <= 0:
            raise ValueError("kappa_fwhm must be > 0")
