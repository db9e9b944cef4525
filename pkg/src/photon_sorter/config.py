"""INI configuration: schema, defaults, validation and round-tripping.

Every key has a typed default.  Unknown sections or keys are rejected with
their location.  Durations are stored in ns; a key ``foo_ns`` may instead be
given as ``foo_us`` and is converted on ingest.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .bloch import G2Calibration
from .scatter import ModulationMetrics
from .spin import ChargeSpinParams
from .units import CavityModel, EmitterParams, fwhm_to_hwhm


class ConfigError(ValueError):
    pass


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s

    return parse


def _pairs(kind):
    """Comma-separated ``delta:value`` pairs."""

    def parse(s: str):
        out = []
        for item in s.split(","):
            item = item.strip()
            if not item:
                continue
            a, sep, b = item.partition(":")
            if not sep:
                raise ValueError(f"expected delta:value, got {item!r}")
            out.append((_float(a), kind(b.strip())))
        return tuple(out)

    return parse


def _auto_float(s: str):
    return "auto" if s.strip() == "auto" else _float(s)


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


# calibrated cavity and coupling; `photon-sorter fit` reproduces these
CALIBRATED = {
    "r0": 0.2552,
    "r_background": 0.38298447062074426,
    "dip_depth": 0.8989,
    "center": 7.069,
    "kappa_fwhm": 7.302,
    "phase_offset": -2.479128420503158,
    "coupling": 1.4568910736838852,
    "delta_offset": 3.7119594819374777,
}

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "emitter": {
        "gamma0_fwhm": (_float, 7.7),
        "r0": (_float, CALIBRATED["r0"]),
        "rabi_ghz": (_float, 0.83),
        "beta": (_float, 0.9),
    },
    "cavity": {
        "r_background": (_float, CALIBRATED["r_background"]),
        "dip_depth": (_float, CALIBRATED["dip_depth"]),
        "center": (_float, CALIBRATED["center"]),
        "kappa_fwhm": (_float, CALIBRATED["kappa_fwhm"]),
        "phase_offset": (_float, CALIBRATED["phase_offset"]),
    },
    "drive": {
        "gamma_deph": (_float, 0.0),
        "detuning_sign": (_int, 1),
        "delta": (_float, 2.1),
    },
    "calibration": {
        "enhancement_pct": (_float, 210.0),
        "suppression_pct": (_float, 26.0),
        "enhance_side": (_choice("negative", "positive", "any"), "negative"),
        "g2_targets": (_pairs(_float), ((-8.7, 0.75), (6.8, 1.75))),
        "shape_hints": (_pairs(str), ((2.1, "w_shaped"),)),
        "coupling": (_float, CALIBRATED["coupling"]),
        "delta_offset": (_float, CALIBRATED["delta_offset"]),
        "g2_zero_target": (_float, 0.28),
    },
    "charge_spin": {
        "r_charge": (_float, 2e-4),
        "r_discharge": (_float, 2e-4),
        "r_spinflip": (_float, 1.0 / 315.0),
        "rrs_rate": (_float, 0.05),
        "bg_rate": (_float, 0.0),
    },
    "grids": {
        "detuning_min": (_float, -40.0),
        "detuning_max": (_float, 40.0),
        "detuning_points": (_int, 2001),
        "tau_points": (_int, 400),
        "map_detuning_min": (_float, -15.0),
        "map_detuning_max": (_float, 15.0),
        "map_detuning_points": (_int, 61),
    },
    "trajectory": {
        "mode": (_choice("mixing", "field", "coherent"), "mixing"),
        "duration_ns": (_float, 2e7),
        "shards": (_int, 16),
        "bin_width_ns": (_float, 0.1),
        "tau_max_ns": (_float, 2.0),
        "long_bin_ns": (_float, 200.0),
        "long_lags": (_int, 40),
        "background_ratio": (_auto_float, "auto"),
        "write_clicks": (_bool, False),
    },
    "polcorr": {
        "duration_ns": (_float, 5e7),
        "bin_width_ns": (_float, 10.0),
        "tau_max_ns": (_float, 1500.0),
    },
    "run": {
        "seed": (_seed, 1),
        "out": (str, "out"),
        "workers": (_int, 0),
    },
}


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(f"{a!r}:{b!r}" if isinstance(b, float) else f"{a!r}:{b}" for a, b in v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        sec, _, k = key.partition(".")
        return self.values[sec][k]

    @property
    def emitter(self) -> EmitterParams:
        e = self.values["emitter"]
        return EmitterParams(fwhm_to_hwhm(e["gamma0_fwhm"]), e["r0"], e["rabi_ghz"], e["beta"])

    @property
    def cavity(self) -> CavityModel:
        return CavityModel(**self.values["cavity"])

    @property
    def charge_spin(self) -> ChargeSpinParams:
        return ChargeSpinParams(**self.values["charge_spin"])

    @property
    def g2_calibration(self) -> G2Calibration:
        c = self.values["calibration"]
        return G2Calibration(c["coupling"], c["delta_offset"])

    @property
    def modulation_targets(self) -> ModulationMetrics:
        c = self.values["calibration"]
        return ModulationMetrics.from_targets(c["enhancement_pct"], c["suppression_pct"])

    @property
    def sign(self) -> int:
        return self.values["drive"]["detuning_sign"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for sec, keys in SCHEMA.items():
            cp[sec] = {k: _render(self.values[sec][k]) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().replace("\r\n", "\n")

    def validate(self) -> "RunConfig":
        """Build every parameter object once so bad values fail at load time."""
        try:
            self.emitter
            self.cavity
            self.charge_spin
            self.g2_calibration
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.sign not in (-1, 1):
            raise ConfigError("drive.detuning_sign: must be +1 or -1")
        g = self.values["grids"]
        if g["detuning_points"] < 2 or g["detuning_max"] <= g["detuning_min"]:
            raise ConfigError("grids: detuning grid must have >= 2 increasing points")
        if g["map_detuning_points"] < 1 or g["map_detuning_max"] < g["map_detuning_min"]:
            raise ConfigError("grids: map detuning grid is empty")
        if g["tau_points"] < 4:
            raise ConfigError("grids.tau_points: need at least 4 points")
        t = self.values["trajectory"]
        for k in ("duration_ns", "bin_width_ns", "tau_max_ns", "long_bin_ns"):
            if not t[k] > 0:
                raise ConfigError(f"trajectory.{k}: must be > 0")
        if t["shards"] < 1 or t["long_lags"] < 1:
            raise ConfigError("trajectory: shards and long_lags must be >= 1")
        bg = t["background_ratio"]
        if bg != "auto" and bg < 0:
            raise ConfigError("trajectory.background_ratio: must be >= 0 or auto")
        p = self.values["polcorr"]
        for k in ("duration_ns", "bin_width_ns", "tau_max_ns"):
            if not p[k] > 0:
                raise ConfigError(f"polcorr.{k}: must be > 0")
        return self


def defaults() -> RunConfig:
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def _set(values: dict, sec: str, key: str, raw: str, where: str) -> None:
    if sec not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{sec}]")
    keys = SCHEMA[sec]
    factor = 1.0
    if key not in keys and key.endswith("_us") and key[:-3] + "_ns" in keys:
        key, factor = key[:-3] + "_ns", 1e3
    if key not in keys:
        raise ConfigError(f"{where}: unknown key '{key}' in [{sec}]")
    parse = keys[key][0]
    try:
        v = parse(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {sec}.{key}: {exc}") from exc
    if factor != 1.0:
        v = v * factor
    values[sec][key] = v


def load(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path``, then ``section.key=value`` overrides."""
    cfg = defaults()
    values = {s: dict(v) for s, v in cfg.values.items()}
    if path is not None:
        path = Path(path)
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        text = path.read_text(encoding="utf-8")  # OSError propagates as an I/O failure
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        # configparser drops line numbers, so locate keys by scanning the text
        lines = text.splitlines()
        for sec in cp.sections():
            for key, raw in cp.items(sec, raw=True):
                ln = next(
                    (i + 1 for i, l in enumerate(lines) if l.strip().split("=")[0].strip().lower() == key),
                    "?",
                )
                _set(values, sec, key, raw, f"{path}:{ln}")
    for item in overrides:
        lhs, sep, raw = item.partition("=")
        sec, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        _set(values, sec, key.strip(), raw.strip(), f"--set {item}")
    return RunConfig(values).validate()
