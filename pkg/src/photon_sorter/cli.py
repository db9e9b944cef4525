"""Command-line interface: ``photon-sorter <command> [options]``.

Every command writes CSV/JSON files plus ``manifest.json`` into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 numerical or fit
failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .bloch import (
    DarkFieldError,
    DriveParams,
    FieldModel,
    G2Curve,
    UnderdeterminedError,
    classify_g2_shape,
    default_taus,
    fit_g2_map,
    g2_map,
    g2_superposed,
)
from .io import sha256, write_csv, write_json
from .scatter import (
    UnfittableError,
    cavity_field,
    fit_modulation,
    modulation_metrics,
    reflectivity_spectrum,
    response_components,
    _relative_residual,
)
from .spin import (
    ChargeSpinParams,
    analytic_degree,
    background_for_g2_zero,
    blinking_emitter_clicks,
    blinking_g2_values,
    emit_polarized_clicks,
    fit_exponential,
    gillespie_charge_spin,
    pol_correlation,
)
from .trajectory import (
    OvercoupledError,
    bin_averaged,
    binned_correlation,
    expected_click_rate,
    expected_histogram,
    g2_zero_estimate,
    mc_jump_shards,
    merged_histogram,
    triangular_average,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class _Ctx:
    def __init__(self, cfg: cfgmod.RunConfig, out: Path, args):
        self.cfg = cfg
        self.out = out
        self.args = args
        self.files: list[Path] = []

    def csv(self, name, header, cols):
        self.files.append(write_csv(self.out / name, header, cols))

    def json(self, name, obj):
        self.files.append(write_json(self.out / name, obj))

    def workers(self):
        w = self.cfg["run.workers"]
        return None if w <= 0 else w


def _drive(cfg, delta_internal: float = 0.0) -> DriveParams:
    return DriveParams.from_emitter(cfg.emitter, delta_internal, cfg["drive.gamma_deph"])


def _no_transition(ctx) -> bool:
    return bool(getattr(ctx.args, "no_charge", False))


# ----------------------------------------------------------------------------
# commands


def cmd_spectrum(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    g = cfg.values["grids"]
    sign = cfg.sign
    grid = np.linspace(g["detuning_min"], g["detuning_max"], g["detuning_points"])
    internal = np.sort(sign * grid)
    p, c = cfg.emitter, cfg.cavity
    active = reflectivity_spectrum(internal, p, c, transition_active=not _no_transition(ctx))
    inactive = reflectivity_spectrum(internal, p, c, transition_active=False)
    re, im = response_components(internal, p)
    axis = sign * internal
    order = np.argsort(axis)
    ctx.csv("spectrum_active.csv", ["detuning_ueV", "value"], [axis[order], active.values[order]])
    ctx.csv("spectrum_inactive.csv", ["detuning_ueV", "value"], [axis[order], inactive.values[order]])
    ctx.csv("response_real.csv", ["detuning_ueV", "value"], [axis[order], re.values[order]])
    ctx.csv("response_imag.csv", ["detuning_ueV", "value"], [axis[order], im.values[order]])
    m = modulation_metrics(active, inactive)
    targets = cfg.modulation_targets
    res = (
        _relative_residual(m.enhancement_pct, m.suppression_pct, targets)
        if targets.enhancement_pct > 0 and targets.suppression_pct > 0
        else None
    )
    ctx.json(
        "summary.json",
        {
            "enhancement_pct": m.enhancement_pct,
            "suppression_pct": m.suppression_pct,
            "total_pct": m.total_pct,
            "excluded_points": m.excluded_points,
            "target_residual": res,
            "transition_active": not _no_transition(ctx),
        },
    )


def _curve_at(cfg, delta_label: float, no_transition: bool):
    cal = cfg.g2_calibration
    if no_transition:
        cal = replace(cal, coupling=0.0)
    dl = cfg.sign * delta_label
    f = cal.field_at(cfg.cavity, dl)
    d = cal.drive_at(_drive(cfg), dl)
    return f, d, g2_superposed(f, d, default_taus(d.gamma, cfg["grids.tau_points"]))


def cmd_g2(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    delta = ctx.args.delta if ctx.args.delta is not None else cfg["drive.delta"]
    f, d, curve = _curve_at(cfg, delta, _no_transition(ctx))
    ctx.csv("g2.csv", ["tau_ns", "g2"], [curve.taus, curve.values])
    ctx.json(
        "g2_summary.json",
        {
            "delta_ueV": delta,
            "g2_zero": curve.g2_zero,
            "g2_tau_max": float(curve.values[-1]),
            "label": classify_g2_shape(curve, gamma=d.gamma),
        },
    )


def cmd_g2map(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    g = cfg.values["grids"]
    labels = np.linspace(g["map_detuning_min"], g["map_detuning_max"], g["map_detuning_points"])
    cal = cfg.g2_calibration
    if _no_transition(ctx):
        cal = replace(cal, coupling=0.0)
    d = _drive(cfg)
    taus = default_taus(d.gamma, g["tau_points"])
    rows = g2_map(cfg.cavity, cal, d, cfg.sign * labels, taus)
    ctx.csv(
        "g2map.csv",
        ["detuning_ueV", "tau_ns", "g2"],
        [np.repeat(labels, taus.size), np.tile(taus, labels.size), rows.ravel()],
    )
    kinds = [classify_g2_shape(G2Curve(taus, r), gamma=d.gamma) for r in rows]
    ctx.csv("g2map_labels.csv", ["detuning_ueV", "g2_zero", "label"], [labels, rows[:, 0], kinds])


def _emitter_g2_fn(f, d):
    taus = np.concatenate([np.linspace(0.0, 2.0, 4001), np.geomspace(2.0, 60.0 / d.gamma + 2.0, 200)[1:]])
    curve = g2_superposed(f, d, taus)
    return lambda t: np.interp(t, curve.taus, curve.values, right=1.0)


def cmd_hbt(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    t = cfg.values["trajectory"]
    seed = cfg.seed
    mode = "coherent" if _no_transition(ctx) else t["mode"]
    w, tmax, shards = t["bin_width_ns"], t["tau_max_ns"], t["shards"]
    duration = t["duration_ns"]
    summary: dict = {"mode": mode, "seed": seed, "duration_ns": duration, "shards": shards}
    delta = ctx.args.delta if ctx.args.delta is not None else cfg["drive.delta"]

    if mode == "mixing":
        # resonant scattering of a blinking emitter, mixed with Poissonian light
        f = FieldModel(0.0, 1.0)
        d = _drive(cfg, 0.0)
        rrs = expected_click_rate(f, d)
        cs = cfg.charge_spin
        ge = _emitter_g2_fn(f, d)
        if t["background_ratio"] == "auto":
            bg = background_for_g2_zero(cfg["calibration.g2_zero_target"], cs, ge, w, rrs)
        else:
            bg = t["background_ratio"] * rrs * cs.p_on
        q = ChargeSpinParams(cs.r_charge, cs.r_discharge, cs.r_spinflip, rrs, bg)
        with ThreadPoolExecutor(max_workers=ctx.workers()) as ex:
            streams = list(ex.map(lambda i: blinking_emitter_clicks(f, d, q, duration / shards, seed, i), range(shards)))
        summary.update(rrs_rate_on=rrs, bg_rate=bg, background_ratio=bg / (rrs * cs.p_on))

        def model(x):
            return blinking_g2_values(q, x, ge)

    else:
        if mode == "field":
            cal = cfg.g2_calibration
            dl = cfg.sign * delta
            f = cal.field_at(cfg.cavity, dl)
            d = cal.drive_at(_drive(cfg), dl)
            summary["delta_ueV"] = delta
        else:
            f = FieldModel(complex(cavity_field(cfg.sign * delta, cfg.cavity)), 0.0)
            d = _drive(cfg, 0.0)
        streams = mc_jump_shards(f, d, duration, seed, shards, workers=ctx.workers())
        model = None

    h = merged_histogram(streams, w, tmax)
    g0, err = g2_zero_estimate(h)
    centers = h.centers
    if mode == "mixing":
        expect = bin_averaged(model, centers, w)
    elif mode == "field":
        expect = expected_histogram(f, d, centers, w)
    else:
        expect = np.ones(centers.size)
    ctx.csv("hbt_histogram.csv", ["tau_ns", "counts", "g2_normalized", "g2_model"], [centers, h.counts, h.g2, expect])
    summary.update(n_clicks=h.n_clicks, g2_zero=g0, g2_zero_stderr=err, g2_zero_model=float(expect[h.half_bins]))

    if mode == "mixing":
        bc = binned_correlation(streams, t["long_bin_ns"], t["long_lags"])
        m = triangular_average(model, bc.lags, t["long_bin_ns"])
        z = (bc.values - m) / bc.sigma
        ctx.csv("hbt_long.csv", ["tau_ns", "g2", "sigma", "g2_model"], [bc.lags, bc.values, bc.sigma, m])
        summary.update(long_max_abs_z=float(np.max(np.abs(z))), long_bins_outside_3sigma=int(np.sum(np.abs(z) > 3)))
    if t["write_clicks"]:
        path = ctx.out / "clicks.npz"
        np.savez(path, **{f"shard{i}": s.times for i, s in enumerate(streams)})
        ctx.files.append(path)
    ctx.json("hbt_summary.json", summary)


def cmd_polcorr(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    pc = cfg.values["polcorr"]
    p = cfg.charge_spin
    traj = gillespie_charge_spin(p, pc["duration_ns"], cfg.seed)
    s = emit_polarized_clicks(traj, p, cfg.seed)
    r = pol_correlation(s, pc["bin_width_ns"], pc["tau_max_ns"])
    ctx.csv("polcorr.csv", ["tau_ns", "n_same", "n_cross", "degree"], [r.centers, r.n_same, r.n_cross, r.degree])
    ctx.csv("polcorr_analytic.csv", ["tau_ns", "degree"], [r.centers, analytic_degree(p, r.centers)])
    fit = fit_exponential(r)
    ctx.json(
        "polcorr_fit.json",
        {
            "amplitude": fit.amplitude,
            "amplitude_err": fit.amplitude_err,
            "timescale_ns": fit.timescale,
            "timescale_err_ns": fit.timescale_err,
            "reliable": fit.reliable,
            "degree_first_bin": float(r.degree[0]),
            "n_clicks": len(s),
            "occupancy": traj.occupancy,
        },
    )


def cmd_fit(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    sign = cfg.sign
    side = cfg["calibration.enhance_side"]
    if sign < 0 and side != "any":
        side = "positive" if side == "negative" else "negative"
    # dip shape comes from the config; only r_background and phase are fitted
    mf = fit_modulation(cfg.modulation_targets, cfg.emitter, cfg.cavity, enhance_side=side)
    targets = [(sign * a, b) for a, b in cfg["calibration.g2_targets"]]
    hints = [(sign * a, b) for a, b in cfg["calibration.shape_hints"]]
    cal = fit_g2_map(targets, _drive(cfg), mf.cavity, shape_hints=hints)
    fitted = {
        "cavity.r_background": mf.cavity.r_background,
        "cavity.phase_offset": mf.cavity.phase_offset,
        "calibration.coupling": cal.coupling,
        "calibration.delta_offset": cal.delta_offset,
    }
    values = {sec: dict(keys) for sec, keys in cfg.values.items()}
    for k, v in fitted.items():
        sec, _, key = k.partition(".")
        values[sec][key] = v
    new = cfgmod.RunConfig(values).validate()
    (ctx.out / "calibrated.ini").write_text(new.to_ini(), encoding="utf-8", newline="\n")
    ctx.files.append(ctx.out / "calibrated.ini")
    ctx.json(
        "fit.json",
        {
            "modulation_residual": mf.residual,
            "enhancement_pct": mf.metrics.enhancement_pct,
            "suppression_pct": mf.metrics.suppression_pct,
            "total_pct": mf.metrics.total_pct,
            "g2_residual": cal.residual,
            "alternatives": [{"coupling": a, "delta_offset": b, "residual": r} for a, b, r in cal.alternatives],
            **fitted,
        },
    )


COMMANDS = {
    "spectrum": (cmd_spectrum, "reflectivity spectra and modulation metrics (Figs. 2c/d, 3a-d)"),
    "g2": (cmd_g2, "g2(tau) at one detuning with its shape label (Figs. 3g-l)"),
    "g2map": (cmd_g2map, "g2(tau) across detuning (Figs. 3e/f)"),
    "hbt": (cmd_hbt, "Monte Carlo coincidence histogram (Fig. 2b and its inset)"),
    "polcorr": (cmd_polcorr, "polarisation-sorted correlations (Fig. 4b)"),
    "fit": (cmd_fit, "recalibrate cavity and coupling to the configured targets"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="photon-sorter", description="Single-emitter photon sorter simulator.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name in ("spectrum", "g2", "g2map", "hbt"):
            sp.add_argument("--no-charge", action="store_true", help="remove the transition (empty dot)")
        if name in ("g2", "hbt"):
            sp.add_argument("--delta", type=float, help="detuning in ueV (overrides drive.delta)")
    dd = sub.add_parser("dump-defaults", parents=[common], help="print the default configuration")
    dd.add_argument("--resolved", action="store_true", help="print the resolved config instead of pure defaults")
    return ap


def _load(args) -> cfgmod.RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    return cfgmod.load(args.config, overrides)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = _load(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.command == "dump-defaults":
        text = (cfg if args.resolved else cfgmod.defaults()).to_ini()
        if args.out is not None:
            try:
                args.out.parent.mkdir(parents=True, exist_ok=True)
                args.out.write_text(text, encoding="utf-8", newline="\n")
            except OSError as exc:
                print(f"i/o error: {exc}", file=sys.stderr)
                return EXIT_IO
        else:
            sys.stdout.write(text)
        return EXIT_OK

    out = args.out if args.out is not None else Path(cfg["run.out"])
    t0 = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        ctx = _Ctx(cfg, out, args)
        COMMANDS[args.command][0](ctx)
        manifest = {
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "version": __version__,
            "config": cfg.to_ini(),
            "wall_clock_s": time.time() - t0,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(t0)),
            "files": {p.name: sha256(p) for p in ctx.files},
        }
        write_json(out / "manifest.json", manifest)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UnfittableError, DarkFieldError, OvercoupledError, UnderdeterminedError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
