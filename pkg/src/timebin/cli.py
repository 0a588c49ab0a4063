"""Command-line entry point: ``timebin <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 analysis error.
Every subcommand writes into ``--out-dir`` and finishes by writing
``run_manifest.json`` listing its outputs.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (DEFAULT_BIN_PS, DEFAULT_RANGE_PS, DEFAULT_WINDOW_PS, Histogram,
                       coincidence_stats, cross_correlate, visibility_to_s, z_visibility)
from .config import PRESETS, dump_config, load_config, load_preset
from .core import Port
from .errors import AnalysisError, ConfigError, TimebinError
from .fringe import (PlcPhaseMap, expected_fringe, fit_scan, fringe_scan, read_fringe_csv,
                     write_fringe_csv)
from .ring import (drop_port_transmission, energy_mismatch, filter_comb_offset, linewidth_nm,
                   pump_resonance, signal_idler_wavelengths)
from .sim import AnalyticRates, simulate, simulate_direct
from .tagio import TAG_WRITERS, read_tags, run_summary_text, write_stats

EXIT_OK, EXIT_CONFIG, EXIT_ANALYSIS = 0, 2, 3

# values quoted for the reference device: (label, value, uncertainty or None)
REFERENCE_VALUES = {
    "ccr_hz": ("CCR (64 ps, 0.41 mW) [Hz]", (90.0, 100.0), None),
    "car": ("CAR", 352.0, 14.0),
    "fwhm_ps": ("peak FWHM [ps]", 140.0, 10.0),
    "z_visibility": ("Z visibility", 0.9896, 0.0186),
    "x_visibility": ("X visibility", 0.9322, 0.0115),
    "s_value": ("S", 2.637, 0.033),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"timebin: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


# ---------------------------------------------------------------- helpers

def _config(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    cfg = load_config(args.config) if args.config else load_preset(args.preset or "paper-25C")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.duration is not None:
        over["duration_s"] = args.duration
    return replace(cfg, **over).validate() if over else cfg


def _config_source(args) -> str:
    return str(args.config) if args.config else f"preset:{args.preset or 'paper-25C'}"


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(args, out: Path, outputs: list[Path], seed) -> Path:
    missing = [str(p) for p in outputs if not Path(p).exists()]
    if missing:
        raise TimebinError(f"outputs missing before manifest: {missing}")
    manifest = {
        "configPath": _config_source(args) if hasattr(args, "preset") else None,
        "seed": seed,
        "outputs": [str(p) for p in outputs],
        "toolVersion": __version__,
        "startedAt": args.started_at,
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _write_table(path: Path, columns: list[str], rows, fmt: str) -> Path:
    if fmt == "jsonl":
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(dict(zip(columns, row))) + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def _ext(fmt: str) -> str:
    return "jsonl" if fmt == "jsonl" else "csv"


def _theta_grid(points: int) -> np.ndarray:
    if points < 5:
        raise ConfigError("need at least 5 points", "--points")
    return np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)


def _fit_dict(prefix: str, fit) -> dict:
    return {f"{prefix}_visibility": fit.visibility, f"{prefix}_visibility_err": fit.visibility_err,
            f"{prefix}_phase0_rad": fit.phase0, f"{prefix}_phase0_err": fit.phase0_err,
            f"{prefix}_offset": fit.offset, f"{prefix}_chisq_dof": fit.residual_chisq}


# ---------------------------------------------------------------- subcommands

def cmd_spectrum(args) -> list[Path]:
    cfg = _config(args)
    temp = cfg.ring_temperature_c if args.temperature is None else args.temperature
    if not args.lo_nm < args.hi_nm:
        raise ConfigError("--lo-nm must be below --hi-nm", "--lo-nm")
    if not args.step_nm > 0:
        raise ConfigError("step must be > 0", "--step-nm")
    n = int(math.floor((args.hi_nm - args.lo_nm) / args.step_nm)) + 1
    lam = args.lo_nm + args.step_nm * np.arange(n)
    trans = drop_port_transmission(cfg.ring, temp, lam)
    out = _out_dir(args)
    table = _write_table(out / f"spectrum.{_ext(args.format)}", ["wavelength_nm", "transmission"],
                         zip(lam.tolist(), np.atleast_1d(trans).tolist()), args.format)
    pump = pump_resonance(cfg.ring, temp)
    stats = {"temperature_c": float(temp), "pump_resonance_nm": pump,
             "linewidth_nm": linewidth_nm(cfg.ring, pump)}
    k = None
    if cfg.signal_filter_nm is not None and cfg.idler_filter_nm is not None:
        k = filter_comb_offset(cfg.ring, temp, cfg.signal_filter_nm, cfg.idler_filter_nm,
                               cfg.filter_bandwidth_nm)
    s, i = signal_idler_wavelengths(cfg.ring, temp, k or args.comb_offset, window=(1.0, 1e5))
    stats.update({"comb_offset": k or args.comb_offset, "signal_nm": s, "idler_nm": i,
                  "energy_mismatch_per_nm": energy_mismatch(pump, s, i),
                  "filters_on_comb": k is not None})
    st = write_stats(out / "spectrum_stats.txt", stats)
    return [table, st]


def cmd_run(args) -> list[Path]:
    cfg = _config(args)
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    stream = simulate(cfg, workers=args.workers)
    out = _out_dir(args)
    fmt = args.format or "ttag"
    writer, name = TAG_WRITERS[fmt]
    tags = writer(out / name, stream)
    summary = out / "run_summary.txt"
    summary.write_text(run_summary_text(stream, dump_config(cfg)))
    return [tags, summary]


def cmd_histogram(args) -> list[Path]:
    stream = read_tags(args.tags)
    hist = cross_correlate(stream, args.a, args.b, args.bin_ps, args.range_ps)
    stats = coincidence_stats(hist, args.window_ps, stream.duration_s, center_ps=args.center_ps,
                              peak_offsets=args.peaks or (args.center_ps,),
                              require_peak=not args.allow_no_peak)
    out = _out_dir(args)
    rows = zip(hist.edges[:-1].tolist(), hist.edges[1:].tolist(), hist.counts.tolist())
    table = _write_table(out / f"histogram.{_ext(args.format)}",
                         ["bin_start_ps", "bin_end_ps", "counts"], rows, args.format)
    info = {"channel_a": args.a, "channel_b": args.b, "bin_ps": args.bin_ps,
            "duration_s": stream.duration_s, **stats.as_dict()}
    st = write_stats(out / "histogram_stats.txt", info)
    return [table, st]


def cmd_zvis(args) -> list[Path]:
    stream = read_tags(args.tags)
    z = z_visibility(stream, args.z0, args.zp0, args.zp1, args.window_ps, args.center_ps,
                     min_counts=args.min_counts)
    out = _out_dir(args)
    st = write_stats(out / "zvis_stats.txt", {
        "z_visibility": z.visibility, "z_visibility_err": z.visibility_err,
        "matched_counts": z.matched, "mismatched_counts": z.mismatched,
        "window_ps": float(args.window_ps)})
    return [st]


def cmd_fringe(args) -> list[Path]:
    cfg = _config(args)
    theta = _theta_grid(args.points)
    if args.reps < 2:
        raise ConfigError("need at least 2 repetitions for error bars", "--reps")
    points = fringe_scan(cfg, theta, args.reps, args.window_ps, workers=args.workers)
    out = _out_dir(args)
    pmap = PlcPhaseMap(args.plc_theta0, args.plc_rad_per_c)
    if args.format == "jsonl":
        rows = [(p.theta1, float(pmap.temperature(p.theta1)), p.corr_mean, p.corr_std,
                 p.anti_mean, p.anti_std, len(p.correlated), list(p.correlated),
                 list(p.anticorrelated)) for p in points]
        from .fringe import FRINGE_COLUMNS
        table = _write_table(out / "fringe.jsonl", FRINGE_COLUMNS, rows, "jsonl")
    else:
        table = write_fringe_csv(out / "fringe.csv", points, pmap)
    fc, fa = fit_scan(points, refine_frequency=False)
    pred = expected_fringe(cfg, Port.X0, Port.X0, args.window_ps)
    stats = {"points": args.points, "repetitions": args.reps, "duration_per_rep_s": cfg.duration_s,
             "window_ps": float(args.window_ps), **_fit_dict("x0x0", fc), **_fit_dict("x0x1", fa),
             "phase_difference_rad": float((fa.phase0 - fc.phase0) % (2.0 * math.pi)),
             "predicted_visibility": float(pred.visibility),
             "predicted_mean_counts": float(pred.mean_counts)}
    st = write_stats(out / "fringe_stats.txt", stats)
    return [table, st]


def _read_fringe_any(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError("fringe file not found", str(path))
    if path.suffix == ".jsonl":
        from .fringe import FringePoint
        pts = []
        for line in path.read_text().splitlines():
            if line.strip():
                r = json.loads(line)
                pts.append(FringePoint(float(r["theta1_rad"]), tuple(r["x0x0_counts"]),
                                       tuple(r["x0x1_counts"])))
        return pts
    return read_fringe_csv(path)


def cmd_bell(args) -> list[Path]:
    stats = {}
    if args.visibility is not None:
        results = {"input": (args.visibility, args.visibility_err)}
    elif args.fringe:
        fc, fa = fit_scan(_read_fringe_any(args.fringe), refine_frequency=False)
        results = {"x0x0": (fc.visibility, fc.visibility_err), "x0x1": (fa.visibility, fa.visibility_err)}
    else:
        raise ConfigError("give a fringe file or --visibility", "bell")
    for name, (v, err) in results.items():
        if not 0.0 <= v <= 1.0:
            raise AnalysisError(f"{name}: fitted visibility {v:.4f} outside [0, 1]")
        b = visibility_to_s(v, err)
        stats.update({f"{name}_visibility": float(v), f"{name}_visibility_err": float(err),
                      f"{name}_s_value": b.s_value, f"{name}_s_err": b.s_err,
                      f"{name}_s_sigma": b.sigma, f"{name}_violates_bell": b.violates,
                      f"{name}_s_above_2p6": b.s_value > 2.6})
    out = _out_dir(args)
    return [write_stats(out / "bell_stats.txt", stats)]


def _mark(key: str, value: float, err: float) -> str:
    _, ref, ref_err = REFERENCE_VALUES[key]
    if isinstance(ref, tuple):
        return "ok" if ref[0] <= value <= ref[1] else "FLAG"
    tol = 3.0 * math.hypot(ref_err, err if math.isfinite(err) else 0.0)
    return "ok" if abs(value - ref) <= tol else "FLAG"


def cmd_report(args) -> list[Path]:
    cfg = _config(args)
    rows = {}
    # coincidence figures come from a direct-routed run at the quoted pump power
    direct = replace(cfg, mode="direct", source=replace(cfg.source, pump_power_mw=args.direct_power_mw))
    d = simulate_direct(direct)
    a, b = direct.channel_id(Port.Z0), direct.channel_id(Port.Z0, idler=True)
    cs = coincidence_stats(cross_correlate(d, a, b), DEFAULT_WINDOW_PS, d.duration_s)
    rows["ccr_hz"] = (cs.ccr_hz, math.sqrt(cs.peak_counts) / d.duration_s)
    rows["car"] = (cs.car, cs.car_err)
    rows["fwhm_ps"] = (cs.peak_fwhm_ps, math.nan)

    z0, zp0, zp1 = cfg.channel_id(Port.Z0), cfg.channel_id(Port.Z0, True), cfg.channel_id(Port.Z1, True)
    tags = simulate(replace(cfg, duration_s=args.z_duration), channels=[z0, zp0, zp1])
    z = z_visibility(tags, z0, zp0, zp1)
    rows["z_visibility"] = (z.visibility, z.visibility_err)

    points = fringe_scan(cfg, _theta_grid(args.points), args.reps)
    fc, _ = fit_scan(points, refine_frequency=False)
    rows["x_visibility"] = (fc.visibility, fc.visibility_err)
    bell = visibility_to_s(min(max(fc.visibility, 0.0), 1.0), fc.visibility_err)
    rows["s_value"] = (bell.s_value, bell.s_err)

    lines = [f"{'quantity':<28}{'simulated':>22}{'reference':>22}  mark"]
    stats = {}
    for key, (val, err) in rows.items():
        label, ref, ref_err = REFERENCE_VALUES[key]
        sim_txt = f"{val:.4g}" + (f" +- {err:.2g}" if math.isfinite(err) else "")
        ref_txt = f"{ref[0]:g}..{ref[1]:g}" if isinstance(ref, tuple) else f"{ref:g} +- {ref_err:g}"
        mark = _mark(key, val, err)
        lines.append(f"{label:<28}{sim_txt:>22}{ref_txt:>22}  {mark}")
        stats[key] = float(val)
        stats[f"{key}_err"] = float(err)
        stats[f"{key}_mark"] = mark
    rates = AnalyticRates.from_config(direct)
    stats["analytic_ccr_hz"] = rates.windowed_true_rate(a, b, DEFAULT_WINDOW_PS)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = _out_dir(args)
    table = out / "report.txt"
    table.write_text(text)
    return [table, write_stats(out / "report_stats.txt", stats)]


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--seed", type=int, help="override [run] seed")
    g.add_argument("--duration", type=float, help="override [run] duration_s (seconds)")
    g.add_argument("--out-dir", default=".", help="output directory (default: current)")
    g.add_argument("--format", choices=["csv", "jsonl"], help="table/tag output format")

    cfg = argparse.ArgumentParser(add_help=False)
    c = cfg.add_argument_group("configuration")
    c.add_argument("--config", help="INI config file")
    c.add_argument("--preset", choices=PRESETS, help="shipped preset (default paper-25C)")

    tags = argparse.ArgumentParser(add_help=False)
    tags.add_argument("--tags", required=True, help="tag file (TTAG0001 binary, JSONL or CSV)")
    tags.add_argument("--window-ps", type=float, default=DEFAULT_WINDOW_PS, help="coincidence window")
    tags.add_argument("--center-ps", type=float, default=0.0, help="window centre delay")

    p = _Parser(prog="timebin", description="Time-bin entangled photon pair simulator and analyzer.")
    p.add_argument("--version", action="version", version=f"timebin {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrum", parents=[common, cfg], help="ring drop-port spectrum")
    s.add_argument("--temperature", type=float, help="ring temperature C (default from config)")
    s.add_argument("--lo-nm", type=float, default=1530.0)
    s.add_argument("--hi-nm", type=float, default=1570.0)
    s.add_argument("--step-nm", type=float, default=0.005)
    s.add_argument("--comb-offset", type=int, default=1, help="used when no filters are configured")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("run", parents=[common, cfg], help="simulate a tag stream")
    s.add_argument("--mode", choices=["amzi", "direct"], help="override [run] mode")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("histogram", parents=[common, tags], help="coincidence histogram and CAR")
    s.add_argument("--a", type=int, default=0, help="start channel id (default 0, signal Z0)")
    s.add_argument("--b", type=int, default=4, help="stop channel id (default 4, idler Z'0)")
    s.add_argument("--bin-ps", type=int, default=DEFAULT_BIN_PS)
    s.add_argument("--range-ps", type=int, default=DEFAULT_RANGE_PS, help="half range of delays")
    s.add_argument("--peaks", type=float, nargs="*", help="expected peak delays excluded from the floor")
    s.add_argument("--allow-no-peak", action="store_true", help="report a flat histogram instead of failing")
    s.set_defaults(func=cmd_histogram)

    s = sub.add_parser("zvis", parents=[common, tags], help="Z-basis visibility")
    s.add_argument("--z0", type=int, default=0)
    s.add_argument("--zp0", type=int, default=4)
    s.add_argument("--zp1", type=int, default=7)
    s.add_argument("--min-counts", type=int, default=100)
    s.set_defaults(func=cmd_zvis)

    s = sub.add_parser("fringe", parents=[common, cfg], help="X-basis fringe scan over theta1")
    s.add_argument("--points", type=int, default=12)
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--window-ps", type=float, default=DEFAULT_WINDOW_PS)
    s.add_argument("--plc-theta0", type=float, default=0.0, help="phase at zero PLC offset (rad)")
    s.add_argument("--plc-rad-per-c", type=float, default=2.0 * math.pi, help="PLC phase slope")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_fringe)

    s = sub.add_parser("bell", parents=[common], help="CHSH S from fringe visibility")
    s.add_argument("fringe", nargs="?", help="fringe CSV/JSONL written by 'fringe'")
    s.add_argument("--visibility", type=float)
    s.add_argument("--visibility-err", type=float, default=0.0)
    s.set_defaults(func=cmd_bell)

    s = sub.add_parser("report", parents=[common, cfg], help="compare simulation with reference values")
    s.add_argument("--points", type=int, default=12)
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--direct-power-mw", type=float, default=0.41)
    s.add_argument("--z-duration", type=float, default=600.0, help="seconds simulated for the Z basis")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.started_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        outputs = args.func(args)
        seed = args.seed
        if seed is None and hasattr(args, "preset"):
            seed = _config(args).seed
        _write_manifest(args, Path(args.out_dir), outputs, seed)
    except ConfigError as exc:
        sys.stderr.write(f"timebin: config error: {exc}\n")
        return EXIT_CONFIG
    except AnalysisError as exc:
        sys.stderr.write(f"timebin: analysis error: {type(exc).__name__}: {exc}\n")
        return EXIT_ANALYSIS
    except TimebinError as exc:
        sys.stderr.write(f"timebin: error: {exc}\n")
        return EXIT_ANALYSIS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
