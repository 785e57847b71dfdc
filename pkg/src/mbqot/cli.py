"""Command-line front end.

Exit codes
    0   success
    1   configuration error (unreadable or invalid scenario)
    2   solver error (power evolution or NLI integration failed)
    3   infeasible optimization constraints
    4   oracle check outside tolerance
    64  usage error (bad flags or arguments)
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import gsnr_peak_to_peak, w_to_dbm
from .nli import NliError, nli_closed_form, nli_oracle
from .optimizer import Constraints, InfeasibleConstraintsError, ObjectiveSpec, default_pumps, optimize
from .power import PowerEvolutionError, link_propagate
from .scenario import Scenario, ScenarioError, dump_scenario, load_scenario_file, scenario_hash
from .simulate import simulate

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE, EXIT_TOLERANCE, EXIT_USAGE = 0, 1, 2, 3, 4, 64
OUT_ENV = "MBQOT_OUT"

log = logging.getLogger("mbqot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, sc: Scenario, seed, started: str, files: list[Path]) -> Path:
    """Written last: its presence marks a complete run."""
    doc = {
        "command": command,
        "scenario_hash": scenario_hash(sc),
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "files": [{"name": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)} for p in files],
    }
    path = out / "manifest.json"
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2))
    tmp.replace(path)
    return path


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "mbqot_out")


def _load(args) -> Scenario:
    path = Path(args.scenario)
    if not path.is_file():
        raise ScenarioError(str(path), "scenario file not found")
    return load_scenario_file(path)


def _save_scenario(out: Path, sc: Scenario) -> Path:
    p = out / "scenario.toml"
    p.write_text(dump_scenario(sc))
    return p


def _parse_channels(text: str, n: int) -> list[int]:
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise UsageError("--channels must list at least one channel index")
    out = []
    for t in items:
        if "-" in t[1:]:
            a, b = t.split("-", 1)
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(t))
    bad = [c for c in out if not 0 <= c < n]
    if bad:
        raise UsageError(f"channel indices {bad} outside 0..{n - 1}")
    return sorted(set(out))


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    sc = _load(args)
    if args.isrs is not None:
        sc = sc.with_isrs(args.isrs == "on")
    started = _now()
    res = simulate(sc)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    files = [_save_scenario(out, sc)] + res.write(out, profiles=not args.no_profiles)
    _write_manifest(out, "simulate", sc, None, started, files)
    s = res.summary()
    print(f"throughput {s['throughput_tbps']:.3f} Tb/s, GSNR peak-to-peak {s['gsnr_pp_dB']:.2f} dB -> {out}")
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_optimize(args) -> int:
    sc = _load(args)
    if args.isrs is not None:
        sc = sc.with_isrs(args.isrs == "on")
    if args.pumps == "none" or args.pumps == "0":
        sc = sc.with_pumps(())
    elif args.pumps is not None:
        try:
            n = int(args.pumps)
        except ValueError:
            raise UsageError("--pumps expects a count or 'none'") from None
        if n < 0:
            raise UsageError("--pumps must be >= 0")
        if len(sc.pumps) != n:
            sc = sc.with_pumps(default_pumps(n))
    if args.budget < 1:
        raise UsageError("--budget must be >= 1")
    obj = ObjectiveSpec.from_cli(args.objective)
    started = _now()
    out = _out_dir(args)
    constraints = Constraints.from_scenario(sc)
    constraints.check(len(sc.pumps))
    out.mkdir(parents=True, exist_ok=True)
    resume = out / "resume.json" if args.resume else None
    rep = optimize(sc, obj, constraints, args.budget, seed=args.seed, launch_mode=args.launch_mode,
                   resume_path=resume)
    final = rep.best.apply(sc)
    report = out / "report.json"
    report.write_text(rep.to_json())
    files = [_save_scenario(out, sc), report]
    files += rep.result.write(out, profiles=False)
    opt_sc = out / "optimized_scenario.toml"
    opt_sc.write_text(dump_scenario(final))
    files.append(opt_sc)
    if resume is not None and resume.exists():
        files.append(resume)
    _write_manifest(out, "optimize", sc, args.seed, started, files)
    print(f"{obj.kind}: {rep.best_value:.4f} Tb/s per channel, throughput {rep.throughput_tbps:.3f} Tb/s, "
          f"GSNR peak-to-peak {rep.gsnr_pp_db:.2f} dB after {rep.evaluations} evaluations -> {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    sc = _load(args)
    if args.isrs is not None:
        sc = sc.with_isrs(args.isrs == "on")
    channels = _parse_channels(args.channels, sc.n_channels)
    if args.tol < 0:
        raise UsageError("--tol must be >= 0")
    started = _now()
    link = link_propagate(sc)
    cf = nli_closed_form(sc, link)
    orc = nli_oracle(sc, link, channels, rtol=args.rtol)
    delta = w_to_dbm(cf.p_nli[channels]) - w_to_dbm(orc.p_nli)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "oracle_check.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", "freq_THz", "P_NLI_cf_W", "P_NLI_oracle_W", "delta_dB"])
        for c, f, a, b, d in zip(channels, orc.freqs_thz, cf.p_nli[channels], orc.p_nli, delta):
            w.writerow([c, f"{f:.6f}", f"{a:.9g}", f"{b:.9g}", f"{d:.4f}"])
    files = [_save_scenario(out, sc), table]
    _write_manifest(out, "oracle-check", sc, None, started, files)
    worst = np.argsort(-np.abs(delta))
    print(f"max |delta| {np.max(np.abs(delta)):.3f} dB over {len(channels)} channel(s), "
          f"oracle {orc.runtime_s:.1f} s -> {table}")
    breach = [k for k in worst if abs(delta[k]) > args.tol]
    if breach:
        for k in breach[:5]:
            print(f"channel {channels[k]} ({orc.freqs_thz[k]:.3f} THz): delta {delta[k]:+.3f} dB "
                  f"exceeds {args.tol} dB", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load(args)
    if args.isrs is not None:
        sc = sc.with_isrs(args.isrs == "on")
    if args.step <= 0 or args.stop < args.start:
        raise UsageError("sweep needs --step > 0 and --stop >= --start")
    started = _now()
    levels = np.round(np.arange(args.start, args.stop + 1e-9, args.step), 6)
    rows = []
    warm: dict = {}
    for p in levels:
        res = simulate(sc.with_launch(p), warm=warm)
        g = res.gsnr_db
        rows.append([p, res.throughput_tbps, float(np.mean(g)), float(np.min(g)),
                     gsnr_peak_to_peak(res.metrics)])
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "sweep.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["launch_dBm", "throughput_Tbps", "gsnr_mean_dB", "gsnr_min_dB", "gsnr_pp_dB"])
        for r in rows:
            w.writerow([f"{r[0]:g}"] + [f"{v:.6f}" for v in r[1:]])
    files = [_save_scenario(out, sc), table]
    _write_manifest(out, "sweep", sc, None, started, files)
    best = max(rows, key=lambda r: r[1])
    print(f"best flat launch {best[0]:g} dBm: {best[1]:.3f} Tb/s -> {table}")
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mbqot", description="Multiband link simulator and launch/pump optimizer.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("scenario", help="scenario TOML file")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./mbqot_out)")
        sp.add_argument("--isrs", choices=("on", "off"), help="override the scenario's ISRS switch")

    s = sub.add_parser("simulate", help="evaluate the scenario's launch spectrum")
    common(s)
    s.add_argument("--no-profiles", action="store_true", help="skip the per-span power profile CSVs")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("optimize", help="optimize launch spectrum and pumps")
    common(o)
    o.add_argument("--objective", choices=("eq1", "eq2", "mean_ir", "mean_ir_minus_spread"), default="eq1")
    o.add_argument("--pumps", help="number of backward pumps to optimize, or 'none'")
    o.add_argument("--budget", type=int, default=2000, help="objective evaluations")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--launch-mode", choices=("per_channel", "per_band_tilt"), default="per_channel")
    o.add_argument("--resume", action="store_true", help="checkpoint to and resume from OUT/resume.json")
    o.set_defaults(func=cmd_optimize)

    c = sub.add_parser("oracle-check", help="compare closed-form NLI with numerical integration")
    common(c)
    c.add_argument("--channels", required=True, help="comma-separated indices or ranges, e.g. 0,4,8-10")
    c.add_argument("--tol", type=float, default=0.5, help="allowed |delta| in dB")
    c.add_argument("--rtol", type=float, default=1e-3, help="oracle relative tolerance")
    c.set_defaults(func=cmd_oracle_check)

    w = sub.add_parser("sweep", help="flat launch power sweep")
    common(w)
    w.add_argument("--start", type=float, default=-4.0, help="first launch level, dBm")
    w.add_argument("--stop", type=float, default=4.0, help="last launch level, dBm")
    w.add_argument("--step", type=float, default=1.0, help="level increment, dB")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mbqot: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"mbqot: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConstraintsError as exc:
        print(f"mbqot: infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (PowerEvolutionError, NliError) as exc:
        print(f"mbqot: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # model-range problems (fiber window, Raman table edge, amplifier gain < 1)
        print(f"mbqot: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
