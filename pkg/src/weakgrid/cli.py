"""Command-line entry point.

Subcommands:
    simulate   run one fault scenario; writes trace.csv, metrics.json,
               manifest.json (plus the predictor artifact for the
               pre-identified mode)
    identify   nominal identification only; writes ispc_artifact.json and
               rank_report.json
    sweep      critical-reactance bisection per controller mode; writes
               sweep.csv and critical.json
    metrics    recompute metrics.json from an existing trace.csv

Every output directory receives a manifest with the config hash, seed, and
wall-clock timing so the exact experiment can be re-run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .artifacts import save_artifact
from .config import (ConfigError, load_yaml, scenario_from_dict,
                     sweep_from_dict)
from .metrics import compute_metrics
from .scenario import identify_nominal, run_scenario
from .sweep import critical_reactance
from .trace import Trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _write_manifest(out: Path, subcommand: str, args, cfg_extra: dict,
                    timing: dict | None, outputs: list[str]) -> None:
    manifest = {
        "tool": "weakgrid",
        "version": __version__,
        "subcommand": subcommand,
        "config_path": str(args.config),
        "config_sha256": _sha256(args.config),
        "elapsed_s": cfg_extra.pop("_elapsed_s", None),
        "timing": timing,
        "outputs": outputs,
    }
    manifest.update(cfg_extra)
    _write_json(out / "manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = scenario_from_dict(load_yaml(args.config), require_fault=True,
                             mode_override=args.mode,
                             seed_override=args.seed)
    t0 = time.perf_counter()
    result = run_scenario(cfg)
    elapsed = time.perf_counter() - t0
    outputs = ["trace.csv", "metrics.json"]
    result.trace.to_csv(out / "trace.csv")
    _write_json(out / "metrics.json", result.metrics.to_dict())
    if result.artifact is not None:
        icfg, predictor, gains = result.artifact
        save_artifact(out / "ispc_artifact.json", icfg, predictor, gains,
                      meta={"seed": cfg.seed, "mode": cfg.mode})
        outputs.append("ispc_artifact.json")
    _write_manifest(out, "simulate", args,
                    {"mode": cfg.mode, "seed": cfg.seed, "_elapsed_s": elapsed},
                    result.timing.to_dict(), outputs)
    if result.diverged:
        print(f"simulation diverged at t={result.trace.t[-1]:.3f}s; "
              "trace truncated, metrics marked not-settled")
    print(f"wrote {', '.join(outputs)} and manifest.json to {out}")
    return EXIT_OK


def cmd_identify(args) -> int:
    out = _out_dir(args)
    cfg = scenario_from_dict(load_yaml(args.config), require_fault=False,
                             mode_override="REGULAR_ISPC",
                             seed_override=args.seed)
    t0 = time.perf_counter()
    ident = identify_nominal(cfg)
    elapsed = time.perf_counter() - t0
    report = ident.predictor.rank_report
    _write_json(out / "rank_report.json", report.to_dict())
    timing = {
        "identification_s": ident.identification_s,
        "gain_computation_s": ident.gain_computation_s,
    }
    if not report.full_row_rank:
        _write_manifest(out, "identify", args,
                        {"seed": cfg.seed, "_elapsed_s": elapsed}, timing,
                        ["rank_report.json"])
        print("identification failed the persistency-of-excitation check: "
              f"input Hankel rank {report.input_rank} of {report.input_rows} "
              "rows; rank_report.json written", file=sys.stderr)
        return EXIT_RUNTIME
    save_artifact(out / "ispc_artifact.json", cfg.ispc, ident.predictor,
                  ident.gains, meta={"seed": cfg.seed})
    _write_manifest(out, "identify", args,
                    {"seed": cfg.seed, "_elapsed_s": elapsed}, timing,
                    ["ispc_artifact.json", "rank_report.json"])
    print(f"wrote ispc_artifact.json (residual {ident.predictor.residual:.3e}) "
          f"and rank_report.json to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    spec = sweep_from_dict(load_yaml(args.config), seed_override=args.seed)
    t0 = time.perf_counter()

    def run_mode(mode: str):
        return critical_reactance(spec.base_for(mode), mode, spec.vg_fault,
                                  spec.bracket, tol=spec.tol)

    results = {}
    errors = {}
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = {mode: pool.submit(run_mode, mode) for mode in spec.modes}
        for mode, fut in futures.items():
            try:
                results[mode] = fut.result()
            except ValueError as exc:
                errors[mode] = str(exc)
    elapsed = time.perf_counter() - t0

    rows = ["mode,xg_fault,stable"]
    for mode, res in results.items():
        for xg, stable in res.evaluations:
            rows.append(f"{mode},{xg:.9g},{str(stable).lower()}")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    _write_json(out / "critical.json",
                {mode: res.to_dict() for mode, res in results.items()})
    _write_manifest(out, "sweep", args,
                    {"modes": list(spec.modes), "_elapsed_s": elapsed}, None,
                    ["sweep.csv", "critical.json"])
    for mode, res in results.items():
        print(f"{mode}: critical Xg = {res.critical_xg:.4f} p.u. "
              f"({len(res.evaluations)} runs)")
    if errors:
        for mode, message in errors.items():
            print(f"{mode}: {message}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_metrics(args) -> int:
    out = _out_dir(args)
    cfg = scenario_from_dict(load_yaml(args.config), require_fault=True)
    trace = Trace.from_csv(args.trace)
    # Tube radii: a pure conventional trace is its own companion; anything
    # else recomputed in isolation falls back to the fixed radius.
    from .scenario import _tube_from_companion
    tube = None
    source = "fixed_fallback"
    if all(tag == "cc" for tag in trace.controller):
        tube = _tube_from_companion(trace, cfg.fault, companion_diverged=False)
        if tube is not None:
            source = "cc_companion"
    metrics = compute_metrics(
        trace, cfg.fault,
        references=(cfg.refs.vdc2_ref, cfg.refs.vpcc_ref),
        tube_radii=tube, tube_source=source)
    _write_json(out / "metrics.json", metrics.to_dict())
    _write_manifest(out, "metrics", args, {"trace": str(args.trace)}, None,
                    ["metrics.json"])
    print(f"wrote metrics.json to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakgrid",
        description="Grid-following converter fault simulator with "
                    "conventional and data-driven predictive outer control")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, trace=False):
        if trace:
            p.add_argument("--trace", required=True, help="existing trace.csv")
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("simulate", help="run one fault scenario")
    common(p)
    p.add_argument("--mode", default=None,
                   help="override the controller mode (CC | FT_ISPC | REGULAR_ISPC)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="nominal identification only")
    common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("sweep", help="critical-reactance bisection")
    common(p)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads across controller modes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="recompute metrics from a trace")
    common(p, trace=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
