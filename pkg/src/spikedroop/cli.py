"""Command-line entry point: ``spikedroop simulate`` and ``spikedroop validate``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import SystemConfig, config_from_dict, dump_config, load_config, to_dict
from .errors import NumericalError, SpikeDroopError, ValidationError
from .scenarios import SCENARIOS, MetricsReport, TraceLog, correlation_sweep, run_scenario, \
    scenario_config

TRACE_HEADER = ("t", "der_id", "v_bus", "i_out", "i_filt", "v_mem", "delta_r", "dw", "g_syn",
                "online")


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def _write(path: Path, text: str) -> str:
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise SpikeDroopError(f"cannot write {path}: {exc}") from None
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def trace_rows(log: TraceLog):
    yield TRACE_HEADER
    for r, t in enumerate(log.t):
        for k in range(log.n):
            yield (fmt(t), k + 1, fmt(log.v_bus[r, k]), fmt(log.i_out[r, k]),
                   fmt(log.i_filt[r, k]), fmt(log.v_mem[r, k]), fmt(log.delta_r[r, k]),
                   fmt(log.dw[r, k]), fmt(log.g_syn[r, k]), int(log.online[r, k]))


def emit_trace(log: TraceLog, out_dir, metrics: MetricsReport | None = None,
               config: SystemConfig | None = None, run_info: dict | None = None) -> dict:
    """Write trace, spikes, metrics and a manifest with the SHA-256 of each file."""
    if log.t.size == 0:
        raise ValidationError("trace log is empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SpikeDroopError(f"cannot create output directory {out}: {exc}") from None
    hashes = {"trace.csv": _write(out / "trace.csv", _csv(trace_rows(log)))}
    spikes = [("t", "der_id", "channel")] + [(fmt(t), k + 1, ch) for t, k, ch in log.spikes]
    hashes["spikes.csv"] = _write(out / "spikes.csv", _csv(spikes))
    rows = [("name", "value")] + [(k, fmt(v)) for k, v in (metrics.rows() if metrics else [])]
    hashes["metrics.csv"] = _write(out / "metrics.csv", _csv(rows))
    _write_manifest(out, hashes, config, run_info)
    return hashes


def _write_manifest(out: Path, hashes: dict, config, run_info):
    manifest = {"run": run_info or {}, "files": {k: f"sha256:{v}" for k, v in hashes.items()},
                "config": to_dict(config) if config is not None else None}
    _write(out / "manifest.yaml", yaml.safe_dump(manifest, sort_keys=False))


def _r_squared(x, y):
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1] ** 2)


def sweep_summary(samples, band=(0.4, 0.7)):
    ci = np.array([s.c_in for s in samples])
    co = np.array([s.c_out for s in samples])
    outside = (ci < band[0]) | (ci > band[1])
    return {
        "windows": float(len(samples)),
        "r_squared_outside_band": _r_squared(ci[outside], co[outside]),
        "r_squared_all": _r_squared(ci, co),
        "mean_mu": float(np.mean([s.mu for s in samples])) if samples else math.nan,
    }


def emit_sweep(samples, out_dir, config, run_info) -> dict:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SpikeDroopError(f"cannot create output directory {out}: {exc}") from None
    rows = [("t_start", "c_in", "c_out", "mu")]
    rows += [(fmt(s.t_start), fmt(s.c_in), fmt(s.c_out), fmt(s.mu)) for s in samples]
    hashes = {"correlation.csv": _write(out / "correlation.csv", _csv(rows))}
    metrics = [("name", "value")] + [(k, fmt(v)) for k, v in sweep_summary(samples).items()]
    hashes["metrics.csv"] = _write(out / "metrics.csv", _csv(metrics))
    _write_manifest(out, hashes, config, run_info)
    return hashes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spikedroop",
                                description="Spiking secondary control of a droop-controlled DC microgrid.")
    sub = p.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run a scenario and write trace files")
    sim.add_argument("--scenario", required=True, choices=SCENARIOS)
    sim.add_argument("--config", type=Path, help="YAML configuration (defaults if omitted)")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--decimation", type=int, help="keep every Nth integration step")
    sim.add_argument("--strict-literal", action="store_true",
                     help="use the literal trigger error, no deadband and the literal STDP exponent")
    sim.add_argument("--seed", type=int, help="seed for synthetic input profiles")
    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("--config", type=Path, required=True)
    return p


def _system(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = {}
    if args.strict_literal:
        changes["strict_literal"] = True
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.decimation is not None:
        if args.decimation < 1:
            raise ValidationError("--decimation must be >= 1")
        changes["simulation"] = dataclasses.replace(cfg.simulation, decimation=args.decimation)
    return cfg.replace(**changes) if changes else cfg


def simulate(args) -> int:
    cfg = _system(args)
    info = {"command": "simulate", "scenario": args.scenario}
    if args.scenario == "correlation_sweep":
        samples = correlation_sweep(cfg)
        emit_sweep(samples, args.out, cfg, info)
        return 0
    log, metrics = run_scenario(scenario_config(args.scenario, cfg), cfg)
    emit_trace(log, args.out, metrics, cfg, info)
    if metrics.diverged:
        print(f"note: divergence guard tripped at t = {metrics.divergence_time:.6g} s",
              file=sys.stderr)
    return 0


def validate(args) -> int:
    cfg = load_config(args.config)
    # the round trip must reproduce the same configuration
    if config_from_dict(yaml.safe_load(dump_config(cfg))) != cfg:
        raise ValidationError("configuration does not survive a round trip")
    print(f"{args.config}: ok")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return simulate(args) if args.command == "simulate" else validate(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SpikeDroopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
