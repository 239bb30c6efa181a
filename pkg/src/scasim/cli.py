"""Batch entry point: run scenarios, regenerate comparison tables, replay logs, serve."""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys
import tempfile

from .errors import ConfigError, ScasimError
from .replay import verify_replay
from .runlog import RunLog
from .scenarios import (
    NAMED_SCENARIOS,
    ScenarioConfig,
    build_named,
    report_from_log,
    run_scenario,
    summarize,
)

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_USAGE = 2


def _default_out() -> str:
    return os.environ.get("SCASIM_OUT", "runs")


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _load_config(target: str, seed=None, pilot=None, alert=None) -> ScenarioConfig:
    if os.path.exists(target):
        with open(target, "r", encoding="utf-8") as fh:
            cfg = ScenarioConfig.from_yaml(fh.read())
        if seed is not None:
            cfg = cfg.with_seed(seed)
        return cfg
    name = target
    if alert is not None and target.startswith("sca1") and target.count("-") == 1:
        name = f"{target}-{alert}"
    if name not in NAMED_SCENARIOS and pilot is not None and target == "sca2-perf" and pilot == "sup":
        name = "sca2-perf-sup"
    cfg = build_named(name, seed=seed)
    if pilot is not None:
        data = cfg.data
        if data["family"] == "sca1":
            if pilot in ("none", "auto"):
                data["pilot"] = {"kind": "none"}
                data["alert"] = {"policy": "none", "delta_t": 0.0}
                data["variant"] = "Auto"
            elif pilot in ("synthetic", "crossover"):
                data["pilot"]["kind"] = "crossover"
            elif pilot == "human":
                data["pilot"]["kind"] = "human"
            else:
                raise ConfigError(f"unknown SCA1 pilot {pilot!r}")
        else:
            if pilot in ("sap", "sup"):
                from .scenarios import load_mu_table

                data["pilot"] = {
                    "kind": pilot,
                    "reaction": {"mean": 1.0, "spread": 0.15},
                    "estimate_error": 0.2,
                    "mu_table": load_mu_table(),
                }
                data["variant"] = pilot.upper()
            elif pilot in ("none", "human"):
                data["pilot"] = {"kind": pilot}
            else:
                raise ConfigError(f"unknown SCA2 pilot {pilot!r}")
        data["name"] = f"{data['name']}-{pilot}"
        cfg = ScenarioConfig(data)
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load_config(args.scenario, seed=args.seed, pilot=args.pilot, alert=args.alert)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        log = run_scenario(cfg)
        report = report_from_log(log)
    except ScasimError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    out = args.out or _default_out()
    name = cfg.data.get("name", "run")
    seed = cfg.data.get("seed", 0)
    base = os.path.join(out, f"{name}-s{seed}")
    log.write(base + ".log.ndjson")
    _atomic_write_text(base + ".report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    faulted = log.first_event("fault") is not None
    row = {
        "scenario": name,
        "seed": seed,
        "e_rms": report.e_rms,
        "CfM": report.cfm,
        "rho": report.rho,
        "gamma": report.gamma,
        "GCD": report.gcd,
        "min_CfM": report.min_cfm,
        "log": base + ".log.ndjson",
    }
    print(json.dumps({k: v for k, v in row.items() if v is not None}))
    if faulted:
        print("simulation fault: log truncated", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_report(args) -> int:
    paths = []
    for pattern in args.logs:
        paths.extend(sorted(globmod.glob(pattern)))
    if not paths:
        print("")
        return EXIT_OK
    reports = []
    logs = []
    for path in paths:
        try:
            log = RunLog.read(path)
        except (ConfigError, OSError, json.JSONDecodeError) as exc:
            print(f"error reading {path}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        logs.append((path, log))
        reports.append(report_from_log(log))
    families = {r.family for r in reports}
    if args.family and families != {args.family}:
        print(f"error: logs are not all family {args.family!r}: {sorted(families)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        table = summarize(reports)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(table["text"])
    if args.series_out:
        for path, log in logs:
            stem = os.path.splitext(os.path.basename(path))[0]
            cols = ["t", "e", "c"] if log.header["family"] == "sca1" else ["t", "e0", "e1", "c"]
            lines = ["\t".join(cols)]
            data = [log.columns[c] for c in cols]
            for i in range(log.n_steps):
                lines.append("\t".join(repr(float(col[i])) for col in data))
            _atomic_write_text(os.path.join(args.series_out, stem + ".series.tsv"),
                               "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        log = RunLog.read(args.log)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error reading {args.log}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    verdict = verify_replay(log)
    if verdict.passed:
        print(f"PASS: {verdict.reason}")
        return EXIT_OK
    if verdict.first_divergent_step is not None:
        print(f"FAIL: {verdict.reason} at step {verdict.first_divergent_step}")
    else:
        print(f"FAIL: {verdict.reason}")
    return EXIT_FAULT


def cmd_serve(args) -> int:
    from .service import SessionService

    service = SessionService(out_dir=args.out or _default_out(), pacing=args.pacing)
    try:
        service.serve_forever(args.port)
    except OSError as exc:
        print(f"bind failure: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scasim",
        description="Pilot/autopilot shared-control simulator (take-over and supervisory architectures)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named scenario or a config file")
    p_run.add_argument("scenario", help="scenario name or YAML config path")
    p_run.add_argument("--pilot", help="pilot override (none|synthetic|sap|sup|human)")
    p_run.add_argument("--alert", help="SCA1 alert policy (late|exact|cfm_based)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", help="output directory (default $SCASIM_OUT or ./runs)")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="summarize persisted run logs into comparison tables")
    p_rep.add_argument("logs", nargs="+", help="log paths or globs")
    p_rep.add_argument("--family", choices=("sca1", "sca2"))
    p_rep.add_argument("--series-out", help="also write per-run time-series files here")
    p_rep.set_defaults(func=cmd_report)

    p_replay = sub.add_parser("replay", help="re-simulate a log and verify bit-identical trajectories")
    p_replay.add_argument("log")
    p_replay.set_defaults(func=cmd_replay)

    p_serve = sub.add_parser("serve", help="host interactive sessions")
    p_serve.add_argument("--port", type=int, default=8772)
    p_serve.add_argument("--pacing", type=float, default=1.0)
    p_serve.add_argument("--out", help="directory for persisted session logs")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
