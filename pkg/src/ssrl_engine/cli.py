"""Command-line entry point: simulate, replay, forecast, analyze, table ops.

Exit codes: 0 success, 1 domain error (validation, unreachable targets,
degenerate statistics), 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter

import numpy as np

from . import forecast as fc
from . import replay as rp
from . import stats
from .config import ConfigError, EngineConfig, config_from_sources
from .generator import (
    ScriptError,
    UnreachableTargetError,
    generate_session,
    load_script,
    script_to_dict,
    single_state_script,
)
from .policy import classify_scenario, state_from_raws
from .scenario_table import load_table, table_bytes, verify_checksum
from .streams import SessionFormatError, load_session, save_session

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _write_json(obj, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (or set SSRL_CONFIG)")
    p.add_argument("--mode", choices=("reactive", "proactive"))
    p.add_argument("--condition",
                   choices=("control", "jva", "jme", "combined", "proactive-full"))
    p.add_argument("--jva-window", type=int, dest="jva_window_ms")
    p.add_argument("--jme-window", type=int, dest="jme_window_ms")
    p.add_argument("--sd-k", type=float, dest="sd_k")
    p.add_argument("--horizon", type=int, dest="horizon_ms")
    p.add_argument("--persistence", type=int, dest="persistence_ticks")
    p.add_argument("--cols", type=int)
    p.add_argument("--forecaster", choices=sorted(fc.FORECASTERS))
    p.add_argument("--jme-mode", choices=("crqa", "cosine"), dest="jme_mode")
    p.add_argument("--seed", type=int)


_CONFIG_KEYS = ("mode", "condition", "jva_window_ms", "jme_window_ms", "sd_k",
                "horizon_ms", "persistence_ticks", "cols", "forecaster",
                "jme_mode", "seed")


def _config_from_args(args) -> EngineConfig:
    flags = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return config_from_sources(flags, getattr(args, "config", None))


def _forecaster_for(config: EngineConfig, model_path: str | None):
    if model_path:
        return fc.load_model(model_path)
    name = config.forecaster
    if name in ("persistence", "oracle"):
        return fc.make_forecaster(name, k=config.forecast_lags)
    raise ConfigError(
        f"forecaster {name!r} needs a trained model file (--model)")


def _conformance(rec, config: EngineConfig, target_id: int | None):
    meas = rp.measure_session(rec, config)
    table = load_table()
    counts: Counter = Counter()
    for tick in meas.task_ticks:
        state = state_from_raws(tick, (tick + 1) * config.jva_window_ms,
                                meas.raws_at(tick), meas.baselines, config.sd_k)
        counts[classify_scenario(table, state).scenario_id] += 1
    modal, _ = counts.most_common(1)[0]
    total = sum(counts.values())
    entry = {
        "modal_scenario": modal,
        "scenario_counts": {str(k): v for k, v in sorted(counts.items())},
        "ticks": total,
    }
    if target_id is not None:
        entry["target_scenario"] = target_id
        entry["target_fraction"] = counts.get(target_id, 0) / total
        entry["ok"] = modal == target_id
    return entry


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    table = load_table()
    jobs = []
    if args.table9:
        for row in table.rows:
            name = f"scenario{row.scenario_id:02d}"
            jobs.append((name, single_state_script(
                row.state, ticks=args.ticks, edits_per_min=2.0, name=name),
                table.canonical_id(row.state)))
    for path in args.script or ():
        script = load_script(path)
        target = None
        if len(script.segments) == 1:
            target = table.classify(*script.segments[0].target).scenario_id
        jobs.append((script.name, script, target))
    if not jobs:
        print("nothing to simulate: pass --script and/or --table9", file=sys.stderr)
        return EXIT_USAGE

    report = {"seed": config.seed, "sessions": {}}
    metric_rows = []
    for name, script, target_id in jobs:
        rec = generate_session(script, config.seed, cols=config.cols)
        session_path = os.path.join(args.out, f"{name}.session.jsonl")
        save_session(rec, session_path)
        forecaster = (_forecaster_for(config, args.model)
                      if config.mode == "proactive" else None)
        result = rp.replay(rec, config, forecaster=forecaster)
        rp.write_event_log(result.events, os.path.join(args.out, f"{name}.events.jsonl"))
        _write_json(result.metrics.to_dict(), os.path.join(args.out, f"{name}.metrics.json"))
        entry = _conformance(rec, config, target_id)
        entry["script"] = script_to_dict(script)
        report["sessions"][name] = entry
        metric_rows.append(rp.metrics_csv_row(name, config, result.metrics))
    rp.write_metrics_csv(metric_rows, os.path.join(args.out, "metrics.csv"))
    checked = [s for s in report["sessions"].values() if "ok" in s]
    report["conformant_sessions"] = sum(1 for s in checked if s["ok"])
    report["checked_sessions"] = len(checked)
    _write_json(report, os.path.join(args.out, "report.json"))
    print(f"wrote {len(jobs)} session(s) to {args.out}; "
          f"conformant {report['conformant_sessions']}/{report['checked_sessions']}")
    return EXIT_OK


def cmd_replay(args) -> int:
    config = _config_from_args(args)
    rec = load_session(args.session)
    forecaster = (_forecaster_for(config, args.model)
                  if config.mode == "proactive" else None)
    result = rp.replay(rec, config, forecaster=forecaster)
    os.makedirs(args.out, exist_ok=True)
    base = os.path.splitext(os.path.basename(args.session))[0]
    rp.write_event_log(result.events, os.path.join(args.out, f"{base}.events.jsonl"))
    _write_json(result.metrics.to_dict(), os.path.join(args.out, f"{base}.metrics.json"))
    rp.write_metrics_csv([rp.metrics_csv_row(base, config, result.metrics)],
                         os.path.join(args.out, f"{base}.metrics.csv"))
    print(f"{base}: {result.metrics.events_emitted} events, "
          f"success {result.metrics.debugging_success}")
    return EXIT_OK


def _corpus_sessions(corpus: str) -> list[str]:
    paths = sorted(
        os.path.join(corpus, f) for f in os.listdir(corpus)
        if f.endswith(".jsonl") and "events" not in f)
    if not paths:
        raise FileNotFoundError(f"no session files in {corpus}")
    return paths


def cmd_forecast_train(args) -> int:
    config = _config_from_args(args)
    horizon_ticks = config.horizon_ms // config.jva_window_ms
    forecaster = fc.make_forecaster(config.forecaster, k=config.forecast_lags)
    X_all, Y_all = [], []
    trained_on = []
    for path in _corpus_sessions(args.corpus):
        rec = load_session(path)
        meas = rp.measure_session(rec, config)
        means = tuple(meas.baselines[m].mean for m in ("JVA", "JME", "ME1", "ME2"))
        X, Y = fc.training_pairs(meas.metric_table(), config.forecast_lags,
                                 horizon_ticks, means)
        X_all.extend(X)
        Y_all.extend(Y)
        trained_on.append(os.path.basename(path))
    forecaster.fit(X_all, Y_all)
    obj = {"format": 1, "trained_on": trained_on,
           "horizon_ticks": horizon_ticks}
    obj.update(forecaster.to_dict())
    _write_json(obj, args.model)
    print(f"trained {config.forecaster} on {len(X_all)} rows "
          f"from {len(trained_on)} session(s) -> {args.model}")
    return EXIT_OK


def cmd_forecast_eval(args) -> int:
    config = _config_from_args(args)
    horizon_ticks = config.horizon_ms // config.jva_window_ms
    if args.model:
        with open(args.model, "r", encoding="utf-8") as fh:
            model_obj = json.load(fh)
        forecaster = fc.FORECASTERS[model_obj["type"]].from_dict(model_obj)
        trained_on = set(model_obj.get("trained_on", ()))
    else:
        forecaster = fc.make_forecaster(config.forecaster, k=config.forecast_lags)
        trained_on = set()
    paths = _corpus_sessions(args.corpus)
    overlap = trained_on & {os.path.basename(p) for p in paths}
    if overlap:
        print(f"evaluation corpus overlaps the training corpus: {sorted(overlap)}",
              file=sys.stderr)
        return EXIT_DOMAIN
    totals = {"mae": np.zeros(4), "hits": 0.0, "n": 0}
    per_session = {}
    for path in paths:
        rec = load_session(path)
        meas = rp.measure_session(rec, config)
        means = tuple(meas.baselines[m].mean for m in ("JVA", "JME", "ME1", "ME2"))
        X, Y = fc.training_pairs(meas.metric_table(), config.forecast_lags,
                                 horizon_ticks, means)
        if not X:
            continue
        if isinstance(forecaster, fc.OracleForecaster):
            forecaster.bind(meas.metric_table(), horizon_ticks)
        report = fc.evaluate(forecaster, [(X, Y)], [meas.baselines], config.sd_k)
        per_session[os.path.basename(path)] = report.to_dict()
        totals["mae"] += np.array([report.mae[m] for m in
                                   ("JVA", "JME", "ME1", "ME2")]) * report.n_predictions
        totals["hits"] += report.level_accuracy * 4 * report.n_predictions
        totals["n"] += report.n_predictions
    if totals["n"] == 0:
        print("no evaluable ticks in corpus", file=sys.stderr)
        return EXIT_DOMAIN
    pooled_mae = totals["mae"] / totals["n"]
    out = {
        "forecaster": forecaster.name,
        "pooled": {
            "mae": {m: float(pooled_mae[i]) for i, m in
                    enumerate(("JVA", "JME", "ME1", "ME2"))},
            "level_accuracy": float(totals["hits"] / (4 * totals["n"])),
            "n_predictions": int(totals["n"]),
        },
        "per_session": per_session,
    }
    _write_json(out, args.report)
    print(f"evaluated {len(per_session)} session(s); "
          f"level accuracy {out['pooled']['level_accuracy']:.3f}")
    return EXIT_OK


def _read_metrics_csv(paths) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != len(header):
                    continue
                rows.append(dict(zip(header, parts)))
    return rows


def cmd_analyze(args) -> int:
    rows = _read_metrics_csv(args.metrics)
    if not rows:
        print("no metric rows found", file=sys.stderr)
        return EXIT_USAGE
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row[args.group_by], []).append(row)
    if len(groups) < 2:
        print(f"analyze needs >= 2 groups by {args.group_by!r}, "
              f"found {sorted(groups)}", file=sys.stderr)
        return EXIT_DOMAIN

    report: dict = {"group_by": args.group_by, "dependents": {}}
    names = sorted(groups)
    for dep in args.dependent:
        data = {g: [float(r[dep]) for r in groups[g]] for g in names}
        entry: dict = {"groups": {g: {"n": len(v), "mean": float(np.mean(v))}
                                  for g, v in data.items()}}
        entry["anova"] = stats.one_way_anova([data[g] for g in names]).to_dict()
        pairwise = []
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                comp = stats.welch_t(data[names[i]], data[names[j]])
                pairwise.append({"pair": [names[i], names[j]], **comp.to_dict()})
        adjusted = stats.bonferroni([p["p"] for p in pairwise], len(pairwise))
        for p, adj in zip(pairwise, adjusted):
            p["p_bonferroni"] = adj
        entry["pairwise"] = pairwise
        report["dependents"][dep] = entry

    if args.two_way:
        report["two_way"] = _two_way_feedback_analysis(rows)
    _write_json(report, args.out)
    print(f"analyzed {len(rows)} sessions across {len(names)} groups -> {args.out}")
    return EXIT_OK


def _two_way_feedback_analysis(rows) -> dict:
    """Performance (median split on debugging success) x feedback type on
    the per-session action counts."""
    success = np.array([float(r["debugging_success"]) for r in rows])
    median = float(np.median(success))
    perf = ["high" if s > median else "low" for s in success]
    n_high = perf.count("high")
    if n_high == 0 or n_high == len(perf):
        return {"error": "degenerate performance split"}
    if n_high != len(perf) - n_high:
        return {"error": "unbalanced performance split", "high": n_high,
                "low": len(perf) - n_high}
    values, f_perf, f_type = [], [], []
    for r, p in zip(rows, perf):
        for action in ("a3", "a4", "a5"):
            values.append(float(r[action]))
            f_perf.append(p)
            f_type.append(action)
    try:
        out = stats.two_way_anova(values, f_perf, f_type)
    except stats.DegenerateDataError as exc:
        return {"error": str(exc)}
    return {k: v.to_dict() for k, v in out.items()}


def cmd_scenario_table(args) -> int:
    if args.action == "dump":
        table = load_table()
        print("scenario,jva,jme,me1,me2,actions,starred")
        for row in table.rows:
            actions = "+".join(sorted(row.checked)) or "-"
            starred = "+".join(sorted(row.starred)) or "-"
            print(f"{row.scenario_id},{','.join(row.state)},{actions},{starred}")
        return EXIT_OK
    data = open(args.file, "rb").read() if args.file else table_bytes()
    if verify_checksum(data):
        print("scenario table checksum OK")
        return EXIT_OK
    print("scenario table checksum MISMATCH", file=sys.stderr)
    return EXIT_DOMAIN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrl",
        description="Collaboration-regulation engine: synthetic sessions, "
                    "replay, forecasting and batch statistics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic sessions and replay them")
    p.add_argument("--script", action="append", help="scenario script JSON (repeatable)")
    p.add_argument("--table9", action="store_true",
                   help="generate the 22-row scenario coverage bundle")
    p.add_argument("--ticks", type=int, default=10,
                   help="task ticks per coverage session")
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="forecaster model file for proactive mode")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="replay one recorded session")
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="forecaster model file for proactive mode")
    _add_config_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("forecast-train", help="fit a forecaster on a session corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="output model JSON path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_forecast_train)

    p = sub.add_parser("forecast-eval", help="evaluate a forecaster on held-out sessions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", help="trained model JSON path")
    p.add_argument("--report", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_forecast_eval)

    p = sub.add_parser("analyze", help="group statistics over metrics CSVs")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--group-by", default="condition")
    p.add_argument("--dependent", nargs="+",
                   default=["debugging_success", "time_on_task_s", "uptake_total"])
    p.add_argument("--two-way", action="store_true",
                   help="performance x feedback-type ANOVA on action counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scenario-table", help="dump or validate the scenario table")
    p.add_argument("action", choices=("dump", "validate"))
    p.add_argument("--file", help="validate this file instead of the shipped one")
    p.set_defaults(func=cmd_scenario_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScriptError, UnreachableTargetError, ConfigError, rp.ReplayError,
            fc.ForecastError, stats.DegenerateDataError, SessionFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
