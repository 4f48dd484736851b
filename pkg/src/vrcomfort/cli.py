"""Command-line entry points: data generation, training, evaluation,
prediction, simulation, comparison, and the streaming service."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .controller import config_from_kv
from .dataset import (
    read_labeled_csv,
    split,
    synth_dataset,
    write_labeled_csv,
    write_scores_csv,
)
from .errors import InsufficientDataError, ModelFormatError
from .forest import (
    DEFAULT_GRID,
    CybersicknessForest,
    grid_search,
    load_model,
    regression_metrics,
    save_model,
)
from .kvconfig import format_kv, load_kv
from .service import ServiceConfig, TelemetryService
from .simulator import (
    compare_sessions,
    read_session_csv,
    scenario_from_kv,
    simulate_session,
    write_session_csv,
)
from .telemetry import write_head_csv


def _print_kv(pairs: dict) -> None:
    sys.stdout.write(format_kv(pairs))


def _metric_kv(prefix: str, metrics) -> dict:
    return {f"{prefix}_{k}": v for k, v in metrics.to_kv().items()}


def _cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, captures, scores = synth_dataset(args.participants, seed=args.seed)
    write_head_csv(out / "head.csv", captures)
    write_scores_csv(out / "scores.csv", scores)
    write_labeled_csv(out / "labeled.csv", ds)
    _print_kv({
        "participants": len(captures),
        "windows": ds.n,
        "head_csv": out / "head.csv",
        "scores_csv": out / "scores.csv",
        "labeled_csv": out / "labeled.csv",
    })
    return 0


def _cmd_train(args) -> int:
    ds = read_labeled_csv(args.data)
    params = {}
    if args.grid:
        result = grid_search(ds.X, ds.y, DEFAULT_GRID, seed=args.seed)
        params = result.best_params
        _print_kv({f"grid_best_{k}": v for k, v in params.items()}
                  | {"grid_best_mse": result.best_mse})

    for prefix, grouped in (("random", False), ("grouped", True)):
        train, test = split(ds, by_participant=grouped, seed=args.seed)
        model = CybersicknessForest(random_state=args.seed, **params)
        model.fit(train.X, train.y)
        metrics = regression_metrics(test.y, model.predict(test.X))
        _print_kv(_metric_kv(prefix, metrics))

    final = CybersicknessForest(random_state=args.seed, **params)
    final.fit(ds.X, ds.y)
    save_model(args.out, final)
    _print_kv({"model": args.out})
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = read_labeled_csv(args.data)
    _print_kv(regression_metrics(ds.y, model.predict(ds.X)).to_kv())
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = read_labeled_csv(args.data)
    pred = model.predict(ds.X)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("participant_id", "prediction"))
        for pid, value in zip(ds.participant_ids, pred):
            w.writerow([str(pid), repr(float(value))])
    _print_kv({"rows": ds.n, "predictions": args.out})
    return 0


def _load_scenario(args):
    kv = load_kv(args.scenario)
    scenario = scenario_from_kv(kv)
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=args.seed)
    model = None if scenario.model_path is None else load_model(scenario.model_path)
    return scenario, model


def _cmd_simulate(args) -> int:
    scenario, model = _load_scenario(args)
    log = simulate_session(
        scenario.profile,
        model=model,
        controller_config=scenario.controller_config,
        controller_enabled=scenario.controller_enabled,
        seed=scenario.seed,
        window_s=scenario.window_s,
    )
    if args.out:
        write_session_csv(args.out, log)
    s = log.summary()
    _print_kv({
        "sickness_model": "synthetic latent sickness",
        "ticks": len(log.rows),
        "mean_sickness": s.mean_sickness,
        "max_sickness": s.max_sickness,
        "final_sickness": s.final_sickness,
        "fps_min": s.fps_min,
        "fps_mean": s.fps_mean,
        "adjustments": s.adjustments,
    })
    return 0


def _cmd_compare(args) -> int:
    report = compare_sessions(
        read_session_csv(args.baseline), read_session_csv(args.adaptive)
    )
    _print_kv(report.to_kv())
    return 0


def _cmd_serve(args) -> int:
    model = load_model(args.model)
    kv = load_kv(args.config) if args.config else {}
    config = ServiceConfig(
        model=model,
        controller_config=config_from_kv(kv),
        window_s=float(kv.get("window", 3.0)),
        rate_hz=float(kv.get("rate", 72.0)),
    )
    service = TelemetryService(config)
    if args.stdio:
        service.serve_stdio()
    else:
        host, _, port = args.listen.rpartition(":")
        service.serve_tcp(host or "127.0.0.1", int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vrcomfort",
        description="Closed-loop cybersickness prediction and mitigation toolkit.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="synthesize a labeled training corpus")
    g.add_argument("--out", default="data", help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--participants", type=int, default=20)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="train a forest from a labeled CSV")
    t.add_argument("data", help="labeled feature CSV")
    t.add_argument("--out", default="model.cfmodel", help="model file to write")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--grid", action="store_true",
                   help="run the default hyperparameter grid search first")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a model on a labeled CSV")
    e.add_argument("data", help="labeled feature CSV")
    e.add_argument("--model", required=True)
    e.set_defaults(func=_cmd_eval)

    pr = sub.add_parser("predict", help="write per-window predictions as CSV")
    pr.add_argument("data", help="labeled feature CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--out", default="predictions.csv")
    pr.set_defaults(func=_cmd_predict)

    s = sub.add_parser("simulate", help="run a closed-loop session from a scenario file")
    s.add_argument("scenario", help="key = value scenario file")
    s.add_argument("--out", default=None, help="session log CSV to write")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.set_defaults(func=_cmd_simulate)

    c = sub.add_parser("compare", help="diff two session logs")
    c.add_argument("baseline")
    c.add_argument("adaptive")
    c.set_defaults(func=_cmd_compare)

    sv = sub.add_parser("serve", help="stream telemetry in, adjustments out")
    sv.add_argument("--model", required=True)
    sv.add_argument("--config", default=None, help="key = value config file")
    mode = sv.add_mutually_exclusive_group(required=True)
    mode.add_argument("--listen", default=None, metavar="[HOST:]PORT")
    mode.add_argument("--stdio", action="store_true")
    sv.set_defaults(func=_cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, ModelFormatError, InsufficientDataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
