"""Command-line front end.

Errors end with a nonzero exit status and one JSON object on stderr.
Precedence of settings: ``--config`` file over flags over defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Any, Sequence

from flexopt.core_types import FlexoptError
from flexopt.ingestion import generate_synthetic_dataset, load_dataset, load_timeseries, save_dataset
from flexopt.metrics import metric_set
from flexopt.model_builder import build_model
from flexopt.reporting import emit, format_report, load_study_json
from flexopt.scenarios import (
    CONTEXT_NAMES,
    REF,
    SCENARIO_NAMES,
    StudyConfig,
    StudyError,
    StudyOptions,
    StudyResult,
    load_study_config,
    run_study,
    solve_cell,
)
from flexopt.solver import SolveOptions, export_mps

log = logging.getLogger("flexopt")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INCOMPLETE = 0, 1, 2, 3


class UsageError(FlexoptError):
    pass


@dataclass
class CliConfig:
    dataset: str | None = None
    synth_seed: int | None = None
    horizon: int = 168
    contexts: tuple[str, ...] = CONTEXT_NAMES
    scenarios: tuple[str, ...] = SCENARIO_NAMES
    mip_gap: float = 0.0
    time_limit_s: float | None = None
    threads: int | None = None
    seed: int = 0
    backend: str | None = None
    jobs: int = 1
    out: str | None = None
    format: str = "json"
    log_level: str = "WARNING"
    study: StudyConfig = field(default_factory=StudyConfig)

    def validate(self) -> None:
        if (self.dataset is None) == (self.synth_seed is None):
            raise UsageError("give exactly one data source: --dataset or --synth-seed")
        if self.format not in ("json", "csv-dir"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")

    def load_data(self):
        if self.dataset is not None:
            return load_dataset(self.dataset)
        return generate_synthetic_dataset(self.synth_seed, self.horizon)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(mip_gap=self.mip_gap, time_limit_s=self.time_limit_s, threads=self.threads, seed=self.seed)


def _split(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    return tuple(s.strip() for s in text.split(",") if s.strip())


def resolve_config(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig()
    names = {f.name for f in fields(CliConfig)}
    flags = {k: v for k, v in vars(args).items() if k in names and v is not None}
    for key in ("contexts", "scenarios"):
        if key in flags:
            flags[key] = _split(flags[key])
    cfg = replace(cfg, **flags)
    if getattr(args, "config", None):
        try:
            study, rest = load_study_config(args.config)
        except StudyError as exc:
            raise UsageError(str(exc)) from exc
        over: dict[str, Any] = {}
        run = dict(rest.get("run", {}))
        if "dataset" in run or "synth_seed" in run:
            over["dataset"] = run.pop("dataset", None)
            over["synth_seed"] = run.pop("synth_seed", None)
        over.update(run)
        over.update(rest.get("solver", {}))
        unknown = set(over) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(
            cfg,
            **over,
            study=study,
            contexts=study.contexts or cfg.contexts,
            scenarios=study.scenarios or cfg.scenarios,
        )
    cfg.study = replace(cfg.study, contexts=tuple(cfg.contexts), scenarios=tuple(cfg.scenarios))
    return cfg


# -- commands --------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    if args.out is None:
        raise UsageError("synth needs --out")
    ds = generate_synthetic_dataset(args.synth_seed if args.synth_seed is not None else 1, args.horizon or 168)
    path = save_dataset(ds, args.out)
    print(json.dumps({"dataset": str(path), "horizon": ds.horizon}))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.validate()
    if cfg.out is None:
        raise UsageError("run needs --out")
    ds = cfg.load_data()
    contexts, scenarios = cfg.study.resolve(ds)
    study = run_study(ds, contexts, scenarios, StudyOptions(solve=cfg.solve_options(), backend=cfg.backend, jobs=cfg.jobs))
    emit(study, cfg.format, cfg.out)
    failed = [f"{c.context}/{c.scenario}: {c.error}" for c in study.cells.values() if not c.ok]
    print(json.dumps({"out": cfg.out, "cells": len(study.cells), "failed": failed}))
    return EXIT_OK if not failed else EXIT_INCOMPLETE


def _parse_window(text: str | None) -> slice | None:
    if not text:
        return None
    try:
        start, stop = (int(p) if p else None for p in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"window must look like START:STOP, got {text!r}") from exc
    return slice(start, stop)


def cmd_metrics(args: argparse.Namespace) -> int:
    prices = load_timeseries(args.prices, dt_hours=args.dt)
    cefs = load_timeseries(args.cefs, horizon=len(prices), dt_hours=args.dt)
    load = load_timeseries(args.load, horizon=len(prices), dt_hours=args.dt)
    ms = metric_set(prices, cefs, load, args.dt, _parse_window(args.window))
    print(json.dumps(ms.as_dict(), indent=1))
    return EXIT_OK


def cmd_export_mps(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.validate()
    if cfg.out is None:
        raise UsageError("export-mps needs --out")
    ds = cfg.load_data()
    study_cfg = replace(cfg.study, contexts=(args.context,), scenarios=(args.scenario,))
    (context,), (scenario,) = study_cfg.resolve(ds)
    ref = None
    if scenario.chp_fixed_to_ref:
        ref_scen = replace(cfg.study, contexts=(args.context,), scenarios=(REF,)).resolve(ds)[1][0]
        ref_cell = solve_cell(ds, ref_scen, context, solve_options=cfg.solve_options(), backend=cfg.backend)
        if ref_cell.chp_dispatch is None:
            raise FlexoptError(f"reference cell failed: {ref_cell.error}")
        ref = ref_cell.chp_dispatch
    model, rep = build_model(ds, scenario, context, ref)
    path = export_mps(model, cfg.out)
    print(json.dumps({"out": str(path), "n_vars": rep.n_vars, "n_cons": rep.n_cons, "n_binaries": rep.n_binaries}))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    study = load_study_json(args.study)
    if args.out is None:
        for cell in StudyResult.from_dict(study).cells.values():
            print(f"== {cell.context} / {cell.scenario}: {cell.error or cell.status}")
            if cell.report is not None:
                print(format_report(cell.report))
        return EXIT_OK
    emit(study, args.format or "json", args.out)
    print(json.dumps({"out": args.out}))
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would print plain text
        _fail("UsageError", message, EXIT_USAGE)


def _fail(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="dataset directory written by `synth`")
    p.add_argument("--synth-seed", type=int, help="generate the synthetic dataset from this seed")
    p.add_argument("--horizon", type=int, help="hours of the synthetic window (default 168)")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mip-gap", type=float)
    p.add_argument("--time-limit", dest="time_limit_s", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="study TOML; its values override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flexopt", description="Design and dispatch optimization of an industrial multi-energy site.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write the synthetic dataset bundle")
    _data_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="solve the scenario/context study")
    _data_flags(p)
    _solver_flags(p)
    p.add_argument("--contexts", help="comma-separated, default all")
    p.add_argument("--scenarios", help="comma-separated, default all")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv-dir"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="demand-response metrics of a purchase profile")
    p.add_argument("--prices", required=True)
    p.add_argument("--cefs", required=True)
    p.add_argument("--load", required=True, help="grid purchase in kW")
    p.add_argument("--window", help="hour slice START:STOP")
    p.add_argument("--dt", type=float, default=1.0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-mps", help="write one cell's model as fixed-form MPS")
    _data_flags(p)
    _solver_flags(p)
    p.add_argument("--context", default="c_base")
    p.add_argument("--scenario", default=REF)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_mps)

    p = sub.add_parser("report", help="re-emit a stored study")
    p.add_argument("study")
    p.add_argument("--format", choices=("json", "csv-dir"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        _fail("UsageError", str(exc), EXIT_USAGE)
    except (FlexoptError, ValueError, OSError) as exc:
        _fail(type(exc).__name__, str(exc), EXIT_ERROR)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
