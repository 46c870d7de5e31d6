"""Command-line entry point: ``refine <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .data import DatasetSchema, load_baseline_csv, load_csv, save_csv
from .errors import DataError, InvalidSpec, NumericalError, RefineError, TimePointError
from .evaluation import ABLATION_VARIANTS, REFINE, EvalConfig, bootstrap_evaluate, complexity_probe, rate_experiment
from .evaluation import DEFAULT_RATE_SPEC
from .model import DECODER_MODES, fit_refine, load_model
from .nonlinear_learner import LearnerSpec
from .simulate import SyntheticSpec, simulate

log = logging.getLogger("refine")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config -----------------------------------------------------------------


def load_config(path) -> dict:
    """YAML or JSON config with optional sections simulate/learner/eval/rates/bench."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must be a mapping")
    unknown = set(cfg) - {"simulate", "learner", "eval", "rates", "bench"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _build(factory, section: dict, what: str):
    try:
        return factory(section)
    except TypeError as exc:
        raise InvalidSpec(f"bad {what} config: {exc}") from None


def _section(cfg, name, seed=None, seed_key="seed") -> dict:
    out = dict(cfg.get(name) or {})
    if seed is not None:
        out[seed_key] = seed
    return out


def _learner(cfg, seed) -> LearnerSpec:
    return _build(LearnerSpec.from_dict, _section(cfg, "learner", seed), "learner")


# -- output -----------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_table(rows, columns, stem: Path, fmt: str) -> Path:
    if fmt == "json":
        path = stem.with_suffix(".json")
        write_json([dict(zip(columns, r)) for r in rows], path)
        return path
    path = stem.with_suffix(".csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return path


# -- subcommands ------------------------------------------------------------


def cmd_simulate(args, cfg):
    spec = _build(SyntheticSpec.from_dict, _section(cfg, "simulate", args.seed), "simulate")
    dataset, _ = simulate(spec)
    out = _out_dir(args)
    save_csv(dataset, out / "data.csv")
    dataset.schema.save(out / "schema.json")
    write_json(spec.to_dict(), out / "simulate.json")
    log.info("wrote %d subjects to %s", dataset.n, out / "data.csv")


def _dataset(args):
    schema = DatasetSchema.load(args.schema) if args.schema else None
    return load_csv(args.data, schema)


def cmd_fit(args, cfg):
    dataset = _dataset(args)
    model = fit_refine(dataset, _learner(cfg, args.seed), mode=args.mode, inverse_ridge=args.inverse_ridge, backend=args.backend)
    out = _out_dir(args)
    model.save(out / "model.bin")
    log.info("fitted %d time point(s); model written to %s", len(model.time_models), out / "model.bin")


def cmd_predict(args, cfg):
    model = load_model(args.model)
    ids, X0, Z = load_baseline_csv(args.data, model.schema)
    labels = [model.schema.label(t) for t in args.time] if args.time else list(model.schema.time_labels)
    rows = []
    for t in labels:
        pred = model.predict(t, X0, Z, backend=args.backend)
        for sid, row in zip(ids, pred):
            rows.append((sid, t, *(float(v) for v in row)))
    columns = ["subject_id", "time", *model.schema.item_names]
    path = write_table(rows, columns, _out_dir(args) / "predictions", args.format)
    log.info("wrote %d predictions to %s", len(rows), path)


def _eval_config(cfg, seed, default_variants) -> EvalConfig:
    section = _section(cfg, "eval", seed)
    section.setdefault("variants", default_variants)
    learner = cfg.get("learner") or {}
    if "forest" in learner and "forest" not in section:
        section["forest"] = learner["forest"]
    return _build(EvalConfig.from_dict, section, "eval")


def _run_evaluation(args, cfg, default_variants):
    dataset = _dataset(args)
    config = _eval_config(cfg, args.seed, default_variants)

    def progress(done, total):
        log.info("replicate %d/%d", done, total)

    report = bootstrap_evaluate(dataset, config, backend=args.backend, progress=progress)
    out = _out_dir(args)
    # wall-clock timings vary between runs, so they live outside report.json
    write_json(report.to_dict(), out / "report.json")
    write_json(report.timings(), out / "timings.json")
    cols = ["variant", "time", "metric", "replicate", "value"]
    for v in config.variants:
        write_table(report.long_rows(v.name), cols, out / f"metrics_{v.name}", args.format)
    frontier = [tuple(r.values()) for r in report.frontier()]
    write_table(frontier, ["variant", "time", "forward_mean", "backward_mean"], out / "frontier", args.format)
    for r in report.frontier():
        log.info("%s t=%s forward=%s backward=%s", r["variant"], r["time"], r["forward_mean"], r["backward_mean"])


def cmd_evaluate(args, cfg):
    _run_evaluation(args, cfg, (REFINE,))


def cmd_ablate(args, cfg):
    _run_evaluation(args, cfg, ABLATION_VARIANTS)


def cmd_rates(args, cfg):
    section = _section(cfg, "rates", args.seed)
    spec = DEFAULT_RATE_SPEC
    if "simulate" in section:
        spec = _build(lambda s: spec.replace(**s), section.pop("simulate"), "rates.simulate")
    if "learner" in section and section["learner"] is not None:
        section["learner"] = _build(LearnerSpec.from_dict, section["learner"], "rates.learner")
    try:
        table = rate_experiment(spec=spec, **section)
    except TypeError as exc:
        raise InvalidSpec(f"bad rates config: {exc}") from None
    out = _out_dir(args)
    summary = table.summary()
    rows = summary.pop("rows")
    write_table([tuple(r.values()) for r in rows], list(rows[0]), out / "rates", args.format)
    write_json(summary, out / "rates_summary.json")
    log.info("log-log slopes: %s", summary["slopes"])


def cmd_bench(args, cfg):
    section = _section(cfg, "bench")
    if "base" in section:
        section["base"] = _build(SyntheticSpec.from_dict, section["base"], "bench.base")
    if "learner" in section:
        section["learner"] = _build(LearnerSpec.from_dict, section["learner"], "bench.learner")
    try:
        table = complexity_probe(backend=args.backend, **section)
    except TypeError as exc:
        raise InvalidSpec(f"bad bench config: {exc}") from None
    out = _out_dir(args)
    summary = table.summary()
    rows = summary.pop("rows")
    write_table([tuple(r.values()) for r in rows], list(rows[0]), out / "bench", args.format)
    write_json(summary, out / "bench_summary.json")
    log.info("scaling: %s", summary)


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--format", choices=("json", "csv"), default="csv", help="format of tabular outputs")
    common.add_argument("--backend", choices=("auto", "numba", "numpy"), default="auto")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("--data", required=True, help="wide-format dataset CSV")
    data.add_argument("--schema", help="schema sidecar JSON (default: infer from header)")

    parser = _Parser(prog="refine", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common], help="draw a synthetic dataset")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common, data], help="fit a model and write model.bin")
    p.add_argument("--mode", choices=DECODER_MODES, default="invert")
    p.add_argument("--inverse-ridge", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict follow-ups from baseline data")
    p.add_argument("--model", required=True, help="model.bin written by 'fit'")
    p.add_argument("--data", required=True, help="CSV with subject_id and baseline columns")
    p.add_argument("--time", action="append", help="time label (repeatable; default: all)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common, data], help="bootstrap evaluation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common, data], help="bootstrap evaluation of the ablation variants")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("rates", parents=[common], help="decoder error versus sample size")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("bench", parents=[common], help="fit-time scaling probe")
    p.set_defaults(func=cmd_bench)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, TimePointError):
        return exit_code(exc.cause)
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except (RefineError, OSError, UsageError) as exc:
        print(f"refine {args.command}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
