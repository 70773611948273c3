"""Command line entry point: ``fairtarget {baseline,train,eval,sweep,synth}``.

Every command writes one JSON document (schema-versioned, no timestamps) so
reruns with the same flags produce identical bytes. Errors map onto exit
codes 2 (configuration), 3 (data) and 4 (numerical).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .core import TargetSpec
from .data import RECIPE_L2, RECIPES, Schema, SynthSpec, gen_synthetic, load_csv, write_csv
from .errors import ConfigError, DataError, FairTargetError, FeatureMismatch
from .experiment import (
    SCHEMA_VERSION,
    RunConfig,
    grid_targets,
    run_repeats,
    run_sweep,
    write_json,
)
from .metrics import evaluate
from .model import TrainConfig, check_features, load_model, predict_labels, save_model

DEFAULT_GRIDS = {"dp": (0.1, 0.2, 0.3, 0.4), "eqopp": (0.6, 0.7, 0.8, 0.9, 1.0)}


def _pr_target(text: str):
    return text if text in ("avg", "min", "max") else _float(text, "--target-pr")


def _tnr_target(text: str):
    return text if text == "auto" else _float(text, "--target-tnr")


def _float(text: str, flag: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{flag}: expected a number, got {text!r}") from None


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--schema", help="JSON schema file for --data")
    src.add_argument("--recipe", choices=sorted(RECIPES), help="built-in schema")
    p.add_argument("--sensitive", choices=("race", "gender"), default="race")


def _add_run_args(p: argparse.ArgumentParser, target: bool = True) -> None:
    _add_data_args(p)
    if target:
        p.add_argument("--fairness", choices=("none", "dp", "eqopp"), default="none")
        p.add_argument("--target-pr", default="avg", help="float in (0,1), or avg/min/max")
        p.add_argument("--target-tpr", default="1.0")
        p.add_argument("--target-tnr", default="auto", help="float in (0,1], or auto")
        p.add_argument("--paper-protocol", action="store_true",
                       help="measure baseline TNRs for auto on the test split")
    p.add_argument("--use-s", action="store_true", help="feed s to the model as an input")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=None, help="default: full batch")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--l2", type=float, default=None, help="default: recipe value, else 0")
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairtarget",
        description="Fair classification by training on target labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="unconstrained model: biased rates and metrics")
    _add_run_args(p, target=False)

    p = sub.add_parser("train", help="train fair models over repeats")
    _add_run_args(p)
    p.add_argument("--model-dir", help="where model files go (default: <out>.models)")

    p = sub.add_parser("sweep", help="train over a grid of PR or TPR targets")
    _add_run_args(p)
    p.add_argument("--grid", help="comma-separated targets (default depends on --fairness)")

    p = sub.add_parser("eval", help="score a saved model on a dataset")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a biased synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON SynthSpec file")
    p.add_argument("--out", required=True, help="CSV path; sidecars go next to it")
    return parser


def _schema(args) -> Schema:
    if args.recipe:
        return RECIPES[args.recipe](args.sensitive)
    return Schema.load(args.schema)


def _target(args) -> TargetSpec:
    if args.fairness == "dp":
        return TargetSpec.positive_rate(_pr_target(args.target_pr))
    if args.fairness == "eqopp":
        return TargetSpec.tpr_tnr(_float(args.target_tpr, "--target-tpr"), _tnr_target(args.target_tnr))
    return TargetSpec.none()


def _run_config(args, target: TargetSpec | None = None) -> RunConfig:
    l2 = args.l2
    if l2 is None:
        l2 = RECIPE_L2[args.recipe] if args.recipe else 0.0
    train = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        l2=l2,
        seed=args.seed,
        use_s=args.use_s,
    )
    return RunConfig(
        data=args.data,
        schema=_schema(args),
        target=target if target is not None else TargetSpec.none(),
        train=train,
        test_fraction=args.test_fraction,
        validation_fraction=args.validation_fraction,
        repeats=args.repeats,
        base_seed=args.seed,
        paper_protocol=getattr(args, "paper_protocol", False),
        source_label=args.data,
    )


def cmd_baseline(args) -> None:
    result = run_repeats(_run_config(args), baseline=True)
    write_json(args.out, result)


def cmd_train(args) -> None:
    config = _run_config(args, _target(args))
    model_dir = Path(args.model_dir or f"{args.out}.models")
    model_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    def keep(i, model):
        path = model_dir / f"model_{i:03d}.json"
        save_model(model, path)
        paths.append(str(path))

    result = run_repeats(config, on_model=keep)
    result["models"] = paths
    write_json(args.out, result)


def _grid(args) -> list[float]:
    if args.grid is None:
        if args.fairness == "none":
            raise ConfigError("sweep needs --fairness dp or eqopp")
        return list(DEFAULT_GRIDS[args.fairness])
    return [_float(v.strip(), "--grid") for v in args.grid.split(",") if v.strip()]


def cmd_sweep(args) -> None:
    base = _target(args)
    grid = grid_targets(base, _grid(args))
    run_sweep(_run_config(args, base), grid, out_path=args.out)


def _header(path: str, schema: Schema) -> list[str] | None:
    if not schema.has_header:
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        row = next(csv.reader(fh, delimiter=schema.delimiter, skipinitialspace=True), [])
    return [c.strip() for c in row]


def cmd_eval(args) -> None:
    model = load_model(args.model)
    schema = _schema(args)
    header = _header(args.data, schema)
    if header is not None and schema.sensitive_column not in header:
        why = "the model takes s as an input" if model.use_s else "group metrics need it"
        raise FeatureMismatch(f"data has no {schema.sensitive_column!r} column; {why}")
    ds = load_csv(args.data, schema, encoding_meta=model.encoding_meta or None)
    check_features(model, ds.feature_names)
    report = evaluate(predict_labels(model, ds.x, ds.s), ds.y, ds.s)
    write_json(
        args.out,
        {
            "schema_version": SCHEMA_VERSION,
            "kind": "eval",
            "model": args.model,
            "data": args.data,
            "dataset": dict(ds.source) | {"n": len(ds), "dim": ds.dim},
            "debias": model.debias.to_dict(),
            "report": report.to_dict(),
        },
    )


def cmd_synth(args) -> None:
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = SynthSpec.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.spec}: not valid JSON ({exc})") from exc
    result = gen_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    schema = write_csv(out, result.dataset)
    schema.save(f"{out}.schema.json")
    write_json(
        f"{out}.truth.json",
        {
            "schema_version": SCHEMA_VERSION,
            "kind": "synth",
            "spec": spec.to_dict(),
            "rates": result.rates,
            "y_true": result.y_true.tolist(),
        },
    )


COMMANDS = {
    "baseline": cmd_baseline,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except FairTargetError as exc:
        print(f"fairtarget: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fairtarget: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
