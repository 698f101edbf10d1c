"""Command-line entry points: train, predict, evaluate, inspect.

train fits a forest from a CSV and writes a model file.  predict scores a
CSV with a saved model and never constructs a backend, so it runs fully
offline.  evaluate executes the few-shot protocol described by a spec file
and writes a line-oriented report.  inspect prints a human-readable dump of
a model.  Exit codes: 0 on success, 2 on usage errors, 1 on documented
failures (printed to stderr as one machine-parsable line).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields, replace

from .dataset import (
    Dataset,
    KIND_NUMERIC,
    LLM_FACING,
    CLASSICAL,
    MISSING_CATEGORY,
    _parse_float,
    column_means,
    impute,
    labeled_subset,
    load_csv,
    sample_k_shot,
    unlabeled_subset,
)
from .distill import condition_text, induce_rule_text
from .errors import DatasetError, ForestLLMError, GatewayError
from .evaluation import ExperimentSpec, run_experiment, write_report
from .forest import (
    DEFAULT_MODEL_ID,
    ForestConfig,
    ForestModel,
    split_frequency,
    predict,
    predict_scores,
    train_forest,
)
from .induction import SPLIT_CLASSICAL_ONLY, SPLIT_SEMANTIC
from .llm_gateway import LiveBackend, MockBackend, ReplayBackend
from .model_io import load_model, save_model
from .trees import Leaf, internal_nodes_of, leaves_of, tree_depth


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        choices=["mock", "replay", "live"],
        help="where completions come from (default: the spec/config, else mock)",
    )
    parser.add_argument("--script", help="mock backend: JSON rules file")
    parser.add_argument("--fixtures", help="replay backend: fixture directory")
    parser.add_argument(
        "--record-script",
        help="replay backend: record missing fixtures from this mock rules file",
    )
    parser.add_argument(
        "--record",
        action="store_true",
        help="replay backend: record missing fixtures from the live endpoint",
    )
    parser.add_argument("--base-url", help="live backend: OpenAI-compatible base URL")
    parser.add_argument(
        "--model-id", help=f"model identifier sent to the backend (default {DEFAULT_MODEL_ID})"
    )


def _build_backend(args, spec_backend: dict | None = None):
    doc = dict(spec_backend or {})
    kind = args.backend or doc.get("kind") or "mock"
    script = getattr(args, "script", None) or doc.get("script")
    fixtures = getattr(args, "fixtures", None) or doc.get("fixtures")
    record_script = getattr(args, "record_script", None) or doc.get("record_script")
    base_url = getattr(args, "base_url", None) or doc.get("base_url")
    record = getattr(args, "record", False) or doc.get("record", False)

    if kind == "mock":
        if not script:
            raise GatewayError("mock backend needs --script (a JSON rules file)")
        return MockBackend.from_file(script)
    if kind == "replay":
        if not fixtures:
            raise GatewayError("replay backend needs --fixtures (a directory)")
        source = None
        if record_script:
            source = MockBackend.from_file(record_script)
        elif record:
            if not base_url:
                raise GatewayError("--record needs --base-url for the live endpoint")
            source = LiveBackend(base_url)
        return ReplayBackend(fixtures, record_from=source)
    if not base_url:
        raise GatewayError("live backend needs --base-url")
    return LiveBackend(base_url)


def _load_schema_hint(path: str | None) -> dict | None:
    if not path:
        return None
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _forest_config(args) -> ForestConfig:
    values: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            values = json.load(handle)
        valid = {f.name for f in fields(ForestConfig)}
        unknown = set(values) - valid
        if unknown:
            raise ForestLLMError(f"unknown forest options {sorted(unknown)} in {args.config}")
    if args.seed is not None:
        values["seed"] = args.seed
    if args.labeled_only:
        values["labeled_only"] = True
    if args.split_source is not None:
        values["split_source"] = args.split_source
    return ForestConfig(**values)


def _cmd_train(args) -> int:
    hint = _load_schema_hint(args.schema)
    ds = load_csv(args.data, hint, target_name=args.target)
    cfg = _forest_config(args)

    if args.shots is not None:
        ds = sample_k_shot(ds, args.shots, cfg.seed)
    else:
        with_targets = tuple(
            i for i in range(len(ds)) if ds.raw_targets[i] is not None
        )
        without = tuple(i for i in range(len(ds)) if ds.raw_targets[i] is None)
        if not with_targets:
            raise DatasetError("no rows carry a target value; nothing to train on")
        ds = replace(ds, labeled_idx=with_targets, unlabeled_idx=without)

    mode = LLM_FACING if cfg.split_source == SPLIT_SEMANTIC else CLASSICAL
    ds = impute(ds, mode, column_means(ds))

    backend = _build_backend(args)
    model = train_forest(
        labeled_subset(ds),
        unlabeled_subset(ds),
        cfg,
        backend,
        model_id=args.model_id or DEFAULT_MODEL_ID,
        trained_at=args.stamp or "",
    )
    save_model(model, args.out)

    n_lab = len(ds.labeled_idx)
    n_unlab = len(ds.unlabeled_idx)
    print(f"trained {cfg.n_estimators} trees on {n_lab} labeled + {n_unlab} unlabeled rows")
    for k, tree in enumerate(model.trees):
        print(
            f"tree {k}: depth {tree_depth(tree.root)}, "
            f"internal {len(internal_nodes_of(tree.root))}, "
            f"leaves {len(leaves_of(tree.root))}, "
            f"calls {model.provenance.tree_calls[k]}, "
            f"retries {model.provenance.tree_retries[k]}"
        )
    print(f"model written to {args.out}")
    return 0


def _conform_rows(path: str, model: ForestModel) -> tuple[list[str], list[list[str]], list[tuple]]:
    """Read any CSV whose header covers the model's features; target optional."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        records = [row for row in reader]
    schema = model.schema
    column_of = {}
    for feat in schema.features:
        if feat.name not in header:
            raise DatasetError(f"{path}: required column {feat.name!r} is absent")
        column_of[feat.name] = header.index(feat.name)
    rows = []
    for lineno, record in enumerate(records, start=2):
        if len(record) != len(header):
            raise DatasetError(
                f"{path}: line {lineno} has {len(record)} cells, header has {len(header)}"
            )
        cells = []
        for feat in schema.features:
            text = record[column_of[feat.name]]
            if text == "":
                # Missing at prediction time mirrors training-side handling:
                # categorical gaps become the Unknown category, numeric gaps
                # stay absent and route through majority branches.
                cells.append(MISSING_CATEGORY if feat.kind != KIND_NUMERIC else None)
            elif feat.kind == KIND_NUMERIC:
                value = _parse_float(text)
                if value is None:
                    raise DatasetError(
                        f"{path}: line {lineno}, column {feat.name!r}: "
                        f"{text!r} is not a finite number"
                    )
                cells.append(value)
            else:
                cells.append(text)
        rows.append(tuple(cells))
    return header, records, rows


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    header, records, rows = _conform_rows(args.data, model)

    score_columns = (
        [f"score_{label}" for label in model.schema.classes]
        if model.schema.is_classification
        else []
    )
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header + ["prediction"] + score_columns)
        for record, row in zip(records, rows):
            value = predict(model, row)
            extra = [str(value)]
            if score_columns:
                scores = predict_scores(model, row)
                extra += [str(scores[label]) for label in model.schema.classes]
            writer.writerow(record + extra)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    with open(args.spec, encoding="utf-8") as handle:
        doc = json.load(handle)
    spec = ExperimentSpec.from_dict(doc)
    if args.model_id:
        spec = replace(spec, model_id=args.model_id)
    backend = _build_backend(args, spec.backend)
    report = run_experiment(spec, backend)
    write_report(report, args.out)
    for agg in report.aggregates:
        print(
            f"shot {agg.shot}: {agg.metric} mean {agg.mean:.4f} "
            f"std {agg.std:.4f} over {len(agg.seeds)} seeds"
        )
    print(f"report written to {args.out}")
    return 0


def render_model(model: ForestModel) -> str:
    """Human-readable dump used by the inspect subcommand."""
    schema = model.schema
    lines = []
    if schema.is_classification:
        lines.append(
            f"classification of {schema.target_name!r}; "
            f"classes: {', '.join(schema.classes)}"
        )
    else:
        lines.append(f"regression of {schema.target_name!r}")
    prov = model.provenance
    lines.append(
        f"{len(model.trees)} trees, backend {prov.backend_kind}, "
        f"model id {prov.model_id}, seed {prov.seed}"
    )
    freq = split_frequency(model)
    lines.append(
        "split frequency: "
        + ", ".join(f"{name}: {count}" for name, count in sorted(freq.items()))
    )

    def walk(node, depth: int, path) -> None:
        pad = "  " * (depth + 1)
        if isinstance(node, Leaf):
            rule = induce_rule_text(path, schema)
            lines.append(
                f"{pad}leaf: {node.target} (support {node.support}, "
                f"source {node.source}) <- {rule}"
            )
            if node.rationale:
                lines.append(f"{pad}  rationale: {node.rationale}")
            return
        lines.append(
            f"{pad}split: {condition_text(node.predicate, 'left', schema)}? "
            f"(majority {node.majority_branch})"
        )
        if node.reasoning:
            lines.append(f"{pad}  reasoning: {node.reasoning}")
        walk(node.left, depth + 1, path + ((node.predicate, "left"),))
        walk(node.right, depth + 1, path + ((node.predicate, "right"),))

    for k, tree in enumerate(model.trees):
        names = ", ".join(schema.features[i].name for i in tree.allowed_features)
        lines.append(
            f"tree {k} (features: {names}; calls {prov.tree_calls[k]}, "
            f"retries {prov.tree_retries[k]}):"
        )
        walk(tree.root, 0, ())
    return "\n".join(lines) + "\n"


def _cmd_inspect(args) -> int:
    model = load_model(args.model)
    sys.stdout.write(render_model(model))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestllm",
        description=(
            "Few-shot tabular prediction with decision forests whose splits and "
            "leaf labels are chosen by a chat-completion backend at training time; "
            "prediction is pure tree routing."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit a forest from a CSV and save it")
    train.add_argument("--data", required=True, help="training CSV with a header row")
    train.add_argument("--schema", help="JSON schema hint (kinds, target, task, classes)")
    train.add_argument("--target", help="target column name (when no schema hint)")
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--config", help="JSON file of forest hyperparameters")
    train.add_argument("--seed", type=int, help="training seed (overrides config)")
    train.add_argument(
        "--shots",
        type=int,
        help="sample this many labeled rows; the rest become the unlabeled pool",
    )
    train.add_argument(
        "--labeled-only",
        action="store_true",
        help="ignore unlabeled rows entirely",
    )
    train.add_argument(
        "--split-source",
        choices=[SPLIT_SEMANTIC, SPLIT_CLASSICAL_ONLY],
        help="where splits come from (overrides config)",
    )
    train.add_argument(
        "--stamp", help="record this timestamp string in provenance (default: none)"
    )
    _add_backend_flags(train)

    pred = sub.add_parser("predict", help="score a CSV with a saved model (offline)")
    pred.add_argument("--model", required=True, help="model file from train")
    pred.add_argument("--data", required=True, help="CSV to score")
    pred.add_argument("--out", required=True, help="predictions CSV to write")

    ev = sub.add_parser("evaluate", help="run the few-shot protocol from a spec file")
    ev.add_argument("--spec", required=True, help="experiment spec JSON")
    ev.add_argument("--out", required=True, help="report file to write")
    _add_backend_flags(ev)

    ins = sub.add_parser("inspect", help="print a readable dump of a model")
    ins.add_argument("--model", required=True, help="model file from train")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "predict": _cmd_predict,
        "evaluate": _cmd_evaluate,
        "inspect": _cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except (ForestLLMError, OSError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
