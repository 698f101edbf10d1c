"""Metrics and the few-shot experiment protocol.

auc_macro is a rank-statistic one-vs-rest AUC averaged over the classes that
appear in the truth vector, with tied scores counting half.  nrmse is root
mean squared error normalized by the population standard deviation of the
test truth.  run_experiment wires the whole protocol together: an 80/20
split (stratified for classification), k-shot sampling, imputation with
statistics from the full pre-split table, training, and scoring, for every
(shot, seed) cell, then writes a deterministic line-oriented report.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .canon import canonical_json, content_hash
from .dataset import (
    CLASSICAL,
    LLM_FACING,
    Dataset,
    SplitSpec,
    column_means,
    impute,
    labeled_subset,
    load_csv,
    sample_k_shot,
    train_test_split,
    unlabeled_subset,
)
from .errors import DegenerateTruth, ForestLLMError, MetricError, ZeroVariance
from .forest import (
    DEFAULT_MODEL_ID,
    ForestConfig,
    ForestModel,
    default_max_depth,
    predict,
    predict_scores,
    train_forest,
)
from .induction import SPLIT_SEMANTIC

DEFAULT_SHOTS = (4, 8, 16, 32, 48)
DEFAULT_SEEDS = tuple(range(10))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group average."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and scores[order[j]] == scores[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    return ranks


def auc_macro(truth: list[str] | tuple[str, ...], scores) -> float:
    """Macro-averaged one-vs-rest AUC from per-row class-score mappings.

    Only classes present in truth contribute; a score map lacking a class
    scores it 0.  Tied scores count half, so the result equals the pairwise
    win-plus-half-tie rate for each class.
    """
    if len(truth) != len(scores):
        raise MetricError("truth and scores must have equal length")
    present = sorted(set(truth))
    if len(present) < 2:
        raise DegenerateTruth(
            f"macro AUC needs at least two classes in truth, got {present}"
        )
    total = 0.0
    for label in present:
        class_scores = np.asarray([row.get(label, 0.0) for row in scores], dtype=float)
        positives = np.asarray([t == label for t in truth], dtype=bool)
        n_pos = int(positives.sum())
        n_neg = len(truth) - n_pos
        ranks = _average_ranks(class_scores)
        rank_sum = float(ranks[positives].sum())
        total += (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return total / len(present)


def nrmse(truth: list[float] | tuple[float, ...], pred) -> float:
    """RMSE divided by the population standard deviation of the truth."""
    if len(truth) != len(pred):
        raise MetricError("truth and pred must have equal length")
    if len(truth) < 2:
        raise MetricError("nrmse needs at least two rows")
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    std = float(np.std(t))
    if std == 0.0:
        raise ZeroVariance("truth is constant; nrmse is undefined")
    return float(np.sqrt(np.mean((t - p) ** 2)) / std)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a dataset, shot counts, seeds, and forest overrides."""

    dataset_path: str
    target: str | None = None
    schema_hint: dict | None = None
    shots: tuple[int, ...] = DEFAULT_SHOTS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    forest: dict | None = None
    model_id: str = DEFAULT_MODEL_ID
    backend: dict | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {
            "dataset_path": doc.get("dataset"),
            "target": doc.get("target"),
            "schema_hint": doc.get("schema_hint"),
            "shots": tuple(doc.get("shots", DEFAULT_SHOTS)),
            "seeds": tuple(doc.get("seeds", DEFAULT_SEEDS)),
            "forest": doc.get("forest"),
            "model_id": doc.get("model_id", DEFAULT_MODEL_ID),
            "backend": doc.get("backend"),
        }
        if not known["dataset_path"]:
            raise ForestLLMError("experiment spec needs a 'dataset' path")
        return cls(**known)


@dataclass(frozen=True)
class CellResult:
    """One (shot, seed) evaluation cell."""

    shot: int
    seed: int
    metric: str
    value: float
    gateway_calls: int


@dataclass(frozen=True)
class ShotAggregate:
    """Mean and population standard deviation of a shot's cells across seeds."""

    shot: int
    metric: str
    mean: float
    std: float
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentReport:
    dataset_path: str
    metric: str
    backend_kind: str
    model_id: str
    spec_digest: str
    cells: tuple[CellResult, ...]
    aggregates: tuple[ShotAggregate, ...]


def _forest_config(spec: ExperimentSpec, shot: int, seed: int) -> ForestConfig:
    overrides = dict(spec.forest or {})
    valid = {f.name for f in fields(ForestConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise ForestLLMError(f"unknown forest options {sorted(unknown)}")
    overrides.setdefault("max_depth", default_max_depth(shot))
    overrides["seed"] = seed
    return ForestConfig(**overrides)


def run_experiment(spec: ExperimentSpec, backend) -> ExperimentReport:
    """Run every (shot, seed) cell of the protocol against one backend.

    Each cell splits the table 80/20 (stratified for classification), samples
    the k-shot labeled set from the train side, imputes using column means
    from the full pre-split table, trains a forest seeded by the cell's seed,
    and scores the test side with macro AUC or NRMSE.
    """
    full = load_csv(spec.dataset_path, spec.schema_hint, target_name=spec.target)
    stats = column_means(full)
    classification = full.schema.is_classification
    metric_name = "auc_macro" if classification else "nrmse"

    cells: list[CellResult] = []
    for shot in spec.shots:
        for seed in spec.seeds:
            cfg = _forest_config(spec, shot, seed)
            mode = LLM_FACING if cfg.split_source == SPLIT_SEMANTIC else CLASSICAL
            split = SplitSpec(test_fraction=0.2, seed=seed, stratify=classification)
            train, test = train_test_split(full, split)
            shot_set = impute(sample_k_shot(train, shot, seed), mode, stats)
            test = impute(test, mode, stats)
            model = train_forest(
                labeled_subset(shot_set),
                unlabeled_subset(shot_set),
                cfg,
                backend,
                model_id=spec.model_id,
            )
            try:
                value = _score(model, test)
            except MetricError as exc:
                raise type(exc)(f"shot {shot}, seed {seed}: {exc}") from exc
            cells.append(
                CellResult(
                    shot=shot,
                    seed=seed,
                    metric=metric_name,
                    value=value,
                    gateway_calls=sum(model.provenance.tree_calls),
                )
            )

    aggregates = []
    for shot in spec.shots:
        values = [cell.value for cell in cells if cell.shot == shot]
        aggregates.append(
            ShotAggregate(
                shot=shot,
                metric=metric_name,
                mean=float(np.mean(values)),
                std=float(np.std(values)),
                seeds=spec.seeds,
            )
        )

    digest = content_hash(
        {
            "dataset": spec.dataset_path,
            "target": spec.target,
            "schema_hint": spec.schema_hint,
            "shots": list(spec.shots),
            "seeds": list(spec.seeds),
            "forest": spec.forest,
            "model_id": spec.model_id,
            "backend_kind": getattr(backend, "kind", "unknown"),
        }
    )
    return ExperimentReport(
        dataset_path=spec.dataset_path,
        metric=metric_name,
        backend_kind=getattr(backend, "kind", "unknown"),
        model_id=spec.model_id,
        spec_digest=digest,
        cells=tuple(cells),
        aggregates=tuple(aggregates),
    )


def _score(model: ForestModel, test: Dataset) -> float:
    truth = [test.truth_of(i) for i in range(len(test))]
    if model.schema.is_classification:
        scores = [predict_scores(model, row) for row in test.rows]
        return auc_macro(truth, scores)
    preds = [predict(model, row) for row in test.rows]
    return nrmse(truth, preds)


def render_report(report: ExperimentReport) -> str:
    """One JSON record per line: header, then cells, then per-shot aggregates."""
    lines = [
        canonical_json(
            {
                "record": "header",
                "dataset": report.dataset_path,
                "metric": report.metric,
                "backend_kind": report.backend_kind,
                "model_id": report.model_id,
                "spec_digest": report.spec_digest,
            }
        )
    ]
    for cell in report.cells:
        lines.append(
            canonical_json(
                {
                    "record": "cell",
                    "shot": cell.shot,
                    "seed": cell.seed,
                    "metric": cell.metric,
                    "value": cell.value,
                    "gateway_calls": cell.gateway_calls,
                }
            )
        )
    for agg in report.aggregates:
        lines.append(
            canonical_json(
                {
                    "record": "aggregate",
                    "shot": agg.shot,
                    "metric": agg.metric,
                    "mean": agg.mean,
                    "std": agg.std,
                    "seeds": list(agg.seeds),
                }
            )
        )
    return "\n".join(lines) + "\n"


def write_report(report: ExperimentReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_report(report))
