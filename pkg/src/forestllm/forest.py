"""Forest training and inference.

Training draws per-tree randomness (feature subsets, bootstrap resamples of
the unlabeled pool) from streams derived from (seed, tree index), grows each
tree through the induction module, then labels its leaves.  Every labeled
row is retained by every tree; only the unlabeled pool is bootstrapped,
unless the bootstrap_labeled switch is turned on.  The trained model carries
no backend handle: prediction is pure tree routing and vote aggregation, so
it runs without any model access at all.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Row, Schema, Target, labeled_subset, unlabeled_subset
from .distill import NodeContext, induce_rule_text
from .errors import DatasetError, InductionError, TaskMismatch
from .induction import (
    SPLIT_CLASSICAL_ONLY,
    SPLIT_SEMANTIC,
    InductionConfig,
    grow_tree,
)
from .leaf import assign_leaf, fallback_assignment, retrieve_exemplars
from .llm_gateway import Gateway
from .trees import (
    Internal,
    Leaf,
    Path,
    TreeNode,
    internal_nodes_of,
    predicate_side,
)

DEFAULT_MODEL_ID = "gpt-4o"


def default_max_depth(shots: int) -> int:
    """Depth budget used by the experiment protocol: 3 up to 16 shots, 5 beyond."""
    return 3 if shots <= 16 else 5


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters for one trained forest."""

    n_estimators: int = 9
    max_depth: int = 3
    bootstrap: bool = True
    bootstrap_labeled: bool = False
    max_features: float = 0.9
    construction_temperature: float = 0.5
    leaf_temperature: float = 0.0
    labeled_only: bool = False
    split_source: str = SPLIT_SEMANTIC
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise InductionError("n_estimators must be at least 1")
        if self.max_depth < 1:
            raise InductionError("max_depth must be at least 1")
        if not 0.0 < self.max_features <= 1.0:
            raise InductionError("max_features must lie in (0, 1]")
        if self.split_source not in (SPLIT_SEMANTIC, SPLIT_CLASSICAL_ONLY):
            raise InductionError(f"unknown split source {self.split_source!r}")


@dataclass(frozen=True)
class TreeInfo:
    """One grown tree and the feature subset it was allowed to use."""

    root: TreeNode
    allowed_features: tuple[int, ...]


@dataclass(frozen=True)
class Provenance:
    """How the model came to be: backend, seed, and per-tree call accounting."""

    model_id: str
    backend_kind: str
    seed: int
    trained_at: str = ""
    tree_calls: tuple[int, ...] = ()
    tree_retries: tuple[int, ...] = ()
    target_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class ForestModel:
    """A trained forest: schema, trees, hyperparameters, provenance."""

    schema: Schema
    trees: tuple[TreeInfo, ...]
    config: ForestConfig
    provenance: Provenance


def merge_training_data(labeled: Dataset, unlabeled: Dataset | None) -> Dataset:
    """Concatenate a fully-labeled and a feature-only dataset into one."""
    if unlabeled is not None and unlabeled.schema != labeled.schema:
        raise DatasetError("labeled and unlabeled schemas differ")
    lab = labeled_subset(labeled)
    unlab_rows: tuple[Row, ...] = ()
    if unlabeled is not None:
        unlab_rows = tuple(unlabeled.rows)
    n_lab = len(lab.rows)
    return Dataset(
        schema=labeled.schema,
        rows=lab.rows + unlab_rows,
        labeled_idx=tuple(range(n_lab)),
        unlabeled_idx=tuple(range(n_lab, n_lab + len(unlab_rows))),
        raw_targets=lab.raw_targets + (None,) * len(unlab_rows),
    )


def route(root: TreeNode, row: Row) -> tuple[Leaf, Path]:
    """Walk one row from the root to its leaf; returns the leaf and the path."""
    node = root
    path: list = []
    while isinstance(node, Internal):
        side = predicate_side(node.predicate, row, node.majority_branch)
        path.append((node.predicate, side))
        node = node.left if side == "left" else node.right
    return node, tuple(path)


def _leaf_sites(root: TreeNode) -> list[tuple[Leaf, Path]]:
    """All leaves with their root paths, depth-first left-before-right."""
    sites: list[tuple[Leaf, Path]] = []

    def walk(node: TreeNode, path: Path) -> None:
        if isinstance(node, Leaf):
            sites.append((node, path))
            return
        walk(node.left, path + ((node.predicate, "left"),))
        walk(node.right, path + ((node.predicate, "right"),))

    walk(root, ())
    return sites


def _train_one_tree(
    k: int,
    data: Dataset,
    cfg: ForestConfig,
    backend,
    model_id: str,
) -> tuple[TreeInfo, int, int]:
    schema = data.schema
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(k,)))
    d = len(schema.features)
    subset_size = int(math.ceil(cfg.max_features * d))
    allowed = tuple(sorted(int(i) for i in rng.choice(d, size=subset_size, replace=False)))

    labeled_rows = list(data.labeled_idx)
    if cfg.bootstrap_labeled and labeled_rows:
        draw = rng.choice(np.asarray(labeled_rows), size=len(labeled_rows), replace=True)
        labeled_rows = sorted(int(i) for i in draw)
    unlabeled_rows = list(data.unlabeled_idx)
    if cfg.labeled_only:
        unlabeled_rows = []
    elif cfg.bootstrap and unlabeled_rows:
        draw = rng.choice(
            np.asarray(unlabeled_rows), size=len(unlabeled_rows), replace=True
        )
        unlabeled_rows = sorted(int(i) for i in draw)

    gateway = Gateway(
        backend,
        model_id,
        construction_temperature=cfg.construction_temperature,
        leaf_temperature=cfg.leaf_temperature,
        seed_tag=k,
    )
    icfg = InductionConfig(
        max_depth=cfg.max_depth,
        labeled_only=cfg.labeled_only,
        split_source=cfg.split_source,
    )
    ctx = NodeContext(depth=0, path=(), allowed_features=allowed)
    root = grow_tree(data, labeled_rows, unlabeled_rows, ctx, icfg, gateway, rng)

    value_range: tuple[float, float] | None = None
    if not schema.is_classification:
        tree_targets = [data.raw_targets[i] for i in labeled_rows]
        value_range = (min(tree_targets), max(tree_targets))

    membership: dict[int, list[int]] = {}
    for i in labeled_rows:
        leaf_obj, _ = route(root, data.rows[i])
        membership.setdefault(id(leaf_obj), []).append(i)

    for leaf_obj, path in _leaf_sites(root):
        members = membership.get(id(leaf_obj), [])
        exemplars = retrieve_exemplars(members, labeled_rows, data)
        if cfg.split_source == SPLIT_CLASSICAL_ONLY:
            assignment = fallback_assignment(exemplars, schema, value_range)
        else:
            rule = induce_rule_text(path, schema)
            assignment = assign_leaf(rule, exemplars, schema, gateway, value_range)
        leaf_obj.target = assignment.target
        leaf_obj.rationale = assignment.rationale
        leaf_obj.support = len(members)
        leaf_obj.source = assignment.source

    return TreeInfo(root=root, allowed_features=allowed), gateway.calls, gateway.retries


def train_forest(
    labeled: Dataset,
    unlabeled: Dataset | None,
    cfg: ForestConfig,
    backend,
    model_id: str = DEFAULT_MODEL_ID,
    trained_at: str = "",
    max_workers: int = 1,
) -> ForestModel:
    """Train a forest from labeled rows plus an optional unlabeled pool.

    labeled contributes every row it marks labeled; unlabeled contributes
    feature-only rows.  Trees are independent given (cfg.seed, tree index),
    so max_workers > 1 trains them concurrently without changing the result.
    trained_at is recorded verbatim in provenance; the default empty string
    keeps model bytes fully determined by the inputs and seed.
    """
    if not labeled.labeled_idx:
        raise DatasetError("training needs at least one labeled row")
    data = merge_training_data(labeled, unlabeled)

    def build(k: int) -> tuple[TreeInfo, int, int]:
        return _train_one_tree(k, data, cfg, backend, model_id)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(build, range(cfg.n_estimators)))
    else:
        results = [build(k) for k in range(cfg.n_estimators)]

    trees = tuple(info for info, _, _ in results)
    calls = tuple(c for _, c, _ in results)
    retries = tuple(r for _, _, r in results)

    target_range: tuple[float, float] | None = None
    if not labeled.schema.is_classification:
        all_targets = [data.raw_targets[i] for i in data.labeled_idx]
        target_range = (min(all_targets), max(all_targets))

    return ForestModel(
        schema=labeled.schema,
        trees=trees,
        config=cfg,
        provenance=Provenance(
            model_id=model_id,
            backend_kind=getattr(backend, "kind", "unknown"),
            seed=cfg.seed,
            trained_at=trained_at,
            tree_calls=calls,
            tree_retries=retries,
            target_range=target_range,
        ),
    )


def _votes(model: ForestModel, row: Row) -> list[Target]:
    votes = []
    for tree in model.trees:
        leaf_obj, _ = route(tree.root, row)
        if leaf_obj.target is None:
            raise InductionError("model has an unlabeled leaf; was training completed?")
        votes.append(leaf_obj.target)
    return votes


def predict(model: ForestModel, row: Row) -> Target:
    """Majority vote (ties to the lexicographically smallest class) or mean."""
    votes = _votes(model, row)
    if model.schema.is_classification:
        counts = Counter(votes)
        return sorted(counts.items(), key=lambda item: (-item[1], item[0]))[0][0]
    return sum(votes) / len(votes)


def predict_scores(model: ForestModel, row: Row) -> dict[str, float]:
    """Per-class vote fractions over all trees; classification only."""
    if not model.schema.is_classification:
        raise TaskMismatch("vote fractions are defined for classification models only")
    votes = _votes(model, row)
    counts = Counter(votes)
    total = len(votes)
    return {label: counts.get(label, 0) / total for label in model.schema.classes}


def split_frequency(model: ForestModel) -> dict[str, int]:
    """How many internal nodes split on each feature, zero included."""
    counts = {name: 0 for name in model.schema.feature_names}
    for tree in model.trees:
        for node in internal_nodes_of(tree.root):
            counts[model.schema.features[node.predicate.feature].name] += 1
    return counts
