"""Tree growth: one node at a time, semantic first, classical as fallback.

A node either stops (depth, support, or purity) or asks for a split.  In
semantic mode the split comes from the backend through a rendered prompt; a
proposal that fails to parse or validates as degenerate earns a retry with
feedback appended, and when retries run out the node falls back to the
classical impurity-reduction search over labeled rows.  In classical-only
mode the search runs directly and no backend is ever consulted.

Impurity is Gini for class labels and population variance for numeric
targets, always computed over labeled rows only, so the chosen classical
split never depends on the unlabeled pool.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

from .dataset import Dataset, KIND_NUMERIC, Target
from .distill import NodeContext, condition_text, render_split_prompt
from .errors import EmptyNode, InductionError, ResponseParseError
from .llm_gateway import Gateway, ParsedSplit, parse_split
from .trees import (
    LEFT,
    RIGHT,
    CategoryMembership,
    Internal,
    Leaf,
    NumericThreshold,
    SplitPredicate,
    TreeNode,
    predicate_side,
)

SPLIT_SEMANTIC = "semantic"
SPLIT_CLASSICAL_ONLY = "classical_only"

PURITY_EPSILON = 1e-12

CLASSICAL_REASONING = "chosen by classical impurity reduction over labeled rows"

REASON_FORBIDDEN_FEATURE = "it uses a feature outside the allowed set"
REASON_EMPTY_CHILD = "it sends every row at this node to one side"
REASON_NO_LABELED_CHILD = "it leaves one side with no labeled examples"


@dataclass(frozen=True)
class InductionConfig:
    """Growth policy for a single tree."""

    max_depth: int
    min_node_rows: int = 2
    min_labeled_rows: int = 1
    max_llm_retries: int = 2
    labeled_only: bool = False
    split_source: str = SPLIT_SEMANTIC

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise InductionError("max_depth must be at least 1")
        if self.split_source not in (SPLIT_SEMANTIC, SPLIT_CLASSICAL_ONLY):
            raise InductionError(f"unknown split source {self.split_source!r}")


def impurity(labels: list[Target] | tuple[Target, ...]) -> float:
    """Gini for class labels, population variance for numeric targets."""
    if not labels:
        raise EmptyNode("impurity of an empty label set is undefined")
    n = len(labels)
    if isinstance(labels[0], str):
        counts = Counter(labels)
        total = 0.0
        for label in sorted(counts):
            p = counts[label] / n
            total += p * p
        return 1.0 - total
    mean = sum(labels) / n
    return sum((value - mean) ** 2 for value in labels) / n


def _partition(
    pred: SplitPredicate, rows: tuple[int, ...] | list[int], data: Dataset
) -> tuple[list[int], list[int], str]:
    """Partition row indices under pred; returns (left, right, majority side).

    Missing numeric values follow the side holding the majority of the node's
    observed values, ties to the left; a missing categorical value is simply
    not a member of any split set and goes right.
    """
    if isinstance(pred, NumericThreshold):
        left_observed = right_observed = 0
        deferred: list[int] = []
        for i in rows:
            value = data.rows[i][pred.feature]
            if value is None:
                deferred.append(i)
            elif value <= pred.threshold:
                left_observed += 1
            else:
                right_observed += 1
        majority = LEFT if left_observed >= right_observed else RIGHT
        left: list[int] = []
        right: list[int] = []
        for i in rows:
            value = data.rows[i][pred.feature]
            side = majority if value is None else (
                LEFT if value <= pred.threshold else RIGHT
            )
            (left if side == LEFT else right).append(i)
        return left, right, majority

    left = []
    right = []
    for i in rows:
        side = predicate_side(pred, data.rows[i])
        (left if side == LEFT else right).append(i)
    majority = LEFT if len(left) >= len(right) else RIGHT
    return left, right, majority


def apply_split(
    pred: SplitPredicate, rows: tuple[int, ...] | list[int], data: Dataset
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split row indices into (left, right) under pred.

    Every input index lands on exactly one side and relative order is
    preserved, so the two sides always partition the input.
    """
    left, right, _ = _partition(pred, rows, data)
    return tuple(left), tuple(right)


def validate_split(
    pred: SplitPredicate,
    labeled_rows: tuple[int, ...] | list[int],
    unlabeled_rows: tuple[int, ...] | list[int],
    data: Dataset,
    allowed: tuple[int, ...],
) -> str | None:
    """None when the split is usable, else a human-readable degeneracy reason.

    Degenerate means: the feature is outside the allowed set, a child would
    receive no rows at all, or a child would receive no labeled rows while
    the parent still had two or more.
    """
    if pred.feature not in set(allowed):
        return REASON_FORBIDDEN_FEATURE
    every_row = list(labeled_rows) + list(unlabeled_rows)
    left, right, _ = _partition(pred, every_row, data)
    if not left or not right:
        return REASON_EMPTY_CHILD
    if len(labeled_rows) >= 2:
        lab_left, lab_right, _ = _partition(pred, list(labeled_rows), data)
        if not lab_left or not lab_right:
            return REASON_NO_LABELED_CHILD
    return None


def classical_best_split(
    labeled_rows: tuple[int, ...] | list[int],
    data: Dataset,
    allowed: tuple[int, ...],
) -> SplitPredicate | None:
    """Exhaustive impurity-reduction search over labeled rows.

    Numeric candidates are midpoints between consecutive distinct observed
    values; categorical candidates are one-vs-rest singleton sets.  The
    winner maximizes impurity reduction; exact ties keep the earlier
    candidate in scan order (lower feature index, then lower threshold or
    lexicographically smaller category).  Returns None when no candidate has
    strictly positive gain with both sides non-empty.  Only labeled rows are
    consulted, so the result is independent of any unlabeled data.
    """
    rows = list(labeled_rows)
    labels = [data.raw_targets[i] for i in rows]
    if not rows:
        return None
    parent = impurity(labels)
    n = len(rows)
    best: SplitPredicate | None = None
    best_gain = 0.0

    def consider(pred: SplitPredicate) -> None:
        nonlocal best, best_gain
        left, right, _ = _partition(pred, rows, data)
        if not left or not right:
            return
        left_labels = [data.raw_targets[i] for i in left]
        right_labels = [data.raw_targets[i] for i in right]
        children = (
            len(left) * impurity(left_labels) + len(right) * impurity(right_labels)
        ) / n
        gain = parent - children
        if gain > 0.0 and gain > best_gain:
            best = pred
            best_gain = gain

    for feature in sorted(set(allowed)):
        if data.schema.kind_of(feature) == KIND_NUMERIC:
            observed = sorted({
                data.rows[i][feature]
                for i in rows
                if data.rows[i][feature] is not None
            })
            for low, high in zip(observed, observed[1:]):
                consider(NumericThreshold(feature, (low + high) / 2.0))
        else:
            observed = sorted({
                data.rows[i][feature]
                for i in rows
                if data.rows[i][feature] is not None
            })
            for category in observed:
                consider(CategoryMembership(feature, frozenset({category})))
    return best


def _is_pure(labels: list[Target]) -> bool:
    if isinstance(labels[0], str):
        return len(set(labels)) == 1
    return max(labels) - min(labels) <= PURITY_EPSILON


def _request_semantic_split(
    data: Dataset,
    labeled_rows: list[int],
    unlabeled_rows: list[int],
    ctx: NodeContext,
    cfg: InductionConfig,
    gateway: Gateway,
) -> ParsedSplit | None:
    """Ask the backend for a split, retrying with feedback; None when it gives up."""
    schema = data.schema
    node_rows = [data.rows[i] for i in labeled_rows + unlabeled_rows]
    labeled_pairs = [(data.rows[i], data.raw_targets[i]) for i in labeled_rows]
    base = render_split_prompt(node_rows, labeled_pairs, ctx, schema)
    feedback: list[str] = []
    for attempt in range(cfg.max_llm_retries + 1):
        bundle = base
        if feedback:
            bundle = replace(base, user_text=base.user_text + "\n\n" + "\n".join(feedback))
        if attempt:
            gateway.note_retry()
        response = gateway.ask_split(bundle)
        try:
            parsed = parse_split(response, ctx, schema)
        except ResponseParseError as exc:
            feedback.append(
                f"Your previous response was invalid ({exc}). "
                f"Propose a different split through the function call."
            )
            continue
        reason = validate_split(
            parsed.predicate, labeled_rows, unlabeled_rows, data, ctx.allowed_features
        )
        if reason is None:
            return parsed
        described = condition_text(parsed.predicate, LEFT, schema)
        feedback.append(
            f'Your previous proposal (left branch: "{described}") was rejected '
            f"because {reason}. Propose a different split."
        )
    return None


def grow_tree(
    data: Dataset,
    labeled_rows: tuple[int, ...] | list[int],
    unlabeled_rows: tuple[int, ...] | list[int],
    ctx: NodeContext,
    cfg: InductionConfig,
    gateway: Gateway | None,
    rng=None,
) -> TreeNode:
    """Grow one subtree from the rows reaching this node.

    Stops into a leaf when the depth budget is spent, too few rows or labeled
    rows remain, or the labeled targets are already pure.  Otherwise obtains
    a split (semantic with retries and classical fallback, or classical
    directly), partitions, and recurses.  Leaves come back with support
    filled in but no target: leaf labeling is a separate pass.  rng is part
    of the call contract for stochastic growth policies; the current policy
    is deterministic given the backend and ignores it.
    """
    labeled = list(labeled_rows)
    unlabeled = [] if cfg.labeled_only else list(unlabeled_rows)
    labels = [data.raw_targets[i] for i in labeled]

    stop = (
        ctx.depth >= cfg.max_depth
        or len(labeled) < cfg.min_labeled_rows
        or len(labeled) + len(unlabeled) < cfg.min_node_rows
        or (labeled and _is_pure(labels))
    )
    if stop:
        return Leaf(support=len(labeled))

    parsed: ParsedSplit | None = None
    if cfg.split_source == SPLIT_SEMANTIC:
        if gateway is None:
            raise InductionError("semantic growth needs a gateway")
        parsed = _request_semantic_split(data, labeled, unlabeled, ctx, cfg, gateway)
    if parsed is None:
        pred = classical_best_split(labeled, data, ctx.allowed_features)
        if pred is not None:
            reason = validate_split(pred, labeled, unlabeled, data, ctx.allowed_features)
            if reason is not None:
                pred = None
        if pred is None:
            return Leaf(support=len(labeled))
        parsed = ParsedSplit(pred, CLASSICAL_REASONING)

    every_row = labeled + unlabeled
    left_all, right_all, majority = _partition(parsed.predicate, every_row, data)
    labeled_set = set(labeled)
    left_lab = [i for i in left_all if i in labeled_set]
    left_unlab = [i for i in left_all if i not in labeled_set]
    right_lab = [i for i in right_all if i in labeled_set]
    right_unlab = [i for i in right_all if i not in labeled_set]

    left_ctx = NodeContext(
        depth=ctx.depth + 1,
        path=ctx.path + ((parsed.predicate, LEFT),),
        allowed_features=ctx.allowed_features,
    )
    right_ctx = NodeContext(
        depth=ctx.depth + 1,
        path=ctx.path + ((parsed.predicate, RIGHT),),
        allowed_features=ctx.allowed_features,
    )
    return Internal(
        predicate=parsed.predicate,
        reasoning=parsed.reasoning,
        left=grow_tree(data, left_lab, left_unlab, left_ctx, cfg, gateway, rng),
        right=grow_tree(data, right_lab, right_unlab, right_ctx, cfg, gateway, rng),
        majority_branch=majority,
    )
