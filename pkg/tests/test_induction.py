"""Impurity, classical split search, partitioning, and tree growth."""

from __future__ import annotations

import pytest

from forestllm import (
    Gateway,
    InductionConfig,
    MockBackend,
    NodeContext,
    SPLIT_CLASSICAL_ONLY,
    ScriptRule,
    apply_split,
    classical_best_split,
    grow_tree,
    impurity,
    text_response,
    tool_response,
    validate_split,
)
from forestllm.errors import EmptyNode, InductionError
from forestllm.induction import (
    CLASSICAL_REASONING,
    REASON_EMPTY_CHILD,
    REASON_FORBIDDEN_FEATURE,
    REASON_NO_LABELED_CHILD,
    _partition,
)
from forestllm.trees import (
    CategoryMembership,
    Internal,
    Leaf,
    NumericThreshold,
    tree_depth,
)

from conftest import build_dataset, clf_schema, reg_schema


def numeric_dataset(values, labels, jobs=None):
    jobs = jobs or ["j"] * len(values)
    rows = [(v, j) for v, j in zip(values, jobs)]
    return build_dataset(clf_schema(), rows, labels)


class Recorder:
    """Wraps a backend to remember every request it answers."""

    kind = "mock"

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, req):
        self.requests.append(req)
        return self.inner.complete(req)


# ---------------------------------------------------------------- impurity


def test_impurity_gini():
    assert impurity(["a", "a", "b", "b"]) == 0.5
    assert impurity(["a", "a", "a"]) == 0.0
    assert impurity(["a", "b", "c", "d"]) == 0.75


def test_impurity_population_variance():
    assert impurity([1.0, 2.0, 3.0, 4.0]) == 1.25
    assert impurity([5.0, 5.0]) == 0.0


def test_impurity_empty_raises():
    with pytest.raises(EmptyNode):
        impurity([])


# ---------------------------------------------------------------- classical


def test_classical_finds_clean_numeric_boundary():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"])
    pred = classical_best_split((0, 1, 2, 3), ds, (0, 1))
    assert pred == NumericThreshold(0, 2.5)


def test_classical_equal_gain_keeps_lower_threshold():
    # Thresholds 1.5 and 3.5 tie exactly; the scan keeps the first.
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "b", "b", "a"])
    pred = classical_best_split((0, 1, 2, 3), ds, (0, 1))
    assert pred == NumericThreshold(0, 1.5)


def test_classical_equal_gain_keeps_lower_feature():
    # Two identical numeric columns: the tie goes to the lower index.
    schema = reg_schema()
    rows = [(1.0, "a"), (2.0, "a"), (3.0, "b"), (4.0, "b")]
    ds = build_dataset(
        build_twin_schema(), rows and [(v, v) for v, _ in rows],
        ["x", "x", "y", "y"],
    )
    pred = classical_best_split((0, 1, 2, 3), ds, (0, 1))
    assert pred == NumericThreshold(0, 2.5)
    del schema


def build_twin_schema():
    from forestllm import Feature, Schema

    return Schema(
        features=(Feature("left_col", "numeric"), Feature("right_col", "numeric")),
        target_name="label",
        task="classification",
        classes=("x", "y"),
        task_description="twin columns",
    )


def test_classical_categorical_one_vs_rest():
    ds = numeric_dataset(
        [1.0, 1.0, 1.0, 1.0],
        ["a", "a", "b", "b"],
        jobs=["red", "red", "green", "blue"],
    )
    pred = classical_best_split((0, 1, 2, 3), ds, (0, 1))
    assert pred == CategoryMembership(1, frozenset({"red"}))


def test_classical_requires_strictly_positive_gain():
    constant = numeric_dataset([2.0, 2.0], ["a", "b"])
    assert classical_best_split((0, 1), constant, (0, 1)) is None
    zero_gain = numeric_dataset([1.0, 1.0, 2.0, 2.0], ["a", "b", "a", "b"])
    assert classical_best_split((0, 1, 2, 3), zero_gain, (0, 1)) is None


def test_classical_respects_allowed_subset():
    ds = numeric_dataset(
        [1.0, 2.0, 3.0, 4.0],
        ["a", "a", "b", "b"],
        jobs=["red", "red", "blue", "blue"],
    )
    pred = classical_best_split((0, 1, 2, 3), ds, (1,))
    assert pred == CategoryMembership(1, frozenset({"blue"}))


def test_classical_regression_variance_gain():
    rows = [(1.0, "d"), (2.0, "d"), (10.0, "d"), (11.0, "d")]
    ds = build_dataset(reg_schema(), rows, [1.0, 2.0, 10.0, 11.0])
    pred = classical_best_split((0, 1, 2, 3), ds, (0, 1))
    assert pred == NumericThreshold(0, 6.0)


def test_classical_empty_labeled_returns_none():
    ds = numeric_dataset([1.0], [None])
    assert classical_best_split((), ds, (0, 1)) is None


# --------------------------------------------------------------- partition


def test_partition_missing_numeric_follows_majority():
    ds = numeric_dataset([1.0, 2.0, 3.0, None], ["a", "a", "b", "b"])
    left, right, majority = _partition(NumericThreshold(0, 2.5), [0, 1, 2, 3], ds)
    assert (left, right) == ([0, 1, 3], [2])
    assert majority == "left"


def test_partition_missing_numeric_majority_tie_goes_left():
    ds = numeric_dataset([1.0, None, 3.0], ["a", "a", "b"])
    left, right, majority = _partition(NumericThreshold(0, 2.0), [0, 1, 2], ds)
    assert majority == "left"
    assert left == [0, 1]


def test_partition_missing_numeric_can_follow_right():
    ds = numeric_dataset([1.0, 3.0, 4.0, None], ["a", "b", "b", "a"])
    left, right, majority = _partition(NumericThreshold(0, 2.0), [0, 1, 2, 3], ds)
    assert majority == "right"
    assert (left, right) == ([0], [1, 2, 3])


def test_partition_missing_categorical_goes_right():
    ds = numeric_dataset([1.0, 1.0, 1.0], ["a", "a", "b"],
                         jobs=["admin", None, "teacher"])
    pred = CategoryMembership(1, frozenset({"admin"}))
    left, right, _ = _partition(pred, [0, 1, 2], ds)
    assert (left, right) == ([0], [1, 2])


def test_apply_split_partitions_in_order():
    ds = numeric_dataset([4.0, 1.0, 3.0, 2.0], ["a", "a", "b", "b"])
    left, right = apply_split(NumericThreshold(0, 2.5), (0, 1, 2, 3), ds)
    assert left == (1, 3)
    assert right == (0, 2)
    assert sorted(left + right) == [0, 1, 2, 3]


# -------------------------------------------------------------- validation


def test_validate_split_reasons():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", None, None])
    labeled, unlabeled = [0, 1], [2, 3]
    outside = NumericThreshold(1, 0.0)
    assert (
        validate_split(outside, labeled, unlabeled, ds, (0,))
        == REASON_FORBIDDEN_FEATURE
    )
    everything_left = NumericThreshold(0, 10.0)
    assert (
        validate_split(everything_left, labeled, unlabeled, ds, (0, 1))
        == REASON_EMPTY_CHILD
    )
    labeled_one_side = NumericThreshold(0, 2.5)
    assert (
        validate_split(labeled_one_side, labeled, unlabeled, ds, (0, 1))
        == REASON_NO_LABELED_CHILD
    )
    fine = NumericThreshold(0, 1.5)
    assert validate_split(fine, labeled, unlabeled, ds, (0, 1)) is None


def test_validate_split_single_labeled_parent_is_exempt():
    ds = numeric_dataset([1.0, 2.0, 3.0], ["a", None, None])
    pred = NumericThreshold(0, 2.5)
    assert validate_split(pred, [0], [1, 2], ds, (0, 1)) is None


# ------------------------------------------------------------- tree growth


def root_ctx(allowed=(0, 1)) -> NodeContext:
    return NodeContext(depth=0, path=(), allowed_features=tuple(allowed))


def semantic_cfg(**overrides) -> InductionConfig:
    values = {"max_depth": 3}
    values.update(overrides)
    return InductionConfig(**values)


def test_grow_stops_on_pure_labels_without_asking():
    ds = numeric_dataset([1.0, 2.0, 3.0], ["a", "a", "a"])
    root = grow_tree(ds, [0, 1, 2], [], root_ctx(), semantic_cfg(), gateway=None)
    assert isinstance(root, Leaf)
    assert root.support == 3


def test_grow_stops_on_depth_and_row_minima():
    ds = numeric_dataset([1.0, 2.0], ["a", "b"])
    at_depth = NodeContext(
        depth=1, path=((NumericThreshold(0, 5.0), "left"),), allowed_features=(0, 1)
    )
    root = grow_tree(
        ds, [0, 1], [], at_depth, semantic_cfg(max_depth=1), gateway=None
    )
    assert isinstance(root, Leaf)
    single = grow_tree(ds, [0], [], root_ctx(), semantic_cfg(), gateway=None)
    assert isinstance(single, Leaf)
    starved = grow_tree(
        ds, [0, 1], [], root_ctx(), semantic_cfg(min_node_rows=3), gateway=None
    )
    assert isinstance(starved, Leaf)


def test_grow_semantic_accepts_valid_proposal():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"])
    backend = MockBackend([
        ScriptRule(respond=tool_response({
            "feature": "age", "operator": "<=", "threshold": 2.5,
            "reasoning": "younger clients label a",
        })),
    ])
    gateway = Gateway(backend, "gpt-4o")
    root = grow_tree(ds, [0, 1, 2, 3], [], root_ctx(), semantic_cfg(), gateway)
    assert isinstance(root, Internal)
    assert root.predicate == NumericThreshold(0, 2.5)
    assert root.reasoning == "younger clients label a"
    assert isinstance(root.left, Leaf) and isinstance(root.right, Leaf)
    assert gateway.calls == 1
    assert gateway.retries == 0


def test_grow_semantic_retries_with_feedback_then_succeeds():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"])
    inner = MockBackend([
        # First answer: degenerate (sends every row left); second: plain text
        # instead of a tool call; third: valid.
        ScriptRule(respond=tool_response({
            "feature": "age", "operator": "<=", "threshold": 99.0,
            "reasoning": "r1",
        }), times=1),
        ScriptRule(respond=text_response("I cannot decide"), times=1),
        ScriptRule(respond=tool_response({
            "feature": "age", "operator": "<=", "threshold": 2.5,
            "reasoning": "r3",
        })),
    ])
    backend = Recorder(inner)
    gateway = Gateway(backend, "gpt-4o")
    root = grow_tree(ds, [0, 1, 2, 3], [], root_ctx(), semantic_cfg(), gateway)
    assert isinstance(root, Internal)
    assert root.predicate == NumericThreshold(0, 2.5)
    assert gateway.calls == 3
    assert gateway.retries == 2

    second_text = backend.requests[1].messages[-1][1]
    assert 'left branch: "age is at most 99"' in second_text
    assert "it sends every row at this node to one side" in second_text
    third_text = backend.requests[2].messages[-1][1]
    assert "Your previous response was invalid" in third_text
    assert "it sends every row at this node to one side" in third_text


def test_grow_falls_back_to_classical_after_retries():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"])
    backend = MockBackend([ScriptRule(respond=text_response("no idea"))])
    gateway = Gateway(backend, "gpt-4o")
    root = grow_tree(ds, [0, 1, 2, 3], [], root_ctx(), semantic_cfg(), gateway)
    assert isinstance(root, Internal)
    assert root.predicate == NumericThreshold(0, 2.5)
    assert root.reasoning == CLASSICAL_REASONING
    assert gateway.calls == 3
    assert gateway.retries == 2


def test_grow_becomes_leaf_when_no_split_exists():
    ds = numeric_dataset([2.0, 2.0], ["a", "b"])
    backend = MockBackend([ScriptRule(respond=text_response("hmm"))])
    gateway = Gateway(backend, "gpt-4o")
    root = grow_tree(ds, [0, 1], [], root_ctx(), semantic_cfg(), gateway)
    assert isinstance(root, Leaf)
    assert root.support == 2
    assert gateway.calls == 3


def test_grow_classical_only_never_touches_a_backend():
    ds = numeric_dataset([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"])
    cfg = semantic_cfg(split_source=SPLIT_CLASSICAL_ONLY)
    root = grow_tree(ds, [0, 1, 2, 3], [], root_ctx(), cfg, gateway=None)
    assert isinstance(root, Internal)
    assert root.predicate == NumericThreshold(0, 2.5)
    assert root.reasoning == CLASSICAL_REASONING


def test_grow_semantic_without_gateway_raises():
    ds = numeric_dataset([1.0, 2.0], ["a", "b"])
    with pytest.raises(InductionError, match="needs a gateway"):
        grow_tree(ds, [0, 1], [], root_ctx(), semantic_cfg(), gateway=None)


def test_grow_labeled_only_ignores_unlabeled_rows():
    # The unlabeled rows would make this proposal degenerate (they all land
    # on the right); labeled-only growth never sees them, so it stands.
    ds = numeric_dataset(
        [1.0, 2.0, 50.0, 60.0], ["a", "b", None, None]
    )
    backend = MockBackend([
        ScriptRule(respond=tool_response({
            "feature": "age", "operator": "<=", "threshold": 1.5,
            "reasoning": "r",
        })),
    ])
    cfg = semantic_cfg(labeled_only=True)
    gateway = Gateway(backend, "gpt-4o")
    root = grow_tree(ds, [0, 1], [2, 3], root_ctx(), cfg, gateway)
    assert isinstance(root, Internal)
    assert isinstance(root.left, Leaf) and root.left.support == 1
    assert isinstance(root.right, Leaf) and root.right.support == 1


def test_grow_recurses_and_respects_depth_budget():
    ds = numeric_dataset(
        [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        ["a", "a", "b", "b", "c", "c", "d", "d"],
    )
    schema = ds.schema
    classes = ("a", "b", "c", "d")
    from forestllm import Schema, Feature

    wide = Schema(
        features=schema.features,
        target_name=schema.target_name,
        task="classification",
        classes=classes,
        task_description=schema.task_description,
    )
    ds = build_dataset(
        wide, ds.rows, ["a", "a", "b", "b", "c", "c", "d", "d"]
    )
    cfg = InductionConfig(max_depth=2, split_source=SPLIT_CLASSICAL_ONLY)
    root = grow_tree(ds, list(range(8)), [], root_ctx(), cfg, gateway=None)
    assert tree_depth(root) == 2
    cfg3 = InductionConfig(max_depth=3, split_source=SPLIT_CLASSICAL_ONLY)
    deeper = grow_tree(ds, list(range(8)), [], root_ctx(), cfg3, gateway=None)
    assert tree_depth(deeper) == 3


def test_induction_config_validation():
    with pytest.raises(InductionError):
        InductionConfig(max_depth=0)
    with pytest.raises(InductionError):
        InductionConfig(max_depth=1, split_source="telepathy")
