"""Tree building blocks: split predicates, nodes, and row routing.

The single source of truth for routing conventions lives here so that
training-time partitioning and inference-time traversal can never drift
apart: numeric rows compare value <= threshold (left on true), categorical
rows test set membership (left on true), and a missing numeric value follows
the branch that held the majority of rows when the node was built.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import Row

LEFT = "left"
RIGHT = "right"

SOURCE_LLM = "llm_inferred"
SOURCE_MAJORITY = "fallback_majority"
SOURCE_MEAN = "fallback_mean"

LEAF_SOURCES = (SOURCE_LLM, SOURCE_MAJORITY, SOURCE_MEAN)


@dataclass(frozen=True)
class NumericThreshold:
    """Route left when row[feature] <= threshold."""

    feature: int
    threshold: float


@dataclass(frozen=True)
class CategoryMembership:
    """Route left when row[feature] is one of categories."""

    feature: int
    categories: frozenset[str]


SplitPredicate = NumericThreshold | CategoryMembership


@dataclass
class Leaf:
    """Terminal node holding the assigned target and how it was produced."""

    target: str | float | None = None
    rationale: str = ""
    support: int = 0
    source: str = ""


@dataclass
class Internal:
    """Decision node: a predicate, the reasoning behind it, and two children."""

    predicate: SplitPredicate
    reasoning: str
    left: TreeNode
    right: TreeNode
    majority_branch: str = LEFT


TreeNode = Leaf | Internal

# A path is the sequence of (predicate, branch taken) pairs from the root.
PathStep = tuple[SplitPredicate, str]
Path = tuple[PathStep, ...]


def predicate_side(pred: SplitPredicate, row: Row, majority_branch: str = LEFT) -> str:
    """Which branch a single row takes under pred."""
    value = row[pred.feature]
    if isinstance(pred, NumericThreshold):
        if value is None:
            return majority_branch
        return LEFT if value <= pred.threshold else RIGHT
    return LEFT if value in pred.categories else RIGHT


def iter_nodes(root: TreeNode):
    """Yield every node depth-first, left before right."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Internal):
            stack.append(node.right)
            stack.append(node.left)


def tree_depth(root: TreeNode) -> int:
    if isinstance(root, Leaf):
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))


def leaves_of(root: TreeNode) -> tuple[Leaf, ...]:
    return tuple(node for node in iter_nodes(root) if isinstance(node, Leaf))


def internal_nodes_of(root: TreeNode) -> tuple[Internal, ...]:
    return tuple(node for node in iter_nodes(root) if isinstance(node, Internal))
