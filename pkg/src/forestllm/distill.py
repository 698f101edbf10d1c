"""Turning node data into prompt text.

Everything a backend sees about a node is rendered here: labeled exemplars in
a fixed row grammar, a distributional summary of all rows at the node (the
model's only view of the unlabeled pool), and the node's position in the tree.
Rendering is pure and deterministic, so prompt bytes can be pinned by golden
files and reused as replay cache keys.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .canon import canonical_json_pretty
from .dataset import (
    KIND_CATEGORICAL,
    KIND_NUMERIC,
    MISSING_CATEGORY,
    Row,
    Schema,
    Target,
)
from .errors import DatasetError, NoCandidateFeatures
from .trees import (
    LEFT,
    CategoryMembership,
    NumericThreshold,
    Path,
    SplitPredicate,
)

SPLIT_TOOL_NAME = "propose_split"
TOP_CATEGORIES = 20
NO_EXEMPLARS_MARKER = "no labeled examples reached this leaf"
ROOT_CONTEXT = "root node, depth 0, no prior conditions"


def format_value(value: float | str | None) -> str:
    """Render one cell: numbers to at most 6 significant digits, gaps as Unknown."""
    if value is None:
        return MISSING_CATEGORY
    if isinstance(value, str):
        return value
    return f"{value:.6g}"


def round_sig(value: float, digits: int = 4) -> float:
    return float(f"{value:.{digits}g}")


def serialize_rows(
    rows: list[Row] | tuple[Row, ...],
    schema: Schema,
    targets: list[Target] | tuple[Target, ...] | None = None,
) -> str:
    """Serialize rows one per line: "age is 39. job is teacher. -> yes".

    Pass targets to append the "-> value" suffix; its length must match rows.
    """
    if targets is not None and len(targets) != len(rows):
        raise DatasetError("targets length must match rows length")
    names = schema.feature_names
    lines = []
    for i, row in enumerate(rows):
        clauses = " ".join(
            f"{name} is {format_value(cell)}." for name, cell in zip(names, row)
        )
        if targets is not None:
            clauses += f" -> {format_value(targets[i])}"
        lines.append(clauses)
    return "\n".join(lines)


@dataclass(frozen=True)
class NumericStats:
    count: int
    missing: int
    mean: float | None = None
    std: float | None = None
    minimum: float | None = None
    p25: float | None = None
    p50: float | None = None
    p75: float | None = None
    maximum: float | None = None


@dataclass(frozen=True)
class CategoryStats:
    count: int
    missing: int
    top: tuple[tuple[str, int], ...] = ()
    other: int = 0


@dataclass(frozen=True)
class FeatureSummary:
    """Per-feature distribution stats for the rows reaching one node."""

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    stats: tuple[NumericStats | CategoryStats, ...]

    def render(self) -> str:
        lines = []
        for name, kind, stat in zip(self.names, self.kinds, self.stats):
            if isinstance(stat, NumericStats):
                if stat.count == 0:
                    body = "no observed values"
                else:
                    body = (
                        f"mean {stat.mean:g}, std {stat.std:g}, "
                        f"min {stat.minimum:g}, p25 {stat.p25:g}, "
                        f"p50 {stat.p50:g}, p75 {stat.p75:g}, max {stat.maximum:g}"
                    )
            else:
                if stat.count == 0:
                    body = "no observed values"
                else:
                    body = "values: " + ", ".join(
                        f"{value}: {count}" for value, count in stat.top
                    )
                    if stat.other:
                        body += f", other: {stat.other}"
            lines.append(
                f"- {name} ({kind}): count {stat.count}, missing {stat.missing}, {body}"
            )
        return "\n".join(lines)


def summarize_features(rows: list[Row] | tuple[Row, ...], schema: Schema) -> FeatureSummary:
    """Compute per-feature stats over rows: moments and quartiles for numeric
    columns (rounded to 4 significant figures), top-20 value counts plus an
    overflow bucket for categorical columns."""
    stats: list[NumericStats | CategoryStats] = []
    for i, feat in enumerate(schema.features):
        observed = [row[i] for row in rows if row[i] is not None]
        missing = len(rows) - len(observed)
        if feat.kind == KIND_NUMERIC:
            if not observed:
                stats.append(NumericStats(count=0, missing=missing))
                continue
            arr = np.asarray(observed, dtype=float)
            p25, p50, p75 = np.percentile(arr, [25.0, 50.0, 75.0])
            stats.append(
                NumericStats(
                    count=len(observed),
                    missing=missing,
                    mean=round_sig(float(np.mean(arr))),
                    std=round_sig(float(np.std(arr))),
                    minimum=round_sig(float(arr.min())),
                    p25=round_sig(float(p25)),
                    p50=round_sig(float(p50)),
                    p75=round_sig(float(p75)),
                    maximum=round_sig(float(arr.max())),
                )
            )
        else:
            counts = Counter(observed)
            ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
            top = tuple(ranked[:TOP_CATEGORIES])
            other = sum(count for _, count in ranked[TOP_CATEGORIES:])
            stats.append(
                CategoryStats(
                    count=len(observed), missing=missing, top=top, other=other
                )
            )
    return FeatureSummary(
        names=schema.feature_names,
        kinds=tuple(f.kind for f in schema.features),
        stats=tuple(stats),
    )


@dataclass(frozen=True)
class NodeContext:
    """Where a node sits in its tree: depth, path from root, usable features."""

    depth: int
    path: Path
    allowed_features: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.depth != len(self.path):
            raise DatasetError("node depth must equal path length")
        object.__setattr__(
            self, "allowed_features", tuple(sorted(set(self.allowed_features)))
        )


@dataclass(frozen=True)
class ToolSchema:
    """A function-calling signature the backend must answer through."""

    name: str
    description: str
    parameters: dict

    @property
    def argument_names(self) -> frozenset[str]:
        return frozenset(self.parameters.get("properties", {}))

    def to_wire(self) -> dict:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            },
        }


@dataclass(frozen=True)
class PromptBundle:
    """A complete request: system text, user text, optional tool signature."""

    system_text: str
    user_text: str
    tool_schema: ToolSchema | None = None


def condition_text(pred: SplitPredicate, branch: str, schema: Schema) -> str:
    """One path step in words, e.g. "age is at most 40"."""
    name = schema.features[pred.feature].name
    if isinstance(pred, NumericThreshold):
        rendered = format_value(pred.threshold)
        if branch == LEFT:
            return f"{name} is at most {rendered}"
        return f"{name} is greater than {rendered}"
    listed = "{" + ", ".join(sorted(pred.categories)) + "}"
    if branch == LEFT:
        return f"{name} is one of {listed}"
    return f"{name} is not one of {listed}"


def induce_rule_text(path: Path, schema: Schema) -> str:
    """The conjunction of conditions from root to a node, in root-first order."""
    if not path:
        return "no conditions (root is a leaf)"
    return " AND ".join(condition_text(pred, branch, schema) for pred, branch in path)


def _split_tool_schema(allowed_names: tuple[str, ...]) -> ToolSchema:
    return ToolSchema(
        name=SPLIT_TOOL_NAME,
        description="Commit to the single best split of this node's rows.",
        parameters={
            "type": "object",
            "properties": {
                "feature": {
                    "type": "string",
                    "enum": list(allowed_names),
                    "description": "Name of the feature to split on.",
                },
                "operator": {
                    "type": "string",
                    "enum": ["<=", "in"],
                    "description": (
                        "Use '<=' with a threshold for numeric features, "
                        "'in' with categories for categorical features."
                    ),
                },
                "threshold": {
                    "type": "number",
                    "description": (
                        "Numeric cutoff; rows with value <= threshold go left. "
                        "Required when operator is '<='."
                    ),
                },
                "categories": {
                    "type": "array",
                    "items": {"type": "string"},
                    "description": (
                        "Category values routed left. Required when operator is 'in'."
                    ),
                },
                "reasoning": {
                    "type": "string",
                    "description": "Short justification for choosing this split.",
                },
            },
            "required": ["feature", "operator", "reasoning"],
        },
    )


SPLIT_SYSTEM_TEXT = (
    "You are an expert data scientist designing one node of a decision tree "
    "for a tabular prediction task. You reason about which features plausibly "
    "drive the target and about the data distribution at this node, then "
    "commit to exactly one split."
)

LEAF_SYSTEM_TEXT = (
    "You are an expert data scientist making the final prediction at one "
    "terminal node of a decision tree. You base your answer on the conditions "
    "that define the node and on the labeled examples that reached it."
)


def render_split_prompt(
    node_rows: list[Row] | tuple[Row, ...],
    labeled: list[tuple[Row, Target]] | tuple[tuple[Row, Target], ...],
    ctx: NodeContext,
    schema: Schema,
) -> PromptBundle:
    """Build the full split request for one node.

    The user text carries, in fixed order: the task description, the labeled
    exemplars reaching the node, a feature summary over every row at the node
    (labeled and unlabeled alike), and the node context.  The instruction asks
    the model to first hypothesize feature-target relations and then commit to
    one split through the tool call.
    """
    if not ctx.allowed_features:
        raise NoCandidateFeatures("no features are allowed at this node")
    allowed_names = tuple(schema.features[i].name for i in ctx.allowed_features)

    rows_only = [row for row, _ in labeled]
    targets_only = [target for _, target in labeled]
    exemplar_text = serialize_rows(rows_only, schema, targets_only)
    if not labeled:
        exemplar_text = "(none)"
    summary = summarize_features(node_rows, schema)

    if ctx.path:
        context_block = (
            f"depth {ctx.depth}; conditions satisfied so far (root to node): "
            f"{induce_rule_text(ctx.path, schema)}"
        )
    else:
        context_block = ROOT_CONTEXT

    user_text = (
        f"Task: {schema.task_description}\n"
        f"\n"
        f'Labeled examples at this node (each line ends with "-> {schema.target_name}"):\n'
        f"{exemplar_text}\n"
        f"\n"
        f"Summary of all rows at this node, labeled and unlabeled "
        f"({len(node_rows)} rows):\n"
        f"{summary.render()}\n"
        f"\n"
        f"Node context: {context_block}\n"
        f"Features you may split on: {', '.join(allowed_names)}\n"
        f"\n"
        f'First, hypothesize how the available features relate to "{schema.target_name}". '
        f"Then choose the single split that best separates this node's rows with "
        f"respect to the target, taking both your hypotheses and the summarized "
        f"distribution into account. Answer only by calling the function "
        f"{SPLIT_TOOL_NAME}."
    )
    return PromptBundle(
        system_text=SPLIT_SYSTEM_TEXT,
        user_text=user_text,
        tool_schema=_split_tool_schema(allowed_names),
    )


def render_leaf_prompt(
    rule: str,
    exemplars: list[tuple[Row, Target]] | tuple[tuple[Row, Target], ...],
    schema: Schema,
) -> PromptBundle:
    """Build the label request for one leaf.

    The user text carries the task description, the decision-path rule that
    defines the leaf, and the labeled exemplars that reached it.  For
    classification it then lists every class, including classes absent from
    the exemplars, and asks for exactly one of them; for regression it asks
    for a single number.
    """
    if exemplars:
        rows_only = [row for row, _ in exemplars]
        targets_only = [target for _, target in exemplars]
        exemplar_text = serialize_rows(rows_only, schema, targets_only)
    else:
        exemplar_text = NO_EXEMPLARS_MARKER
    if schema.is_classification:
        answer_block = (
            f'Possible values of "{schema.target_name}": '
            f"{', '.join(schema.classes)}\n"
            f"Answer with exactly one value from that list and nothing else."
        )
    else:
        answer_block = (
            f'Answer with a single number: your best estimate of "{schema.target_name}" '
            f"for records satisfying the conditions above. Respond with the number only."
        )
    user_text = (
        f"Task: {schema.task_description}\n"
        f"\n"
        f"A record reaches a terminal node of a decision tree. The conditions "
        f"satisfied along its path are:\n"
        f"{rule}\n"
        f"\n"
        f'Labeled examples at this node (each line ends with "-> {schema.target_name}"):\n'
        f"{exemplar_text}\n"
        f"\n"
        f"{answer_block}"
    )
    return PromptBundle(system_text=LEAF_SYSTEM_TEXT, user_text=user_text)


def bundle_text(bundle: PromptBundle) -> str:
    """Flatten a bundle into one deterministic text block for golden files."""
    parts = [
        "=== system ===",
        bundle.system_text,
        "=== user ===",
        bundle.user_text,
    ]
    if bundle.tool_schema is not None:
        parts.append("=== tool ===")
        parts.append(canonical_json_pretty(bundle.tool_schema.to_wire()).rstrip("\n"))
    return "\n".join(parts) + "\n"
