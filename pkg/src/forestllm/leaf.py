"""Leaf labeling: one temperature-zero completion per leaf, with fallbacks.

Each leaf is described to the backend by its decision-path rule and the
labeled exemplars that reached it (borrowing the whole tree's labeled rows
when none did).  A reply that cannot be parsed earns exactly one re-ask with
corrective feedback; after that the leaf falls back to the exemplar majority
class or mean value, so a leaf always ends up with a target.  Regression
targets are clamped into the labeled target range of the tree that owns the
leaf.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

from .dataset import Row, Schema, Target
from .distill import render_leaf_prompt
from .errors import InductionError, ResponseParseError
from .llm_gateway import Gateway, parse_leaf
from .trees import SOURCE_LLM, SOURCE_MAJORITY, SOURCE_MEAN

EXEMPLAR_CAP = 48

MAJORITY_RATIONALE = "majority class of the labeled exemplars at this leaf"
MEAN_RATIONALE = "mean target of the labeled exemplars at this leaf"

_CLASS_FEEDBACK = (
    "Your previous answer could not be interpreted as one of the listed "
    "values. Answer with exactly one value from the list and nothing else."
)
_NUMBER_FEEDBACK = (
    "Your previous answer did not contain a number. Respond with a single "
    "number and nothing else."
)


@dataclass(frozen=True)
class ExemplarSet:
    """Labeled (row, target) pairs shown to the backend for one leaf.

    fallback marks that the leaf itself had no labeled rows and the pairs
    were borrowed from the whole tree for context.
    """

    pairs: tuple[tuple[Row, Target], ...]
    fallback: bool = False


@dataclass(frozen=True)
class LeafAssignment:
    """The decided target plus how it came to be."""

    target: Target
    rationale: str
    exemplar_count: int
    source: str


def retrieve_exemplars(
    leaf_labeled: list[int] | tuple[int, ...],
    tree_labeled: list[int] | tuple[int, ...],
    data,
    cap: int = EXEMPLAR_CAP,
) -> ExemplarSet:
    """The leaf's labeled rows in dataset order, capped; tree rows if none."""
    indices = list(leaf_labeled)
    fallback = not indices
    if fallback:
        indices = list(tree_labeled)
    pairs = tuple(
        (data.rows[i], data.raw_targets[i]) for i in indices[:cap]
    )
    return ExemplarSet(pairs=pairs, fallback=fallback)


def _clamp(value: float, value_range: tuple[float, float] | None) -> float:
    if value_range is None:
        return value
    low, high = value_range
    return min(max(value, low), high)


def fallback_assignment(
    exemplars: ExemplarSet,
    schema: Schema,
    value_range: tuple[float, float] | None = None,
) -> LeafAssignment:
    """Exemplar majority class (ties to the lexicographically smallest) or mean."""
    targets = [target for _, target in exemplars.pairs]
    if schema.is_classification:
        if targets:
            counts = Counter(targets)
            label = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[0][0]
        else:
            label = schema.classes[0]
        return LeafAssignment(
            target=label,
            rationale=MAJORITY_RATIONALE,
            exemplar_count=len(targets),
            source=SOURCE_MAJORITY,
        )
    if targets:
        value = sum(targets) / len(targets)
    elif value_range is not None:
        value = (value_range[0] + value_range[1]) / 2.0
    else:
        raise InductionError("regression leaf has no exemplars and no value range")
    return LeafAssignment(
        target=_clamp(value, value_range),
        rationale=MEAN_RATIONALE,
        exemplar_count=len(targets),
        source=SOURCE_MEAN,
    )


def assign_leaf(
    rule: str,
    exemplars: ExemplarSet,
    schema: Schema,
    gateway: Gateway,
    value_range: tuple[float, float] | None = None,
) -> LeafAssignment:
    """Ask the backend for this leaf's target; re-ask once, then fall back.

    The request is rendered from the decision-path rule and the exemplars and
    sent at the leaf temperature.  value_range bounds regression answers to
    the labeled target range of the owning tree.
    """
    bundle = render_leaf_prompt(rule, exemplars.pairs, schema)
    feedback = _CLASS_FEEDBACK if schema.is_classification else _NUMBER_FEEDBACK
    response = gateway.ask_leaf(bundle)
    try:
        target = parse_leaf(response, schema)
    except ResponseParseError:
        gateway.note_retry()
        retry_bundle = replace(bundle, user_text=bundle.user_text + "\n\n" + feedback)
        response = gateway.ask_leaf(retry_bundle)
        try:
            target = parse_leaf(response, schema)
        except ResponseParseError:
            return fallback_assignment(exemplars, schema, value_range)
    if isinstance(target, float):
        target = _clamp(target, value_range)
    return LeafAssignment(
        target=target,
        rationale=(response.content or "").strip(),
        exemplar_count=len(exemplars.pairs),
        source=SOURCE_LLM,
    )
