"""Model files: canonical JSON with structural validation on load.

One format version, sorted keys, shortest round-trip floats, trailing
newline.  Saving the same model twice yields identical bytes, and a loaded
model re-saves to the bytes it came from.  Loading validates structure
before handing the model back: feature references stay inside each tree's
allowed subset, leaf targets are legal for the task, depths respect the
configured bound.
"""

from __future__ import annotations

import json

from .canon import canonical_json_pretty
from .dataset import (
    KIND_CATEGORICAL,
    KIND_NUMERIC,
    Feature,
    Schema,
    TASK_CLASSIFICATION,
)
from .errors import InvariantViolation, ModelIOError, UnsupportedVersion
from .forest import ForestConfig, ForestModel, Provenance, TreeInfo
from .trees import (
    LEAF_SOURCES,
    LEFT,
    RIGHT,
    CategoryMembership,
    Internal,
    Leaf,
    NumericThreshold,
    TreeNode,
    tree_depth,
)

FORMAT_VERSION = 1


def _node_to_doc(node: TreeNode, schema: Schema) -> dict:
    if isinstance(node, Leaf):
        return {
            "kind": "leaf",
            "target": node.target,
            "rationale": node.rationale,
            "support": node.support,
            "source": node.source,
        }
    pred = node.predicate
    doc: dict = {
        "kind": "internal",
        "feature": schema.features[pred.feature].name,
        "reasoning": node.reasoning,
        "majority_branch": node.majority_branch,
        "left": _node_to_doc(node.left, schema),
        "right": _node_to_doc(node.right, schema),
    }
    if isinstance(pred, NumericThreshold):
        doc["op"] = "<="
        doc["threshold"] = pred.threshold
    else:
        doc["op"] = "in"
        doc["categories"] = sorted(pred.categories)
    return doc


def model_to_doc(model: ForestModel) -> dict:
    schema = model.schema
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "schema": {
            "features": [
                {"name": f.name, "kind": f.kind} for f in schema.features
            ],
            "target_name": schema.target_name,
            "task": schema.task,
            "classes": list(schema.classes),
            "task_description": schema.task_description,
        },
        "config": {
            "n_estimators": model.config.n_estimators,
            "max_depth": model.config.max_depth,
            "bootstrap": model.config.bootstrap,
            "bootstrap_labeled": model.config.bootstrap_labeled,
            "max_features": model.config.max_features,
            "construction_temperature": model.config.construction_temperature,
            "leaf_temperature": model.config.leaf_temperature,
            "labeled_only": model.config.labeled_only,
            "split_source": model.config.split_source,
            "seed": model.config.seed,
        },
        "provenance": {
            "model_id": model.provenance.model_id,
            "backend_kind": model.provenance.backend_kind,
            "seed": model.provenance.seed,
            "trained_at": model.provenance.trained_at,
            "tree_calls": list(model.provenance.tree_calls),
            "tree_retries": list(model.provenance.tree_retries),
            "target_range": None
            if model.provenance.target_range is None
            else list(model.provenance.target_range),
        },
        "trees": [
            {
                "allowed_features": [
                    schema.features[i].name for i in tree.allowed_features
                ],
                "root": _node_to_doc(tree.root, schema),
            }
            for tree in model.trees
        ],
    }
    return doc


def save_model(model: ForestModel, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(canonical_json_pretty(model_to_doc(model)))


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantViolation(message)


def _node_from_doc(
    doc: dict, schema: Schema, allowed: set[int], model: "dict"
) -> TreeNode:
    kind = doc.get("kind")
    if kind == "leaf":
        target = doc.get("target")
        if schema.task == TASK_CLASSIFICATION:
            _require(
                target in schema.classes,
                f"leaf target {target!r} is not a declared class",
            )
        else:
            _require(
                isinstance(target, (int, float)) and not isinstance(target, bool),
                f"leaf target {target!r} is not a number",
            )
            target = float(target)
            bounds = model.get("target_range")
            if bounds is not None:
                _require(
                    bounds[0] <= target <= bounds[1],
                    f"leaf target {target} lies outside the labeled range {bounds}",
                )
        _require(doc.get("source") in LEAF_SOURCES, "leaf has an unknown source")
        support = doc.get("support")
        _require(
            isinstance(support, int) and support >= 0, "leaf support must be an int"
        )
        return Leaf(
            target=target,
            rationale=str(doc.get("rationale", "")),
            support=support,
            source=doc["source"],
        )
    _require(kind == "internal", f"unknown node kind {kind!r}")
    name = doc.get("feature")
    try:
        feature = schema.index_of(name)
    except Exception:
        raise InvariantViolation(f"internal node names unknown feature {name!r}") from None
    _require(
        feature in allowed, f"feature {name!r} is outside the tree's allowed subset"
    )
    op = doc.get("op")
    if op == "<=":
        _require(
            schema.kind_of(feature) == KIND_NUMERIC,
            f"threshold split on non-numeric feature {name!r}",
        )
        threshold = doc.get("threshold")
        _require(
            isinstance(threshold, (int, float)) and not isinstance(threshold, bool),
            "threshold must be a number",
        )
        pred = NumericThreshold(feature, float(threshold))
    elif op == "in":
        _require(
            schema.kind_of(feature) == KIND_CATEGORICAL,
            f"membership split on non-categorical feature {name!r}",
        )
        categories = doc.get("categories")
        _require(
            isinstance(categories, list) and categories,
            "membership split needs a non-empty category list",
        )
        pred = CategoryMembership(feature, frozenset(str(c) for c in categories))
    else:
        raise InvariantViolation(f"unknown split operator {op!r}")
    _require(
        doc.get("majority_branch") in (LEFT, RIGHT),
        "majority_branch must be 'left' or 'right'",
    )
    return Internal(
        predicate=pred,
        reasoning=str(doc.get("reasoning", "")),
        left=_node_from_doc(doc["left"], schema, allowed, model),
        right=_node_from_doc(doc["right"], schema, allowed, model),
        majority_branch=doc["majority_branch"],
    )


def model_from_doc(doc: dict) -> ForestModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(
            f"model file declares format_version {version!r}, this build reads "
            f"{FORMAT_VERSION}"
        )
    try:
        schema_doc = doc["schema"]
        schema = Schema(
            features=tuple(
                Feature(f["name"], f["kind"]) for f in schema_doc["features"]
            ),
            target_name=schema_doc["target_name"],
            task=schema_doc["task"],
            classes=tuple(schema_doc.get("classes", ())),
            task_description=schema_doc.get("task_description", ""),
        )
        config = ForestConfig(**doc["config"])
        prov_doc = doc["provenance"]
        trees_doc = doc["trees"]
    except InvariantViolation:
        raise
    except Exception as exc:
        raise InvariantViolation(f"model document is structurally invalid: {exc}") from exc

    _require(
        len(trees_doc) == config.n_estimators,
        f"model holds {len(trees_doc)} trees but config says {config.n_estimators}",
    )
    target_range = prov_doc.get("target_range")
    if target_range is not None:
        _require(
            isinstance(target_range, list) and len(target_range) == 2,
            "target_range must be a [low, high] pair",
        )
        target_range = (float(target_range[0]), float(target_range[1]))

    trees = []
    for tree_doc in trees_doc:
        names = tree_doc.get("allowed_features")
        _require(isinstance(names, list) and names, "tree needs allowed features")
        try:
            allowed = tuple(sorted(schema.index_of(name) for name in names))
        except Exception:
            raise InvariantViolation(
                f"tree allows unknown features {names!r}"
            ) from None
        root = _node_from_doc(
            tree_doc["root"], schema, set(allowed), {"target_range": target_range}
        )
        _require(
            tree_depth(root) <= config.max_depth,
            f"tree depth exceeds the configured bound {config.max_depth}",
        )
        trees.append(TreeInfo(root=root, allowed_features=allowed))

    tree_calls = tuple(int(c) for c in prov_doc.get("tree_calls", ()))
    tree_retries = tuple(int(r) for r in prov_doc.get("tree_retries", ()))
    _require(
        len(tree_calls) == len(trees) and len(tree_retries) == len(trees),
        "per-tree call accounting must cover every tree",
    )
    return ForestModel(
        schema=schema,
        trees=tuple(trees),
        config=config,
        provenance=Provenance(
            model_id=str(prov_doc.get("model_id", "")),
            backend_kind=str(prov_doc.get("backend_kind", "")),
            seed=int(prov_doc.get("seed", 0)),
            trained_at=str(prov_doc.get("trained_at", "")),
            tree_calls=tree_calls,
            tree_retries=tree_retries,
            target_range=target_range,
        ),
    )


def load_model(path: str) -> ForestModel:
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise ModelIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelIOError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_doc(doc)
