"""Independent reference implementations used to check the library.

Everything here is written the slow, obvious way on purpose: quadratic
pairwise AUC, literal formula NRMSE, and a brute-force split search over
plain dicts.  None of it imports the library's numerics, so agreement
between the two is evidence, not tautology.
"""

from __future__ import annotations

Pred = tuple  # ("<=", name, threshold) or ("in", name, frozenset)


def gini_oracle(labels) -> float:
    n = len(labels)
    total = 0.0
    for label in sorted(set(labels)):
        p = labels.count(label) / n
        total += p * p
    return 1.0 - total


def variance_oracle(values) -> float:
    n = len(values)
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / n


def impurity_oracle(labels) -> float:
    if isinstance(labels[0], str):
        return gini_oracle(list(labels))
    return variance_oracle(list(labels))


def partition_oracle(rows, name, op, value):
    """Split row dicts under one predicate using the documented conventions:
    numeric missing follows the observed majority (ties left), categorical
    missing is never a member and goes right."""
    if op == "<=":
        left_obs = sum(
            1 for r in rows if r[name] is not None and r[name] <= value
        )
        right_obs = sum(
            1 for r in rows if r[name] is not None and r[name] > value
        )
        majority_left = left_obs >= right_obs
        left, right = [], []
        for i, r in enumerate(rows):
            if r[name] is None:
                (left if majority_left else right).append(i)
            elif r[name] <= value:
                left.append(i)
            else:
                right.append(i)
        return left, right
    left, right = [], []
    for i, r in enumerate(rows):
        if r[name] is not None and r[name] in value:
            left.append(i)
        else:
            right.append(i)
    return left, right


def brute_best_split(rows, labels, kinds, feature_order):
    """Exhaustive best split over row dicts.

    rows: list of {feature name: cell}; labels: parallel list of targets;
    kinds: {name: "numeric"|"categorical"}; feature_order fixes the scan
    order (and therefore tie-breaking).  Returns (op, name, value, gain) or
    None when no candidate has strictly positive gain with two non-empty
    sides.  Candidates per feature go in ascending threshold or category
    order, so exact gain ties keep the earliest candidate.
    """
    n = len(rows)
    parent = impurity_oracle(labels)
    best = None
    best_gain = 0.0
    for name in feature_order:
        observed = sorted({r[name] for r in rows if r[name] is not None})
        if kinds[name] == "numeric":
            candidates = [
                ("<=", (a + b) / 2.0) for a, b in zip(observed, observed[1:])
            ]
        else:
            candidates = [("in", frozenset({c})) for c in observed]
        for op, value in candidates:
            left, right = partition_oracle(rows, name, op, value)
            if not left or not right:
                continue
            left_labels = [labels[i] for i in left]
            right_labels = [labels[i] for i in right]
            children = (
                len(left) * impurity_oracle(left_labels)
                + len(right) * impurity_oracle(right_labels)
            ) / n
            gain = parent - children
            if gain > 0.0 and gain > best_gain:
                best = (op, name, value, gain)
                best_gain = gain
    return best


def auc_binary_pairwise(positives, scores) -> float:
    """Pairwise wins plus half-ties over all (positive, negative) pairs."""
    pos = [s for s, flag in zip(scores, positives) if flag]
    neg = [s for s, flag in zip(scores, positives) if not flag]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def auc_macro_pairwise(truth, scores) -> float:
    present = sorted(set(truth))
    total = 0.0
    for label in present:
        positives = [t == label for t in truth]
        class_scores = [row.get(label, 0.0) for row in scores]
        total += auc_binary_pairwise(positives, class_scores)
    return total / len(present)


def nrmse_direct(truth, pred) -> float:
    n = len(truth)
    mse = sum((t - p) ** 2 for t, p in zip(truth, pred)) / n
    mean = sum(truth) / n
    var = sum((t - mean) ** 2 for t in truth) / n
    return (mse**0.5) / (var**0.5)
