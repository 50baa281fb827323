"""Rule mining with a Gini decision tree and reduced-error pruning.

Candidate thresholds are midpoints between consecutive distinct feature
values. Equal-impurity candidates resolve to the lower pollutant index,
then the lower threshold, so a fixed seed always gives the same tree.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from aqcep.aqi import AqiCategory
from aqcep.errors import MiningError
from aqcep.pollutants import POLLUTANTS, PollutantKind
from aqcep.rules import Condition, Rule, RuleSet, box_to_conditions, condition_box

CATEGORIES: tuple[AqiCategory, ...] = tuple(AqiCategory)
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class MiningParams:
    max_depth: int = 6
    min_leaf: int = 20
    holdout_fraction: float = 0.2
    seed: int = 42

    def __post_init__(self):
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class Leaf:
    category: AqiCategory
    sample_count: int
    label_distribution: dict[AqiCategory, int]


@dataclass(frozen=True)
class Split:
    pollutant: PollutantKind
    threshold: float
    left: Leaf | Split  # pollutant <= threshold
    right: Leaf | Split  # pollutant > threshold
    # Training-set majority at this node; what the node becomes if pruned.
    category: AqiCategory
    sample_count: int
    label_distribution: dict[AqiCategory, int]

    def as_leaf(self) -> Leaf:
        return Leaf(self.category, self.sample_count, self.label_distribution)


DecisionNode = Leaf | Split


def _encode_labels(labels: Sequence[AqiCategory | str]) -> np.ndarray:
    codes = []
    for lab in labels:
        try:
            cat = lab if isinstance(lab, AqiCategory) else AqiCategory.parse(str(lab))
        except ValueError as exc:
            raise MiningError(str(exc)) from None
        codes.append(CATEGORIES.index(cat))
    return np.asarray(codes, dtype=np.int64)


def _distribution(y: np.ndarray) -> tuple[AqiCategory, dict[AqiCategory, int]]:
    counts = np.bincount(y, minlength=len(CATEGORIES))
    dist = {CATEGORIES[k]: int(c) for k, c in enumerate(counts) if c}
    return CATEGORIES[int(np.argmax(counts))], dist


def _weighted_impurity(counts_left: np.ndarray, n_left: np.ndarray, counts_right, n_right) -> np.ndarray:
    # n * weighted Gini = sum over children of (n_c - sum_k count_k^2 / n_c)
    left = n_left - (counts_left**2).sum(axis=1) / n_left
    right = n_right - (counts_right**2).sum(axis=1) / n_right
    return left + right


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    n = len(y)
    onehot = np.zeros((n, len(CATEGORIES)))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    parent = n - (total**2).sum() / n
    best = None  # (impurity, feature, threshold)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        v = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n, dtype=float)
        valid = (v[:-1] < v[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        pos = np.flatnonzero(valid)
        imp = _weighted_impurity(cum[pos], n_left[pos], total - cum[pos], n - n_left[pos])
        k = int(np.flatnonzero(imp <= imp.min() + _TIE_TOL)[0])
        if best is None or imp[k] < best[0] - _TIE_TOL:
            i = pos[k]
            t = (v[i] + v[i + 1]) / 2.0
            if not v[i] <= t < v[i + 1]:
                t = v[i]
            best = (float(imp[k]), j, float(t))
    if best is None or parent - best[0] <= _TIE_TOL:
        return None
    return best[1], best[2]


def _grow(X: np.ndarray, y: np.ndarray, depth: int, params: MiningParams) -> DecisionNode:
    category, dist = _distribution(y)
    if depth >= params.max_depth or len(dist) == 1 or len(y) < 2 * params.min_leaf:
        return Leaf(category, len(y), dist)
    found = _best_split(X, y, params.min_leaf)
    if found is None:
        return Leaf(category, len(y), dist)
    j, t = found
    mask = X[:, j] <= t
    return Split(
        POLLUTANTS[j],
        t,
        _grow(X[mask], y[mask], depth + 1, params),
        _grow(X[~mask], y[~mask], depth + 1, params),
        category,
        len(y),
        dist,
    )


def _prune(node: DecisionNode, X: np.ndarray, y: np.ndarray) -> tuple[DecisionNode, int]:
    """Reduced-error pruning; returns the pruned node and its holdout error count."""
    if isinstance(node, Leaf):
        return node, int((y != CATEGORIES.index(node.category)).sum())
    mask = X[:, node.pollutant.index] <= node.threshold
    left, e_left = _prune(node.left, X[mask], y[mask])
    right, e_right = _prune(node.right, X[~mask], y[~mask])
    as_leaf_errors = int((y != CATEGORIES.index(node.category)).sum())
    if as_leaf_errors <= e_left + e_right:
        return node.as_leaf(), as_leaf_errors
    return Split(node.pollutant, node.threshold, left, right, node.category, node.sample_count,
                 node.label_distribution), e_left + e_right


def holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(train, holdout) index arrays from a seeded shuffle; train is never empty."""
    perm = np.random.default_rng(seed).permutation(n)
    k = min(int(round(n * fraction)), n - 1)
    return np.sort(perm[k:]), np.sort(perm[:k])


def grow_tree(X, labels, params: MiningParams = MiningParams()) -> DecisionNode:
    """Unpruned tree over all rows."""
    X = np.asarray(X, dtype=float)
    return _grow(X, _encode_labels(labels), 0, params)


def mine_rules(
    features, labels: Sequence[AqiCategory | str], params: MiningParams = MiningParams()
) -> tuple[DecisionNode, RuleSet]:
    """Grow a tree on the training split, prune it against the holdout and
    turn every leaf into a rule.

    ``features`` has one row per record and one column per pollutant in
    canonical order.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(POLLUTANTS):
        raise MiningError(f"features must have shape (n, {len(POLLUTANTS)}), got {X.shape}")
    if len(X) != len(labels):
        raise MiningError("features and labels differ in length")
    if len(X) < 2:
        raise MiningError("need at least two records to mine rules")
    if not np.isfinite(X).all():
        raise MiningError("features contain missing or non-finite values; impute first")
    y = _encode_labels(labels)
    train, holdout = holdout_split(len(y), params.holdout_fraction, params.seed)
    tree = _grow(X[train], y[train], 0, params)
    if len(holdout):
        tree, _ = _prune(tree, X[holdout], y[holdout])
    return tree, tree_to_rules(tree)


def tree_to_rules(tree: DecisionNode, prefix: str = "leaf") -> RuleSet:
    """One rule per leaf, left to right, with path bounds simplified per pollutant."""
    rules: list[Rule] = []

    def walk(node: DecisionNode, path: list[Condition]):
        if isinstance(node, Leaf):
            conds = box_to_conditions(condition_box(path)) or (Condition(PollutantKind.PM25, ">=", 0.0),)
            rules.append(Rule(f"{prefix}{len(rules)}", conds, node.category))
            return
        walk(node.left, path + [Condition(node.pollutant, "<=", node.threshold)])
        walk(node.right, path + [Condition(node.pollutant, ">", node.threshold)])

    walk(tree, [])
    return RuleSet(tuple(rules))


def predict(tree: DecisionNode, x: Sequence[float]) -> AqiCategory:
    node = tree
    while isinstance(node, Split):
        node = node.left if x[node.pollutant.index] <= node.threshold else node.right
    return node.category


def tree_error_count(tree: DecisionNode, X, labels) -> int:
    y = _encode_labels(labels)
    return sum(CATEGORIES.index(predict(tree, row)) != code for row, code in zip(np.asarray(X), y))


def rule_accuracy(rules: RuleSet, X, labels) -> float:
    """Share of rows whose first matching rule asserts the row's label."""
    y = [CATEGORIES[c] for c in _encode_labels(labels)]
    hits = 0
    for row, cat in zip(np.asarray(X, dtype=float), y):
        readings = dict(zip(POLLUTANTS, row.tolist()))
        for r in rules:
            if r.matches(readings):
                hits += r.category is cat
                break
    return hits / len(y) if y else 0.0


def dump_tree(tree: DecisionNode) -> str:
    lines = []

    def walk(node: DecisionNode, depth: int):
        pad = "  " * depth
        if isinstance(node, Leaf):
            lines.append(f"{pad}LEAF {node.category.label} n={node.sample_count}")
        else:
            lines.append(f"{pad}SPLIT {node.pollutant.value} <= {node.threshold!r}")
            walk(node.left, depth + 1)
            walk(node.right, depth + 1)

    walk(tree, 0)
    return "\n".join(lines) + "\n"
