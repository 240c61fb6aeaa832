"""CART decision trees and a bagged random-forest classifier.

Class 0 is normal, class 1 is dysphagic. Every tie (leaf counts, forest
votes) resolves to class 1 so borderline cases surface for review rather
than being waved through.

Determinism contract: tree i of a forest draws from a generator derived
from (params.seed, i), and the first thing a tree consumes is its
bootstrap draw rng.integers(0, n, size=n). Results are therefore identical
whether trees are trained serially or in parallel.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio_io import LABELS
from .errors import (
    DegenerateDataError,
    DomainError,
    ModelFormatError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .features import FeatureMatrix
from .ioutil import atomic_write_text
from .seeding import derive_rng

FOREST_FORMAT = "swallowkit.random_forest"
FOREST_VERSION = 1

LABEL_TO_CLASS = {label: i for i, label in enumerate(LABELS)}


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature rows with integer class labels and per-row ids."""

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        ids = np.asarray(self.ids, dtype=str)
        if X.ndim != 2:
            raise ShapeError("X must be a 2-D matrix")
        if y.shape != (X.shape[0],) or ids.shape != (X.shape[0],):
            raise ShapeError("X, y and ids must have matching row counts")
        if not np.all(np.isfinite(X)):
            raise DomainError("features must be finite")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DomainError("labels must be 0 (normal) or 1 (dysphagic)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    def class_counts(self) -> tuple[int, int]:
        return int(np.count_nonzero(self.y == 0)), int(np.count_nonzero(self.y == 1))

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.y[idx], self.ids[idx])

    @classmethod
    def from_feature_matrix(cls, features: FeatureMatrix) -> "LabeledDataset":
        y = np.asarray([LABEL_TO_CLASS[label] for label in features.labels])
        return cls(features.X, y, features.segment_ids)


def gini_impurity(class_counts) -> float:
    """1 - sum of squared class proportions; 0 for a pure node, 0.5 at 50/50."""
    c0, c1 = int(class_counts[0]), int(class_counts[1])
    if c0 < 0 or c1 < 0:
        raise DomainError("class counts must be non-negative")
    n = c0 + c1
    if n == 0:
        raise DegenerateDataError("gini impurity of an empty node is undefined")
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def best_split(
    X: np.ndarray, y: np.ndarray, candidate_features, min_samples_leaf: int = 1
) -> Split | None:
    """Best CART split over the candidate features, or None.

    Thresholds are midpoints between consecutive distinct sorted values.
    The split maximizing the weighted impurity decrease wins; exact ties go
    to the lower feature index, then the lower threshold. Returns None when
    no split has a strictly positive gain.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    if n < 2:
        raise ParameterError("best_split needs at least 2 samples")
    candidates = sorted(set(int(f) for f in candidate_features))
    if not candidates:
        raise ParameterError("best_split needs at least one candidate feature")

    total_ones = int(np.count_nonzero(y == 1))
    parent = gini_impurity((n - total_ones, total_ones))
    best: Split | None = None
    for f in candidates:
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        ones = np.cumsum(y[order] == 1)
        cuts = np.flatnonzero(v[:-1] < v[1:])
        if cuts.size == 0:
            continue
        n_left = cuts + 1
        n_right = n - n_left
        ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not ok.any():
            continue
        cuts = cuts[ok]
        n_left = n_left[ok]
        n_right = n_right[ok]
        ones_left = ones[cuts]
        zeros_left = n_left - ones_left
        ones_right = total_ones - ones_left
        zeros_right = n_right - ones_right
        gini_left = 1.0 - (zeros_left**2 + ones_left**2) / (n_left**2)
        gini_right = 1.0 - (zeros_right**2 + ones_right**2) / (n_right**2)
        gains = parent - (n_left * gini_left + n_right * gini_right) / n
        j = int(np.argmax(gains))
        if best is None or gains[j] > best.gain:
            threshold = 0.5 * (v[cuts[j]] + v[cuts[j] + 1])
            best = Split(f, float(threshold), float(gains[j]))
    if best is None or best.gain <= 0.0:
        return None
    return best


@dataclass
class TreeNode:
    """Internal node (feature/threshold set) or leaf; counts are training counts."""

    n: int
    counts: tuple[int, int]
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def leaf_label(self) -> int:
        return 1 if self.counts[1] >= self.counts[0] else 0


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features: int | None = None
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ParameterError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ParameterError("max_depth must be >= 0")

    def resolve_max_features(self, n_features: int) -> int:
        if self.max_features is None:
            return max(1, int(np.floor(np.sqrt(n_features))))
        if not 1 <= self.max_features <= n_features:
            raise ParameterError(
                f"max_features must lie in 1..{n_features}"
            )
        return self.max_features


@dataclass(eq=False)
class DecisionTree:
    root: TreeNode
    bootstrap_indices: np.ndarray | None = None

    def predict(self, x) -> int:
        node = self.root
        x = np.asarray(getattr(x, "values", x), dtype=np.float64)
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.leaf_label

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if node.is_leaf:
                out[rows] = node.leaf_label
                continue
            mask = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
        return out


def _counts(y: np.ndarray) -> tuple[int, int]:
    ones = int(np.count_nonzero(y == 1))
    return len(y) - ones, ones


def _grow(X, y, rng, n_features, max_features, params, depth) -> TreeNode:
    node = TreeNode(len(y), _counts(y))
    if node.counts[0] == 0 or node.counts[1] == 0:
        return node
    if len(y) < 2 * params.min_samples_leaf:
        return node
    if params.max_depth is not None and depth >= params.max_depth:
        return node
    candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
    split = best_split(X, y, candidates, params.min_samples_leaf)
    if split is None:
        return node
    mask = X[:, split.feature] <= split.threshold
    node.feature = split.feature
    node.threshold = split.threshold
    node.left = _grow(X[mask], y[mask], rng, n_features, max_features, params, depth + 1)
    node.right = _grow(X[~mask], y[~mask], rng, n_features, max_features, params, depth + 1)
    return node


def train_tree(
    data: LabeledDataset, rng: np.random.Generator, params: ForestParams = ForestParams()
) -> DecisionTree:
    """Grow one CART tree on a bootstrap sample drawn from rng."""
    if data.n < 1:
        raise ParameterError("train_tree needs at least one sample")
    if params.bootstrap:
        idx = rng.integers(0, data.n, size=data.n)
    else:
        idx = np.arange(data.n)
    X = data.X[idx]
    y = data.y[idx]
    max_features = params.resolve_max_features(data.n_features)
    root = _grow(X, y, rng, data.n_features, max_features, params, 0)
    return DecisionTree(root, bootstrap_indices=idx if params.bootstrap else None)


@dataclass(eq=False)
class RandomForest:
    trees: list[DecisionTree]
    params: ForestParams
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def to_json(self) -> str:
        return json.dumps(forest_to_dict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RandomForest":
        return forest_from_dict(json.loads(text))


def train_forest(
    data: LabeledDataset, params: ForestParams = ForestParams(), n_jobs: int = 1
) -> RandomForest:
    """Train params.n_trees trees, tree i seeded from (params.seed, i)."""
    c0, c1 = data.class_counts()
    if c0 == 0 or c1 == 0:
        raise TrainingError("training data must contain both classes")

    def build(i: int) -> DecisionTree:
        return train_tree(data, derive_rng(params.seed, i), params)

    if n_jobs == 1:
        trees = [build(i) for i in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(params.n_trees)))
    return RandomForest(trees, params, data.n_features)


def predict(forest: RandomForest, x) -> tuple[int, float]:
    """Majority vote over trees; returns (label, dysphagic vote fraction)."""
    votes = sum(tree.predict(x) for tree in forest.trees)
    label = 1 if 2 * votes >= forest.n_trees else 0
    return label, votes / forest.n_trees


def predict_batch(forest: RandomForest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predict over rows of X; returns (labels, vote fractions)."""
    X = np.asarray(X, dtype=np.float64)
    votes = np.zeros(X.shape[0], dtype=np.int64)
    for tree in forest.trees:
        votes += tree.predict_batch(X)
    fractions = votes / forest.n_trees
    labels = (2 * votes >= forest.n_trees).astype(np.int64)
    return labels, fractions


def _tree_importance(tree: DecisionTree, n_features: int) -> np.ndarray:
    imp = np.zeros(n_features)
    root_n = tree.root.n
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        gain = gini_impurity(node.counts) - (
            node.left.n * gini_impurity(node.left.counts)
            + node.right.n * gini_impurity(node.right.counts)
        ) / node.n
        imp[node.feature] += node.n / root_n * gain
        stack.append(node.left)
        stack.append(node.right)
    return imp


def feature_importance(forest: RandomForest) -> np.ndarray:
    """Mean decrease in impurity per feature, normalized to sum to 1.

    Each tree's raw importances are normalized to sum to 1 first (a tree
    that is a single leaf contributes a zero vector), then averaged over
    trees and renormalized.
    """
    total = np.zeros(forest.n_features)
    any_split = False
    for tree in forest.trees:
        imp = _tree_importance(tree, forest.n_features)
        s = imp.sum()
        if s > 0:
            total += imp / s
            any_split = True
    if not any_split:
        raise DegenerateDataError(
            "importance undefined: every tree is a single leaf"
        )
    return total / total.sum()


def oob_accuracy(forest: RandomForest, data: LabeledDataset) -> float:
    """Accuracy of out-of-bootstrap majority votes over covered samples."""
    if any(tree.bootstrap_indices is None for tree in forest.trees):
        raise ParameterError("oob_accuracy needs bootstrap-trained trees")
    votes = np.zeros(data.n, dtype=np.int64)
    counts = np.zeros(data.n, dtype=np.int64)
    for tree in forest.trees:
        out = np.ones(data.n, dtype=bool)
        out[np.unique(tree.bootstrap_indices)] = False
        if not out.any():
            continue
        votes[out] += tree.predict_batch(data.X[out])
        counts[out] += 1
    covered = counts > 0
    if not covered.any():
        raise DegenerateDataError("no out-of-bootstrap samples available")
    predicted = (2 * votes[covered] >= counts[covered]).astype(np.int64)
    return float(np.mean(predicted == data.y[covered]))


def _node_to_dict(node: TreeNode) -> dict:
    d = {"n": node.n, "counts": [node.counts[0], node.counts[1]]}
    if not node.is_leaf:
        d["feature"] = node.feature
        d["threshold"] = node.threshold
        d["left"] = _node_to_dict(node.left)
        d["right"] = _node_to_dict(node.right)
    return d


def _node_from_dict(d: dict) -> TreeNode:
    node = TreeNode(int(d["n"]), (int(d["counts"][0]), int(d["counts"][1])))
    if "feature" in d:
        node.feature = int(d["feature"])
        node.threshold = float(d["threshold"])
        node.left = _node_from_dict(d["left"])
        node.right = _node_from_dict(d["right"])
    return node


def forest_to_dict(forest: RandomForest) -> dict:
    p = forest.params
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "n_features": forest.n_features,
        "params": {
            "n_trees": p.n_trees,
            "max_features": p.max_features,
            "min_samples_leaf": p.min_samples_leaf,
            "max_depth": p.max_depth,
            "bootstrap": p.bootstrap,
            "seed": p.seed,
        },
        "trees": [_node_to_dict(tree.root) for tree in forest.trees],
    }


def forest_from_dict(d: dict) -> RandomForest:
    if d.get("format") != FOREST_FORMAT:
        raise ModelFormatError(f"unknown model format {d.get('format')!r}")
    if d.get("version") != FOREST_VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
    params = ForestParams(**d["params"])
    trees = [DecisionTree(_node_from_dict(t)) for t in d["trees"]]
    return RandomForest(trees, params, int(d["n_features"]))


def save_forest(forest: RandomForest, path) -> Path:
    return atomic_write_text(path, forest.to_json() + "\n")


def load_forest(path) -> RandomForest:
    return RandomForest.from_json(Path(path).read_text(encoding="utf-8"))
