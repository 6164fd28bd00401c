"""
Random forest regression: bootstrap-sampled, fully grown CART trees with a random feature
subset per split. The forest predicts the mean of its trees.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from smtalign.svr import DimensionError

logger = logging.getLogger(__name__)

PURITY_TOLERANCE = 1e-12


class ForestConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    value: float
    count: int


@dataclass(frozen=True)
class Split:
    """x[feature_index] <= threshold goes left, anything greater goes right."""

    feature_index: int
    threshold: float
    left: 'TreeNode'
    right: 'TreeNode'


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class RfrConfig:
    n_trees: int = 50
    mtry: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestConfigError(f"n_trees must be at least 1, got {self.n_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise ForestConfigError(f"mtry must be at least 1, got {self.mtry}")
        if self.workers < 1:
            raise ForestConfigError(f"workers must be at least 1, got {self.workers}")

    def resolve_mtry(self, dim: int) -> int:
        """Features drawn per split; ceil(d / 3) unless configured."""
        if self.mtry is None:
            return max(1, math.ceil(dim / 3))
        if self.mtry > dim:
            raise ForestConfigError(f"mtry must not exceed the feature dimension {dim}, got {self.mtry}")
        return self.mtry


@dataclass(frozen=True)
class Forest:
    trees: tuple[TreeNode, ...]
    mtry: int
    training_dim: int
    config: RfrConfig = RfrConfig()
    tree_seeds: tuple[int, ...] = field(default=(), repr=False)

    def predict(self, x) -> float:
        return predict_forest(self, x)

    @cached_property
    def flat_trees(self) -> tuple['FlatTree', ...]:
        return tuple(flatten_tree(tree) for tree in self.trees)

    def predict_many(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.training_dim:
            raise DimensionError(f"Expected (n, {self.training_dim}) features, got {features.shape}")
        # same left-to-right summation as predict_forest
        total = np.zeros(features.shape[0])
        for tree in self.flat_trees:
            total = total + tree.predict_many(features)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "mtry": self.mtry,
            "training_dim": self.training_dim,
            "tree_seeds": list(self.tree_seeds),
            "trees": [node_to_dict(tree) for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Forest':
        trees = tuple(node_from_dict(tree) for tree in data["trees"])
        if not trees:
            raise ForestConfigError("A stored forest must contain at least one tree")
        return cls(
            trees=trees,
            mtry=int(data["mtry"]),
            training_dim=int(data["training_dim"]),
            config=RfrConfig(**data.get("config", {})),
            tree_seeds=tuple(int(s) for s in data.get("tree_seeds", ())),
        )


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value, "count": node.count}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(data: dict) -> TreeNode:
    if "feature_index" in data:
        return Split(int(data["feature_index"]), float(data["threshold"]),
                     node_from_dict(data["left"]), node_from_dict(data["right"]))
    return Leaf(float(data["value"]), int(data["count"]))


def predict_tree(node: TreeNode, x: np.ndarray) -> float:
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node.value


@dataclass(frozen=True)
class FlatTree:
    """A tree as parallel node arrays in preorder; feature is -1 at leaves, node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_many(self, features: np.ndarray) -> np.ndarray:
        """Route all rows level by level; gives the same leaf as predict_tree for every row."""
        node = np.zeros(len(features), dtype=np.intp)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while len(active):
            at = node[active]
            goes_left = features[active, self.feature[at]] <= self.threshold[at]
            node[active] = np.where(goes_left, self.left[at], self.right[at])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]


def flatten_tree(root: TreeNode) -> FlatTree:
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(root, -1, False)]
    while stack:
        node, parent, is_right = stack.pop()
        index = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = index
        if isinstance(node, Leaf):
            feature.append(-1)
            threshold.append(0.0)
            value.append(node.value)
        else:
            feature.append(node.feature_index)
            threshold.append(node.threshold)
            value.append(0.0)
            stack.append((node.right, index, True))
            stack.append((node.left, index, False))
        left.append(-1)
        right.append(-1)
    return FlatTree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=np.array(value, dtype=np.float64),
    )


def predict_forest(forest: Forest, x) -> float:
    """Mean of the tree predictions, summed left to right in tree order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.training_dim,):
        raise DimensionError(f"Expected a feature vector of length {forest.training_dim}, got shape {x.shape}")
    total = 0.0
    for tree in forest.trees:
        total = total + predict_tree(tree, x)
    return total / len(forest.trees)


def _leaf_value(targets: np.ndarray) -> float:
    if np.all(targets == targets[0]):
        return float(targets[0])
    return float(targets.mean())


def _best_splits(block: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Best split of every column of block: the summed squared error of both children and the
    midpoint threshold, the smallest threshold on ties. Constant columns get an infinite error.
    """
    order = np.argsort(block, axis=0, kind="stable")
    xs = np.take_along_axis(block, order, axis=0)
    ys = (targets - targets.mean())[order]
    n = len(targets)
    prefix_sum = np.cumsum(ys, axis=0)
    prefix_sq = np.cumsum(ys * ys, axis=0)
    left_n = np.arange(1, n)[:, None]
    right_n = n - left_n
    left_sum = prefix_sum[:-1]
    right_sum = prefix_sum[-1] - left_sum
    left_sq = prefix_sq[:-1]
    right_sq = prefix_sq[-1] - left_sq
    sse = (left_sq - left_sum ** 2 / left_n) + (right_sq - right_sum ** 2 / right_n)
    sse = np.where(xs[1:] > xs[:-1], sse, np.inf)
    k = np.argmin(sse, axis=0)
    columns = np.arange(block.shape[1])
    lo, hi = xs[k, columns], xs[k + 1, columns]
    thresholds = (lo + hi) / 2
    thresholds = np.where(thresholds < hi, thresholds, lo)
    return sse[k, columns], thresholds


def best_split(column: np.ndarray, targets: np.ndarray) -> Optional[tuple[float, float]]:
    """
    Best variance-reducing split of one feature: returns (sse, threshold) minimizing the summed
    squared error of both children, the smallest threshold on ties; None when the column is constant.
    """
    column = np.asarray(column, dtype=np.float64)
    if len(column) < 2:
        return None
    sse, thresholds = _best_splits(column[:, None], np.asarray(targets, dtype=np.float64))
    if not np.isfinite(sse[0]):
        return None
    return float(sse[0]), float(thresholds[0])


def _choose_split(features: np.ndarray, targets: np.ndarray, rows: np.ndarray,
                  candidates: np.ndarray) -> Optional[tuple[int, float]]:
    """Lowest error over the candidate features, then lowest feature index, then smallest threshold."""
    if len(candidates) == 0:
        return None
    sse, thresholds = _best_splits(features[np.ix_(rows, candidates)], targets)
    found = [(float(s), int(f), float(t)) for s, f, t in zip(sse, candidates, thresholds) if np.isfinite(s)]
    if not found:
        return None
    _, feature_index, threshold = min(found)
    return feature_index, threshold


def fit_tree(features, targets, rng: np.random.Generator, mtry: int) -> TreeNode:
    """
    Grow a CART tree until every node is pure or holds a single sample. Each node draws mtry
    features without replacement; if none of them separates the rows, the remaining features
    are tried in the drawn order.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError("Cannot fit a tree on an empty sample")
    if len(targets) != len(features):
        raise DimensionError(f"{len(features)} feature rows but {len(targets)} targets")
    dim = features.shape[1]
    if not 1 <= mtry <= dim:
        raise ForestConfigError(f"mtry must lie in [1, {dim}], got {mtry}")
    return _grow(features, targets, np.arange(len(targets)), rng, mtry)


def _grow(features, targets, rows, rng, mtry) -> TreeNode:
    node_targets = targets[rows]
    n = len(rows)
    if n == 1 or np.ptp(node_targets) <= PURITY_TOLERANCE:
        return Leaf(_leaf_value(node_targets), n)
    order = rng.permutation(features.shape[1])
    choice = _choose_split(features, node_targets, rows, np.sort(order[:mtry]))
    if choice is None:
        choice = _choose_split(features, node_targets, rows, order[mtry:])
    if choice is None:
        # identical rows with different targets
        return Leaf(_leaf_value(node_targets), n)
    feature_index, threshold = choice
    goes_left = features[rows, feature_index] <= threshold
    return Split(
        feature_index, threshold,
        _grow(features, targets, rows[goes_left], rng, mtry),
        _grow(features, targets, rows[~goes_left], rng, mtry),
    )


def canonical_order(features: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row order sorted lexicographically by feature vector, then target."""
    keys = [targets] + [features[:, j] for j in range(features.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def fit_forest(features, targets, config: Optional[RfrConfig] = None) -> Forest:
    """
    Fit config.n_trees trees, each on a bootstrap resample drawn from its own seed. Rows are put
    in canonical order first, so the forest depends on the data multiset and not on row order.
    """
    config = config or RfrConfig()
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError(f"Expected a 2-D feature matrix, got shape {features.shape}")
    n, dim = features.shape
    if targets.shape != (n,):
        raise DimensionError(f"{n} feature rows but targets have shape {targets.shape}")
    if n < 2:
        raise ValueError(f"At least 2 samples are needed, got {n}")
    if not (np.isfinite(features).all() and np.isfinite(targets).all()):
        raise ValueError("Features and targets must be finite")
    mtry = config.resolve_mtry(dim)

    order = canonical_order(features, targets)
    features, targets = features[order], targets[order]
    tree_seeds = tuple(int(s.generate_state(1)[0])
                       for s in np.random.SeedSequence(config.seed).spawn(config.n_trees))

    def fit_one(tree_seed: int) -> TreeNode:
        rng = np.random.default_rng(tree_seed)
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
            return fit_tree(features[rows], targets[rows], rng, mtry)
        return fit_tree(features, targets, rng, mtry)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            trees = tuple(pool.map(fit_one, tree_seeds))
    else:
        trees = tuple(fit_one(s) for s in tree_seeds)
    logger.info("Fitted forest of %d trees on %d samples (mtry %d, bootstrap %s)",
                config.n_trees, n, mtry, config.bootstrap)
    return Forest(trees=trees, mtry=mtry, training_dim=dim, config=config, tree_seeds=tree_seeds)


def split_counts(forest: Forest) -> np.ndarray:
    """Number of splits on each feature across all trees."""
    counts = np.zeros(forest.training_dim, dtype=int)
    stack = list(forest.trees)
    while stack:
        node = stack.pop()
        if isinstance(node, Split):
            counts[node.feature_index] += 1
            stack.extend((node.left, node.right))
    return counts
