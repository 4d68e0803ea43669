"""Comparison forecasters: seasonal-naive persistence and a bagged
regression-tree forest over the same lag windows as the LSTM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatchError, WindowError
from .numeric import derive_rng
from .timeseries import WindowedDataset


def seasonal_naive(values: np.ndarray, season: int = 24) -> np.ndarray:
    """Predict each point as the value one season earlier.

    Returns predictions aligned with values[season:]; pair them with that
    slice to score.
    """
    v = np.asarray(values, dtype=np.float64)
    if len(v) <= season:
        raise WindowError(f"series of length {len(v)} too short for season {season}")
    return v[:-season].copy()


@dataclass
class TreeConfig:
    max_depth: int = 10
    min_samples_leaf: int = 5


@dataclass
class RegressionTree:
    """CART regression tree in flat-array form. Internal node i splits on
    feature[i] at threshold[i]; leaves have feature[i] == -1 and predict
    value[i] (the mean target of their training partition)."""

    feature: np.ndarray  # int32, -1 for leaf
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32 child index
    right: np.ndarray  # int32 child index
    value: np.ndarray  # float64 leaf mean
    config: TreeConfig


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float] | None:
    """Exhaustive variance-reduction search over all features with
    candidate thresholds at midpoints of sorted unique values. Returns
    (feature, threshold, gain) or None if no valid split exists.

    Vectorized over features; ties resolve to the lowest feature index,
    then the lowest threshold."""
    n, _ = x.shape
    if n < 2 * min_leaf:
        return None
    total = y.sum()
    total_sq = (y * y).sum()
    sse_all = total_sq - total * total / n

    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ys = y[order]
    cum = np.cumsum(ys, axis=0)[:-1]
    cum_sq = np.cumsum(ys * ys, axis=0)[:-1]
    counts = np.arange(1, n, dtype=np.float64)[:, None]
    sse_left = cum_sq - cum * cum / counts
    sse_right = (total_sq - cum_sq) - (total - cum) ** 2 / (n - counts)
    gains = sse_all - (sse_left + sse_right)
    valid = (xs[:-1] < xs[1:]) & (counts >= min_leaf) & ((n - counts) >= min_leaf)
    gains = np.where(valid, gains, -np.inf)

    flat = gains.T.ravel()  # feature-major so argmax tie-breaks by feature, then position
    best = int(np.argmax(flat))
    if not flat[best] > 0:
        return None
    j, p = divmod(best, n - 1)
    return j, float((xs[p, j] + xs[p + 1, j]) / 2.0), float(flat[best])


def fit_tree(
    windows: WindowedDataset,
    config: TreeConfig | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Greedy CART fit. Deterministic given its inputs; the rng argument
    exists for interface symmetry with the forest and is unused."""
    config = config or TreeConfig()
    x, y = windows.inputs, windows.targets
    if len(y) < 1:
        raise EmptyBatchError("cannot fit a tree on zero samples")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        ys = y[idx]
        value[node] = float(ys.mean())
        sse = float(((ys - ys.mean()) ** 2).sum())
        if depth >= config.max_depth or len(idx) < 2 * config.min_samples_leaf or sse <= 1e-12:
            return node
        split = _best_split(x[idx], ys, config.min_samples_leaf)
        if split is None:
            return node
        j, thr, _gain = split
        go_left = x[idx, j] <= thr
        feature[node] = j
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return RegressionTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        config=config,
    )


def predict_tree(tree: RegressionTree, inputs: np.ndarray) -> np.ndarray:
    """Route each row of (count, features) to its leaf mean."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    node = np.zeros(len(x), dtype=np.int32)
    while True:
        feat = tree.feature[node]
        active = np.nonzero(feat >= 0)[0]
        if active.size == 0:
            break
        cur = node[active]
        go_left = x[active, feat[active]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.value[node]


@dataclass
class Forest:
    """Bootstrap-aggregated trees; prediction is the mean over trees."""

    trees: list[RegressionTree] = field(default_factory=list)
    seed: int = 0
    bootstrap: bool = True


def fit_forest(
    windows: WindowedDataset,
    n_trees: int = 100,
    config: TreeConfig | None = None,
    seed: int = 0,
    bootstrap: bool = True,
) -> Forest:
    """Fit n_trees CART trees, each on a same-size bootstrap resample drawn
    from its own derived stream (seed XOR tree index)."""
    config = config or TreeConfig()
    n = len(windows)
    if n < 1:
        raise EmptyBatchError("cannot fit a forest on zero samples")
    forest = Forest(seed=seed, bootstrap=bootstrap)
    for tree_idx in range(n_trees):
        if bootstrap:
            rng = derive_rng(seed, tree_idx)
            idx = rng.integers(0, n, size=n)
            sample = WindowedDataset(inputs=windows.inputs[idx], targets=windows.targets[idx],
                                     timesteps=windows.timesteps, horizon=windows.horizon)
        else:
            sample = windows
        forest.trees.append(fit_tree(sample, config))
    return forest


def predict_forest(forest: Forest, inputs: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    acc = np.zeros(len(x))
    for tree in forest.trees:
        acc += predict_tree(tree, x)
    return acc / len(forest.trees)
