"""Exact greedy regression trees grown best-first by variance reduction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

LEAF = -1


@dataclass(frozen=True)
class Split:
    gain: float
    feature: int
    threshold: float


@dataclass(eq=False)
class RegressionTree:
    """Array-encoded binary tree.  ``feature[i] == LEAF`` marks a leaf with value ``value[i]``.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)
        # Plain-list copies make single-row traversal cheap.
        self._nodes = list(
            zip(self.feature.tolist(), self.threshold.tolist(), self.left.tolist(), self.right.tolist())
        )
        self._values = self.value.tolist()

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @classmethod
    def leaf(cls, value: float) -> RegressionTree:
        return cls([LEAF], [0.0], [LEAF], [LEAF], [value])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] != LEAF)[0]
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_one(self, x) -> float:
        i = 0
        nodes = self._nodes
        f, t, lo, hi = nodes[0]
        while f != LEAF:
            i = lo if x[f] <= t else hi
            f, t, lo, hi = nodes[i]
        return self._values[i]

    def to_dict(self) -> dict:
        nodes = []
        for i, (f, t, lo, hi) in enumerate(self._nodes):
            if f == LEAF:
                nodes.append({"id": i, "value": self._values[i]})
            else:
                nodes.append({"id": i, "feature": f, "threshold": t, "left": lo, "right": hi})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> RegressionTree:
        nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
        if [nd["id"] for nd in nodes] != list(range(len(nodes))):
            raise ValueError("tree node ids must be 0..n-1")
        feature, threshold, left, right, value = [], [], [], [], []
        for nd in nodes:
            if "value" in nd:
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(LEAF)
                right.append(LEAF)
                value.append(float(nd["value"]))
            else:
                feature.append(int(nd["feature"]))
                threshold.append(float(nd["threshold"]))
                left.append(int(nd["left"]))
                right.append(int(nd["right"]))
                value.append(0.0)
        return cls(feature, threshold, left, right, value)


def _gain_tolerance(r: np.ndarray) -> float:
    return 1e-10 * float(np.dot(r, r)) + 1e-300


@njit(cache=True)
def _scan(Xt, r, order, min_samples_leaf, tol):  # pragma: no cover - compiled
    n_features, s = order.shape
    total = 0.0
    for i in range(s):
        total += r[order[0, i]]
    base = total * total / s
    best = -np.inf
    for f in range(n_features):
        left = 0.0
        for pos in range(s - 1):
            row = order[f, pos]
            left += r[row]
            n_left = pos + 1
            if n_left < min_samples_leaf or s - n_left < min_samples_leaf:
                continue
            if not Xt[f, order[f, pos + 1]] > Xt[f, row]:
                continue
            right = total - left
            g = left * left / n_left + right * right / (s - n_left) - base
            if g > best:
                best = g
    if not best > tol:
        return -1, -1, best
    # Second pass: first candidate within tol of the best (lowest feature, then threshold).
    for f in range(n_features):
        left = 0.0
        for pos in range(s - 1):
            row = order[f, pos]
            left += r[row]
            n_left = pos + 1
            if n_left < min_samples_leaf or s - n_left < min_samples_leaf:
                continue
            if not Xt[f, order[f, pos + 1]] > Xt[f, row]:
                continue
            right = total - left
            g = left * left / n_left + right * right / (s - n_left) - base
            if g >= best - tol:
                return f, pos, g
    return -1, -1, best


@njit(cache=True)
def _partition(order, goes_left, n_left):  # pragma: no cover - compiled
    n_features, s = order.shape
    lo = np.empty((n_features, n_left), dtype=order.dtype)
    hi = np.empty((n_features, s - n_left), dtype=order.dtype)
    for f in range(n_features):
        i = 0
        j = 0
        for k in range(s):
            row = order[f, k]
            if goes_left[row]:
                lo[f, i] = row
                i += 1
            else:
                hi[f, j] = row
                j += 1
    return lo, hi


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature row order, shape ``(n_features, n_rows)``; reusable across boosting rounds."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def best_split(
    X: np.ndarray, r: np.ndarray, order: np.ndarray, min_samples_leaf: int, Xt: np.ndarray | None = None
) -> Split | None:
    """Best variance-reducing split of one node.

    ``order`` is a ``(n_features, n_node)`` array of the node's row indices,
    each row sorted by that feature.  Candidate thresholds are midpoints of
    consecutive distinct values; gains within a small relative tolerance of
    the maximum count as ties and resolve to the lowest feature index, then
    the lowest threshold.
    """
    n_features, s = order.shape
    if s < 2 * min_samples_leaf or s < 2:
        return None
    if Xt is None:
        Xt = np.ascontiguousarray(X.T)
    tol = _gain_tolerance(r[order[0]])
    f, pos, gain = _scan(Xt, r, order, min_samples_leaf, tol)
    if f < 0:
        return None
    lo, hi = X[order[f, pos], f], X[order[f, pos + 1], f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return Split(gain=float(gain), feature=int(f), threshold=float(thr))


def fit_tree(
    X: np.ndarray,
    residuals: np.ndarray,
    max_leaves: int = 31,
    min_samples_leaf: int = 5,
    leaf_value: Callable[[np.ndarray], float] | None = None,
    order: np.ndarray | None = None,
) -> RegressionTree:
    """Grow a tree on ``residuals`` best-first until ``max_leaves`` or no admissible split.

    The leaf with the largest available gain is expanded next (earliest
    created wins ties, within the same relative tolerance as the split scan).  ``leaf_value(rows)`` sets each terminal value; the
    default is the mean residual of the leaf.  ``order`` may carry a cached
    :func:`presort` of ``X``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if r.shape != (X.shape[0],):
        raise ValueError("residuals must have one entry per row")
    if max_leaves < 1 or min_samples_leaf < 1:
        raise ValueError("max_leaves and min_samples_leaf must be >= 1")
    if leaf_value is None:
        leaf_value = lambda rows: float(np.mean(r[rows]))  # noqa: E731

    n = X.shape[0]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    members: dict[int, np.ndarray] = {}

    def new_node(order: np.ndarray) -> int:
        i = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        members[i] = order
        return i

    Xt = np.ascontiguousarray(X.T)
    root_order = presort(X) if order is None else order
    # Open leaves with an admissible split: node id -> split.  Few enough that a
    # linear scan beats a heap, and it lets near-equal gains count as ties.
    frontier: dict[int, Split] = {}
    tol = _gain_tolerance(r)

    def push(node: int) -> None:
        if max_leaves < 2:
            return
        sp = best_split(X, r, members[node], min_samples_leaf, Xt)
        if sp is not None:
            frontier[node] = sp

    def pop() -> tuple[int, Split]:
        top = max(sp.gain for sp in frontier.values())
        node = min(i for i, sp in frontier.items() if sp.gain >= top - tol)
        return node, frontier.pop(node)

    push(new_node(root_order))
    n_leaves = 1
    goes_left = np.zeros(n, dtype=bool)
    while frontier and n_leaves < max_leaves:
        node, sp = pop()
        order = members.pop(node)
        rows = order[0]
        goes_left[rows] = X[rows, sp.feature] <= sp.threshold
        n_left = int(goes_left[rows].sum())
        lo_order, hi_order = _partition(order, goes_left, n_left)
        goes_left[rows] = False
        lo = new_node(lo_order)
        hi = new_node(hi_order)
        feature[node], threshold[node], left[node], right[node] = sp.feature, sp.threshold, lo, hi
        n_leaves += 1
        push(lo)
        push(hi)

    value = [0.0] * len(feature)
    for node, order in members.items():
        value[node] = float(leaf_value(np.sort(order[0])))
    return RegressionTree(feature, threshold, left, right, value)
