"""KNN and CART decision-tree baselines over the same feature pipeline.

Both consume exactly the rows the MLP consumes (same CSV schema, same fitted
scaler); neither does any private preprocessing.  Tie-breaking is fully
deterministic: KNN resolves distance ties by the smaller training-row index
and vote ties by the smallest factor; tree splits scan features in index
order and thresholds in ascending order, keeping the first strict
improvement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, EmptyTrainingSet, FormatVersionMismatch

TREE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 12
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


def _majority(labels) -> int:
    counts: dict[int, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


def knn_predict(train_x, train_y, cfg: KnnConfig, query) -> int:
    """Majority label among the k nearest training rows (Euclidean)."""
    x = np.asarray(train_x, dtype=np.float64)
    if x.size == 0:
        raise EmptyTrainingSet("KNN needs a non-empty training set")
    if cfg.k > x.shape[0]:
        raise ValueError(f"k={cfg.k} exceeds training size {x.shape[0]}")
    q = np.asarray(query, dtype=np.float64)
    dists = np.sqrt(((x - q) ** 2).sum(axis=1))
    nearest = np.argsort(dists, kind="stable")[:cfg.k]   # distance ties -> lower index
    return _majority(train_y[i] for i in nearest)


# --- decision tree --------------------------------------------------------------

@dataclass
class TreeNode:
    label: int | None = None          # set on leaves
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


def _gini(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    probs = counts / labels.shape[0]
    return float(1.0 - (probs ** 2).sum())


def _best_split(x: np.ndarray, y: np.ndarray):
    """Minimum weighted-Gini split, or None when nothing improves the node."""
    n = x.shape[0]
    parent = _gini(y)
    best = None
    best_score = parent
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        values = x[order, f]
        labels = y[order]
        for cut in range(1, n):
            if values[cut] == values[cut - 1]:
                continue
            left, right = labels[:cut], labels[cut:]
            score = (cut * _gini(left) + (n - cut) * _gini(right)) / n
            if score < best_score - 1e-12:
                best_score = score
                best = (f, float((values[cut - 1] + values[cut]) / 2.0))
    return best


def tree_fit(train_x, train_y, cfg: TreeConfig | None = None) -> TreeNode:
    """Greedy CART fit with Gini impurity; leaves hold majority labels."""
    cfg = cfg or TreeConfig()
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.int64)
    if x.size == 0:
        raise EmptyTrainingSet("tree_fit needs a non-empty training set")

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        labels = y[rows]
        if depth >= cfg.max_depth or rows.shape[0] < cfg.min_samples_split \
                or np.unique(labels).shape[0] == 1:
            return TreeNode(label=_majority(labels.tolist()))
        split = _best_split(x[rows], labels)
        if split is None:
            return TreeNode(label=_majority(labels.tolist()))
        f, thr = split
        mask = x[rows, f] <= thr
        return TreeNode(
            feature=f,
            threshold=thr,
            left=build(rows[mask], depth + 1),
            right=build(rows[~mask], depth + 1),
        )

    return build(np.arange(x.shape[0]), 0)


def tree_predict(tree: TreeNode, query) -> int:
    q = np.asarray(query, dtype=np.float64)
    node = tree
    while not node.is_leaf:
        node = node.left if q[node.feature] <= node.threshold else node.right
    return int(node.label)


def accuracy_table(entries: list[tuple[str, float]]) -> str:
    """Three-way comparison table: one (model, accuracy) row per entry."""
    width = max(len(name) for name, _ in entries)
    lines = [f"{'model':<{width}}  accuracy", f"{'-' * width}  --------"]
    for name, acc in entries:
        lines.append(f"{name:<{width}}  {acc * 100:6.2f}%")
    return "\n".join(lines)


# --- persistence (same versioned container style as the MLP) --------------------

def _node_to_obj(node: TreeNode):
    if node.is_leaf:
        return {"label": node.label}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_obj(node.left),
        "right": _node_to_obj(node.right),
    }


def _node_from_obj(obj) -> TreeNode:
    if "label" in obj:
        return TreeNode(label=int(obj["label"]))
    return TreeNode(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        left=_node_from_obj(obj["left"]),
        right=_node_from_obj(obj["right"]),
    )


def save_tree(tree: TreeNode, path: str) -> None:
    with open(path, "w") as fh:
        json.dump({"format_version": TREE_FORMAT_VERSION, "kind": "tree",
                   "root": _node_to_obj(tree)}, fh)


def load_tree(path: str) -> TreeNode:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: not a tree file ({exc})") from exc
    if payload.get("format_version") != TREE_FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path}: format {payload.get('format_version')!r}")
    try:
        return _node_from_obj(payload["root"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
