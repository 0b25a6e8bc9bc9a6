"""Gradient boosted regression trees with a softmax objective.

One tree per class per round, fit to the gradient/hessian of the multiclass
cross-entropy with exact greedy splits: every (feature, threshold) candidate
is scanned over presorted columns, gain is
0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma, and leaves carry
-G/(H+l). Ties break toward the lowest feature index, then lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from eegid.seeding import substream

MODEL_FORMAT = "eegid.boosted_trees"
MODEL_VERSION = 1


@dataclass(frozen=True)
class BoostConfig:
    eta: float = 0.7
    subsample: float = 0.9
    max_depth: int = 6
    rounds: int = 500
    reg_lambda: float = 1.0
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be non-negative")


@dataclass
class RegressionTree:
    """Flat node arrays; feature == -1 marks a leaf holding `weight`."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    class_index: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def walk(node, d):
            if self.feature[node] < 0:
                return d
            return max(walk(self.left[node], d + 1), walk(self.right[node], d + 1))

        return walk(0, 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf weight for every row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(X.shape[0], dtype=np.int32)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] < self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.weight[node]


@dataclass
class BoostedModel:
    """rounds x num_classes trees plus the shared training settings."""

    config: BoostConfig
    num_classes: int
    trees: list[RegressionTree] = field(default_factory=list)
    base_score: float = 0.0
    eta: float = 0.7

    def margins(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full((X.shape[0], self.num_classes), self.base_score)
        for tree in self.trees:
            out[:, tree.class_index] += self.eta * tree.apply(X)
        return out


def softmax_grad_hess(margins: np.ndarray, labels: np.ndarray):
    """Per-element gradient p - y and hessian p(1 - p) of the softmax loss."""
    margins = np.atleast_2d(np.asarray(margins, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    k = margins.shape[1]
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    p = _softmax_rows(margins)
    y = np.zeros_like(p)
    y[np.arange(len(labels)), labels] = 1.0
    return p - y, p * (1.0 - p)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@njit(cache=True, parallel=True)
def _gather_node(presorted, keep, XT, grad, hess, m):
    """Node-sorted (rows, values, grad, hess) arrays for the kept rows."""
    d = presorted.shape[0]
    n = presorted.shape[1]
    rows = np.empty((d, m), dtype=np.int64)
    vals = np.empty((d, m))
    g_s = np.empty((d, m))
    h_s = np.empty((d, m))
    for f in prange(d):
        j = 0
        for i in range(n):
            r = presorted[f, i]
            if keep[r]:
                rows[f, j] = r
                vals[f, j] = XT[f, r]
                g_s[f, j] = grad[r]
                h_s[f, j] = hess[r]
                j += 1
    return rows, vals, g_s, h_s


@njit(cache=True, parallel=True)
def _scan_kernel(vals, g_s, h_s, g_total, h_total, lam, gam):
    """Best gain and boundary position per feature (left-to-right scan).

    Strict greater-than keeps the lowest position on equal gains; equal
    adjacent values are not valid boundaries.
    """
    d, m = vals.shape
    best_gain = np.full(d, -np.inf)
    best_pos = np.full(d, -1, dtype=np.int64)
    parent = g_total * g_total / (h_total + lam)
    for f in prange(d):
        gl = 0.0
        hl = 0.0
        bg = -np.inf
        bp = -1
        for i in range(m - 1):
            gl += g_s[f, i]
            hl += h_s[f, i]
            if vals[f, i] == vals[f, i + 1]:
                continue
            gr = g_total - gl
            hr = h_total - hl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gam
            if gain > bg:
                bg = gain
                bp = i
        best_gain[f] = bg
        best_pos[f] = bp
    return best_gain, best_pos


@njit(cache=True, parallel=True)
def _scan_level(presorted, slot, XT, grad, hess, g_tot, h_tot, lam, gam):
    """Best boundary per (feature, node slot) in one pass over sorted order.

    Walks each feature's full sorted row order once, accumulating left
    gradient/hessian sums per node slot; a boundary exists wherever two
    consecutive in-node values differ. Strict greater-than keeps the lowest
    threshold on equal gains within a feature.
    """
    d, n = presorted.shape
    n_slots = g_tot.shape[0]
    best_gain = np.full((d, n_slots), -np.inf)
    best_lo = np.zeros((d, n_slots))
    best_hi = np.zeros((d, n_slots))
    parent = np.empty(n_slots)
    for s in range(n_slots):
        parent[s] = g_tot[s] * g_tot[s] / (h_tot[s] + lam)
    for f in prange(d):
        gl = np.zeros(n_slots)
        hl = np.zeros(n_slots)
        prev = np.zeros(n_slots)
        seen = np.zeros(n_slots, dtype=np.bool_)
        for i in range(n):
            r = presorted[f, i]
            s = slot[r]
            if s < 0:
                continue
            v = XT[f, r]
            if seen[s] and v != prev[s]:
                gr = g_tot[s] - gl[s]
                hr = h_tot[s] - hl[s]
                gain = 0.5 * (gl[s] * gl[s] / (hl[s] + lam)
                              + gr * gr / (hr + lam) - parent[s]) - gam
                if gain > best_gain[f, s]:
                    best_gain[f, s] = gain
                    best_lo[f, s] = prev[s]
                    best_hi[f, s] = v
            gl[s] += grad[r]
            hl[s] += hess[r]
            prev[s] = v
            seen[s] = True
    return best_gain, best_lo, best_hi


@njit(cache=True)
def _assign_level(slot, X, split_feature, thr, left_slot, right_slot):
    """Move every active row to its child slot (or retire it on a leaf)."""
    for r in range(slot.shape[0]):
        s = slot[r]
        if s < 0:
            continue
        f = split_feature[s]
        if f < 0:
            slot[r] = -1
        elif X[r, f] < thr[s]:
            slot[r] = left_slot[s]
        else:
            slot[r] = right_slot[s]


class _TreeBuilder:
    """Exact greedy splitter over one feature matrix.

    Rows are argsorted per feature once; every node keeps its rows (plus
    their values and grad/hess) in that order as feature-major [d, m]
    arrays, so child construction is a single filtering pass rather than a
    re-sort, and the gain scan is one fused left-to-right pass per feature.
    """

    def __init__(self, X: np.ndarray):
        self.X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        self.XT = np.ascontiguousarray(self.X.T)
        self.presorted = np.argsort(self.XT, axis=1, kind="stable").astype(np.int32)

    def node_arrays_for(self, row_ids: np.ndarray, grad: np.ndarray, hess: np.ndarray):
        keep = np.zeros(self.X.shape[0], dtype=np.bool_)
        keep[row_ids] = True
        return _gather_node(self.presorted, keep, self.XT,
                            np.ascontiguousarray(grad), np.ascontiguousarray(hess),
                            int(row_ids.size))

    def scan_node(self, node_arrays, config: BoostConfig):
        """Best (feature, position, threshold, gain) of a node, or None.

        None means no candidate with positive gain exists (single row, all
        features constant, or the gamma penalty eats every split).
        """
        _, vals, g_s, h_s = node_arrays
        if vals.shape[1] < 2:
            return None
        g_total = float(g_s[0].sum())
        h_total = float(h_s[0].sum())
        best_gain, best_pos = _scan_kernel(vals, g_s, h_s, g_total, h_total,
                                           config.reg_lambda, config.gamma)
        f = int(np.argmax(best_gain))  # first max: lowest feature index
        if not best_gain[f] > 0.0:
            return None
        pos = int(best_pos[f])
        lo, hi = vals[f, pos], vals[f, pos + 1]
        thr = (lo + hi) / 2.0
        if not lo < thr:  # adjacent floats: keep the partition consistent
            thr = hi
        return f, pos, thr, float(best_gain[f])

    def build(self, grad: np.ndarray, hess: np.ndarray, row_ids: np.ndarray,
              config: BoostConfig, class_index: int = 0) -> RegressionTree:
        """Grow the tree breadth-first, one fused scan per depth level."""
        if row_ids.size == 0:
            raise ValueError("cannot build a tree on zero rows")
        grad = np.ascontiguousarray(grad, dtype=np.float64)
        hess = np.ascontiguousarray(hess, dtype=np.float64)
        lam, gam = config.reg_lambda, config.gamma

        feature, threshold, left, right, weight = [], [], [], [], []

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            weight.append(0.0)
            return len(feature) - 1

        slot = np.full(self.X.shape[0], -1, dtype=np.int32)
        slot[row_ids] = 0
        node_of_slot = [new_node()]

        for depth in range(config.max_depth + 1):
            n_slots = len(node_of_slot)
            active = slot >= 0
            g_tot = np.bincount(slot[active], weights=grad[active], minlength=n_slots)
            h_tot = np.bincount(slot[active], weights=hess[active], minlength=n_slots)

            if depth < config.max_depth:
                gains, lo, hi = _scan_level(self.presorted, slot, self.XT, grad, hess,
                                            g_tot, h_tot, lam, gam)
                f_star = gains.argmax(axis=0)  # first max: lowest feature index
                cols = np.arange(n_slots)
                gain_star = gains[f_star, cols]
            else:
                gain_star = np.full(n_slots, -np.inf)
                f_star = np.zeros(n_slots, dtype=np.int64)
                lo = hi = np.zeros((1, n_slots))

            split_feature = np.full(n_slots, -1, dtype=np.int64)
            thr = np.zeros(n_slots)
            left_slot = np.full(n_slots, -1, dtype=np.int32)
            right_slot = np.full(n_slots, -1, dtype=np.int32)
            next_nodes: list[int] = []
            for s in range(n_slots):
                node = node_of_slot[s]
                if not gain_star[s] > 0.0:
                    weight[node] = -g_tot[s] / (h_tot[s] + lam)
                    continue
                f = int(f_star[s])
                a, b = lo[f, s], hi[f, s]
                t = (a + b) / 2.0
                if not a < t:  # adjacent floats: keep the partition consistent
                    t = b
                split_feature[s] = f
                thr[s] = t
                feature[node] = f
                threshold[node] = t
                left[node] = new_node()
                right[node] = new_node()
                left_slot[s] = len(next_nodes)
                next_nodes.append(left[node])
                right_slot[s] = len(next_nodes)
                next_nodes.append(right[node])

            if not next_nodes:
                break
            _assign_level(slot, self.X, split_feature, thr, left_slot, right_slot)
            node_of_slot = next_nodes

        return RegressionTree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            weight=np.asarray(weight, dtype=np.float64),
            class_index=class_index,
        )


def _as_rows(features: np.ndarray, row_mask: np.ndarray | None):
    if row_mask is None:
        rows = np.arange(features.shape[0])
    else:
        rows = np.flatnonzero(np.asarray(row_mask))
    if rows.size == 0:
        raise ValueError("row mask selects no rows")
    return rows


def build_tree(features: np.ndarray, grad: np.ndarray, hess: np.ndarray,
               config: BoostConfig, row_mask: np.ndarray | None = None,
               class_index: int = 0) -> RegressionTree:
    """Fit one regression tree to a gradient/hessian column."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    grad = np.asarray(grad, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    rows = _as_rows(features, row_mask)
    return _TreeBuilder(features).build(grad, hess, rows, config, class_index)


def best_split(features: np.ndarray, grad: np.ndarray, hess: np.ndarray,
               config: BoostConfig, row_mask: np.ndarray | None = None):
    """Gain-maximizing (feature, threshold, gain) at the root, or None."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    grad = np.asarray(grad, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    rows = _as_rows(features, row_mask)
    builder = _TreeBuilder(features)
    found = builder.scan_node(builder.node_arrays_for(rows, grad, hess), config)
    if found is None:
        return None
    f, _, thr, gain = found
    return int(f), float(thr), gain


def train_boost(features: np.ndarray, labels: np.ndarray, config: BoostConfig,
                num_classes: int | None = None) -> BoostedModel:
    """Boost rounds x num_classes trees; deterministic given config.seed.

    Each round computes grad/hess once from the current margins, fits the K
    class trees against that shared snapshot (each on a fresh seeded row
    subsample), then adds the eta-scaled predictions to the margins.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n == 0 or n != len(labels):
        raise ValueError(f"features ({n} rows) and labels ({len(labels)}) do not align")
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    rng = substream(config.seed, "boost-subsample")
    builder = _TreeBuilder(X)
    model = BoostedModel(config=config, num_classes=k, eta=config.eta)
    margins = np.zeros((n, k))
    n_sub = max(1, int(round(config.subsample * n)))
    for _ in range(config.rounds):
        grad, hess = softmax_grad_hess(margins, labels)
        round_trees = []
        for cls in range(k):
            if config.subsample < 1.0:
                rows = rng.choice(n, size=n_sub, replace=False)
            else:
                rows = np.arange(n)
            round_trees.append(builder.build(grad[:, cls], hess[:, cls], rows, config, cls))
        for tree in round_trees:
            margins[:, tree.class_index] += config.eta * tree.apply(X)
            model.trees.append(tree)
    return model


def predict(model: BoostedModel, row: np.ndarray):
    """Predicted class and class probabilities for one feature row."""
    classes, probs = predict_batch(model, np.atleast_2d(np.asarray(row, dtype=np.float64)))
    return int(classes[0]), probs[0]


def predict_batch(model: BoostedModel, X: np.ndarray):
    """Vectorized predict: (classes, probabilities) over many rows."""
    margins = model.margins(X)
    probs = _softmax_rows(margins)
    return probs.argmax(axis=1), probs  # argmax takes the lowest index on ties


def multiclass_log_loss(model: BoostedModel, X: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes under the model."""
    margins = model.margins(X)
    shifted = margins - margins.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -float(log_p[np.arange(len(labels)), np.asarray(labels)].mean())


def save_boost(model: BoostedModel, path: str | Path):
    """Write the config and flattened tree arrays as JSON (lossless)."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "num_classes": model.num_classes,
        "base_score": model.base_score,
        "eta": model.eta,
        "trees": [
            {
                "class_index": t.class_index,
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "weight": t.weight.tolist(),
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_boost(path: str | Path) -> BoostedModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a boosted-trees model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    trees = [
        RegressionTree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            weight=np.asarray(t["weight"], dtype=np.float64),
            class_index=int(t["class_index"]),
        )
        for t in doc["trees"]
    ]
    return BoostedModel(config=BoostConfig(**doc["config"]), num_classes=doc["num_classes"],
                        trees=trees, base_score=doc["base_score"], eta=doc["eta"])
