"""Deterministic gradient-boosted decision trees for binary classification.

Histogram-based implementation: features are quantile-binned once (bin 0 is
reserved for missing values), trees grow level by level, and each level's
gradient/hessian histograms are accumulated in a single pass over the active
rows.  Split scoring follows the second-order logistic-loss formulation with
an L1 penalty on leaf weights (soft-thresholded gradient sums).  There is no
randomness anywhere: identical data and parameters always yield identical
trees, and ties in split search resolve to the lowest feature index, then the
lowest bin.

Missing values always route left; the reserved bin sits below every real bin,
so "bin <= 0" is itself a usable split that isolates missing rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is expected to be present
    _HAVE_NUMBA = False

MAX_BINS = 256  # including the missing bin
_WEIGHT_CLIP = 10.0

# Per-row gradients and hessians are quantized to integer-valued float64
# (units of 2^-24).  Histogram sums are then exact regardless of summation
# order, and duplicating every row scales all statistics by exactly 2, which
# commutes with float rounding: with no L1 penalty, training on a duplicated
# dataset produces bit-identical trees.  (With L1 > 0 the penalty is absolute
# while the data mass doubles, so duplication genuinely changes the fit.)
_GRAD_SCALE = float(1 << 24)

FORMAT_NAME = "viewrecon-gbdt"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    """Boosting hyperparameters plus the classification threshold."""

    max_depth: int = 6
    learning_rate: float = 0.2
    l1_regularization: float = 0.0
    num_rounds: int = 60
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l1_regularization < 0:
            raise ValueError("l1_regularization must be nonnegative")
        if self.num_rounds < 1:
            raise ValueError("num_rounds must be >= 1")
        if not 0 < self.decision_threshold < 1:
            raise ValueError("decision_threshold must be in (0, 1)")


# ---------------------------------------------------------------------------
# Feature binning
# ---------------------------------------------------------------------------


def bin_features(X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Quantile-bin each column of ``X``; NaN maps to the reserved bin 0.

    Returns the uint8 bin matrix and, per feature, the sorted array of upper
    edges: bin ``b >= 1`` holds values ``edges[b-2] < x <= edges[b-1]``.
    """
    n, f = X.shape
    binned = np.zeros((n, f), dtype=np.uint8)
    edges_per_feature: List[np.ndarray] = []
    max_edges = MAX_BINS - 2
    for j in range(f):
        col = X[:, j]
        finite = col[~np.isnan(col)]
        if finite.size == 0:
            edges = np.empty(0, dtype=np.float64)
        else:
            uniq = np.unique(finite)
            if uniq.size <= max_edges:
                edges = uniq.astype(np.float64)
            else:
                qs = np.linspace(0.0, 1.0, max_edges)
                edges = np.unique(np.quantile(uniq, qs))
        edges_per_feature.append(edges)
        if finite.size:
            idx = ~np.isnan(col)
            binned[idx, j] = np.searchsorted(edges, col[idx], side="left") + 1
    return binned, edges_per_feature


# ---------------------------------------------------------------------------
# Histogram accumulation
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _hist_kernel(Xb, rows, slot_of_row, g, h, hist_g, hist_h, hist_c):
        n_features = Xb.shape[1]
        for i in range(rows.shape[0]):
            r = rows[i]
            s = slot_of_row[i]
            base = s * n_features
            for j in range(n_features):
                b = (base + j) * MAX_BINS + Xb[r, j]
                hist_g[b] += g[r]
                hist_h[b] += h[r]
                hist_c[b] += 1


def _build_histograms(Xb, rows, slot_of_row, g, h, n_slots):
    f = Xb.shape[1]
    hist_g = np.zeros(n_slots * f * MAX_BINS, dtype=np.float64)
    hist_h = np.zeros(n_slots * f * MAX_BINS, dtype=np.float64)
    hist_c = np.zeros(n_slots * f * MAX_BINS, dtype=np.int64)
    if _HAVE_NUMBA:
        _hist_kernel(Xb, rows, slot_of_row, g, h, hist_g, hist_h, hist_c)
    else:
        base = slot_of_row.astype(np.int64) * f * MAX_BINS
        for j in range(f):
            keys = base + j * MAX_BINS + Xb[rows, j]
            hist_g += np.bincount(keys, weights=g[rows], minlength=hist_g.size)
            hist_h += np.bincount(keys, weights=h[rows], minlength=hist_h.size)
            hist_c += np.bincount(keys, minlength=hist_c.size)
    shape = (n_slots, f, MAX_BINS)
    return hist_g.reshape(shape), hist_h.reshape(shape), hist_c.reshape(shape)


def _soft_threshold(G: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0.0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _score(G: np.ndarray, H: np.ndarray, alpha: float) -> np.ndarray:
    t = _soft_threshold(G, alpha)
    safe = np.where(H > 0, H, 1.0)
    return np.where(H > 0, t * t / safe, 0.0)


def _leaf_weight(G: float, H: float, alpha: float, learning_rate: float) -> float:
    if H <= 0:
        return 0.0
    t = _soft_threshold(np.asarray(G), alpha)
    w = -float(t) / H
    return learning_rate * float(np.clip(w, -_WEIGHT_CLIP, _WEIGHT_CLIP))


# ---------------------------------------------------------------------------
# Tree growth
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("feature", "bin_split", "left", "right", "weight")

    def __init__(self):
        self.feature = -1
        self.bin_split = -1
        self.left = -1
        self.right = -1
        self.weight = 0.0


_NODE_BATCH = 512  # level nodes per histogram pass, bounds peak memory


def _grow_tree(
    Xb: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: ModelParams,
) -> Tuple[List[_Node], np.ndarray]:
    """Grow one tree; returns node records and each row's final node id."""
    n = Xb.shape[0]
    alpha = params.l1_regularization * _GRAD_SCALE  # g, h arrive pre-scaled
    nodes: List[_Node] = [_Node()]
    row_node = np.zeros(n, dtype=np.int64)
    stats = {0: (float(g.sum()), float(h.sum()))}
    level = [0]

    for _ in range(params.max_depth):
        if not level:
            break
        # Best split per level node, found batch-wise to bound histogram size.
        best_gain = np.full(len(level), -np.inf)
        best_feat = np.zeros(len(level), dtype=np.int64)
        best_bin = np.zeros(len(level), dtype=np.int64)
        best_gl = np.zeros(len(level))
        best_hl = np.zeros(len(level))
        for start in range(0, len(level), _NODE_BATCH):
            batch = level[start : start + _NODE_BATCH]
            slot_lookup = np.full(len(nodes), -1, dtype=np.int64)
            for s, nid in enumerate(batch):
                slot_lookup[nid] = s
            slots_all = slot_lookup[row_node]
            rows = np.flatnonzero(slots_all >= 0)
            if rows.size == 0:
                continue
            hg, hh, hc = _build_histograms(
                Xb, rows, slots_all[rows], g, h, len(batch)
            )
            # Cumulative sums along bins give every "bin <= b" candidate at once.
            GL = np.cumsum(hg, axis=2)
            HL = np.cumsum(hh, axis=2)
            CL = np.cumsum(hc, axis=2)
            G_tot = GL[:, 0, -1][:, None, None]
            H_tot = HL[:, 0, -1][:, None, None]
            C_tot = CL[:, 0, -1][:, None, None]
            valid = (CL > 0) & (C_tot - CL > 0) & (HL > 0) & (H_tot - HL > 0)
            gain = 0.5 * (
                _score(GL, HL, alpha)
                + _score(G_tot - GL, H_tot - HL, alpha)
                - _score(G_tot, H_tot, alpha)
            )
            gain = np.where(valid, gain, -np.inf)
            flat = gain.reshape(len(batch), -1)
            idx = np.argmax(flat, axis=1)
            sel = np.arange(len(batch))
            feat, b = np.divmod(idx, MAX_BINS)
            best_gain[start : start + len(batch)] = flat[sel, idx]
            best_feat[start : start + len(batch)] = feat
            best_bin[start : start + len(batch)] = b
            best_gl[start : start + len(batch)] = GL[sel, feat, b]
            best_hl[start : start + len(batch)] = HL[sel, feat, b]

        next_level: List[int] = []
        split_feat = np.full(len(nodes) + 2 * len(level), -1, dtype=np.int64)
        split_bin = np.zeros_like(split_feat)
        left_id = np.full_like(split_feat, -1)
        right_id = np.full_like(split_feat, -1)
        any_split = False
        for s, nid in enumerate(level):
            node = nodes[nid]
            G, H = stats[nid]
            if best_gain[s] > 0.0:
                node.feature = int(best_feat[s])
                node.bin_split = int(best_bin[s])
                node.left = len(nodes)
                node.right = len(nodes) + 1
                nodes.append(_Node())
                nodes.append(_Node())
                stats[node.left] = (float(best_gl[s]), float(best_hl[s]))
                stats[node.right] = (G - float(best_gl[s]), H - float(best_hl[s]))
                next_level.extend((node.left, node.right))
                split_feat[nid] = node.feature
                split_bin[nid] = node.bin_split
                left_id[nid] = node.left
                right_id[nid] = node.right
                any_split = True
            else:
                node.weight = _leaf_weight(G, H, alpha, params.learning_rate)
        if not any_split:
            break

        parents = row_node
        has_split = split_feat[parents] >= 0
        moving = np.flatnonzero(has_split)
        if moving.size:
            pf = split_feat[parents[moving]]
            pb = split_bin[parents[moving]]
            go_left = Xb[moving, pf] <= pb
            row_node[moving] = np.where(
                go_left, left_id[parents[moving]], right_id[parents[moving]]
            )
        level = next_level

    # Anything still pending after the depth limit becomes a leaf.
    for nid in level:
        G, H = stats[nid]
        nodes[nid].weight = _leaf_weight(G, H, alpha, params.learning_rate)
    return nodes, row_node


def _nodes_to_nested(nodes: List[_Node], edges: List[np.ndarray], nid: int = 0) -> dict:
    node = nodes[nid]
    if node.feature < 0:
        return {"weight": node.weight}
    b = node.bin_split
    threshold = None if b == 0 else float(edges[node.feature][b - 1])
    return {
        "feature": int(node.feature),
        "threshold": threshold,
        "left": _nodes_to_nested(nodes, edges, node.left),
        "right": _nodes_to_nested(nodes, edges, node.right),
    }


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------


class _FlatTree:
    """Array form of a nested tree for vectorized prediction."""

    def __init__(self, tree: dict):
        feats: List[int] = []
        thrs: List[float] = []
        lefts: List[int] = []
        rights: List[int] = []
        weights: List[float] = []

        def add(node: dict) -> int:
            idx = len(feats)
            feats.append(-1)
            thrs.append(0.0)
            lefts.append(-1)
            rights.append(-1)
            weights.append(0.0)
            if "weight" in node:
                weights[idx] = float(node["weight"])
            else:
                feats[idx] = int(node["feature"])
                thr = node["threshold"]
                thrs[idx] = -math.inf if thr is None else float(thr)
                lefts[idx] = add(node["left"])
                rights[idx] = add(node["right"])
            return idx

        add(tree)
        self.feature = np.array(feats, dtype=np.int64)
        self.threshold = np.array(thrs, dtype=np.float64)
        self.left = np.array(lefts, dtype=np.int64)
        self.right = np.array(rights, dtype=np.int64)
        self.weight = np.array(weights, dtype=np.float64)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        pending = np.flatnonzero(self.feature[node] >= 0)
        while pending.size:
            nd = node[pending]
            x = X[pending, self.feature[nd]]
            go_left = np.isnan(x) | (x <= self.threshold[nd])
            node[pending] = np.where(go_left, self.left[nd], self.right[nd])
            pending = pending[self.feature[node[pending]] >= 0]
        return self.weight[node]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass(frozen=True)
class TreeEnsembleModel:
    """Trained boosted ensemble; prediction is pure and deterministic.

    Leaf weights are stored with the learning rate already applied, so a
    margin is ``base_score + sum(tree outputs)``.
    """

    params: ModelParams
    base_score: float
    feature_names: Tuple[str, ...]
    trees: Tuple[dict, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_flat", [_FlatTree(t) for t in self.trees])

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for flat in self._flat:
            out += flat.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X) >= self.params.decision_threshold

    def with_threshold(self, threshold: float) -> "TreeEnsembleModel":
        return replace(self, params=replace(self.params, decision_threshold=threshold))

    def to_obj(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "params": asdict(self.params),
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "trees": list(self.trees),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj())

    @staticmethod
    def from_obj(obj: dict) -> "TreeEnsembleModel":
        if obj.get("format") != FORMAT_NAME:
            raise ValueError(f"not a {FORMAT_NAME} document")
        if obj.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        return TreeEnsembleModel(
            params=ModelParams(**obj["params"]),
            base_score=float(obj["base_score"]),
            feature_names=tuple(obj["feature_names"]),
            trees=tuple(obj["trees"]),
        )

    @staticmethod
    def from_json(doc: str) -> "TreeEnsembleModel":
        return TreeEnsembleModel.from_obj(json.loads(doc))


def save_model(model: TreeEnsembleModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model.to_json() + "\n")


def load_model(path) -> TreeEnsembleModel:
    with open(path, "r", encoding="utf-8") as fh:
        return TreeEnsembleModel.from_json(fh.read())


def train(
    X: np.ndarray,
    y: np.ndarray,
    params: ModelParams,
    feature_names: Optional[Sequence[str]] = None,
) -> TreeEnsembleModel:
    """Fit a boosted logistic-loss ensemble on ``X`` (NaN = missing), ``y`` in {0,1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, f) and y must be (n,)")
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos + neg != y.shape[0]:
        raise ValueError("labels must be 0/1")
    if pos == 0 or neg == 0:
        raise ValueError("training data must contain both classes")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(X.shape[1]))
    feature_names = tuple(feature_names)
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length mismatch")

    Xb, edges = bin_features(X)
    yf = (y == 1).astype(np.float64)
    base = math.log(pos / neg)
    margin = np.full(X.shape[0], base, dtype=np.float64)
    trees: List[dict] = []
    for _ in range(params.num_rounds):
        p = _sigmoid(margin)
        g = np.rint((p - yf) * _GRAD_SCALE)
        h = np.maximum(np.rint(p * (1.0 - p) * _GRAD_SCALE), 1.0)
        nodes, row_node = _grow_tree(Xb, g, h, params)
        leaf_w = np.array([nd.weight for nd in nodes], dtype=np.float64)
        margin += leaf_w[row_node]
        trees.append(_nodes_to_nested(nodes, edges))
    return TreeEnsembleModel(
        params=params,
        base_score=base,
        feature_names=feature_names,
        trees=tuple(trees),
    )
