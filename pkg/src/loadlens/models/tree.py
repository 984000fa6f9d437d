"""Array-backed CART trees with Gini or second-order (Newton) split criteria."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError

LEAF = -1
# Relative slack under which two split scores count as tied.
_TIE_RTOL = 1e-12


@dataclass
class Tree:
    """Flat tree: node ``i`` is a leaf iff ``feature[i] == -1``.

    ``value`` has one row per node: the weighted class distribution for Gini
    trees, or a single Newton leaf weight for boosting trees. ``cover`` is the
    training weight (Gini) or hessian sum (boosting) reaching the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row; ``x[f] < threshold`` goes left."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while len(active):
            n = node[active]
            go_left = X[active, self.feature[n]] < self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "cover": self.cover.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["cover"], dtype=float),
            np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
        )


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_leaf: int = 1
    criterion: str = "gini"
    max_features: int | None = None
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0


def _midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid = a + (b - a) * 0.5
    # Adjacent floats can round the midpoint down onto ``a``.
    return np.where(mid > a, mid, b)


class _Builder:
    def __init__(self, X, stats, params: TreeParams, rng):
        self.X = X
        self.stats = stats  # (n, C) weighted one-hot, or (n, 2) gradient/hessian
        self.p = params
        self.rng = rng
        self.second_order = params.criterion == "second_order"
        self.nodes: list[list] = []

    # node helpers
    def _leaf_value(self, tot: np.ndarray) -> np.ndarray:
        if self.second_order:
            return np.array([-tot[0] / (tot[1] + self.p.reg_lambda)])
        s = tot.sum()
        return tot / s if s > 0 else tot

    def _cover(self, tot: np.ndarray) -> float:
        return float(tot[1]) if self.second_order else float(tot.sum())

    def _impure(self, tot: np.ndarray) -> bool:
        if self.second_order:
            return True
        return int(np.count_nonzero(tot > 0)) > 1

    def _score(self, left: np.ndarray, right: np.ndarray, tot: np.ndarray) -> np.ndarray:
        """Split gain for every candidate; ``left``/``right`` are (k, m, C) sums."""
        if self.second_order:
            lam = self.p.reg_lambda
            gl, hl = left[..., 0], left[..., 1]
            gr, hr = right[..., 0], right[..., 1]
            return 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - tot[0] ** 2 / (tot[1] + lam))
        wl = left.sum(-1)
        wr = right.sum(-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = (left**2).sum(-1) / wl + (right**2).sum(-1) / wr
        return s - (tot**2).sum() / tot.sum()

    def _valid_children(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        if self.second_order:
            mcw = self.p.min_child_weight
            return (left[..., 1] >= mcw) & (right[..., 1] >= mcw)
        return (left.sum(-1) > 0) & (right.sum(-1) > 0)

    def _search(self, idx: np.ndarray, feats: np.ndarray, tot: np.ndarray):
        n = len(idx)
        k = self.p.min_leaf
        if n < 2 * k or not len(feats):
            return None
        feats = np.sort(feats)
        Xn = self.X[np.ix_(idx, feats)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        cum = np.cumsum(self.stats[idx][order], axis=0)  # (n, m, C)
        # position i splits sorted rows [0..i] | [i+1..n-1]
        lo, hi = k - 1, n - k  # i in [lo, hi)
        left = cum[lo:hi]
        right = tot - left
        distinct = xs[lo + 1 : hi + 1] > xs[lo:hi]
        ok = distinct & self._valid_children(left, right)
        if not ok.any():
            return None
        gain = np.where(ok, self._score(left, right, tot), -np.inf)
        best = gain.max()
        if self.second_order and not best > 0:
            return None
        tied = ok & (gain >= best - _TIE_RTOL * max(1.0, abs(best)))
        pos, col = np.nonzero(tied)
        # lowest feature index, then lowest threshold
        j = np.lexsort((pos, col))[0]
        p, c = pos[j], col[j]
        thr = float(_midpoint(xs[lo + p, c], xs[lo + p + 1, c]))
        return int(feats[c]), thr, float(gain[p, c])

    def _choose(self, idx, tot):
        d = self.X.shape[1]
        m = self.p.max_features
        if m is None or m >= d:
            return self._search(idx, np.arange(d), tot)
        perm = self.rng.permutation(d)
        found = self._search(idx, perm[:m], tot)
        if found is None:
            # every drawn feature was constant here; keep drawing
            found = self._search(idx, perm[m:], tot)
        return found

    def build(self) -> Tree:
        n = len(self.X)
        root = np.arange(n)
        stack = [(self._new(root), root, 0)]
        while stack:
            node, idx, depth = stack.pop()
            tot = self.nodes[node][5]
            if self.p.max_depth is not None and depth >= self.p.max_depth:
                continue
            if not self._impure(tot):
                continue
            found = self._choose(idx, tot)
            if found is None:
                continue
            f, thr, _ = found
            go = self.X[idx, f] < thr
            li, ri = idx[go], idx[~go]
            lnode, rnode = self._new(li), self._new(ri)
            rec = self.nodes[node]
            rec[0], rec[1], rec[2], rec[3] = f, thr, lnode, rnode
            stack.append((rnode, ri, depth + 1))
            stack.append((lnode, li, depth + 1))
        return self._finish()

    def _new(self, idx) -> int:
        tot = self.stats[idx].sum(axis=0)
        self.nodes.append([LEAF, 0.0, LEAF, LEAF, self._cover(tot), tot])
        return len(self.nodes) - 1

    def _finish(self) -> Tree:
        recs = self.nodes
        return Tree(
            feature=np.array([r[0] for r in recs], dtype=np.int64),
            threshold=np.array([r[1] for r in recs], dtype=float),
            left=np.array([r[2] for r in recs], dtype=np.int64),
            right=np.array([r[3] for r in recs], dtype=np.int64),
            cover=np.array([r[4] for r in recs], dtype=float),
            value=np.vstack([self._leaf_value(r[5]) for r in recs]),
        )


def grow_gini(X, y, n_classes: int, params: TreeParams, sample_weight=None, rng=None) -> Tree:
    """Gini tree over rows with positive weight; leaves hold class distributions."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if len(y) == 0 or not w.sum() > 0:
        raise EmptyInputError("no training rows with positive weight")
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    stats = np.zeros((len(y), n_classes))
    stats[np.arange(len(y)), y] = w
    return _Builder(X, stats, params, rng or np.random.default_rng(0)).build()


def grow_second_order(X, grad, hess, params: TreeParams, rng=None) -> Tree:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise EmptyInputError("no training rows")
    stats = np.column_stack([grad, hess]).astype(float)
    p = TreeParams(**{**params.__dict__, "criterion": "second_order"})
    return _Builder(X, stats, p, rng or np.random.default_rng(0)).build()
