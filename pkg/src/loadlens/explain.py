"""Exact path-dependent TreeSHAP and Shapley-based feature ranking.

The recursion follows the polynomial-time path algorithm for trees: walking
root to leaf, it maintains the permutation weights of every unique feature
on the path, and "unwinding" a feature gives its marginal contribution at
the leaf. All samples share the same walk; only their one-fractions (whether
the sample actually follows a branch) differ, so the walk is vectorised over
samples.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyAttributionError, MissingCoversError
from .models import EnsembleKind, Tree, TreeEnsemble


@dataclass
class ShapAttribution:
    """``values[s, f, c]`` is feature ``f``'s contribution to output ``c`` for
    sample ``s``; ``base[c]`` is the cover-weighted expected output."""

    values: np.ndarray
    base: np.ndarray
    space: str
    feature_names: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ()

    def totals(self) -> np.ndarray:
        return self.values.sum(axis=1) + self.base


def _check_covers(tree: Tree) -> None:
    if tree.cover is None or len(tree.cover) != tree.n_nodes or np.any(~(tree.cover > 0)):
        raise MissingCoversError("tree lacks positive node covers")


def expected_value(tree: Tree) -> np.ndarray:
    """Cover-weighted mean of leaf values, using child/parent cover ratios."""
    _check_covers(tree)

    def rec(i: int) -> np.ndarray:
        if tree.feature[i] < 0:
            return tree.value[i]
        l, r = tree.left[i], tree.right[i]
        c = tree.cover[i]
        return tree.cover[l] / c * rec(l) + tree.cover[r] / c * rec(r)

    return np.asarray(rec(0), dtype=float)


class _Path:
    """Unique-feature path with per-sample one-fractions and permutation weights."""

    __slots__ = ("feature", "zero", "one", "pweight")

    def __init__(self, depth_cap: int, n: int):
        self.feature = np.full(depth_cap, -1, dtype=np.int64)
        self.zero = np.zeros(depth_cap)
        self.one = np.zeros((depth_cap, n))
        self.pweight = np.zeros((depth_cap, n))

    def copy(self) -> "_Path":
        p = _Path.__new__(_Path)
        p.feature = self.feature.copy()
        p.zero = self.zero.copy()
        p.one = self.one.copy()
        p.pweight = self.pweight.copy()
        return p


def _extend(p: _Path, depth: int, zero: float, one: np.ndarray, feature: int) -> None:
    p.feature[depth] = feature
    p.zero[depth] = zero
    p.one[depth] = one
    p.pweight[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        p.pweight[i + 1] += one * p.pweight[i] * (i + 1) / (depth + 1)
        p.pweight[i] = zero * p.pweight[i] * (depth - i) / (depth + 1)


def _unwind(p: _Path, depth: int, idx: int) -> None:
    one = p.one[idx]
    zero = p.zero[idx]
    hot = one != 0
    safe_one = np.where(hot, one, 1.0)
    nxt = p.pweight[depth].copy()
    for i in range(depth - 1, -1, -1):
        tmp = p.pweight[i].copy()
        via_one = nxt * (depth + 1) / ((i + 1) * safe_one)
        via_zero = tmp * (depth + 1) / (zero * (depth - i)) if zero != 0 else np.zeros_like(tmp)
        p.pweight[i] = np.where(hot, via_one, via_zero)
        nxt = np.where(hot, tmp - p.pweight[i] * zero * (depth - i) / (depth + 1), nxt)
    p.feature[idx:depth] = p.feature[idx + 1 : depth + 1]
    p.zero[idx:depth] = p.zero[idx + 1 : depth + 1]
    p.one[idx:depth] = p.one[idx + 1 : depth + 1]


def _unwound_sums(p: _Path, depth: int) -> np.ndarray:
    """Path weight with each of entries 1..depth unwound, shape (depth, n)."""
    one = p.one[1 : depth + 1]
    zero = p.zero[1 : depth + 1][:, None]
    hot = one != 0
    safe_one = np.where(hot, one, 1.0)
    safe_zero = np.where(zero != 0, zero, 1.0)
    nxt = np.broadcast_to(p.pweight[depth], one.shape).copy()
    total = np.zeros_like(one)
    for i in range(depth - 1, -1, -1):
        pw = p.pweight[i][None, :]
        tmp = nxt * (depth + 1) / ((i + 1) * safe_one)
        cold = np.where(zero != 0, pw / safe_zero * (depth + 1) / (depth - i), 0.0)
        total += np.where(hot, tmp, cold)
        nxt = np.where(hot, pw - tmp * zero * (depth - i) / (depth + 1), nxt)
    return total


def tree_shap_single(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Attributions of one tree, shape (n_samples, n_features, n_outputs)."""
    _check_covers(tree)
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    n_out = tree.value.shape[1]
    phi = np.zeros((n, d, n_out))
    cap = tree.depth() + 2

    def rec(node: int, path: _Path, depth: int, zero: float, one: np.ndarray, feature: int) -> None:
        _extend(path, depth, zero, one, feature)
        f = int(tree.feature[node])
        if f < 0:
            if depth == 0:
                return
            w = _unwound_sums(path, depth)  # (depth, n)
            contrib = w * (path.one[1 : depth + 1] - path.zero[1 : depth + 1][:, None])
            leaf = tree.value[node]
            for k in range(depth):
                phi[:, path.feature[k + 1], :] += contrib[k][:, None] * leaf[None, :]
            return
        in_zero, in_one = 1.0, np.ones(n)
        hits = np.flatnonzero(path.feature[1 : depth + 1] == f)
        if len(hits):
            k = int(hits[0]) + 1
            in_zero, in_one = path.zero[k], path.one[k].copy()
            _unwind(path, depth, k)
            depth -= 1
        go_left = (X[:, f] < tree.threshold[node]).astype(float)
        l, r = int(tree.left[node]), int(tree.right[node])
        c = tree.cover[node]
        rec(l, path.copy(), depth + 1, tree.cover[l] / c * in_zero, in_one * go_left, f)
        rec(r, path.copy(), depth + 1, tree.cover[r] / c * in_zero, in_one * (1.0 - go_left), f)

    rec(0, _Path(cap + 1, n), 0, 1.0, np.ones(n), -1)
    return phi


def tree_shap(
    ensemble: TreeEnsemble,
    X,
    feature_names: Sequence[str] = (),
    class_names: Sequence[str] = (),
) -> ShapAttribution:
    """Exact attributions for a forest (probability space) or a boosted model (margin space)."""
    if not isinstance(ensemble, TreeEnsemble):
        raise TypeError("TreeSHAP needs a tree ensemble")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != ensemble.n_features:
        raise DimensionMismatchError(f"model expects {ensemble.n_features} features, got {X.shape[1]}")
    n, d, k = len(X), ensemble.n_features, ensemble.n_classes
    values = np.zeros((n, d, k))
    if ensemble.kind is EnsembleKind.FOREST:
        base = np.zeros(k)
        for t in ensemble.trees:
            values += tree_shap_single(t, X)
            base += expected_value(t)
        scale = 1.0 / len(ensemble.trees)
        return ShapAttribution(values * scale, base * scale, "probability", tuple(feature_names), tuple(class_names))
    lr = ensemble.learning_rate
    base = np.zeros(k)
    for t, c in zip(ensemble.trees, ensemble.tree_class):
        values[:, :, c] += tree_shap_single(t, X)[:, :, 0]
        base[c] += expected_value(t)[0]
    return ShapAttribution(
        values * lr, ensemble.base_score + lr * base, "margin", tuple(feature_names), tuple(class_names)
    )


def model_output(ensemble: TreeEnsemble, X) -> np.ndarray:
    """The quantity TreeSHAP attributions add up to."""
    if ensemble.kind is EnsembleKind.BOOSTED:
        return ensemble.margins(X)
    return ensemble.proba(X)


# Ranking -----------------------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureRanking:
    names: tuple[str, ...]
    scores: tuple[float, ...]
    indices: tuple[int, ...]

    def to_json(self) -> str:
        return json.dumps(
            {"ranking": [{"name": n, "score": s, "index": i} for n, s, i in zip(self.names, self.scores, self.indices)]},
            indent=1,
        ) + "\n"


def rank_features(attr: ShapAttribution | np.ndarray, names: Sequence[str] | None = None, top_k: int = 10) -> FeatureRanking:
    """Order features by summed absolute attribution over samples and classes.

    Ties keep the lower feature index first.
    """
    values = attr.values if isinstance(attr, ShapAttribution) else np.asarray(attr, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape[0] == 0:
        raise EmptyAttributionError("no samples to rank")
    if names is None:
        names = attr.feature_names if isinstance(attr, ShapAttribution) and attr.feature_names else [
            f"f{i}" for i in range(values.shape[1])
        ]
    score = np.abs(values).sum(axis=(0, 2))
    order = np.lexsort((np.arange(len(score)), -score))[:top_k]
    return FeatureRanking(tuple(names[i] for i in order), tuple(float(score[i]) for i in order), tuple(int(i) for i in order))


def attributions_csv(attr: ShapAttribution, sample_keys: Sequence[str]) -> str:
    """Long table: sample, class, feature, value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "class", "feature", "value"])
    n, d, k = attr.values.shape
    fnames = attr.feature_names or tuple(f"f{i}" for i in range(d))
    cnames = attr.class_names or tuple(str(c) for c in range(k))
    for s in range(n):
        for c in range(k):
            for f in range(d):
                w.writerow([sample_keys[s], cnames[c], fnames[f], repr(float(attr.values[s, f, c]))])
    return buf.getvalue()


__all__ = [
    "FeatureRanking",
    "ShapAttribution",
    "attributions_csv",
    "expected_value",
    "model_output",
    "rank_features",
    "tree_shap",
    "tree_shap_single",
]
