"""Random forests and second-order softmax gradient boosting."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import EmptyInputError, SingleClassError
from .tree import Tree, TreeParams, grow_gini, grow_second_order

HESS_FLOOR = 1e-16


class EnsembleKind(str, enum.Enum):
    FOREST = "forest"
    BOOSTED = "boosted"


@dataclass
class TreeEnsemble:
    """Trained trees. Boosted trees are stored round-major; ``tree_class[t]``
    names the class whose margin tree ``t`` adds to."""

    kind: EnsembleKind
    trees: list[Tree]
    n_classes: int
    n_features: int
    base_score: np.ndarray
    learning_rate: float = 1.0
    tree_class: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def margins(self, X: np.ndarray) -> np.ndarray:
        """Boosted raw margins, shape (n, n_classes)."""
        X = np.asarray(X, dtype=float)
        out = np.tile(self.base_score, (len(X), 1))
        acc = np.zeros_like(out)
        for t, k in zip(self.trees, self.tree_class):
            acc[:, k] += t.predict_value(X)[:, 0]
        return out + self.learning_rate * acc

    def proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind is EnsembleKind.BOOSTED:
            return softmax(self.margins(X))
        acc = np.zeros((len(X), self.n_classes))
        for t in self.trees:
            acc += t.predict_value(X)
        return acc / len(self.trees)


def softmax(m: np.ndarray) -> np.ndarray:
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyInputError("need a non-empty 2-D feature matrix")
    if len(y) != len(X):
        raise ValueError("X and y differ in length")
    if np.any(y < 0):
        raise ValueError("labels must be non-negative class ids")
    return X, y


def balanced_class_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    """Inverse class frequency, scaled so the mean per-sample weight is 1."""
    counts = np.bincount(y, minlength=n_classes).astype(float)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = len(y) / (present.sum() * counts[present])
    return w


def fit_tree(
    X,
    y,
    max_depth: int | None = None,
    min_leaf: int = 1,
    max_features: int | None = None,
    sample_weight=None,
    n_classes: int | None = None,
    seed=0,
) -> TreeEnsemble:
    """A single Gini tree, wrapped as a one-tree forest."""
    X, y = _check_xy(X, y)
    k = int(y.max()) + 1 if n_classes is None else n_classes
    params = TreeParams(max_depth=max_depth, min_leaf=min_leaf, max_features=max_features)
    tree = grow_gini(X, y, k, params, sample_weight, np.random.default_rng(seed))
    return TreeEnsemble(EnsembleKind.FOREST, [tree], k, X.shape[1], np.zeros(k), params={"kind": "tree"})


def _max_features(spec, d: int) -> int | None:
    if spec is None:
        return None
    if spec == "sqrt":
        return max(1, int(math.isqrt(d)))
    return max(1, min(d, int(spec)))


def fit_forest(
    X,
    y,
    n_trees: int = 100,
    max_depth: int | None = None,
    min_leaf: int = 1,
    class_weight: str | None = "balanced",
    max_features="sqrt",
    bootstrap: bool = True,
    seed: int = 0,
    n_classes: int | None = None,
    threads: int = 1,
) -> TreeEnsemble:
    """Bagged Gini trees with per-split feature subsampling.

    Tree ``t`` draws from ``default_rng([seed, t])`` so the ensemble does not
    depend on how trees are scheduled across threads.
    """
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    n, d = X.shape
    cw = balanced_class_weights(y, k) if class_weight == "balanced" else np.ones(k)
    params = TreeParams(max_depth=max_depth, min_leaf=min_leaf, max_features=_max_features(max_features, d))

    def one(t: int) -> Tree:
        rng = np.random.default_rng([seed, t])
        counts = np.bincount(rng.integers(0, n, n), minlength=n) if bootstrap else np.ones(n)
        w = counts * cw[y]
        return grow_gini(X, y, k, params, w, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one, range(n_trees)))
    else:
        trees = [one(t) for t in range(n_trees)]
    return TreeEnsemble(
        EnsembleKind.FOREST,
        trees,
        k,
        d,
        np.zeros(k),
        params={
            "kind": "forest",
            "n_trees": n_trees,
            "max_depth": max_depth,
            "min_leaf": min_leaf,
            "class_weight": class_weight,
            "max_features": max_features,
            "bootstrap": bootstrap,
            "seed": seed,
        },
    )


def log_loss(proba: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(proba[np.arange(len(y)), y], 1e-300, None)
    return float(-np.mean(np.log(p)))


def fit_boosted(
    X,
    y,
    n_trees: int = 100,
    max_depth: int = 5,
    lr: float = 0.1,
    subsample: float = 0.8,
    colsample: float = 0.8,
    reg_lambda: float = 1.0,
    min_child_weight: float = 1.0,
    seed: int = 0,
    n_classes: int | None = None,
    history: list | None = None,
) -> TreeEnsemble:
    """Softmax boosting with Newton leaves ``-G / (H + lambda)``.

    Each of the ``n_trees`` rounds fits one tree per class on a shared row
    subsample; every tree draws its own column subsample. ``history``, when
    given, receives the training log-loss after each round.
    """
    X, y = _check_xy(X, y)
    k = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=k)
    if np.count_nonzero(counts) < 2:
        raise SingleClassError("boosting needs at least two classes")
    n, d = X.shape
    prior = np.where(counts > 0, counts / n, 1.0 / n)
    base = np.log(prior)
    params = TreeParams(max_depth=max_depth, min_leaf=1, reg_lambda=reg_lambda, min_child_weight=min_child_weight)
    rng = np.random.default_rng(seed)
    onehot = np.eye(k)[y]
    n_rows = n if subsample >= 1.0 else max(1, int(round(subsample * n)))
    n_cols = d if colsample >= 1.0 else max(1, int(round(colsample * d)))

    margin = np.tile(base, (n, 1))
    trees, tree_class = [], []
    for _ in range(n_trees):
        p = softmax(margin)
        grad = p - onehot
        hess = np.maximum(p * (1.0 - p), HESS_FLOOR)
        rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
        step = np.zeros_like(margin)
        for c in range(k):
            cols = np.sort(rng.choice(d, n_cols, replace=False)) if n_cols < d else np.arange(d)
            sub = grow_second_order(X[np.ix_(rows, cols)], grad[rows, c], hess[rows, c], params)
            tree = replace(sub, feature=np.where(sub.feature >= 0, cols[np.maximum(sub.feature, 0)], -1))
            trees.append(tree)
            tree_class.append(c)
            step[:, c] = tree.predict_value(X)[:, 0]
        margin = margin + lr * step
        if history is not None:
            history.append(log_loss(softmax(margin), y))
    return TreeEnsemble(
        EnsembleKind.BOOSTED,
        trees,
        k,
        d,
        base,
        lr,
        np.array(tree_class, dtype=np.int64),
        params={
            "kind": "boosted",
            "n_trees": n_trees,
            "max_depth": max_depth,
            "lr": lr,
            "subsample": subsample,
            "colsample": colsample,
            "reg_lambda": reg_lambda,
            "min_child_weight": min_child_weight,
            "seed": seed,
        },
    )
