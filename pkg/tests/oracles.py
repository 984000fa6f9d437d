"""Independent reference computations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from loadlens.models import LEAF, Tree


def conditional_expectation(tree: Tree, x: np.ndarray, known: frozenset) -> np.ndarray:
    """E[f(x) | x_S] where unknown splits average children by cover."""

    def rec(i: int) -> np.ndarray:
        f = tree.feature[i]
        if f == LEAF:
            return tree.value[i]
        l, r = tree.left[i], tree.right[i]
        if f in known:
            return rec(l) if x[f] < tree.threshold[i] else rec(r)
        c = tree.cover[i]
        return tree.cover[l] / c * rec(l) + tree.cover[r] / c * rec(r)

    return np.asarray(rec(0), dtype=float)


def brute_force_shap(tree: Tree, x: np.ndarray, n_features: int) -> np.ndarray:
    """Shapley values by enumerating every feature subset, shape (n_features, n_outputs)."""
    M = n_features
    cache = {}

    def v(S):
        if S not in cache:
            cache[S] = conditional_expectation(tree, x, S)
        return cache[S]

    phi = np.zeros((M, tree.value.shape[1]))
    for i in range(M):
        others = [j for j in range(M) if j != i]
        for size in range(M):
            w = math.factorial(size) * math.factorial(M - size - 1) / math.factorial(M)
            for S in itertools.combinations(others, size):
                S = frozenset(S)
                phi[i] += w * (v(S | {i}) - v(S))
    return phi


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int, n_outputs: int = 1) -> Tree:
    """A random tree with positive covers that add up parent = left + right."""
    feature, threshold, left, right, cover, value = [], [], [], [], [], []

    def new(c):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        cover.append(c)
        value.append(rng.normal(size=n_outputs))
        return len(feature) - 1

    def grow(node, depth):
        if depth >= max_depth or (depth > 0 and rng.random() < 0.25):
            return
        feature[node] = int(rng.integers(n_features))
        threshold[node] = float(rng.normal())
        share = rng.uniform(0.05, 0.95)
        l = new(cover[node] * share)
        r = new(cover[node] - cover[l])
        left[node], right[node] = l, r
        grow(l, depth + 1)
        grow(r, depth + 1)

    root = new(float(rng.uniform(1, 100)))
    grow(root, 0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(cover),
        np.array(value).reshape(len(feature), n_outputs),
    )


def weighted_f1_from_confusion(conf) -> float:
    """Support-weighted F1 using only the confusion matrix (rows = truth)."""
    conf = np.asarray(conf, dtype=float)
    total = 0.0
    for c in range(len(conf)):
        tp = conf[c, c]
        pred = conf[:, c].sum()
        true = conf[c, :].sum()
        p = tp / pred if pred else 0.0
        r = tp / true if true else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        total += f * true
    return total / conf.sum()


def svm_dual_qp(K: np.ndarray, y: np.ndarray, C: np.ndarray):
    """Solve the soft-margin SVM dual with a general-purpose QP solver.

    Returns ``(alpha, b)`` with decision ``f(x) = sum alpha_i y_i K(x_i, x) + b``.
    """
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-10
    cvxopt.solvers.options["reltol"] = 1e-10
    cvxopt.solvers.options["feastol"] = 1e-10
    n = len(y)
    y = y.astype(float)
    P = cvxopt.matrix(np.outer(y, y) * K)
    q = cvxopt.matrix(-np.ones(n))
    G = cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = cvxopt.matrix(np.r_[np.zeros(n), C])
    A = cvxopt.matrix(y[None, :])
    sol = cvxopt.solvers.qp(P, q, G, h, A, cvxopt.matrix(0.0))
    alpha = np.ravel(sol["x"])
    eps = 1e-6 * float(np.max(C))
    free = (alpha > eps) & (alpha < C - eps)
    grad = (alpha * y) @ K
    idx = free if free.any() else alpha > eps
    b = float(np.mean(y[idx] - grad[idx]))
    return alpha, b
