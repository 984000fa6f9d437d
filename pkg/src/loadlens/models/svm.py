"""RBF support vector classifier trained by SMO with second-order working-set selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInputError, SingleClassError

TAU = 1e-12


class NoConvergenceWarning(RuntimeWarning):
    pass


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d, 0.0))


def scale_gamma(X: np.ndarray) -> float:
    """``1 / (n_features * Var(X))`` over all entries; 1.0 for constant data."""
    X = np.asarray(X, dtype=float)
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    iterations: int
    converged: bool
    gap: float


def smo_solve(K: np.ndarray, y: np.ndarray, C: np.ndarray, tol: float = 1e-3, max_iter: int | None = None) -> SmoResult:
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``y'a = 0``, ``0 <= a_i <= C_i``.

    ``Q_ij = y_i y_j K_ij``. Working pairs follow the maximal-violating
    ``i`` and the ``j`` with the largest second-order objective decrease;
    iteration stops once the KKT violation gap is at most ``tol``.
    """
    n = len(y)
    y = y.astype(float)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = max(100_000, 100 * n) if max_iter is None else max_iter
    pos = y > 0

    it = 0
    converged = False
    gap = np.inf
    while it < max_iter:
        upper = alpha >= C
        lower = alpha <= 0
        # i: argmax over I_up of -y_t G_t
        up_ok = np.where(pos, ~upper, ~lower)
        low_ok = np.where(pos, ~lower, ~upper)
        yG = -y * G
        if not up_ok.any() or not low_ok.any():
            converged, gap = True, 0.0
            break
        cand = np.where(up_ok, yG, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        g_min = float(np.min(np.where(low_ok, yG, np.inf)))
        gap = g_max - g_min
        if gap <= tol:
            converged = True
            break
        b = g_max - yG
        Qi = Q[i]
        quad = QD[i] + QD - 2.0 * y[i] * y * Qi
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(low_ok & (b > 0), -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            converged = True
            break

        ai, aj = alpha[i], alpha[j]
        Ci, Cj = C[i], C[j]
        if y[i] != y[j]:
            q = QD[i] + QD[j] + 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > Ci - Cj:
                if ni > Ci:
                    ni, nj = Ci, Ci - diff
            elif nj > Cj:
                nj, ni = Cj, Cj + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > Ci:
                if ni > Ci:
                    ni, nj = Ci, total - Ci
            elif nj < 0:
                nj, ni = 0.0, total
            if total > Cj:
                if nj > Cj:
                    nj, ni = Cj, total - Cj
            elif ni < 0:
                ni, nj = 0.0, total
        G += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1

    return SmoResult(alpha, _rho(alpha, y, G, C), it, converged, float(gap))


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(np.mean(yG[free]))
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = float(np.min(yG[ub_mask])) if ub_mask.any() else np.inf
    lb = float(np.max(yG[lb_mask])) if lb_mask.any() else -np.inf
    return (ub + lb) / 2.0


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    rho: float
    pos_weight: float
    neg_weight: float
    converged: bool = True

    def decision(self, X: np.ndarray, gamma: float) -> np.ndarray:
        if len(self.dual_coef) == 0:
            return np.full(len(X), -self.rho)
        return rbf_kernel(X, self.support_vectors, gamma) @ self.dual_coef - self.rho


@dataclass
class SvmModel:
    """One-vs-rest RBF machines. With two classes a single machine is stored
    and class 1 is its positive side."""

    gamma: float
    C: float
    n_classes: int
    n_features: int
    machines: list[BinarySvm]
    params: dict = field(default_factory=dict)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.n_classes == 2:
            f = self.machines[0].decision(X, self.gamma)
            return np.column_stack([-f, f])
        return np.column_stack([m.decision(X, self.gamma) for m in self.machines])


def _fit_binary(K, X, target, C, class_weight, tol, max_iter) -> BinarySvm:
    n = len(target)
    n_pos = int(np.sum(target > 0))
    if class_weight == "balanced":
        wp, wn = n / (2.0 * n_pos), n / (2.0 * (n - n_pos))
    else:
        wp = wn = 1.0
    Cvec = np.where(target > 0, C * wp, C * wn)
    res = smo_solve(K, target, Cvec, tol, max_iter)
    if not res.converged:
        warnings.warn(
            f"SMO stopped after {res.iterations} iterations with KKT gap {res.gap:.3g}",
            NoConvergenceWarning,
            stacklevel=3,
        )
    sv = res.alpha > 0
    return BinarySvm(X[sv].copy(), (res.alpha * target)[sv], res.rho, wp, wn, res.converged)


def fit_svm(
    X,
    y,
    C: float = 1.0,
    gamma="scale",
    tol: float = 1e-3,
    max_iter: int | None = None,
    class_weight: str | None = "balanced",
    n_classes: int | None = None,
    seed: int = 0,
) -> SvmModel:
    """Train one machine per class against the rest (a single machine for two classes).

    ``seed`` is accepted for interface symmetry; the solver is deterministic.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyInputError("need a non-empty 2-D feature matrix")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    present = np.unique(y)
    if len(present) < 2:
        raise SingleClassError("SVM needs at least two classes")
    g = scale_gamma(X) if gamma == "scale" else float(gamma)
    K = rbf_kernel(X, X, g)
    if k == 2:
        machines = [_fit_binary(K, X, np.where(y == 1, 1.0, -1.0), C, class_weight, tol, max_iter)]
    else:
        machines = []
        for c in range(k):
            if c not in present:
                # no positives: a machine that always votes against this class
                machines.append(BinarySvm(np.zeros((0, X.shape[1])), np.zeros(0), 1.0, 1.0, 1.0))
                continue
            machines.append(_fit_binary(K, X, np.where(y == c, 1.0, -1.0), C, class_weight, tol, max_iter))
    return SvmModel(
        g,
        C,
        k,
        X.shape[1],
        machines,
        params={"kind": "svm", "C": C, "gamma": gamma, "tol": tol, "class_weight": class_weight},
    )
