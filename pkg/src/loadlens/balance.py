"""Minority oversampling for training partitions: SMOTE, SMOTE-ENN and ADASYN.

The samplers only accept a :class:`TrainingSet`. Splitting code is the sole
producer of that type, so a held-out partition cannot be balanced by mistake.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmallError

log = logging.getLogger(__name__)


class BalanceMethod(str, enum.Enum):
    NONE = "none"
    SMOTE = "smote"
    SMOTE_ENN = "smote-enn"
    ADASYN = "adasyn"


@dataclass(frozen=True)
class BalanceConfig:
    method: BalanceMethod = BalanceMethod.SMOTE
    k_neighbors: int = 5
    enn_neighbors: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", BalanceMethod(self.method))
        if self.k_neighbors < 1 or self.enn_neighbors < 1:
            raise ValueError("neighbour counts must be >= 1")


@dataclass(frozen=True)
class TrainingSet:
    """Training rows. Only produced by the splitting functions or :meth:`wrap`."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one label per row")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def wrap(cls, X, y) -> "TrainingSet":
        return cls(X, y)


@dataclass
class BalanceResult:
    """Balanced rows plus provenance.

    Rows ``[:n_original]`` of the pre-edit set are the originals in input
    order; each synthetic row ``s`` equals ``X0[a] + u * (X0[b] - X0[a])``
    with ``(a, b, u) = parents[s]`` indexing the original rows. ``kept``
    maps output rows back to the pre-edit row index.
    """

    train: TrainingSet
    n_original: int
    parents: np.ndarray
    kept: np.ndarray
    removed: np.ndarray
    manifest: dict = field(default_factory=dict)

    @property
    def synthetic_mask(self) -> np.ndarray:
        return self.kept >= self.n_original


def _require_training(train) -> TrainingSet:
    if not isinstance(train, TrainingSet):
        raise TypeError("balancing accepts only a TrainingSet (training partition)")
    return train


def _counts(y: np.ndarray) -> dict[int, int]:
    classes, counts = np.unique(y, return_counts=True)
    return {int(c): int(n) for c, n in zip(classes, counts)}


def _pairwise_sq(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _neighbours(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest rows of ``X``, self excluded; ties go to the lower index."""
    d = _pairwise_sq(X, X)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    quotas = w / w.sum() * total
    alloc = np.floor(quotas).astype(np.int64)
    short = int(total - alloc.sum())
    if short > 0:
        order = np.argsort(-(quotas - alloc), kind="stable")
        alloc[order[:short]] += 1
    return alloc


def _synthesise(X_cls: np.ndarray, idx_cls: np.ndarray, bases: np.ndarray, k: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """One synthetic row per entry of ``bases`` (positions within the class)."""
    k_eff = min(k, len(X_cls) - 1)
    nn = _neighbours(X_cls, k_eff)
    pick = rng.integers(0, k_eff, size=len(bases))
    u = rng.random(len(bases))
    nbr = nn[bases, pick]
    rows = X_cls[bases] + u[:, None] * (X_cls[nbr] - X_cls[bases])
    parents = np.column_stack([idx_cls[bases], idx_cls[nbr], u])
    return rows, parents


def _check_sizes(counts: dict[int, int], target: int) -> None:
    for c, n in counts.items():
        if n < target and n < 2:
            raise ClassTooSmallError(f"class {c} has {n} sample(s); oversampling needs at least 2")


def _assemble(train, synth_X, synth_y, parents, config, method, extra=None) -> BalanceResult:
    X = np.vstack([train.X, *synth_X]) if synth_X else train.X.copy()
    y = np.concatenate([train.y, *synth_y]) if synth_y else train.y.copy()
    P = np.vstack(parents) if parents else np.zeros((0, 3))
    manifest = {
        "method": method,
        "k_neighbors": config.k_neighbors,
        "enn_neighbors": config.enn_neighbors,
        "seed": config.seed,
        "counts_before": {str(c): n for c, n in _counts(train.y).items()},
        "counts_after": {str(c): n for c, n in _counts(y).items()},
        "n_synthetic": int(len(P)),
        "n_removed": 0,
    }
    if extra:
        manifest.update(extra)
    return BalanceResult(TrainingSet(X, y), len(train.y), P, np.arange(len(y)), np.zeros(0, np.int64), manifest)


def _smote_parts(train: TrainingSet, config: BalanceConfig):
    counts = _counts(train.y)
    target = max(counts.values())
    synth_X, synth_y, parents = [], [], []
    for c in sorted(counts):
        need = target - counts[c]
        if need <= 0:
            continue
        idx = np.flatnonzero(train.y == c)
        rng = np.random.default_rng([config.seed, c])
        bases = rng.integers(0, len(idx), size=need)
        rows, par = _synthesise(train.X[idx], idx, bases, config.k_neighbors, rng)
        synth_X.append(rows)
        synth_y.append(np.full(need, c, dtype=np.int64))
        parents.append(par)
    return synth_X, synth_y, parents


def smote(train: TrainingSet, config: BalanceConfig) -> BalanceResult:
    """Interpolate new minority rows until every class matches the majority count."""
    train = _require_training(train)
    counts = _counts(train.y)
    if len(set(counts.values())) <= 1:
        warnings.warn("classes already balanced; oversampling skipped", RuntimeWarning, stacklevel=2)
        return _assemble(train, [], [], [], config, BalanceMethod.NONE.value)
    _check_sizes(counts, max(counts.values()))
    return _assemble(train, *_smote_parts(train, config), config, BalanceMethod.SMOTE.value)


def edited_nearest_neighbours(X: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Boolean keep-mask: drop rows whose neighbours' unique majority label differs."""
    k_eff = min(k, len(y) - 1)
    if k_eff < 1:
        return np.ones(len(y), dtype=bool)
    nn = _neighbours(X, k_eff)
    keep = np.ones(len(y), dtype=bool)
    for i, row in enumerate(nn):
        labels, votes = np.unique(y[row], return_counts=True)
        winners = labels[votes == votes.max()]
        if len(winners) == 1 and winners[0] != y[i]:
            keep[i] = False
    return keep


def smote_enn(train: TrainingSet, config: BalanceConfig) -> BalanceResult:
    train = _require_training(train)
    res = smote(train, config)
    keep = edited_nearest_neighbours(res.train.X, res.train.y, config.enn_neighbors)
    removed = np.flatnonzero(~keep)
    if len(removed):
        log.info("ENN removed %d rows (%d original)", len(removed), int(np.sum(removed < res.n_original)))
    res.manifest.update(
        method=BalanceMethod.SMOTE_ENN.value,
        n_removed=int(len(removed)),
        removed_rows=[int(i) for i in removed],
        counts_after={str(c): n for c, n in _counts(res.train.y[keep]).items()},
    )
    return BalanceResult(
        TrainingSet(res.train.X[keep], res.train.y[keep]),
        res.n_original,
        res.parents,
        np.flatnonzero(keep),
        removed,
        res.manifest,
    )


def adasyn(train: TrainingSet, config: BalanceConfig) -> BalanceResult:
    """Allocate synthetic rows towards minority samples with more foreign neighbours.

    A sample's hardness is the fraction of its ``k`` nearest neighbours (all
    classes) that belong to another class. Classes whose samples all have
    hardness 0 fall back to SMOTE with a warning.
    """
    train = _require_training(train)
    counts = _counts(train.y)
    target = max(counts.values())
    if len(set(counts.values())) <= 1:
        warnings.warn("classes already balanced; oversampling skipped", RuntimeWarning, stacklevel=2)
        return _assemble(train, [], [], [], config, BalanceMethod.NONE.value)
    _check_sizes(counts, target)
    k_all = min(config.k_neighbors, len(train.y) - 1)
    nn_all = _neighbours(train.X, k_all)
    synth_X, synth_y, parents, fallback = [], [], [], []
    for c in sorted(counts):
        need = target - counts[c]
        if need <= 0:
            continue
        idx = np.flatnonzero(train.y == c)
        r = np.mean(train.y[nn_all[idx]] != c, axis=1)
        rng = np.random.default_rng([config.seed, c])
        if not r.sum() > 0:
            warnings.warn(f"class {c}: every sample is safe; using SMOTE", RuntimeWarning, stacklevel=2)
            fallback.append(c)
            bases = rng.integers(0, len(idx), size=need)
        else:
            alloc = largest_remainder(r, need)
            bases = np.repeat(np.arange(len(idx)), alloc)
        rows, par = _synthesise(train.X[idx], idx, bases, config.k_neighbors, rng)
        synth_X.append(rows)
        synth_y.append(np.full(need, c, dtype=np.int64))
        parents.append(par)
    return _assemble(
        train, synth_X, synth_y, parents, config, BalanceMethod.ADASYN.value, {"smote_fallback_classes": fallback}
    )


def balance(train: TrainingSet, config: BalanceConfig) -> BalanceResult:
    train = _require_training(train)
    if config.method is BalanceMethod.NONE:
        return _assemble(train, [], [], [], config, BalanceMethod.NONE.value)
    fn = {BalanceMethod.SMOTE: smote, BalanceMethod.SMOTE_ENN: smote_enn, BalanceMethod.ADASYN: adasyn}
    return fn[config.method](train, config)


__all__ = [
    "BalanceConfig",
    "BalanceMethod",
    "BalanceResult",
    "TrainingSet",
    "adasyn",
    "balance",
    "edited_nearest_neighbours",
    "largest_remainder",
    "smote",
    "smote_enn",
]
