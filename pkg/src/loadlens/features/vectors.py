"""Per-epoch feature vectors and the labelled feature matrix."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..epoching import Epoch, EpochStore
from ..errors import DegenerateSeriesError, KeyMismatchError, TooFewSamplesError
from . import catch22 as c22

log = logging.getLogger(__name__)

N_FEATURES = len(c22.FEATURE_NAMES)
META_COLUMNS = ("subject", "condition", "load", "correctness", "trial", "label")


class MergeMode(str, enum.Enum):
    AVERAGE = "average"
    CONCATENATE = "concatenate"


class FeatureMode(str, enum.Enum):
    CATCH22 = "catch22"
    RAW = "raw"


def _valid(epoch_or_values) -> np.ndarray:
    if isinstance(epoch_or_values, Epoch):
        return np.asarray(epoch_or_values.valid_values(), dtype=float)
    v = np.asarray(epoch_or_values, dtype=float)
    return v[~np.isnan(v)]


def zscore_valid(epoch_or_values, ddof: int = 0) -> np.ndarray:
    """Standardise the non-missing samples, compacted in time order.

    ``ddof=0`` divides by the population standard deviation. Missing samples
    are NaN in a plain array or flagged in an :class:`Epoch`.
    """
    v = _valid(epoch_or_values)
    if v.size < 2:
        raise TooFewSamplesError(f"need at least 2 valid samples, got {v.size}")
    sd = v.std(ddof=ddof)
    if not sd > 0:
        raise DegenerateSeriesError("series has zero variance")
    return (v - v.mean()) / sd


def feature_histogram_mode(z, n_bins: int, ties: str = "mean") -> float:
    if n_bins not in (5, 10):
        raise ValueError("n_bins must be 5 or 10")
    return c22.histogram_mode(np.asarray(z, dtype=float), n_bins, ties=ties)


def feature_trev(z) -> float:
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise TooFewSamplesError("trev needs at least 2 samples")
    return c22.trev_1_num(z)


def feature_longstretch_above_mean(z, method: str = "reference") -> int:
    """Longest stretch of samples above the mean.

    ``method="reference"`` reproduces the canonical implementation, which
    ignores the final sample and counts a stretch as the distance between
    below-mean positions. ``method="runs"`` is the plain longest run of
    ``z > mean`` over every sample.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 1:
        raise TooFewSamplesError("empty series")
    if method == "reference":
        if z.size < 2:
            return int(z[0] > z.mean())
        return c22.binary_mean_longstretch1(z)
    if method != "runs":
        raise ValueError(f"unknown method {method!r}")
    best = run = 0
    for above in z > z.mean():
        run = run + 1 if above else 0
        best = max(best, run)
    return best


def feature_pnn40(z) -> float:
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise TooFewSamplesError("pnn40 needs at least 2 samples")
    return c22.pnn40(z)


def extract_catch22(epoch_or_values) -> np.ndarray:
    """The 22 canonical features of one channel's valid samples.

    Standardisation uses the sample standard deviation, as the reference
    implementation does. A zero-variance series gives an all-NaN block.
    """
    v = _valid(epoch_or_values)
    if v.size < 2:
        raise TooFewSamplesError(f"need at least 2 valid samples, got {v.size}")
    try:
        z = zscore_valid(v, ddof=1)
    except DegenerateSeriesError:
        return np.full(N_FEATURES, np.nan)
    return c22.catch22_from_z(z)


def raw_representation(epoch_or_values, target_points: int) -> np.ndarray:
    """Valid samples linearly resampled to ``target_points`` then z-scored."""
    v = _valid(epoch_or_values)
    if v.size < 2:
        raise TooFewSamplesError(f"need at least 2 valid samples, got {v.size}")
    if target_points < 2:
        raise ValueError("target_points must be at least 2")
    if v.size != target_points:
        v = np.interp(np.linspace(0.0, v.size - 1, target_points), np.arange(v.size), v)
    try:
        return zscore_valid(v)
    except DegenerateSeriesError:
        return np.full(target_points, np.nan)


# Vectors ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class RowKey:
    subject: str
    condition: str
    load: int
    correctness: str | None
    trial: int

    @classmethod
    def of(cls, epoch: Epoch) -> "RowKey":
        return cls(
            epoch.subject_id,
            epoch.condition.value,
            int(epoch.load),
            epoch.correctness.value if epoch.correctness else None,
            epoch.trial,
        )

    def sort_key(self):
        return (self.subject, self.condition, self.load, self.trial)


@dataclass
class FeatureVector:
    key: RowKey
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.names):
            raise ValueError("values and names differ in length")

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def merge_eyes(left: FeatureVector, right: FeatureVector, mode: MergeMode | str = MergeMode.CONCATENATE) -> FeatureVector:
    if left.key != right.key:
        raise KeyMismatchError(f"cannot merge {left.key} with {right.key}")
    mode = MergeMode(mode)
    if mode is MergeMode.CONCATENATE:
        names = tuple(f"left_{n}" for n in left.names) + tuple(f"right_{n}" for n in right.names)
        return FeatureVector(left.key, np.concatenate([left.values, right.values]), names)
    if left.names != right.names:
        raise KeyMismatchError("eye blocks have different feature layouts")
    stacked = np.vstack([left.values, right.values])
    count = np.sum(~np.isnan(stacked), axis=0)
    total = np.nansum(stacked, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return FeatureVector(left.key, values, left.names)


# Matrix -----------------------------------------------------------------------------------------


@dataclass
class FeatureMatrix:
    """Rectangular per-trial features with key, label and subject (group) columns.

    ``labels`` holds -1 for rows that have not been labelled for a task yet.
    """

    keys: list[RowKey]
    X: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray = field(default=None)
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.keys), len(self.feature_names))
        if self.labels is None:
            self.labels = np.full(len(self.keys), -1, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.keys):
            raise ValueError("labels and keys differ in length")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def groups(self) -> np.ndarray:
        return np.array([k.subject for k in self.keys], dtype=object)

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(
            [self.keys[i] for i in idx], self.X[idx], self.feature_names, self.labels[idx], self.class_names
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*META_COLUMNS, *self.feature_names])
        for key, row, label in zip(self.keys, self.X, self.labels):
            meta = [key.subject, key.condition, key.load, key.correctness or "", key.trial, "" if label < 0 else int(label)]
            w.writerow(meta + ["" if math.isnan(v) else repr(float(v)) for v in row])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        from ..io import atomic_write_text

        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str, class_names: Sequence[str] = ()) -> "FeatureMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0][: len(META_COLUMNS)]) != META_COLUMNS:
            raise ValueError("feature matrix header is malformed")
        names = tuple(rows[0][len(META_COLUMNS) :])
        keys, labels, X = [], [], []
        for r in rows[1:]:
            keys.append(RowKey(r[0], r[1], int(r[2]), r[3] or None, int(r[4])))
            labels.append(int(r[5]) if r[5] != "" else -1)
            X.append([float(v) if v != "" else math.nan for v in r[len(META_COLUMNS) :]])
        X = np.array(X, dtype=float).reshape(len(keys), len(names))
        return cls(keys, X, names, np.array(labels, dtype=np.int64), tuple(class_names))

    @classmethod
    def read_csv(cls, path, class_names: Sequence[str] = ()) -> "FeatureMatrix":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_csv(fh.read(), class_names)


def _channel_block(epoch: Epoch | None, mode: FeatureMode, raw_points: int) -> np.ndarray:
    width = N_FEATURES if mode is FeatureMode.CATCH22 else raw_points
    if epoch is None:
        return np.full(width, np.nan)
    try:
        if mode is FeatureMode.CATCH22:
            return extract_catch22(epoch)
        return raw_representation(epoch, raw_points)
    except TooFewSamplesError:
        return np.full(width, np.nan)


def _block_names(mode: FeatureMode, raw_points: int) -> tuple[str, ...]:
    if mode is FeatureMode.CATCH22:
        return c22.FEATURE_NAMES
    return tuple(f"raw_{i:04d}" for i in range(raw_points))


def build_feature_matrix(
    store: EpochStore,
    mode: FeatureMode | str = FeatureMode.CATCH22,
    merge: MergeMode | str = MergeMode.CONCATENATE,
    raw_points: int = 256,
    threads: int = 1,
    channels: Sequence[str] | None = None,
) -> tuple[FeatureMatrix, dict]:
    """Compute one row per trial; rows with any missing feature are excluded.

    Channels of a trial are combined in sorted channel order. With exactly
    two channels they are treated as left/right eyes; a channel absent from
    the store (dropped by cleaning) contributes an all-missing block.
    """
    mode, merge = FeatureMode(mode), MergeMode(merge)
    epochs = list(store.sorted())
    chans = sorted({e.channel_id for e in epochs}) if channels is None else list(channels)
    names = _block_names(mode, raw_points)

    workers = max(1, int(threads))
    if workers == 1:
        blocks = [_channel_block(e, mode, raw_points) for e in epochs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda e: _channel_block(e, mode, raw_points), epochs))

    by_row: dict[RowKey, dict[str, np.ndarray]] = {}
    for e, block in zip(epochs, blocks):
        by_row.setdefault(RowKey.of(e), {})[e.channel_id] = block
    missing_block = np.full(len(names), np.nan)

    keys, rows, excluded = [], [], []
    for key in sorted(by_row, key=RowKey.sort_key):
        per = by_row[key]
        vecs = [FeatureVector(key, per.get(c, missing_block), names) for c in chans]
        if len(vecs) == 2:
            vec = merge_eyes(vecs[0], vecs[1], merge)
        elif len(vecs) == 1:
            vec = vecs[0]
        elif merge is MergeMode.CONCATENATE:
            vec = FeatureVector(
                key,
                np.concatenate([v.values for v in vecs]),
                tuple(f"{c}_{n}" for c in chans for n in names),
            )
        else:
            vec = vecs[0]
            for other in vecs[1:]:
                vec = merge_eyes(vec, other, MergeMode.AVERAGE)
        if vec.complete:
            keys.append(key)
            rows.append(vec.values)
        else:
            excluded.append(key)
    out_names = _merged_names(chans, names, merge)
    info = {
        "rows": len(keys),
        "excluded": len(excluded),
        "excluded_keys": [[k.subject, k.condition, k.load, k.trial] for k in excluded],
        "channels": chans,
        "mode": mode.value,
        "merge": merge.value,
    }
    X = np.array(rows, dtype=float).reshape(len(keys), len(out_names))
    return FeatureMatrix(keys, X, tuple(out_names)), info


def _merged_names(chans, names, merge: MergeMode) -> tuple[str, ...]:
    if merge is MergeMode.AVERAGE or len(chans) == 1:
        return tuple(names)
    if len(chans) == 2:
        return tuple(f"left_{n}" for n in names) + tuple(f"right_{n}" for n in names)
    return tuple(f"{c}_{n}" for c in chans for n in names)


def concat_rows(matrices: Iterable[FeatureMatrix]) -> FeatureMatrix:
    matrices = list(matrices)
    names = matrices[0].feature_names
    for m in matrices[1:]:
        if m.feature_names != names:
            raise KeyMismatchError("feature matrices have different columns")
    keys = [k for m in matrices for k in m.keys]
    X = np.vstack([m.X for m in matrices]) if keys else np.zeros((0, len(names)))
    labels = np.concatenate([m.labels for m in matrices])
    return FeatureMatrix(keys, X, names, labels, matrices[0].class_names)
