"""Event-aligned epoch extraction and the epoch store."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import MissingArtifactError, OnsetOutOfRangeError
from .ingest import Condition, Correctness, EventRecord, Load, SampleSeries

log = logging.getLogger(__name__)


class Modality(str, enum.Enum):
    PUPIL = "pupil"
    EEG = "eeg"


NOMINAL_RATE_HZ = {Modality.PUPIL: 120.0, Modality.EEG: 1000.0}


@dataclass(frozen=True)
class EpochWindow:
    pre_s: float
    post_s: float

    def __post_init__(self):
        if self.pre_s < 0 or not self.post_s > 0:
            raise ValueError("need pre_s >= 0 and post_s > 0")

    def n_samples(self, rate_hz: float) -> int:
        return int(round((self.pre_s + self.post_s) * rate_hz))

    def pre_samples(self, rate_hz: float) -> int:
        return int(round(self.pre_s * rate_hz))


DEFAULT_WINDOWS: dict[Modality, dict[Load, EpochWindow]] = {
    Modality.PUPIL: {
        Load.FIVE: EpochWindow(3.0, 10.0),
        Load.NINE: EpochWindow(3.0, 18.0),
        Load.THIRTEEN: EpochWindow(3.0, 26.0),
    },
    Modality.EEG: {
        Load.FIVE: EpochWindow(3.0, 5.0),
        Load.NINE: EpochWindow(3.0, 15.0),
        Load.THIRTEEN: EpochWindow(3.0, 23.0),
    },
}


def window_for(modality: Modality | str, load: Load | int, windows=None) -> EpochWindow:
    table = DEFAULT_WINDOWS if windows is None else windows
    return table[Modality(modality)][Load(load)]


def default_target_len(modality: Modality | str, rate_hz: float, windows=None) -> int:
    modality = Modality(modality)
    return max(window_for(modality, load, windows).n_samples(rate_hz) for load in Load)


class EpochKey(NamedTuple):
    subject_id: str
    condition: str
    load: int
    trial: int
    channel_id: str


@dataclass
class Epoch:
    """One channel's fixed-length, event-aligned segment.

    ``missing`` flags every entry that holds no usable sample; ``padding``
    flags the subset that lies outside the window or the recorded stream.
    Values at missing positions are NaN and must never be read as data.
    """

    subject_id: str
    condition: Condition
    load: Load
    correctness: Correctness | None
    trial: int
    channel_id: str
    onset_s: float
    values: np.ndarray
    quality: np.ndarray
    missing: np.ndarray
    padding: np.ndarray
    window_len: int
    valid_fraction: float | None = None

    @property
    def key(self) -> EpochKey:
        return EpochKey(self.subject_id, self.condition.value, int(self.load), self.trial, self.channel_id)

    def valid_values(self) -> np.ndarray:
        return self.values[~self.missing]


@dataclass
class EpochStore:
    modality: Modality
    target_len: int
    sampling_rate_hz: float
    epochs: dict[EpochKey, Epoch] = field(default_factory=dict)

    def add(self, epoch: Epoch) -> None:
        if len(epoch.values) != self.target_len:
            raise ValueError(f"epoch length {len(epoch.values)} != target_len {self.target_len}")
        if epoch.key in self.epochs:
            raise ValueError(f"duplicate epoch key {epoch.key}")
        self.epochs[epoch.key] = epoch

    def sorted(self) -> "EpochStore":
        out = EpochStore(self.modality, self.target_len, self.sampling_rate_hz)
        for key in sorted(self.epochs):
            out.epochs[key] = self.epochs[key]
        return out

    def subjects(self) -> list[str]:
        return sorted({k.subject_id for k in self.epochs})

    def __len__(self) -> int:
        return len(self.epochs)

    def __iter__(self):
        return iter(self.epochs.values())

    def merge(self, other: "EpochStore") -> "EpochStore":
        if (other.modality, other.target_len) != (self.modality, self.target_len):
            raise ValueError("cannot merge stores of different modality or length")
        out = EpochStore(self.modality, self.target_len, self.sampling_rate_hz, dict(self.epochs))
        for e in other:
            out.add(e)
        return out.sorted()


def align_event(series: SampleSeries, onset_s: float) -> int:
    """Index of the sample nearest to ``onset_s``; ties go to the earlier index."""
    t = series.times()
    period = 1.0 / series.sampling_rate_hz
    end = t[0] + len(t) * period if len(t) else 0.0
    if len(t) == 0 or onset_s < t[0] - period or onset_s > end + period:
        raise OnsetOutOfRangeError(
            f"onset {onset_s:.6f}s outside [{t[0] if len(t) else 0:.6f}, {t[-1] if len(t) else 0:.6f}]s "
            f"of {series.channel_id}"
        )
    right = int(np.searchsorted(t, onset_s, side="left"))
    if right == 0:
        return 0
    if right >= len(t):
        return len(t) - 1
    d_left = onset_s - t[right - 1]
    d_right = t[right] - onset_s
    # Equal distances up to rounding count as a tie.
    if d_left <= d_right + 1e-9 * period:
        return right - 1
    return right


def _cut_one(series: SampleSeries, center: int, window: EpochWindow, target_len: int):
    rate = series.sampling_rate_hz
    n = len(series)
    length = window.n_samples(rate)
    start = center - window.pre_samples(rate)
    values = np.full(target_len, np.nan)
    quality = np.zeros(target_len)
    padding = np.ones(target_len, dtype=bool)
    lo, hi = max(start, 0), min(start + length, n)
    if hi > lo:
        dst = slice(lo - start, hi - start)
        values[dst] = series.values[lo:hi]
        quality[dst] = series.quality[lo:hi]
        padding[dst] = False
    missing = padding | np.isnan(values)
    return values, quality, missing, padding, length


def cut_epochs(
    series: SampleSeries | Sequence[SampleSeries],
    events: Iterable[EventRecord],
    subject_id: str,
    modality: Modality | str,
    target_len: int | None = None,
    windows: Mapping | None = None,
) -> EpochStore:
    """Cut one epoch per (event, channel) into a new store.

    Windows are half-open ``[onset - pre, onset + post)``; anything past the
    window or outside the stream is flagged as padding. Trials are numbered
    per (condition, load) in onset order, so the result does not depend on
    the order of ``events``. Events that cannot be aligned are logged and
    skipped.
    """
    modality = Modality(modality)
    channels = [series] if isinstance(series, SampleSeries) else list(series)
    rate = channels[0].sampling_rate_hz
    if target_len is None:
        target_len = default_target_len(modality, rate, windows)
    needed = max(window_for(modality, load, windows).n_samples(rate) for load in Load)
    if target_len < needed:
        raise ValueError(f"target_len {target_len} shorter than longest window ({needed})")

    store = EpochStore(modality, target_len, rate)
    ordered = sorted(events, key=lambda e: (e.onset_s, e.code))
    counters: dict[tuple, int] = {}
    for ev in ordered:
        cell = (ev.condition, ev.load)
        trial = counters.get(cell, 0)
        counters[cell] = trial + 1
        window = window_for(modality, ev.load, windows)
        for ch in channels:
            try:
                center = align_event(ch, ev.onset_s)
            except OnsetOutOfRangeError as exc:
                log.warning("%s: skipping event: %s", subject_id, exc)
                continue
            values, quality, missing, padding, length = _cut_one(ch, center, window, target_len)
            store.add(
                Epoch(
                    subject_id=subject_id,
                    condition=ev.condition,
                    load=ev.load,
                    correctness=ev.correctness,
                    trial=trial,
                    channel_id=ch.channel_id,
                    onset_s=float(ev.onset_s),
                    values=values,
                    quality=quality,
                    missing=missing,
                    padding=padding,
                    window_len=length,
                )
            )
    return store.sorted()


# Persistence -------------------------------------------------------------------------------

_FILES = ("manifest.json", "values.f32", "quality.f32", "missing.bits", "padding.bits")


def save_store(store: EpochStore, directory) -> None:
    """Write a store as a JSON manifest, float32 matrices and bit masks."""
    from .io import atomic_write_bytes, atomic_write_text

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    store = store.sorted()
    rows = []
    n = len(store)
    values = np.zeros((n, store.target_len), dtype="<f4")
    quality = np.zeros((n, store.target_len), dtype="<f4")
    missing = np.zeros((n, store.target_len), dtype=bool)
    padding = np.zeros((n, store.target_len), dtype=bool)
    for i, e in enumerate(store):
        values[i] = np.where(e.missing, 0.0, e.values)
        quality[i] = e.quality
        missing[i] = e.missing
        padding[i] = e.padding
        rows.append(
            {
                "subject_id": e.subject_id,
                "condition": e.condition.value,
                "load": int(e.load),
                "correctness": e.correctness.value if e.correctness else None,
                "trial": e.trial,
                "channel_id": e.channel_id,
                "onset_s": e.onset_s,
                "window_len": e.window_len,
                "valid_fraction": e.valid_fraction,
            }
        )
    manifest = {
        "format": "loadlens-epochs/1",
        "modality": store.modality.value,
        "target_len": store.target_len,
        "sampling_rate_hz": store.sampling_rate_hz,
        "n_epochs": n,
        "epochs": rows,
    }
    atomic_write_bytes(directory / "values.f32", values.tobytes())
    atomic_write_bytes(directory / "quality.f32", quality.tobytes())
    atomic_write_bytes(directory / "missing.bits", np.packbits(missing, axis=None).tobytes())
    atomic_write_bytes(directory / "padding.bits", np.packbits(padding, axis=None).tobytes())
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=1) + "\n")


def load_store(directory) -> EpochStore:
    directory = Path(directory)
    for name in _FILES:
        if not (directory / name).exists():
            raise MissingArtifactError(f"epoch store incomplete: {directory / name} missing")
    manifest = json.loads((directory / "manifest.json").read_text())
    n, t = manifest["n_epochs"], manifest["target_len"]
    values = np.fromfile(directory / "values.f32", dtype="<f4").reshape(n, t).astype(float)
    quality = np.fromfile(directory / "quality.f32", dtype="<f4").reshape(n, t).astype(float)

    def bits(name):
        raw = np.frombuffer((directory / name).read_bytes(), dtype=np.uint8)
        return np.unpackbits(raw, count=n * t).astype(bool).reshape(n, t)

    missing, padding = bits("missing.bits"), bits("padding.bits")
    store = EpochStore(Modality(manifest["modality"]), t, manifest["sampling_rate_hz"])
    for i, row in enumerate(manifest["epochs"]):
        v = values[i]
        v[missing[i]] = np.nan
        store.add(
            Epoch(
                subject_id=row["subject_id"],
                condition=Condition(row["condition"]),
                load=Load(row["load"]),
                correctness=Correctness(row["correctness"]) if row["correctness"] else None,
                trial=row["trial"],
                channel_id=row["channel_id"],
                onset_s=row["onset_s"],
                values=v,
                quality=quality[i],
                missing=missing[i],
                padding=padding[i],
                window_len=row["window_len"],
                valid_fraction=row["valid_fraction"],
            )
        )
    return store


def with_epochs(store: EpochStore, epochs: Iterable[Epoch]) -> EpochStore:
    out = EpochStore(store.modality, store.target_len, store.sampling_rate_hz)
    for e in epochs:
        out.add(e)
    return out.sorted()


__all__ = [
    "DEFAULT_WINDOWS",
    "Epoch",
    "EpochKey",
    "EpochStore",
    "EpochWindow",
    "Modality",
    "align_event",
    "cut_epochs",
    "default_target_len",
    "load_store",
    "save_store",
    "window_for",
    "with_epochs",
]
