"""Quality gates for pupil and EEG epochs, with an audit trail of every drop."""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .epoching import Epoch, EpochStore, Modality, with_epochs
from .errors import UnknownSubjectError
from .ingest import Condition

log = logging.getLogger(__name__)


class DropReason(str, enum.Enum):
    LOW_CONFIDENCE = "LowConfidence"
    HIGH_AMPLITUDE = "HighAmplitude"
    FLATLINE = "Flatline"
    MISSING_DATA = "MissingData"
    MISSING_FILE = "MissingFile"
    NO_EPOCHS = "NoEpochs"


EPOCH_REASONS = (
    DropReason.LOW_CONFIDENCE,
    DropReason.HIGH_AMPLITUDE,
    DropReason.FLATLINE,
    DropReason.MISSING_DATA,
)


@dataclass(frozen=True)
class Drop:
    reason: DropReason
    detail: str = ""


@dataclass(frozen=True)
class CleaningPolicy:
    pupil_sample_conf_min: float = 0.6
    pupil_epoch_conf_min: float = 0.8
    eeg_ptp_max_uv: float = 200.0
    eeg_flat_var_min_uv2: float = 0.01
    reject_on_missing_data: bool = True

    def __post_init__(self):
        for name in ("pupil_sample_conf_min", "pupil_epoch_conf_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.eeg_ptp_max_uv > 0:
            raise ValueError("eeg_ptp_max_uv must be positive")
        if self.eeg_flat_var_min_uv2 < 0:
            raise ValueError("eeg_flat_var_min_uv2 must be non-negative")


def _valid_fraction(missing: np.ndarray, window_len: int) -> float:
    return float(np.count_nonzero(~missing[:window_len])) / window_len


def clean_pupil_epoch(epoch: Epoch, policy: CleaningPolicy) -> Epoch | Drop:
    """Mask low-confidence samples, or drop the epoch if its mean confidence is low.

    The epoch mean is taken over the samples that were present before masking,
    so an epoch cannot pass merely because its worst samples were removed.
    """
    present = ~epoch.missing
    if not present.any():
        return Drop(DropReason.MISSING_DATA, "no samples")
    # fsum keeps a constant-confidence epoch exactly at its value on the threshold
    q = epoch.quality[present]
    mean_conf = math.fsum(q.tolist()) / q.size
    if mean_conf < policy.pupil_epoch_conf_min:
        return Drop(DropReason.LOW_CONFIDENCE, f"mean confidence {mean_conf:.4f}")
    low = present & (epoch.quality < policy.pupil_sample_conf_min)
    missing = epoch.missing | low
    values = epoch.values.copy()
    values[missing] = np.nan
    return replace(
        epoch,
        values=values,
        missing=missing,
        valid_fraction=_valid_fraction(missing, epoch.window_len),
    )


def clean_eeg_epoch(epoch: Epoch, policy: CleaningPolicy) -> Epoch | Drop:
    """Reject on amplitude, then flatness, then missing samples; first rule wins."""
    in_window = ~epoch.padding
    data = epoch.values[in_window & ~epoch.missing]
    if data.size == 0:
        return Drop(DropReason.MISSING_DATA, "no samples")
    ptp = float(data.max() - data.min())
    if ptp > policy.eeg_ptp_max_uv:
        return Drop(DropReason.HIGH_AMPLITUDE, f"ptp {ptp:.3f} uV")
    var = float(np.var(data))
    if var < policy.eeg_flat_var_min_uv2:
        return Drop(DropReason.FLATLINE, f"variance {var:.6g} uV^2")
    if policy.reject_on_missing_data and bool(np.any(epoch.missing & in_window)):
        return Drop(DropReason.MISSING_DATA, "missing samples inside the window")
    return replace(epoch, valid_fraction=_valid_fraction(epoch.missing, epoch.window_len))


def clean_epoch(epoch: Epoch, modality: Modality, policy: CleaningPolicy) -> Epoch | Drop:
    if Modality(modality) is Modality.PUPIL:
        return clean_pupil_epoch(epoch, policy)
    return clean_eeg_epoch(epoch, policy)


# Report --------------------------------------------------------------------------------------


@dataclass
class StratumCounts:
    kept: int = 0
    dropped: int = 0
    reasons: Counter = field(default_factory=Counter)


@dataclass(frozen=True)
class SubjectDrop:
    subject_id: str
    cause: DropReason
    n_epochs_removed: int
    detail: str = ""


@dataclass
class CleaningReport:
    strata: dict[tuple[str, str, int], StratumCounts] = field(default_factory=dict)
    subjects: list[SubjectDrop] = field(default_factory=list)
    drops: list[tuple] = field(default_factory=list)

    def record(self, epoch: Epoch, outcome: Epoch | Drop) -> None:
        key = (epoch.subject_id, epoch.condition.value, int(epoch.load))
        counts = self.strata.setdefault(key, StratumCounts())
        if isinstance(outcome, Drop):
            counts.dropped += 1
            counts.reasons[outcome.reason] += 1
            self.drops.append((epoch.key, outcome.reason.value, outcome.detail))
        else:
            counts.kept += 1

    @property
    def total_kept(self) -> int:
        return sum(c.kept for c in self.strata.values())

    @property
    def total_dropped(self) -> int:
        return sum(c.dropped for c in self.strata.values())

    def reason_totals(self) -> dict[str, int]:
        out = {r.value: 0 for r in EPOCH_REASONS}
        for c in self.strata.values():
            for r, n in c.reasons.items():
                out[r.value] += n
        return out

    def to_rows(self) -> list[list]:
        rows = []
        for key in sorted(self.strata):
            c = self.strata[key]
            rows.append([*key, c.kept, c.dropped, *(c.reasons.get(r, 0) for r in EPOCH_REASONS)])
        return rows

    def write_tsv(self, path) -> None:
        from .io import atomic_write_text

        header = ["subject", "condition", "load", "kept", "dropped", *(r.value for r in EPOCH_REASONS)]
        lines = ["\t".join(header)]
        lines += ["\t".join(str(v) for v in row) for row in self.to_rows()]
        atomic_write_text(path, "\n".join(lines) + "\n")

    def write_subjects_tsv(self, path) -> None:
        from .io import atomic_write_text

        lines = ["subject\tcause\tepochs_removed\tdetail"]
        for s in self.subjects:
            lines.append(f"{s.subject_id}\t{s.cause.value}\t{s.n_epochs_removed}\t{s.detail}")
        atomic_write_text(path, "\n".join(lines) + "\n")

    def summary(self) -> dict:
        return {
            "kept": self.total_kept,
            "dropped": self.total_dropped,
            "reasons": self.reason_totals(),
            "subjects_removed": [asdict(s) | {"cause": s.cause.value} for s in self.subjects],
        }


def clean_store(
    store: EpochStore, policy: CleaningPolicy, report: CleaningReport | None = None
) -> tuple[EpochStore, CleaningReport]:
    report = CleaningReport() if report is None else report
    kept = []
    for epoch in store.sorted():
        outcome = clean_epoch(epoch, store.modality, policy)
        report.record(epoch, outcome)
        if isinstance(outcome, Epoch):
            kept.append(outcome)
    return with_epochs(store, kept), report


def drop_subject_if_invalid(
    store: EpochStore,
    subject_id: str,
    missing_files: Sequence[str] = (),
    required_conditions: Iterable[Condition] = tuple(Condition),
    known_subjects: Iterable[str] | None = None,
    report: CleaningReport | None = None,
) -> tuple[EpochStore, SubjectDrop | None]:
    """Remove every epoch of ``subject_id`` if files are missing or a condition is empty.

    Returns the (possibly unchanged) store and the report entry, or ``None``
    when the subject passes.
    """
    known = set(store.subjects()) if known_subjects is None else set(known_subjects)
    if subject_id not in known:
        raise UnknownSubjectError(f"unknown subject {subject_id!r}")
    mine = [e for e in store if e.subject_id == subject_id]
    entry = None
    if missing_files:
        entry = SubjectDrop(subject_id, DropReason.MISSING_FILE, len(mine), ",".join(missing_files))
    else:
        present = {e.condition for e in mine}
        empty = [c.value for c in required_conditions if Condition(c) not in present]
        if empty:
            entry = SubjectDrop(subject_id, DropReason.NO_EPOCHS, len(mine), ",".join(empty))
    if entry is None:
        return store, None
    log.info("removing subject %s: %s (%s)", subject_id, entry.cause.value, entry.detail)
    if report is not None:
        report.subjects.append(entry)
    return with_epochs(store, (e for e in store if e.subject_id != subject_id)), entry


__all__ = [
    "CleaningPolicy",
    "CleaningReport",
    "Drop",
    "DropReason",
    "SubjectDrop",
    "clean_eeg_epoch",
    "clean_epoch",
    "clean_pupil_epoch",
    "clean_store",
    "drop_subject_if_invalid",
]
