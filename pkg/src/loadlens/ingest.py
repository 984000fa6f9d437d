"""Readers and writers for the on-disk dataset.

Tables are UTF-8 tab-separated with ``n/a`` for missing cells. EEG arrives in a
small interchange format: a JSON header plus a raw little-endian float32
matrix (one row per sample, one column per channel, microvolts).
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateSubjectError,
    EmptyStreamError,
    MalformedHeaderError,
    MalformedRowError,
    MissingFileError,
    NegativeOnsetError,
    NonMonotonicTimestampsError,
    SizeMismatchError,
    UnknownChannelError,
    UnsupportedFormatError,
)

log = logging.getLogger(__name__)

MISSING = "n/a"
SUBJECT_COLUMNS = ("participant_id", "subject_id", "subject")


class Condition(str, enum.Enum):
    JUST_LISTEN = "justlisten"
    MEMORY = "memory"


class Load(enum.IntEnum):
    FIVE = 5
    NINE = 9
    THIRTEEN = 13


class Correctness(str, enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


class Eye(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class ParticipantRecord:
    subject_id: str
    age: int | None = None
    gender: str | None = None
    handedness: str | None = None
    eye_dominance: str | None = None


@dataclass(frozen=True)
class EventRecord:
    onset_s: float
    code: int
    condition: Condition
    load: Load
    correctness: Correctness | None = None

    def __post_init__(self):
        if self.onset_s < 0:
            raise ValueError("onset_s must be >= 0")
        if (self.correctness is not None) != (self.condition is Condition.MEMORY):
            raise ValueError("correctness is present iff condition is memory")


@dataclass(frozen=True)
class UnmappedEvent:
    line: int
    onset_s: float
    code: int


@dataclass
class ParsedEvents:
    events: list[EventRecord]
    unmapped: list[UnmappedEvent] = field(default_factory=list)


@dataclass
class SampleSeries:
    """One channel of samples with a per-sample quality in [0, 1].

    ``timestamps`` holds the measured sample times when they are known (pupil
    streams drop samples); otherwise times are implied by ``t0_s + i / rate``.
    """

    channel_id: str
    sampling_rate_hz: float
    t0_s: float
    values: np.ndarray
    quality: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.quality = np.asarray(self.quality, dtype=float)
        if self.values.shape != self.quality.shape:
            raise ValueError("values and quality must have equal length")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling_rate_hz must be positive")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=float)
            if self.timestamps.shape != self.values.shape:
                raise ValueError("timestamps must match values")

    def __len__(self) -> int:
        return len(self.values)

    def times(self) -> np.ndarray:
        if self.timestamps is not None:
            return self.timestamps
        return self.t0_s + np.arange(len(self.values)) / self.sampling_rate_hz


# Code map ----------------------------------------------------------------------------

CodeMap = Mapping[int, tuple[Condition, Load, "Correctness | None"]]


def code_map_from_json(obj: Mapping[str, Mapping]) -> dict[int, tuple]:
    out = {}
    for code, entry in obj.items():
        correctness = entry.get("correctness")
        out[int(code)] = (
            Condition(entry["condition"]),
            Load(int(entry["load"])),
            Correctness(correctness) if correctness else None,
        )
    return out


def load_code_map(path: str | os.PathLike | None = None) -> dict[int, tuple]:
    """Load an event code map; ``None`` gives the bundled default map."""
    if path is None:
        text = resources.files("loadlens.data").joinpath("default_code_map.json").read_text()
    else:
        path = Path(path)
        if not path.exists():
            raise MissingFileError("code map not found", path)
        text = path.read_text()
    return code_map_from_json(json.loads(text))


def code_map_to_json(code_map: CodeMap) -> dict[str, dict]:
    return {
        str(code): {
            "condition": cond.value,
            "load": int(load),
            "correctness": corr.value if corr is not None else None,
        }
        for code, (cond, load, corr) in sorted(code_map.items())
    }


# Tables ----------------------------------------------------------------------------------


def _read_table(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.exists():
        raise MissingFileError("file not found", path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise MalformedHeaderError("missing header", path, line=1)
    header = [h.strip() for h in lines[0].split("\t")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        cells += [""] * (len(header) - len(cells))
        rows.append((lineno, [c.strip() for c in cells]))
    return header, rows


def _cell(value: str) -> str | None:
    return None if value == "" or value.lower() == MISSING else value


def _fmt(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_participants(path) -> list[ParticipantRecord]:
    header, rows = _read_table(path)
    subject_col = next((header.index(c) for c in SUBJECT_COLUMNS if c in header), None)
    if subject_col is None:
        raise MalformedHeaderError("no subject-id column", path, line=1)

    def col(*names):
        return next((header.index(n) for n in names if n in header), None)

    age_col = col("age")
    gender_col = col("gender", "sex")
    hand_col = col("handedness")
    eye_col = col("eye_dominance", "dominant_eye")

    records, seen = [], set()
    for lineno, cells in rows:
        sid = _cell(cells[subject_col])
        if sid is None:
            raise MalformedRowError("empty subject id", path, line=lineno)
        if sid in seen:
            raise DuplicateSubjectError(f"duplicate subject {sid!r}", path, line=lineno)
        seen.add(sid)
        age = _cell(cells[age_col]) if age_col is not None else None
        if age is not None:
            try:
                age = int(float(age))
            except ValueError:
                raise MalformedRowError(f"non-numeric age {age!r}", path, line=lineno) from None
        records.append(
            ParticipantRecord(
                subject_id=sid,
                age=age,
                gender=_cell(cells[gender_col]) if gender_col is not None else None,
                handedness=_cell(cells[hand_col]) if hand_col is not None else None,
                eye_dominance=_cell(cells[eye_col]) if eye_col is not None else None,
            )
        )
    return records


def write_participants(records: Sequence[ParticipantRecord], path) -> None:
    _write_table(
        path,
        ["participant_id", "age", "gender", "handedness", "eye_dominance"],
        ((r.subject_id, r.age, r.gender, r.handedness, r.eye_dominance) for r in records),
    )


def parse_events(path, code_map: CodeMap) -> ParsedEvents:
    header, rows = _read_table(path)
    if "onset" not in header:
        raise MalformedHeaderError("no onset column", path, line=1)
    code_col = next((header.index(c) for c in ("code", "value") if c in header), None)
    if code_col is None:
        raise MalformedHeaderError("no code column", path, line=1)
    onset_col = header.index("onset")

    parsed = ParsedEvents(events=[])
    for lineno, cells in rows:
        try:
            onset = float(cells[onset_col])
            code = int(float(cells[code_col]))
        except ValueError:
            raise MalformedRowError("non-numeric onset or code", path, line=lineno) from None
        if not math.isfinite(onset):
            raise MalformedRowError("non-finite onset", path, line=lineno)
        if onset < 0:
            raise NegativeOnsetError(f"negative onset {onset}", path, line=lineno)
        if code not in code_map:
            parsed.unmapped.append(UnmappedEvent(lineno, onset, code))
            continue
        cond, load, corr = code_map[code]
        parsed.events.append(EventRecord(onset, code, cond, load, corr))
    return parsed


def write_events(events: Sequence[EventRecord], path) -> None:
    _write_table(path, ["onset", "duration", "code"], ((e.onset_s, 0.0, e.code) for e in events))


# Pupil streams ------------------------------------------------------------------------------


def parse_pupil_stream(path, eye: Eye | str, expected_rate_hz: float | None = None) -> SampleSeries:
    """Read one eye's pupil stream.

    The sampling rate is the median reciprocal inter-sample interval. When
    ``expected_rate_hz`` is given, a deviation above 5 % is logged as a
    warning. Missing diameters are kept as NaN with quality forced to 0.
    """
    eye = Eye(eye)
    header, rows = _read_table(path)
    ts_col = next((header.index(c) for c in ("timestamp_s", "timestamp") if c in header), None)
    if ts_col is None or "diameter" not in header or "confidence" not in header:
        raise MalformedHeaderError("expected timestamp_s, diameter, confidence columns", path, line=1)
    d_col, c_col = header.index("diameter"), header.index("confidence")
    if not rows:
        raise EmptyStreamError("pupil stream has no samples", path)

    n = len(rows)
    ts = np.empty(n)
    diam = np.empty(n)
    conf = np.empty(n)
    for i, (lineno, cells) in enumerate(rows):
        try:
            ts[i] = float(cells[ts_col])
            d = _cell(cells[d_col])
            diam[i] = float(d) if d is not None else math.nan
            c = _cell(cells[c_col])
            conf[i] = float(c) if c is not None else 0.0
        except ValueError:
            raise MalformedRowError("non-numeric cell", path, line=lineno) from None
        if i and not ts[i] > ts[i - 1]:
            raise NonMonotonicTimestampsError(
                f"timestamp {ts[i]} does not increase", path, line=lineno
            )
    conf = np.clip(conf, 0.0, 1.0)
    conf[np.isnan(diam)] = 0.0
    if n > 1:
        rate = float(np.median(1.0 / np.diff(ts)))
    elif expected_rate_hz:
        rate = float(expected_rate_hz)
    else:
        raise EmptyStreamError("cannot estimate sampling rate from one sample", path)
    if expected_rate_hz and abs(rate - expected_rate_hz) > 0.05 * expected_rate_hz:
        log.warning("%s: estimated rate %.2f Hz deviates from expected %.2f Hz", path, rate, expected_rate_hz)
    return SampleSeries(f"pupil_{eye.value}", rate, float(ts[0]), diam, conf, timestamps=ts)


def write_pupil_stream(series: SampleSeries, path) -> None:
    ts = series.times()
    _write_table(
        path,
        ["timestamp_s", "diameter", "confidence"],
        (
            (float(t), None if math.isnan(v) else float(v), float(q))
            for t, v, q in zip(ts, series.values, series.quality)
        ),
    )


# EEG interchange -----------------------------------------------------------------------------


def read_eeg_header(header_path) -> dict:
    header_path = Path(header_path)
    if not header_path.exists():
        raise MissingFileError("EEG header not found", header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"invalid JSON: {exc.msg}", header_path, line=exc.lineno) from None
    for key in ("sampling_rate_hz", "channel_names", "n_samples"):
        if key not in header:
            raise MalformedHeaderError(f"missing field {key!r}", header_path)
    if header.get("byte_order", "little") != "little" or header.get("value_format", "f32") != "f32":
        raise UnsupportedFormatError(
            f"unsupported layout {header.get('byte_order')}/{header.get('value_format')}", header_path
        )
    return header


def parse_eeg_interchange(header_path, data_path, channels: Sequence[str] | None = None) -> list[SampleSeries]:
    """Read requested channels (default: all) from an interchange pair."""
    header = read_eeg_header(header_path)
    data_path = Path(data_path)
    if not data_path.exists():
        raise MissingFileError("EEG data file not found", data_path)
    names = list(header["channel_names"])
    n_samples = int(header["n_samples"])
    expected = n_samples * len(names) * 4
    actual = data_path.stat().st_size
    if actual != expected:
        raise SizeMismatchError(
            f"expected {expected} bytes for {n_samples}x{len(names)} f32, found {actual}",
            data_path,
            offset=min(actual, expected),
        )
    wanted = names if channels is None else list(channels)
    lookup = {n.lower(): i for i, n in enumerate(names)}
    for ch in wanted:
        if ch.lower() not in lookup:
            raise UnknownChannelError(f"channel {ch!r} not in {names}", header_path)
    data = np.fromfile(data_path, dtype="<f4").reshape(n_samples, len(names))
    rate = float(header["sampling_rate_hz"])
    t0 = float(header.get("t0_s", 0.0))
    out = []
    for ch in wanted:
        col = data[:, lookup[ch.lower()]].astype(float)
        out.append(SampleSeries(f"eeg_{ch.lower()}", rate, t0, col, np.ones(n_samples)))
    return out


def write_eeg_interchange(
    channel_names: Sequence[str],
    data: np.ndarray,
    sampling_rate_hz: float,
    header_path,
    data_path,
    t0_s: float = 0.0,
) -> None:
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[1] != len(channel_names):
        raise ValueError("data must be (n_samples, n_channels)")
    header = {
        "sampling_rate_hz": float(sampling_rate_hz),
        "channel_names": list(channel_names),
        "n_samples": int(data.shape[0]),
        "byte_order": "little",
        "value_format": "f32",
        "t0_s": float(t0_s),
    }
    Path(header_path).write_text(json.dumps(header, indent=2) + "\n")
    data.tofile(data_path)


# Dataset layout ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class SubjectFiles:
    subject_id: str
    events: Path
    pupil: dict[str, Path]
    eeg_header: Path
    eeg_data: Path

    def missing(self, modality: str) -> list[str]:
        """Names of required files that do not exist for ``modality``."""
        required = {"events": self.events}
        if modality == "pupil":
            required.update({f"pupil_{eye}": p for eye, p in self.pupil.items()})
        else:
            required.update({"eeg_header": self.eeg_header, "eeg_data": self.eeg_data})
        return [name for name, p in required.items() if not p.exists()]


def subject_files(root, subject_id: str) -> SubjectFiles:
    base = Path(root) / subject_id
    return SubjectFiles(
        subject_id=subject_id,
        events=base / f"{subject_id}_events.tsv",
        pupil={e.value: base / "eyetrack" / f"{subject_id}_eye-{e.value}_pupil.tsv" for e in Eye},
        eeg_header=base / "eeg" / f"{subject_id}_eeg.json",
        eeg_data=base / "eeg" / f"{subject_id}_eeg.f32",
    )
