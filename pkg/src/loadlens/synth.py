"""Deterministic synthetic dataset in the on-disk ingest layout.

Pupil traces carry a task-evoked dilation whose amplitude and duration grow
with digit load and are larger for memory trials. The EEG channel mixes
broadband noise with theta and alpha rhythms whose power shifts with load.
These are synthetic effect sizes chosen so classifiers have signal to find;
they are not estimates of any real recording.

Artifacts are injected per trial at configurable rates: low-confidence
pupil epochs, blink bursts, EEG spikes above the amplitude limit and EEG
flatlines.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .epoching import Modality, window_for
from .ingest import (
    Condition,
    Correctness,
    EventRecord,
    Load,
    ParticipantRecord,
    SampleSeries,
    code_map_to_json,
    load_code_map,
    subject_files,
    write_eeg_interchange,
    write_events,
    write_participants,
    write_pupil_stream,
)


@dataclass
class SyntheticSpec:
    n_subjects: int = 6
    trials_per_cell: int = 6
    pupil_rate_hz: float = 120.0
    eeg_rate_hz: float = 1000.0
    pupil_noise: float = 0.04
    eeg_noise_uv: float = 6.0
    dilation_memory: float = 0.25
    dilation_justlisten: float = 0.08
    dilation_per_digit: float = 0.02
    correct_prob: dict = field(default_factory=lambda: {5: 0.9, 9: 0.7, 13: 0.5})
    low_confidence_rate: float = 0.0
    blink_rate_per_s: float = 0.0
    eeg_spike_rate: float = 0.0
    eeg_flatline_rate: float = 0.0
    write_eeg: bool = True
    write_pupil: bool = True
    seed: int = 42

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correct_prob"] = {str(k): v for k, v in self.correct_prob.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "correct_prob" in d:
            d["correct_prob"] = {int(k): float(v) for k, v in d["correct_prob"].items()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SyntheticTrial:
    event: EventRecord
    low_confidence: bool = False
    spike: bool = False
    flatline: bool = False


def _inverse_code_map() -> dict[tuple, int]:
    return {v: k for k, v in load_code_map().items()}


def _schedule(spec: SyntheticSpec, rng: np.random.Generator, codes: dict) -> list[SyntheticTrial]:
    cells = [(c, l) for c in Condition for l in Load] * spec.trials_per_cell
    order = rng.permutation(len(cells))
    trials, t = [], 5.0
    for i in order:
        cond, load = cells[i]
        corr = None
        if cond is Condition.MEMORY:
            corr = Correctness.CORRECT if rng.random() < spec.correct_prob[int(load)] else Correctness.INCORRECT
        ev = EventRecord(round(t, 3), codes[(cond, load, corr)], cond, load, corr)
        trials.append(
            SyntheticTrial(
                ev,
                low_confidence=bool(rng.random() < spec.low_confidence_rate),
                spike=bool(rng.random() < spec.eeg_spike_rate),
                flatline=bool(rng.random() < spec.eeg_flatline_rate),
            )
        )
        post = max(window_for(Modality.PUPIL, load).post_s, window_for(Modality.EEG, load).post_s)
        # gap longer than the pre-onset window so windows never overlap
        t += post + 3.5 + float(rng.uniform(0.0, 1.5))
    return trials


def _response(t: np.ndarray, amp: float, sustain: float) -> np.ndarray:
    """Rise over ~1 s, hold while digits play, then relax."""
    out = np.zeros_like(t)
    on = t >= 0
    rise = 1.0 - np.exp(-t[on] / 0.8)
    decay = np.where(t[on] > sustain, np.exp(-(t[on] - sustain) / 2.5), 1.0)
    out[on] = amp * rise * decay
    return out


def _dilation(spec: SyntheticSpec, ev: EventRecord) -> tuple[float, float]:
    base = spec.dilation_memory if ev.condition is Condition.MEMORY else spec.dilation_justlisten
    amp = base + spec.dilation_per_digit * int(ev.load) * (1.0 if ev.condition is Condition.MEMORY else 0.3)
    if ev.correctness is Correctness.INCORRECT:
        amp *= 0.8
    return amp, float(int(ev.load))


def _pupil_streams(spec, rng, trials, duration) -> list[SampleSeries]:
    rate = spec.pupil_rate_hz
    n = int(duration * rate)
    t = np.arange(n) / rate
    evoked = np.zeros(n)
    for tr in trials:
        amp, sustain = _dilation(spec, tr.event)
        lo = int(tr.event.onset_s * rate)
        hi = min(n, lo + int(40 * rate))
        evoked[lo:hi] += _response(t[lo:hi] - tr.event.onset_s, amp, sustain)
    drift = np.cumsum(rng.normal(0, 0.002, n))
    drift -= np.linspace(drift[0], drift[-1], n)
    out = []
    for eye in ("left", "right"):
        diam = 3.5 + drift + evoked + rng.normal(0, spec.pupil_noise, n)
        conf = rng.uniform(0.85, 1.0, n)
        for tr in trials:
            if tr.low_confidence:
                w = window_for(Modality.PUPIL, tr.event.load)
                a = int(round((tr.event.onset_s - w.pre_s) * rate))
                b = int(round((tr.event.onset_s + w.post_s) * rate))
                conf[a:b] = rng.uniform(0.55, 0.85, b - a)
        if spec.blink_rate_per_s > 0:
            for s in np.flatnonzero(rng.random(n) < spec.blink_rate_per_s / rate):
                e = min(n, s + int(0.15 * rate))
                conf[s:e] = rng.uniform(0.0, 0.4, e - s)
                diam[s:e] *= 0.5
        out.append(SampleSeries(f"pupil_{eye}", rate, 0.0, diam, conf, timestamps=t))
    return out


def _eeg_signal(spec, rng, trials, duration) -> np.ndarray:
    rate = spec.eeg_rate_hz
    n = int(duration * rate)
    t = np.arange(n) / rate
    white = rng.normal(0, spec.eeg_noise_uv, n)
    # light low-pass for a 1/f-like tilt
    k = max(1, int(rate / 250))
    sig = np.convolve(white, np.ones(k) / np.sqrt(k), mode="same")
    theta_amp = np.full(n, 3.0)
    alpha_amp = np.full(n, 6.0)
    for tr in trials:
        ev = tr.event
        w = window_for(Modality.EEG, ev.load)
        lo = int(ev.onset_s * rate)
        hi = min(n, int((ev.onset_s + w.post_s) * rate))
        if ev.condition is Condition.MEMORY:
            theta_amp[lo:hi] += 0.5 * int(ev.load)
            alpha_amp[lo:hi] -= 0.3 * int(ev.load)
        else:
            alpha_amp[lo:hi] += 1.0
    phase = rng.uniform(0, 2 * np.pi, 2)
    sig += theta_amp * np.sin(2 * np.pi * 6.0 * t + phase[0])
    sig += np.maximum(alpha_amp, 0.5) * np.sin(2 * np.pi * 10.0 * t + phase[1])
    for tr in trials:
        w = window_for(Modality.EEG, tr.event.load)
        a = int(round((tr.event.onset_s - w.pre_s) * rate))
        b = int(round((tr.event.onset_s + w.post_s) * rate))
        if tr.flatline:
            sig[a:b] = 3.2
        elif tr.spike:
            c = int(rng.integers(a, b - int(0.05 * rate)))
            sig[c : c + int(0.05 * rate)] += 300.0
    return sig


def subject_ids(n: int) -> list[str]:
    return [f"sub-{i + 1:02d}" for i in range(n)]


def generate(spec: SyntheticSpec, root) -> dict:
    """Write the dataset under ``root`` and return a summary of what was injected."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    codes = _inverse_code_map()
    participants = []
    summary = {"spec": spec.to_dict(), "subjects": {}}
    for s, sid in enumerate(subject_ids(spec.n_subjects)):
        rng = np.random.default_rng([spec.seed, s])
        participants.append(
            ParticipantRecord(
                sid,
                int(rng.integers(19, 40)),
                str(rng.choice(["F", "M"])),
                "right" if rng.random() < 0.9 else "left",
                "right" if rng.random() < 0.7 else "left",
            )
        )
        trials = _schedule(spec, rng, codes)
        last = trials[-1].event
        duration = max(tr.event.onset_s for tr in trials) + 30.0
        files = subject_files(root, sid)
        files.events.parent.mkdir(parents=True, exist_ok=True)
        write_events([tr.event for tr in trials], files.events)
        if spec.write_pupil:
            files.pupil["left"].parent.mkdir(parents=True, exist_ok=True)
            for series in _pupil_streams(spec, rng, trials, duration):
                write_pupil_stream(series, files.pupil[series.channel_id.split("_")[1]])
        if spec.write_eeg:
            files.eeg_header.parent.mkdir(parents=True, exist_ok=True)
            sig = _eeg_signal(spec, rng, trials, duration)
            write_eeg_interchange(["Fz"], sig[:, None], spec.eeg_rate_hz, files.eeg_header, files.eeg_data)
        summary["subjects"][sid] = {
            "n_events": len(trials),
            "last_onset_s": last.onset_s,
            "low_confidence": sum(tr.low_confidence for tr in trials),
            "spikes": sum(tr.spike and not tr.flatline for tr in trials),
            "flatlines": sum(tr.flatline for tr in trials),
        }
    write_participants(participants, root / "participants.tsv")
    (root / "code_map.json").write_text(json.dumps(code_map_to_json(load_code_map()), indent=1) + "\n")
    (root / "synthetic_spec.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary
