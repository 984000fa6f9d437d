from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadlens.epoching import (
    EpochWindow,
    Modality,
    align_event,
    cut_epochs,
    default_target_len,
    load_store,
    save_store,
    window_for,
)
from loadlens.errors import MissingArtifactError, OnsetOutOfRangeError
from loadlens.ingest import Condition, Correctness, EventRecord, Load, SampleSeries


def series(n, rate, values=None, t0=0.0, channel="c"):
    v = np.arange(n, dtype=float) if values is None else values
    return SampleSeries(channel, rate, t0, v, np.ones(n))


def event(onset, cond=Condition.MEMORY, load=Load.FIVE):
    corr = Correctness.CORRECT if cond is Condition.MEMORY else None
    return EventRecord(onset, 1, cond, load, corr)


@pytest.mark.parametrize(
    "modality, load, pre, post, rate, n",
    [
        ("pupil", 5, 3, 10, 120, 1560),
        ("pupil", 9, 3, 18, 120, 2520),
        ("pupil", 13, 3, 26, 120, 3480),
        ("eeg", 5, 3, 5, 1000, 8000),
        ("eeg", 9, 3, 15, 1000, 18000),
        ("eeg", 13, 3, 23, 1000, 26000),
    ],
)
def test_window_table(modality, load, pre, post, rate, n):
    w = window_for(modality, load)
    assert (w.pre_s, w.post_s) == (pre, post)
    assert w.n_samples(rate) == n


def test_target_len_is_longest_window():
    assert default_target_len("pupil", 120) == 3480
    assert default_target_len("eeg", 1000) == 26000


def test_window_validation():
    with pytest.raises(ValueError):
        EpochWindow(-1, 2)


class TestAlign:
    def test_exact_hit(self):
        assert align_event(series(1000, 120), 360 / 120) == 360

    def test_midpoint_tie_goes_earlier(self):
        assert align_event(series(100, 100), 10.5 / 100) == 10

    def test_nearest(self):
        assert align_event(series(100, 100), 0.1049) == 10
        assert align_event(series(100, 100), 0.1051) == 11

    def test_out_of_range(self):
        s = series(100, 100)
        with pytest.raises(OnsetOutOfRangeError):
            align_event(s, 0.99 + 5.0)

    def test_uses_measured_timestamps(self):
        t = np.array([0.0, 0.01, 0.05, 0.06])
        s = SampleSeries("c", 100, 0.0, np.zeros(4), np.ones(4), timestamps=t)
        assert align_event(s, 0.04) == 2


class TestCut:
    def test_short_window_padded_to_target(self):
        s = series(120 * 60, 120)
        store = cut_epochs(s, [event(20.0)], "sub-01", "pupil")
        (e,) = store
        assert len(e.values) == 3480
        assert int((~e.missing).sum()) == 1560
        assert e.missing[1560:].all() and not e.missing[:1560].any()
        assert e.padding[1560:].all()

    def test_onset_sample_at_pre_offset(self):
        rate = 120
        s = series(120 * 60, rate)
        (e,) = cut_epochs(s, [event(20.0)], "sub-01", "pupil")
        assert e.values[round(3 * rate)] == 20.0 * rate

    def test_stream_end_overrun_flagged(self):
        rate = 1000
        s = series(12 * rate, rate)  # onset at 10 s leaves 2 s of signal
        (e,) = cut_epochs(s, [event(10.0)], "sub-01", "eeg")
        assert int((~e.missing).sum()) == 5 * rate
        assert e.padding[5 * rate :].all()
        assert e.window_len == 8000

    def test_no_baseline_correction(self):
        s = series(60 * 100, 100, values=np.full(6000, 42.0))
        (e,) = cut_epochs(s, [event(10.0)], "sub-01", "eeg")
        assert np.all(e.valid_values() == 42.0)

    def test_out_of_range_event_skipped(self):
        s = series(1000, 100)
        store = cut_epochs(s, [event(5.0), event(500.0, load=Load.NINE)], "sub-01", "eeg")
        assert len(store) == 1

    def test_two_channels_share_key_prefix(self):
        a, b = series(6000, 120, channel="pupil_left"), series(6000, 120, channel="pupil_right")
        store = cut_epochs([a, b], [event(10.0)], "sub-01", "pupil")
        keys = [e.key for e in store]
        assert [k.channel_id for k in keys] == ["pupil_left", "pupil_right"]
        assert keys[0][:4] == keys[1][:4]

    def test_target_len_too_short(self):
        with pytest.raises(ValueError):
            cut_epochs(series(10, 100), [], "s", "eeg", target_len=100)

    @settings(max_examples=25, deadline=None)
    @given(st.permutations(list(range(6))))
    def test_order_independent(self, perm):
        rng = np.random.default_rng(3)
        s = series(120 * 200, 120, values=rng.normal(size=120 * 200))
        cells = [(Condition.MEMORY, Load.FIVE), (Condition.JUST_LISTEN, Load.NINE)] * 3
        evs = [event(5.0 + 30 * i, *cells[i]) for i in range(6)]
        ref = cut_epochs(s, evs, "s", "pupil")
        got = cut_epochs(s, [evs[i] for i in perm], "s", "pupil")
        assert list(ref.epochs) == list(got.epochs)
        for k in ref.epochs:
            np.testing.assert_array_equal(ref.epochs[k].values, got.epochs[k].values)


def test_store_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.normal(size=3000)
    vals[100:110] = np.nan
    s = SampleSeries("c", 100, 0.0, vals, rng.uniform(0, 1, 3000))
    store = cut_epochs(s, [event(5.0), event(15.0, Condition.JUST_LISTEN, Load.NINE)], "sub-01", "eeg")
    save_store(store, tmp_path)
    back = load_store(tmp_path)
    assert list(back.epochs) == list(store.epochs)
    for k, e in store.epochs.items():
        b = back.epochs[k]
        np.testing.assert_array_equal(b.missing, e.missing)
        np.testing.assert_array_equal(b.padding, e.padding)
        np.testing.assert_array_equal(b.values[~b.missing], e.values[~e.missing].astype(np.float32))
        assert (b.condition, b.load, b.correctness, b.window_len) == (e.condition, e.load, e.correctness, e.window_len)


def test_load_store_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_store(tmp_path)
