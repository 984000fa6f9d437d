from __future__ import annotations

import numpy as np
import pytest
from conftest import make_epoch
from hypothesis import given, settings
from hypothesis import strategies as st

from loadlens.cleaning import (
    CleaningPolicy,
    CleaningReport,
    Drop,
    DropReason,
    clean_eeg_epoch,
    clean_pupil_epoch,
    clean_store,
    drop_subject_if_invalid,
)
from loadlens.epoching import EpochStore, Modality
from loadlens.errors import UnknownSubjectError
from loadlens.ingest import Condition, Load

POLICY = CleaningPolicy()


class TestPupil:
    def test_no_rule_fires(self):
        e = make_epoch(np.linspace(3, 4, 100), np.full(100, 0.95))
        out = clean_pupil_epoch(e, POLICY)
        assert not isinstance(out, Drop)
        assert out.valid_fraction == 1.0
        np.testing.assert_array_equal(out.values, e.values)

    def test_sample_threshold_is_strict(self):
        q = np.full(100, 0.95)
        q[10], q[20] = 0.59, 0.60
        out = clean_pupil_epoch(make_epoch(np.ones(100), q), POLICY)
        assert out.missing[10] and np.isnan(out.values[10])
        assert not out.missing[20]
        assert out.valid_fraction == pytest.approx(0.99)

    def test_epoch_mean_below_threshold_dropped(self):
        out = clean_pupil_epoch(make_epoch(np.ones(50), np.full(50, 0.79)), POLICY)
        assert isinstance(out, Drop) and out.reason is DropReason.LOW_CONFIDENCE

    def test_epoch_mean_at_threshold_kept(self):
        assert not isinstance(clean_pupil_epoch(make_epoch(np.ones(50), np.full(50, 0.8)), POLICY), Drop)

    def test_mean_ignores_originally_missing(self):
        vals = np.ones(100)
        vals[50:] = np.nan
        q = np.concatenate([np.full(50, 0.9), np.zeros(50)])
        out = clean_pupil_epoch(make_epoch(vals, q, window_len=100), POLICY)
        assert not isinstance(out, Drop)
        assert out.valid_fraction == 0.5

    def test_all_missing(self):
        out = clean_pupil_epoch(make_epoch(np.full(10, np.nan)), POLICY)
        assert out.reason is DropReason.MISSING_DATA


class TestEeg:
    def test_ptp_210_rejected(self):
        v = np.linspace(-150, 60, 500)
        assert clean_eeg_epoch(make_epoch(v), POLICY).reason is DropReason.HIGH_AMPLITUDE

    @pytest.mark.parametrize("ptp", [199.0, 200.0])
    def test_ptp_at_or_below_limit_kept(self, ptp):
        v = np.linspace(-ptp / 2, ptp / 2, 500)
        assert not isinstance(clean_eeg_epoch(make_epoch(v), POLICY), Drop)

    def test_flatline(self):
        assert clean_eeg_epoch(make_epoch(np.full(300, 3.2)), POLICY).reason is DropReason.FLATLINE

    def test_missing_inside_window(self):
        v = np.sin(np.arange(300))
        v[5] = np.nan
        assert clean_eeg_epoch(make_epoch(v), POLICY).reason is DropReason.MISSING_DATA
        lax = CleaningPolicy(reject_on_missing_data=False)
        assert not isinstance(clean_eeg_epoch(make_epoch(v), lax), Drop)

    def test_padding_ignored(self):
        v = np.sin(np.arange(300)) * 10
        pad = np.zeros(300, dtype=bool)
        pad[200:] = True
        out = clean_eeg_epoch(make_epoch(v, padding=pad, window_len=200), POLICY)
        assert not isinstance(out, Drop)
        assert out.valid_fraction == 1.0

    def test_amplitude_precedes_flatline(self):
        v = np.zeros(300)
        v[0] = 500
        assert clean_eeg_epoch(make_epoch(v), POLICY).reason is DropReason.HIGH_AMPLITUDE


@pytest.mark.parametrize("kwargs", [{"pupil_sample_conf_min": 1.5}, {"eeg_ptp_max_uv": 0}, {"eeg_flat_var_min_uv2": -1}])
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        CleaningPolicy(**kwargs)


def eeg_store(specs):
    store = EpochStore(Modality.EEG, 200, 100.0)
    for i, (subject, cond, scale) in enumerate(specs):
        v = np.sin(np.arange(200) / 3.0) * scale
        store.add(make_epoch(v, subject=subject, condition=cond, trial=i))
    return store


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([0.0, 10.0, 150.0]), min_size=1, max_size=20))
def test_report_counts_add_up(scales):
    store = eeg_store([("sub-01", Condition.MEMORY, s) for s in scales])
    cleaned, report = clean_store(store, POLICY)
    assert report.total_kept + report.total_dropped == len(store)
    assert sum(report.reason_totals().values()) == report.total_dropped
    assert len(cleaned) == report.total_kept
    assert report.reason_totals()["HighAmplitude"] == scales.count(150.0)
    assert report.reason_totals()["Flatline"] == scales.count(0.0)


def test_report_tsv(tmp_path):
    store = eeg_store([("sub-01", Condition.MEMORY, 10.0), ("sub-01", Condition.MEMORY, 150.0)])
    _, report = clean_store(store, POLICY)
    report.write_tsv(tmp_path / "r.tsv")
    lines = (tmp_path / "r.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["subject", "condition", "load", "kept", "dropped",
                                    "LowConfidence", "HighAmplitude", "Flatline", "MissingData"]
    assert lines[1].split("\t") == ["sub-01", "memory", "5", "1", "1", "0", "1", "0", "0"]


class TestSubjectDrop:
    def test_complete_subject_untouched(self):
        store = eeg_store([("sub-01", Condition.MEMORY, 10), ("sub-01", Condition.JUST_LISTEN, 10)])
        out, entry = drop_subject_if_invalid(store, "sub-01")
        assert entry is None and len(out) == 2

    def test_missing_file(self):
        store = eeg_store([("sub-01", Condition.MEMORY, 10), ("sub-02", Condition.MEMORY, 10)])
        report = CleaningReport()
        out, entry = drop_subject_if_invalid(store, "sub-02", ["pupil_left"], report=report)
        assert entry.cause is DropReason.MISSING_FILE
        assert out.subjects() == ["sub-01"]
        assert report.subjects == [entry]

    def test_empty_condition(self):
        store = eeg_store([("sub-01", Condition.MEMORY, 10)])
        out, entry = drop_subject_if_invalid(store, "sub-01")
        assert entry.cause is DropReason.NO_EPOCHS and entry.detail == "justlisten"
        assert len(out) == 0

    def test_unknown(self):
        with pytest.raises(UnknownSubjectError):
            drop_subject_if_invalid(eeg_store([]), "sub-99")
