from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadlens.errors import (
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
from loadlens.ingest import (
    Condition,
    Correctness,
    EventRecord,
    Load,
    ParticipantRecord,
    SampleSeries,
    code_map_from_json,
    code_map_to_json,
    load_code_map,
    parse_eeg_interchange,
    parse_events,
    parse_participants,
    parse_pupil_stream,
    subject_files,
    write_eeg_interchange,
    write_events,
    write_participants,
    write_pupil_stream,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestParticipants:
    def test_direct_field_mapping(self, tmp_path):
        p = write(tmp_path / "p.tsv", "participant_id\tage\tgender\nsub-01\t24\tF\n")
        assert parse_participants(p) == [ParticipantRecord("sub-01", 24, "F")]

    def test_empty_age_is_missing(self, tmp_path):
        p = write(tmp_path / "p.tsv", "participant_id\tage\tgender\nsub-01\t\tF\nsub-02\tn/a\tM\n")
        recs = parse_participants(p)
        assert [r.age for r in recs] == [None, None]

    def test_duplicate_subject_reports_line(self, tmp_path):
        p = write(tmp_path / "p.tsv", "participant_id\tage\nsub-03\t20\nsub-03\t21\n")
        with pytest.raises(DuplicateSubjectError) as exc:
            parse_participants(p)
        assert exc.value.line == 3

    def test_unknown_columns_ignored_and_order_kept(self, tmp_path):
        p = write(tmp_path / "p.tsv", "weird\tparticipant_id\nx\tsub-09\ny\tsub-02\n")
        assert [r.subject_id for r in parse_participants(p)] == ["sub-09", "sub-02"]

    def test_missing_subject_column(self, tmp_path):
        p = write(tmp_path / "p.tsv", "age\tgender\n20\tF\n")
        with pytest.raises(MalformedHeaderError):
            parse_participants(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            parse_participants(tmp_path / "nope.tsv")

    def test_round_trip(self, tmp_path):
        recs = [ParticipantRecord("sub-01", 30, "F", "right", "left"), ParticipantRecord("sub-02")]
        write_participants(recs, tmp_path / "p.tsv")
        assert parse_participants(tmp_path / "p.tsv") == recs


class TestEvents:
    def test_published_codes(self, tmp_path):
        p = write(tmp_path / "e.tsv", "onset\tduration\tcode\n12.5\t0\t500105\n40.0\t0\t6001051\n")
        evs = parse_events(p, load_code_map()).events
        assert evs[0] == EventRecord(12.5, 500105, Condition.JUST_LISTEN, Load.FIVE, None)
        assert evs[1] == EventRecord(40.0, 6001051, Condition.MEMORY, Load.FIVE, Correctness.CORRECT)

    def test_unmapped_code_listed_not_dropped(self, tmp_path):
        p = write(tmp_path / "e.tsv", "onset\tcode\n1.0\t999999\n2.0\t500109\n")
        parsed = parse_events(p, load_code_map())
        assert len(parsed.events) == 1
        assert [(u.line, u.code) for u in parsed.unmapped] == [(2, 999999)]

    def test_non_numeric_row(self, tmp_path):
        p = write(tmp_path / "e.tsv", "onset\tcode\nabc\t500105\n")
        with pytest.raises(MalformedRowError) as exc:
            parse_events(p, load_code_map())
        assert exc.value.line == 2

    def test_negative_onset(self, tmp_path):
        p = write(tmp_path / "e.tsv", "onset\tcode\n-1\t500105\n")
        with pytest.raises(NegativeOnsetError):
            parse_events(p, load_code_map())

    def test_file_order_preserved(self, tmp_path):
        p = write(tmp_path / "e.tsv", "onset\tcode\n9\t500105\n3\t500109\n6\t500113\n")
        assert [e.onset_s for e in parse_events(p, load_code_map()).events] == [9, 3, 6]

    def test_default_code_map_covers_every_cell(self):
        cells = set(load_code_map().values())
        expected = {(Condition.JUST_LISTEN, l, None) for l in Load}
        expected |= {(Condition.MEMORY, l, c) for l in Load for c in Correctness}
        assert cells == expected

    def test_code_map_json_round_trip(self):
        cm = load_code_map()
        assert code_map_from_json(code_map_to_json(cm)) == cm

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1e5, allow_nan=False), st.sampled_from(sorted(load_code_map()))), max_size=20))
    def test_round_trip_property(self, tmp_path_factory, rows):
        cm = load_code_map()
        evs = [EventRecord(o, c, *cm[c]) for o, c in rows]
        path = tmp_path_factory.mktemp("ev") / "e.tsv"
        write_events(evs, path)
        assert parse_events(path, cm).events == evs


class TestPupil:
    def test_rate_from_timestamps(self, tmp_path):
        p = write(tmp_path / "s.tsv", "timestamp_s\tdiameter\tconfidence\n0.000\t3\t1\n0.00833\t3\t1\n0.01667\t3\t1\n")
        s = parse_pupil_stream(p, "left")
        assert s.sampling_rate_hz == pytest.approx(120, abs=1)
        assert s.channel_id == "pupil_left"

    def test_confidence_clamped(self, tmp_path):
        p = write(tmp_path / "s.tsv", "timestamp_s\tdiameter\tconfidence\n0\t3\t1.3\n0.1\t3\t-0.2\n")
        assert parse_pupil_stream(p, "right").quality.tolist() == [1.0, 0.0]

    def test_non_monotonic(self, tmp_path):
        p = write(tmp_path / "s.tsv", "timestamp_s\tdiameter\tconfidence\n0.0\t3\t1\n0.5\t3\t1\n0.4\t3\t1\n")
        with pytest.raises(NonMonotonicTimestampsError) as exc:
            parse_pupil_stream(p, "left")
        assert exc.value.line == 4

    def test_empty(self, tmp_path):
        p = write(tmp_path / "s.tsv", "timestamp_s\tdiameter\tconfidence\n")
        with pytest.raises(EmptyStreamError):
            parse_pupil_stream(p, "left")

    def test_missing_diameter_has_zero_quality(self, tmp_path):
        p = write(tmp_path / "s.tsv", "timestamp_s\tdiameter\tconfidence\n0\tn/a\t0.9\n0.1\t3\t0.9\n")
        s = parse_pupil_stream(p, "left")
        assert np.isnan(s.values[0]) and s.quality[0] == 0.0

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        t = np.cumsum(rng.uniform(0.005, 0.01, 50))
        s = SampleSeries("pupil_left", 120.0, float(t[0]), rng.normal(3, 0.2, 50), rng.uniform(0, 1, 50), timestamps=t)
        write_pupil_stream(s, tmp_path / "s.tsv")
        back = parse_pupil_stream(tmp_path / "s.tsv", "left")
        np.testing.assert_array_equal(back.values, s.values)
        np.testing.assert_array_equal(back.quality, s.quality)
        np.testing.assert_array_equal(back.timestamps, s.timestamps)


class TestEeg:
    def test_exact_size(self, tmp_path):
        data = np.zeros((26000, 1), dtype="<f4")
        write_eeg_interchange(["Fz"], data, 1000.0, tmp_path / "h.json", tmp_path / "d.f32")
        assert (tmp_path / "d.f32").stat().st_size == 104000
        (s,) = parse_eeg_interchange(tmp_path / "h.json", tmp_path / "d.f32")
        assert len(s) == 26000 and s.channel_id == "eeg_fz"

    def test_size_mismatch_reports_offset(self, tmp_path):
        write_eeg_interchange(["Fz"], np.zeros((26000, 1)), 1000.0, tmp_path / "h.json", tmp_path / "d.f32")
        with open(tmp_path / "d.f32", "ab") as fh:
            fh.write(b"\0")
        with pytest.raises(SizeMismatchError) as exc:
            parse_eeg_interchange(tmp_path / "h.json", tmp_path / "d.f32")
        assert exc.value.offset == 104000

    def test_unknown_channel(self, tmp_path):
        write_eeg_interchange(["Fz"], np.zeros((10, 1)), 1000.0, tmp_path / "h.json", tmp_path / "d.f32")
        with pytest.raises(UnknownChannelError):
            parse_eeg_interchange(tmp_path / "h.json", tmp_path / "d.f32", ["Cz"])

    def test_unsupported_format(self, tmp_path):
        write(tmp_path / "h.json", '{"sampling_rate_hz": 1000, "channel_names": ["Fz"], "n_samples": 1, "byte_order": "big"}')
        with pytest.raises(UnsupportedFormatError):
            parse_eeg_interchange(tmp_path / "h.json", tmp_path / "d.f32")

    def test_channel_selection_and_values(self, tmp_path):
        data = np.arange(12, dtype=float).reshape(4, 3)
        write_eeg_interchange(["Fz", "Cz", "Pz"], data, 500.0, tmp_path / "h.json", tmp_path / "d.f32")
        series = parse_eeg_interchange(tmp_path / "h.json", tmp_path / "d.f32", ["Pz", "Fz"])
        assert [s.channel_id for s in series] == ["eeg_pz", "eeg_fz"]
        np.testing.assert_array_equal(series[0].values, data[:, 2])
        assert series[0].sampling_rate_hz == 500.0


def test_subject_files_report_missing(tmp_path):
    files = subject_files(tmp_path, "sub-01")
    assert files.missing("pupil") == ["events", "pupil_left", "pupil_right"]
    files.events.parent.mkdir(parents=True)
    files.events.write_text("onset\tcode\n")
    assert files.missing("eeg") == ["eeg_header", "eeg_data"]
