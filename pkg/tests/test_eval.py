from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import weighted_f1_from_confusion

from loadlens.balance import BalanceConfig
from loadlens.errors import ClassTooSmallError, EmptyInputError, LengthMismatchError, UnknownTaskError
from loadlens.eval import (
    EvalReport,
    TableRow,
    compute_metrics,
    cross_validate,
    fold_assignments,
    format_mean_std,
    make_labels,
    partitions,
    reference_deviation,
    results_table,
    stratified_split,
    task_spec,
)
from loadlens.features import FeatureMatrix, RowKey


def matrix(keys, X=None):
    X = np.zeros((len(keys), 1)) if X is None else X
    return FeatureMatrix(list(keys), X, tuple(f"f{i}" for i in range(np.shape(X)[1])))


ALL_CELLS = [("justlisten", l, None) for l in (5, 9, 13)] + [
    ("memory", l, c) for l in (5, 9, 13) for c in ("correct", "incorrect")
]


class TestLabels:
    def test_nine_class_name(self):
        spec = task_spec("nine")
        assert spec.class_names[spec.label("memory", 9, "correct")] == "memory/correct/9"

    def test_eeg3_drops_just_listen(self):
        m = matrix([RowKey("s", c, l, k, 0) for c, l, k in ALL_CELLS])
        out, dropped = make_labels(m, "eeg3")
        assert dropped == 3 and len(out) == 6
        assert set(out.labels.tolist()) == {0, 1, 2}

    def test_binary_memory(self):
        spec = task_spec("binary")
        assert spec.class_names[spec.label("memory", 13, "incorrect")] == "memory"

    def test_pupil4(self):
        spec = task_spec("pupil4")
        assert [spec.label(c, l, k) for c, l, k in ALL_CELLS] == [0, 0, 0, 1, 1, 2, 2, 3, 3]

    def test_nine_covers_every_cell_once(self):
        spec = task_spec("nine")
        assert sorted(spec.label(c, l, k) for c, l, k in ALL_CELLS) == list(range(9))

    def test_unknown(self):
        with pytest.raises(UnknownTaskError):
            task_spec("twelve")


class TestSplit:
    def test_proportions(self):
        y = np.r_[np.zeros(60), np.ones(40)].astype(int)
        s = stratified_split(y, 0.2, seed=3)
        counts = np.bincount(y[s.test_idx])
        assert abs(counts[0] - 12) <= 1 and abs(counts[1] - 8) <= 1
        assert len(np.intersect1d(s.train_idx, s.test_idx)) == 0
        assert len(s.train_idx) + len(s.test_idx) == 100

    def test_deterministic(self):
        y = np.random.default_rng(0).integers(0, 3, 90)
        a, b = stratified_split(y, seed=5), stratified_split(y, seed=5)
        np.testing.assert_array_equal(a.test_idx, b.test_idx)

    def test_subject_atomic(self):
        rng = np.random.default_rng(1)
        groups = np.repeat([f"sub-{i:02d}" for i in range(10)], 12)
        y = rng.integers(0, 2, len(groups))
        s = stratified_split(y, 0.2, "subject", seed=2, groups=groups)
        assert not set(groups[s.train_idx]) & set(groups[s.test_idx])
        assert len(s.test_idx) > 0

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmallError):
            stratified_split(np.array([0, 0, 0, 1]))

    def test_one_subject(self):
        with pytest.raises(ClassTooSmallError):
            stratified_split(np.array([0, 1, 0, 1]), mode="subject", groups=np.array(["a"] * 4))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 20), st.integers(2, 4), st.integers(0, 1000))
    def test_subject_sets_disjoint_property(self, n_subjects, n_classes, seed):
        rng = np.random.default_rng(seed)
        groups = np.repeat([f"s{i}" for i in range(n_subjects)], 6)
        y = rng.integers(0, n_classes, len(groups))
        s = stratified_split(y, 0.25, "subject", seed=seed, groups=groups)
        assert not set(groups[s.train_idx]) & set(groups[s.test_idx])
        assert len(s.train_idx) and len(s.test_idx)

    def test_folds_stratified(self):
        y = np.r_[np.zeros(50), np.ones(25)].astype(int)
        f = fold_assignments(y, 5, seed=0)
        for k in range(5):
            assert np.bincount(y[f == k]).tolist() == [10, 5]


def separable_matrix(n_per_class=50):
    keys = [RowKey(f"sub-{i % 10:02d}", "memory", 5, "correct", i) for i in range(2 * n_per_class)]
    X = np.r_[np.zeros(n_per_class), np.ones(n_per_class)][:, None]
    m = matrix(keys, X)
    m.labels = np.r_[np.zeros(n_per_class), np.ones(n_per_class)].astype(int)
    return m


class TestCrossValidate:
    def test_perfect(self):
        def fp(train, X):
            return (X[:, 0] > 0.5).astype(int), None

        cv = cross_validate(separable_matrix(), fp, k=5)
        assert cv["accuracy"]["mean"] == 1.0 and cv["accuracy"]["std"] == 0.0

    def test_constant(self):
        def fp(train, X):
            return np.zeros(len(X), dtype=int), None

        cv = cross_validate(separable_matrix(), fp, k=5)
        assert cv["accuracy"]["mean"] == pytest.approx(0.5)
        assert cv["accuracy"]["std"] <= 0.05

    def test_balancing_touches_training_rows_only(self):
        m = separable_matrix()
        m = m.take(np.r_[np.arange(50), np.arange(50, 70)])
        seen = []

        def fp(train, X):
            seen.append((np.bincount(train.y).tolist(), len(X)))
            return (X[:, 0] > 0.5).astype(int), None

        cross_validate(m, fp, k=5, balance_config=BalanceConfig("smote"))
        assert all(c[0] == c[1] for c, _ in seen)
        assert sum(n for _, n in seen) == len(m)

    def test_format(self):
        assert format_mean_std(0.72304, 0.00761) == "0.7230 ± 0.0076"


class TestMetrics:
    def test_perfect(self):
        r = compute_metrics([0, 0, 1, 1], [0, 0, 1, 1])
        assert r.accuracy == 1.0 and r.macro_f1 == 1.0

    def test_half(self):
        r = compute_metrics([0, 0, 1, 1], [0, 1, 0, 1])
        assert r.confusion == [[1, 1], [1, 1]]
        assert r.accuracy == 0.5 and r.macro_f1 == 0.5

    def test_zero_prediction_class_flagged(self):
        r = compute_metrics([0, 1, 2], [0, 0, 0], n_classes=3)
        assert r.precision[1] == 0.0 and r.zero_prediction_classes == [1, 2]

    def test_confusion_rows_are_support(self):
        rng = np.random.default_rng(0)
        t, p = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
        r = compute_metrics(t, p, 4)
        assert np.sum(r.confusion, axis=1).tolist() == r.support

    def test_auc_matches_rank_statistic(self):
        rng = np.random.default_rng(4)
        y = rng.integers(0, 2, 200)
        s = rng.normal(size=200) + y
        s[:20] = np.round(s[:20])  # include ties
        r = compute_metrics(y, (s > 0.5).astype(int), 2, scores=s)
        pos, neg = s[y == 1], s[y == 0]
        diff = pos[:, None] - neg[None, :]
        mw = (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size
        assert r.roc_auc == pytest.approx(mw, abs=1e-12)

    def test_auc_only_for_binary(self):
        assert compute_metrics([0, 1, 2], [0, 1, 2], scores=np.eye(3)).roc_auc is None

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            compute_metrics([0, 1], [0])

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            compute_metrics([], [])

    def test_json_round_trip(self):
        r = compute_metrics([0, 1, 1], [0, 1, 0], scores=np.array([0.1, 0.9, 0.4]))
        assert EvalReport.from_dict(r.to_dict()).to_json() == r.to_json()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 9), st.integers(1, 60))
    def test_permutation_invariance(self, seed, k, n):
        rng = np.random.default_rng(seed)
        t, p = rng.integers(0, k, n), rng.integers(0, k, n)
        perm = rng.permutation(n)
        assert compute_metrics(t, p, k).to_dict() == compute_metrics(t[perm], p[perm], k).to_dict()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 9), st.integers(1, 60))
    def test_identities(self, seed, k, n):
        rng = np.random.default_rng(seed)
        t, p = rng.integers(0, k, n), rng.integers(0, k, n)
        r = compute_metrics(t, p, k)
        conf = np.array(r.confusion)
        assert r.accuracy == pytest.approx(np.trace(conf) / conf.sum(), abs=1e-15)
        assert r.weighted_f1 == pytest.approx(weighted_f1_from_confusion(conf), abs=1e-12)


def test_partitions_yield_training_set():
    m = separable_matrix(10)
    train, test = partitions(m, stratified_split(m.labels, seed=0))
    assert len(train.y) + len(test) == 20
    assert (test.labels >= 0).all()


def test_results_table_layout():
    rows = [TableRow("gbt", 0.723, 0.0076, 0.613, 0.61, 0.6), TableRow("svm", None, None, 0.5, 0.5, 0.5)]
    lines = results_table(rows, binary=True).splitlines()
    assert [c.strip() for c in lines[0].strip("|").split("|")] == ["Model", "CV Acc.", "Binary Acc.", "F1 (W)", "F1 (M)"]
    assert "0.7230 ± 0.0076" in lines[2] and lines[2].startswith("| Boosted Trees")
    assert "Multi Acc." in results_table(rows, binary=False)


def test_reference_deviation():
    d = reference_deviation("eeg", "eeg3", 0.97)
    assert d["within_tolerance"] and d["deviation"] == pytest.approx(0.97 - 0.9982)
    assert reference_deviation("pupil", "nine", 0.5) is None
