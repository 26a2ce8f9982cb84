"""Task layer: labeling rules, splits, example building, baselines, metrics."""

from __future__ import annotations

import statistics
from datetime import date, timedelta

import numpy as np
import pytest

from phenolab.errors import DegenerateSplit
from phenolab.ingest import Dataset, DatasetMeta, EmaStress, Phq9Score, WifiScan
from phenolab.featurize import build_feature_matrix
from phenolab.tasks import (
    MODEL_LSTM,
    POLICY_CHRONOLOGICAL,
    POLICY_LOUO,
    StressClass,
    TASK_L_H,
    TASK_LM_H,
    TASK_MULTICLASS,
    TASK_PHQ9,
    TaskConfig,
    accuracy_score,
    chronological_day_cut,
    collapse_day_labels,
    evaluate,
    f1_score,
    label_stress,
    make_examples,
    make_phq9_examples,
    mean_baseline,
    median_midpoint,
    most_frequent_baseline,
    prepare_stress_base,
    rmse_score,
    split,
    stress_split,
)

DAY0 = date(2013, 4, 1)
EPOCH_DAY0 = 1364774400  # 2013-04-01T00:00:00Z


def _resp(user: str, day: int, level: int, second: int = 43200) -> EmaStress:
    return EmaStress(user, EPOCH_DAY0 + day * 86400 + second, level)


def _dataset(responses, n_days: int, phq9=(), users=None, wifi=()) -> Dataset:
    meta = DatasetMeta(0, DAY0, DAY0 + timedelta(days=n_days - 1))
    ds = Dataset(
        meta=meta,
        ema_stress=sorted(responses),
        phq9=sorted(phq9),
        wifi=sorted(wifi),
    )
    roster = {e.user for e in ds.ema_stress} | {p.user for p in ds.phq9}
    roster |= {w.user for w in ds.wifi}
    ds.users = sorted(roster) if users is None else users
    return ds


# ---------------------------------------------------------------------------
# Labeling
# ---------------------------------------------------------------------------


def test_label_stress_odd_median():
    responses = [_resp("u", d, lv) for d, lv in enumerate([1, 2, 3, 4, 5])]
    labels = label_stress(responses)
    assert labels[0].user_median == 3.0
    by_level = {r.level: lab.value for r, lab in zip(responses, labels)}
    assert by_level[2] == StressClass.LOW
    assert by_level[3] == StressClass.MEDIUM
    assert by_level[5] == StressClass.HIGH


def test_label_stress_all_equal_is_medium():
    responses = [_resp("u", d, 4) for d in range(5)]
    assert all(l.value == StressClass.MEDIUM for l in label_stress(responses))


def test_label_stress_even_count_midpoint_median_no_medium():
    responses = [_resp("u", d, lv) for d, lv in enumerate([1, 2, 4, 5])]
    labels = label_stress(responses)
    assert labels[0].user_median == 3.0
    assert {l.value for l in labels} == {StressClass.LOW, StressClass.HIGH}


def test_label_stress_median_matches_statistics_oracle():
    rng = np.random.default_rng(0)
    for _ in range(150):
        levels = rng.integers(1, 6, size=int(rng.integers(1, 25))).tolist()
        responses = [_resp("u", i, lv) for i, lv in enumerate(levels)]
        labels = label_stress(responses)
        med = statistics.median(levels)
        assert labels[0].user_median == med
        for r, lab in zip(responses, labels):
            expected = (
                StressClass.LOW if r.level < med
                else StressClass.HIGH if r.level > med
                else StressClass.MEDIUM
            )
            assert lab.value == expected


def test_label_stress_fit_responses_controls_median():
    fit = [_resp("u", d, lv) for d, lv in enumerate([1, 1, 1])]
    apply = [_resp("u", 9, 3)]
    labels = label_stress(apply, fit_responses=fit)
    assert labels[0].value == StressClass.HIGH and labels[0].user_median == 1.0


def test_collapse_day_labels_tie_toward_lower():
    assert collapse_day_labels([StressClass.LOW, StressClass.HIGH]) == StressClass.LOW
    assert collapse_day_labels([StressClass.HIGH]) == StressClass.HIGH
    assert (
        collapse_day_labels([StressClass.MEDIUM, StressClass.HIGH, StressClass.HIGH])
        == StressClass.HIGH
    )


def test_median_midpoint_empty_raises():
    with pytest.raises(ValueError):
        median_midpoint([])


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def test_chronological_ten_days_splits_eight_two():
    days = [DAY0 + timedelta(days=i) for i in range(10)]
    train, test = chronological_day_cut(days)
    assert len(train) == 8 and len(test) == 2
    assert max(train) < min(test)


def test_chronological_single_day_degenerate():
    with pytest.raises(DegenerateSplit):
        chronological_day_cut([DAY0])


class _Examples:
    def __init__(self, users, dates):
        self.users = users
        self.dates = dates


def test_split_chronological_rows():
    dates = [DAY0 + timedelta(days=i) for i in range(10)]
    ex = _Examples(["u"] * 10, dates)
    sp = split(ex, POLICY_CHRONOLOGICAL)
    assert sp.train_rows.tolist() == list(range(8))
    assert sp.test_rows.tolist() == [8, 9]


def test_split_louo_38_users():
    users = [f"u{i:02d}" for i in range(38)]
    ex = _Examples(users, [DAY0] * 38)
    folds = split(ex, POLICY_LOUO)
    assert len(folds) == 38
    for fold in folds:
        assert fold.train_rows.size == 37 and fold.test_rows.size == 1
        held = {users[i] for i in fold.test_rows}
        assert held == {fold.held_out_user}
        assert fold.held_out_user not in {users[i] for i in fold.train_rows}


def test_split_unknown_policy():
    with pytest.raises(ValueError):
        split(_Examples([], []), "bogus")


# ---------------------------------------------------------------------------
# Stress example building
# ---------------------------------------------------------------------------


def _stress_dataset():
    """u1: levels spanning the range over 10 days; u2: constant; u3 test-only."""
    responses = []
    for d, lv in enumerate([1, 2, 3, 4, 5, 1, 2, 4, 5, 3]):
        responses.append(_resp("u1", d, lv))
    for d in range(10):
        responses.append(_resp("u2", d, 3))
    responses.append(_resp("u3", 9, 4))  # only on a test day: unlabeleable
    return _dataset(responses, n_days=10)


def test_make_examples_l_h_filters_medium():
    base = prepare_stress_base(_stress_dataset())
    counts = {c: 0 for c in StressClass}
    for label in base.day_labels.values():
        counts[label] += 1
    ex = make_examples(base, TaskConfig(TASK_L_H))
    assert len(ex.y) == counts[StressClass.LOW] + counts[StressClass.HIGH]
    assert set(ex.y.tolist()) <= {0, 1}
    assert ex.dropped_unlabeled_user == 1  # u3 has no training-day responses


def test_make_examples_lm_h_merges_low_and_medium():
    base = prepare_stress_base(_stress_dataset())
    ex = make_examples(base, TaskConfig(TASK_LM_H))
    n_high = sum(1 for v in base.day_labels.values() if v == StressClass.HIGH)
    assert int(ex.y.sum()) == n_high
    assert len(ex.y) == len(base.day_labels)


def test_make_examples_multiclass_keeps_three_classes():
    base = prepare_stress_base(_stress_dataset())
    ex = make_examples(base, TaskConfig(TASK_MULTICLASS))
    assert ex.n_classes == 3
    assert set(ex.y.tolist()) == {0, 1, 2}


def test_lstm_windows_require_five_days_history():
    responses = [_resp("u1", d, lv) for d, lv in enumerate([1, 5, 1, 5, 1, 5, 1, 5, 1, 5])]
    responses += [_resp("u2", d, (d % 5) + 1) for d in range(10)]
    base = prepare_stress_base(_dataset(responses, n_days=10))
    ex = make_examples(base, TaskConfig(TASK_MULTICLASS, model=MODEL_LSTM))
    # responses on days 1..10 -> windows only for days 5..10
    assert min(ex.dates) == DAY0 + timedelta(days=4)
    assert ex.dropped_no_history == 8  # four early days for each of two users
    assert ex.x.shape[1:] == (5, ex.n_feature_cols + ex.onehot_width)


def test_one_hot_width_fixed_from_roster():
    responses = []
    for i in range(48):
        responses.append(_resp(f"u{i:02d}", 0, 1 + (i % 5)))
        responses.append(_resp(f"u{i:02d}", 5, 5 - (i % 5)))
    base = prepare_stress_base(_dataset(responses, n_days=6))
    ex = make_examples(base, TaskConfig(TASK_LM_H))
    assert ex.onehot_width == 48
    onehot = ex.x[:, ex.n_feature_cols :]
    assert onehot.shape[1] == 48
    assert np.array_equal(onehot.sum(axis=1), np.ones(len(ex.y)))


def test_stress_split_soundness():
    base = prepare_stress_base(_stress_dataset())
    ex = make_examples(base, TaskConfig(TASK_MULTICLASS))
    sp = stress_split(base, ex)
    train_dates = [ex.dates[i] for i in sp.train_rows]
    test_dates = [ex.dates[i] for i in sp.test_rows]
    assert max(train_dates) < min(test_dates)


def test_medians_fit_on_training_days_only():
    # u1 training days are all level 2; test days level 5: median must be 2
    responses = [_resp("u1", d, 2) for d in range(8)]
    responses += [_resp("u1", d, 5) for d in (8, 9)]
    responses += [_resp("u2", d, (d % 5) + 1) for d in range(10)]
    base = prepare_stress_base(_dataset(responses, n_days=10))
    assert base.medians["u1"] == 2.0
    assert base.day_labels[("u1", DAY0 + timedelta(days=9))] == StressClass.HIGH


# ---------------------------------------------------------------------------
# PHQ-9 examples
# ---------------------------------------------------------------------------


def _phq9_features(n_users=3, n_days=20, constant=False):
    day9 = EPOCH_DAY0
    wifi = []
    rng = np.random.default_rng(4)
    users = [f"u{i:02d}" for i in range(n_users)]
    for ui, user in enumerate(users):
        for d in range(n_days):
            n_scans = 4 if constant else int(rng.integers(2, 8))
            for k in range(n_scans):
                wifi.append(WifiScan(user, day9 + d * 86400 + 36000 + k * 300, f"ap{ui}"))
    phq9 = [Phq9Score(u, (i * 7) % 28) for i, u in enumerate(users)]
    ds = _dataset([], n_days=n_days, phq9=phq9, wifi=wifi, users=users)
    return ds, build_feature_matrix(ds)


def test_phq9_constant_features_zero_std_half():
    ds, features = _phq9_features(constant=True)
    ex = make_phq9_examples(features, ds.phq9, ds.meta.study_end)
    n = len(features.registry)
    assert np.array_equal(ex.x[:, n:], np.zeros_like(ex.x[:, n:]))


def test_phq9_38_scored_users_give_38_examples():
    ds, features = _phq9_features(n_users=38)
    ex = make_phq9_examples(features, ds.phq9, ds.meta.study_end)
    assert len(ex.users) == 38 and ex.x.shape[0] == 38
    folds = split(ex, POLICY_LOUO)
    assert len(folds) == 38


def test_phq9_window_mean_std_match_brute_force():
    ds, features = _phq9_features()
    ex = make_phq9_examples(features, ds.phq9, ds.meta.study_end)
    n = len(features.registry)
    window_start = ds.meta.study_end - timedelta(days=13)
    for row, user in enumerate(ex.users):
        rows = [
            i
            for i, (u, d) in enumerate(zip(features.users, features.dates))
            if u == user and window_start <= d <= ds.meta.study_end
        ]
        assert len(rows) == 14
        block = features.values[rows]
        assert np.allclose(ex.x[row, :n], block.mean(axis=0), rtol=1e-12)
        assert np.allclose(ex.x[row, n:], block.std(axis=0), rtol=1e-12)


def test_phq9_user_without_window_data_excluded():
    ds, features = _phq9_features()
    scores = list(ds.phq9) + [Phq9Score("zz_ghost", 9)]
    ex = make_phq9_examples(features, scores, ds.meta.study_end)
    assert ex.excluded_users == ["zz_ghost"]
    assert "zz_ghost" not in ex.users


def test_phq9_only_pairs_with_fcn():
    with pytest.raises(ValueError):
        TaskConfig(TASK_PHQ9, model=MODEL_LSTM)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def test_most_frequent_per_user_mode():
    pred = most_frequent_baseline({"a": [2, 2, 2, 0], "b": [0]})
    assert pred.predict(["a"]).tolist() == [2]


def test_most_frequent_unseen_user_global_mode():
    pred = most_frequent_baseline({"a": [1, 1], "b": [1, 0]})
    assert pred.predict(["ghost"]).tolist() == [1]


def test_most_frequent_tie_toward_lower_class():
    pred = most_frequent_baseline({"a": [0, 0, 2, 2]})
    assert pred.predict(["a"]).tolist() == [0]


def test_mean_baseline_exact():
    const = mean_baseline([0.0, 10.0])
    assert const == 5.0
    assert rmse_score(np.array([const, const]), np.array([0.0, 10.0])) == 5.0


def test_mean_baseline_single_score():
    const = mean_baseline([7.0])
    assert rmse_score(np.array([const]), np.array([7.0])) == 0.0


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_perfect_classification():
    res = evaluate(np.array([0, 1, 2]), np.array([0, 1, 2]), TASK_MULTICLASS, 3)
    assert res.accuracy == 1.0 and res.f1 == 1.0


def test_binary_hand_computed_weighted_f1():
    truth = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 0, 1])
    res = evaluate(pred, truth, TASK_L_H, 2)
    assert res.accuracy == 0.5
    assert res.f1 == pytest.approx(0.5)  # both classes: P=R=F1=0.5, equal support


def test_regression_perfect_rmse_zero():
    res = evaluate(np.array([1.0, 2.0]), np.array([1.0, 2.0]), TASK_PHQ9)
    assert res.rmse == 0.0


def _confusion_oracle_f1(truth, pred, n_classes, weighted=True):
    """Independent oracle: build the confusion matrix first."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(truth, pred):
        cm[t, p] += 1
    f1s, weights = [], []
    for c in range(n_classes):
        tp = cm[c, c]
        precision = tp / cm[:, c].sum() if cm[:, c].sum() else 0.0
        recall = tp / cm[c, :].sum() if cm[c, :].sum() else 0.0
        f1s.append(
            2 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
        weights.append(cm[c, :].sum())
    if weighted:
        total = sum(weights)
        return sum(f * w for f, w in zip(f1s, weights)) / total if total else 0.0
    present = [c for c in range(n_classes) if weights[c] or (pred == c).any()]
    return float(np.mean([f1s[c] for c in present])) if present else 0.0


def test_weighted_f1_matches_confusion_oracle():
    rng = np.random.default_rng(12)
    for _ in range(150):
        n_classes = int(rng.integers(2, 4))
        n = int(rng.integers(1, 40))
        truth = rng.integers(0, n_classes, n)
        pred = rng.integers(0, n_classes, n)
        mine = f1_score(truth, pred, n_classes)
        oracle = _confusion_oracle_f1(truth, pred, n_classes)
        assert mine == pytest.approx(oracle, rel=1e-9, abs=1e-12)
        macro = f1_score(truth, pred, n_classes, average="macro")
        assert macro == pytest.approx(
            _confusion_oracle_f1(truth, pred, n_classes, weighted=False),
            rel=1e-9, abs=1e-12,
        )
        assert 0.0 <= mine <= 1.0
        assert 0.0 <= accuracy_score(truth, pred) <= 1.0


def test_weighted_equals_macro_for_equal_support():
    truth = np.array([0, 0, 1, 1])
    pred = np.array([0, 0, 1, 0])
    w = f1_score(truth, pred, 2, average="weighted")
    m = f1_score(truth, pred, 2, average="macro")
    assert w == pytest.approx(m)


def test_metric_bounds_rmse_nonnegative():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert rmse_score(a, b) >= 0.0


def test_label_invariance_under_response_reordering():
    rng = np.random.default_rng(19)
    for _ in range(30):
        levels = rng.integers(1, 6, size=int(rng.integers(1, 15))).tolist()
        responses = [_resp("u", i, lv) for i, lv in enumerate(levels)]
        shuffled = [responses[i] for i in rng.permutation(len(responses))]
        a = {(r.t, r.level): lab.value for r, lab in zip(responses, label_stress(responses))}
        b = {(r.t, r.level): lab.value for r, lab in zip(shuffled, label_stress(shuffled))}
        assert a == b
