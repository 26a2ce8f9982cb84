"""Supervised task definitions: stress classification and PHQ-9 regression.

Labeling, chronological / leave-one-user-out splits, example construction
(with user one-hot and LSTM day windows), the two deterministic baselines,
and the evaluation metrics.

Leakage rules: the chronological day cut is computed first; per-user label
medians, WiFi top-location lists and standardization statistics all come
from training days only. The user one-hot width is fixed from the full
roster.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DegenerateSplit, ShapeError
from .featurize import (
    DEFAULT_MAX_CARRY_GAP_S,
    FeatureMatrix,
    build_feature_matrix,
    fit_wifi_tops,
    standardize,
)
from .ingest import Dataset, EmaStress, Phq9Score
from .nn.specs import LSTM_WINDOW
from .registry import FeatureRegistry, default_registry
from .timeutil import SECONDS_PER_DAY, day_to_date

TASK_L_H = "L_H"
TASK_LM_H = "LM_H"
TASK_MULTICLASS = "multiclass"
TASK_PHQ9 = "phq9"
STRESS_TASKS = (TASK_L_H, TASK_LM_H, TASK_MULTICLASS)
ALL_TASKS = STRESS_TASKS + (TASK_PHQ9,)

MODEL_FCN = "fcn"
MODEL_LSTM = "lstm"

PHQ9_WINDOW_DAYS = 14
TRAIN_FRACTION = 0.8


class StressClass(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2


@dataclass(frozen=True)
class StressLabel:
    value: StressClass
    user_median: float  # labeling provenance


@dataclass(frozen=True)
class TaskConfig:
    task: str
    model: str = MODEL_FCN
    groups: tuple[str, ...] | None = None  # None = all seven
    n_rounds: int = 50

    def __post_init__(self) -> None:
        if self.task not in ALL_TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.model not in (MODEL_FCN, MODEL_LSTM):
            raise ValueError(f"unknown model {self.model!r}")
        if self.task == TASK_PHQ9 and self.model != MODEL_FCN:
            raise ValueError("phq9 regression only pairs with the FCN model")

    @property
    def n_classes(self) -> int:
        return 3 if self.task == TASK_MULTICLASS else 2


# ---------------------------------------------------------------------------
# Labeling
# ---------------------------------------------------------------------------


def median_midpoint(values: list[int] | list[float]) -> float:
    """Standard median: midpoint of the two middle values for even counts."""
    if not values:
        raise ValueError("median of empty list")
    s = sorted(values)
    n = len(s)
    if n % 2 == 1:
        return float(s[n // 2])
    return (s[n // 2 - 1] + s[n // 2]) / 2.0


def label_stress(
    responses: list[EmaStress], fit_responses: list[EmaStress] | None = None
) -> list[StressLabel]:
    """Label each response against the user's median (strict < / = / >).

    ``fit_responses`` restricts which responses define the median (training
    rows in leak-free pipelines); defaults to the labeled responses.
    """
    fit = fit_responses if fit_responses is not None else responses
    med = median_midpoint([r.level for r in fit])
    out = []
    for r in responses:
        if r.level < med:
            value = StressClass.LOW
        elif r.level > med:
            value = StressClass.HIGH
        else:
            value = StressClass.MEDIUM
        out.append(StressLabel(value, med))
    return out


def collapse_day_labels(labels: list[StressClass]) -> StressClass:
    """Day-median label for multiple same-day responses; ties toward lower."""
    s = sorted(labels)
    n = len(s)
    if n % 2 == 1:
        return s[n // 2]
    return min(s[n // 2 - 1], s[n // 2])


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

POLICY_CHRONOLOGICAL = "chronological_80_20"
POLICY_LOUO = "leave_one_user_out"


@dataclass
class Split:
    train_rows: np.ndarray
    test_rows: np.ndarray
    policy: str
    held_out_user: str | None = None


def chronological_day_cut(dates: list[date]) -> tuple[list[date], list[date]]:
    """First 80% of distinct study days train, the rest test; ties to train."""
    days = sorted(set(dates))
    cut = int(len(days) * TRAIN_FRACTION)
    train, test = days[:cut], days[cut:]
    if not train or not test:
        raise DegenerateSplit(
            f"chronological cut over {len(days)} distinct days leaves an empty side"
        )
    return train, test


def split(examples, policy: str):
    """Split examples by policy; LOUO returns one Split per held-out user."""
    if policy == POLICY_CHRONOLOGICAL:
        train_days, test_days = chronological_day_cut(list(examples.dates))
        train_set = set(train_days)
        rows = np.arange(len(examples.dates))
        in_train = np.array([d in train_set for d in examples.dates], dtype=bool)
        sp = Split(rows[in_train], rows[~in_train], policy)
        if sp.train_rows.size == 0 or sp.test_rows.size == 0:
            raise DegenerateSplit("chronological split left an empty side")
        return sp
    if policy == POLICY_LOUO:
        users = list(examples.users)
        rows = np.arange(len(users))
        splits = []
        for user in sorted(set(users)):
            mask = np.array([u == user for u in users], dtype=bool)
            sp = Split(rows[~mask], rows[mask], policy, held_out_user=user)
            if sp.train_rows.size == 0 or sp.test_rows.size == 0:
                raise DegenerateSplit(f"LOUO fold for {user!r} leaves an empty side")
            splits.append(sp)
        return splits
    raise ValueError(f"unknown split policy {policy!r}")


# ---------------------------------------------------------------------------
# Stress examples
# ---------------------------------------------------------------------------


@dataclass
class StressExamples:
    task: str
    model: str
    x: np.ndarray  # (n, width) for FCN, (n, window, width) for LSTM
    y: np.ndarray  # int64 class indices
    users: list[str]
    dates: list[date]
    n_classes: int
    n_feature_cols: int  # leading standardized feature columns (+ mask block)
    onehot_width: int
    dropped_no_history: int = 0
    dropped_unlabeled_user: int = 0
    dropped_out_of_range: int = 0


@dataclass
class StressBase:
    """Task-independent stress pipeline state for one dataset."""

    registry: FeatureRegistry
    std_features: FeatureMatrix
    train_days: list[date]
    test_days: list[date]
    day_labels: dict[tuple[str, date], StressClass]
    medians: dict[str, float]
    roster: list[str]
    use_missing_mask: bool
    dropped_unlabeled_user: int


def stress_response_days(dataset: Dataset) -> dict[tuple[str, date], list[int]]:
    """Raw response levels grouped by (user, local calendar day)."""
    tz = dataset.meta.timezone_offset_s
    out: dict[tuple[str, date], list[int]] = {}
    for r in dataset.ema_stress:
        local_day = day_to_date((r.t + tz) // SECONDS_PER_DAY)
        out.setdefault((r.user, local_day), []).append(r.level)
    return out


def prepare_stress_base(
    dataset: Dataset,
    registry: FeatureRegistry | None = None,
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S,
    use_missing_mask: bool = False,
) -> StressBase:
    """Split days, fit leak-free statistics, standardize, label response days."""
    registry = registry if registry is not None else default_registry()
    responses = stress_response_days(dataset)
    if not responses:
        raise DegenerateSplit("dataset has no stress responses")
    train_days, test_days = chronological_day_cut([d for _, d in responses])
    train_set = set(train_days)

    tops = fit_wifi_tops(dataset, train_days=train_set, max_gap=max_gap)
    features = build_feature_matrix(dataset, registry, tops, max_gap)
    fit_rows = np.array(
        [i for i, d in enumerate(features.dates) if d in train_set], dtype=np.int64
    )
    std, _, _ = standardize(features, fit_rows)

    # per-user medians from training-day responses only
    train_levels: dict[str, list[int]] = {}
    for (user, d), levels in responses.items():
        if d in train_set:
            train_levels.setdefault(user, []).extend(levels)
    medians = {u: median_midpoint(lv) for u, lv in train_levels.items()}

    day_labels: dict[tuple[str, date], StressClass] = {}
    dropped_unlabeled = 0
    for (user, d), levels in sorted(responses.items()):
        med = medians.get(user)
        if med is None:  # user has no training-day responses
            dropped_unlabeled += 1
            continue
        per_resp = [
            StressClass.LOW if lv < med else
            StressClass.HIGH if lv > med else StressClass.MEDIUM
            for lv in levels
        ]
        day_labels[(user, d)] = collapse_day_labels(per_resp)

    return StressBase(
        registry, std, train_days, test_days, day_labels, medians,
        list(dataset.users), use_missing_mask, dropped_unlabeled,
    )


def _task_map(task: str, label: StressClass) -> int | None:
    """Map a 3-way label to the task's class index; None drops the row."""
    if task == TASK_MULTICLASS:
        return int(label)
    if task == TASK_L_H:
        if label == StressClass.MEDIUM:
            return None
        return 0 if label == StressClass.LOW else 1
    if task == TASK_LM_H:
        return 1 if label == StressClass.HIGH else 0
    raise ValueError(f"not a stress task: {task!r}")


def make_examples(base: StressBase, config: TaskConfig) -> StressExamples:
    """One example per (user, day with >=1 response), task-filtered.

    FCN rows are [standardized features (+ mask block) | user one-hot]; LSTM
    rows are 5-day windows of the same layout ending on the labeled day.
    """
    std = base.std_features
    row_of = std.row_index()
    roster_index = {u: i for i, u in enumerate(base.roster)}
    onehot_width = len(base.roster)
    feat = std.values
    if base.use_missing_mask:
        feat = np.concatenate([feat, std.mask.astype(np.float64)], axis=1)
    width = feat.shape[1] + onehot_width
    study_start = min(std.dates) if std.dates else None

    xs, ys, users, dates = [], [], [], []
    dropped_history = 0
    dropped_range = 0
    for (user, d), label in sorted(base.day_labels.items()):
        y = _task_map(config.task, label)
        if y is None:
            continue
        if (user, d) not in row_of:
            dropped_range += 1
            continue
        onehot = np.zeros(onehot_width)
        onehot[roster_index[user]] = 1.0
        if config.model == MODEL_LSTM:
            window_days = [d - timedelta(days=k) for k in range(LSTM_WINDOW - 1, -1, -1)]
            if study_start is None or window_days[0] < study_start:
                dropped_history += 1
                continue
            rows = [row_of.get((user, wd)) for wd in window_days]
            if any(r is None for r in rows):
                dropped_history += 1
                continue
            win = np.concatenate(
                [feat[rows], np.tile(onehot, (LSTM_WINDOW, 1))], axis=1
            )
            xs.append(win)
        else:
            xs.append(np.concatenate([feat[row_of[(user, d)]], onehot]))
        ys.append(y)
        users.append(user)
        dates.append(d)

    n_classes = config.n_classes
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        shape = (0, LSTM_WINDOW, width) if config.model == MODEL_LSTM else (0, width)
        x = np.zeros(shape)
    return StressExamples(
        config.task, config.model, x, np.asarray(ys, dtype=np.int64),
        users, dates, n_classes, feat.shape[1], onehot_width,
        dropped_history, base.dropped_unlabeled_user, dropped_range,
    )


def stress_split(base: StressBase, examples: StressExamples) -> Split:
    """Row split induced by the precomputed chronological day cut."""
    train_set = set(base.train_days)
    rows = np.arange(len(examples.dates))
    in_train = np.array([d in train_set for d in examples.dates], dtype=bool)
    sp = Split(rows[in_train], rows[~in_train], POLICY_CHRONOLOGICAL)
    if sp.train_rows.size == 0 or sp.test_rows.size == 0:
        raise DegenerateSplit(
            f"task {examples.task}/{examples.model}: empty train or test side"
        )
    return sp


def group_columns(
    registry: FeatureRegistry,
    group: str | None,
    n_feature_cols: int,
    onehot_width: int,
    use_missing_mask: bool,
) -> np.ndarray:
    """Column indices of one feature group (or all) plus the user one-hot."""
    if group is None or group == "all":
        cols = list(range(n_feature_cols))
    else:
        idx = registry.group_indices(group)
        cols = list(idx)
        if use_missing_mask:
            cols += [len(registry) + i for i in idx]
    cols += list(range(n_feature_cols, n_feature_cols + onehot_width))
    return np.asarray(cols, dtype=np.int64)


# ---------------------------------------------------------------------------
# PHQ-9 examples
# ---------------------------------------------------------------------------


@dataclass
class Phq9Examples:
    x: np.ndarray  # (n, 2 * registry length): per-feature window mean then std
    y: np.ndarray  # float64 scores
    users: list[str]
    dates: list[date] = field(default_factory=list)  # unused; kept for split()
    excluded_users: list[str] = field(default_factory=list)


def phq9_window(study_end: date) -> list[date]:
    return [study_end - timedelta(days=k) for k in range(PHQ9_WINDOW_DAYS - 1, -1, -1)]


def make_phq9_examples(
    features: FeatureMatrix, phq9: list[Phq9Score], study_end: date
) -> Phq9Examples:
    """Per scored user: mean and population std of each feature over the two
    weeks leading up to the study end. Users with no feature days in the
    window are excluded and counted."""
    window = set(phq9_window(study_end))
    rows_by_user: dict[str, list[int]] = {}
    for i, (u, d) in enumerate(zip(features.users, features.dates)):
        if d in window:
            rows_by_user.setdefault(u, []).append(i)

    xs, ys, users, excluded = [], [], [], []
    for score in sorted(phq9, key=lambda s: s.user):
        rows = rows_by_user.get(score.user)
        if not rows:
            excluded.append(score.user)
            continue
        block = features.values[rows]
        mean = block.mean(axis=0)
        std = block.std(axis=0)  # population (ddof=0)
        xs.append(np.concatenate([mean, std]))
        ys.append(float(score.score))
        users.append(score.user)
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        x = np.zeros((0, 2 * features.values.shape[1]))
    return Phq9Examples(x, np.asarray(ys, dtype=np.float64), users, [], excluded)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


@dataclass
class MostFrequentPredictor:
    per_user: dict[str, int]
    global_mode: int

    def predict(self, users: list[str]) -> np.ndarray:
        return np.asarray(
            [self.per_user.get(u, self.global_mode) for u in users], dtype=np.int64
        )


def _mode_lowest(labels: list[int]) -> int:
    counts: dict[int, int] = {}
    for v in labels:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def most_frequent_baseline(train_labels_by_user: dict[str, list[int]]) -> MostFrequentPredictor:
    """Per-user mode of training labels; ties toward the lower class index;
    users unseen in training fall back to the global mode."""
    if not train_labels_by_user:
        raise ValueError("no training labels")
    per_user = {u: _mode_lowest(lv) for u, lv in train_labels_by_user.items() if lv}
    all_labels = [v for lv in train_labels_by_user.values() for v in lv]
    return MostFrequentPredictor(per_user, _mode_lowest(all_labels))


def mean_baseline(train_scores: list[float] | np.ndarray) -> float:
    scores = np.asarray(train_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no training scores")
    return float(scores.mean())


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricResult:
    accuracy: float | None = None
    f1: float | None = None
    rmse: float | None = None


def accuracy_score(truth: np.ndarray, pred: np.ndarray) -> float:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    return float(np.mean(truth == pred)) if truth.size else 0.0


def f1_score(
    truth: np.ndarray, pred: np.ndarray, n_classes: int, average: str = "weighted"
) -> float:
    """Per-class F1 combined by support weights (default) or macro mean.

    Zero-denominator precision/recall/F1 fall back to 0.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    f1s = np.zeros(n_classes)
    support = np.zeros(n_classes)
    for c in range(n_classes):
        tp = float(np.sum((pred == c) & (truth == c)))
        fp = float(np.sum((pred == c) & (truth != c)))
        fn = float(np.sum((pred != c) & (truth == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s[c] = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        support[c] = tp + fn
    if average == "weighted":
        total = support.sum()
        return float((f1s * support).sum() / total) if total > 0 else 0.0
    if average == "macro":
        present = (support > 0) | np.isin(np.arange(n_classes), pred)
        return float(f1s[present].mean()) if present.any() else 0.0
    raise ValueError(f"unknown F1 average {average!r}")


def rmse_score(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError("rmse: shape mismatch")
    return float(np.sqrt(np.mean((pred - truth) ** 2))) if pred.size else 0.0


def evaluate(
    predictions: np.ndarray,
    truth: np.ndarray,
    task: str,
    n_classes: int = 2,
    f1_average: str = "weighted",
) -> MetricResult:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape[0] != truth.shape[0]:
        raise ShapeError("predictions and truth must have equal length")
    if task == TASK_PHQ9:
        return MetricResult(rmse=rmse_score(predictions, truth))
    return MetricResult(
        accuracy=accuracy_score(truth, predictions),
        f1=f1_score(truth, predictions, n_classes, f1_average),
    )


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def export_examples(examples, path) -> None:
    """examples.csv: task-tagged rows for external analysis."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        task = getattr(examples, "task", TASK_PHQ9)
        writer.writerow(["task", "user", "date", "target"] )
        dates = examples.dates if examples.dates else [""] * len(examples.users)
        for user, d, y in zip(examples.users, dates, examples.y):
            writer.writerow([task, user, d.isoformat() if d else "", repr(float(y))])


def export_split(split_obj: Split, path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "policy": split_obj.policy,
                "held_out_user": split_obj.held_out_user,
                "train_rows": [int(i) for i in split_obj.train_rows],
                "test_rows": [int(i) for i in split_obj.test_rows],
            },
            sort_keys=True,
        ),
        encoding="utf-8",
    )
