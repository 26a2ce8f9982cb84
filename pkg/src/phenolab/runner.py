"""Ablation protocol: all-features and per-group training over seeded rounds.

The grid is (task x model x {baseline, all, each feature group} x metric).
Stress cells aggregate over `rounds` seeded training runs; PHQ-9 cells
aggregate over leave-one-user-out folds x rounds. Every cell records its
per-round values so aggregation is re-checkable, and failures (divergence)
mark the cell without aborting the grid.

Preparation (featurization, labeling, splits, standardization) is
seed-independent and separated from the seeded training sweep, so repeated
sweeps over one dataset reuse the prepared state.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DegenerateSplit, DivergenceError
from .featurize import (
    DEFAULT_MAX_CARRY_GAP_S,
    build_feature_matrix,
    fit_wifi_tops,
)
from .ingest import Dataset
from .nn import (
    Hyper,
    backend_name,
    fcn_phq9_spec,
    fcn_stress_spec,
    lstm_stress_spec,
    predict_classes,
    predict_values,
    train,
)
from .registry import GROUPS, FeatureRegistry, default_registry
from .tasks import (
    MODEL_FCN,
    MODEL_LSTM,
    STRESS_TASKS,
    TASK_PHQ9,
    TaskConfig,
    evaluate,
    group_columns,
    make_examples,
    make_phq9_examples,
    mean_baseline,
    most_frequent_baseline,
    phq9_window,
    prepare_stress_base,
    stress_split,
)

BASELINE = "baseline"
ALL_FEATURES = "all"

STRESS_METRICS = ("accuracy", "f1")
PHQ9_METRICS = ("rmse",)

HIGHER_IS_BETTER = {"accuracy": True, "f1": True, "rmse": False}


@dataclass(frozen=True)
class AblationConfig:
    tasks: tuple[str, ...] = STRESS_TASKS + (TASK_PHQ9,)
    models: tuple[str, ...] = (MODEL_FCN, MODEL_LSTM)
    groups: tuple[str, ...] = GROUPS
    rounds: int = 50
    seed_base: int = 0
    hyper: Hyper = field(default_factory=Hyper)
    max_gap: int = DEFAULT_MAX_CARRY_GAP_S
    use_missing_mask: bool = False
    f1_average: str = "weighted"
    locale: str = "point"  # decimal separator in rendered tables
    jobs: int = 1
    phq9_standardize: bool = True
    registry_sha: str = ""  # filled by fingerprinting

    def task_models(self) -> list[TaskConfig]:
        out = []
        for task in self.tasks:
            if task == TASK_PHQ9:
                if MODEL_FCN in self.models:
                    out.append(TaskConfig(task, MODEL_FCN, self.groups, self.rounds))
                continue
            for model in self.models:
                out.append(TaskConfig(task, model, self.groups, self.rounds))
        return out


def fingerprint(config: AblationConfig, registry: FeatureRegistry) -> str:
    payload = {
        "version": __version__,
        "registry_sha": registry.sha(),
        "backend_dense": backend_name(False),
        "backend_lstm": backend_name(True),
        "tasks": list(config.tasks),
        "models": list(config.models),
        "groups": list(config.groups),
        "rounds": config.rounds,
        "seed_base": config.seed_base,
        "hyper": {
            "optimizer": config.hyper.optimizer,
            "lr": config.hyper.lr,
            "batch_size": config.hyper.batch_size,
            "epochs": config.hyper.epochs,
        },
        "max_gap": config.max_gap,
        "use_missing_mask": config.use_missing_mask,
        "f1_average": config.f1_average,
        "locale": config.locale,
        "phq9_standardize": config.phq9_standardize,
    }
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return digest[:16]


@dataclass
class AblationCell:
    task: str
    model: str
    group: str  # BASELINE | ALL_FEATURES | a feature group
    metric: str
    mean: float | None
    std: float | None
    n_runs: int
    failed_runs: int
    rank: int = 0  # 1 = best, 2 = second best, 0 = unmarked
    values: list[float] = field(default_factory=list, repr=False)
    seeds: list[int] = field(default_factory=list, repr=False)

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.task, self.model, self.group, self.metric)


@dataclass
class AblationReport:
    cells: list[AblationCell]
    fingerprint: str
    notes: dict[str, str] = field(default_factory=dict)

    def cell(self, task: str, model: str, group: str, metric: str) -> AblationCell:
        for c in self.cells:
            if c.key == (task, model, group, metric):
                return c
        raise KeyError((task, model, group, metric))


def aggregate(values: list[float]) -> tuple[float | None, float | None]:
    """mean and sample std (n-1); std omitted for fewer than two values."""
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size >= 2 else None
    return mean, std


# ---------------------------------------------------------------------------
# Prepared (seed-independent) state
# ---------------------------------------------------------------------------


@dataclass
class StressCellData:
    task: str
    model: str
    n_classes: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    train_users: list[str]
    test_users: list[str]


@dataclass
class Phq9Fold:
    held_out_user: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


@dataclass
class PreparedAblation:
    registry: FeatureRegistry
    stress: dict[tuple[str, str], StressCellData]  # keyed by (task, model)
    phq9_folds: list[Phq9Fold]
    phq9_excluded: list[str]
    n_features: int  # registry length (phq9 X width is twice this)
    stress_failures: dict[tuple[str, str], str] = field(default_factory=dict)


def _standardize_rows(
    x_train: np.ndarray, x_test: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)  # population (ddof=0)
    safe = np.where(std > 0, std, 1.0)
    z_train = np.where(std > 0, (x_train - mean) / safe, 0.0)
    z_test = np.where(std > 0, (x_test - mean) / safe, 0.0)
    return z_train, z_test


def prepare_ablation(
    dataset: Dataset, config: AblationConfig, registry: FeatureRegistry | None = None
) -> PreparedAblation:
    registry = registry if registry is not None else default_registry()
    stress: dict[tuple[str, str], StressCellData] = {}
    failures: dict[tuple[str, str], str] = {}
    wants_stress = any(t in STRESS_TASKS for t in config.tasks)
    if wants_stress:
        base = prepare_stress_base(
            dataset, registry, config.max_gap, config.use_missing_mask
        )
        for tc in config.task_models():
            if tc.task == TASK_PHQ9:
                continue
            # a task whose filtered examples leave one split side empty marks
            # its own cells failed; the rest of the grid proceeds
            try:
                examples = make_examples(base, tc)
                sp = stress_split(base, examples)
            except DegenerateSplit as exc:
                failures[(tc.task, tc.model)] = str(exc)
                continue
            tr, te = sp.train_rows, sp.test_rows
            stress[(tc.task, tc.model)] = StressCellData(
                tc.task, tc.model, tc.n_classes,
                examples.x[tr], examples.y[tr], examples.x[te], examples.y[te],
                [examples.users[i] for i in tr], [examples.users[i] for i in te],
            )

    phq9_folds: list[Phq9Fold] = []
    phq9_excluded: list[str] = []
    if TASK_PHQ9 in config.tasks and MODEL_FCN in config.models:
        phq9_folds, phq9_excluded = _prepare_phq9(dataset, config, registry)

    return PreparedAblation(
        registry, stress, phq9_folds, phq9_excluded, len(registry), failures
    )


def _prepare_phq9(
    dataset: Dataset, config: AblationConfig, registry: FeatureRegistry
) -> tuple[list[Phq9Fold], list[str]]:
    """Leave-one-user-out folds with per-fold leak-free WiFi top locations."""
    scored_users = sorted({s.user for s in dataset.phq9})
    if len(scored_users) < 2:
        raise DegenerateSplit("PHQ-9 needs at least two scored users")
    window = phq9_window(dataset.meta.study_end)
    folds = []
    excluded: set[str] = set()
    for held_out in scored_users:
        tops = fit_wifi_tops(
            dataset,
            train_users={u for u in dataset.users if u != held_out},
            max_gap=config.max_gap,
        )
        features = build_feature_matrix(
            dataset, registry, tops, config.max_gap, dates=window
        )
        examples = make_phq9_examples(features, dataset.phq9, dataset.meta.study_end)
        excluded.update(examples.excluded_users)
        idx = {u: i for i, u in enumerate(examples.users)}
        if held_out not in idx:
            continue
        test_rows = np.array([idx[held_out]])
        train_rows = np.array([i for u, i in sorted(idx.items()) if u != held_out])
        if train_rows.size == 0:
            raise DegenerateSplit("PHQ-9 fold with no training users")
        x_train, x_test = examples.x[train_rows], examples.x[test_rows]
        if config.phq9_standardize:
            x_train, x_test = _standardize_rows(x_train, x_test)
        folds.append(
            Phq9Fold(
                held_out, x_train, examples.y[train_rows], x_test, examples.y[test_rows]
            )
        )
    return folds, sorted(excluded)


# ---------------------------------------------------------------------------
# Cell workers (top-level functions: picklable for the process pool)
# ---------------------------------------------------------------------------


def _slice_group(x: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x[..., cols])


def _run_stress_cell(payload) -> tuple[tuple[str, str, str], dict, int, list[int]]:
    (key, x_train, y_train, x_test, y_test, n_classes, model_kind,
     hyper, rounds, seed_base, f1_average, task) = payload
    accs: list[float] = []
    f1s: list[float] = []
    seeds = [seed_base + r for r in range(rounds)]
    failed = 0
    for seed in seeds:
        if model_kind == MODEL_LSTM:
            spec = lstm_stress_spec(x_train.shape[2], n_classes, seed)
        else:
            spec = fcn_stress_spec(x_train.shape[1], n_classes, seed)
        try:
            model = train(spec, x_train, y_train, hyper)
        except DivergenceError:
            failed += 1
            continue
        pred = predict_classes(model, x_test)
        res = evaluate(pred, y_test, task, n_classes, f1_average)
        accs.append(res.accuracy)
        f1s.append(res.f1)
    return key, {"accuracy": accs, "f1": f1s}, failed, seeds


def _run_phq9_cell(payload) -> tuple[tuple[str, str, str], dict, int, list[int]]:
    key, folds, hyper, rounds, seed_base = payload
    values: list[float] = []
    failed = 0
    seeds = [seed_base + r for r in range(rounds)]
    for x_train, y_train, x_test, y_test in folds:
        for seed in seeds:
            spec = fcn_phq9_spec(x_train.shape[1], seed)
            try:
                model = train(spec, x_train, y_train, hyper)
            except DivergenceError:
                failed += 1
                continue
            pred = predict_values(model, x_test)
            values.append(float(np.sqrt(np.mean((pred - y_test) ** 2))))
    return key, {"rmse": values}, failed, seeds


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------


def _phq9_group_cols(registry: FeatureRegistry, group: str) -> np.ndarray:
    n = len(registry)
    if group == ALL_FEATURES:
        return np.arange(2 * n, dtype=np.int64)
    idx = registry.group_indices(group)
    return np.asarray(list(idx) + [n + i for i in idx], dtype=np.int64)


def run_prepared(prepared: PreparedAblation, config: AblationConfig) -> AblationReport:
    """Seeded training sweep over the prepared grid."""
    registry = prepared.registry
    cells: list[AblationCell] = []
    jobs: list[tuple] = []

    model_groups = (ALL_FEATURES,) + tuple(config.groups)
    for tc in config.task_models():
        if tc.task == TASK_PHQ9:
            if not prepared.phq9_folds:
                continue
            for group in model_groups:
                cols = _phq9_group_cols(registry, group)
                folds = [
                    (
                        _slice_group(f.x_train, cols), f.y_train,
                        _slice_group(f.x_test, cols), f.y_test,
                    )
                    for f in prepared.phq9_folds
                ]
                jobs.append((
                    (tc.task, tc.model, group), folds, config.hyper,
                    config.rounds, config.seed_base,
                ))
            continue
        data = prepared.stress.get((tc.task, tc.model))
        if data is None:
            continue
        onehot_width = _onehot_width(data, registry, config)
        n_feature_cols = data.x_train.shape[-1] - onehot_width
        for group in model_groups:
            cols = group_columns(
                registry,
                None if group == ALL_FEATURES else group,
                n_feature_cols,
                onehot_width,
                config.use_missing_mask,
            )
            jobs.append((
                (tc.task, tc.model, group),
                _slice_group(data.x_train, cols), data.y_train,
                _slice_group(data.x_test, cols), data.y_test,
                data.n_classes, tc.model, config.hyper, config.rounds,
                config.seed_base, config.f1_average, tc.task,
            ))

    results = _execute(jobs, config.jobs)

    # assemble cells in fixed grid order
    for tc in config.task_models():
        metrics = PHQ9_METRICS if tc.task == TASK_PHQ9 else STRESS_METRICS
        if tc.task == TASK_PHQ9 and not prepared.phq9_folds:
            continue
        if tc.task != TASK_PHQ9 and (tc.task, tc.model) not in prepared.stress:
            reason = prepared.stress_failures.get((tc.task, tc.model))
            if reason is not None:  # degenerate split: whole combo marked failed
                for group in (BASELINE,) + model_groups:
                    runs = 1 if group == BASELINE else config.rounds
                    for metric in metrics:
                        cells.append(
                            AblationCell(
                                tc.task, tc.model, group, metric,
                                None, None, 0, runs,
                            )
                        )
            continue
        baseline_cells = _baseline_cells(prepared, config, tc)
        cells.extend(baseline_cells)
        for group in model_groups:
            key = (tc.task, tc.model, group)
            metric_values, failed, seeds = results[key]
            for metric in metrics:
                values = metric_values[metric]
                mean, std = aggregate(values)
                cells.append(
                    AblationCell(
                        tc.task, tc.model, group, metric, mean, std,
                        len(values), failed, values=values, seeds=seeds,
                    )
                )

    report = AblationReport(
        cells,
        fingerprint(config, registry),
        notes={
            "f1_average": config.f1_average,
            "std": "sample (n-1)",
            "phq9_aggregation": "folds x rounds",
            "backend_dense": backend_name(False),
            "backend_lstm": backend_name(True),
            "locale": config.locale,
        },
    )
    rank_and_mark(report)
    return report


def _onehot_width(data: StressCellData, registry: FeatureRegistry, config: AblationConfig) -> int:
    n_feat = len(registry) * (2 if config.use_missing_mask else 1)
    return data.x_train.shape[-1] - n_feat


def _execute(jobs: list[tuple], n_workers: int) -> dict:
    results = {}
    if n_workers <= 1 or len(jobs) <= 1:
        for payload in jobs:
            out = _dispatch(payload)
            results[out[0]] = out[1:]
        return results
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        for out in pool.map(_dispatch, jobs):
            results[out[0]] = out[1:]
    return results


def _dispatch(payload):
    if len(payload) == 5:  # phq9 payload
        return _run_phq9_cell(payload)
    return _run_stress_cell(payload)


def _baseline_cells(
    prepared: PreparedAblation, config: AblationConfig, tc: TaskConfig
) -> list[AblationCell]:
    if tc.task == TASK_PHQ9:
        values = []
        for f in prepared.phq9_folds:
            const = mean_baseline(f.y_train)
            values.append(float(np.sqrt(np.mean((const - f.y_test) ** 2))))
        mean, _ = aggregate(values)
        return [
            AblationCell(
                tc.task, tc.model, BASELINE, "rmse", mean, None,
                len(values), 0, values=values,
            )
        ]
    data = prepared.stress[(tc.task, tc.model)]
    by_user: dict[str, list[int]] = {}
    for u, y in zip(data.train_users, data.y_train):
        by_user.setdefault(u, []).append(int(y))
    predictor = most_frequent_baseline(by_user)
    pred = predictor.predict(data.test_users)
    res = evaluate(pred, data.y_test, tc.task, data.n_classes, config.f1_average)
    return [
        AblationCell(
            tc.task, tc.model, BASELINE, "accuracy", res.accuracy, None, 1, 0,
            values=[res.accuracy],
        ),
        AblationCell(
            tc.task, tc.model, BASELINE, "f1", res.f1, None, 1, 0, values=[res.f1]
        ),
    ]


def run_ablation(
    dataset: Dataset, config: AblationConfig, registry: FeatureRegistry | None = None
) -> AblationReport:
    """Full protocol: prepare (seed-independent) then sweep (seeded)."""
    prepared = prepare_ablation(dataset, config, registry)
    return run_prepared(prepared, config)


# ---------------------------------------------------------------------------
# Ranking and emission
# ---------------------------------------------------------------------------


def rank_and_mark(report: AblationReport) -> AblationReport:
    """Mark best and second-best non-baseline cell per (task, model, metric).

    Ties break toward lower std, then lexicographic group name.
    """
    rows: dict[tuple[str, str, str], list[AblationCell]] = {}
    for cell in report.cells:
        cell.rank = 0
        if cell.group == BASELINE or cell.mean is None:
            continue
        rows.setdefault((cell.task, cell.model, cell.metric), []).append(cell)
    for (_, _, metric), cells in rows.items():
        higher = HIGHER_IS_BETTER[metric]

        def sort_key(c: AblationCell):
            primary = -c.mean if higher else c.mean
            return (primary, c.std if c.std is not None else 0.0, c.group)

        for rank, cell in enumerate(sorted(cells, key=sort_key)[:2], start=1):
            cell.rank = rank
    return report


def _fmt_number(x: float | None, decimals: int, locale: str) -> str:
    if x is None:
        return ""
    s = f"{x:.{decimals}f}"
    return s.replace(".", ",") if locale == "comma" else s


def _csv_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def emit(report: AblationReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "markdown":
        return _emit_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _emit_csv(report: AblationReport) -> bytes:
    lines = ["# phenolab ablation report v1", f"# fingerprint={report.fingerprint}"]
    note = "; ".join(f"{k}={v}" for k, v in sorted(report.notes.items()))
    lines.append(f"# {note}")
    lines.append("task,model,group,metric,mean,std,n_runs,failed_runs,rank")
    for c in report.cells:
        lines.append(
            f"{c.task},{c.model},{c.group},{c.metric},{_csv_float(c.mean)},"
            f"{_csv_float(c.std)},{c.n_runs},{c.failed_runs},"
            f"{c.rank if c.rank else ''}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def _emit_markdown(report: AblationReport) -> bytes:
    from .registry import GROUP_DISPLAY

    locale = report.notes.get("locale", "point")
    out = [
        "# Ablation report",
        "",
        f"- fingerprint: `{report.fingerprint}`",
    ]
    out.extend(f"- {k}: {v}" for k, v in sorted(report.notes.items()) if k != "locale")
    combos: list[tuple[str, str]] = []
    for c in report.cells:
        if (c.task, c.model) not in combos:
            combos.append((c.task, c.model))
    for task, model in combos:
        cells = [c for c in report.cells if c.task == task and c.model == model]
        groups: list[str] = []
        for c in cells:
            if c.group not in groups:
                groups.append(c.group)
        metrics: list[str] = []
        for c in cells:
            if c.metric not in metrics:
                metrics.append(c.metric)
        percent = task != TASK_PHQ9
        header = [GROUP_DISPLAY.get(g, g.replace("all", "all features")) for g in groups]
        out.append("")
        out.append(f"## {task} / {model.upper()}")
        out.append("")
        out.append("| metric | " + " | ".join(header) + " |")
        out.append("|" + "---|" * (len(groups) + 1))
        by_key = {c.key: c for c in cells}
        for metric in metrics:
            row = [metric]
            for g in groups:
                c = by_key.get((task, model, g, metric))
                if c is None or c.mean is None:
                    row.append("failed" if c is not None else "")
                    continue
                scale = 100.0 if percent else 1.0
                text = _fmt_number(c.mean * scale, 1, locale)
                if c.std is not None:
                    text += " ± " + _fmt_number(c.std * scale, 1, locale)
                if c.rank in (1, 2):
                    text = f"**{text}**"
                row.append(text)
            out.append("| " + " | ".join(row) + " |")
    return ("\n".join(out) + "\n").encode("utf-8")
