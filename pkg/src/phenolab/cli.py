"""Command-line entry point wiring the modules into reproducible runs.

Subcommands: synth, ingest, featurize, train, ablate, gradcheck.
Exit codes: 0 success, 1 validation failure, 2 usage error.

Configuration resolves in three layers: defaults < --config file (JSON or
key=value lines) < explicit flags. The resolved fingerprint is embedded in
every report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import PhenolabError
from .nn import Hyper
from .nn.gradcheck import check_all
from .registry import GROUPS, FeatureRegistry, default_registry
from .tasks import ALL_TASKS, MODEL_FCN, MODEL_LSTM, TASK_PHQ9

_CONFIG_KEYS = {
    "adapter": str,
    "strict": bool,
    "registry": str,
    "max_gap": int,
    "tasks": str,
    "models": str,
    "groups": str,
    "rounds": int,
    "seed_base": int,
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "optimizer": str,
    "f1_average": str,
    "locale": str,
    "jobs": int,
    "use_missing_mask": bool,
    "phq9_standardize": bool,
}


def _parse_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise PhenolabError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    out = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise PhenolabError(f"{path}: unknown config key {key!r}")
        typ = _CONFIG_KEYS[key]
        if typ is bool and isinstance(value, str):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = typ(value)
    return out


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        resolved.update(_parse_config_file(args.config))
    for key in defaults:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    return resolved


def _csv_list(value: str | None, allowed: tuple[str, ...], what: str) -> tuple[str, ...]:
    if value is None:
        return allowed
    items = tuple(v.strip() for v in value.split(",") if v.strip())
    for item in items:
        if item not in allowed:
            raise PhenolabError(f"unknown {what} {item!r} (expected one of {allowed})")
    return items


def _default_jobs() -> int:
    env = os.environ.get("PHENOLAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise PhenolabError(f"PHENOLAB_JOBS={env!r} is not an integer") from None
    return 1


def _load_registry(path: str | None) -> FeatureRegistry:
    if path is None:
        return default_registry()
    return FeatureRegistry.load_manifest(path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    from .synthgen import SynthConfig, generate

    cfg = SynthConfig(
        n_users=args.users,
        n_days=args.days,
        seed=args.seed,
        planted_group=args.plant,
        effect_size=args.effect,
        noise_scale=args.noise,
    )
    out = generate(cfg, args.out)
    print(f"wrote synthetic dataset to {out} (users={cfg.n_users} days={cfg.n_days})")
    return 0


def _data_options(args) -> dict:
    return _merge(args, {"adapter": "canonical", "strict": False})


def _cmd_ingest(args) -> int:
    from . import ingest

    opts = _data_options(args)
    ds = ingest.parse_dataset(args.data, adapter=opts["adapter"], strict=opts["strict"])
    print(
        f"parsed {len(ds.users)} users; "
        + " ".join(f"{name}={len(getattr(ds, name))}" for name in ds.STREAMS)
    )
    skipped = ds.report.total_skipped
    if skipped:
        print(f"skipped {skipped} malformed rows:")
        print(ds.report.summary())
    else:
        print("no malformed rows")
    for name in ds.STREAMS:
        rep = ingest.validate_stream(getattr(ds, name))
        if rep.dropped:
            print(f"{name}: {rep.dropped} invariant violations {rep.dropped_by_reason}")
    if args.out:
        ingest.write_canonical(ds, args.out)
        print(f"wrote normalized canonical copy to {args.out}")
    return 0


def _cmd_featurize(args) -> int:
    from . import ingest
    from .featurize import build_feature_matrix, fit_wifi_tops, write_features_csv
    from .tasks import chronological_day_cut, stress_response_days

    opts = _merge(args, {"adapter": "canonical", "strict": False, "max_gap": 600})
    ds = ingest.parse_dataset(args.data, adapter=opts["adapter"], strict=opts["strict"])
    registry = _load_registry(args.registry)
    max_gap = opts["max_gap"]
    if args.fit == "train80":
        train_days, _ = chronological_day_cut(
            [d for _, d in stress_response_days(ds)]
        )
        tops = fit_wifi_tops(ds, train_days=set(train_days), max_gap=max_gap)
    else:
        tops = fit_wifi_tops(ds, max_gap=max_gap)
    matrix = build_feature_matrix(ds, registry, tops, max_gap)
    write_features_csv(matrix, args.out)
    print(
        f"wrote {matrix.n_rows} feature vectors x {len(registry)} features to {args.out}"
    )
    if args.dump_registry:
        registry.dump_manifest(args.dump_registry)
        print(f"wrote registry manifest to {args.dump_registry}")
    return 0


def _ablation_config(args):
    from .runner import AblationConfig

    defaults = {
        "adapter": "canonical",
        "strict": False,
        "registry": None,
        "max_gap": 600,
        "tasks": None,
        "models": None,
        "groups": None,
        "rounds": 50,
        "seed_base": 0,
        "lr": 1e-3,
        "batch_size": 32,
        "epochs": 100,
        "optimizer": "adam",
        "f1_average": "weighted",
        "locale": "point",
        "jobs": _default_jobs(),
        "use_missing_mask": False,
        "phq9_standardize": True,
    }
    r = _merge(args, defaults)
    config = AblationConfig(
        tasks=_csv_list(r["tasks"], ALL_TASKS, "task"),
        models=_csv_list(r["models"], (MODEL_FCN, MODEL_LSTM), "model"),
        groups=_csv_list(r["groups"], GROUPS, "group"),
        rounds=r["rounds"],
        seed_base=r["seed_base"],
        hyper=Hyper(
            optimizer=r["optimizer"], lr=r["lr"],
            batch_size=r["batch_size"], epochs=r["epochs"],
        ),
        max_gap=r["max_gap"],
        use_missing_mask=r["use_missing_mask"],
        f1_average=r["f1_average"],
        locale=r["locale"],
        jobs=r["jobs"],
        phq9_standardize=r["phq9_standardize"],
    )
    return config, r


def _cmd_ablate(args) -> int:
    from . import ingest
    from .runner import emit, fingerprint, run_ablation

    config, resolved = _ablation_config(args)
    registry = _load_registry(resolved["registry"])
    ds = ingest.parse_dataset(args.data, adapter=resolved["adapter"], strict=resolved["strict"])
    print(f"config fingerprint: {fingerprint(config, registry)}")
    report = run_ablation(ds, config, registry)
    payload = emit(report, args.format)
    Path(args.out).write_bytes(payload)
    print(f"wrote {args.format} report to {args.out} ({len(report.cells)} cells)")
    return 0


def _cmd_train(args) -> int:
    import numpy as np

    from . import ingest
    from .nn import save_model
    from .runner import (
        ALL_FEATURES,
        AblationConfig,
        _run_phq9_cell,
        _run_stress_cell,
        prepare_ablation,
    )
    from .tasks import TaskConfig, group_columns

    config, resolved = _ablation_config(args)
    registry = _load_registry(resolved["registry"])
    task, model, group = args.task, args.model, args.group
    TaskConfig(task, model)  # validates the pairing
    one_task = AblationConfig(
        tasks=(task,), models=(model,), groups=config.groups,
        rounds=1, seed_base=args.seed, hyper=config.hyper,
        max_gap=config.max_gap, use_missing_mask=config.use_missing_mask,
        f1_average=config.f1_average, phq9_standardize=config.phq9_standardize,
    )
    ds = ingest.parse_dataset(args.data, adapter=resolved["adapter"], strict=resolved["strict"])
    prepared = prepare_ablation(ds, one_task, registry)

    if task == TASK_PHQ9:
        from .runner import _phq9_group_cols, _slice_group

        cols = _phq9_group_cols(registry, group)
        folds = [
            (_slice_group(f.x_train, cols), f.y_train,
             _slice_group(f.x_test, cols), f.y_test)
            for f in prepared.phq9_folds
        ]
        _, metric_values, failed, _ = _run_phq9_cell(
            ((task, model, group), folds, one_task.hyper, 1, args.seed)
        )
        vals = metric_values["rmse"]
        print(f"phq9 fcn group={group}: rmse mean {np.mean(vals):.4f} over {len(vals)} folds")
    else:
        from .runner import _slice_group

        data = prepared.stress[(task, model)]
        onehot = data.x_train.shape[-1] - len(registry) * (
            2 if one_task.use_missing_mask else 1
        )
        cols = group_columns(
            registry, None if group == ALL_FEATURES else group,
            data.x_train.shape[-1] - onehot, onehot, one_task.use_missing_mask,
        )
        _, metric_values, failed, _ = _run_stress_cell((
            (task, model, group),
            _slice_group(data.x_train, cols), data.y_train,
            _slice_group(data.x_test, cols), data.y_test,
            data.n_classes, model, one_task.hyper, 1, args.seed,
            one_task.f1_average, task,
        ))
        if failed:
            print("training diverged")
            return 1
        print(
            f"{task} {model} group={group} seed={args.seed}: "
            f"accuracy {metric_values['accuracy'][0]:.4f} "
            f"f1 {metric_values['f1'][0]:.4f}"
        )
        if args.export_examples or args.export_split:
            from .tasks import (
                export_examples,
                export_split,
                make_examples,
                prepare_stress_base,
                stress_split,
            )

            base = prepare_stress_base(
                ds, registry, one_task.max_gap, one_task.use_missing_mask
            )
            examples = make_examples(base, TaskConfig(task, model))
            if args.export_examples:
                export_examples(examples, args.export_examples)
                print(f"wrote examples to {args.export_examples}")
            if args.export_split:
                export_split(stress_split(base, examples), args.export_split)
                print(f"wrote split manifest to {args.export_split}")
        if args.save_model:
            from .nn import fcn_stress_spec, lstm_stress_spec, train as nn_train

            x = _slice_group(data.x_train, cols)
            spec = (
                lstm_stress_spec(x.shape[2], data.n_classes, args.seed)
                if model == MODEL_LSTM
                else fcn_stress_spec(x.shape[1], data.n_classes, args.seed)
            )
            trained = nn_train(spec, x, data.y_train, one_task.hyper)
            save_model(trained, args.save_model)
            print(f"saved model to {args.save_model}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = check_all(args.trials, args.epsilon, args.tolerance, args.seed)
    all_pass = True
    for name, r in results.items():
        status = "pass" if r.passed else "FAIL"
        print(
            f"{name}: {status} (max relative error {r.worst:.3e} "
            f"< {r.tolerance:g} over {r.n_trials} trials)"
        )
        all_pass &= r.passed
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="phenolab",
        description="Passive-sensing features and feature-group ablation runs.",
    )
    p.add_argument("--version", action="version", version=f"phenolab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--users", type=int, default=48)
    sp.add_argument("--days", type=int, default=70)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--plant", choices=("wifi",), default=None,
                    help="feature group carrying the planted signal")
    sp.add_argument("--effect", type=float, default=1.0)
    sp.add_argument("--noise", type=float, default=1.0)
    sp.set_defaults(func=_cmd_synth)

    def add_data_flags(q, with_out=False):
        q.add_argument("--data", required=True, help="dataset directory")
        q.add_argument("--adapter", choices=("canonical", "studentlife"), default=None)
        q.add_argument("--strict", action="store_true", default=None,
                       help="treat malformed rows as errors")
        q.add_argument("--config", default=None, help="config file (JSON or key=value)")

    sp = sub.add_parser("ingest", help="validate and normalize a dataset")
    add_data_flags(sp)
    sp.add_argument("--out", default=None, help="write a normalized canonical copy")
    sp.set_defaults(func=_cmd_ingest, adapter_default="canonical")

    sp = sub.add_parser("featurize", help="emit features.csv")
    add_data_flags(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--registry", default=None, help="registry manifest file")
    sp.add_argument("--max-gap", dest="max_gap", type=int, default=None)
    sp.add_argument("--fit", choices=("all", "train80"), default="all",
                    help="rows used to fit WiFi top-location lists")
    sp.add_argument("--dump-registry", default=None)
    sp.set_defaults(func=_cmd_featurize)

    sp = sub.add_parser("train", help="train a single task/model/group cell")
    add_data_flags(sp)
    sp.add_argument("--task", required=True, choices=ALL_TASKS)
    sp.add_argument("--model", choices=(MODEL_FCN, MODEL_LSTM), default=MODEL_FCN)
    sp.add_argument("--group", default="all", choices=("all",) + GROUPS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--registry", default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--save-model", default=None)
    sp.add_argument("--export-examples", dest="export_examples", default=None,
                    help="write task-tagged examples.csv")
    sp.add_argument("--export-split", dest="export_split", default=None,
                    help="write the split manifest as JSON")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("ablate", help="full ablation grid and report")
    add_data_flags(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("csv", "markdown"), default="csv")
    sp.add_argument("--tasks", default=None, help="comma list, e.g. L_H,phq9")
    sp.add_argument("--models", default=None, help="comma list: fcn,lstm")
    sp.add_argument("--groups", default=None, help="comma list of feature groups")
    sp.add_argument("--rounds", type=int, default=None)
    sp.add_argument("--seed-base", dest="seed_base", type=int, default=None)
    sp.add_argument("--registry", default=None)
    sp.add_argument("--max-gap", dest="max_gap", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--locale", choices=("point", "comma"), default=None)
    sp.add_argument("--f1-average", dest="f1_average",
                    choices=("weighted", "macro"), default=None)
    sp.add_argument("--jobs", type=int, default=None,
                    help="worker pool size (PHENOLAB_JOBS is the fallback)")
    sp.add_argument("--use-missing-mask", dest="use_missing_mask",
                    action="store_true", default=None)
    sp.set_defaults(func=_cmd_ablate)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--epsilon", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_gradcheck)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:  # bad option combinations (e.g. phq9 + lstm)
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except PhenolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
