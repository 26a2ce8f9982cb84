"""Synthetic generator: determinism, validity, planted-signal wiring."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from phenolab import ingest
from phenolab.synthgen import SynthConfig, generate
from phenolab.tasks import StressClass, prepare_stress_base


def _checksums(root: Path) -> dict[str, str]:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.iterdir())
    }


def test_same_seed_identical_output(tmp_path):
    cfg = SynthConfig(n_users=3, n_days=8, seed=42, planted_group="wifi", effect_size=1.0)
    a = generate(cfg, tmp_path / "a")
    b = generate(cfg, tmp_path / "b")
    assert _checksums(a) == _checksums(b)


def test_different_seed_differs(tmp_path):
    a = generate(SynthConfig(3, 8, seed=1), tmp_path / "a")
    b = generate(SynthConfig(3, 8, seed=2), tmp_path / "b")
    assert _checksums(a) != _checksums(b)


def test_generated_streams_validate_clean(small_dataset):
    for name in small_dataset.STREAMS:
        report = ingest.validate_stream(getattr(small_dataset, name))
        assert report.dropped == 0, (name, report.dropped_by_reason)
    assert small_dataset.report.total_skipped == 0


def test_label_and_score_ranges(small_dataset):
    assert all(1 <= e.level <= 5 for e in small_dataset.ema_stress)
    assert all(0 <= s.score <= 27 for s in small_dataset.phq9)
    assert len(small_dataset.phq9) == len(small_dataset.users)


def test_latent_walk_not_written(small_synth_dir):
    names = {p.name for p in small_synth_dir.iterdir()}
    assert names == set(ingest.CANONICAL_SCHEMAS) | {"dataset.meta"}


def test_planted_wifi_dwell_tracks_stress(tmp_path):
    out = generate(
        SynthConfig(n_users=4, n_days=30, seed=3, planted_group="wifi", effect_size=1.5),
        tmp_path / "planted",
    )
    ds = ingest.parse_dataset(out)
    base = prepare_stress_base(ds)
    reg = base.std_features.registry
    top1 = [d.index for d in reg.defs if d.name.startswith("wifi_") and "user_top1" in d.name]
    rows = base.std_features.row_index()
    low_vals, high_vals = [], []
    for (user, day), label in base.day_labels.items():
        row = rows.get((user, day))
        if row is None:
            continue
        dwell = base.std_features.values[row, top1].sum()
        if label == StressClass.HIGH:
            high_vals.append(dwell)
        elif label == StressClass.LOW:
            low_vals.append(dwell)
    assert np.mean(high_vals) > np.mean(low_vals) + 0.5


def test_null_effect_has_no_dwell_signal(tmp_path):
    out = generate(SynthConfig(n_users=4, n_days=30, seed=3, effect_size=0.0), tmp_path / "null")
    ds = ingest.parse_dataset(out)
    base = prepare_stress_base(ds)
    reg = base.std_features.registry
    top1 = [d.index for d in reg.defs if "user_top1" in d.name]
    rows = base.std_features.row_index()
    low_vals, high_vals = [], []
    for (user, day), label in base.day_labels.items():
        row = rows.get((user, day))
        if row is None:
            continue
        dwell = base.std_features.values[row, top1].sum()
        if label == StressClass.HIGH:
            high_vals.append(dwell)
        elif label == StressClass.LOW:
            low_vals.append(dwell)
    assert abs(np.mean(high_vals) - np.mean(low_vals)) < 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_users=0)
    with pytest.raises(ValueError):
        SynthConfig(planted_group="gps")
    with pytest.raises(ValueError):
        SynthConfig(noise_scale=0.0)
