"""Shared fixtures: one small planted synthetic dataset per session."""

from __future__ import annotations

import pytest

from phenolab import ingest
from phenolab.synthgen import SynthConfig, generate


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "synth"
    generate(
        SynthConfig(n_users=5, n_days=24, seed=11, planted_group="wifi", effect_size=1.5),
        out,
    )
    return out


@pytest.fixture(scope="session")
def small_dataset(small_synth_dir):
    return ingest.parse_dataset(small_synth_dir)
