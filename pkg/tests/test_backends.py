"""Compiled vs numpy kernels: same math, per-backend bit determinism."""

from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from phenolab.nn import (
    Hyper,
    TrainedModel,
    available_backends,
    fcn_phq9_spec,
    fcn_stress_spec,
    get_backend,
    init_params,
    loss_and_grad,
    lstm_stress_spec,
    train,
)

needs_cython = pytest.mark.skipif(
    "cython" not in available_backends(), reason="compiled backend not built"
)


def _specs():
    return [
        (fcn_stress_spec(9, 2, seed=3, hidden=(6, 4)), (12, 9), "int"),
        (fcn_stress_spec(7, 3, seed=1, hidden=(5, 3)), (5, 7), "int"),
        (fcn_phq9_spec(6, seed=2, hidden=(8, 8, 8)), (10, 6), "real"),
        (lstm_stress_spec(4, 2, seed=5, units=5, dense=6, timesteps=3), (7, 3, 4), "int"),
    ]


@needs_cython
@pytest.mark.parametrize("training", [False, True])
def test_loss_grad_agrees_across_backends(training):
    rng = np.random.default_rng(0)
    py = get_backend("python")
    cy = get_backend("cython")
    for spec, shape, target_kind in _specs():
        x = rng.standard_normal(shape)
        y = (
            rng.integers(0, spec.n_outputs, shape[0])
            if target_kind == "int"
            else rng.standard_normal(shape[0])
        )
        model = TrainedModel(spec, init_params(spec))
        l_py, g_py = loss_and_grad(
            model, x, y, training=training, drop_seed=13, step=4, backend=py
        )
        l_cy, g_cy = loss_and_grad(
            model, x, y, training=training, drop_seed=13, step=4, backend=cy
        )
        assert abs(l_py - l_cy) < 1e-12
        denom = np.maximum(np.abs(g_py), 1e-12)
        assert float(np.max(np.abs(g_py - g_cy) / denom)) < 1e-9


@needs_cython
def test_training_trajectories_agree_across_backends():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((60, 9))
    y = rng.integers(0, 2, 60)
    spec = fcn_stress_spec(9, 2, seed=7, hidden=(6, 4))
    h = Hyper(epochs=5, batch_size=16)
    mp = train(spec, x, y, h, backend=get_backend("python"))
    mc = train(spec, x, y, h, backend=get_backend("cython"))
    assert np.allclose(mp.parameters, mc.parameters, rtol=1e-7, atol=1e-10)
    assert np.allclose(mp.train_log, mc.train_log, rtol=1e-9, atol=1e-12)

    x3 = rng.standard_normal((40, 3, 4))
    y3 = rng.integers(0, 2, 40)
    spec3 = lstm_stress_spec(4, 2, seed=2, units=5, dense=6, timesteps=3)
    lp = train(spec3, x3, y3, h, backend=get_backend("python"))
    lc = train(spec3, x3, y3, h, backend=get_backend("cython"))
    assert np.allclose(lp.parameters, lc.parameters, rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("name", available_backends())
def test_each_backend_is_bit_deterministic(name):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 7))
    y = rng.integers(0, 3, 50)
    spec = fcn_stress_spec(7, 3, seed=11, hidden=(5, 3))
    h = Hyper(epochs=4, batch_size=8)
    backend = get_backend(name)
    a = train(spec, x, y, h, backend=backend)
    b = train(spec, x, y, h, backend=backend)
    assert np.array_equal(a.parameters, b.parameters)


def test_backend_module_names():
    for name in available_backends():
        assert get_backend(name).NAME == name


def test_env_var_forces_backend():
    code = (
        "import phenolab.nn as nn; "
        "print(nn.selection(), nn.backend_name(False), nn.backend_name(True))"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "PHENOLAB_BACKEND": "python"},
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.split() == ["python", "python", "python"]


def test_unknown_backend_rejected():
    with pytest.raises(KeyError):
        get_backend("fortran")
