"""Finite-difference gradient verification (the full 20-trial sweep runs in
the acceptance suite; this keeps a faster regression version)."""

from __future__ import annotations

import numpy as np
import pytest

from phenolab.nn.api import loss_and_grad
from phenolab.nn.gradcheck import (
    GradCheckResult,
    _random_instance,
    gradient_check,
    max_relative_error,
    reduced_specs,
)


@pytest.mark.parametrize("kind", ["fcn_stress", "lstm_stress", "fcn_phq9"])
def test_reduced_architectures_pass(kind):
    spec = reduced_specs(0)[kind]
    result = gradient_check(spec, n_trials=6, epsilon=1e-5, tolerance=1e-4)
    assert result.passed, result.max_rel_errors
    assert result.worst < 1e-4


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError):
        gradient_check(reduced_specs(0)["fcn_stress"], n_trials=1, epsilon=0.0)


def test_result_shape():
    r = GradCheckResult("fcn_stress", 3, 1e-5, 1e-4, [1e-6, 2e-6, 3e-6])
    assert r.worst == 3e-6 and r.passed


def test_resampled_dropout_masks_break_finite_differences():
    """With dropout on and the mask resampled per evaluation, central
    differences disagree wildly; with the mask held fixed they agree."""
    spec = reduced_specs(0)["fcn_stress"]
    model, x, y = _random_instance(spec, 0)
    eps = 1e-5

    def fd(analytic_step, step_fn):
        _, analytic = loss_and_grad(
            model, x, y, training=True, drop_seed=5, step=analytic_step
        )
        numeric = np.zeros_like(analytic)
        theta = model.parameters
        for i in range(theta.shape[0]):
            orig = theta[i]
            theta[i] = orig + eps
            up, _ = loss_and_grad(
                model, x, y, training=True, drop_seed=5, step=step_fn(2 * i)
            )
            theta[i] = orig - eps
            down, _ = loss_and_grad(
                model, x, y, training=True, drop_seed=5, step=step_fn(2 * i + 1)
            )
            theta[i] = orig
            numeric[i] = (up - down) / (2 * eps)
        return max_relative_error(analytic, numeric)

    fixed_mask_err = fd(0, lambda _call: 0)  # same counter stream every call
    resampled_err = fd(0, lambda call: call + 1)  # fresh mask per evaluation
    assert fixed_mask_err < 1e-4
    assert resampled_err > 10 * fixed_mask_err
