"""Finite-difference verification of the analytic gradients.

Central differences over every parameter of reduced architecture instances,
dropout disabled; the per-parameter relative error uses a small floor so
exact-zero gradients (dead ReLU paths) do not produce spurious ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .api import loss_and_grad
from .specs import (
    ModelSpec,
    TrainedModel,
    fcn_phq9_spec,
    fcn_stress_spec,
    init_params,
    lstm_stress_spec,
)

REL_ERR_FLOOR = 1e-6


def reduced_specs(seed: int = 0) -> dict[str, ModelSpec]:
    """Small instances of the three architectures for verification runs."""
    return {
        "fcn_stress": fcn_stress_spec(7, 2, seed, hidden=(5, 3)),
        "lstm_stress": lstm_stress_spec(3, 2, seed, units=4, dense=5, timesteps=3),
        "fcn_phq9": fcn_phq9_spec(6, seed, hidden=(8, 8, 8)),
    }


@dataclass
class GradCheckResult:
    kind: str
    n_trials: int
    epsilon: float
    tolerance: float
    max_rel_errors: list[float] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.max_rel_errors) if self.max_rel_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def _random_instance(spec: ModelSpec, trial: int, batch: int = 4):
    rng = np.random.default_rng(10_000 + 97 * trial)
    trial_spec = ModelSpec(
        spec.kind, spec.layer_sizes, spec.dropout_rates, spec.n_outputs,
        seed=spec.seed + trial, timesteps=spec.timesteps,
    )
    # Jitter every parameter (biases included) so no pre-activation sits on a
    # ReLU kink, where the loss is genuinely one-sided differentiable.
    params = init_params(trial_spec)
    params += rng.normal(0.0, 0.05, size=params.shape)
    if spec.is_lstm:
        x = rng.standard_normal((batch, spec.timesteps, spec.n_inputs))
    else:
        x = rng.standard_normal((batch, spec.n_inputs))
    if trial_spec.loss_kind == 0:
        y = rng.integers(0, spec.n_outputs, size=batch)
    else:
        y = rng.standard_normal(batch)
    return TrainedModel(trial_spec, params), x, y


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), REL_ERR_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradient_check(
    spec: ModelSpec,
    n_trials: int = 20,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckResult:
    """Analytic vs central finite-difference gradients (dropout off)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    result = GradCheckResult(spec.kind, n_trials, epsilon, tolerance)
    for trial in range(n_trials):
        model, x, y = _random_instance(spec, trial)
        _, analytic = loss_and_grad(model, x, y, training=False)
        numeric = np.zeros_like(analytic)
        theta = model.parameters
        for i in range(theta.shape[0]):
            orig = theta[i]
            theta[i] = orig + epsilon
            up, _ = loss_and_grad(model, x, y, training=False)
            theta[i] = orig - epsilon
            down, _ = loss_and_grad(model, x, y, training=False)
            theta[i] = orig
            numeric[i] = (up - down) / (2.0 * epsilon)
        result.max_rel_errors.append(max_relative_error(analytic, numeric))
    return result


def check_all(
    n_trials: int = 20, epsilon: float = 1e-5, tolerance: float = 1e-4, seed: int = 0
) -> dict[str, GradCheckResult]:
    return {
        name: gradient_check(spec, n_trials, epsilon, tolerance)
        for name, spec in reduced_specs(seed).items()
    }
