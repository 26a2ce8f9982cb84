"""Minimal deterministic differentiable core.

Dense and LSTM architectures, softmax cross-entropy and RMSE losses, Adam,
counter-based dropout, and finite-difference gradient verification. Training
runs on the compiled kernels when available, numpy otherwise (see
`phenolab.nn.backend`).
"""

from .api import (
    Hyper,
    backward,
    forward,
    loss_and_grad,
    predict_classes,
    predict_values,
    train,
)
from .backend import (
    available_backends,
    backend_name,
    get_backend,
    get_backend_for,
    selection,
    set_backend,
)
from .gradcheck import GradCheckResult, check_all, gradient_check, reduced_specs
from .specs import (
    FCN_PHQ9,
    FCN_STRESS,
    LSTM_STRESS,
    LSTM_WINDOW,
    ModelSpec,
    TrainedModel,
    fcn_phq9_spec,
    fcn_stress_spec,
    init_params,
    load_model,
    lstm_stress_spec,
    param_count,
    save_model,
)

__all__ = [
    "Hyper",
    "ModelSpec",
    "TrainedModel",
    "FCN_STRESS",
    "FCN_PHQ9",
    "LSTM_STRESS",
    "LSTM_WINDOW",
    "fcn_stress_spec",
    "fcn_phq9_spec",
    "lstm_stress_spec",
    "init_params",
    "param_count",
    "save_model",
    "load_model",
    "forward",
    "backward",
    "loss_and_grad",
    "train",
    "predict_classes",
    "predict_values",
    "gradient_check",
    "check_all",
    "reduced_specs",
    "GradCheckResult",
    "backend_name",
    "get_backend",
    "get_backend_for",
    "selection",
    "set_backend",
    "available_backends",
]
