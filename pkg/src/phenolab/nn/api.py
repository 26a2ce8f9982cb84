"""Model-level operations: forward, backward, train, predict.

Gradients used by gradient_check come from the numpy reference kernels;
training dispatches to the active backend. Both paths share initialization,
epoch permutations and the dropout counter stream, so a given (spec.seed,
data, hyper) is bit-reproducible per backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, ShapeError
from . import numpy_backend
from .backend import get_backend_for
from .specs import LOSS_SOFTMAX_CE, ModelSpec, TrainedModel, init_params, rng_streams


@dataclass(frozen=True)
class Hyper:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid hyperparameters")


def _check_batch(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if spec.is_lstm:
        if x.ndim != 3 or x.shape[1] != spec.timesteps or x.shape[2] != spec.n_inputs:
            raise ShapeError(
                f"LSTM batch must be (n, {spec.timesteps}, {spec.n_inputs}), got {x.shape}"
            )
    else:
        if x.ndim != 2 or x.shape[1] != spec.n_inputs:
            raise ShapeError(f"batch must be (n, {spec.n_inputs}), got {x.shape}")
    return x


def _split_targets(spec: ModelSpec, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if spec.loss_kind == LOSS_SOFTMAX_CE:
        y_int = np.ascontiguousarray(y, dtype=np.int64)
        if y_int.ndim != 1:
            raise ShapeError("classification targets must be a 1-d class index array")
        if y_int.size and (y_int.min() < 0 or y_int.max() >= spec.n_outputs):
            raise ShapeError("class index out of range")
        return y_int, np.zeros(0, dtype=np.float64)
    y_real = np.ascontiguousarray(y, dtype=np.float64).reshape(-1)
    return np.zeros(0, dtype=np.int64), y_real


def forward(
    model: TrainedModel,
    batch: np.ndarray,
    training: bool = False,
    drop_seed: int = 0,
    step: int = 0,
) -> np.ndarray:
    """Network output (logits for classification, column for regression).

    training=True applies inverted dropout with the counter-based stream;
    inference needs no rescaling.
    """
    spec = model.spec
    x = _check_batch(spec, batch)
    if spec.is_lstm:
        return numpy_backend.lstm_forward(
            model.parameters, x, spec.layer_sizes, spec.dropout_rates[0],
            training, drop_seed, step,
        )
    return numpy_backend.mlp_forward(
        model.parameters, x, spec.layer_sizes, spec.dropout_rates,
        training, drop_seed, step,
    )


def predict_classes(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, batch), axis=1)


def predict_values(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
    return forward(model, batch)[:, 0]


def loss_and_grad(
    model: TrainedModel,
    batch: np.ndarray,
    targets: np.ndarray,
    training: bool = False,
    drop_seed: int = 0,
    step: int = 0,
    backend=None,
) -> tuple[float, np.ndarray]:
    """Loss and analytic gradient w.r.t. the flat parameter vector."""
    spec = model.spec
    impl = backend if backend is not None else numpy_backend
    x = _check_batch(spec, batch)
    y_int, y_real = _split_targets(spec, targets)
    n = x.shape[0]
    if (y_int.size or y_real.size) != n:
        raise ShapeError("targets length does not match batch")
    if spec.is_lstm:
        return impl.lstm_loss_grad(
            model.parameters, x, y_int, y_real, spec.layer_sizes,
            spec.dropout_rates[0], spec.loss_kind, training, drop_seed, step,
            n, spec.layer_sizes[1],
        )
    return impl.mlp_loss_grad(
        model.parameters, x, y_int, y_real,
        np.asarray(spec.layer_sizes, dtype=np.int64),
        np.asarray(spec.dropout_rates, dtype=np.float64),
        spec.loss_kind, training, drop_seed, step,
        n, int(max(spec.layer_sizes[1:])),
    )


def backward(
    model: TrainedModel,
    batch: np.ndarray,
    targets: np.ndarray,
    training: bool = False,
    drop_seed: int = 0,
    step: int = 0,
) -> np.ndarray:
    """Gradient vector (same length as the parameters)."""
    return loss_and_grad(model, batch, targets, training, drop_seed, step)[1]


def train(
    spec: ModelSpec,
    x: np.ndarray,
    y: np.ndarray,
    hyper: Hyper | None = None,
    backend=None,
) -> TrainedModel:
    """Adam over shuffled mini-batches for the fixed epoch schedule."""
    hyper = hyper if hyper is not None else Hyper()
    hyper.validate()
    x = _check_batch(spec, x)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("training set is empty")
    y_int, y_real = _split_targets(spec, y)
    if (y_int.size or y_real.size) != n:
        raise ShapeError("targets length does not match batch")

    init_rng, perm_rng, drop_seed = rng_streams(spec.seed)
    params = init_params(spec, init_rng)
    perms = np.stack(
        [perm_rng.permutation(n) for _ in range(hyper.epochs)]
    ).astype(np.int64) if hyper.epochs else np.zeros((0, n), dtype=np.int64)
    perms = np.ascontiguousarray(perms)

    impl = backend if backend is not None else get_backend_for(spec.is_lstm)
    if spec.is_lstm:
        losses, diverged = impl.lstm_train(
            params, x, y_int, y_real, spec.layer_sizes, spec.dropout_rates[0],
            spec.loss_kind, perms, hyper.batch_size,
            hyper.lr, hyper.beta1, hyper.beta2, hyper.eps, drop_seed,
        )
    else:
        losses, diverged = impl.mlp_train(
            params, x, y_int, y_real,
            np.asarray(spec.layer_sizes, dtype=np.int64),
            np.asarray(spec.dropout_rates, dtype=np.float64),
            spec.loss_kind, perms, hyper.batch_size,
            hyper.lr, hyper.beta1, hyper.beta2, hyper.eps, drop_seed,
        )
    if diverged >= 0:
        raise DivergenceError(f"non-finite loss at epoch {diverged}")
    return TrainedModel(spec, params, [float(v) for v in losses])
