"""Model specifications, parameter layout, initialization and serialization.

The three architectures are fixed families; widths are parameters so tests
can run reduced instances. Parameters live in one flat float64 vector laid
out layer by layer (weights row-major, then bias).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FCN_STRESS = "fcn_stress"
LSTM_STRESS = "lstm_stress"
FCN_PHQ9 = "fcn_phq9"

LOSS_SOFTMAX_CE = 0
LOSS_RMSE = 1

LSTM_WINDOW = 5  # past days consumed per stress prediction

MODEL_FORMAT = "phenolab.model/1"


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    layer_sizes: tuple[int, ...]
    dropout_rates: tuple[float, ...]
    n_outputs: int
    seed: int
    timesteps: int = 0  # LSTM only

    @property
    def is_lstm(self) -> bool:
        return self.kind == LSTM_STRESS

    @property
    def loss_kind(self) -> int:
        return LOSS_RMSE if self.kind == FCN_PHQ9 else LOSS_SOFTMAX_CE

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]


def fcn_stress_spec(
    n_inputs: int,
    n_classes: int,
    seed: int,
    hidden: tuple[int, int] = (57, 35),
    dropout_rates: tuple[float, float, float] = (0.35, 0.15, 0.15),
) -> ModelSpec:
    """Dense net: hidden ReLU layers (57, 35) + linear output layer sized to
    the class count; the three dropout rates follow the three layers."""
    sizes = (n_inputs, *hidden, n_classes)
    return ModelSpec(FCN_STRESS, sizes, dropout_rates, n_classes, seed)


def lstm_stress_spec(
    n_inputs: int,
    n_classes: int,
    seed: int,
    units: int = 50,
    dense: int = 15,
    dropout: float = 0.2,
    timesteps: int = LSTM_WINDOW,
) -> ModelSpec:
    """LSTM(units) over `timesteps` days -> dropout -> dense ReLU -> logits."""
    sizes = (n_inputs, units, dense, n_classes)
    return ModelSpec(LSTM_STRESS, sizes, (dropout,), n_classes, seed, timesteps)


def fcn_phq9_spec(
    n_inputs: int,
    seed: int,
    hidden: tuple[int, int, int] = (128, 128, 128),
    dropout: float = 0.3,
) -> ModelSpec:
    """Three 128-unit ReLU+dropout layers and a linear scalar output."""
    sizes = (n_inputs, *hidden, 1)
    return ModelSpec(FCN_PHQ9, sizes, (dropout,) * len(hidden) + (0.0,), 1, seed)


def param_count(spec: ModelSpec) -> int:
    if spec.is_lstm:
        f, h, d, c = spec.layer_sizes
        return f * 4 * h + h * 4 * h + 4 * h + h * d + d + d * c + c
    sizes = spec.layer_sizes
    return sum(sizes[l] * sizes[l + 1] + sizes[l + 1] for l in range(len(sizes) - 1))


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, int]:
    """Independent streams for (init, shuffling, dropout) from one seed."""
    ss = np.random.SeedSequence(seed)
    init_ss, perm_ss, drop_ss = ss.spawn(3)
    drop_seed = int(drop_ss.generate_state(1, np.uint64)[0])
    return np.random.default_rng(init_ss), np.random.default_rng(perm_ss), drop_seed


def init_params(spec: ModelSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform fan-in scaled init (He-style on ReLU layers), zero biases."""
    if rng is None:
        rng = rng_streams(spec.seed)[0]
    chunks: list[np.ndarray] = []

    def dense(fan_in: int, fan_out: int, relu: bool) -> None:
        limit = np.sqrt(6.0 / fan_in) if relu else 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))

    if spec.is_lstm:
        f, h, d, c = spec.layer_sizes
        lim_x, lim_h = 1.0 / np.sqrt(f), 1.0 / np.sqrt(h)
        chunks.append(rng.uniform(-lim_x, lim_x, size=f * 4 * h))
        chunks.append(rng.uniform(-lim_h, lim_h, size=h * 4 * h))
        chunks.append(np.zeros(4 * h))
        dense(h, d, relu=True)
        dense(d, c, relu=False)
    else:
        sizes = spec.layer_sizes
        last = len(sizes) - 2
        for l in range(len(sizes) - 1):
            dense(sizes[l], sizes[l + 1], relu=l < last)
    params = np.concatenate(chunks)
    assert params.shape[0] == param_count(spec)
    return params


@dataclass
class TrainedModel:
    spec: ModelSpec
    parameters: np.ndarray  # flat float64
    train_log: list[float] = field(default_factory=list)  # per-epoch loss


def save_model(model: TrainedModel, path) -> None:
    blob = {
        "format": MODEL_FORMAT,
        "spec": {
            "kind": model.spec.kind,
            "layer_sizes": list(model.spec.layer_sizes),
            "dropout_rates": list(model.spec.dropout_rates),
            "n_outputs": model.spec.n_outputs,
            "seed": model.spec.seed,
            "timesteps": model.spec.timesteps,
        },
        "parameters_b64": base64.b64encode(
            np.ascontiguousarray(model.parameters, dtype="<f8").tobytes()
        ).decode("ascii"),
        "train_log": model.train_log,
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")


def load_model(path) -> TrainedModel:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {blob.get('format')!r}")
    s = blob["spec"]
    spec = ModelSpec(
        s["kind"],
        tuple(s["layer_sizes"]),
        tuple(s["dropout_rates"]),
        s["n_outputs"],
        s["seed"],
        s.get("timesteps", 0),
    )
    params = np.frombuffer(
        base64.b64decode(blob["parameters_b64"]), dtype="<f8"
    ).astype(np.float64)
    if params.shape[0] != param_count(spec):
        raise ValueError("parameter vector length does not match spec")
    return TrainedModel(spec, params, list(blob.get("train_log", [])))
