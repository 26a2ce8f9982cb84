"""Counter-based uniform RNG shared by both compute backends.

Dropout masks are drawn from a splitmix64 hash of (seed, counter) so the
compiled and numpy kernels consume the *same* logical random stream without
any shared mutable state; counters are derived from (step, layer, row, unit).
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53_INV = float(2.0**-53)


def uniform_from_counters(seed: int, counters: np.ndarray) -> np.ndarray:
    """splitmix64 output in [0, 1) for each uint64 counter."""
    z = np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _TWO53_INV


def mask_counter_base(step: int, layer: int, n_layers: int, batch_cap: int, dim_cap: int) -> int:
    return (step * n_layers + layer) * batch_cap * dim_cap


def dropout_mask(
    seed: int,
    step: int,
    layer: int,
    n_layers: int,
    batch_cap: int,
    dim_cap: int,
    rows: int,
    cols: int,
    rate: float,
) -> np.ndarray:
    """Inverted-dropout mask: 0 for dropped units, 1/(1-rate) for kept ones."""
    base = mask_counter_base(step, layer, n_layers, batch_cap, dim_cap)
    counters = (
        np.uint64(base)
        + np.arange(rows, dtype=np.uint64)[:, None] * np.uint64(dim_cap)
        + np.arange(cols, dtype=np.uint64)[None, :]
    )
    u = uniform_from_counters(seed, counters)
    return (u >= rate) / (1.0 - rate)
