"""Pure numpy kernels: reference implementation of both training loops.

The compiled backend mirrors these computations operation for operation
(same formulas, same dropout counters, same update order); only matmul
accumulation order differs, so the two backends agree to float tolerance
but are each bit-deterministic on their own.
"""

from __future__ import annotations

import numpy as np

from .rng import dropout_mask
from .specs import LOSS_RMSE, LOSS_SOFTMAX_CE

NAME = "python"


# ---------------------------------------------------------------------------
# Losses: return (mean loss, gradient w.r.t. network output)
# ---------------------------------------------------------------------------


def _softmax_ce(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    b = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    picked = logits[np.arange(b), targets]
    loss = float(np.mean(np.log(s[:, 0]) + m[:, 0] - picked))
    grad = e / s
    grad[np.arange(b), targets] -= 1.0
    return loss, grad / b


def _rmse(output: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    b = output.shape[0]
    r = output[:, 0] - targets
    mse = float(np.dot(r, r)) / b
    loss = float(np.sqrt(mse))
    grad = np.zeros_like(output)
    if loss > 0.0:
        grad[:, 0] = r / (b * loss)
    return loss, grad


def _loss_and_output_grad(output, y_int, y_real, loss_kind):
    if loss_kind == LOSS_SOFTMAX_CE:
        return _softmax_ce(output, y_int)
    if loss_kind == LOSS_RMSE:
        return _rmse(output, y_real)
    raise ValueError(f"unknown loss kind {loss_kind}")


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def _mlp_views(params: np.ndarray, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    views = []
    off = 0
    for l in range(len(sizes) - 1):
        din, dout = sizes[l], sizes[l + 1]
        w = params[off : off + din * dout].reshape(din, dout)
        off += din * dout
        b = params[off : off + dout]
        off += dout
        views.append((w, b))
    return views


def mlp_forward(
    params: np.ndarray,
    x: np.ndarray,
    sizes,
    drops,
    training: bool = False,
    drop_seed: int = 0,
    step: int = 0,
    batch_cap: int | None = None,
    dim_cap: int | None = None,
) -> np.ndarray:
    """Activations of the final layer (logits / regression output)."""
    n_layers = len(sizes) - 1
    batch_cap = batch_cap if batch_cap is not None else x.shape[0]
    dim_cap = dim_cap if dim_cap is not None else int(max(sizes[1:]))
    a = x
    for l, (w, b) in enumerate(_mlp_views(params, sizes)):
        z = a @ w + b
        h = np.maximum(z, 0.0) if l < n_layers - 1 else z
        if training and drops[l] > 0.0:
            h = h * dropout_mask(
                drop_seed, step, l, n_layers, batch_cap, dim_cap,
                h.shape[0], h.shape[1], drops[l],
            )
        a = h
    return a


def mlp_loss_grad(
    params: np.ndarray,
    x: np.ndarray,
    y_int: np.ndarray,
    y_real: np.ndarray,
    sizes,
    drops,
    loss_kind: int,
    training: bool,
    drop_seed: int,
    step: int,
    batch_cap: int,
    dim_cap: int,
) -> tuple[float, np.ndarray]:
    n_layers = len(sizes) - 1
    views = _mlp_views(params, sizes)
    acts = [x]
    zs = []
    masks: list[np.ndarray | None] = []
    a = x
    for l, (w, b) in enumerate(views):
        z = a @ w + b
        zs.append(z)
        h = np.maximum(z, 0.0) if l < n_layers - 1 else z
        if training and drops[l] > 0.0:
            mask = dropout_mask(
                drop_seed, step, l, n_layers, batch_cap, dim_cap,
                h.shape[0], h.shape[1], drops[l],
            )
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
        acts.append(h)
        a = h

    loss, g = _loss_and_output_grad(a, y_int, y_real, loss_kind)

    grad = np.zeros_like(params)
    gviews = _mlp_views(grad, sizes)
    for l in range(n_layers - 1, -1, -1):
        if masks[l] is not None:
            g = g * masks[l]
        if l < n_layers - 1:
            g = g * (zs[l] > 0.0)
        gw, gb = gviews[l]
        gw += acts[l].T @ g
        gb += g.sum(axis=0)
        if l > 0:
            g = g @ views[l][0].T
    return loss, grad


def mlp_train(
    params: np.ndarray,
    x: np.ndarray,
    y_int: np.ndarray,
    y_real: np.ndarray,
    sizes,
    drops,
    loss_kind: int,
    perms: np.ndarray,
    batch_size: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    drop_seed: int,
) -> tuple[np.ndarray, int]:
    """Adam over shuffled mini-batches; mutates ``params`` in place.

    Returns (per-epoch mean loss, diverged_epoch) where diverged_epoch is -1
    unless a non-finite loss appeared.
    """
    n = x.shape[0]
    n_epochs = perms.shape[0]
    n_batches = (n + batch_size - 1) // batch_size
    dim_cap = int(max(sizes[1:]))
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    b1t = 1.0
    b2t = 1.0
    losses = np.zeros(n_epochs)
    step = 0
    for epoch in range(n_epochs):
        perm = perms[epoch]
        acc = 0.0
        for bi in range(n_batches):
            idx = perm[bi * batch_size : (bi + 1) * batch_size]
            xb = x[idx]
            loss, grad = mlp_loss_grad(
                params, xb,
                y_int[idx] if y_int.size else y_int,
                y_real[idx] if y_real.size else y_real,
                sizes, drops, loss_kind,
                True, drop_seed, step, batch_size, dim_cap,
            )
            if not np.isfinite(loss):
                return losses, epoch
            step += 1
            b1t *= beta1
            b2t *= beta2
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            params -= lr * (m / (1.0 - b1t)) / (np.sqrt(v / (1.0 - b2t)) + eps)
            acc += loss * idx.shape[0]
        losses[epoch] = acc / n
    return losses, -1


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


def _lstm_views(params: np.ndarray, dims):
    f, h, d, c = dims
    off = 0

    def take(n):
        nonlocal off
        out = params[off : off + n]
        off += n
        return out

    wx = take(f * 4 * h).reshape(f, 4 * h)
    wh = take(h * 4 * h).reshape(h, 4 * h)
    b = take(4 * h)
    w1 = take(h * d).reshape(h, d)
    b1 = take(d)
    w2 = take(d * c).reshape(d, c)
    b2 = take(c)
    return wx, wh, b, w1, b1, w2, b2


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(
    params: np.ndarray,
    x: np.ndarray,
    dims,
    drop_rate: float,
    training: bool = False,
    drop_seed: int = 0,
    step: int = 0,
    batch_cap: int | None = None,
    dim_cap: int | None = None,
) -> np.ndarray:
    out, _ = _lstm_run(
        params, x, dims, drop_rate, training, drop_seed, step,
        batch_cap if batch_cap is not None else x.shape[0],
        dim_cap if dim_cap is not None else dims[1],
    )
    return out


def _lstm_run(params, x, dims, drop_rate, training, drop_seed, step, batch_cap, dim_cap):
    f, hn, d, c = dims
    b, t, _ = x.shape
    wx, wh, bias, w1, b1, w2, b2 = _lstm_views(params, dims)
    h = np.zeros((b, hn))
    cc = np.zeros((b, hn))
    cache = {"i": [], "f": [], "g": [], "o": [], "c_prev": [], "tc": [], "h_prev": []}
    for ts in range(t):
        gates = x[:, ts, :] @ wx + h @ wh + bias
        gi = _sigmoid(gates[:, :hn])
        gf = _sigmoid(gates[:, hn : 2 * hn])
        gg = np.tanh(gates[:, 2 * hn : 3 * hn])
        go = _sigmoid(gates[:, 3 * hn :])
        cache["h_prev"].append(h)
        cache["c_prev"].append(cc)
        cc = gf * cc + gi * gg
        tc = np.tanh(cc)
        h = go * tc
        cache["i"].append(gi)
        cache["f"].append(gf)
        cache["g"].append(gg)
        cache["o"].append(go)
        cache["tc"].append(tc)
    mask = None
    hd = h
    if training and drop_rate > 0.0:
        mask = dropout_mask(
            drop_seed, step, 0, 1, batch_cap, dim_cap, b, hn, drop_rate
        )
        hd = h * mask
    z1 = hd @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    out = a1 @ w2 + b2
    cache.update({"mask": mask, "hd": hd, "z1": z1, "a1": a1, "h_last": h})
    return out, cache


def lstm_loss_grad(
    params: np.ndarray,
    x: np.ndarray,
    y_int: np.ndarray,
    y_real: np.ndarray,
    dims,
    drop_rate: float,
    loss_kind: int,
    training: bool,
    drop_seed: int,
    step: int,
    batch_cap: int,
    dim_cap: int,
) -> tuple[float, np.ndarray]:
    f, hn, d, c = dims
    t = x.shape[1]
    wx, wh, bias, w1, b1, w2, b2 = _lstm_views(params, dims)
    out, cache = _lstm_run(
        params, x, dims, drop_rate, training, drop_seed, step, batch_cap, dim_cap
    )
    loss, g = _loss_and_output_grad(out, y_int, y_real, loss_kind)

    grad = np.zeros_like(params)
    gwx, gwh, gb, gw1, gb1, gw2, gb2 = _lstm_views(grad, dims)

    gw2 += cache["a1"].T @ g
    gb2 += g.sum(axis=0)
    da1 = g @ w2.T
    dz1 = da1 * (cache["z1"] > 0.0)
    gw1 += cache["hd"].T @ dz1
    gb1 += dz1.sum(axis=0)
    dh = dz1 @ w1.T
    if cache["mask"] is not None:
        dh = dh * cache["mask"]

    dc = np.zeros_like(dh)
    for ts in range(t - 1, -1, -1):
        gi, gf, gg, go = (cache[k][ts] for k in ("i", "f", "g", "o"))
        tc = cache["tc"][ts]
        c_prev = cache["c_prev"][ts]
        do = dh * tc
        dct = dc + dh * go * (1.0 - tc * tc)
        di = dct * gg
        df = dct * c_prev
        dg = dct * gi
        dc = dct * gf
        dgates = np.concatenate(
            [
                di * gi * (1.0 - gi),
                df * gf * (1.0 - gf),
                dg * (1.0 - gg * gg),
                do * go * (1.0 - go),
            ],
            axis=1,
        )
        gwx += x[:, ts, :].T @ dgates
        gwh += cache["h_prev"][ts].T @ dgates
        gb += dgates.sum(axis=0)
        dh = dgates @ wh.T
    return loss, grad


def lstm_train(
    params: np.ndarray,
    x: np.ndarray,
    y_int: np.ndarray,
    y_real: np.ndarray,
    dims,
    drop_rate: float,
    loss_kind: int,
    perms: np.ndarray,
    batch_size: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    drop_seed: int,
) -> tuple[np.ndarray, int]:
    n = x.shape[0]
    n_epochs = perms.shape[0]
    n_batches = (n + batch_size - 1) // batch_size
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    b1t = 1.0
    b2t = 1.0
    losses = np.zeros(n_epochs)
    step = 0
    for epoch in range(n_epochs):
        perm = perms[epoch]
        acc = 0.0
        for bi in range(n_batches):
            idx = perm[bi * batch_size : (bi + 1) * batch_size]
            loss, grad = lstm_loss_grad(
                params, x[idx],
                y_int[idx] if y_int.size else y_int,
                y_real[idx] if y_real.size else y_real,
                dims, drop_rate, loss_kind,
                True, drop_seed, step, batch_size, dims[1],
            )
            if not np.isfinite(loss):
                return losses, epoch
            step += 1
            b1t *= beta1
            b2t *= beta2
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            params -= lr * (m / (1.0 - b1t)) / (np.sqrt(v / (1.0 - b2t)) + eps)
            acc += loss * idx.shape[0]
        losses[epoch] = acc / n
    return losses, -1
