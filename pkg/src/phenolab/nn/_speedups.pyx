# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled training kernels.

Mirrors phenolab.nn.numpy_backend operation for operation: same parameter
layout, same dropout counter scheme, same loss formulas, same Adam update
order. Matmuls are hand-rolled loops arranged for auto-vectorization; only
their accumulation order differs from BLAS, so results match the numpy
backend to float tolerance while being bit-deterministic per backend.
"""

import numpy as np

from libc.math cimport exp, log, sqrt, tanh, INFINITY
from libc.stdint cimport int64_t, uint64_t
from libc.string cimport memcpy, memset

NAME = "cython"


# ---------------------------------------------------------------------------
# splitmix64 counter RNG (bit-identical to phenolab.nn.rng)
# ---------------------------------------------------------------------------

cdef inline double _u01(uint64_t seed, uint64_t counter) noexcept nogil:
    cdef uint64_t z = seed + (counter + 1ULL) * 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


cdef inline bint _finite(double x) noexcept nogil:
    return x == x and x != INFINITY and x != -INFINITY


# ---------------------------------------------------------------------------
# Small dense matmul helpers (row-major, contiguous)
# ---------------------------------------------------------------------------

cdef void _mm_nn(double* c, const double* a, const double* b,
                 Py_ssize_t m, Py_ssize_t k, Py_ssize_t n, bint acc) noexcept nogil:
    """C[m,n] = (acc ? C : 0) + A[m,k] @ B[k,n]."""
    cdef Py_ssize_t i, j, p
    cdef double av
    cdef double* crow
    cdef const double* brow
    if not acc:
        memset(c, 0, m * n * sizeof(double))
    for i in range(m):
        crow = c + i * n
        for p in range(k):
            av = a[i * k + p]
            if av != 0.0:
                brow = b + p * n
                for j in range(n):
                    crow[j] += av * brow[j]


cdef void _mm_tn(double* c, const double* a, const double* b,
                 Py_ssize_t m, Py_ssize_t k, Py_ssize_t n) noexcept nogil:
    """C[k,n] += A[m,k]^T @ B[m,n] (weight gradients)."""
    cdef Py_ssize_t i, j, p
    cdef double av
    cdef double* crow
    cdef const double* brow
    for i in range(m):
        brow = b + i * n
        for p in range(k):
            av = a[i * k + p]
            if av != 0.0:
                crow = c + p * n
                for j in range(n):
                    crow[j] += av * brow[j]


cdef void _mm_nt(double* c, const double* a, const double* b,
                 Py_ssize_t m, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    """C[m,k] = A[m,n] @ B[k,n]^T (input gradients)."""
    cdef Py_ssize_t i, j, p
    cdef double s
    cdef const double* arow
    cdef const double* brow
    for i in range(m):
        arow = a + i * n
        for p in range(k):
            brow = b + p * n
            s = 0.0
            for j in range(n):
                s += arow[j] * brow[j]
            c[i * k + p] = s


# ---------------------------------------------------------------------------
# Losses: write dL/d(output) into g, return mean loss
# ---------------------------------------------------------------------------

cdef double _softmax_ce(const double* out, const int64_t* y, Py_ssize_t bsz,
                        Py_ssize_t c, double* g) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, s, loss = 0.0
    cdef const double* row
    cdef double* grow
    for i in range(bsz):
        row = out + i * c
        grow = g + i * c
        mx = row[0]
        for j in range(1, c):
            if row[j] > mx:
                mx = row[j]
        s = 0.0
        for j in range(c):
            grow[j] = exp(row[j] - mx)
            s += grow[j]
        loss += log(s) + mx - row[y[i]]
        for j in range(c):
            grow[j] = grow[j] / s
        grow[y[i]] -= 1.0
    for i in range(bsz * c):
        g[i] = g[i] / bsz
    return loss / bsz


cdef double _rmse(const double* out, const double* y, Py_ssize_t bsz,
                  double* g) noexcept nogil:
    cdef Py_ssize_t i
    cdef double r, mse = 0.0, loss
    for i in range(bsz):
        r = out[i] - y[i]
        mse += r * r
    mse = mse / bsz
    loss = sqrt(mse)
    for i in range(bsz):
        if loss > 0.0:
            g[i] = (out[i] - y[i]) / (bsz * loss)
        else:
            g[i] = 0.0
    return loss


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

cdef double _mlp_batch(const double* params, const int64_t* sizes, Py_ssize_t n_layers,
                       const double* drops, int loss_kind,
                       const double* xb, const int64_t* yi, const double* yr,
                       Py_ssize_t bsz, bint training, uint64_t drop_seed,
                       int64_t step, int64_t batch_cap, int64_t dim_cap,
                       double* acts, double* zs, double* masks,
                       double* g, double* g2, double* grad,
                       Py_ssize_t slab) noexcept nogil:
    """Forward + backward for one gathered batch; accumulates into grad."""
    cdef Py_ssize_t l, i, j, din, dout, off, woff, boff
    cdef const double* aprev
    cdef double* z
    cdef double* h
    cdef double* mk
    cdef double rate, keep, u, loss
    cdef uint64_t base
    cdef double* tmp

    # forward
    off = 0
    aprev = xb
    for l in range(n_layers):
        din = sizes[l]
        dout = sizes[l + 1]
        woff = off
        boff = off + din * dout
        off = boff + dout
        z = zs + l * slab
        h = acts + l * slab
        _mm_nn(z, aprev, params + woff, bsz, din, dout, 0)
        for i in range(bsz):
            for j in range(dout):
                z[i * dout + j] += params[boff + j]
        if l < n_layers - 1:
            for i in range(bsz * dout):
                h[i] = z[i] if z[i] > 0.0 else 0.0
        else:
            memcpy(h, z, bsz * dout * sizeof(double))
        rate = drops[l]
        if training and rate > 0.0:
            keep = 1.0 / (1.0 - rate)
            mk = masks + l * slab
            base = <uint64_t>((step * n_layers + l) * batch_cap * dim_cap)
            for i in range(bsz):
                for j in range(dout):
                    u = _u01(drop_seed, base + <uint64_t>(i * dim_cap + j))
                    mk[i * dout + j] = keep if u >= rate else 0.0
                    h[i * dout + j] *= mk[i * dout + j]
        aprev = h

    # loss at the output slab
    dout = sizes[n_layers]
    if loss_kind == 0:
        loss = _softmax_ce(acts + (n_layers - 1) * slab, yi, bsz, dout, g)
    else:
        loss = _rmse(acts + (n_layers - 1) * slab, yr, bsz, g)

    # backward
    for l in range(n_layers - 1, -1, -1):
        din = sizes[l]
        dout = sizes[l + 1]
        # recompute this layer's parameter offsets
        woff = 0
        for i in range(l):
            woff += sizes[i] * sizes[i + 1] + sizes[i + 1]
        boff = woff + din * dout
        rate = drops[l]
        if training and rate > 0.0:
            mk = masks + l * slab
            for i in range(bsz * dout):
                g[i] *= mk[i]
        if l < n_layers - 1:
            z = zs + l * slab
            for i in range(bsz * dout):
                if z[i] <= 0.0:
                    g[i] = 0.0
        aprev = xb if l == 0 else acts + (l - 1) * slab
        _mm_tn(grad + woff, aprev, g, bsz, din, dout)
        for i in range(bsz):
            for j in range(dout):
                grad[boff + j] += g[i * dout + j]
        if l > 0:
            _mm_nt(g2, g, params + woff, bsz, dout, din)
            tmp = g
            g = g2
            g2 = tmp
    return loss


def mlp_loss_grad(double[::1] params, double[:, ::1] x,
                  int64_t[::1] y_int, double[::1] y_real,
                  sizes, drops, int loss_kind, bint training,
                  drop_seed, int64_t step, int64_t batch_cap, int64_t dim_cap):
    cdef int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef double[::1] dr = np.ascontiguousarray(drops, dtype=np.float64)
    cdef Py_ssize_t n_layers = sz.shape[0] - 1
    cdef Py_ssize_t bsz = x.shape[0]
    cdef Py_ssize_t maxd = 0
    cdef Py_ssize_t l
    for l in range(1, sz.shape[0]):
        if sz[l] > maxd:
            maxd = sz[l]
    cdef Py_ssize_t slab = bsz * maxd
    grad_arr = np.zeros(params.shape[0], dtype=np.float64)
    acts_arr = np.zeros(n_layers * slab, dtype=np.float64)
    zs_arr = np.zeros(n_layers * slab, dtype=np.float64)
    masks_arr = np.zeros(n_layers * slab, dtype=np.float64)
    g_arr = np.zeros(slab, dtype=np.float64)
    g2_arr = np.zeros(slab, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double[::1] acts = acts_arr
    cdef double[::1] zsv = zs_arr
    cdef double[::1] masks = masks_arr
    cdef double[::1] gv = g_arr
    cdef double[::1] g2v = g2_arr
    cdef uint64_t dseed = drop_seed
    cdef const int64_t* yi = NULL
    cdef const double* yr = NULL
    if y_int.shape[0] > 0:
        yi = &y_int[0]
    if y_real.shape[0] > 0:
        yr = &y_real[0]
    cdef double loss
    with nogil:
        loss = _mlp_batch(&params[0], &sz[0], n_layers, &dr[0], loss_kind,
                          &x[0, 0], yi, yr, bsz, training, dseed,
                          step, batch_cap, dim_cap,
                          &acts[0], &zsv[0], &masks[0], &gv[0], &g2v[0],
                          &grad[0], slab)
    return loss, grad_arr


cdef void _adam(double* params, const double* grad, double* m, double* v,
                Py_ssize_t n, double lr, double b1, double b2,
                double ob1, double ob2, double eps) noexcept nogil:
    cdef Py_ssize_t i
    cdef double gv
    for i in range(n):
        gv = grad[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gv
        v[i] = b2 * v[i] + (1.0 - b2) * gv * gv
        params[i] -= lr * (m[i] / ob1) / (sqrt(v[i] / ob2) + eps)


def mlp_train(double[::1] params, double[:, ::1] x,
              int64_t[::1] y_int, double[::1] y_real,
              sizes, drops, int loss_kind, int64_t[:, ::1] perms,
              Py_ssize_t batch_size, double lr, double beta1, double beta2,
              double eps, drop_seed):
    cdef int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef double[::1] dr = np.ascontiguousarray(drops, dtype=np.float64)
    cdef Py_ssize_t n_layers = sz.shape[0] - 1
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d0 = x.shape[1]
    cdef Py_ssize_t n_epochs = perms.shape[0]
    cdef Py_ssize_t n_batches = (n + batch_size - 1) // batch_size
    cdef Py_ssize_t n_params = params.shape[0]
    cdef Py_ssize_t maxd = 0
    cdef Py_ssize_t l
    for l in range(1, sz.shape[0]):
        if sz[l] > maxd:
            maxd = sz[l]
    cdef Py_ssize_t slab = batch_size * maxd

    losses_arr = np.zeros(n_epochs, dtype=np.float64)
    grad_arr = np.zeros(n_params, dtype=np.float64)
    m_arr = np.zeros(n_params, dtype=np.float64)
    v_arr = np.zeros(n_params, dtype=np.float64)
    acts_arr = np.zeros(n_layers * slab, dtype=np.float64)
    zs_arr = np.zeros(n_layers * slab, dtype=np.float64)
    masks_arr = np.zeros(n_layers * slab, dtype=np.float64)
    g_arr = np.zeros(slab, dtype=np.float64)
    g2_arr = np.zeros(slab, dtype=np.float64)
    xb_arr = np.zeros(batch_size * d0, dtype=np.float64)
    yi_arr = np.zeros(batch_size, dtype=np.int64)
    yr_arr = np.zeros(batch_size, dtype=np.float64)

    cdef double[::1] losses = losses_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] mv = m_arr
    cdef double[::1] vv = v_arr
    cdef double[::1] acts = acts_arr
    cdef double[::1] zsv = zs_arr
    cdef double[::1] masks = masks_arr
    cdef double[::1] gv = g_arr
    cdef double[::1] g2v = g2_arr
    cdef double[::1] xb = xb_arr
    cdef int64_t[::1] yib = yi_arr
    cdef double[::1] yrb = yr_arr

    cdef uint64_t dseed = drop_seed
    cdef bint use_int = loss_kind == 0
    cdef Py_ssize_t epoch, bi, r, bsz, start
    cdef int64_t row, step = 0
    cdef double b1t = 1.0, b2t = 1.0
    cdef double loss, acc
    cdef Py_ssize_t diverged = -1

    with nogil:
        for epoch in range(n_epochs):
            acc = 0.0
            for bi in range(n_batches):
                start = bi * batch_size
                bsz = batch_size if start + batch_size <= n else n - start
                for r in range(bsz):
                    row = perms[epoch, start + r]
                    memcpy(&xb[r * d0], &x[row, 0], d0 * sizeof(double))
                    if use_int:
                        yib[r] = y_int[row]
                    else:
                        yrb[r] = y_real[row]
                memset(&grad[0], 0, n_params * sizeof(double))
                loss = _mlp_batch(&params[0], &sz[0], n_layers, &dr[0], loss_kind,
                                  &xb[0], &yib[0], &yrb[0], bsz, 1, dseed,
                                  step, batch_size, maxd,
                                  &acts[0], &zsv[0], &masks[0], &gv[0], &g2v[0],
                                  &grad[0], slab)
                if not _finite(loss):
                    diverged = epoch
                    break
                step += 1
                b1t *= beta1
                b2t *= beta2
                _adam(&params[0], &grad[0], &mv[0], &vv[0], n_params,
                      lr, beta1, beta2, 1.0 - b1t, 1.0 - b2t, eps)
                acc += loss * bsz
            if diverged >= 0:
                break
            losses[epoch] = acc / n
    return losses_arr, int(diverged)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

cdef double _lstm_batch(const double* params, Py_ssize_t f, Py_ssize_t h,
                        Py_ssize_t d, Py_ssize_t c, Py_ssize_t t_steps,
                        double drop_rate, int loss_kind,
                        const double* xb, const int64_t* yi, const double* yr,
                        Py_ssize_t bsz, bint training, uint64_t drop_seed,
                        int64_t step, int64_t batch_cap, int64_t dim_cap,
                        double* xt, double* gates, double* cprev, double* tcs,
                        double* hprev, double* hbuf, double* cbuf,
                        double* mask, double* hd, double* z1, double* a1,
                        double* outb, double* gout, double* dh, double* dc,
                        double* dct, double* dgates, double* grad) noexcept nogil:
    """Forward + BPTT for one gathered batch; accumulates into grad."""
    cdef Py_ssize_t wx_off = 0
    cdef Py_ssize_t wh_off = f * 4 * h
    cdef Py_ssize_t b_off = wh_off + h * 4 * h
    cdef Py_ssize_t w1_off = b_off + 4 * h
    cdef Py_ssize_t b1_off = w1_off + h * d
    cdef Py_ssize_t w2_off = b1_off + d
    cdef Py_ssize_t b2_off = w2_off + d * c
    cdef Py_ssize_t ts, i, j
    cdef Py_ssize_t gslab = bsz * 4 * h
    cdef Py_ssize_t hslab = bsz * h
    cdef double* gt
    cdef double gi, gf, gg, go, cn, u, keep, loss, tc
    cdef uint64_t base

    memset(hbuf, 0, hslab * sizeof(double))
    memset(cbuf, 0, hslab * sizeof(double))

    # forward through time
    for ts in range(t_steps):
        for i in range(bsz):
            memcpy(xt + (ts * bsz + i) * f, xb + (i * t_steps + ts) * f,
                   f * sizeof(double))
        memcpy(hprev + ts * hslab, hbuf, hslab * sizeof(double))
        memcpy(cprev + ts * hslab, cbuf, hslab * sizeof(double))
        gt = gates + ts * gslab
        _mm_nn(gt, xt + ts * bsz * f, params + wx_off, bsz, f, 4 * h, 0)
        _mm_nn(gt, hbuf, params + wh_off, bsz, h, 4 * h, 1)
        for i in range(bsz):
            for j in range(4 * h):
                gt[i * 4 * h + j] += params[b_off + j]
        for i in range(bsz):
            for j in range(h):
                gi = _sigmoid(gt[i * 4 * h + j])
                gf = _sigmoid(gt[i * 4 * h + h + j])
                gg = tanh(gt[i * 4 * h + 2 * h + j])
                go = _sigmoid(gt[i * 4 * h + 3 * h + j])
                gt[i * 4 * h + j] = gi
                gt[i * 4 * h + h + j] = gf
                gt[i * 4 * h + 2 * h + j] = gg
                gt[i * 4 * h + 3 * h + j] = go
                cn = gf * cprev[ts * hslab + i * h + j] + gi * gg
                cbuf[i * h + j] = cn
                tc = tanh(cn)
                tcs[ts * hslab + i * h + j] = tc
                hbuf[i * h + j] = go * tc

    # dropout on the last hidden state
    if training and drop_rate > 0.0:
        keep = 1.0 / (1.0 - drop_rate)
        base = <uint64_t>(step * batch_cap * dim_cap)
        for i in range(bsz):
            for j in range(h):
                u = _u01(drop_seed, base + <uint64_t>(i * dim_cap + j))
                mask[i * h + j] = keep if u >= drop_rate else 0.0
                hd[i * h + j] = hbuf[i * h + j] * mask[i * h + j]
    else:
        memcpy(hd, hbuf, hslab * sizeof(double))

    # dense head
    _mm_nn(z1, hd, params + w1_off, bsz, h, d, 0)
    for i in range(bsz):
        for j in range(d):
            z1[i * d + j] += params[b1_off + j]
            a1[i * d + j] = z1[i * d + j] if z1[i * d + j] > 0.0 else 0.0
    _mm_nn(outb, a1, params + w2_off, bsz, d, c, 0)
    for i in range(bsz):
        for j in range(c):
            outb[i * c + j] += params[b2_off + j]

    if loss_kind == 0:
        loss = _softmax_ce(outb, yi, bsz, c, gout)
    else:
        loss = _rmse(outb, yr, bsz, gout)

    # head backward
    _mm_tn(grad + w2_off, a1, gout, bsz, d, c)
    for i in range(bsz):
        for j in range(c):
            grad[b2_off + j] += gout[i * c + j]
    _mm_nt(z1, gout, params + w2_off, bsz, c, d)  # reuse z1 slab as da1 after saving relu gate
    for i in range(bsz * d):
        if a1[i] <= 0.0:
            z1[i] = 0.0
    _mm_tn(grad + w1_off, hd, z1, bsz, h, d)
    for i in range(bsz):
        for j in range(d):
            grad[b1_off + j] += z1[i * d + j]
    _mm_nt(dh, z1, params + w1_off, bsz, d, h)
    if training and drop_rate > 0.0:
        for i in range(bsz * h):
            dh[i] *= mask[i]

    # backward through time
    memset(dc, 0, hslab * sizeof(double))
    for ts in range(t_steps - 1, -1, -1):
        gt = gates + ts * gslab
        for i in range(bsz):
            for j in range(h):
                gi = gt[i * 4 * h + j]
                gf = gt[i * 4 * h + h + j]
                gg = gt[i * 4 * h + 2 * h + j]
                go = gt[i * 4 * h + 3 * h + j]
                tc = tcs[ts * hslab + i * h + j]
                dct[i * h + j] = dc[i * h + j] + dh[i * h + j] * go * (1.0 - tc * tc)
                dgates[i * 4 * h + j] = (dct[i * h + j] * gg) * gi * (1.0 - gi)
                dgates[i * 4 * h + h + j] = (
                    dct[i * h + j] * cprev[ts * hslab + i * h + j]
                ) * gf * (1.0 - gf)
                dgates[i * 4 * h + 2 * h + j] = (dct[i * h + j] * gi) * (1.0 - gg * gg)
                dgates[i * 4 * h + 3 * h + j] = (dh[i * h + j] * tc) * go * (1.0 - go)
                dc[i * h + j] = dct[i * h + j] * gf
        _mm_tn(grad + wx_off, xt + ts * bsz * f, dgates, bsz, f, 4 * h)
        _mm_tn(grad + wh_off, hprev + ts * hslab, dgates, bsz, h, 4 * h)
        for i in range(bsz):
            for j in range(4 * h):
                grad[b_off + j] += dgates[i * 4 * h + j]
        _mm_nt(dh, dgates, params + wh_off, bsz, 4 * h, h)
    return loss


cdef class _LstmWork:
    """Scratch buffers sized for (batch_cap, t, f, h, d, c)."""
    cdef object arrays
    cdef double* xt
    cdef double* gates
    cdef double* cprev
    cdef double* tcs
    cdef double* hprev
    cdef double* hbuf
    cdef double* cbuf
    cdef double* mask
    cdef double* hd
    cdef double* z1
    cdef double* a1
    cdef double* outb
    cdef double* gout
    cdef double* dh
    cdef double* dc
    cdef double* dct
    cdef double* dgates

    def __init__(self, Py_ssize_t bcap, Py_ssize_t t, Py_ssize_t f,
                 Py_ssize_t h, Py_ssize_t d, Py_ssize_t c):
        names_sizes = [
            ("xt", t * bcap * f), ("gates", t * bcap * 4 * h),
            ("cprev", t * bcap * h), ("tcs", t * bcap * h),
            ("hprev", t * bcap * h), ("hbuf", bcap * h), ("cbuf", bcap * h),
            ("mask", bcap * h), ("hd", bcap * h), ("z1", bcap * d),
            ("a1", bcap * d), ("outb", bcap * c), ("gout", bcap * c),
            ("dh", bcap * h), ("dc", bcap * h), ("dct", bcap * h),
            ("dgates", bcap * 4 * h),
        ]
        self.arrays = {}
        cdef double[::1] view
        for name, size in names_sizes:
            arr = np.zeros(max(size, 1), dtype=np.float64)
            self.arrays[name] = arr
            view = arr
            if name == "xt": self.xt = &view[0]
            elif name == "gates": self.gates = &view[0]
            elif name == "cprev": self.cprev = &view[0]
            elif name == "tcs": self.tcs = &view[0]
            elif name == "hprev": self.hprev = &view[0]
            elif name == "hbuf": self.hbuf = &view[0]
            elif name == "cbuf": self.cbuf = &view[0]
            elif name == "mask": self.mask = &view[0]
            elif name == "hd": self.hd = &view[0]
            elif name == "z1": self.z1 = &view[0]
            elif name == "a1": self.a1 = &view[0]
            elif name == "outb": self.outb = &view[0]
            elif name == "gout": self.gout = &view[0]
            elif name == "dh": self.dh = &view[0]
            elif name == "dc": self.dc = &view[0]
            elif name == "dct": self.dct = &view[0]
            elif name == "dgates": self.dgates = &view[0]


def lstm_loss_grad(double[::1] params, double[:, :, ::1] x,
                   int64_t[::1] y_int, double[::1] y_real,
                   dims, double drop_rate, int loss_kind, bint training,
                   drop_seed, int64_t step, int64_t batch_cap, int64_t dim_cap):
    cdef Py_ssize_t f = dims[0], h = dims[1], d = dims[2], c = dims[3]
    cdef Py_ssize_t bsz = x.shape[0]
    cdef Py_ssize_t t = x.shape[1]
    grad_arr = np.zeros(params.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr
    work = _LstmWork(bsz, t, f, h, d, c)
    cdef _LstmWork w = work
    cdef uint64_t dseed = drop_seed
    cdef const int64_t* yi = NULL
    cdef const double* yr = NULL
    if y_int.shape[0] > 0:
        yi = &y_int[0]
    if y_real.shape[0] > 0:
        yr = &y_real[0]
    cdef double loss
    with nogil:
        loss = _lstm_batch(&params[0], f, h, d, c, t, drop_rate, loss_kind,
                           &x[0, 0, 0], yi, yr, bsz, training, dseed,
                           step, batch_cap, dim_cap,
                           w.xt, w.gates, w.cprev, w.tcs, w.hprev, w.hbuf,
                           w.cbuf, w.mask, w.hd, w.z1, w.a1, w.outb, w.gout,
                           w.dh, w.dc, w.dct, w.dgates, &grad[0])
    return loss, grad_arr


def lstm_train(double[::1] params, double[:, :, ::1] x,
               int64_t[::1] y_int, double[::1] y_real,
               dims, double drop_rate, int loss_kind, int64_t[:, ::1] perms,
               Py_ssize_t batch_size, double lr, double beta1, double beta2,
               double eps, drop_seed):
    cdef Py_ssize_t f = dims[0], h = dims[1], d = dims[2], c = dims[3]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t = x.shape[1]
    cdef Py_ssize_t n_epochs = perms.shape[0]
    cdef Py_ssize_t n_batches = (n + batch_size - 1) // batch_size
    cdef Py_ssize_t n_params = params.shape[0]

    losses_arr = np.zeros(n_epochs, dtype=np.float64)
    grad_arr = np.zeros(n_params, dtype=np.float64)
    m_arr = np.zeros(n_params, dtype=np.float64)
    v_arr = np.zeros(n_params, dtype=np.float64)
    xb_arr = np.zeros(batch_size * t * f, dtype=np.float64)
    yi_arr = np.zeros(batch_size, dtype=np.int64)
    yr_arr = np.zeros(batch_size, dtype=np.float64)

    cdef double[::1] losses = losses_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] mv = m_arr
    cdef double[::1] vv = v_arr
    cdef double[::1] xb = xb_arr
    cdef int64_t[::1] yib = yi_arr
    cdef double[::1] yrb = yr_arr

    work = _LstmWork(batch_size, t, f, h, d, c)
    cdef _LstmWork w = work
    cdef uint64_t dseed = drop_seed
    cdef bint use_int = loss_kind == 0
    cdef Py_ssize_t epoch, bi, r, bsz, start
    cdef int64_t row, step = 0
    cdef double b1t = 1.0, b2t = 1.0
    cdef double loss, acc
    cdef Py_ssize_t diverged = -1

    with nogil:
        for epoch in range(n_epochs):
            acc = 0.0
            for bi in range(n_batches):
                start = bi * batch_size
                bsz = batch_size if start + batch_size <= n else n - start
                for r in range(bsz):
                    row = perms[epoch, start + r]
                    memcpy(&xb[r * t * f], &x[row, 0, 0], t * f * sizeof(double))
                    if use_int:
                        yib[r] = y_int[row]
                    else:
                        yrb[r] = y_real[row]
                memset(&grad[0], 0, n_params * sizeof(double))
                loss = _lstm_batch(&params[0], f, h, d, c, t, drop_rate, loss_kind,
                                   &xb[0], &yib[0], &yrb[0], bsz, 1, dseed,
                                   step, batch_size, h,
                                   w.xt, w.gates, w.cprev, w.tcs, w.hprev,
                                   w.hbuf, w.cbuf, w.mask, w.hd, w.z1, w.a1,
                                   w.outb, w.gout, w.dh, w.dc, w.dct, w.dgates,
                                   &grad[0])
                if not _finite(loss):
                    diverged = epoch
                    break
                step += 1
                b1t *= beta1
                b2t *= beta2
                _adam(&params[0], &grad[0], &mv[0], &vv[0], n_params,
                      lr, beta1, beta2, 1.0 - b1t, 1.0 - b2t, eps)
                acc += loss * bsz
            if diverged >= 0:
                break
            losses[epoch] = acc / n
    return losses_arr, int(diverged)
