"""Numba-jitted tape interpreter.

Same semantics as :mod:`pinnlab.backends.numpy_backend`, but the
instruction loops run inside jitted kernels on cache-sized chunks of
points.  Dense affine groups go through BLAS (``np.dot`` inside the
kernel); everything else is explicit loops that LLVM vectorizes.

Chunks are grouped into a fixed number of bands, processed by a small
thread pool (the kernels release the GIL).  Every band accumulates its
reductions (loss sums, parameter gradients) into its own slab and the
slabs are summed in band order, so results are bit-identical for any
thread count, including the inline single-thread path.  A partial tail
chunk is padded by replicating the last point; padded lanes carry zero
adjoint seeds and cannot contribute to any reduction.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from ..tape import LEAF_INPUT, LEAF_PARAM

# Points per chunk; keeps the register file cache-resident for the tape
# sizes this package produces.  Overridable for benchmarking.
CHUNK = int(os.environ.get("PINNLAB_CHUNK", "256"))

# Fixed band count; must not depend on the worker count or results
# would change when the machine does.
_BANDS = 8

_MODE_FORWARD = 0
_MODE_LOSS = 1
_MODE_VJP = 2


def _worker_count():
    raw = os.environ.get("PINNLAB_THREADS", "")
    if raw.strip():
        return max(1, int(raw))
    return min(2, os.cpu_count() or 1)


@njit(cache=True, fastmath=False, nogil=True)
def _forward_chunk(c0, w, W, rows, X, theta, mflat,
                   leaf_row, leaf_kind, leaf_idx, leaf_val,
                   code, out, a, b, f, aux,
                   add_rows, add_coefs,
                   g_m, g_n, g_aoff, g_boff, g_bidx, g_bcontig, g_coff,
                   g_bconst):
    n_leaf = leaf_row.shape[0]
    n_ops = code.shape[0]
    for li in range(n_leaf):
        r = leaf_row[li]
        k = leaf_kind[li]
        if k == LEAF_INPUT:
            col = leaf_idx[li]
            for p in range(W):
                src = p if p < w else w - 1
                rows[r, p] = X[c0 + src, col]
        elif k == LEAF_PARAM:
            v = theta[leaf_idx[li]]
            for p in range(W):
                rows[r, p] = v
        else:
            v = leaf_val[li]
            for p in range(W):
                rows[r, p] = v
    for i in range(n_ops):
        c = code[i]
        o = out[i]
        if c == 10:  # GEMM
            g = aux[i]
            m = g_m[g]
            n = g_n[g]
            ao = g_aoff[g]
            M = mflat[ao:ao + m * n].reshape(m, n)
            bo = g_boff[g]
            if g_bcontig[g] == 1:
                s0 = g_bidx[bo]
                B = rows[s0:s0 + n]
            else:
                B = np.empty((n, W))
                for t in range(n):
                    src = g_bidx[bo + t]
                    for p in range(W):
                        B[t, p] = rows[src, p]
            R = np.dot(M, B)
            co = g_coff[g]
            for j in range(m):
                bc = g_bconst[co + j]
                for p in range(W):
                    rows[o + j, p] = R[j, p] + bc
        elif c == 0:  # ADDN
            off = a[i]
            cnt = b[i]
            c0f = f[i]
            for p in range(W):
                rows[o, p] = c0f
            for t in range(cnt):
                rr = add_rows[off + t]
                cc = add_coefs[off + t]
                for p in range(W):
                    rows[o, p] += cc * rows[rr, p]
        elif c == 1:  # MUL
            ra = a[i]
            rb = b[i]
            for p in range(W):
                rows[o, p] = rows[ra, p] * rows[rb, p]
        elif c == 2:  # POW
            ra = a[i]
            pw = f[i]
            if pw == 2.0:
                for p in range(W):
                    x = rows[ra, p]
                    rows[o, p] = x * x
            elif pw == -1.0:
                for p in range(W):
                    rows[o, p] = 1.0 / rows[ra, p]
            elif pw == 0.5:
                for p in range(W):
                    rows[o, p] = math.sqrt(rows[ra, p])
            else:
                for p in range(W):
                    rows[o, p] = rows[ra, p] ** pw
        elif c == 3:  # EXP
            ra = a[i]
            for p in range(W):
                rows[o, p] = math.exp(rows[ra, p])
        elif c == 4:  # LOG
            ra = a[i]
            for p in range(W):
                rows[o, p] = math.log(rows[ra, p])
        elif c == 5:  # SIN
            ra = a[i]
            for p in range(W):
                rows[o, p] = math.sin(rows[ra, p])
        elif c == 6:  # COS
            ra = a[i]
            for p in range(W):
                rows[o, p] = math.cos(rows[ra, p])
        elif c == 7:  # TANH
            ra = a[i]
            for p in range(W):
                rows[o, p] = math.tanh(rows[ra, p])
        elif c == 8:  # SOFTPLUS
            ra = a[i]
            for p in range(W):
                x = rows[ra, p]
                ax = -x if x < 0.0 else x
                mx = x if x > 0.0 else 0.0
                rows[o, p] = mx + math.log1p(math.exp(-ax))
        else:  # SIGMOID
            ra = a[i]
            h = aux[i]
            if h >= 0:
                # sigmoid(x) = exp(x - softplus(x)), reusing the
                # softplus row already on the tape
                for p in range(W):
                    rows[o, p] = math.exp(rows[ra, p] - rows[h, p])
            else:
                for p in range(W):
                    x = rows[ra, p]
                    if x >= 0.0:
                        rows[o, p] = 1.0 / (1.0 + math.exp(-x))
                    else:
                        e = math.exp(x)
                        rows[o, p] = e / (1.0 + e)


@njit(cache=True, fastmath=False, nogil=True)
def _backward_chunk(W, rows, adj, grad,
                    leaf_row, leaf_kind, leaf_idx,
                    code, out, a, b, f, aux,
                    add_rows, add_coefs,
                    g_m, g_n, g_aoff, g_aidx, g_acoef,
                    g_boff, g_bidx, g_bcontig, mflat):
    n_ops = code.shape[0]
    n_leaf = leaf_row.shape[0]
    for i in range(n_ops - 1, -1, -1):
        c = code[i]
        o = out[i]
        if c == 10:  # GEMM
            g = aux[i]
            m = g_m[g]
            n = g_n[g]
            ao = g_aoff[g]
            M = mflat[ao:ao + m * n].reshape(m, n)
            bo = g_boff[g]
            if g_bcontig[g] == 1:
                s0 = g_bidx[bo]
                B = rows[s0:s0 + n]
            else:
                B = np.empty((n, W))
                for t in range(n):
                    src = g_bidx[bo + t]
                    for p in range(W):
                        B[t, p] = rows[src, p]
            S = adj[o:o + m]
            dB = np.dot(M.T, S)
            for t in range(n):
                dst = g_bidx[bo + t]
                for p in range(W):
                    adj[dst, p] += dB[t, p]
            G = np.dot(S, B.T)
            for j in range(m):
                for t in range(n):
                    idx = ao + j * n + t
                    grad[g_aidx[idx]] += g_acoef[idx] * G[j, t]
            for j in range(m):
                for p in range(W):
                    adj[o + j, p] = 0.0
            continue
        if c == 0:  # ADDN
            off = a[i]
            cnt = b[i]
            for t in range(cnt):
                rr = add_rows[off + t]
                cc = add_coefs[off + t]
                for p in range(W):
                    adj[rr, p] += cc * adj[o, p]
        elif c == 1:  # MUL
            ra = a[i]
            rb = b[i]
            for p in range(W):
                s = adj[o, p]
                adj[ra, p] += rows[rb, p] * s
                adj[rb, p] += rows[ra, p] * s
        elif c == 2:  # POW
            ra = a[i]
            pw = f[i]
            if pw == 2.0:
                for p in range(W):
                    adj[ra, p] += 2.0 * rows[ra, p] * adj[o, p]
            elif pw == -1.0:
                for p in range(W):
                    x = rows[ra, p]
                    adj[ra, p] -= adj[o, p] / (x * x)
            else:
                for p in range(W):
                    adj[ra, p] += pw * rows[ra, p] ** (pw - 1.0) * adj[o, p]
        elif c == 3:  # EXP
            ra = a[i]
            for p in range(W):
                adj[ra, p] += rows[o, p] * adj[o, p]
        elif c == 4:  # LOG
            ra = a[i]
            for p in range(W):
                adj[ra, p] += adj[o, p] / rows[ra, p]
        elif c == 5:  # SIN
            ra = a[i]
            h = aux[i]
            if h >= 0:
                for p in range(W):
                    adj[ra, p] += rows[h, p] * adj[o, p]
            else:
                for p in range(W):
                    adj[ra, p] += math.cos(rows[ra, p]) * adj[o, p]
        elif c == 6:  # COS
            ra = a[i]
            h = aux[i]
            if h >= 0:
                for p in range(W):
                    adj[ra, p] -= rows[h, p] * adj[o, p]
            else:
                for p in range(W):
                    adj[ra, p] -= math.sin(rows[ra, p]) * adj[o, p]
        elif c == 7:  # TANH
            ra = a[i]
            for p in range(W):
                t = rows[o, p]
                adj[ra, p] += (1.0 - t * t) * adj[o, p]
        elif c == 8:  # SOFTPLUS
            ra = a[i]
            h = aux[i]
            if h >= 0:
                for p in range(W):
                    adj[ra, p] += rows[h, p] * adj[o, p]
            else:
                for p in range(W):
                    x = rows[ra, p]
                    if x >= 0.0:
                        sg = 1.0 / (1.0 + math.exp(-x))
                    else:
                        e = math.exp(x)
                        sg = e / (1.0 + e)
                    adj[ra, p] += sg * adj[o, p]
        else:  # SIGMOID
            ra = a[i]
            for p in range(W):
                sg = rows[o, p]
                adj[ra, p] += sg * (1.0 - sg) * adj[o, p]
        for p in range(W):
            adj[o, p] = 0.0
    # parameter rows used outside GEMMs; reset leaf adjoints so the
    # buffer is clean for the next chunk
    for li in range(n_leaf):
        r = leaf_row[li]
        if leaf_kind[li] == LEAF_PARAM:
            acc = 0.0
            for p in range(W):
                acc += adj[r, p]
            grad[leaf_idx[li]] += acc
        for p in range(W):
            adj[r, p] = 0.0


@njit(cache=True, fastmath=False, nogil=True)
def _run_range(mode, chunk_lo, chunk_hi, X, theta, mflat,
               leaf_row, leaf_kind, leaf_idx, leaf_val,
               code, out, a, b, f, aux,
               add_rows, add_coefs,
               g_m, g_n, g_aoff, g_aidx, g_acoef,
               g_boff, g_bidx, g_bcontig, g_coff, g_bconst,
               out_rows, W,
               weights, seeds, Y, sumsq, grad, rows, adj):
    n_points = X.shape[0]
    n_out = out_rows.shape[0]
    for ci in range(chunk_lo, chunk_hi):
        c0 = ci * W
        w = min(W, n_points - c0)
        _forward_chunk(c0, w, W, rows, X, theta, mflat,
                       leaf_row, leaf_kind, leaf_idx, leaf_val,
                       code, out, a, b, f, aux,
                       add_rows, add_coefs,
                       g_m, g_n, g_aoff, g_boff, g_bidx, g_bcontig, g_coff,
                       g_bconst)
        for j in range(n_out):
            ro = out_rows[j]
            for p in range(w):
                Y[c0 + p, j] = rows[ro, p]
        if mode == _MODE_FORWARD:
            continue
        if mode == _MODE_LOSS:
            for j in range(n_out):
                ro = out_rows[j]
                acc = 0.0
                wj2 = 2.0 * weights[j]
                for p in range(w):
                    y = rows[ro, p]
                    acc += y * y
                    adj[ro, p] += wj2 * y
                sumsq[j] += acc
        else:
            for j in range(n_out):
                ro = out_rows[j]
                for p in range(w):
                    adj[ro, p] += seeds[c0 + p, j]
        _backward_chunk(W, rows, adj, grad,
                        leaf_row, leaf_kind, leaf_idx,
                        code, out, a, b, f, aux,
                        add_rows, add_coefs,
                        g_m, g_n, g_aoff, g_aidx, g_acoef,
                        g_boff, g_bidx, g_bcontig, mflat)


_EMPTY_SEEDS = np.zeros((0, 0))
_EMPTY_W = np.zeros(0)

_pool = None
_buffers = {}
_lock = __import__("threading").Lock()


def _get_pool():
    global _pool
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_worker_count(),
                                   thread_name_prefix="pinnlab")
    return _pool


def _slot_buffers(slot, n_rows, W):
    """Reusable (rows, adj) pair per worker slot and chunk width.

    Keyed by exact width so row slices stay contiguous for np.dot.
    The backward sweep resets every adjoint it touches, so ``adj`` is
    all-zero again after each call and can be reused as-is.
    """
    key = (slot, W)
    rows, adj = _buffers.get(key, (None, None))
    if rows is None or rows.shape[0] < n_rows:
        rows = np.empty((n_rows, W))
        adj = np.zeros((n_rows, W))
        _buffers[key] = (rows, adj)
    return rows[:n_rows], adj[:n_rows]


def _call(mode, td, X, theta, weights, seeds, Y):
    with _lock:
        return _call_locked(mode, td, X, theta, weights, seeds, Y)


def _call_locked(mode, td, X, theta, weights, seeds, Y):
    mflat = theta[td.g_aidx] * td.g_acoef if len(td.g_aidx) else np.zeros(0)
    n_points = X.shape[0]
    n_out = len(td.out_rows)
    if n_points == 0:
        return np.zeros(n_out), np.zeros(td.n_params)
    W = min(CHUNK, n_points)
    n_chunks = (n_points + W - 1) // W
    n_bands = min(_BANDS, n_chunks)
    bounds = [round(bi * n_chunks / n_bands) for bi in range(n_bands + 1)]
    sumsq_parts = np.zeros((n_bands, n_out))
    grad_parts = np.zeros((n_bands, td.n_params))

    def run_band(bi, slot):
        rows, adj = _slot_buffers(slot, td.n_rows, W)
        _run_range(mode, bounds[bi], bounds[bi + 1], X, theta, mflat,
                   td.leaf_row, td.leaf_kind, td.leaf_idx, td.leaf_val,
                   td.code, td.out, td.a, td.b, td.f, td.aux,
                   td.add_rows, td.add_coefs,
                   td.g_m, td.g_n, td.g_aoff, td.g_aidx, td.g_acoef,
                   td.g_boff, td.g_bidx, td.g_bcontig, td.g_coff,
                   td.g_bconst,
                   td.out_rows, W,
                   weights, seeds, Y, sumsq_parts[bi], grad_parts[bi],
                   rows, adj)

    workers = _worker_count()
    try:
        if workers <= 1 or n_bands <= 1:
            for bi in range(n_bands):
                run_band(bi, 0)
        else:
            def run_slot(slot):
                for bi in range(slot, n_bands, workers):
                    run_band(bi, slot)
            futures = [_get_pool().submit(run_slot, s) for s in range(workers)]
            for fut in futures:
                fut.result()
    except BaseException:
        # adjoint buffers may be dirty after an interrupted sweep
        _buffers.clear()
        raise
    # fixed band order: results do not depend on the worker count
    return sumsq_parts.sum(axis=0), grad_parts.sum(axis=0)


def forward(td, X, theta):
    Y = np.empty((X.shape[0], len(td.out_rows)))
    _call(_MODE_FORWARD, td, X, theta, _EMPTY_W, _EMPTY_SEEDS, Y)
    return Y


def loss_grad(td, X, theta, weights):
    Y = np.empty((X.shape[0], len(td.out_rows)))
    sumsq, grad = _call(_MODE_LOSS, td, X, theta, weights, _EMPTY_SEEDS, Y)
    return sumsq, grad


def vjp(td, X, theta, seeds):
    Y = np.empty((X.shape[0], len(td.out_rows)))
    _, grad = _call(_MODE_VJP, td, X, theta, _EMPTY_W, seeds, Y)
    return Y, grad
