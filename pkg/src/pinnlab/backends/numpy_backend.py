"""Pure-numpy tape interpreter.

Reference implementation of the tape semantics; the numba backend must
agree with it.  Instructions run vectorized over a chunk of points, so
memory stays bounded for large batches.
"""

import numpy as np

from ..tape import (OP_ADDN, OP_COS, OP_EXP, OP_GEMM, OP_LOG, OP_MUL,
                    OP_POW, OP_SIGMOID, OP_SIN, OP_SOFTPLUS, OP_TANH,
                    LEAF_CONST, LEAF_INPUT, LEAF_PARAM)

# Aim for ~128 MB of live register buffer per chunk.
_CHUNK_BUDGET = 16_000_000


def _chunk_width(td, n_points):
    w = max(256, _CHUNK_BUDGET // max(1, td.n_rows))
    return min(n_points, w)


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _apply_pow(x, p):
    if p == 2.0:
        return x * x
    if p == -1.0:
        return 1.0 / x
    if p == 0.5:
        return np.sqrt(x)
    return x ** p


def _gemm_matrices(td, theta):
    mats = []
    for g in range(len(td.g_m)):
        m, n = int(td.g_m[g]), int(td.g_n[g])
        o = int(td.g_aoff[g])
        mats.append((theta[td.g_aidx[o:o + m * n]]
                     * td.g_acoef[o:o + m * n]).reshape(m, n))
    return mats


def _gemm_b(td, g, rows):
    n = int(td.g_n[g])
    o = int(td.g_boff[g])
    if td.g_bcontig[g]:
        s = int(td.g_bidx[o])
        return rows[s:s + n]
    return rows[td.g_bidx[o:o + n]]


def _forward_chunk(td, X, theta, mats, rows):
    w = rows.shape[1]
    for i in range(len(td.leaf_row)):
        r = td.leaf_row[i]
        k = td.leaf_kind[i]
        if k == LEAF_INPUT:
            rows[r] = X[:, td.leaf_idx[i]]
        elif k == LEAF_PARAM:
            rows[r] = theta[td.leaf_idx[i]]
        else:
            rows[r] = td.leaf_val[i]
    for i in range(len(td.code)):
        c = td.code[i]
        o = td.out[i]
        if c == OP_GEMM:
            g = td.aux[i]
            m = int(td.g_m[g])
            B = _gemm_b(td, g, rows)
            co = int(td.g_coff[g])
            rows[o:o + m] = mats[g] @ B + td.g_bconst[co:co + m, None]
        elif c == OP_ADDN:
            off, cnt = int(td.a[i]), int(td.b[i])
            acc = np.full(w, td.f[i])
            for t in range(cnt):
                acc += td.add_coefs[off + t] * rows[td.add_rows[off + t]]
            rows[o] = acc
        elif c == OP_MUL:
            np.multiply(rows[td.a[i]], rows[td.b[i]], out=rows[o])
        elif c == OP_POW:
            rows[o] = _apply_pow(rows[td.a[i]], td.f[i])
        elif c == OP_EXP:
            np.exp(rows[td.a[i]], out=rows[o])
        elif c == OP_LOG:
            np.log(rows[td.a[i]], out=rows[o])
        elif c == OP_SIN:
            np.sin(rows[td.a[i]], out=rows[o])
        elif c == OP_COS:
            np.cos(rows[td.a[i]], out=rows[o])
        elif c == OP_TANH:
            np.tanh(rows[td.a[i]], out=rows[o])
        elif c == OP_SOFTPLUS:
            rows[o] = _softplus(rows[td.a[i]])
        elif c == OP_SIGMOID:
            aux = td.aux[i]
            if aux >= 0:
                # sigmoid(x) = exp(x - softplus(x)), softplus already on tape
                np.exp(rows[td.a[i]] - rows[aux], out=rows[o])
            else:
                rows[o] = _sigmoid(rows[td.a[i]])
        else:
            raise AssertionError(f"bad opcode {c}")


def _backward_chunk(td, theta, mats, rows, adj, grad):
    for i in range(len(td.code) - 1, -1, -1):
        c = td.code[i]
        o = td.out[i]
        if c == OP_GEMM:
            g = td.aux[i]
            m, n = int(td.g_m[g]), int(td.g_n[g])
            s_adj = adj[o:o + m]
            B = _gemm_b(td, g, rows)
            dB = mats[g].T @ s_adj
            bo = int(td.g_boff[g])
            for t in range(n):
                adj[td.g_bidx[bo + t]] += dB[t]
            G = s_adj @ B.T
            ao = int(td.g_aoff[g])
            np.add.at(grad, td.g_aidx[ao:ao + m * n],
                      td.g_acoef[ao:ao + m * n] * G.ravel())
            continue
        s = adj[o]
        if c == OP_ADDN:
            off, cnt = int(td.a[i]), int(td.b[i])
            for t in range(cnt):
                adj[td.add_rows[off + t]] += td.add_coefs[off + t] * s
        elif c == OP_MUL:
            ra, rb = td.a[i], td.b[i]
            adj[ra] += rows[rb] * s
            adj[rb] += rows[ra] * s
        elif c == OP_POW:
            p = td.f[i]
            adj[td.a[i]] += p * _apply_pow(rows[td.a[i]], p - 1.0) * s
        elif c == OP_EXP:
            adj[td.a[i]] += rows[o] * s
        elif c == OP_LOG:
            adj[td.a[i]] += s / rows[td.a[i]]
        elif c == OP_SIN:
            aux = td.aux[i]
            cosv = rows[aux] if aux >= 0 else np.cos(rows[td.a[i]])
            adj[td.a[i]] += cosv * s
        elif c == OP_COS:
            aux = td.aux[i]
            sinv = rows[aux] if aux >= 0 else np.sin(rows[td.a[i]])
            adj[td.a[i]] -= sinv * s
        elif c == OP_TANH:
            t = rows[o]
            adj[td.a[i]] += (1.0 - t * t) * s
        elif c == OP_SOFTPLUS:
            aux = td.aux[i]
            sig = rows[aux] if aux >= 0 else _sigmoid(rows[td.a[i]])
            adj[td.a[i]] += sig * s
        elif c == OP_SIGMOID:
            sg = rows[o]
            adj[td.a[i]] += sg * (1.0 - sg) * s
    for i in range(len(td.leaf_row)):
        if td.leaf_kind[i] == LEAF_PARAM:
            grad[td.leaf_idx[i]] += adj[td.leaf_row[i]].sum()


def forward(td, X, theta):
    n = X.shape[0]
    n_out = len(td.out_rows)
    Y = np.empty((n, n_out))
    mats = _gemm_matrices(td, theta)
    w = _chunk_width(td, n)
    for s in range(0, n, w):
        e = min(n, s + w)
        rows = np.empty((td.n_rows, e - s))
        _forward_chunk(td, X[s:e], theta, mats, rows)
        for j in range(n_out):
            Y[s:e, j] = rows[td.out_rows[j]]
    return Y


def loss_grad(td, X, theta, weights):
    n = X.shape[0]
    n_out = len(td.out_rows)
    sumsq = np.zeros(n_out)
    grad = np.zeros(td.n_params)
    mats = _gemm_matrices(td, theta)
    w = _chunk_width(td, n)
    for s in range(0, n, w):
        e = min(n, s + w)
        rows = np.empty((td.n_rows, e - s))
        _forward_chunk(td, X[s:e], theta, mats, rows)
        adj = np.zeros_like(rows)
        for j in range(n_out):
            y = rows[td.out_rows[j]]
            sumsq[j] += y @ y
            adj[td.out_rows[j]] += 2.0 * weights[j] * y
        _backward_chunk(td, theta, mats, rows, adj, grad)
    return sumsq, grad


def vjp(td, X, theta, seeds):
    n = X.shape[0]
    n_out = len(td.out_rows)
    Y = np.empty((n, n_out))
    grad = np.zeros(td.n_params)
    mats = _gemm_matrices(td, theta)
    w = _chunk_width(td, n)
    for s in range(0, n, w):
        e = min(n, s + w)
        rows = np.empty((td.n_rows, e - s))
        _forward_chunk(td, X[s:e], theta, mats, rows)
        adj = np.zeros_like(rows)
        for j in range(n_out):
            Y[s:e, j] = rows[td.out_rows[j]]
            adj[td.out_rows[j]] += seeds[s:e, j]
        _backward_chunk(td, theta, mats, rows, adj, grad)
    return Y, grad
