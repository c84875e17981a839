"""Numba-jitted evaluation kernels.

Twin of :mod:`graphspn.kernels_numpy`; see that module for the shared
contract. Kernels are compiled with ``cache=True`` and without
``fastmath`` so results stay deterministic and numerically aligned with
the numpy backend. Matrix products go through ``np.dot`` (BLAS) inside
the jitted code; the remaining loops are where the jit pays off.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def leaf_forward(lt, codes):
    V, K, U = lt.shape
    B = codes.shape[0]
    out = np.zeros((B, U))
    for b in range(B):
        for v in range(V):
            c = codes[b, v]
            if c < 0:
                continue
            row = lt[v, c]
            for u in range(U):
                out[b, u] += row[u]
    return out


@njit(cache=True)
def leaf_backward(gout, codes, num_cats):
    B, U = gout.shape
    V = codes.shape[1]
    dlt = np.zeros((V, num_cats, U))
    for b in range(B):
        for v in range(V):
            c = codes[b, v]
            if c < 0:
                continue
            row = dlt[v, c]
            for u in range(U):
                row[u] += gout[b, u]
    return dlt


@njit(cache=True)
def _shifted_exp(x):
    """Row-wise max shift: returns (exp(x - shift), shift) with zero rows
    for all -inf input rows (shift entry 0 there)."""
    B, J = x.shape
    e = np.empty((B, J))
    shift = np.empty(B)
    for b in range(B):
        m = -np.inf
        for j in range(J):
            if x[b, j] > m:
                m = x[b, j]
        if m == -np.inf:
            shift[b] = 0.0
            for j in range(J):
                e[b, j] = 0.0
        else:
            shift[b] = m
            for j in range(J):
                e[b, j] = np.exp(x[b, j] - m)
    return e, shift


@njit(cache=True)
def sum_forward(x, wl_t):
    B = x.shape[0]
    S = wl_t.shape[1]
    e, shift = _shifted_exp(x)
    lin = np.dot(e, wl_t)
    out = np.empty((B, S))
    for b in range(B):
        for s in range(S):
            v = lin[b, s]
            out[b, s] = shift[b] + np.log(v) if v > 0.0 else -np.inf
    return out


@njit(cache=True)
def sum_backward(x, wl, out, gout):
    B, J = x.shape
    S = wl.shape[0]
    e, shift = _shifted_exp(x)
    g = np.empty((B, S))
    for b in range(B):
        for s in range(S):
            lin = np.exp(out[b, s] - shift[b])
            g[b, s] = gout[b, s] / lin if lin > 0.0 else 0.0
    dx = np.dot(g, wl)
    for b in range(B):
        for j in range(J):
            dx[b, j] *= e[b, j]
    gt = np.ascontiguousarray(g.T)
    dlogw = np.dot(gt, e)
    for s in range(S):
        for j in range(J):
            dlogw[s, j] *= wl[s, j]
    return dx, dlogw


@njit(cache=True)
def kron_forward(left, right):
    B, P = left.shape
    Q = right.shape[1]
    out = np.empty((B, P * Q))
    for b in range(B):
        for p in range(P):
            lv = left[b, p]
            base = p * Q
            for q in range(Q):
                out[b, base + q] = lv + right[b, q]
    return out


@njit(cache=True)
def kron_backward(gout, P, Q):
    B = gout.shape[0]
    dleft = np.zeros((B, P))
    dright = np.zeros((B, Q))
    for b in range(B):
        for p in range(P):
            base = p * Q
            acc = 0.0
            for q in range(Q):
                gv = gout[b, base + q]
                acc += gv
                dright[b, q] += gv
            dleft[b, p] = acc
    return dleft, dright


@njit(cache=True)
def fused_sum_forward(left, right, wl_ti, S):
    B = left.shape[0]
    J = right.shape[1]
    el, sl = _shifted_exp(left)
    er, sr = _shifted_exp(right)
    t = np.dot(el, wl_ti)  # (B, S*J)
    out = np.empty((B, S))
    for b in range(B):
        base_shift = sl[b] + sr[b]
        for s in range(S):
            acc = 0.0
            off = s * J
            for j in range(J):
                acc += t[b, off + j] * er[b, j]
            out[b, s] = base_shift + np.log(acc) if acc > 0.0 else -np.inf
    return out


@njit(cache=True)
def fused_sum_backward(left, right, wl, wl_ti, wl_it, out, gout):
    B, I = left.shape
    J = right.shape[1]
    S = gout.shape[1]
    el, sl = _shifted_exp(left)
    er, sr = _shifted_exp(right)
    t = np.dot(el, wl_ti)  # (B, S*J)
    g = np.empty((B, S))
    for b in range(B):
        base_shift = sl[b] + sr[b]
        for s in range(S):
            lin = np.exp(out[b, s] - base_shift)
            g[b, s] = gout[b, s] / lin if lin > 0.0 else 0.0
    dt2 = np.empty((B, S * J))
    dright = np.zeros((B, J))
    for b in range(B):
        for s in range(S):
            gv = g[b, s]
            off = s * J
            for j in range(J):
                dt2[b, off + j] = gv * er[b, j]
                dright[b, j] += gv * t[b, off + j]
    for b in range(B):
        for j in range(J):
            dright[b, j] *= er[b, j]
    dleft = np.dot(dt2, wl_it)
    for b in range(B):
        for i in range(I):
            dleft[b, i] *= el[b, i]
    elt = np.ascontiguousarray(el.T)
    dw = np.dot(elt, dt2)  # (I, S*J)
    dlogw = np.empty((S, I * J))
    for s in range(S):
        off = s * J
        for i in range(I):
            base = i * J
            for j in range(J):
                dlogw[s, base + j] = dw[i, off + j] * wl[s, base + j]
    return dleft, dright, dlogw
