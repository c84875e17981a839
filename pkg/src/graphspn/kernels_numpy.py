"""Pure-numpy evaluation kernels.

Twin of :mod:`graphspn.kernels_numba`; both implement the same contract
and must stay numerically interchangeable (see ``tests/test_backend.py``).

Conventions shared by both backends:

* all activations are log-space float64 arrays of shape ``(batch, units)``;
* ``-inf`` is a legal activation meaning zero mass and must propagate
  without producing NaNs;
* leaf parameter tables are laid out ``(vars, cats, units)`` with
  normalised log-probabilities (rows for out-of-range categories may be
  ``-inf`` and are never indexed);
* evidence codes are int64, one per variable, with ``-1`` meaning
  "marginalised" (the leaf factor for that variable contributes
  log 1 = 0);
* sum-layer weights arrive pre-normalised in linear space; gradients are
  returned with respect to the *log*-weights.
"""

import numpy as np

NAME = "numpy"


def leaf_forward(lt, codes):
    """Evaluate categorical leaf units.

    lt: (V, K, U) normalised log-probability table.
    codes: (B, V) int64 category codes, -1 = marginalised.
    Returns (B, U) log-values: sum over observed variables of lt[v, code].
    """
    V = lt.shape[0]
    observed = codes >= 0
    safe = np.where(observed, codes, 0)
    gathered = lt[np.arange(V)[None, :], safe]  # (B, V, U)
    gathered[~observed] = 0.0
    return gathered.sum(axis=1)


def leaf_backward(gout, codes, num_cats):
    """Gradient of leaf_forward w.r.t. the log-probability table.

    gout: (B, U) upstream gradient; codes as in leaf_forward.
    Returns (V, K, U) with K = num_cats.
    """
    B, U = gout.shape
    V = codes.shape[1]
    dlt = np.zeros((V, num_cats, U))
    for v in range(V):
        cv = codes[:, v]
        observed = cv >= 0
        if not observed.any():
            continue
        onehot = np.zeros((B, num_cats))
        onehot[observed, cv[observed]] = 1.0
        dlt[v] = onehot.T @ gout
    return dlt


def sum_forward(x, wl_t):
    """Log-space weighted sum: out[b,s] = log sum_j w[s,j] exp(x[b,j]).

    x: (B, J) log child values; wl_t: (J, S) linear weights (transposed).
    """
    m = np.max(x, axis=1)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    e = np.exp(x - shift[:, None])
    lin = e @ wl_t  # (B, S)
    with np.errstate(divide="ignore"):
        out = shift[:, None] + np.log(lin)
    out[~finite] = -np.inf
    return out


def sum_backward(x, wl, out, gout):
    """Gradients of sum_forward.

    wl: (S, J) linear weights. Returns (dx (B,J), dlogw (S,J)).
    Rows with zero mass (out = -inf) receive zero gradient.
    """
    m = np.max(x, axis=1)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    e = np.exp(x - shift[:, None])  # (B, J)
    lin = np.exp(out - shift[:, None])  # (B, S), equals e @ wl.T
    g = np.where(lin > 0.0, gout / np.where(lin > 0.0, lin, 1.0), 0.0)
    dx = (g @ wl) * e
    dlogw = (g.T @ e) * wl
    return dx, dlogw


def kron_forward(left, right):
    """Log-space outer product: out[b, p*Q + q] = left[b,p] + right[b,q]."""
    B, P = left.shape
    Q = right.shape[1]
    return (left[:, :, None] + right[:, None, :]).reshape(B, P * Q)


def kron_backward(gout, P, Q):
    """Gradients of kron_forward. Returns (dleft (B,P), dright (B,Q))."""
    g = gout.reshape(-1, P, Q)
    return g.sum(axis=2), g.sum(axis=1)


def fused_sum_forward(left, right, wl_ti, S):
    """Sum layer over an implicit outer product of two children.

    Equivalent to sum_forward(kron_forward(left, right), ...) without
    materialising the (B, I*J) product.

    left: (B, I); right: (B, J); wl_ti: (I, S*J) linear weights
    rearranged so that wl_ti[i, s*J + j] = w[s, i*J + j].
    """
    B, I = left.shape
    J = right.shape[1]
    ml = np.max(left, axis=1)
    mr = np.max(right, axis=1)
    finite = np.isfinite(ml) & np.isfinite(mr)
    sl = np.where(np.isfinite(ml), ml, 0.0)
    sr = np.where(np.isfinite(mr), mr, 0.0)
    el = np.exp(left - sl[:, None])
    er = np.exp(right - sr[:, None])
    t = (el @ wl_ti).reshape(B, S, J)
    lin = np.einsum("bsj,bj->bs", t, er)
    with np.errstate(divide="ignore"):
        out = (sl + sr)[:, None] + np.log(lin)
    out[~finite] = -np.inf
    return out


def fused_sum_backward(left, right, wl, wl_ti, wl_it, out, gout):
    """Gradients of fused_sum_forward.

    wl: (S, I*J) linear weights; wl_it: (S*J, I) transpose of wl_ti.
    Returns (dleft (B,I), dright (B,J), dlogw (S, I*J)).
    """
    B, I = left.shape
    J = right.shape[1]
    S = gout.shape[1]
    ml = np.max(left, axis=1)
    mr = np.max(right, axis=1)
    sl = np.where(np.isfinite(ml), ml, 0.0)
    sr = np.where(np.isfinite(mr), mr, 0.0)
    el = np.exp(left - sl[:, None])
    er = np.exp(right - sr[:, None])
    t = (el @ wl_ti).reshape(B, S, J)
    lin = np.exp(out - (sl + sr)[:, None])  # (B, S)
    g = np.where(lin > 0.0, gout / np.where(lin > 0.0, lin, 1.0), 0.0)
    dt = g[:, :, None] * er[:, None, :]  # (B, S, J)
    dright = np.einsum("bsj,bs->bj", t, g) * er
    dt2 = dt.reshape(B, S * J)
    dleft = (dt2 @ wl_it) * el
    dw = el.T @ dt2  # (I, S*J); dw[i, s*J + j] = sum_b el[b,i] dt[b,s,j]
    dlogw = dw.reshape(I, S, J).transpose(1, 0, 2).reshape(S, I * J) * wl
    return dleft, dright, dlogw
