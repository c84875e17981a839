"""Small shared numeric helpers."""

import numpy as np


def logsumexp(a, axis=None):
    """Max-shifted log-sum-exp that tolerates all--inf slices."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True) if a.size else np.float64(-np.inf)
    if a.size == 0:
        return -np.inf
    shift = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(a - shift), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = shift + np.log(s)
    out = np.where(np.isfinite(m), out, m)
    if axis is None:
        return float(out.reshape(-1)[0])
    return np.squeeze(out, axis=axis)


def log_softmax(a, axis=-1):
    """Shift-stable log-softmax along ``axis``."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - shift)
    s = np.sum(e, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        return (a - shift) - np.log(s)


def logmeanexp(a, axis=None):
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[axis] if axis is not None else a.size
    return logsumexp(a, axis=axis) - np.log(n)


def as_rng(seed):
    """Accept an int seed, a SeedSequence, or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def choose_index(rng, weights):
    """Draw an index proportional to nonnegative ``weights`` (linear space),
    via inverse-CDF so the draw consumes exactly one uniform."""
    c = np.cumsum(weights)
    total = c[-1]
    if not np.isfinite(total) or total <= 0.0:
        raise ValueError("cannot draw from all-zero or non-finite weights")
    r = rng.random() * total
    idx = int(np.searchsorted(c, r, side="right"))
    return min(idx, len(weights) - 1)
