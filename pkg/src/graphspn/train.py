"""Maximum-likelihood training by mini-batch ADAM.

The unit of training data is a *group* of weighted assignments: the
example's log-likelihood is ``logsumexp(log p(rows) + log weights)``.
A plain density model uses one row with log-weight 0; an averaged model
(over permutations or sub-tuples) lists every term with log-weight
``-log(count)``; a resampled model regenerates its single row each
epoch. This makes one objective serve every invariance variant.

Gradients are exact and computed layer by layer in reverse (see
``circuit.forward_backward``); parameters are unconstrained, so the
updates are plain ADAM steps without projections.
"""

from dataclasses import dataclass

import numpy as np

from .circuit import _upward, backward_from, freeze, trainable_arrays
from .errors import TrainingError
from .util import logsumexp


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 256
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.82
    eps: float = 1e-8
    shuffle_seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise TrainingError("epochs must be at least 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be at least 1")
        if not (self.step_size > 0):
            raise TrainingError("step_size must be positive")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise TrainingError(f"{name} must lie in [0, 1)")


class StaticRow:
    """One fixed assignment, every epoch."""

    def __init__(self, codes):
        self._codes = np.ascontiguousarray(codes, dtype=np.int64)[None, :]
        self._logw = np.zeros(1)

    def rows(self, epoch):
        return self._codes, self._logw


class StaticGroup:
    """A fixed weighted group of assignments (e.g. all permutations of
    one example, each weighted 1/count)."""

    def __init__(self, codes, logw):
        codes = np.ascontiguousarray(codes, dtype=np.int64)
        logw = np.asarray(logw, dtype=np.float64)
        if codes.ndim != 2 or logw.shape != (codes.shape[0],):
            raise TrainingError("group rows and log-weights disagree")
        self._codes = codes
        self._logw = logw

    def rows(self, epoch):
        return self._codes, self._logw


class Adam:
    """ADAM over a fixed list of parameter arrays, updated in place."""

    def __init__(self, arrays, config):
        self.arrays = arrays
        self.config = config
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads):
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for a, m, v, g in zip(self.arrays, self.m, self.v, grads):
            if g is None:
                continue
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * np.square(g)
            a -= c.step_size * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def fit(circuit, providers, config=TrainConfig(), callback=None):
    """Minimise mean negative log-likelihood over the providers.

    Mutates ``circuit`` in place and returns the per-epoch mean-NLL
    trace. ``callback(epoch, nll)`` is invoked after each epoch.
    Deterministic in ``config.shuffle_seed`` and the providers' own
    seeds.
    """
    config.validate()
    if not providers:
        raise TrainingError("training set is empty")
    pairs = trainable_arrays(circuit)
    arrays = [a for _, a in pairs]
    layer_order = [idx for idx, _ in pairs]
    opt = Adam(arrays, config)
    rng = np.random.default_rng(config.shuffle_seed)
    n = len(providers)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_nll = 0.0
        for start in range(0, n, config.batch_size):
            batch_ids = order[start:start + config.batch_size]
            blocks = []
            logws = []
            bounds = [0]
            for pid in batch_ids:
                codes, logw = providers[pid].rows(epoch)
                blocks.append(codes)
                logws.append(logw)
                bounds.append(bounds[-1] + codes.shape[0])
            codes = np.ascontiguousarray(np.concatenate(blocks, axis=0))
            logw = np.concatenate(logws)
            ctx = freeze(circuit, validate=False)
            outs = _upward(ctx, codes, keep=True)
            vals = outs[circuit.root][:, 0]
            n_groups = len(batch_ids)
            seed = np.empty(bounds[-1])
            batch_nll = 0.0
            for gi in range(n_groups):
                lo, hi = bounds[gi], bounds[gi + 1]
                scores = vals[lo:hi] + logw[lo:hi]
                lse = logsumexp(scores)
                if not np.isfinite(lse):
                    raise TrainingError(
                        f"non-finite log-likelihood at epoch {epoch}, "
                        f"example {int(batch_ids[gi])}: {lse!r}"
                    )
                batch_nll += -lse
                soft = np.exp(scores - lse)
                seed[lo:hi] = -soft / n_groups
            pgrads = backward_from(ctx, codes, outs, seed)
            opt.step([pgrads.get(idx) for idx in layer_order])
            total_nll += batch_nll
        epoch_nll = total_nll / n
        if not np.isfinite(epoch_nll):
            raise TrainingError(
                f"non-finite epoch loss at epoch {epoch}: {epoch_nll!r}"
            )
        trace.append(epoch_nll)
        if callback is not None:
            callback(epoch, epoch_nll)
    return trace
