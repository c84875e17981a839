"""Brute-force reference implementations.

Everything here deliberately shares no code with the fast evaluation
path: densities are computed by a plain linear-space recursive
evaluator (direct softmax, ``np.kron``, dense matvecs) and set
quantities by enumerating full assignment spaces with compensated
(Kahan) summation. These are the ground truth the tests compare the
log-space kernel path against. Guarded to small models: the assignment
space ``prod(category_sizes)`` must stay under a hard cap.
"""

import itertools
import math

import numpy as np

from .circuit import InputLayer, ProductLayer, SumLayer
from .errors import FeasibilityError
from .graphrep import (
    enumerate_tuples,
    flatten,
    permute,
    real_slot_permutation,
    subgraph,
)

MAX_ASSIGNMENTS = 16_000_000


class KahanSum:
    """Compensated accumulator for long low-magnitude sums."""

    __slots__ = ("total", "_c")

    def __init__(self):
        self.total = 0.0
        self._c = 0.0

    def add(self, x):
        y = x - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t
        return self


def _softmax(a, axis=-1):
    e = np.exp(a - np.max(a, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def brute_density(circuit, row):
    """Density of one full assignment by bottom-up linear-space
    recursion (no log-space tricks, no kernels)."""
    row = np.asarray(row, dtype=np.int64)
    if np.any(row < 0):
        raise FeasibilityError("brute_density needs a fully observed row")
    values = []
    for layer in circuit.layers:
        if isinstance(layer, InputLayer):
            U = layer.params.shape[0]
            v = np.ones(U)
            for i, var in enumerate(layer.scope):
                ki = int(layer.cats[i])
                probs = _softmax(layer.params[:, i, :ki], axis=1)
                v = v * probs[:, int(row[var])]
            values.append(v)
        elif isinstance(layer, ProductLayer):
            if layer.kind == "hadamard":
                v = values[layer.children[0]].copy()
                for c in layer.children[1:]:
                    v = v * values[c]
            else:
                v = np.ones(1)
                for c in layer.children:
                    v = np.kron(v, values[c])
            values.append(v)
        elif isinstance(layer, SumLayer):
            w = _softmax(layer.weights, axis=1)
            x = np.concatenate([values[c] for c in layer.children])
            values.append(w @ x)
        else:
            raise FeasibilityError(f"unknown layer type {type(layer)!r}")
    return float(values[circuit.root][0])


def brute_log_density(circuit, row):
    d = brute_density(circuit, row)
    return math.log(d) if d > 0.0 else -math.inf


def _space_size(spec):
    size = 1
    for k in spec.category_sizes:
        size *= k
        if size > MAX_ASSIGNMENTS:
            raise FeasibilityError(
                "assignment space too large for brute-force enumeration "
                f"(cap {MAX_ASSIGNMENTS})"
            )
    return size


def iter_assignments(spec, fixed=None):
    """Yield every full assignment consistent with ``fixed`` (a codes
    array with -1 for free variables), as int64 arrays."""
    sizes = spec.category_sizes
    _space_size(spec)
    if fixed is None:
        fixed = np.full(spec.var_count, -1, dtype=np.int64)
    free = [v for v in range(spec.var_count) if fixed[v] < 0]
    base = np.asarray(fixed, dtype=np.int64).copy()
    for combo in itertools.product(*[range(sizes[v]) for v in free]):
        row = base.copy()
        for v, c in zip(free, combo):
            row[v] = c
        yield row


def brute_total_mass(circuit):
    """Sum of the density over the entire assignment space (linear
    space); 1.0 for a correctly normalised circuit."""
    acc = KahanSum()
    for row in iter_assignments(circuit.spec):
        acc.add(brute_density(circuit, row))
    return acc.total


def brute_marginal(circuit, mask):
    """Marginal probability of the evidence in ``mask`` by enumerating
    the free variables (linear space)."""
    codes = mask.codes if hasattr(mask, "codes") else np.asarray(mask)
    acc = KahanSum()
    for row in iter_assignments(circuit.spec, fixed=codes):
        acc.add(brute_density(circuit, row))
    return acc.total


def brute_conditional_table(circuit, evidence, var):
    """Conditional distribution of one variable given the evidence, by
    brute marginals."""
    codes = evidence.codes if hasattr(evidence, "codes") else np.asarray(evidence)
    codes = np.asarray(codes, dtype=np.int64)
    size = circuit.spec.category_sizes[var]
    masses = np.empty(size)
    for c in range(size):
        row = codes.copy()
        row[var] = c
        masses[c] = brute_marginal(circuit, row)
    total = masses.sum()
    if total <= 0:
        raise FeasibilityError("evidence has zero probability")
    return masses / total


def brute_expectation(circuit, tables):
    """Expectation of a factored function by full enumeration."""
    tables = np.asarray(tables, dtype=np.float64)
    acc = KahanSum()
    for row in iter_assignments(circuit.spec):
        f = 1.0
        for v in range(circuit.spec.var_count):
            f *= tables[v, row[v]]
        if f != 0.0:
            acc.add(f * brute_density(circuit, row))
    return acc.total


def brute_janossy(circuit, g, max_nodes=6):
    """Mean density over all real-slot orderings, each evaluated with an
    independent full pass (linear space)."""
    n = g.n
    if n > max_nodes:
        raise FeasibilityError(f"brute Janossy average capped at {max_nodes} nodes")
    acc = KahanSum()
    count = 0
    for order in itertools.permutations(range(n)):
        p = real_slot_permutation(g, np.asarray(order, dtype=np.int64))
        acc.add(brute_density(circuit, flatten(permute(g, p))))
        count += 1
    return acc.total / count


def brute_kary(circuit, g, k, max_nodes=6):
    """Mean density over all ordered k-slot sub-tensors (linear space)."""
    real = g.real_slots
    n = real.size
    if n > max_nodes:
        raise FeasibilityError(f"brute k-ary average capped at {max_nodes} nodes")
    acc = KahanSum()
    count = 0
    for t in enumerate_tuples(n, k):
        sub = subgraph(g, real[list(t)])
        acc.add(brute_density(circuit, flatten(sub)))
        count += 1
    return acc.total / count
