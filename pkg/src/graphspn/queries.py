"""Graph-level tractable queries: expectations of sub-graph indicator
functions, marginal queries, and conditional generation.

A :class:`SubgraphQuery` assigns each node slot and each edge cell one
of two modes: *evidence* (a fixed category) or *marginal* (summed out).
Compiling produces a flat circuit mask; the expectation of the induced
indicator-product function is then a single circuit pass for ``none``
and ``sort`` models and an average over permuted masks for ``exact``
and ``rand``. ``kary`` models score overlapping sub-tensors and do not
support marginal queries (their circuits cover only k slots).

Conditional generation compiles a known fragment to evidence and runs
conditional ancestral sampling; for ``sort`` models the fragment is
canonicalised first and pinned to the leading slots, since that is the
coordinate system the circuit was trained in.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import circuit as C
from . import graphrep as G
from .errors import (
    DataError,
    DimensionError,
    FeasibilityError,
    UnsupportedQueryError,
)
from .invariance import EXACT_MAX_NODES, sample_graphs
from .util import logsumexp

MARGINAL = None


@dataclass
class SubgraphQuery:
    """Per-slot and per-edge modes; missing entries are marginal.

    ``node_modes[i]`` is a node category (evidence) or ``None``;
    ``edge_modes[(i, j)]`` with ``i <= j`` likewise for edge cells.
    ``target_nodes`` records which slots the query targets (defaults to
    the slots left marginal in any of their cells).
    """

    m: int
    node_modes: dict = field(default_factory=dict)
    edge_modes: dict = field(default_factory=dict)
    target_nodes: frozenset = frozenset()

    def set_node(self, i, mode):
        if not (0 <= i < self.m):
            raise DimensionError(f"node slot {i} out of range for m={self.m}")
        if i in self.node_modes and self.node_modes[i] != mode:
            raise DataError(f"conflicting modes for node {i}")
        self.node_modes[i] = mode
        return self

    def set_edge(self, i, j, mode):
        if not (0 <= i < self.m and 0 <= j < self.m):
            raise DimensionError(
                f"edge ({i}, {j}) out of range for m={self.m}"
            )
        key = (i, j) if i <= j else (j, i)
        if key in self.edge_modes and self.edge_modes[key] != mode:
            raise DataError(
                f"conflicting modes for the symmetric edge pair {key}"
            )
        self.edge_modes[key] = mode
        return self

    def default_targets(self):
        """Slots with any marginal cell (their node or an incident edge)."""
        out = set()
        for i in range(self.m):
            if self.node_modes.get(i, MARGINAL) is MARGINAL:
                out.add(i)
        for (i, j), mode in self.edge_modes.items():
            if mode is MARGINAL:
                out.update((i, j))
        for i in range(self.m):
            for j in range(i, self.m):
                if (i, j) not in self.edge_modes:
                    out.update((i, j))
        return frozenset(out)


def compile_query(qu, m):
    """Lower a SubgraphQuery to a flat QueryMask: evidence cells get
    their category (both symmetric copies of an edge), marginal cells
    get -1."""
    if qu.m != m:
        raise DimensionError(f"query is over m={qu.m}, expected m={m}")
    codes = np.full(m * (m + 1), C.MARGINALIZED, dtype=np.int64)
    for i, mode in qu.node_modes.items():
        if not (0 <= i < m):
            raise DimensionError(f"node slot {i} out of range")
        if mode is not MARGINAL:
            codes[G.node_var(i, m)] = int(mode)
    for (i, j), mode in qu.edge_modes.items():
        if not (0 <= i < m and 0 <= j < m):
            raise DimensionError(f"edge ({i}, {j}) out of range")
        if mode is not MARGINAL:
            codes[G.edge_var(i, j, m)] = int(mode)
            codes[G.edge_var(j, i, m)] = int(mode)
    return C.QueryMask(codes)


def _permutable_slots(model, qu):
    """Slots free to permute: everything not pinned as evidence-virtual."""
    virtual = model.rep.num_node_types
    return [
        i for i in range(qu.m)
        if qu.node_modes.get(i, MARGINAL) is MARGINAL
        or qu.node_modes[i] != virtual
    ]


def _slot_perm(m, slots, order):
    perm = np.arange(m, dtype=np.int64)
    slots = np.asarray(slots, dtype=np.int64)
    perm[slots] = slots[np.asarray(order, dtype=np.int64)]
    return G.Permutation(perm)


def expectation(model, qu, rng=0, n_perms=None):
    """Log-expectation of the indicator-product function encoded by the
    query, under the model's graph distribution.

    One circuit pass for ``none``/``sort``; the mean over all (or
    ``n_perms`` sampled) permuted masks for ``exact``/``rand``. For
    ``sort``, evidence must already be in canonical slot coordinates.
    """
    model.validate()
    if model.variant == "kary":
        raise UnsupportedQueryError(
            "kary models are not smooth over full tensors; marginal "
            "queries need the smooth-average variants "
            "(none, sort, exact, rand)"
        )
    m = model.rep.m
    mask = compile_query(qu, m)
    ctx = C.freeze(model.circuit)
    if model.variant in ("none", "sort"):
        return C.log_query(model.circuit, mask, ctx=ctx)
    slots = _permutable_slots(model, qu)
    P = len(slots)
    if model.variant == "exact":
        if P > EXACT_MAX_NODES:
            raise FeasibilityError(
                f"exact query averaging over {P}! mask orderings is over "
                f"the feasibility limit ({EXACT_MAX_NODES} permutable slots)"
            )
        orders = list(itertools.permutations(range(P)))
    else:
        count = n_perms or model.variant_params.get("n_perms", 1)
        total = math.factorial(P)
        if count > total:
            raise FeasibilityError(
                f"cannot draw {count} distinct orderings of {P} slots"
            )
        orders = [p.perm for p in G.sample_permutations(P, count, rng=rng)]
    rows = np.empty((len(orders), m * (m + 1)), dtype=np.int64)
    for idx, order in enumerate(orders):
        p = _slot_perm(m, slots, order)
        rows[idx] = G.permute_codes(mask.codes, p, m)
    vals = C.log_query_batch(model.circuit, rows, ctx=ctx)
    return float(logsumexp(vals) - math.log(len(orders)))


def fragment_query(model, fragment, slots=None):
    """Query pinning a fragment tensor as evidence at the given slots.

    The fragment's nodes, its internal edge cells (including diagonal)
    become evidence; every other cell stays marginal. For ``sort``
    models the fragment is canonicalised and pinned to slots 0..f-1.
    """
    rep = model.rep
    fragment.validate()
    if (
        fragment.num_node_types != rep.num_node_types
        or fragment.num_edge_types != rep.num_edge_types
    ):
        raise DimensionError(
            "fragment categories do not match the model representation"
        )
    f = fragment.m
    if f > rep.m:
        raise DimensionError(
            f"fragment has {f} slots, model tensors only {rep.m}"
        )
    if model.variant == "sort":
        fragment = G.canonicalize(fragment)
        slots = list(range(f))
    elif slots is None:
        slots = list(range(f))
    slots = [int(s) for s in slots]
    if len(slots) != f or len(set(slots)) != f:
        raise DimensionError("slot set must match the fragment size")
    qu = SubgraphQuery(m=rep.m)
    for a in range(f):
        qu.set_node(slots[a], int(fragment.node_cat[a]))
        for b in range(a, f):
            qu.set_edge(slots[a], slots[b], int(fragment.edge_cat[a, b]))
    qu.target_nodes = frozenset(range(rep.m)) - frozenset(slots)
    return qu


def conditional_generate(model, fragment, count, rng=0, slots=None):
    """Sample ``count`` graphs agreeing with the fragment on all its
    cells (conditional ancestral sampling). Raises on impossible
    evidence."""
    qu = fragment_query(model, fragment, slots=slots)
    mask = compile_query(qu, model.rep.m)
    return sample_graphs(model, count, rng=rng, evidence=mask)


# ---------------------------------------------------------------------------
# Query description files


def _node_category(token, rep):
    if token == "virtual":
        return rep.num_node_types
    if rep.node_names and token in rep.node_names:
        return rep.node_names.index(token)
    try:
        return int(token)
    except ValueError:
        raise DataError(f"unknown node category {token!r}") from None


def _edge_category(token, rep):
    if token == "none":
        return rep.num_edge_types
    if rep.edge_names and token in rep.edge_names:
        return rep.edge_names.index(token)
    try:
        return int(token)
    except ValueError:
        raise DataError(f"unknown edge category {token!r}") from None


def parse_query_file(text, rep):
    """Parse the query description format::

        # comment
        node 0 = C          # evidence: node category by name or index
        node 5 = virtual    # evidence: slot known to be unused
        node 2 = ?          # marginal
        edge 0 1 = double   # evidence: edge category by name or index
        edge 0 2 = none     # evidence: no edge
        edge 2 3 = ?        # marginal
        target 2 3          # optional; defaults to marginal slots

    Unlisted cells are marginal. Raises DataError with a line number on
    any problem.
    """
    qu = SubgraphQuery(m=rep.m)
    targets = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node":
                if len(parts) != 4 or parts[2] != "=":
                    raise DataError("expected 'node <slot> = <value>'")
                slot = int(parts[1])
                mode = (
                    MARGINAL if parts[3] == "?"
                    else _node_category(parts[3], rep)
                )
                if mode is not MARGINAL and not (
                    0 <= mode <= rep.num_node_types
                ):
                    raise DataError(f"node category {mode} out of range")
                qu.set_node(slot, mode)
            elif parts[0] == "edge":
                if len(parts) != 5 or parts[3] != "=":
                    raise DataError("expected 'edge <i> <j> = <value>'")
                i, j = int(parts[1]), int(parts[2])
                mode = (
                    MARGINAL if parts[4] == "?"
                    else _edge_category(parts[4], rep)
                )
                if mode is not MARGINAL and not (
                    0 <= mode <= rep.num_edge_types
                ):
                    raise DataError(f"edge category {mode} out of range")
                qu.set_edge(i, j, mode)
            elif parts[0] == "target":
                targets = frozenset(int(t) for t in parts[1:])
            else:
                raise DataError(f"unknown directive {parts[0]!r}")
        except (ValueError, DimensionError, DataError) as exc:
            raise DataError(f"line {ln}: {exc}") from None
    qu.target_nodes = targets if targets is not None else qu.default_targets()
    if qu.target_nodes and max(qu.target_nodes) >= rep.m:
        raise DataError("target slot out of range")
    return qu
