"""Permutation handling on top of a slot-ordered circuit.

A circuit over flattened graph tensors is permutation *sensitive*: it
scores a particular slot assignment. Five variants turn that score into
a graph-level quantity:

``none``
    score the tensor as stored (a density over ordered tensors);
``exact``
    average the density over all n! orderings of the real slots — a
    proper exchangeable density, priced at n! circuit passes;
``sort``
    evaluate at the canonical ordering only — invariant at one pass;
``kary``
    average over all n!/(n-k)! ordered k-slot sub-tensors with a small
    circuit over k slots — an invariant *score* (not a normalised graph
    density, since sub-tensor events overlap);
``rand``
    average over N sampled distinct orderings — an unbiased estimate of
    ``exact`` that recovers it at N = n!.

The same decomposition drives training: each variant turns one graph
into a weighted group of assignments (see :mod:`graphspn.train`).
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import circuit as C
from . import graphrep as G
from .errors import (
    DimensionError,
    FeasibilityError,
    StructureError,
    UnsupportedQueryError,
)
from .train import StaticGroup, StaticRow
from .util import as_rng, logsumexp

VARIANTS = ("none", "exact", "sort", "kary", "rand")

# n! passes beyond this many real nodes is considered infeasible
EXACT_MAX_NODES = 8

DEFAULT_RAND_PERMS = 20


@dataclass(frozen=True)
class Representation:
    """Category layout of the graph tensors a model consumes."""

    m: int
    num_node_types: int
    num_edge_types: int
    node_names: tuple = ()
    edge_names: tuple = ()

    def validate(self):
        if self.m < 1:
            raise DimensionError("need at least one slot")
        if self.num_node_types < 1 or self.num_edge_types < 1:
            raise DimensionError("need at least one node and one edge type")
        if self.node_names and len(self.node_names) != self.num_node_types:
            raise DimensionError("node_names must name every node type")
        if self.edge_names and len(self.edge_names) != self.num_edge_types:
            raise DimensionError("edge_names must name every edge type")

    def empty(self):
        return G.empty_graph(self.m, self.num_node_types, self.num_edge_types)

    def matches(self, g):
        return (
            g.m == self.m
            and g.num_node_types == self.num_node_types
            and g.num_edge_types == self.num_edge_types
        )


def variable_spec_for(rep, slots=None):
    """Variable spec of flattened tensors over ``slots`` slots (default:
    the full ``rep.m``): node variables have q+1 categories, edge
    variables r+1, laid out in flatten order."""
    m = rep.m if slots is None else slots
    sizes = np.empty(m * (m + 1), dtype=np.int64)
    block = sizes.reshape(m, m + 1)
    block[:, 0] = rep.num_node_types + 1
    block[:, 1:] = rep.num_edge_types + 1
    return C.VariableSpec(m * (m + 1), tuple(int(s) for s in sizes))


@dataclass
class GraphSPNModel:
    """A circuit plus the invariance variant and tensor layout it was
    built for. ``variant_params`` holds ``k`` (kary) and ``n_perms``
    (rand)."""

    circuit: C.Circuit
    variant: str
    rep: Representation
    structure: C.StructureConfig
    variant_params: dict = field(default_factory=dict)

    def validate(self):
        if self.variant not in VARIANTS:
            raise StructureError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        self.rep.validate()
        slots = self.scope_slots
        expected = variable_spec_for(self.rep, slots)
        got = self.circuit.spec
        if (
            got.var_count != expected.var_count
            or tuple(got.category_sizes) != tuple(expected.category_sizes)
        ):
            raise StructureError(
                f"circuit variables do not match a {slots}-slot tensor "
                f"over this representation"
            )
        if self.variant == "kary":
            k = self.variant_params.get("k")
            if not isinstance(k, int) or k < 1:
                raise StructureError("kary variant needs an integer k >= 1")
        if self.variant == "rand":
            n = self.variant_params.get("n_perms")
            if not isinstance(n, int) or n < 1:
                raise StructureError("rand variant needs n_perms >= 1")

    @property
    def scope_slots(self):
        """Slots covered by one circuit evaluation: k for kary, m else."""
        if self.variant == "kary":
            return int(self.variant_params.get("k", 0)) or self.rep.m
        return self.rep.m


def build_model(rep, variant, structure=None, k=None, n_perms=None):
    """Construct a fresh model for the given variant. Deterministic in
    ``structure.seed``."""
    rep.validate()
    if structure is None:
        structure = C.StructureConfig()
    params = {}
    if variant == "kary":
        if k is None or k < 1:
            raise StructureError("kary variant needs k >= 1")
        if k > rep.m:
            raise StructureError(f"k={k} exceeds m={rep.m} slots")
        params["k"] = int(k)
    if variant == "rand":
        params["n_perms"] = int(n_perms) if n_perms else DEFAULT_RAND_PERMS
    slots = params.get("k", rep.m)
    spec = variable_spec_for(rep, slots)
    circ = C.build_circuit(spec, structure)
    model = GraphSPNModel(
        circuit=circ, variant=variant, rep=rep,
        structure=structure, variant_params=params,
    )
    model.validate()
    return model


def _check_graph(model, g):
    if not model.rep.matches(g):
        raise DimensionError(
            "graph tensor does not match the model's representation "
            f"(m={model.rep.m}, q={model.rep.num_node_types}, "
            f"r={model.rep.num_edge_types})"
        )
    g.validate()


def _real_orderings_rows(g, orderings):
    rows = np.empty((len(orderings), g.m * (g.m + 1)), dtype=np.int64)
    for i, order in enumerate(orderings):
        p = G.real_slot_permutation(g, np.asarray(order, dtype=np.int64))
        rows[i] = G.flatten(G.permute(g, p))
    return rows


def logp_none(model, g, ctx=None):
    """Log-density of the tensor exactly as stored (slot order matters)."""
    _check_graph(model, g)
    return C.log_density(model.circuit, G.flatten(g), ctx=ctx)


def logp_exact(model, g, ctx=None):
    """Log of the mean density over all n! real-slot orderings."""
    _check_graph(model, g)
    n = g.n
    if n > EXACT_MAX_NODES:
        raise FeasibilityError(
            f"exact averaging over {n}! = {math.factorial(n)} orderings "
            f"is over the feasibility limit ({EXACT_MAX_NODES} nodes)"
        )
    orderings = list(itertools.permutations(range(n)))
    rows = _real_orderings_rows(g, orderings)
    vals = C.log_density_batch(model.circuit, rows, ctx=ctx)
    return float(logsumexp(vals) - math.log(len(orderings)))


def logp_sort(model, g, ctx=None):
    """Log-density at the canonical slot ordering (invariant, one pass)."""
    _check_graph(model, g)
    gc = G.canonicalize(g)
    return C.log_density(model.circuit, G.flatten(gc), ctx=ctx)


def logp_kary(model, g, ctx=None):
    """Log of the mean circuit density over all ordered k-slot
    sub-tensors. An invariant score for comparing graphs — not a
    normalised density over graphs, because sub-tensors overlap."""
    _check_graph(model, g)
    k = model.variant_params["k"]
    real = g.real_slots
    n = real.size
    if k > n:
        raise FeasibilityError(
            f"k={k} exceeds the {n} real nodes of the graph"
        )
    tuples = list(G.enumerate_tuples(n, k))
    rows = np.empty((len(tuples), k * (k + 1)), dtype=np.int64)
    for i, t in enumerate(tuples):
        sub = G.subgraph(g, real[list(t)])
        rows[i] = G.flatten(sub)
    vals = C.log_density_batch(model.circuit, rows, ctx=ctx)
    return float(logsumexp(vals) - math.log(len(tuples)))


def logp_rand(model, g, rng=0, n_perms=None, ctx=None):
    """Log of the mean density over ``n_perms`` sampled distinct real-slot
    orderings; unbiased for ``exact`` and equal to it at n_perms = n!."""
    _check_graph(model, g)
    count = n_perms if n_perms is not None else model.variant_params["n_perms"]
    n = g.n
    total = math.factorial(n)
    if count > total:
        raise FeasibilityError(
            f"cannot draw {count} distinct orderings of {n} nodes "
            f"(only {total} exist)"
        )
    perms = G.sample_permutations(n, count, rng=rng)
    orderings = [p.perm for p in perms]
    rows = _real_orderings_rows(g, orderings)
    vals = C.log_density_batch(model.circuit, rows, ctx=ctx)
    return float(logsumexp(vals) - math.log(len(orderings)))


def logp(model, g, rng=0, ctx=None):
    """Dispatch on the model's own variant."""
    if model.variant == "none":
        return logp_none(model, g, ctx=ctx)
    if model.variant == "exact":
        return logp_exact(model, g, ctx=ctx)
    if model.variant == "sort":
        return logp_sort(model, g, ctx=ctx)
    if model.variant == "kary":
        return logp_kary(model, g, ctx=ctx)
    return logp_rand(model, g, rng=rng, ctx=ctx)


# ---------------------------------------------------------------------------
# Training views


class _FreshPermutationRow:
    """One uniformly resampled real-slot ordering per epoch (rand)."""

    def __init__(self, g, base_seed, index):
        self._g = g
        self._base_seed = base_seed
        self._index = index

    def rows(self, epoch):
        gen = np.random.default_rng(
            np.random.SeedSequence((self._base_seed, epoch, self._index))
        )
        n = self._g.n
        order = gen.permutation(n)
        p = G.real_slot_permutation(self._g, order)
        row = G.flatten(G.permute(self._g, p))
        return row[None, :], np.zeros(1)


def training_view(model, graphs, seed=0):
    """Turn graphs into per-example assignment providers implementing the
    model's variant (see module docstring)."""
    providers = []
    for index, g in enumerate(graphs):
        _check_graph(model, g)
        if model.variant == "none":
            providers.append(StaticRow(G.flatten(g)))
        elif model.variant == "sort":
            providers.append(StaticRow(G.flatten(G.canonicalize(g))))
        elif model.variant == "exact":
            n = g.n
            if n > EXACT_MAX_NODES:
                raise FeasibilityError(
                    f"exact training needs n <= {EXACT_MAX_NODES}, got {n}"
                )
            orderings = list(itertools.permutations(range(n)))
            rows = _real_orderings_rows(g, orderings)
            logw = np.full(len(orderings), -math.log(len(orderings)))
            providers.append(StaticGroup(rows, logw))
        elif model.variant == "kary":
            k = model.variant_params["k"]
            real = g.real_slots
            if k > real.size:
                raise FeasibilityError(
                    f"k={k} exceeds the {real.size} real nodes of a "
                    "training graph"
                )
            tuples = list(G.enumerate_tuples(real.size, k))
            rows = np.empty((len(tuples), k * (k + 1)), dtype=np.int64)
            for i, t in enumerate(tuples):
                rows[i] = G.flatten(G.subgraph(g, real[list(t)]))
            logw = np.full(len(tuples), -math.log(len(tuples)))
            providers.append(StaticGroup(rows, logw))
        elif model.variant == "rand":
            providers.append(_FreshPermutationRow(g, seed, index))
        else:
            raise StructureError(f"unknown variant {model.variant!r}")
    return providers


# ---------------------------------------------------------------------------
# Sampling graphs


def _tensor_from_assignment(model, codes, slots):
    """Rebuild a valid tensor from a sampled flat assignment: mirror the
    sampled lower triangle onto the upper, force the diagonal to no-edge
    and isolate virtual slots."""
    rep = model.rep
    block = np.asarray(codes, dtype=np.int64).reshape(slots, slots + 1)
    node_cat = block[:, 0].copy()
    raw = block[:, 1:]
    lower = np.tril(np.ones((slots, slots), dtype=bool), k=-1)
    edge = np.where(lower, raw, raw.T).astype(np.int64)
    np.fill_diagonal(edge, rep.num_edge_types)
    virtual = node_cat == rep.num_node_types
    edge[virtual, :] = rep.num_edge_types
    edge[:, virtual] = rep.num_edge_types
    g = G.GraphTensor(
        node_cat, edge, rep.num_node_types, rep.num_edge_types
    )
    g.validate()
    return g


def _evidence_codes(model, evidence):
    if evidence is None:
        return None
    if isinstance(evidence, C.QueryMask):
        return evidence.codes
    return np.asarray(evidence, dtype=np.int64)


def sample_graphs(model, count, rng=0, evidence=None, ctx=None):
    """Draw graph tensors from the model.

    Full-scope variants sample the flat assignment ancestrally (honouring
    ``evidence``, a flat QueryMask) and then symmetrise from the lower
    triangle. ``exact``/``rand`` additionally apply a uniform random
    real-slot relabelling, matching the density they define. ``kary``
    samples k-slot blocks independently and lays them along the
    diagonal; evidence is not supported there.
    """
    model.validate()
    rep = model.rep
    gen = as_rng(rng)
    if model.variant == "kary":
        if evidence is not None:
            raise UnsupportedQueryError(
                "kary models score overlapping sub-tensors; conditioning "
                "on full-tensor evidence is not available"
            )
        return _sample_kary(model, count, gen, ctx=ctx)
    codes = _evidence_codes(model, evidence)
    mask = (
        C.QueryMask(codes)
        if codes is not None
        else C.QueryMask.all_marginalized(rep.m * (rep.m + 1))
    )
    rows = C.sample_many(
        model.circuit, count, evidence=mask, rng=gen, ctx=ctx
    )
    out = []
    for i in range(count):
        g = _tensor_from_assignment(model, rows[i], rep.m)
        if model.variant in ("exact", "rand") and g.n > 1:
            order = gen.permutation(g.n)
            g = G.permute(g, G.real_slot_permutation(g, order))
        out.append(g)
    return out


def _sample_kary(model, count, gen, ctx=None):
    rep = model.rep
    k = model.variant_params["k"]
    if ctx is None:
        ctx = C.freeze(model.circuit)
    out = []
    for _ in range(count):
        g = rep.empty()
        placed = 0
        while placed < rep.m:
            size = min(k, rep.m - placed)
            row = C.sample_many(model.circuit, 1, rng=gen, ctx=ctx)[0]
            block = _tensor_from_assignment(model, row, k)
            sl = slice(placed, placed + size)
            g.node_cat[sl] = block.node_cat[:size]
            g.edge_cat[sl, sl] = block.edge_cat[:size, :size]
            placed += size
        virtual = g.node_cat == rep.num_node_types
        g.edge_cat[virtual, :] = rep.num_edge_types
        g.edge_cat[:, virtual] = rep.num_edge_types
        np.fill_diagonal(g.edge_cat, rep.num_edge_types)
        g.validate()
        out.append(g)
    return out


def sample_graph(model, rng=0, evidence=None, ctx=None):
    return sample_graphs(model, 1, rng=rng, evidence=evidence, ctx=ctx)[0]
