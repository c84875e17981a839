"""Fixed-size tensor representation of labelled undirected graphs.

A graph with up to ``m`` nodes is stored in ``m`` slots. Node slot ``i``
carries a category in ``range(q + 1)`` — ``q`` real node types plus the
*virtual* type ``q`` marking an unused slot. Edge cell ``(i, j)``
carries a category in ``range(r + 1)`` — ``r`` real edge types plus
*no-edge* ``r``. Invariants: the edge matrix is symmetric, the diagonal
is no-edge, and every edge incident to a virtual slot is no-edge.

``flatten`` linearises a tensor into ``m * (m + 1)`` categorical codes
in slot-major order: node 0, its edge row, node 1, its edge row, … so
node ``i`` sits at ``i * (m + 1)`` and edge ``(i, j)`` at
``i * (m + 1) + 1 + j``. This is the variable order the circuits are
built over.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapacityError,
    DimensionError,
    FeasibilityError,
    IntegrityError,
)
from .util import as_rng


@dataclass(eq=False)
class GraphTensor:
    node_cat: np.ndarray  # (m,) int64
    edge_cat: np.ndarray  # (m, m) int64
    num_node_types: int  # q; category q is the virtual slot marker
    num_edge_types: int  # r; category r means "no edge"

    def __post_init__(self):
        self.node_cat = np.ascontiguousarray(self.node_cat, dtype=np.int64)
        self.edge_cat = np.ascontiguousarray(self.edge_cat, dtype=np.int64)

    @property
    def m(self):
        return self.node_cat.shape[0]

    @property
    def virtual_cat(self):
        return self.num_node_types

    @property
    def no_edge_cat(self):
        return self.num_edge_types

    @property
    def real_slots(self):
        return np.flatnonzero(self.node_cat != self.virtual_cat)

    @property
    def n(self):
        """Number of real (non-virtual) nodes."""
        return int(np.sum(self.node_cat != self.virtual_cat))

    def copy(self):
        return GraphTensor(
            self.node_cat.copy(), self.edge_cat.copy(),
            self.num_node_types, self.num_edge_types,
        )

    def same_shape_as(self, other):
        return (
            self.m == other.m
            and self.num_node_types == other.num_node_types
            and self.num_edge_types == other.num_edge_types
        )

    def equal(self, other):
        return (
            self.same_shape_as(other)
            and np.array_equal(self.node_cat, other.node_cat)
            and np.array_equal(self.edge_cat, other.edge_cat)
        )

    def validate(self):
        m = self.m
        if self.edge_cat.shape != (m, m):
            raise DimensionError(
                f"edge matrix shape {self.edge_cat.shape} does not match "
                f"{m} node slots"
            )
        if self.num_node_types < 1 or self.num_edge_types < 1:
            raise DimensionError("need at least one node and one edge type")
        if np.any(self.node_cat < 0) or np.any(self.node_cat > self.virtual_cat):
            raise IntegrityError("node category out of range")
        if np.any(self.edge_cat < 0) or np.any(self.edge_cat > self.no_edge_cat):
            raise IntegrityError("edge category out of range")
        if not np.array_equal(self.edge_cat, self.edge_cat.T):
            raise IntegrityError("edge matrix is not symmetric")
        if np.any(np.diag(self.edge_cat) != self.no_edge_cat):
            raise IntegrityError("diagonal must be no-edge")
        virtual = self.node_cat == self.virtual_cat
        if np.any(self.edge_cat[virtual, :] != self.no_edge_cat) or np.any(
            self.edge_cat[:, virtual] != self.no_edge_cat
        ):
            raise IntegrityError("virtual slots must be isolated")


def empty_graph(m, num_node_types, num_edge_types):
    """All-virtual tensor (every slot unused, every cell no-edge)."""
    return GraphTensor(
        np.full(m, num_node_types, dtype=np.int64),
        np.full((m, m), num_edge_types, dtype=np.int64),
        num_node_types,
        num_edge_types,
    )


def pad(node_cat, edge_cat, m, num_node_types, num_edge_types):
    """Place an n-node graph into the first n of m slots."""
    node_cat = np.asarray(node_cat, dtype=np.int64)
    edge_cat = np.asarray(edge_cat, dtype=np.int64)
    n = node_cat.shape[0]
    if n > m:
        raise CapacityError(f"graph has {n} nodes but only {m} slots exist")
    if edge_cat.shape != (n, n):
        raise DimensionError(
            f"edge matrix shape {edge_cat.shape} does not match {n} nodes"
        )
    g = empty_graph(m, num_node_types, num_edge_types)
    g.node_cat[:n] = node_cat
    g.edge_cat[:n, :n] = edge_cat
    g.validate()
    return g


def unpad(g):
    """Drop virtual slots; returns ``(node_cat (n,), edge_cat (n, n))``.
    Real slots keep their relative order."""
    real = g.real_slots
    return g.node_cat[real].copy(), g.edge_cat[np.ix_(real, real)].copy()


def flatten(g):
    m = g.m
    out = np.empty(m * (m + 1), dtype=np.int64)
    block = out.reshape(m, m + 1)
    block[:, 0] = g.node_cat
    block[:, 1:] = g.edge_cat
    return out


def unflatten(codes, m, num_node_types, num_edge_types):
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape != (m * (m + 1),):
        raise DimensionError(
            f"expected {m * (m + 1)} codes for m={m}, got shape {codes.shape}"
        )
    block = codes.reshape(m, m + 1)
    g = GraphTensor(
        block[:, 0].copy(), block[:, 1:].copy(),
        num_node_types, num_edge_types,
    )
    g.validate()
    return g


def node_var(i, m):
    """Flat variable index of node slot ``i``."""
    return i * (m + 1)


def edge_var(i, j, m):
    """Flat variable index of edge cell ``(i, j)``."""
    return i * (m + 1) + 1 + j


# ---------------------------------------------------------------------------
# Permutations


@dataclass(frozen=True, eq=False)
class Permutation:
    """Slot relabelling: position ``i`` of the permuted object takes what
    was at position ``perm[i]``."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.perm, dtype=np.int64)
        object.__setattr__(self, "perm", p)
        if sorted(p.tolist()) != list(range(p.shape[0])):
            raise IntegrityError("not a permutation of 0..n-1")

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n, dtype=np.int64))

    @property
    def n(self):
        return self.perm.shape[0]

    def inverse(self):
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n, dtype=np.int64)
        return Permutation(inv)

    def compose(self, other):
        """Apply ``other`` first, then ``self``."""
        return Permutation(other.perm[self.perm])

    def equal(self, other):
        return np.array_equal(self.perm, other.perm)


def permute(g, p):
    """Relabel slots: output slot ``i`` holds input slot ``p[i]``."""
    if p.n != g.m:
        raise DimensionError(f"permutation over {p.n} slots, graph has {g.m}")
    idx = p.perm
    return GraphTensor(
        g.node_cat[idx].copy(),
        g.edge_cat[np.ix_(idx, idx)].copy(),
        g.num_node_types,
        g.num_edge_types,
    )


def permute_codes(codes, p, m):
    """Apply a slot permutation directly to a flattened code row;
    marginalisation markers (-1) travel with their cells."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape != (m * (m + 1),):
        raise DimensionError("codes length does not match m")
    block = codes.reshape(m, m + 1)
    idx = p.perm
    out = np.empty_like(block)
    out[:, 0] = block[idx, 0]
    out[:, 1:] = block[:, 1:][np.ix_(idx, idx)]
    return out.reshape(-1)


def real_slot_permutation(g, order):
    """Lift an ordering of the real slots to a full slot permutation that
    fixes the virtual slots."""
    real = g.real_slots
    order = np.asarray(order, dtype=np.int64)
    if order.shape != real.shape:
        raise DimensionError("order must cover exactly the real slots")
    perm = np.arange(g.m, dtype=np.int64)
    perm[real] = real[order]
    return Permutation(perm)


def enumerate_tuples(n, k):
    """All ordered k-tuples of distinct indices from range(n), in
    lexicographic order; there are n!/(n-k)! of them."""
    if k < 0 or n < 0:
        raise FeasibilityError("n and k must be nonnegative")
    if k > n:
        raise FeasibilityError(f"cannot draw {k} distinct indices from {n}")
    return itertools.permutations(range(n), k)


def tuple_count(n, k):
    return math.factorial(n) // math.factorial(n - k)


def subgraph(g, slots):
    """Induced subgraph on the given slots (in the given order), placed
    into a tensor with exactly ``len(slots)`` slots."""
    slots = np.asarray(slots, dtype=np.int64)
    if slots.size and (slots.min() < 0 or slots.max() >= g.m):
        raise DimensionError("slot index out of range")
    if len(set(slots.tolist())) != slots.size:
        raise DimensionError("slots must be distinct")
    return GraphTensor(
        g.node_cat[slots].copy(),
        g.edge_cat[np.ix_(slots, slots)].copy(),
        g.num_node_types,
        g.num_edge_types,
    )


def sample_permutations(n, count, rng=0):
    """``count`` distinct uniformly drawn permutations of range(n)
    (rejection sampling; deterministic in the seed)."""
    total = math.factorial(n)
    if count < 1:
        raise FeasibilityError("need at least one permutation")
    if count > total:
        raise FeasibilityError(
            f"asked for {count} distinct permutations of {n} elements; "
            f"only {total} exist"
        )
    gen = as_rng(rng)
    seen = set()
    out = []
    while len(out) < count:
        p = tuple(int(x) for x in gen.permutation(n))
        if p in seen:
            continue
        seen.add(p)
        out.append(Permutation(np.asarray(p, dtype=np.int64)))
    return out


# ---------------------------------------------------------------------------
# Canonical ordering


def _refine(nodes, colors, adjacency):
    """One round of colour refinement: a node's new colour is its old one
    plus the multiset of (neighbour colour, edge category) pairs."""
    sigs = {}
    for u in nodes:
        neigh = tuple(
            sorted((colors[v], cat) for v, cat in adjacency[u])
        )
        sigs[u] = (colors[u], neigh)
    ranked = {s: i for i, s in enumerate(sorted(set(sigs.values())))}
    return {u: ranked[sigs[u]] for u in nodes}


def _refine_to_fixpoint(nodes, colors, adjacency):
    while True:
        new = _refine(nodes, colors, adjacency)
        old_classes = len(set(colors.values()))
        new_classes = len(set(new.values()))
        if new_classes == old_classes and all(
            new[u] == colors[u] for u in nodes
        ):
            return new
        colors = new


def _component_order(g, nodes):
    """Canonical ordering of one connected component by iterated colour
    refinement with individualisation. Symmetric ties are broken by slot
    index, which is safe exactly when tied nodes are automorphic."""
    adjacency = {
        u: [
            (v, int(g.edge_cat[u, v]))
            for v in nodes
            if v != u and g.edge_cat[u, v] != g.no_edge_cat
        ]
        for u in nodes
    }
    colors = {u: (int(g.node_cat[u]),) for u in nodes}
    # make initial colours comparable ints
    ranked = {c: i for i, c in enumerate(sorted(set(colors.values())))}
    colors = {u: ranked[colors[u]] for u in nodes}
    colors = _refine_to_fixpoint(nodes, colors, adjacency)
    fresh = len(nodes)
    while len(set(colors.values())) < len(nodes):
        by_color = {}
        for u in nodes:
            by_color.setdefault(colors[u], []).append(u)
        tied = min(
            (c for c, us in by_color.items() if len(us) > 1),
        )
        pick = min(by_color[tied])
        colors = dict(colors)
        colors[pick] = fresh
        fresh += 1
        colors = _refine_to_fixpoint(nodes, colors, adjacency)
    return sorted(nodes, key=lambda u: colors[u])


def canonical_order(g):
    """A slot permutation mapping the graph to a canonical tensor:
    isomorphic graphs (equal up to real-slot relabelling) map to the same
    tensor. Components are ordered by their canonical byte strings,
    virtual slots go last."""
    real = g.real_slots.tolist()
    seen = set()
    components = []
    for start in real:
        if start in seen:
            continue
        comp = []
        queue = [start]
        seen.add(start)
        while queue:
            u = queue.pop()
            comp.append(u)
            for v in real:
                if v not in seen and g.edge_cat[u, v] != g.no_edge_cat:
                    seen.add(v)
                    queue.append(v)
        order = _component_order(g, comp)
        sub = subgraph(g, np.asarray(order, dtype=np.int64))
        key = (
            -len(order),
            sub.node_cat.tobytes(),
            sub.edge_cat.tobytes(),
        )
        components.append((key, order))
    components.sort(key=lambda item: item[0])
    ordered = [u for _, order in components for u in order]
    ordered.extend(i for i in range(g.m) if g.node_cat[i] == g.virtual_cat)
    return Permutation(np.asarray(ordered, dtype=np.int64))


def canonicalize(g):
    return permute(g, canonical_order(g))


# ---------------------------------------------------------------------------
# Rendering


def to_dot(g, node_names=None, edge_names=None):
    """Graphviz text for the real part of the tensor."""
    real = g.real_slots
    lines = ["graph g {"]
    for pos, i in enumerate(real):
        cat = int(g.node_cat[i])
        label = node_names[cat] if node_names else str(cat)
        lines.append(f'  n{pos} [label="{label}"];')
    for a in range(real.size):
        for b in range(a + 1, real.size):
            cat = int(g.edge_cat[real[a], real[b]])
            if cat == g.no_edge_cat:
                continue
            label = edge_names[cat] if edge_names else str(cat)
            lines.append(f'  n{a} -- n{b} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
