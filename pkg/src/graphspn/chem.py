"""Molecular graphs over a small organic alphabet.

Molecules are hydrogen-suppressed labelled graphs: atoms carry element
symbols, bonds carry integer orders 1..3. The text format is a strict
SMILES subset: uppercase element symbols from the alphabet, explicit
bonds ``-``, ``=``, ``#``, branches ``(...)``, ring closures ``1``-``9``
and the fragment separator ``.``. Aromatic (lowercase) input is
rejected — this toolkit only deals in explicitly kekulized structures.

Graph tensors map atoms to node categories by alphabet position (the
virtual category comes after) and bond orders 1..3 to edge categories
0..2 (no-edge comes after).
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import graphrep as G
from .errors import CapacityError, DataError, GraphSPNError, SmilesError

DEFAULT_ALPHABET = ("C", "N", "O", "F")
DEFAULT_VALENCES = {"C": 4, "N": 3, "O": 2, "F": 1}
BOND_ORDERS = (1, 2, 3)
BOND_SYMBOLS = {1: "-", 2: "=", 3: "#"}
SYMBOL_BONDS = {"-": 1, "=": 2, "#": 3}
AROMATIC_CHARS = set("bcnops")

EDGE_NAMES = ("single", "double", "triple")


@dataclass(eq=False)
class Molecule:
    """Atoms (element symbols) plus bonds ``(i, j, order)`` with
    ``i < j`` and each unordered pair appearing at most once."""

    atoms: list
    bonds: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.atoms)

    def validate(self):
        n = self.n
        seen = set()
        for i, j, order in self.bonds:
            if not (0 <= i < j < n):
                raise GraphSPNError(f"bond ({i}, {j}) out of range or unordered")
            if (i, j) in seen:
                raise GraphSPNError(f"duplicate bond ({i}, {j})")
            if order not in BOND_ORDERS:
                raise GraphSPNError(f"bond order {order} not in {BOND_ORDERS}")
            seen.add((i, j))

    def bond_matrix(self):
        """(n, n) int matrix of bond orders, 0 = no bond."""
        mat = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j, order in self.bonds:
            mat[i, j] = order
            mat[j, i] = order
        return mat

    def permuted(self, perm):
        """Relabelled copy: new atom ``i`` is old atom ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        atoms = [self.atoms[p] for p in perm]
        bonds = []
        for i, j, order in self.bonds:
            a, b = int(inv[i]), int(inv[j])
            if a > b:
                a, b = b, a
            bonds.append((a, b, order))
        return Molecule(atoms, sorted(bonds))


# ---------------------------------------------------------------------------
# SMILES subset: parsing


def parse_smiles(text, alphabet=DEFAULT_ALPHABET):
    """Parse the SMILES subset into a Molecule.

    Raises :class:`SmilesError` with a character position on any
    violation; aromatic input gets reason ``not_kekulized``, symbols
    outside the alphabet ``unsupported_atom``, everything else
    ``syntax``.
    """
    if not isinstance(text, str):
        raise SmilesError("input must be a string", 0)
    if not text:
        raise SmilesError("empty input", 0)
    atoms = []
    bonds = {}
    # parser state: the anchor atom new bonds attach to, a pending
    # explicit bond order, open branches and open ring closures
    anchor = None
    pending = None  # (order, position of the bond symbol)
    stack = []
    rings = {}  # digit -> (atom, order or None, position)

    def attach(i, j, order, pos):
        a, b = (i, j) if i < j else (j, i)
        if a == b:
            raise SmilesError("ring bond closes on the same atom", pos)
        if (a, b) in bonds:
            raise SmilesError(f"duplicate bond between atoms {a} and {b}", pos)
        bonds[(a, b)] = order

    for pos, ch in enumerate(text):
        if ch in alphabet:
            atoms.append(ch)
            new = len(atoms) - 1
            if anchor is not None:
                order = pending[0] if pending else 1
                attach(anchor, new, order, pos)
            elif pending:
                raise SmilesError("bond symbol with no preceding atom",
                                  pending[1])
            pending = None
            anchor = new
        elif ch in SYMBOL_BONDS:
            if pending:
                raise SmilesError("two bond symbols in a row", pos)
            if anchor is None:
                raise SmilesError("bond symbol with no preceding atom", pos)
            pending = (SYMBOL_BONDS[ch], pos)
        elif ch.isdigit():
            if ch == "0":
                raise SmilesError("ring label 0 is not allowed", pos)
            if anchor is None:
                raise SmilesError("ring label with no preceding atom", pos)
            order_here = pending[0] if pending else None
            pending = None
            if ch in rings:
                other, order_there, opened_at = rings.pop(ch)
                if (
                    order_here is not None
                    and order_there is not None
                    and order_here != order_there
                ):
                    raise SmilesError(
                        f"ring {ch} opened with order {order_there} but "
                        f"closed with order {order_here}", pos,
                    )
                order = order_here or order_there or 1
                attach(anchor, other, order, pos)
            else:
                rings[ch] = (anchor, order_here, pos)
        elif ch == "(":
            if anchor is None:
                raise SmilesError("branch opened before any atom", pos)
            if pending:
                raise SmilesError("bond symbol before a branch opening", pos)
            stack.append(anchor)
        elif ch == ")":
            if not stack:
                raise SmilesError("unmatched closing parenthesis", pos)
            if pending:
                raise SmilesError("dangling bond before closing parenthesis",
                                  pending[1])
            anchor = stack.pop()
        elif ch == ".":
            if stack:
                raise SmilesError("fragment separator inside a branch", pos)
            if pending:
                raise SmilesError("dangling bond before fragment separator",
                                  pending[1])
            if anchor is None:
                raise SmilesError("empty fragment", pos)
            anchor = None
        elif ch.lower() in AROMATIC_CHARS and ch.islower():
            raise SmilesError(
                f"aromatic atom {ch!r}: input is not kekulized", pos
            )
        elif ch.isalpha():
            raise SmilesError(
                f"element {ch!r} is outside the supported alphabet "
                f"{''.join(alphabet)}", pos
            )
        else:
            raise SmilesError(f"unexpected character {ch!r}", pos)
    if pending:
        raise SmilesError("dangling bond at end of input", pending[1])
    if stack:
        raise SmilesError("unclosed branch at end of input", len(text) - 1)
    if rings:
        digit, (_, _, opened_at) = next(iter(rings.items()))
        raise SmilesError(f"unclosed ring {digit}", opened_at)
    if anchor is None and not atoms:
        raise SmilesError("no atoms in input", 0)
    if text[-1] == ".":
        raise SmilesError("trailing fragment separator", len(text) - 1)
    mol = Molecule(
        atoms, sorted((i, j, o) for (i, j), o in bonds.items())
    )
    mol.validate()
    return mol


def smiles_reason(exc):
    """Coarse skip-reason for corpus filtering."""
    msg = str(exc)
    if "not kekulized" in msg:
        return "not_kekulized"
    if "outside the supported alphabet" in msg:
        return "unsupported_atom"
    return "syntax"


# ---------------------------------------------------------------------------
# SMILES subset: writing


def _writer_perm(mol):
    """Label-invariant atom order for the writer: canonicalise the graph
    with element symbols (alphabet-free — categories come from the
    sorted set of symbols present)."""
    if mol.n == 0:
        return np.empty(0, dtype=np.int64)
    symbols = sorted(set(mol.atoms))
    cat = {s: i for i, s in enumerate(symbols)}
    node_cat = np.asarray([cat[a] for a in mol.atoms], dtype=np.int64)
    orders = mol.bond_matrix()
    edge_cat = np.where(orders > 0, orders - 1, len(BOND_ORDERS))
    np.fill_diagonal(edge_cat, len(BOND_ORDERS))
    g = G.GraphTensor(node_cat, edge_cat, len(symbols), len(BOND_ORDERS))
    return G.canonical_order(g).perm


def write_smiles(mol):
    """Serialise to the SMILES subset, canonically: isomorphic molecules
    produce identical strings. ``parse_smiles(write_smiles(m))`` gives a
    graph isomorphic to ``m``."""
    mol.validate()
    if mol.n == 0:
        return ""
    canon = mol.permuted(_writer_perm(mol))
    n = canon.n
    adj = {i: [] for i in range(n)}
    for i, j, order in canon.bonds:
        adj[i].append((j, order))
        adj[j].append((i, order))
    for i in range(n):
        adj[i].sort()

    visited = [False] * n
    ring_bonds = {}  # frozenset({i, j}) -> order
    parent = [None] * n

    def discover(start):
        """Depth-first spanning tree with pop-time classification, so
        every non-tree bond joins an ancestor to a descendant; that
        keeps the number of simultaneously open ring digits minimal."""
        stack = [(None, start, None)]
        while stack:
            p, u, _order = stack.pop()
            if visited[u]:
                # second arrival over a non-tree bond
                ring_bonds.setdefault(frozenset((p, u)), _order)
                continue
            visited[u] = True
            parent[u] = p
            for v, order in reversed(adj[u]):
                if v != p:
                    stack.append((u, v, order))

    pieces = []
    for start in range(n):
        if visited[start]:
            continue
        discover(start)
        # emission: recursive over tree children, ring digits assigned
        # at the first endpoint reached
        open_digits = {}  # frozenset pair -> digit
        free_digits = list(range(1, 10))  # min-heap: reuse low digits
        ring_at = {}
        for key in ring_bonds:
            for u in key:
                ring_at.setdefault(u, []).append(key)

        def emit(u, via_order):
            parts = []
            if via_order is not None and via_order != 1:
                parts.append(BOND_SYMBOLS[via_order])
            parts.append(canon.atoms[u])
            for key in ring_at.get(u, ()):  # ring digits at this atom
                if key in open_digits:
                    digit = open_digits.pop(key)
                    heapq.heappush(free_digits, digit)
                    parts.append(str(digit))
                else:
                    if not free_digits:
                        raise CapacityError(
                            "more than nine simultaneously open rings"
                        )
                    digit = heapq.heappop(free_digits)
                    open_digits[key] = digit
                    order = ring_bonds[key]
                    if order != 1:
                        parts.append(BOND_SYMBOLS[order])
                    parts.append(str(digit))
            kids = [
                (v, order) for v, order in adj[u]
                if parent[v] == u and frozenset((u, v)) not in ring_bonds
            ]
            for idx, (v, order) in enumerate(kids):
                sub = emit(v, order)
                if idx < len(kids) - 1:
                    parts.append("(" + sub + ")")
                else:
                    parts.append(sub)
            return "".join(parts)

        pieces.append(emit(start, None))
    return ".".join(pieces)


def canonical_smiles(mol):
    """Alias for :func:`write_smiles` (the writer is canonical)."""
    return write_smiles(mol)


# ---------------------------------------------------------------------------
# Molecule <-> tensor


def mol_to_graph(mol, m, alphabet=DEFAULT_ALPHABET):
    """Pad a molecule into an m-slot tensor over the alphabet."""
    mol.validate()
    cat = {s: i for i, s in enumerate(alphabet)}
    try:
        node_cat = np.asarray([cat[a] for a in mol.atoms], dtype=np.int64)
    except KeyError as exc:
        raise GraphSPNError(
            f"element {exc.args[0]!r} is outside the alphabet "
            f"{''.join(alphabet)}"
        ) from None
    if mol.n > m:
        raise CapacityError(f"molecule has {mol.n} atoms but only {m} slots")
    orders = mol.bond_matrix()
    no_edge = len(BOND_ORDERS)
    edge_cat = np.where(orders > 0, orders - 1, no_edge)
    np.fill_diagonal(edge_cat, no_edge)
    return G.pad(node_cat, edge_cat, m, len(alphabet), no_edge)


def graph_to_mol(g, alphabet=DEFAULT_ALPHABET):
    """Extract the real part of a tensor as a Molecule (slot order kept)."""
    g.validate()
    if g.num_node_types != len(alphabet) or g.num_edge_types != len(BOND_ORDERS):
        raise GraphSPNError(
            "tensor category counts do not match the alphabet/bond orders"
        )
    node_cat, edge_cat = G.unpad(g)
    atoms = [alphabet[c] for c in node_cat]
    bonds = []
    n = len(atoms)
    for i in range(n):
        for j in range(i + 1, n):
            c = int(edge_cat[i, j])
            if c != g.no_edge_cat:
                bonds.append((i, j, c + 1))
    return Molecule(atoms, bonds)


# ---------------------------------------------------------------------------
# Valency


@dataclass(frozen=True)
class ValencyReport:
    ok: bool
    excess: dict  # atom index -> bond-order units over the cap

    def __bool__(self):
        return self.ok


def check_valency(mol, valences=None, alphabet=DEFAULT_ALPHABET):
    """Compare each atom's total bond order against its valence cap.

    Accepts a ``Molecule`` or a graph tensor (decoded via
    ``alphabet``)."""
    valences = valences or DEFAULT_VALENCES
    if isinstance(mol, G.GraphTensor):
        mol = graph_to_mol(mol, alphabet=alphabet)
    mol.validate()
    totals = mol.bond_matrix().sum(axis=1)
    excess = {}
    for i, atom in enumerate(mol.atoms):
        if atom not in valences:
            raise GraphSPNError(f"no valence entry for element {atom!r}")
        over = int(totals[i]) - valences[atom]
        if over > 0:
            excess[i] = over
    return ValencyReport(not excess, excess)


def correct(g, alphabet=DEFAULT_ALPHABET, valences=None):
    """Deterministic validity correction.

    While any atom exceeds its valence cap: take the atom with the
    largest excess (lowest slot on ties), its incident bond with the
    largest order (lowest neighbour slot on ties), and weaken that bond
    one step (3 -> 2 -> 1 -> no edge). Always terminates; the result
    passes the valence check. Idempotent on valid input.
    """
    valences = valences or DEFAULT_VALENCES
    g = g.copy()
    g.validate()
    real = g.real_slots
    if real.size == 0:
        return g
    caps = np.asarray(
        [valences[alphabet[c]] for c in g.node_cat[real]], dtype=np.int64
    )
    no_edge = g.no_edge_cat
    orders = np.where(
        g.edge_cat[np.ix_(real, real)] == no_edge,
        0,
        g.edge_cat[np.ix_(real, real)] + 1,
    )
    while True:
        totals = orders.sum(axis=1)
        excess = totals - caps
        worst = int(np.argmax(excess))
        if excess[worst] <= 0:
            break
        neighbour = int(np.argmax(orders[worst]))
        orders[worst, neighbour] -= 1
        orders[neighbour, worst] -= 1
    edge = np.where(orders > 0, orders - 1, no_edge)
    g.edge_cat[np.ix_(real, real)] = edge
    g.validate()
    return g


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class Metrics:
    """Sample-quality percentages and the counts behind them.

    ``validity`` is over corrected samples when correction is on (then
    100.0 by construction) and equals ``validity_wo_check`` otherwise.
    ``uniqueness``/``novelty`` are over the valid set; when it is empty
    they are reported as 0 with ``rates_defined=False``.
    """

    n_samples: int
    n_valid_wo_check: int
    n_valid: int
    n_unique: int
    n_novel: int
    validity: float
    validity_wo_check: float
    uniqueness: float
    novelty: float
    correction: bool
    rates_defined: bool


def compute_metrics(samples, train_canonical=frozenset(), correction=True,
                    alphabet=DEFAULT_ALPHABET, valences=None):
    """Validity / uniqueness / novelty of sampled graph tensors.

    ``validity_wo_check`` is the share of raw samples passing the
    valence check. With ``correction`` on, the correction step is
    applied first and uniqueness/novelty are computed over the corrected
    valid molecules; with it off, over the raw valid ones.
    """
    n = len(samples)
    if n == 0:
        raise DataError("no samples to score")
    n_raw_valid = 0
    final_strings = []
    for g in samples:
        raw_mol = graph_to_mol(g, alphabet=alphabet)
        raw_ok = check_valency(raw_mol, valences=valences).ok
        n_raw_valid += raw_ok
        if correction:
            fixed = correct(g, alphabet=alphabet, valences=valences)
            final_strings.append(
                write_smiles(graph_to_mol(fixed, alphabet=alphabet))
            )
        elif raw_ok:
            final_strings.append(write_smiles(raw_mol))
    n_valid = len(final_strings)
    n_unique = len(set(final_strings))
    n_novel = sum(1 for s in final_strings if s not in train_canonical)
    defined = n_valid > 0
    return Metrics(
        n_samples=n,
        n_valid_wo_check=n_raw_valid,
        n_valid=n_valid,
        n_unique=n_unique,
        n_novel=n_novel,
        validity=100.0 * n_valid / n,
        validity_wo_check=100.0 * n_raw_valid / n,
        uniqueness=100.0 * n_unique / n_valid if defined else 0.0,
        novelty=100.0 * n_novel / n_valid if defined else 0.0,
        correction=correction,
        rates_defined=defined,
    )
