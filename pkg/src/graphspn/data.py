"""Corpus ingestion: SMILES files to padded graph tensors.

Input files hold one SMILES string per line; ``#``-prefixed lines are
comments. Lines outside the supported subset are skipped and counted by
reason. Each surviving molecule gets a fresh seeded uniform atom
permutation before padding — the slot order carries no information, so
order-sensitive models must earn their likelihood on content, not on a
writer's atom ordering.
"""

from dataclasses import dataclass, field

import numpy as np

from . import chem
from .errors import DataError, SmilesError

DEFAULT_FRACTIONS = (0.9, 0.05, 0.05)

REASONS = (
    "ok", "comment", "blank",
    "not kekulized", "unsupported atom", "syntax error", "too many atoms",
)


@dataclass
class FilterReport:
    counts: dict = field(default_factory=lambda: {r: 0 for r in REASONS})
    total_lines: int = 0

    def add(self, reason):
        self.counts[reason] = self.counts.get(reason, 0) + 1
        self.total_lines += 1

    @property
    def surviving(self):
        return self.counts.get("ok", 0)

    def render(self):
        lines = [f"lines {self.total_lines}"]
        for reason in REASONS:
            lines.append(f"{reason} {self.counts.get(reason, 0)}")
        return "\n".join(lines) + "\n"


@dataclass
class Dataset:
    """Graphs plus their 1-based source line numbers; ``canonical`` is
    filled on the training split for novelty checks."""

    graphs: list
    provenance: list
    m: int
    alphabet: tuple = chem.DEFAULT_ALPHABET
    canonical: frozenset = None

    def __len__(self):
        return len(self.graphs)

    def canonical_strings(self):
        return frozenset(
            chem.write_smiles(chem.graph_to_mol(g, alphabet=self.alphabet))
            for g in self.graphs
        )


def _classify(exc):
    reason = chem.smiles_reason(exc)
    return {
        "not_kekulized": "not kekulized",
        "unsupported_atom": "unsupported atom",
    }.get(reason, "syntax error")


def load_corpus(path, m, alphabet=chem.DEFAULT_ALPHABET, perm_seed=0):
    """Read a SMILES file into a Dataset (deterministic in perm_seed).

    Returns ``(dataset, report)``; raises DataError for unreadable files
    or when nothing survives filtering.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from None
    rng = np.random.default_rng(perm_seed)
    report = FilterReport()
    graphs = []
    provenance = []
    for ln, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            report.add("blank")
            continue
        if line.startswith("#"):
            report.add("comment")
            continue
        try:
            mol = chem.parse_smiles(line, alphabet=alphabet)
        except SmilesError as exc:
            report.add(_classify(exc))
            continue
        if mol.n > m:
            report.add("too many atoms")
            continue
        mol = mol.permuted(rng.permutation(mol.n))
        graphs.append(chem.mol_to_graph(mol, m, alphabet=alphabet))
        provenance.append(ln)
        report.add("ok")
    if not graphs:
        raise DataError(f"no usable molecules in {path}")
    return Dataset(graphs, provenance, m, tuple(alphabet)), report


def split(ds, fractions=DEFAULT_FRACTIONS, seed=0):
    """Seeded shuffle, then contiguous three-way split. The returned
    training split carries its canonical-string set for novelty."""
    if len(fractions) != 3:
        raise DataError("need exactly three split fractions")
    if any(f < 0 for f in fractions):
        raise DataError("split fractions must be nonnegative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions sum to {sum(fractions)}, not 1")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    c1 = round(fractions[0] * n)
    c2 = c1 + round(fractions[1] * n)

    def take(idx):
        return Dataset(
            [ds.graphs[i] for i in idx],
            [ds.provenance[i] for i in idx],
            ds.m,
            ds.alphabet,
        )

    train = take(order[:c1])
    valid = take(order[c1:c2])
    test = take(order[c2:])
    train.canonical = train.canonical_strings()
    return train, valid, test
