"""Command-line interface.

Subcommands: ``train``, ``sample``, ``evaluate``, ``condition``,
``query``. Options come from built-in defaults, overridden by an
optional key/value config file (``--config``), overridden by explicit
flags. Every command writes its artifacts plus a run-metadata file
(resolved config, seeds, versions) into ``--out-dir``.

Exit codes: 0 success, 2 configuration/usage errors, 3 data or format
errors, 4 feasibility errors (guards against infeasible work), 5
inference/training errors (impossible evidence, unsupported queries,
non-finite training loss).
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .chem import (
    EDGE_NAMES,
    correct,
    compute_metrics,
    graph_to_mol,
    mol_to_graph,
    parse_smiles,
    write_smiles,
)
from .circuit import StructureConfig
from .data import load_corpus, split
from .errors import (
    CapacityError,
    DataError,
    FeasibilityError,
    GraphSPNError,
    ImpossibleEvidenceError,
    ModelFormatError,
    ModelVersionError,
    SmilesError,
    StructureError,
    TrainingError,
    UnsupportedQueryError,
)


from .graphrep import to_dot
from .invariance import (
    Representation,
    build_model,
    sample_graphs,
    training_view,
)
from .modelfile import load_model, save_model
from .queries import conditional_generate, expectation, parse_query_file
from .train import TrainConfig, fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FEASIBILITY = 4
EXIT_INFERENCE = 5


def _smiles_or_note(g, alphabet, index):
    """Raw (uncorrected) samples can be too dense for single-digit ring
    labels; emit a comment line instead of aborting the whole run."""
    try:
        return write_smiles(graph_to_mol(g, alphabet=alphabet))
    except CapacityError as exc:
        return f"# sample {index}: {exc}"


@dataclass
class RunConfig:
    """Everything a run depends on; serialised verbatim into metadata."""

    data: str = ""
    model: str = ""
    out_dir: str = "."
    variant: str = "sort"
    m: int = 9
    alphabet: str = "C,N,O,F"
    k: int = 2
    n_perms: int = 20
    n_layers: int = 2
    n_sum: int = 40
    n_input: int = 40
    n_repetitions: int = 40
    structure_seed: int = 0
    perm_seed: int = 0
    split_seed: int = 0
    fractions: str = "0.9,0.05,0.05"
    epochs: int = 40
    batch_size: int = 256
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.82
    shuffle_seed: int = 0
    count: int = 4000
    seed: int = 0
    repeats: int = 1
    correction: bool = True
    fragment: str = ""
    slots: str = ""
    query: str = ""
    threads: int = 0

    def alphabet_tuple(self):
        parts = tuple(p for p in self.alphabet.split(",") if p)
        if not parts:
            raise DataError(f"empty alphabet {self.alphabet!r}")
        return parts

    def fractions_tuple(self):
        try:
            parts = tuple(float(p) for p in self.fractions.split(","))
        except ValueError:
            raise DataError(f"bad fractions {self.fractions!r}") from None
        return parts

    def representation(self):
        names = self.alphabet_tuple()
        return Representation(
            m=self.m,
            num_node_types=len(names),
            num_edge_types=len(EDGE_NAMES),
            node_names=names,
            edge_names=EDGE_NAMES,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    t = _FIELD_TYPES[key]
    if t is bool or t == "bool":
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"bad boolean {raw!r} for {key}")
    if t is int or t == "int":
        return int(raw)
    if t is float or t == "float":
        return float(raw)
    return str(raw)


def read_config_file(path):
    """Key/value text: one ``key value`` or ``key = value`` per line,
    ``#`` comments. Keys are RunConfig field names."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    out = {}
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = (p.strip() for p in line.split("=", 1))
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise DataError(f"config line {ln}: expected key and value")
            key, value = parts
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise DataError(f"config line {ln}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except (ValueError, DataError) as exc:
            raise DataError(f"config line {ln}: {exc}") from None
    return out


def resolve_config(args):
    cfg = RunConfig()
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(read_config_file(args.config))
    for key in _FIELD_TYPES:
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def apply_threads(cfg):
    """Cap kernel worker pools; GSPN_THREADS mirrors --threads."""
    threads = cfg.threads or int(os.environ.get("GSPN_THREADS", "0") or 0)
    if threads < 1:
        return
    os.environ.setdefault("OMP_NUM_THREADS", str(threads))
    try:
        import numba

        numba.set_num_threads(
            max(1, min(threads, numba.config.NUMBA_NUM_THREADS))
        )
    except ImportError:
        pass


def write_metadata(cfg, command, path, extra=None):
    from . import backend

    lines = [
        f"command {command}",
        f"package graphspn {__version__}",
        f"python {sys.version_info.major}.{sys.version_info.minor}."
        f"{sys.version_info.micro}",
        f"numpy {np.__version__}",
        f"backend {backend.active_name()}",
    ]
    try:
        import numba

        lines.append(f"numba {numba.__version__}")
    except ImportError:
        lines.append("numba -")
    lines.append("")
    for f in fields(RunConfig):
        lines.append(f"{f.name} {getattr(cfg, f.name)}")
    if extra:
        lines.append("")
        lines.extend(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _outpath(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


# ---------------------------------------------------------------------------
# Commands


def cmd_train(cfg):
    apply_threads(cfg)
    rep = cfg.representation()
    ds, report = load_corpus(
        cfg.data, cfg.m, alphabet=rep.node_names, perm_seed=cfg.perm_seed
    )
    train_ds, valid_ds, _ = split(
        ds, fractions=cfg.fractions_tuple(), seed=cfg.split_seed
    )
    print(
        f"corpus: {report.total_lines} lines, {report.surviving} usable, "
        f"{len(train_ds)} train / {len(valid_ds)} valid"
    )
    structure = StructureConfig(
        n_layers=cfg.n_layers, n_sum=cfg.n_sum, n_input=cfg.n_input,
        n_repetitions=cfg.n_repetitions, seed=cfg.structure_seed,
    )
    model = build_model(
        rep, cfg.variant, structure=structure, k=cfg.k, n_perms=cfg.n_perms
    )
    providers = training_view(
        model, train_ds.graphs, seed=cfg.shuffle_seed
    )
    tc = TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size,
        step_size=cfg.step_size, beta1=cfg.beta1, beta2=cfg.beta2,
        shuffle_seed=cfg.shuffle_seed,
    )
    trace = fit(
        model.circuit, providers, tc,
        callback=lambda e, nll: print(f"epoch {e + 1}/{tc.epochs} nll {nll:.6f}"),
    )
    model_path = _outpath(cfg, "model.gspn")
    save_model(model, model_path)
    trace_path = _outpath(cfg, "trace.txt")
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join("%.17g" % v for v in trace) + "\n")
    write_metadata(
        cfg, "train", _outpath(cfg, "train_meta.txt"),
        extra=["", "filter_report"] + report.render().splitlines(),
    )
    print(f"model -> {model_path}")
    print(f"trace -> {trace_path}")
    return EXIT_OK


def cmd_sample(cfg):
    apply_threads(cfg)
    model = load_model(cfg.model)
    graphs = sample_graphs(model, cfg.count, rng=cfg.seed)
    alphabet = model.rep.node_names or tuple(
        str(i) for i in range(model.rep.num_node_types)
    )
    lines = []
    for i, g in enumerate(graphs):
        if cfg.correction:
            g = correct(g, alphabet=alphabet)
            lines.append(write_smiles(graph_to_mol(g, alphabet=alphabet)))
        else:
            lines.append(_smiles_or_note(g, alphabet, i))
    out_path = _outpath(cfg, "samples.smi")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    write_metadata(cfg, "sample", _outpath(cfg, "sample_meta.txt"))
    print(f"samples -> {out_path}")
    return EXIT_OK


def _metrics_block(tag, m):
    return [
        f"[{tag}]",
        f"validity {m.validity:.2f}",
        f"validity_wo_check {m.validity_wo_check:.2f}",
        f"uniqueness {m.uniqueness:.2f}",
        f"novelty {m.novelty:.2f}",
        f"n_samples {m.n_samples}",
        f"n_valid_wo_check {m.n_valid_wo_check}",
        f"n_valid {m.n_valid}",
        f"n_unique {m.n_unique}",
        f"n_novel {m.n_novel}",
        f"rates_defined {m.rates_defined}",
    ]


def cmd_evaluate(cfg):
    apply_threads(cfg)
    model = load_model(cfg.model)
    rep = model.rep
    alphabet = rep.node_names
    if not alphabet:
        raise DataError("model carries no atom names; cannot evaluate")
    ds, _ = load_corpus(
        cfg.data, rep.m, alphabet=alphabet, perm_seed=cfg.perm_seed
    )
    train_ds, _, _ = split(
        ds, fractions=cfg.fractions_tuple(), seed=cfg.split_seed
    )
    lines = [
        f"model {cfg.model}",
        f"variant {model.variant}",
        f"count {cfg.count}",
        f"repeats {cfg.repeats}",
        f"train_size {len(train_ds)}",
        "",
    ]
    per_seed = {"on": [], "off": []}
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        graphs = sample_graphs(model, cfg.count, rng=seed)
        m_on = compute_metrics(
            graphs, train_ds.canonical, correction=True, alphabet=alphabet
        )
        m_off = compute_metrics(
            graphs, train_ds.canonical, correction=False, alphabet=alphabet
        )
        per_seed["on"].append(m_on)
        per_seed["off"].append(m_off)
        lines.append(f"seed {seed}")
        lines.extend(_metrics_block("correction on", m_on))
        lines.extend(_metrics_block("correction off", m_off))
        lines.append("")
        print(
            f"seed {seed}: V {m_on.validity:.2f}  "
            f"V-w/o-check {m_on.validity_wo_check:.2f}  "
            f"U {m_on.uniqueness:.2f}  N {m_on.novelty:.2f}"
        )
    if cfg.repeats > 1:
        for tag in ("on", "off"):
            ms = per_seed[tag]
            lines.append(f"[mean over {cfg.repeats} seeds, correction {tag}]")
            for name in ("validity", "validity_wo_check", "uniqueness",
                         "novelty"):
                mean = sum(getattr(m, name) for m in ms) / len(ms)
                lines.append(f"{name} {mean:.2f}")
            lines.append("")
    out_path = _outpath(cfg, "metrics.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    write_metadata(cfg, "evaluate", _outpath(cfg, "evaluate_meta.txt"))
    print(f"metrics -> {out_path}")
    return EXIT_OK


def cmd_condition(cfg):
    apply_threads(cfg)
    model = load_model(cfg.model)
    rep = model.rep
    alphabet = rep.node_names
    if not cfg.fragment:
        raise DataError("condition needs --fragment")
    mol = parse_smiles(cfg.fragment, alphabet=alphabet)
    frag = mol_to_graph(mol, mol.n, alphabet=alphabet)
    slots = None
    if cfg.slots:
        slots = [int(s) for s in cfg.slots.split(",")]
    graphs = conditional_generate(
        model, frag, cfg.count, rng=cfg.seed, slots=slots
    )
    lines = []
    for i, g in enumerate(graphs):
        lines.append(_smiles_or_note(g, alphabet, i))
        dot_path = _outpath(cfg, f"conditioned_{i}.dot")
        with open(dot_path, "w", encoding="utf-8") as fh:
            fh.write(to_dot(g, node_names=alphabet, edge_names=EDGE_NAMES))
    out_path = _outpath(cfg, "conditioned.smi")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    write_metadata(cfg, "condition", _outpath(cfg, "condition_meta.txt"))
    print(f"conditioned samples -> {out_path}")
    return EXIT_OK


def cmd_query(cfg):
    apply_threads(cfg)
    model = load_model(cfg.model)
    if not cfg.query:
        raise DataError("query needs --query FILE")
    try:
        with open(cfg.query, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read query {cfg.query}: {exc}") from None
    qu = parse_query_file(text, model.rep)
    value = expectation(
        model, qu, rng=cfg.seed,
        n_perms=cfg.n_perms if model.variant == "rand" else None,
    )
    print(f"log_value {value:.17g}")
    print(f"value {math.exp(value):.17g}")
    out_path = _outpath(cfg, "query_result.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(f"log_value {value:.17g}\nvalue {math.exp(value):.17g}\n")
    write_metadata(cfg, "query", _outpath(cfg, "query_meta.txt"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p):
    p.add_argument("--config", help="key/value config file")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    p.add_argument("--threads", type=int, help="cap kernel worker pools")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="graphspn",
        description="tractable generative circuits over molecular graphs",
        epilog=(
            "exit codes: 0 ok, 2 config, 3 data/format, 4 feasibility, "
            "5 inference"
        ),
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    # SUPPRESS defaults: only explicitly passed flags land in the
    # namespace, so the config file keeps authority over the rest
    kw = {"argument_default": argparse.SUPPRESS}

    p = sub.add_parser("train", help="fit a model on a SMILES corpus", **kw)
    _add_common(p)
    p.add_argument("--data", help="SMILES corpus, one molecule per line")
    p.add_argument("--variant", choices=("none", "exact", "sort", "kary", "rand"))
    p.add_argument("--m", type=int, help="node slots per graph")
    p.add_argument("--alphabet", help="comma-separated element symbols")
    p.add_argument("--k", type=int, help="sub-tensor size (kary)")
    p.add_argument("--n-perms", dest="n_perms", type=int,
                   help="sampled orderings (rand)")
    p.add_argument("--n-layers", dest="n_layers", type=int)
    p.add_argument("--n-sum", dest="n_sum", type=int)
    p.add_argument("--n-input", dest="n_input", type=int)
    p.add_argument("--n-repetitions", dest="n_repetitions", type=int)
    p.add_argument("--structure-seed", dest="structure_seed", type=int)
    p.add_argument("--perm-seed", dest="perm_seed", type=int)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--fractions", help="train,valid,test fractions")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--shuffle-seed", dest="shuffle_seed", type=int)

    p = sub.add_parser("sample", help="draw molecules from a model", **kw)
    _add_common(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--correction", dest="correction", action="store_true")
    p.add_argument("--no-correction", dest="correction",
                   action="store_false")

    p = sub.add_parser("evaluate", help="sample and score against a corpus",
                       **kw)
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--perm-seed", dest="perm_seed", type=int)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--fractions")

    p = sub.add_parser("condition", help="generate around a known fragment",
                       **kw)
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--fragment", help="fragment SMILES")
    p.add_argument("--slots", help="comma-separated evidence slots")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("query", help="evaluate a marginal query file", **kw)
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--query", help="query description file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-perms", dest="n_perms", type=int)
    return ap


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "condition": cmd_condition,
    "query": cmd_query,
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except (StructureError,) as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SmilesError, ModelFormatError, ModelVersionError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FeasibilityError, CapacityError) as exc:
        print(f"error (feasibility): {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    except (ImpossibleEvidenceError, UnsupportedQueryError,
            TrainingError) as exc:
        print(f"error (inference): {exc}", file=sys.stderr)
        return EXIT_INFERENCE
    except GraphSPNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFERENCE


if __name__ == "__main__":
    sys.exit(main())
