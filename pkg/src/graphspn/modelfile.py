"""Model serialisation: versioned, self-describing decimal text.

Layout (UTF-8, line-oriented)::

    GSPN 1
    variant <name>
    variant_params k=2 n_perms=20      (or "-" when empty)
    representation m=9 q=4 r=3
    node_names C N O F                 (or "-")
    edge_names single double triple    (or "-")
    structure n_layers=2 n_sum=40 n_input=40 n_repetitions=40 seed=0
    var_count 90
    category_sizes 5 4 4 ...
    layers <count>
    layer input
    scope 0 3 7 ...
    cats 5 4 4 ...
    params <U> <V> <K>
    <floats ...>
    layer product kronecker
    children 0 1
    layer sum
    children 2
    weights <S> <J>
    <floats ...>
    root <index>
    end

Floats are written with 17 significant digits (``%.17g``), which
round-trips IEEE-754 doubles exactly: a loaded model evaluates
bit-identically, and saving the same model twice produces identical
bytes.
"""

import io

import numpy as np

from .circuit import (
    Circuit,
    InputLayer,
    ProductLayer,
    StructureConfig,
    SumLayer,
    VariableSpec,
    validate_structure,
)
from .errors import ModelFormatError, ModelVersionError
from .invariance import GraphSPNModel, Representation

MAGIC = "GSPN"
VERSION = 1
_FLOATS_PER_LINE = 8


def _format_floats(a):
    flat = np.asarray(a, dtype=np.float64).reshape(-1)
    lines = []
    for start in range(0, flat.size, _FLOATS_PER_LINE):
        lines.append(
            " ".join("%.17g" % x for x in flat[start:start + _FLOATS_PER_LINE])
        )
    return lines


def _kv_line(d):
    if not d:
        return "-"
    return " ".join(f"{k}={d[k]}" for k in sorted(d))


def dumps(model):
    """Serialise a model to text."""
    model.validate()
    report = validate_structure(model.circuit)
    if not report.ok:
        raise ModelFormatError(f"refusing to save an invalid circuit: {report}")
    out = io.StringIO()
    w = out.write
    rep = model.rep
    w(f"{MAGIC} {VERSION}\n")
    w(f"variant {model.variant}\n")
    w(f"variant_params {_kv_line(model.variant_params)}\n")
    w(
        f"representation m={rep.m} q={rep.num_node_types} "
        f"r={rep.num_edge_types}\n"
    )
    w("node_names " + (" ".join(rep.node_names) if rep.node_names else "-") + "\n")
    w("edge_names " + (" ".join(rep.edge_names) if rep.edge_names else "-") + "\n")
    s = model.structure
    w(
        f"structure n_layers={s.n_layers} n_sum={s.n_sum} "
        f"n_input={s.n_input} n_repetitions={s.n_repetitions} "
        f"seed={s.seed}\n"
    )
    spec = model.circuit.spec
    w(f"var_count {spec.var_count}\n")
    w("category_sizes " + " ".join(str(k) for k in spec.category_sizes) + "\n")
    w(f"layers {len(model.circuit.layers)}\n")
    for layer in model.circuit.layers:
        if isinstance(layer, InputLayer):
            w("layer input\n")
            w("scope " + " ".join(str(int(v)) for v in layer.scope) + "\n")
            w("cats " + " ".join(str(int(c)) for c in layer.cats) + "\n")
            U, V, K = layer.params.shape
            w(f"params {U} {V} {K}\n")
            for line in _format_floats(layer.params):
                w(line + "\n")
        elif isinstance(layer, ProductLayer):
            w(f"layer product {layer.kind}\n")
            w("children " + " ".join(str(c) for c in layer.children) + "\n")
        elif isinstance(layer, SumLayer):
            w("layer sum\n")
            w("children " + " ".join(str(c) for c in layer.children) + "\n")
            S, J = layer.weights.shape
            w(f"weights {S} {J}\n")
            for line in _format_floats(layer.weights):
                w(line + "\n")
        else:
            raise ModelFormatError(f"unknown layer type {type(layer)!r}")
    w(f"root {model.circuit.root}\n")
    w("end\n")
    return out.getvalue()


class _Reader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, expect=None):
        if self.pos >= len(self.lines):
            raise ModelFormatError(
                "truncated model stream"
                + (f" (expected {expect!r})" if expect else "")
            )
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def keyword(self, name):
        line = self.next(expect=name)
        if not line.startswith(name + " ") and line != name:
            raise ModelFormatError(f"expected {name!r}, found {line!r}")
        return line[len(name):].strip()

    def floats(self, count):
        vals = np.empty(count)
        got = 0
        while got < count:
            parts = self.next(expect="weight values").split()
            try:
                block = np.asarray(parts, dtype=np.float64)
            except ValueError as exc:
                raise ModelFormatError(f"bad weight value: {exc}") from None
            if got + block.size > count:
                raise ModelFormatError("too many weight values in block")
            vals[got:got + block.size] = block
            got += block.size
        return vals


def _parse_kv(text, what):
    if text == "-":
        return {}
    out = {}
    for item in text.split():
        if "=" not in item:
            raise ModelFormatError(f"malformed {what} entry {item!r}")
        k, v = item.split("=", 1)
        out[k] = int(v)
    return out


def loads(text):
    """Deserialise a model; raises ModelFormatError / ModelVersionError
    and never returns a partially built model."""
    r = _Reader(text)
    head = r.next(expect="magic").split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ModelFormatError(f"bad magic line {head!r}")
    try:
        version = int(head[1])
    except ValueError:
        raise ModelFormatError(f"bad version {head[1]!r}") from None
    if version != VERSION:
        raise ModelVersionError(version, VERSION)
    variant = r.keyword("variant")
    vparams = _parse_kv(r.keyword("variant_params"), "variant_params")
    rep_kv = _parse_kv(r.keyword("representation"), "representation")
    for key in ("m", "q", "r"):
        if key not in rep_kv:
            raise ModelFormatError(f"representation header missing {key!r}")
    node_names = r.keyword("node_names")
    edge_names = r.keyword("edge_names")
    rep = Representation(
        m=rep_kv["m"],
        num_node_types=rep_kv["q"],
        num_edge_types=rep_kv["r"],
        node_names=tuple(node_names.split()) if node_names != "-" else (),
        edge_names=tuple(edge_names.split()) if edge_names != "-" else (),
    )
    st_kv = _parse_kv(r.keyword("structure"), "structure")
    try:
        structure = StructureConfig(**st_kv)
    except TypeError as exc:
        raise ModelFormatError(f"bad structure header: {exc}") from None
    try:
        var_count = int(r.keyword("var_count"))
        sizes = tuple(int(x) for x in r.keyword("category_sizes").split())
        n_layers = int(r.keyword("layers"))
    except ValueError as exc:
        raise ModelFormatError(f"malformed header field: {exc}") from None
    spec = VariableSpec(var_count, sizes)
    layers = []
    for _ in range(n_layers):
        kind_line = r.keyword("layer").split()
        if not kind_line:
            raise ModelFormatError("empty layer line")
        if kind_line[0] == "input":
            scope = np.asarray(r.keyword("scope").split(), dtype=np.int64)
            cats = np.asarray(r.keyword("cats").split(), dtype=np.int64)
            dims = r.keyword("params").split()
            if len(dims) != 3:
                raise ModelFormatError("params needs three dimensions")
            U, V, K = (int(d) for d in dims)
            params = r.floats(U * V * K).reshape(U, V, K)
            layers.append(InputLayer(scope=scope, cats=cats, params=params))
        elif kind_line[0] == "product":
            if len(kind_line) != 2:
                raise ModelFormatError("product layer needs a kind")
            children = [int(c) for c in r.keyword("children").split()]
            layers.append(ProductLayer(children=children, kind=kind_line[1]))
        elif kind_line[0] == "sum":
            children = [int(c) for c in r.keyword("children").split()]
            dims = r.keyword("weights").split()
            if len(dims) != 2:
                raise ModelFormatError("weights needs two dimensions")
            S, J = (int(d) for d in dims)
            weights = r.floats(S * J).reshape(S, J)
            layers.append(SumLayer(children=children, weights=weights))
        else:
            raise ModelFormatError(f"unknown layer kind {kind_line[0]!r}")
    try:
        root = int(r.keyword("root"))
    except ValueError as exc:
        raise ModelFormatError(f"malformed root: {exc}") from None
    if r.keyword("end") != "":
        raise ModelFormatError("unexpected trailing content on end line")
    circuit = Circuit(spec=spec, layers=layers, root=root)
    report = validate_structure(circuit)
    if not report.ok:
        raise ModelFormatError(f"loaded circuit is invalid: {report}")
    model = GraphSPNModel(
        circuit=circuit, variant=variant, rep=rep,
        structure=structure, variant_params=vparams,
    )
    try:
        model.validate()
    except Exception as exc:
        raise ModelFormatError(f"loaded model is inconsistent: {exc}") from None
    return model


def save_model(model, path):
    text = dumps(model)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from None
