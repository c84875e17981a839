"""Tensorized sum-product circuits over finite categorical variables.

A circuit is a topologically ordered list of layers (categorical input
layers, product layers, sum layers) with a single-unit root. Structural
validity means:

* smoothness — all children of a sum layer share the same scope;
* decomposability — children of a product layer have disjoint scopes;

which together make marginals and conditionals exact: marginalising a
variable replaces its leaf factor with 1 (log 0.0), and everything above
is unchanged.

Evaluation runs in log space on one of two interchangeable kernel
backends (see :mod:`graphspn.backend`). Parameters are stored
unconstrained; they pass through a log-softmax whenever a layer is
evaluated, so every sum layer mixes with positive normalised weights and
every leaf is a proper categorical distribution.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    DataError,
    DimensionError,
    ImpossibleEvidenceError,
    StructureError,
)
from .util import as_rng, choose_index, log_softmax, logsumexp

MARGINALIZED = -1

DEFAULT_CHUNK_ROWS = 4096


# ---------------------------------------------------------------------------
# Specifications


@dataclass(frozen=True)
class VariableSpec:
    """Finite categorical domain: ``var_count`` variables, variable ``i``
    taking values in ``range(category_sizes[i])``."""

    var_count: int
    category_sizes: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "category_sizes", tuple(int(k) for k in self.category_sizes)
        )

    @classmethod
    def uniform(cls, var_count, num_categories):
        return cls(var_count, (num_categories,) * var_count)

    def validate(self):
        if self.var_count < 1:
            raise StructureError("var_count must be at least 1")
        if len(self.category_sizes) != self.var_count:
            raise DimensionError(
                f"category_sizes has {len(self.category_sizes)} entries "
                f"for var_count={self.var_count}"
            )
        if any(k < 2 for k in self.category_sizes):
            raise StructureError("every variable needs at least 2 categories")

    def sizes_array(self):
        return np.asarray(self.category_sizes, dtype=np.int64)

    @property
    def max_categories(self):
        return max(self.category_sizes)


@dataclass(frozen=True)
class StructureConfig:
    """Hyperparameters of the random tensorized structure.

    ``n_layers`` is the number of product/sum levels per repetition (the
    variable set is recursively halved that many times), ``n_sum`` the
    units per sum layer, ``n_input`` the units per input layer and
    ``n_repetitions`` the number of independently drawn random balanced
    binary partitions mixed by the root.
    """

    n_layers: int = 2
    n_sum: int = 40
    n_input: int = 40
    n_repetitions: int = 40
    seed: int = 0

    def validate(self):
        if self.n_layers < 0:
            raise StructureError("n_layers must be nonnegative")
        for name in ("n_sum", "n_input", "n_repetitions"):
            if getattr(self, name) < 1:
                raise StructureError(f"{name} must be at least 1")


# ---------------------------------------------------------------------------
# Layers


@dataclass
class InputLayer:
    """``units`` parallel fully factorised categorical leaves over ``scope``.

    ``params[u, i, k]`` is the unconstrained logit of category ``k`` for
    scope position ``i`` in unit ``u``; normalisation is over
    ``k < cats[i]`` and trailing columns are padding.
    """

    scope: np.ndarray
    cats: np.ndarray
    params: np.ndarray

    @property
    def units(self):
        return self.params.shape[0]


@dataclass
class ProductLayer:
    """Outer ("kronecker") or aligned ("hadamard") products of children.

    Kronecker: unit count is the product of child unit counts, index
    varying fastest over the last child. Hadamard: all children have the
    same unit count and unit ``u`` multiplies the children's ``u``-th
    units. Both require pairwise disjoint child scopes.
    """

    children: list
    kind: str = "kronecker"


@dataclass
class SumLayer:
    """Mixtures over the concatenated units of the children.

    ``weights[s, j]`` is the unconstrained logit of child-unit ``j`` in
    mixture ``s``; rows are log-softmax normalised at evaluation time.
    """

    children: list
    weights: np.ndarray

    @property
    def units(self):
        return self.weights.shape[0]


@dataclass
class Circuit:
    spec: VariableSpec
    layers: list
    root: int
    passes: int = 0  # rows evaluated by queries (instrumentation)

    def reset_passes(self):
        self.passes = 0


# ---------------------------------------------------------------------------
# Scope / unit analysis and validation


def layer_units(circuit):
    """Unit count per layer, in index order."""
    units = []
    for idx, layer in enumerate(circuit.layers):
        if isinstance(layer, InputLayer):
            units.append(layer.params.shape[0])
        elif isinstance(layer, ProductLayer):
            child_units = [units[c] for c in layer.children]
            if layer.kind == "hadamard":
                units.append(child_units[0] if child_units else 0)
            else:
                units.append(int(np.prod(child_units)) if child_units else 0)
        elif isinstance(layer, SumLayer):
            units.append(layer.weights.shape[0])
        else:
            raise StructureError(f"layer {idx} has unknown type {type(layer)!r}")
    return units


def layer_scopes(circuit):
    """Scope (sorted variable-index array) per layer, in index order."""
    scopes = []
    for layer in circuit.layers:
        if isinstance(layer, InputLayer):
            scopes.append(np.sort(np.asarray(layer.scope, dtype=np.int64)))
        else:
            merged = np.concatenate(
                [scopes[c] for c in layer.children]
            ) if layer.children else np.empty(0, dtype=np.int64)
            scopes.append(np.unique(merged))
    return scopes


@dataclass
class ValidationReport:
    ok: bool
    violations: list

    def __str__(self):
        if self.ok:
            return "structure ok"
        return "; ".join(self.violations)


def _finite_or_neginf(a):
    return bool(np.all(np.isfinite(a) | (a == -np.inf)))


def validate_structure(circuit):
    """Check topological order, smoothness, decomposability, shapes and
    weight normalisability. Returns a report; never raises on bad
    structure."""
    v = []
    layers = circuit.layers
    if not layers:
        return ValidationReport(False, ["circuit has no layers"])
    spec = circuit.spec
    try:
        spec.validate()
    except (StructureError, DimensionError) as exc:
        return ValidationReport(False, [f"variable spec invalid: {exc}"])
    if not (0 <= circuit.root < len(layers)):
        return ValidationReport(False, [f"root index {circuit.root} out of range"])

    for idx, layer in enumerate(layers):
        if isinstance(layer, InputLayer):
            continue
        if not hasattr(layer, "children"):
            return ValidationReport(False, [f"layer {idx}: unknown layer type"])
        for c in layer.children:
            if not (0 <= c < idx):
                return ValidationReport(
                    False,
                    [f"layer {idx}: child {c} does not precede it "
                     "(layers must be topologically ordered)"],
                )

    units = layer_units(circuit)
    scopes = layer_scopes(circuit)

    for idx, layer in enumerate(layers):
        tag = f"layer {idx}"
        if isinstance(layer, InputLayer):
            scope = np.asarray(layer.scope)
            cats = np.asarray(layer.cats)
            if scope.ndim != 1 or scope.size == 0:
                v.append(f"{tag}: input scope must be a nonempty 1-d array")
                continue
            if len(np.unique(scope)) != scope.size:
                v.append(f"{tag}: input scope has repeated variables")
            if scope.min() < 0 or scope.max() >= spec.var_count:
                v.append(f"{tag}: scope variable out of range")
                continue
            expected = spec.sizes_array()[scope]
            if cats.shape != scope.shape or not np.array_equal(cats, expected):
                v.append(f"{tag}: cats disagree with the variable spec")
            p = layer.params
            if p.ndim != 3 or p.shape[1] != scope.size:
                v.append(f"{tag}: params must be (units, {scope.size}, cats)")
                continue
            if p.shape[0] < 1:
                v.append(f"{tag}: needs at least one unit")
            if p.shape[2] < int(cats.max()):
                v.append(f"{tag}: params have fewer columns than categories")
            if not _finite_or_neginf(p):
                v.append(f"{tag}: params contain NaN or +inf")
            else:
                for i in range(scope.size):
                    live = p[:, i, : int(cats[i])]
                    if np.any(np.max(live, axis=1) == -np.inf):
                        v.append(
                            f"{tag}: leaf distribution for scope position {i} "
                            "is not normalizable (all -inf)"
                        )
                        break
        elif isinstance(layer, ProductLayer):
            if layer.kind not in ("kronecker", "hadamard"):
                v.append(f"{tag}: unknown product kind {layer.kind!r}")
            if len(layer.children) < 2:
                v.append(f"{tag}: product needs at least two children")
                continue
            total = sum(scopes[c].size for c in layer.children)
            if total != scopes[idx].size:
                v.append(f"{tag}: child scopes overlap (not decomposable)")
            if layer.kind == "hadamard":
                if len({units[c] for c in layer.children}) != 1:
                    v.append(f"{tag}: hadamard children must have equal units")
        elif isinstance(layer, SumLayer):
            if not layer.children:
                v.append(f"{tag}: sum needs at least one child")
                continue
            first = scopes[layer.children[0]]
            for c in layer.children[1:]:
                if not np.array_equal(scopes[c], first):
                    v.append(f"{tag}: child scopes differ (not smooth)")
                    break
            w = layer.weights
            total_units = sum(units[c] for c in layer.children)
            if w.ndim != 2 or w.shape[1] != total_units:
                v.append(
                    f"{tag}: weights must be (units, {total_units}), "
                    f"got {w.shape}"
                )
                continue
            if w.shape[0] < 1:
                v.append(f"{tag}: needs at least one unit")
            if not _finite_or_neginf(w):
                v.append(f"{tag}: weights contain NaN or +inf")
            elif np.any(np.max(w, axis=1) == -np.inf):
                v.append(f"{tag}: a weight row is not normalizable (all -inf)")

    root_scope = scopes[circuit.root]
    if units[circuit.root] != 1:
        v.append(f"root must have exactly 1 unit, has {units[circuit.root]}")
    if root_scope.size != spec.var_count:
        v.append("root scope does not cover all variables")
    return ValidationReport(not v, v)


# ---------------------------------------------------------------------------
# Random structure builder


def _random_logits(rng, shape):
    # log of positive uniforms: softmax recovers the row-normalised values
    return np.log(rng.uniform(0.01, 1.0, size=shape))


def build_circuit(spec, config):
    """Build a random tensorized circuit: ``n_repetitions`` independently
    drawn balanced binary partitions of the variables, each stacked into
    ``n_layers`` levels of kronecker products and sums, merged by a root
    mixture. Deterministic in ``config.seed``."""
    spec.validate()
    config.validate()
    V = spec.var_count
    if 2 ** config.n_layers > V:
        raise StructureError(
            f"n_layers={config.n_layers} is too deep for {V} variables "
            f"(needs 2**n_layers <= var_count)"
        )
    rng = np.random.default_rng(config.seed)
    sizes = spec.sizes_array()
    layers = []

    def add(layer):
        layers.append(layer)
        return len(layers) - 1

    def add_input(scope):
        scope = np.sort(scope).astype(np.int64)
        cats = sizes[scope]
        params = _random_logits(
            rng, (config.n_input, scope.size, int(cats.max()))
        )
        return add(InputLayer(scope=scope, cats=cats, params=params)), config.n_input

    def build_block(scope, depth):
        if depth == config.n_layers:
            return add_input(scope)
        shuffled = rng.permutation(scope)
        half = (scope.size + 1) // 2
        left, lu = build_block(shuffled[:half], depth + 1)
        right, ru = build_block(shuffled[half:], depth + 1)
        prod = add(ProductLayer(children=[left, right], kind="kronecker"))
        weights = _random_logits(rng, (config.n_sum, lu * ru))
        return add(SumLayer(children=[prod], weights=weights)), config.n_sum

    tops = []
    top_units = 0
    for _ in range(config.n_repetitions):
        top, top_units = build_block(np.arange(V, dtype=np.int64), 0)
        tops.append(top)
    root_weights = _random_logits(rng, (1, config.n_repetitions * top_units))
    root = add(SumLayer(children=tops, weights=root_weights))
    circuit = Circuit(spec=spec, layers=layers, root=root)
    report = validate_structure(circuit)
    if not report.ok:
        raise StructureError(f"built an invalid structure: {report}")
    return circuit


# ---------------------------------------------------------------------------
# Query masks


@dataclass(frozen=True, eq=False)
class QueryMask:
    """Per-variable evidence codes; ``-1`` means marginalised."""

    codes: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "codes", np.ascontiguousarray(self.codes, dtype=np.int64)
        )

    @classmethod
    def all_marginalized(cls, var_count):
        return cls(np.full(var_count, MARGINALIZED, dtype=np.int64))

    @classmethod
    def full_evidence(cls, values):
        return cls(np.asarray(values, dtype=np.int64))

    @classmethod
    def from_states(cls, states):
        return cls(
            np.asarray(
                [MARGINALIZED if s is None else int(s) for s in states],
                dtype=np.int64,
            )
        )

    def observe(self, var, category):
        codes = self.codes.copy()
        codes[var] = category
        return QueryMask(codes)

    @property
    def observed_count(self):
        return int(np.sum(self.codes >= 0))


def _validate_codes(spec, codes, allow_marginalized, what):
    codes = np.asarray(codes)
    if not np.issubdtype(codes.dtype, np.integer):
        raise DimensionError(f"{what} must be integer codes")
    codes = codes.astype(np.int64, copy=False)
    single = codes.ndim == 1
    if single:
        codes = codes[None, :]
    if codes.ndim != 2 or codes.shape[1] != spec.var_count:
        raise DimensionError(
            f"{what} must have {spec.var_count} variables per row, "
            f"got shape {codes.shape}"
        )
    sizes = spec.sizes_array()
    low = MARGINALIZED if allow_marginalized else 0
    bad = (codes < low) | (codes >= sizes[None, :])
    if np.any(bad):
        b, v = np.argwhere(bad)[0]
        raise DimensionError(
            f"{what}: code {codes[b, v]} out of range for variable {v} "
            f"(size {sizes[v]}"
            + (", -1 allowed)" if allow_marginalized else ")")
        )
    return np.ascontiguousarray(codes), single


# ---------------------------------------------------------------------------
# Evaluation context


class EvalContext:
    """Normalised, kernel-ready view of a circuit's parameters.

    Building one costs a pass over all parameters (log-softmax plus
    layout copies); reuse it across evaluations while the parameters are
    unchanged. ``freeze`` produces one.
    """

    __slots__ = (
        "circuit", "kernels", "units", "scopes", "plans", "needed",
        "reads", "leaf", "sums",
    )

    def __init__(self, circuit, kernels, units, scopes, plans, needed,
                 reads, leaf, sums):
        self.circuit = circuit
        self.kernels = kernels
        self.units = units
        self.scopes = scopes
        self.plans = plans
        self.needed = needed
        self.reads = reads
        self.leaf = leaf
        self.sums = sums


def freeze(circuit, validate=True):
    """Normalise parameters and precompute the evaluation plan."""
    if validate:
        report = validate_structure(circuit)
        if not report.ok:
            raise StructureError(str(report))
    kernels = backend.active()
    layers = circuit.layers
    units = layer_units(circuit)
    scopes = layer_scopes(circuit)

    plans = [None] * len(layers)
    for idx, layer in enumerate(layers):
        if isinstance(layer, InputLayer):
            plans[idx] = ("leaf",)
        elif isinstance(layer, ProductLayer):
            plans[idx] = ("product", tuple(layer.children), layer.kind)
        else:
            child = layers[layer.children[0]] if len(layer.children) == 1 else None
            if (
                isinstance(child, ProductLayer)
                and child.kind == "kronecker"
                and len(child.children) == 2
            ):
                gl, gr = child.children
                plans[idx] = ("sum_fused", layer.children[0], gl, gr)
            else:
                plans[idx] = ("sum_plain", tuple(layer.children))

    needed = [False] * len(layers)
    needed[circuit.root] = True
    for idx in range(len(layers) - 1, -1, -1):
        if not needed[idx]:
            continue
        plan = plans[idx]
        if plan[0] == "product":
            deps = plan[1]
        elif plan[0] == "sum_fused":
            deps = (plan[2], plan[3])
        elif plan[0] == "sum_plain":
            deps = plan[1]
        else:
            deps = ()
        for d in deps:
            needed[d] = True
    reads = [0] * len(layers)
    for idx in range(len(layers)):
        if not needed[idx]:
            continue
        plan = plans[idx]
        deps = ()
        if plan[0] == "product":
            deps = plan[1]
        elif plan[0] == "sum_fused":
            deps = (plan[2], plan[3])
        elif plan[0] == "sum_plain":
            deps = plan[1]
        for d in deps:
            reads[d] += 1

    leaf = {}
    sums = {}
    for idx, layer in enumerate(layers):
        if not needed[idx]:
            continue
        if isinstance(layer, InputLayer):
            U, V, K = layer.params.shape
            lt = np.full((V, K, U), -np.inf)
            for i in range(V):
                ki = int(layer.cats[i])
                lt[i, :ki, :] = log_softmax(layer.params[:, i, :ki], axis=1).T
            lt = np.ascontiguousarray(lt)
            leaf[idx] = {
                "lt": lt,
                "pt": np.exp(lt),
                "scope": np.ascontiguousarray(layer.scope, dtype=np.int64),
                "cats": np.asarray(layer.cats, dtype=np.int64),
                "num_cats": K,
            }
        elif isinstance(layer, SumLayer):
            wl = np.exp(log_softmax(layer.weights, axis=1))
            entry = {"wl": np.ascontiguousarray(wl)}
            if plans[idx][0] == "sum_fused":
                S = layer.weights.shape[0]
                _, _, gl, gr = plans[idx]
                I, J = units[gl], units[gr]
                wl_ti = np.ascontiguousarray(
                    wl.reshape(S, I, J).transpose(1, 0, 2).reshape(I, S * J)
                )
                entry["wl_ti"] = wl_ti
                entry["wl_it"] = np.ascontiguousarray(wl_ti.T)
                entry["shape"] = (S, I, J)
            else:
                entry["wl_t"] = np.ascontiguousarray(wl.T)
                offsets = np.cumsum(
                    [0] + [units[c] for c in layer.children]
                )
                entry["offsets"] = offsets
            sums[idx] = entry
    return EvalContext(
        circuit, kernels, units, scopes, plans, needed, reads, leaf, sums
    )


def _upward(ctx, codes, keep, leaf_rows=None):
    """Evaluate all needed layers bottom-up. ``codes`` is (B, V) evidence
    (ignored when ``leaf_rows`` supplies precomputed leaf outputs).
    Returns the per-layer output list (entries freed unless ``keep``)."""
    K = ctx.kernels
    layers = ctx.circuit.layers
    outs = [None] * len(layers)
    remaining = list(ctx.reads)

    def consume(indices):
        for d in indices:
            remaining[d] -= 1
            if remaining[d] <= 0 and not keep and d != ctx.circuit.root:
                outs[d] = None

    for idx in range(len(layers)):
        if not ctx.needed[idx]:
            continue
        plan = ctx.plans[idx]
        if plan[0] == "leaf":
            if leaf_rows is not None:
                outs[idx] = leaf_rows[idx]
            else:
                info = ctx.leaf[idx]
                sub = np.ascontiguousarray(codes[:, info["scope"]])
                outs[idx] = K.leaf_forward(info["lt"], sub)
        elif plan[0] == "product":
            children, kind = plan[1], plan[2]
            if kind == "hadamard":
                acc = outs[children[0]].copy()
                for c in children[1:]:
                    acc = acc + outs[c]
            else:
                acc = outs[children[0]]
                for c in children[1:]:
                    acc = K.kron_forward(acc, outs[c])
                if len(children) == 1:
                    acc = acc.copy()
            outs[idx] = acc
            consume(children)
        elif plan[0] == "sum_fused":
            _, _, gl, gr = plan
            entry = ctx.sums[idx]
            S = entry["shape"][0]
            outs[idx] = K.fused_sum_forward(
                outs[gl], outs[gr], entry["wl_ti"], S
            )
            consume((gl, gr))
        else:
            children = plan[1]
            entry = ctx.sums[idx]
            if len(children) == 1:
                x = outs[children[0]]
            else:
                x = np.concatenate([outs[c] for c in children], axis=1)
            outs[idx] = K.sum_forward(x, entry["wl_t"])
            consume(children)
    return outs


def _accumulate(store, key, value):
    if key in store:
        store[key] = store[key] + value
    else:
        store[key] = value


def backward_from(ctx, codes, outs, seed):
    """Reverse pass over forward outputs kept by ``_upward(keep=True)``.

    ``seed`` is (B,) — the upstream gradient of each row's root
    log-value. Returns ``param_grads`` mapping layer index to the
    gradient with respect to that layer's *unconstrained* parameters.
    """
    K = ctx.kernels
    circuit = ctx.circuit
    seed = np.asarray(seed, dtype=np.float64)
    if seed.ndim == 1:
        seed = seed[:, None]
    if seed.ndim != 2 or seed.shape[1] != 1:
        raise DimensionError(
            f"seed must be one value per row, got shape {seed.shape}"
        )
    acts = {circuit.root: np.ascontiguousarray(seed)}
    pgrads = {}
    for idx in range(len(circuit.layers) - 1, -1, -1):
        if idx not in acts:
            continue
        g = np.ascontiguousarray(acts.pop(idx))
        plan = ctx.plans[idx]
        if plan[0] == "leaf":
            info = ctx.leaf[idx]
            sub = np.ascontiguousarray(codes[:, info["scope"]])
            dlt = K.leaf_backward(g, sub, info["num_cats"])
            dlp = dlt.transpose(2, 0, 1)  # (U, V, K)
            p = info["pt"].transpose(2, 0, 1)
            dtheta = dlp - p * dlp.sum(axis=2, keepdims=True)
            pgrads[idx] = np.ascontiguousarray(dtheta)
        elif plan[0] == "product":
            children, kind = plan[1], plan[2]
            if kind == "hadamard":
                for c in children:
                    _accumulate(acts, c, g)
            else:
                sizes = [ctx.units[c] for c in children]
                cur = g
                for pos in range(len(children) - 1, 0, -1):
                    P = int(np.prod(sizes[:pos]))
                    cur, dchild = K.kron_backward(cur, P, sizes[pos])
                    _accumulate(acts, children[pos], dchild)
                _accumulate(acts, children[0], cur)
        elif plan[0] == "sum_fused":
            _, _, gl, gr = plan
            entry = ctx.sums[idx]
            dl, dr, dlogw = K.fused_sum_backward(
                outs[gl], outs[gr], entry["wl"], entry["wl_ti"],
                entry["wl_it"], outs[idx], g,
            )
            wl = entry["wl"]
            pgrads[idx] = dlogw - wl * dlogw.sum(axis=1, keepdims=True)
            _accumulate(acts, gl, dl)
            _accumulate(acts, gr, dr)
        else:
            children = plan[1]
            entry = ctx.sums[idx]
            if len(children) == 1:
                x = outs[children[0]]
            else:
                x = np.concatenate([outs[c] for c in children], axis=1)
            dx, dlogw = K.sum_backward(
                np.ascontiguousarray(x), entry["wl"], outs[idx], g
            )
            wl = entry["wl"]
            pgrads[idx] = dlogw - wl * dlogw.sum(axis=1, keepdims=True)
            offsets = entry["offsets"]
            for pos, c in enumerate(children):
                _accumulate(acts, c, dx[:, offsets[pos]:offsets[pos + 1]])
    return pgrads


def forward_backward(ctx, codes, seed):
    """Joint forward/backward pass; returns ``(root_values, param_grads)``."""
    outs = _upward(ctx, codes, keep=True)
    pgrads = backward_from(ctx, codes, outs, seed)
    return outs[ctx.circuit.root][:, 0], pgrads


# ---------------------------------------------------------------------------
# Public queries


def _eval_rows(circuit, codes, ctx=None, chunk=DEFAULT_CHUNK_ROWS):
    if ctx is None:
        ctx = freeze(circuit)
    B = codes.shape[0]
    out = np.empty(B)
    for start in range(0, B, chunk):
        block = codes[start:start + chunk]
        outs = _upward(ctx, block, keep=False)
        out[start:start + block.shape[0]] = outs[circuit.root][:, 0]
    circuit.passes += B
    return out


def log_query_batch(circuit, codes, ctx=None, chunk=DEFAULT_CHUNK_ROWS):
    """Log-marginal of each evidence row (``-1`` entries marginalised)."""
    codes, single = _validate_codes(
        circuit.spec, codes, allow_marginalized=True, what="query codes"
    )
    vals = _eval_rows(circuit, codes, ctx=ctx, chunk=chunk)
    return vals[0] if single else vals


def log_query(circuit, mask, ctx=None):
    """Log-probability of the evidence in ``mask`` with everything else
    summed out exactly (one circuit pass)."""
    codes = mask.codes if isinstance(mask, QueryMask) else mask
    val = log_query_batch(circuit, np.asarray(codes), ctx=ctx)
    return float(val)


def log_density_batch(circuit, codes, ctx=None, chunk=DEFAULT_CHUNK_ROWS):
    """Log-density of fully observed assignment rows."""
    codes = np.asarray(codes)
    if np.any(codes < 0):
        raise DimensionError(
            "log_density requires fully observed assignments "
            "(use log_query for marginals)"
        )
    return log_query_batch(circuit, codes, ctx=ctx, chunk=chunk)


def log_density(circuit, assignment, ctx=None):
    val = log_density_batch(circuit, np.asarray(assignment), ctx=ctx)
    return float(val) if np.ndim(val) == 0 else val


def log_expectation(circuit, tables, ctx=None):
    """Log of the expectation of a factored nonnegative function.

    ``tables`` is ``(var_count, max_categories)``; the function value at
    an assignment is the product over variables of ``tables[v, code_v]``.
    With 0/1 tables this is the total mass of the coded set; with a row
    of ones a variable is effectively marginalised (matching
    ``log_query``).
    """
    if ctx is None:
        ctx = freeze(circuit)
    spec = circuit.spec
    tables = np.asarray(tables, dtype=np.float64)
    if tables.shape != (spec.var_count, spec.max_categories):
        raise DimensionError(
            f"tables must be ({spec.var_count}, {spec.max_categories}), "
            f"got {tables.shape}"
        )
    if np.any(~np.isfinite(tables)) or np.any(tables < 0):
        raise DataError("tables must be finite and nonnegative")
    with np.errstate(divide="ignore"):
        ltab = np.log(tables)
    leaf_rows = {}
    for idx, info in ctx.leaf.items():
        lt = info["lt"]  # (V, K, U)
        width = min(lt.shape[1], ltab.shape[1])
        g = lt[:, :width, :] + ltab[info["scope"], :width, None]
        leaf_rows[idx] = logsumexp(g, axis=1).sum(axis=0)[None, :]
    outs = _upward(ctx, None, keep=False, leaf_rows=leaf_rows)
    circuit.passes += 1
    return float(outs[circuit.root][0, 0])


# ---------------------------------------------------------------------------
# Sampling


def _descend(ctx, outs, evidence_codes, rng):
    layers = ctx.circuit.layers
    result = evidence_codes.copy()
    stack = [(ctx.circuit.root, 0)]
    while stack:
        idx, u = stack.pop()
        plan = ctx.plans[idx]
        if plan[0] == "leaf":
            info = ctx.leaf[idx]
            lt = info["lt"]
            for pos, var in enumerate(info["scope"]):
                if result[var] >= 0:
                    continue
                probs = np.exp(lt[pos, : int(info["cats"][pos]), u])
                result[var] = choose_index(rng, probs)
        elif plan[0] == "product":
            children, kind = plan[1], plan[2]
            if kind == "hadamard":
                for c in reversed(children):
                    stack.append((c, u))
            else:
                sizes = [ctx.units[c] for c in children]
                picks = []
                rem = u
                for size in reversed(sizes):
                    rem, local = divmod(rem, size)
                    picks.append(local)
                picks.reverse()
                for c, local in zip(reversed(children), reversed(picks)):
                    stack.append((c, local))
        elif plan[0] == "sum_fused":
            _, _, gl, gr = plan
            entry = ctx.sums[idx]
            S, I, J = entry["shape"]
            el = outs[gl][0]
            er = outs[gr][0]
            ml = np.max(el)
            mr = np.max(er)
            pl = np.exp(el - (ml if np.isfinite(ml) else 0.0))
            pr = np.exp(er - (mr if np.isfinite(mr) else 0.0))
            w = entry["wl"][u].reshape(I, J) * pl[:, None] * pr[None, :]
            try:
                flat = choose_index(rng, w.reshape(-1))
            except ValueError:
                raise ImpossibleEvidenceError(
                    "evidence has zero mass under every mixture component"
                )
            i, j = divmod(flat, J)
            stack.append((gr, j))
            stack.append((gl, i))
        else:
            children = plan[1]
            entry = ctx.sums[idx]
            if len(children) == 1:
                x = outs[children[0]][0]
            else:
                x = np.concatenate([outs[c][0] for c in children])
            m = np.max(x)
            e = np.exp(x - (m if np.isfinite(m) else 0.0))
            try:
                j = choose_index(rng, entry["wl"][u] * e)
            except ValueError:
                raise ImpossibleEvidenceError(
                    "evidence has zero mass under every mixture component"
                )
            offsets = entry["offsets"]
            pos = int(np.searchsorted(offsets, j, side="right")) - 1
            stack.append((children[pos], j - offsets[pos]))
    return result


def sample_many(circuit, count, evidence=None, rng=0, ctx=None):
    """Draw ``count`` assignments from the conditional distribution given
    the evidence (ancestral sampling: one upward pass with the evidence,
    then top-down selection). Observed entries are copied verbatim."""
    if ctx is None:
        ctx = freeze(circuit)
    if evidence is None:
        evidence = QueryMask.all_marginalized(circuit.spec.var_count)
    codes = evidence.codes if isinstance(evidence, QueryMask) else evidence
    if np.asarray(codes).ndim != 1:
        raise DimensionError("evidence must be a single code row")
    codes, _ = _validate_codes(
        circuit.spec, codes, allow_marginalized=True, what="evidence"
    )
    codes = codes[0]
    outs = _upward(ctx, codes[None, :], keep=True)
    if outs[circuit.root][0, 0] == -np.inf:
        raise ImpossibleEvidenceError("evidence has probability zero")
    gen = as_rng(rng)
    rows = np.empty((count, circuit.spec.var_count), dtype=np.int64)
    for i in range(count):
        rows[i] = _descend(ctx, outs, codes, gen)
    return rows


def sample(circuit, evidence=None, rng=0, ctx=None):
    """Draw one assignment (see ``sample_many``)."""
    return sample_many(circuit, 1, evidence=evidence, rng=rng, ctx=ctx)[0]


# ---------------------------------------------------------------------------
# Trainable parameter access


def trainable_arrays(circuit):
    """(layer index, parameter array) pairs in a fixed order; the arrays
    are the live layer parameters (mutated in place by optimisers)."""
    pairs = []
    for idx, layer in enumerate(circuit.layers):
        if isinstance(layer, InputLayer):
            pairs.append((idx, layer.params))
        elif isinstance(layer, SumLayer):
            pairs.append((idx, layer.weights))
    return pairs
