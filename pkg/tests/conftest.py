import numpy as np
import pytest

import graphspn as G
from graphspn import backend


def _backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


@pytest.fixture(params=_backends())
def any_backend(request):
    """Run the test once per available kernel backend."""
    previous = backend.active_name()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


@pytest.fixture
def small_spec():
    return G.VariableSpec(6, (3, 2, 4, 3, 2, 3))


@pytest.fixture
def small_circuit(small_spec):
    return G.build_circuit(
        small_spec,
        G.StructureConfig(n_layers=2, n_sum=4, n_input=5, n_repetitions=3,
                          seed=7),
    )


@pytest.fixture
def tiny_rep():
    """4 slots, 2 node types, 2 edge types: 20 variables, small enough
    for exhaustive checks."""
    return G.Representation(m=4, num_node_types=2, num_edge_types=2,
                            node_names=("C", "N"),
                            edge_names=("single", "double"))


@pytest.fixture
def qm9_rep():
    return G.Representation(m=9, num_node_types=4, num_edge_types=3,
                            node_names=G.DEFAULT_ALPHABET,
                            edge_names=G.EDGE_NAMES)


def random_codes(spec, count, rng):
    sizes = spec.sizes_array()
    return np.stack(
        [rng.integers(0, sizes[v], size=count)
         for v in range(spec.var_count)],
        axis=1,
    ).astype(np.int64)


def random_graph(rng, m=4, q=2, r=2, n=None):
    if n is None:
        n = int(rng.integers(1, m + 1))
    g = G.empty_graph(m, q, r)
    g.node_cat[:n] = rng.integers(0, q, size=n)
    raw = rng.integers(0, r + 1, size=(n, n))
    raw = np.where(np.tri(n, k=-1, dtype=bool), raw, raw.T)
    np.fill_diagonal(raw, r)
    g.edge_cat[:n, :n] = raw
    g.validate()
    return g
