import math

import numpy as np
import pytest

import graphspn as G
from graphspn import oracle
from graphspn.invariance import _FreshPermutationRow
from conftest import random_graph


def tiny_model(variant, m=3, q=2, r=2, seed=0, **kw):
    rep = G.Representation(m=m, num_node_types=q, num_edge_types=r)
    st = G.StructureConfig(n_layers=1, n_sum=3, n_input=3,
                           n_repetitions=2, seed=seed)
    return G.build_model(rep, variant, structure=st, **kw)


def test_variable_spec_for_interleaves_nodes_and_edges(tiny_rep):
    spec = G.variable_spec_for(tiny_rep)
    m, q, r = tiny_rep.m, tiny_rep.num_node_types, tiny_rep.num_edge_types
    assert spec.var_count == m * (m + 1)
    for i in range(m):
        assert spec.category_sizes[G.node_var(i, m)] == q + 1
        for j in range(m):
            assert spec.category_sizes[G.edge_var(i, j, m)] == r + 1


def test_build_model_rejects_unknown_variant(tiny_rep):
    with pytest.raises(G.StructureError):
        G.build_model(tiny_rep, "sorted",
                      structure=G.StructureConfig(n_layers=1))


def test_logp_none_equals_circuit_density():
    model = tiny_model("none")
    rng = np.random.default_rng(0)
    g = random_graph(rng, m=3, q=2, r=2)
    a = G.logp_none(model, g)
    b = G.log_density(model.circuit, G.flatten(g))
    assert a == b


def test_logp_exact_equals_brute_janossy():
    model = tiny_model("exact")
    rng = np.random.default_rng(1)
    for _ in range(8):
        g = random_graph(rng, m=3, q=2, r=2)
        fast = G.logp_exact(model, g)
        brute = oracle.brute_janossy(model.circuit, g)
        assert math.exp(fast) == pytest.approx(brute, rel=1e-12)


def test_logp_exact_invariant_under_relabeling():
    model = tiny_model("exact")
    rng = np.random.default_rng(2)
    g = random_graph(rng, m=3, q=2, r=2, n=3)
    base = G.logp_exact(model, g)
    for perm in G.enumerate_tuples(3, 3):
        moved = G.permute(g, G.Permutation(perm))
        assert G.logp_exact(model, moved) == pytest.approx(base, abs=1e-9)


def test_logp_exact_guards_large_graphs(qm9_rep):
    model = G.build_model(
        qm9_rep, "exact",
        structure=G.StructureConfig(n_layers=1, n_sum=2, n_input=2,
                                    n_repetitions=1))
    g = G.empty_graph(9, 4, 3)
    g.node_cat[:] = 0
    g.validate()
    with pytest.raises(G.FeasibilityError):
        G.logp_exact(model, g)


def test_logp_sort_invariant_and_single_pass():
    model = tiny_model("sort", m=4)
    rng = np.random.default_rng(3)
    g = random_graph(rng, m=4, q=2, r=2, n=4)
    model.circuit.reset_passes()
    base = G.logp_sort(model, g)
    assert model.circuit.passes == 1
    for perm in list(G.enumerate_tuples(4, 4))[:10]:
        moved = G.permute(g, G.Permutation(perm))
        assert G.logp_sort(model, moved) == base


def test_logp_kary_equals_brute():
    model = tiny_model("kary", k=2, m=4)
    rng = np.random.default_rng(4)
    for _ in range(6):
        g = random_graph(rng, m=4, q=2, r=2, n=3)
        fast = G.logp_kary(model, g)
        brute = oracle.brute_kary(model.circuit, g, 2)
        assert math.exp(fast) == pytest.approx(brute, rel=1e-12)


def test_logp_kary_invariant_under_relabeling():
    model = tiny_model("kary", k=2, m=4)
    rng = np.random.default_rng(5)
    g = random_graph(rng, m=4, q=2, r=2, n=3)
    base = G.logp_kary(model, g)
    for _ in range(6):
        perm = G.Permutation(tuple(rng.permutation(4)))
        moved = G.permute(g, perm)
        assert G.logp_kary(model, moved) == pytest.approx(base, abs=1e-9)


def test_logp_kary_needs_k_nodes():
    model = tiny_model("kary", k=3)
    g = G.empty_graph(3, 2, 2)
    g.node_cat[0] = 0
    g.validate()
    with pytest.raises(G.FeasibilityError):
        G.logp_kary(model, g)


def test_logp_rand_with_all_perms_equals_exact():
    model_r = tiny_model("rand", n_perms=6)
    model_e = tiny_model("exact")
    rng = np.random.default_rng(6)
    g = random_graph(rng, m=3, q=2, r=2, n=3)
    # n = 3 -> 6 = n! distinct orderings: the sampled average must hit
    # every ordering exactly once
    a = G.logp_rand(model_r, g, rng=0, n_perms=6)
    b = G.logp_exact(model_e, g)
    assert a == pytest.approx(b, abs=1e-9)


def test_logp_rand_deterministic_in_seed():
    model = tiny_model("rand", n_perms=2, m=4)
    rng = np.random.default_rng(7)
    g = random_graph(rng, m=4, q=2, r=2, n=4)
    a = G.logp_rand(model, g, rng=5)
    b = G.logp_rand(model, g, rng=5)
    c = G.logp_rand(model, g, rng=6)
    assert a == b
    assert a != c  # different orderings give a different average


def test_logp_dispatches_by_variant():
    rng = np.random.default_rng(8)
    g = random_graph(rng, m=3, q=2, r=2)
    for variant, kw in (("none", {}), ("exact", {}), ("sort", {}),
                        ("kary", {"k": 2}), ("rand", {"n_perms": 3})):
        model = tiny_model(variant, **kw)
        v = G.logp(model, g, rng=0)
        assert np.isfinite(v)


def test_pass_counts_per_variant():
    """The number of circuit evaluations per query is the advertised
    one: n! (exact), 1 (sort/none), n!/(n-k)! (kary), N (rand)."""
    rng = np.random.default_rng(9)
    g = random_graph(rng, m=4, q=2, r=2, n=3)

    model = tiny_model("exact", m=4)
    model.circuit.reset_passes()
    G.logp_exact(model, g)
    assert model.circuit.passes == math.factorial(3)

    model = tiny_model("none", m=4)
    model.circuit.reset_passes()
    G.logp_none(model, g)
    assert model.circuit.passes == 1

    model = tiny_model("sort", m=4)
    model.circuit.reset_passes()
    G.logp_sort(model, g)
    assert model.circuit.passes == 1

    model = tiny_model("kary", k=2, m=4)
    model.circuit.reset_passes()
    G.logp_kary(model, g)
    assert model.circuit.passes == math.factorial(3) // math.factorial(1)

    model = tiny_model("rand", n_perms=4, m=4)
    model.circuit.reset_passes()
    G.logp_rand(model, g, rng=0)
    assert model.circuit.passes == 4


def test_fresh_permutation_rows_change_per_epoch():
    rng = np.random.default_rng(10)
    g = random_graph(rng, m=4, q=2, r=2, n=4)
    row = _FreshPermutationRow(g, base_seed=3, index=0)
    a, _ = row.rows(epoch=0)
    b, _ = row.rows(epoch=1)
    a2, _ = row.rows(epoch=0)
    np.testing.assert_array_equal(a, a2)
    assert not np.array_equal(a, b)


def test_training_view_exact_uses_all_orderings():
    model = tiny_model("exact")
    rng = np.random.default_rng(11)
    g = random_graph(rng, m=3, q=2, r=2, n=3)
    providers = G.training_view(model, [g], seed=0)
    assert len(providers) == 1
    rows, logw = providers[0].rows(epoch=0)
    assert rows.shape[0] == 6
    np.testing.assert_allclose(logw, -math.log(6))
    # all 6 orderings present and distinct
    assert len({r.tobytes() for r in np.asarray(rows)}) == 6


def test_training_view_exact_guard():
    model = G.build_model(
        G.Representation(m=9, num_node_types=4, num_edge_types=3),
        "exact",
        structure=G.StructureConfig(n_layers=1, n_sum=2, n_input=2,
                                    n_repetitions=1))
    g = G.empty_graph(9, 4, 3)
    g.node_cat[:] = 0
    g.validate()
    with pytest.raises(G.FeasibilityError):
        G.training_view(model, [g], seed=0)


def test_sampling_respects_tensor_contract():
    for variant, kw in (("none", {}), ("sort", {}), ("exact", {}),
                        ("rand", {"n_perms": 3}), ("kary", {"k": 2})):
        model = tiny_model(variant, m=4, **kw)
        graphs = G.sample_graphs(model, 5, rng=2)
        assert len(graphs) == 5
        for g in graphs:
            g.validate()
            assert g.m == 4


def test_sampling_deterministic_in_seed():
    model = tiny_model("sort", m=4)
    a = G.sample_graphs(model, 6, rng=3)
    b = G.sample_graphs(model, 6, rng=3)
    assert all(x.equal(y) for x, y in zip(a, b))


def test_kary_sampling_rejects_evidence():
    model = tiny_model("kary", k=2, m=4)
    frag = G.empty_graph(2, 2, 2)
    frag.node_cat[:] = 0
    frag.validate()
    with pytest.raises(G.UnsupportedQueryError):
        G.conditional_generate(model, frag, 2, rng=0)


def test_model_validate_catches_spec_mismatch(tiny_rep):
    model = G.build_model(
        tiny_rep, "sort",
        structure=G.StructureConfig(n_layers=1, n_sum=2, n_input=2,
                                    n_repetitions=1))
    other = G.Representation(m=5, num_node_types=2, num_edge_types=2)
    rng = np.random.default_rng(12)
    g = random_graph(rng, m=5, q=2, r=2)
    with pytest.raises(G.DimensionError):
        G.logp(model, g, rng=0)
    model.rep = other
    with pytest.raises((G.StructureError, G.DimensionError)):
        model.validate()
