import itertools
import math

import numpy as np
import pytest

import graphspn as G
from graphspn import oracle
from graphspn.graphrep import permute_codes
from conftest import random_graph


def tiny_model(variant, m=3, q=2, r=2, seed=0, **kw):
    rep = G.Representation(m=m, num_node_types=q, num_edge_types=r,
                           node_names=("C", "N")[:q],
                           edge_names=("single", "double", "triple")[:r])
    st = G.StructureConfig(n_layers=1, n_sum=3, n_input=3,
                           n_repetitions=2, seed=seed)
    return G.build_model(rep, variant, structure=st, **kw)


def test_subgraph_query_compiles_to_flat_mask(tiny_rep):
    qu = G.SubgraphQuery(m=tiny_rep.m)
    qu.set_node(0, 1)
    qu.set_node(2, G.MARGINAL)
    qu.set_edge(0, 2, 1)
    mask = G.compile_query(qu, tiny_rep.m)
    m = tiny_rep.m
    codes = mask.codes
    assert codes[G.node_var(0, m)] == 1
    assert codes[G.node_var(2, m)] == G.MARGINALIZED
    assert codes[G.edge_var(0, 2, m)] == 1
    assert codes[G.edge_var(2, 0, m)] == 1  # both symmetric copies
    assert codes[G.node_var(1, m)] == G.MARGINALIZED


def test_subgraph_query_conflicts_rejected(tiny_rep):
    qu = G.SubgraphQuery(m=tiny_rep.m)
    qu.set_node(0, 1)
    with pytest.raises(G.DataError):
        qu.set_node(0, 0)
    qu.set_edge(1, 2, 0)
    with pytest.raises(G.DataError):
        qu.set_edge(2, 1, 1)  # same unordered pair, other direction
    with pytest.raises(G.DimensionError):
        qu.set_node(tiny_rep.m, 0)
    with pytest.raises(G.DimensionError):
        qu.set_edge(0, tiny_rep.m, 0)


def test_default_targets_cover_marginal_slots():
    qu = G.SubgraphQuery(m=3)
    qu.set_node(0, 1)
    qu.set_node(1, 0)
    qu.set_node(2, 0)
    for i in range(3):
        for j in range(i, 3):
            qu.set_edge(i, j, 0)
    assert qu.default_targets() == frozenset()
    qu2 = G.SubgraphQuery(m=3)
    qu2.set_node(0, 1)
    assert qu2.default_targets() == frozenset({0, 1, 2})


def test_expectation_none_matches_brute_marginal():
    model = tiny_model("none")
    qu = G.SubgraphQuery(m=3)
    qu.set_node(0, 0)
    qu.set_node(1, 1)
    qu.set_node(2, 0)
    qu.set_edge(0, 1, 1)
    mask = G.compile_query(qu, 3)
    want = oracle.brute_marginal(model.circuit, mask)
    got = math.exp(G.expectation(model, qu))
    assert got == pytest.approx(want, rel=1e-10)


def test_expectation_exact_averages_all_orderings():
    """Exact-variant expectations are the mean of the compiled mask's
    marginal over every rearrangement of the permutable slots."""
    model = tiny_model("exact")
    qu = G.SubgraphQuery(m=3)
    qu.set_node(0, 1)
    qu.set_node(1, 0)
    qu.set_node(2, 0)
    qu.set_edge(0, 1, 1)
    qu.set_edge(0, 2, 0)
    mask = G.compile_query(qu, 3)
    vals = []
    for order in itertools.permutations(range(3)):
        p = G.Permutation(np.asarray(order, dtype=np.int64))
        moved = permute_codes(mask.codes, p, 3)
        vals.append(oracle.brute_marginal(model.circuit, moved))
    want = float(np.mean(vals))
    got = math.exp(G.expectation(model, qu))
    assert got == pytest.approx(want, rel=1e-9)


def test_expectation_sort_single_pass():
    model = tiny_model("sort")
    qu = G.SubgraphQuery(m=3)
    qu.set_node(0, 0)
    qu.set_node(1, 0)
    qu.set_node(2, 1)
    qu.set_edge(0, 1, 0)
    v = G.expectation(model, qu)
    assert np.isfinite(v) and v <= 1e-12
    mask = G.compile_query(qu, 3)
    want = oracle.brute_marginal(model.circuit, mask)
    assert math.exp(v) == pytest.approx(want, rel=1e-10)


def test_expectation_kary_unsupported():
    model = tiny_model("kary", k=2, m=4)
    qu = G.SubgraphQuery(m=4)
    qu.set_node(0, 0)
    with pytest.raises(G.UnsupportedQueryError):
        G.expectation(model, qu)


def test_expectation_rand_seeded_and_complete():
    rand = tiny_model("rand", n_perms=3)
    qu = G.SubgraphQuery(m=3)
    qu.set_node(1, 0)
    a = G.expectation(rand, qu, rng=4)
    b = G.expectation(rand, qu, rng=4)
    assert a == b
    # with every ordering drawn, the sampled average is the exact one
    # (same structure seed, so the circuits are identical)
    full = tiny_model("rand", n_perms=6)
    exact = tiny_model("exact")
    got = G.expectation(full, qu, rng=1)
    want = G.expectation(exact, qu)
    assert got == pytest.approx(want, abs=1e-9)


def test_full_evidence_query_equals_logp():
    """A query pinning every cell reproduces the model's own density
    under each variant's averaging."""
    rng = np.random.default_rng(0)
    g = random_graph(rng, m=3, q=2, r=2, n=3)
    for variant in ("none", "exact"):
        model = tiny_model(variant)
        qu = G.SubgraphQuery(m=3)
        for i in range(3):
            qu.set_node(i, int(g.node_cat[i]))
            for j in range(i, 3):
                qu.set_edge(i, j, int(g.edge_cat[i, j]))
        got = G.expectation(model, qu)
        want = G.logp(model, g)
        assert got == pytest.approx(want, abs=1e-9)


def test_fragment_query_pins_fragment_cells():
    model = tiny_model("none", m=4)
    frag = G.empty_graph(2, 2, 2)
    frag.node_cat[:] = [1, 0]
    frag.edge_cat[0, 1] = frag.edge_cat[1, 0] = 0
    frag.validate()
    qu = G.fragment_query(model, frag)
    assert qu.node_modes[0] == 1 and qu.node_modes[1] == 0
    assert qu.edge_modes[(0, 1)] == 0
    assert qu.target_nodes == frozenset({2, 3})
    v = G.expectation(model, qu)
    assert np.isfinite(v) and v < 0


def test_fragment_query_sort_uses_canonical_coordinates():
    model = tiny_model("sort", m=4)
    frag = G.empty_graph(2, 2, 2)
    frag.node_cat[:] = [1, 0]
    frag.edge_cat[0, 1] = frag.edge_cat[1, 0] = 0
    frag.validate()
    qu = G.fragment_query(model, frag)
    canon = G.canonicalize(frag)
    assert qu.node_modes[0] == int(canon.node_cat[0])
    assert qu.node_modes[1] == int(canon.node_cat[1])
    # a relabelled copy of the fragment compiles to the same query
    other = G.permute(frag, G.Permutation((1, 0)))
    qu2 = G.fragment_query(model, other)
    assert qu2.node_modes == qu.node_modes
    assert qu2.edge_modes == qu.edge_modes


def test_fragment_query_rejects_mismatch():
    model = tiny_model("none", m=3)
    big = G.empty_graph(5, 2, 2)
    with pytest.raises(G.DimensionError):
        G.fragment_query(model, big)
    wrong_cats = G.empty_graph(2, 3, 2)
    with pytest.raises(G.DimensionError):
        G.fragment_query(model, wrong_cats)
    frag = G.empty_graph(2, 2, 2)
    frag.node_cat[:] = [0, 0]
    with pytest.raises(G.DimensionError):
        G.fragment_query(model, frag, slots=[0])  # wrong slot count
    with pytest.raises(G.DimensionError):
        G.fragment_query(model, frag, slots=[1, 1])  # duplicate slot


def test_conditional_generate_embeds_fragment():
    model = tiny_model("none", m=4)
    frag = G.empty_graph(2, 2, 2)
    frag.node_cat[:] = [1, 0]
    frag.edge_cat[0, 1] = frag.edge_cat[1, 0] = 1
    frag.validate()
    out = G.conditional_generate(model, frag, 20, rng=5)
    assert len(out) == 20
    for g in out:
        g.validate()
        np.testing.assert_array_equal(g.node_cat[:2], [1, 0])
        assert g.edge_cat[0, 1] == 1


def test_conditional_generate_at_chosen_slots():
    model = tiny_model("none", m=4)
    frag = G.empty_graph(1, 2, 2)
    frag.node_cat[0] = 1
    frag.validate()
    out = G.conditional_generate(model, frag, 10, rng=6, slots=[2])
    for g in out:
        assert g.node_cat[2] == 1


def test_conditional_generate_matches_conditional_distribution():
    """Conditional draws, after the sampler's tensor repairs (mirror
    from the lower triangle, isolate virtual slots), agree with the
    brute conditional pushed through the same repairs to within TV
    0.05."""
    model = tiny_model("none", m=2, q=2, r=2)
    frag = G.empty_graph(1, 2, 2)
    frag.node_cat[0] = 1
    frag.validate()
    qu = G.fragment_query(model, frag)
    mask = G.compile_query(qu, 2)
    base = oracle.brute_marginal(model.circuit, mask)
    virtual_node, no_edge = 2, 2
    want = {}
    for nc in range(3):
        for ec in range(3):
            row = mask.codes.copy()
            row[G.node_var(1, 2)] = nc
            row[G.edge_var(1, 0, 2)] = ec  # lower-triangle cell wins
            p = oracle.brute_marginal(model.circuit, row) / base
            key = (nc, no_edge if nc == virtual_node else ec)
            want[key] = want.get(key, 0.0) + p
    draws = G.conditional_generate(model, frag, 10_000, rng=7)
    counts = {}
    for g in draws:
        key = (int(g.node_cat[1]), int(g.edge_cat[0, 1]))
        counts[key] = counts.get(key, 0) + 1
    keys = set(want) | set(counts)
    tv = 0.5 * sum(
        abs(counts.get(k, 0) / 10_000 - want.get(k, 0.0)) for k in keys
    )
    assert tv <= 0.05


def test_conditional_generate_kary_unsupported():
    model = tiny_model("kary", k=2, m=4)
    frag = G.empty_graph(1, 2, 2)
    frag.node_cat[0] = 1
    with pytest.raises(G.UnsupportedQueryError):
        G.conditional_generate(model, frag, 2)


def test_parse_query_file_happy_path(tiny_rep):
    text = """
    # a comment
    node 0 = C
    node 1 = ?
    node 3 = virtual
    edge 0 1 = double
    edge 0 2 = none
    target 1 2
    """
    qu = G.parse_query_file(text, tiny_rep)
    assert qu.node_modes[0] == 0
    assert qu.node_modes[1] is G.MARGINAL
    assert qu.node_modes[3] == tiny_rep.num_node_types
    assert qu.edge_modes[(0, 1)] == 1
    assert qu.edge_modes[(0, 2)] == tiny_rep.num_edge_types
    assert qu.target_nodes == frozenset({1, 2})


def test_parse_query_file_numeric_categories(tiny_rep):
    qu = G.parse_query_file("node 0 = 1\nedge 0 1 = 0\n", tiny_rep)
    assert qu.node_modes[0] == 1
    assert qu.edge_modes[(0, 1)] == 0


def test_parse_query_file_reports_line_numbers(tiny_rep):
    with pytest.raises(G.DataError) as err:
        G.parse_query_file("node 0 = C\nnode 99 = C\n", tiny_rep)
    assert "line 2" in str(err.value)
    with pytest.raises(G.DataError) as err:
        G.parse_query_file("bogus directive\n", tiny_rep)
    assert "line 1" in str(err.value)
    with pytest.raises(G.DataError) as err:
        G.parse_query_file("edge 0 1 = Q\n", tiny_rep)
    assert "line 1" in str(err.value)
    with pytest.raises(G.DataError) as err:
        G.parse_query_file("node 0 C\n", tiny_rep)  # missing '='
    assert "line 1" in str(err.value)
    with pytest.raises(G.DataError):
        G.parse_query_file("target 0 99\n", tiny_rep)


def test_query_expectation_from_parsed_file():
    model = tiny_model("none", m=3)
    qu = G.parse_query_file(
        "node 0 = C\nnode 1 = N\nnode 2 = C\nedge 0 1 = single\n",
        model.rep,
    )
    v = G.expectation(model, qu)
    mask = G.compile_query(qu, 3)
    want = oracle.brute_marginal(model.circuit, mask)
    assert math.exp(v) == pytest.approx(want, rel=1e-10)
