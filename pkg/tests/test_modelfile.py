import numpy as np
import pytest

import graphspn as G
from graphspn.circuit import InputLayer, SumLayer
from graphspn.modelfile import dumps, load_model, loads, save_model


def make_model(variant="sort", seed=3, **kw):
    rep = G.Representation(
        m=4, num_node_types=2, num_edge_types=2,
        node_names=("C", "N"), edge_names=("single", "double"),
    )
    st = G.StructureConfig(n_layers=1, n_sum=3, n_input=3,
                           n_repetitions=2, seed=seed)
    return G.build_model(rep, variant, structure=st, **kw)


def test_round_trip_preserves_everything():
    model = make_model("rand", n_perms=7)
    text = dumps(model)
    back = loads(text)
    assert back.variant == "rand"
    assert back.variant_params == {"n_perms": 7}
    assert back.rep == model.rep
    assert back.structure == model.structure
    assert back.circuit.spec == model.circuit.spec
    assert back.circuit.root == model.circuit.root
    assert len(back.circuit.layers) == len(model.circuit.layers)
    for a, b in zip(model.circuit.layers, back.circuit.layers):
        assert type(a) is type(b)
        if isinstance(a, InputLayer):
            np.testing.assert_array_equal(a.scope, b.scope)
            np.testing.assert_array_equal(a.cats, b.cats)
            np.testing.assert_array_equal(a.params, b.params)
        elif isinstance(a, SumLayer):
            assert a.children == b.children
            np.testing.assert_array_equal(a.weights, b.weights)
        else:
            assert a.children == b.children and a.kind == b.kind


def test_round_trip_is_byte_stable():
    model = make_model()
    text = dumps(model)
    assert dumps(loads(text)) == text


def test_densities_identical_after_round_trip(any_backend):
    model = make_model()
    back = loads(dumps(model))
    rng = np.random.default_rng(0)
    from conftest import random_graph

    for _ in range(5):
        g = random_graph(rng, m=4, q=2, r=2)
        assert G.logp(model, g) == G.logp(back, g)


def test_save_load_files(tmp_path):
    model = make_model("kary", k=2)
    p1 = tmp_path / "a.gspn"
    p2 = tmp_path / "b.gspn"
    save_model(model, str(p1))
    save_model(model, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    back = load_model(str(p1))
    assert back.variant == "kary" and back.variant_params == {"k": 2}
    save_model(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_load_missing_file(tmp_path):
    with pytest.raises(G.ModelFormatError):
        load_model(str(tmp_path / "absent.gspn"))


def test_bad_magic():
    with pytest.raises(G.ModelFormatError):
        loads("NOPE 1\n")
    with pytest.raises(G.ModelFormatError):
        loads("GSPN one\n")
    with pytest.raises(G.ModelFormatError):
        loads("")


def test_wrong_version_reports_found_and_expected():
    text = dumps(make_model()).replace("GSPN 1", "GSPN 99", 1)
    with pytest.raises(G.ModelVersionError) as err:
        loads(text)
    assert err.value.found == 99 and err.value.expected == 1
    assert isinstance(err.value, G.ModelFormatError)  # subclass


def test_truncation_everywhere():
    """Cutting the stream at any line boundary must raise, never return
    a partial model."""
    text = dumps(make_model())
    lines = text.splitlines()
    for cut in range(len(lines)):
        clipped = "\n".join(lines[:cut]) + "\n"
        with pytest.raises(G.ModelFormatError):
            loads(clipped)


def test_corrupted_float_rejected():
    text = dumps(make_model())
    out = []
    done = False
    for line in text.splitlines():
        if not done and line and line[0] in "-0123456789" and " " in line:
            parts = line.split()
            parts[1] = "nope"
            line = " ".join(parts)
            done = True
        out.append(line)
    assert done
    with pytest.raises(G.ModelFormatError):
        loads("\n".join(out) + "\n")


def test_nonfinite_weight_rejected_on_load():
    text = dumps(make_model())
    # damage one serialized weight value to +inf; structure validation
    # must reject the loaded circuit
    marker = None
    for line in text.splitlines():
        if line.startswith("weights "):
            marker = line
            break
    assert marker is not None
    idx = text.index(marker) + len(marker) + 1
    rest = text[idx:]
    first_line, tail = rest.split("\n", 1)
    parts = first_line.split()
    parts[0] = "inf"
    with pytest.raises(G.ModelFormatError):
        loads(text[:idx] + " ".join(parts) + "\n" + tail)


def test_variant_header_must_be_consistent():
    text = dumps(make_model("sort"))
    with pytest.raises(G.ModelFormatError):
        loads(text.replace("variant sort", "variant banana", 1))


def test_malformed_headers():
    text = dumps(make_model())
    with pytest.raises(G.ModelFormatError):
        loads(text.replace("representation m=4 q=2 r=2",
                           "representation m=4 q=2", 1))
    with pytest.raises(G.ModelFormatError):
        loads(text.replace("representation m=4 q=2 r=2",
                           "representation m=4 q=2 rrr", 1))
    with pytest.raises(G.ModelFormatError):
        loads(text.replace("root ", "root x", 1))


def test_seventeen_digit_floats_round_trip_exactly():
    model = make_model(seed=123)
    layer = model.circuit.layers[0]
    assert isinstance(layer, InputLayer)
    # perturb with awkward values that need all 17 digits
    layer.params[0, 0, 0] = -0.1234567890123456789
    layer.params[0, 0, 1] = 1e-300
    back = loads(dumps(model))
    np.testing.assert_array_equal(
        back.circuit.layers[0].params, layer.params
    )
