import os

import numpy as np
import pytest

import graphspn as G
from graphspn.backend import set_backend
from graphspn.cli import (
    RunConfig,
    main,
    read_config_file,
    resolve_config,
)
from graphspn.datagen import generate_corpus


@pytest.fixture(autouse=True)
def numpy_backend():
    set_backend("numpy")
    yield
    set_backend("numpy")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "corpus.smi"
    p.write_text(
        "\n".join(generate_corpus(40, seed=2, min_atoms=3)) + "\n",
        encoding="utf-8",
    )
    return str(p)


TINY = [
    "--n-layers", "1", "--n-sum", "4", "--n-input", "4",
    "--n-repetitions", "3", "--epochs", "2", "--batch-size", "16",
]


def train_into(out_dir, corpus, *extra):
    rc = main(["train", "--data", corpus, "--out-dir", out_dir,
               *TINY, *extra])
    assert rc == 0
    return os.path.join(out_dir, "model.gspn")


# ---------------------------------------------------------------------------
# config plumbing


def test_read_config_file_formats(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(
        "# comment\n"
        "epochs 3\n"
        "step-size = 0.125\n"
        "correction off\n"
        "variant kary   # trailing comment\n"
        "\n",
        encoding="utf-8",
    )
    cfg = read_config_file(str(p))
    assert cfg == {
        "epochs": 3, "step_size": 0.125,
        "correction": False, "variant": "kary",
    }


@pytest.mark.parametrize("line, message", [
    ("bogus 3", "unknown key"),
    ("epochs", "expected key and value"),
    ("epochs x", "invalid literal"),
    ("correction maybe", "bad boolean"),
])
def test_read_config_file_errors(tmp_path, line, message):
    p = tmp_path / "run.cfg"
    p.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(G.DataError) as err:
        read_config_file(str(p))
    assert "line 1" in str(err.value)
    assert message in str(err.value)


def test_flags_override_config_file(tmp_path, corpus):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("epochs 1\nn_sum 4\nn_input 4\nn_layers 1\n"
                       "n_repetitions 3\nbatch_size 16\n", encoding="utf-8")
    out = str(tmp_path / "run")
    rc = main(["train", "--data", corpus, "--config", str(cfgfile),
               "--out-dir", out, "--epochs", "2"])
    assert rc == 0
    trace = open(os.path.join(out, "trace.txt")).read().split()
    assert len(trace) == 2  # flag won over the config file's epochs 1
    meta = open(os.path.join(out, "train_meta.txt")).read()
    assert "n_sum 4" in meta  # config file won over the default


def test_resolve_config_defaults():
    class Args:
        config = None

    cfg = resolve_config(Args())
    assert cfg.variant == "sort" and cfg.m == 9
    assert cfg.epochs == 40 and cfg.correction is True
    assert cfg.representation().num_node_types == 4


def test_runconfig_helpers():
    cfg = RunConfig(alphabet="C,N", fractions="0.5,0.25,0.25")
    assert cfg.alphabet_tuple() == ("C", "N")
    assert cfg.fractions_tuple() == (0.5, 0.25, 0.25)
    with pytest.raises(G.DataError):
        RunConfig(alphabet=",").alphabet_tuple()
    with pytest.raises(G.DataError):
        RunConfig(fractions="a,b,c").fractions_tuple()


# ---------------------------------------------------------------------------
# commands, happy paths


def test_train_writes_artifacts(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    assert os.path.exists(model_path)
    trace_lines = open(os.path.join(out, "trace.txt")).read().splitlines()
    assert len(trace_lines) == 2
    assert all(float(x) > 0 for x in trace_lines)
    meta = open(os.path.join(out, "train_meta.txt")).read()
    assert "command train" in meta
    assert "backend numpy" in meta
    assert "variant sort" in meta
    assert "filter_report" in meta and "lines 40" in meta
    model = G.load_model(model_path)
    assert model.variant == "sort" and model.structure.n_sum == 4


def test_train_determinism_byte_identical(tmp_path, corpus):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    train_into(out1, corpus)
    train_into(out2, corpus)
    read = lambda d, n: open(os.path.join(d, n), "rb").read()
    assert read(out1, "model.gspn") == read(out2, "model.gspn")
    assert read(out1, "trace.txt") == read(out2, "trace.txt")


def test_sample_corrected_all_parse(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    rc = main(["sample", "--model", model_path, "--count", "25",
               "--seed", "3", "--out-dir", out])
    assert rc == 0
    lines = open(os.path.join(out, "samples.smi")).read().splitlines()
    assert len(lines) == 25
    for s in lines:
        mol = G.parse_smiles(s)
        assert G.check_valency(mol).ok  # correction is on by default
    # identical invocation reproduces the file byte for byte
    out2 = str(tmp_path / "again")
    rc = main(["sample", "--model", model_path, "--count", "25",
               "--seed", "3", "--out-dir", out2])
    assert rc == 0
    assert (open(os.path.join(out, "samples.smi"), "rb").read()
            == open(os.path.join(out2, "samples.smi"), "rb").read())


def test_sample_uncorrected(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    rc = main(["sample", "--model", model_path, "--count", "30",
               "--seed", "1", "--no-correction", "--out-dir", out])
    assert rc == 0
    lines = open(os.path.join(out, "samples.smi")).read().splitlines()
    assert len(lines) == 30
    meta = open(os.path.join(out, "sample_meta.txt")).read()
    assert "correction False" in meta
    for s in lines:
        if not s.startswith("#"):
            G.parse_smiles(s)  # raw samples still serialise or comment


def test_evaluate_blocks_and_means(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    rc = main(["evaluate", "--model", model_path, "--data", corpus,
               "--count", "20", "--repeats", "2", "--seed", "5",
               "--out-dir", out])
    assert rc == 0
    text = open(os.path.join(out, "metrics.txt")).read()
    assert "seed 5" in text and "seed 6" in text
    assert "[correction on]" in text and "[correction off]" in text
    assert "[mean over 2 seeds, correction on]" in text
    assert "validity 100.00" in text  # correction-on validity
    assert os.path.exists(os.path.join(out, "evaluate_meta.txt"))


def test_condition_writes_smiles_and_dot(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    rc = main(["condition", "--model", model_path, "--fragment", "CC",
               "--count", "4", "--seed", "2", "--out-dir", out])
    assert rc == 0
    lines = open(os.path.join(out, "conditioned.smi")).read().splitlines()
    assert len(lines) == 4
    for s in lines:
        if not s.startswith("#"):
            assert G.parse_smiles(s).atoms.count("C") >= 2
    dot = open(os.path.join(out, "conditioned_0.dot")).read()
    assert "graph" in dot and "C" in dot


def test_query_prints_and_writes(tmp_path, corpus, capsys):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    qf = tmp_path / "q.txt"
    qf.write_text("node 0 = C\nedge 0 1 = single\n", encoding="utf-8")
    rc = main(["query", "--model", model_path, "--query", str(qf),
               "--out-dir", out])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "log_value " in printed and "value " in printed
    stored = open(os.path.join(out, "query_result.txt")).read()
    log_line = next(
        l for l in printed.splitlines() if l.startswith("log_value")
    )
    assert log_line in stored
    v = float(stored.splitlines()[0].split()[1])
    assert v < 0 and np.isfinite(v)


# ---------------------------------------------------------------------------
# exit codes


def test_exit_data_errors(tmp_path, corpus):
    assert main(["train", "--data", str(tmp_path / "none.smi")]) == 3
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus)
    assert main(["condition", "--model", model_path,
                 "--fragment", "c1ccccc1", "--out-dir", out]) == 3
    assert main(["condition", "--model", model_path,
                 "--out-dir", out]) == 3  # missing --fragment
    assert main(["query", "--model", model_path, "--out-dir", out]) == 3
    broken = tmp_path / "broken.gspn"
    broken.write_text(
        open(model_path).read()[:200], encoding="utf-8"
    )
    assert main(["sample", "--model", str(broken), "--out-dir", out]) == 3
    versioned = tmp_path / "versioned.gspn"
    versioned.write_text(
        open(model_path).read().replace("GSPN 1", "GSPN 9", 1),
        encoding="utf-8",
    )
    assert main(["sample", "--model", str(versioned), "--out-dir", out]) == 3


def test_exit_feasibility_error(tmp_path):
    nine = tmp_path / "nine.smi"
    nine.write_text(
        "\n".join(generate_corpus(12, seed=1, min_atoms=9)) + "\n",
        encoding="utf-8",
    )
    rc = main(["train", "--data", str(nine), "--variant", "exact",
               "--out-dir", str(tmp_path / "out"), *TINY])
    assert rc == 4


def test_exit_config_error(tmp_path, corpus):
    rc = main(["train", "--data", corpus, "--n-sum", "0",
               "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    with pytest.raises(SystemExit) as err:
        main(["train", "--not-a-flag"])
    assert err.value.code == 2
    with pytest.raises(SystemExit):
        main([])  # a subcommand is required


def test_exit_inference_error(tmp_path, corpus):
    out = str(tmp_path / "run")
    model_path = train_into(out, corpus, "--variant", "kary", "--k", "2")
    qf = tmp_path / "q.txt"
    qf.write_text("node 0 = C\n", encoding="utf-8")
    rc = main(["query", "--model", model_path, "--query", str(qf),
               "--out-dir", out])
    assert rc == 5
