import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcgp.cli import main
from gcgp.config import (KNOWN_KEYS, build_run_config, dump_config, parse_config_text,
                         run_config_from_dict)
from gcgp.errors import ValidationError
from gcgp.io import load_condensed, save_dataset

from conftest import two_cliques


@pytest.fixture
def dataset(tmp_path):
    g = two_cliques(size=6, seed=0)
    g = type(g)(g.features, g.adjacency, g.labels, [0, 1, 6, 7], [2, 8], [3, 4, 5, 9, 10, 11], 2, name="toy")
    return save_dataset(g, tmp_path / "toy")


def run(*argv):
    return main([str(a) for a in argv])


def test_condense_writes_artifacts_with_effective_config(dataset, tmp_path):
    out = tmp_path / "run"
    code = run("condense", "--dataset", dataset, "--per-class", 1, "--beta", 0.5, "--k", 2,
               "--no-learn-structure", "--epochs", 30, "--seed", 3, "--out", out)
    assert code == 0
    for name in ("condensed.json", "metrics.json", "report.json"):
        doc = json.loads((out / name).read_text())
        assert doc["config"]["seed"] == 3 and doc["config"]["epochs"] == 30
        assert set(doc["config"]) == set(KNOWN_KEYS)
    metrics = json.loads((out / "metrics.json").read_text())
    assert 0 <= metrics["accuracy_mean"] <= 1
    cg, cfg = load_condensed(out / "condensed.json")
    assert cg.m == 2 and cfg["beta"] == 0.5


def test_zero_epochs_dumps_initialization(dataset, tmp_path):
    assert run("condense", "--dataset", dataset, "--per-class", 1, "--epochs", 0, "--out", tmp_path / "e0") == 0
    cg, _ = load_condensed(tmp_path / "e0" / "condensed.json")
    src = json.loads((tmp_path / "e0" / "condensed.json").read_text())["provenance"]["source_nodes"]
    assert len(src) == 2 and cg.Xs.shape == (2, 2)


def test_learned_structure_artifact(dataset, tmp_path):
    assert run("condense", "--dataset", dataset, "--per-class", 2, "--epochs", 10, "--learn-structure",
               "--fixed-noise", "--out", tmp_path / "s") == 0
    doc = json.loads((tmp_path / "s" / "condensed.json").read_text())
    assert "alpha" in doc and np.array(doc["alpha"]).shape == (4, 4)
    A = np.array(doc["A_s_binary"])
    assert (A == A.T).all()


def test_missing_dataset_is_exit_2(tmp_path, capsys):
    assert run("condense", "--dataset", tmp_path / "nope", "--out", tmp_path / "x") == 2
    assert "not found" in capsys.readouterr().err
    assert run("condense", "--out", tmp_path / "x") == 2


def test_bad_flags_and_values_are_exit_2(dataset, tmp_path):
    assert run("condense", "--bogus") == 2
    assert run("frobnicate") == 2
    assert run("condense", "--dataset", dataset, "--epochs", -3) == 2
    assert run("condense", "--dataset", dataset, "--k", 99) == 2


def test_non_finite_features_are_rejected_on_load(tmp_path):
    g = two_cliques(size=6, seed=0)
    save_dataset(g, tmp_path / "nan")
    X = np.loadtxt(tmp_path / "nan" / "features.csv", delimiter=",")
    X[0, 0] = np.nan
    np.savetxt(tmp_path / "nan" / "features.csv", X, delimiter=",")
    assert run("condense", "--dataset", tmp_path / "nan", "--out", tmp_path / "o") == 2


@pytest.mark.filterwarnings("ignore:overflow")
def test_numerical_failure_is_exit_3(dataset, tmp_path, capsys):
    # a huge plain-gradient step overflows the kernel on the next pass
    code = run("condense", "--dataset", dataset, "--per-class", 1, "--kernel", "dot", "--optimizer", "sgd",
               "--lr", 1e300, "--epochs", 5, "--out", tmp_path / "o")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_config_file_and_flag_precedence(dataset, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(f"# toy\ndataset = {dataset}\nbeta = 2.0\nk = 1\nepochs = 5\nper_class = 1\n")
    out = tmp_path / "o"
    assert run("condense", "--config", cfg_file, "--beta", 0.25, "--out", out) == 0
    conf = json.loads((out / "metrics.json").read_text())["config"]
    assert conf["beta"] == 0.25 and conf["k"] == 1 and conf["epochs"] == 5
    assert conf["sigma_w2"] == 1.0


def test_unknown_config_key_is_exit_2(dataset, tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("betta = 1\n")
    assert run("condense", "--config", cfg_file) == 2
    with pytest.raises(ValidationError, match="unknown"):
        parse_config_text("betta = 1")
    with pytest.raises(ValidationError, match="duplicate"):
        parse_config_text("beta = 1\nbeta = 2")
    with pytest.raises(ValidationError):
        parse_config_text("just words")
    with pytest.raises(ValidationError):
        parse_config_text("k = two")


keys = st.fixed_dictionaries({}, optional={
    "beta": st.floats(1e-3, 10), "k": st.integers(0, 6), "epochs": st.integers(0, 2000),
    "learn_structure": st.booleans(), "seeds": st.lists(st.integers(0, 99), min_size=1, max_size=4),
    "betas": st.lists(st.floats(1e-3, 10), min_size=1, max_size=3), "dataset": st.text("abc/_", min_size=1),
    "learning_rate": st.floats(1e-5, 1.0), "m": st.integers(1, 200), "batch_rows": st.none() | st.integers(1, 9),
})


@settings(max_examples=50, deadline=None)
@given(values=keys)
def test_config_round_trip(values):
    rc = build_run_config(flag_values=values)
    text = rc.dumps()
    again = build_run_config(parse_config_text(text))
    assert again.to_dict() == rc.to_dict()
    assert run_config_from_dict(rc.to_dict()).to_dict() == rc.to_dict()
    for k, v in values.items():
        assert rc.to_dict()[k] == v
    assert dump_config(again.to_dict()) == text


def test_one_cell_sweep_matches_condense(dataset, tmp_path):
    common = ["--dataset", dataset, "--per-class", 1, "--epochs", 20, "--seed", 0]
    assert run("condense", *common, "--beta", 0.5, "--k", 2, "--out", tmp_path / "c") == 0
    assert run("sweep", *common, "--betas", "0.5", "--ks", "2", "--seeds", "0", "--out", tmp_path / "s") == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert list(rows[0]) == ["beta", "k", "acc_mean", "acc_std"]
    acc = json.loads((tmp_path / "c" / "metrics.json").read_text())["accuracy_mean"]
    assert float(rows[0]["acc_mean"]) == acc


def test_sweep_with_jobs_and_thread_cap(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("GCGP_THREADS", "2")
    assert run("sweep", "--dataset", dataset, "--per-class", 1, "--epochs", 5, "--betas", "0.1,1",
               "--ks", "0,1", "--jobs", 2, "--out", tmp_path / "s") == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert [(r["beta"], r["k"]) for r in rows] == [("0.1", "0"), ("0.1", "1"), ("1.0", "0"), ("1.0", "1")]
    monkeypatch.setenv("GCGP_THREADS", "zero")
    assert run("sweep", "--dataset", dataset, "--out", tmp_path / "s2") == 2


def test_evaluate_modes(dataset, tmp_path):
    base = ["--dataset", dataset, "--per-class", 1, "--epochs", 5]
    assert run("condense", *base, "--out", tmp_path / "c") == 0
    cond = tmp_path / "c" / "condensed.json"
    assert run("evaluate", *base, "--condensed", cond, "--out", tmp_path / "e1") == 0
    assert run("evaluate", *base, "--condensed", cond, "--generalize", "krr", "--out", tmp_path / "e2") == 0
    assert run("evaluate", *base, "--baseline", "random", "--seeds", "0,1", "--out", tmp_path / "e3") == 0
    assert run("evaluate", *base, "--baseline", "kcenter", "--size", 2, "--out", tmp_path / "e4") == 0
    assert run("evaluate", *base, "--ablation", "--seeds", "0", "--out", tmp_path / "e5") == 0
    assert run("evaluate", *base, "--seeds", "0,1", "--out", tmp_path / "e6") == 0
    for d in ("e1", "e2", "e3", "e4", "e5", "e6"):
        doc = json.loads((tmp_path / d / "metrics.json").read_text())
        assert "config" in doc
    assert (tmp_path / "e5" / "ablation.csv").exists()
    e3 = json.loads((tmp_path / "e3" / "metrics.json").read_text())
    assert len(e3["accuracies"]) == 2 and e3["method"] == "random"
    assert run("evaluate", *base, "--condensed", tmp_path / "missing.json") == 2


def test_bench_writes_timing_csv(tmp_path):
    assert run("bench", "--n", 200, "--d", 8, "--sizes", "4,8", "--repeats", 1, "--out", tmp_path / "b") == 0
    rows = list(csv.DictReader(open(tmp_path / "b" / "timing.csv")))
    assert [r["m"] for r in rows] == ["4", "8"] and all(float(r["step_ms"]) > 0 for r in rows)
    assert run("bench", "--sizes", "4,x") == 2


def test_gradcheck_exit_codes(capsys):
    assert run("gradcheck", "--n", 20, "--m", 6, "--d", 8, "--classes", 3, "--learn-structure", "--seed", 1) == 0
    assert "max relative error" in capsys.readouterr().out
    # an absurdly tight tolerance must report failure, not crash
    assert run("gradcheck", "--tol", 1e-30, "--abs-floor", 1e-30, "--h", 1e-3) == 1
    assert run("gradcheck", "--h", 1e-2) == 2


def test_kernel_oracle_cli(tmp_path):
    assert run("kernel-oracle", "--dims", 5, "--pairs", 3, "--samples", 50_000, "--tol", 0.02,
               "--out", tmp_path / "k") == 0
    doc = json.loads((tmp_path / "k" / "kernel_oracle.json").read_text())
    assert len(doc["deviations"]) == 3
    assert run("kernel-oracle", "--pairs", 3, "--samples", 100, "--tol", 1e-9) == 1


def test_convert_round_trip(tmp_path):
    content = tmp_path / "x.content"
    content.write_text("a 1 0 B\nb 0 1 A\nc 1 1 B\nd 0 0 A\n")
    cites = tmp_path / "x.cites"
    cites.write_text("a b\nb c\nc a\nzz a\n")
    out = tmp_path / "ds"
    assert run("convert", "--content", content, "--cites", cites, "--name", "x", "--out", out) == 0
    from gcgp.io import load_dataset
    g = load_dataset(out)
    assert g.num_nodes == 4 and g.num_edges == 3 and g.labels.tolist() == [1, 0, 1, 0]
    assert run("convert", "--name", "x", "--out", out) == 2
