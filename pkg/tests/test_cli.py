import json

import numpy as np
import pytest

from contrastlab.cli import main
from contrastlab.core import random_unit_rows
from contrastlab.reports import (
    read_csv,
    read_embeddings,
    read_histogram,
    read_json,
    read_loss_curve,
    write_embeddings,
)

FAST_TRAIN = ["--set", "train.epochs=30", "--set", "data.per_class=60"]


def run(*args):
    return main([str(a) for a in args])


def test_gradcheck_passes_and_reports_witness(tmp_path):
    assert run("gradcheck", "--out", tmp_path) == 0
    rep = read_json(tmp_path / "gradcheck.json")
    assert rep["gradients"]["max_relative_error"] <= 1e-6
    assert rep["coefficients"]["witness"]["supcon_factor"] > 0
    man = read_json(tmp_path / "manifest_gradcheck.json")
    assert man["command"] == "gradcheck" and man["seed"] == 0 and man["outputs"]["report"].endswith("gradcheck.json")
    assert man["duration_seconds"] >= 0 and "version" in man and man["config"]["gradcheck"]["batches"] == 100


def test_gradcheck_fault_injection_exits_1(tmp_path):
    assert run("gradcheck", "--out", tmp_path, "--fault", "sign_flip", "--set", "gradcheck.batches=3") == 1
    assert run("gradcheck", "--out", tmp_path, "--set", "gradcheck.fault=bogus") == 2


@pytest.mark.parametrize("extra", [[], ["--set", "oracle.t=1"], ["--set", "density.family=categorical"]])
def test_oracle(tmp_path, extra):
    assert run("oracle", "--out", tmp_path, *extra) == 0
    rep = read_json(tmp_path / "oracle.json")
    assert rep["max_abs_deviation"] <= 1e-12
    assert rep["selfsup_path_checked"] == ("oracle.t=1" in extra)


def test_oracle_refuses_large_n(tmp_path, capsys):
    assert run("oracle", "--out", tmp_path, "--set", "oracle.n=13") == 2
    assert "enumeration limit" in capsys.readouterr().err


def test_bound_identical_densities_chance_level(tmp_path):
    assert run("bound", "--out", tmp_path, "--set", "density.target_mean=[0.0]", "--set", "bound.n=[6]") == 0
    r = read_json(tmp_path / "bound.json")["reports"][0]
    assert r["sincere_rhs"] == pytest.approx(np.log(4), abs=1e-15)
    assert r["mc_loss_estimate"] == pytest.approx(np.log(5), abs=1e-12)


def test_bound_sweep_monotone(tmp_path):
    assert run("bound", "--out", tmp_path, "--set", "bound.n=[4, 6, 10, 18]", "--set", "bound.samples=20000") == 0
    rep = read_json(tmp_path / "bound.json")
    assert rep["monotone_in_n"] and rep["ok"]
    ests = [r["mc_loss_estimate"] for r in rep["reports"]]
    assert ests == sorted(ests)
    mu1 = [r for r in rep["reports"] if r["n"] == 6][0]
    assert mu1["mc_loss_estimate"] + 3 * mu1["mc_standard_error"] >= np.log(4) - 1


def test_config_and_io_exit_codes(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlr = 1\n")
    assert run("train", "--config", bad, "--out", tmp_path) == 2
    assert run("train", "--config", tmp_path / "missing.toml", "--out", tmp_path) == 3
    assert run("eval", "--out", tmp_path / "empty") == 3
    assert run("report", "--out", tmp_path) == 2
    assert run("train", "--out", tmp_path, "--set", "data.class_separation=3.0") == 2


def test_train_eval_report_pipeline(tmp_path):
    dirs = {}
    for loss in ("sincere", "supcon"):
        d = tmp_path / loss
        assert run("train", "--out", d, "--seed", 7, "--set", f"train.loss={loss}", *FAST_TRAIN) == 0
        assert run("eval", "--out", d) == 0
        dirs[loss] = d
    d = dirs["sincere"]
    losses = read_loss_curve(d / "loss.csv")
    assert len(losses) == 30 and losses[-1] < losses[0]
    Z, y = read_embeddings(d / "embeddings_train.csv")
    assert Z.shape == (108, 16) and np.allclose(np.linalg.norm(Z, axis=1), 1.0)
    m = read_json(d / "metrics.json")
    assert m["loss"] == "sincere" and m["seed"] == 7 and m["evaluation"] == "leave-one-out"
    assert m["final_loss"] == losses[-1]
    for name in ("hist_all.csv", "hist_class_0.csv", "hist_class_1.csv"):
        rows = read_histogram(d / name)
        assert len(rows) == 40 and rows[0][0] == -1.0 and rows[-1][1] == 1.0
    assert sum(r[2] for r in read_histogram(d / "hist_all.csv")) == 108
    assert run("report", dirs["sincere"], dirs["supcon"], "--out", tmp_path / "r", "--strict") == 0
    rep = read_json(tmp_path / "r" / "report.json")
    assert rep["checks"]["margin_sincere_gt_supcon/k=2"]
    assert rep["groups"]["sincere/k=2"]["mean_margin"] > rep["groups"]["supcon/k=2"]["mean_margin"]


def test_mlp_run_writes_test_embeddings(tmp_path):
    assert run("train", "--out", tmp_path, "--set", "train.encoder=mlp", *FAST_TRAIN) == 0
    assert (tmp_path / "embeddings_test.csv").is_file()
    assert run("eval", "--out", tmp_path) == 0
    assert read_json(tmp_path / "metrics.json")["evaluation"] == "heldout"


def test_eval_on_random_embeddings_has_no_margin(tmp_path):
    rng = np.random.default_rng(0)
    write_embeddings(tmp_path / "embeddings_train.csv", random_unit_rows(rng, 400, 16), np.repeat([0, 1], 200))
    write_embeddings(tmp_path / "embeddings_test.csv", random_unit_rows(rng, 200, 16), np.repeat([0, 1], 100))
    assert run("eval", "--out", tmp_path) == 0
    assert abs(read_json(tmp_path / "metrics.json")["margin"]) < 0.05


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if not p.name.startswith("manifest_")}


@pytest.mark.parametrize("cmd, extra", [
    ("gradcheck", ["--set", "gradcheck.batches=10", "--set", "gradcheck.coefficient_batches=50"]),
    ("oracle", []),
    ("bound", ["--set", "bound.samples=5000"]),
    ("train", FAST_TRAIN),
])
def test_reruns_are_byte_identical(tmp_path, cmd, extra):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(cmd, "--out", a, "--seed", 3, *extra) == 0
    assert run(cmd, "--out", b, "--seed", 3, *extra) == 0
    snap = _snapshot(a)
    assert snap and snap == _snapshot(b)


def test_reports_parse_with_own_readers(tmp_path):
    assert run("train", "--out", tmp_path, *FAST_TRAIN) == 0
    assert run("eval", "--out", tmp_path) == 0
    for p in tmp_path.iterdir():
        if p.suffix == ".json":
            json.loads(p.read_text())
        else:
            header, rows = read_csv(p)
            assert header and rows
