import json
import subprocess
import sys

import numpy as np
import pytest

from repjsd.cli import main
from repjsd.data import load_csv, write_csv


def run(*argv):
    return main([str(a) for a in argv])


def read_trace(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestGenData:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "b.csv"
        assert run("gen-data", "--dataset", "blobs", "--n", 4, "--which", "Q", "--out", out) == 0
        rows = load_csv(out, has_header=True).rows
        assert rows.shape == (36, 2)

    def test_cauchy_target(self, tmp_path):
        out = tmp_path / "c.csv"
        assert run("gen-data", "--dataset", "cauchy:0.4", "--n", 2000, "--which", "Q", "--out", out) == 0
        assert abs(np.median(load_csv(out, True).rows) - 5.0) < 1.5

    def test_target_out_of_range(self, tmp_path, capsys):
        assert run("gen-data", "--dataset", "cauchy:0.9", "--out", tmp_path / "x.csv") == 2
        assert "target" in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()


class TestEstimate:
    def test_files_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        code = run("estimate", "--dataset", "cauchy:0.4", "--n", 64, "--epochs", 5, "--features", 4, "--out", out)
        assert code == 0
        assert {p.name for p in out.iterdir()} == {"trace.ndjson", "result.json", "network.json", "manifest.json"}
        trace = read_trace(out / "trace.ndjson")
        assert len(trace) == 5 and set(trace[0]) == {"epoch", "estimate", "sigma", "wallclock_ms"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "estimate"
        assert manifest["config"]["epochs"] == 5

    def test_manifest_reproduces_run(self, tmp_path):
        first = tmp_path / "a"
        run("estimate", "--dataset", "blobs", "--n", 10, "--epochs", 4, "--features", 4, "--seed", 3, "--out", first)
        second = tmp_path / "b"
        assert run("estimate", "--config", first / "manifest.json", "--out", second) == 0
        a = [r["estimate"] for r in read_trace(first / "trace.ndjson")]
        b = [r["estimate"] for r in read_trace(second / "trace.ndjson")]
        assert a == b

    def test_precedence(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 3, "features": 4, "dataset": "null-gauss", "n": 8}))
        out = tmp_path / "o"
        monkeypatch.setenv("REPJSD_SEED", "11")
        assert run("estimate", "--config", cfg, "--epochs", 2, "--out", out) == 0
        resolved = json.loads((out / "manifest.json").read_text())["config"]
        assert resolved["epochs"] == 2  # flag beats config
        assert resolved["features"] == 4  # config beats default
        assert resolved["lr"] == 1e-3  # default
        assert resolved["seed"] == 11  # environment fallback

    def test_csv_inputs(self, tmp_path):
        rng = np.random.default_rng(0)
        write_csv(tmp_path / "x.csv", rng.standard_normal((20, 2)))
        write_csv(tmp_path / "y.csv", rng.standard_normal((20, 2)) + 1)
        out = tmp_path / "o"
        assert run("estimate", "--x", tmp_path / "x.csv", "--y", tmp_path / "y.csv", "--epochs", 3, "--out", out) == 0
        assert json.loads((out / "result.json").read_text())["estimate"] > 0

    def test_bad_csv_leaves_no_output(self, tmp_path):
        (tmp_path / "x.csv").write_text("1,2\nfoo,3\n")
        (tmp_path / "y.csv").write_text("1,2\n")
        out = tmp_path / "o"
        assert run("estimate", "--x", tmp_path / "x.csv", "--y", tmp_path / "y.csv", "--out", out) == 2
        assert not out.exists()

    def test_missing_inputs(self, tmp_path):
        assert run("estimate", "--out", tmp_path / "o") == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("estimate", "--config", cfg) == 2


class TestTst:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "t"
        code = run(
            "tst", "--method", "jsd-rff", "--dataset", "null-gauss", "--n", 10, "--grid", "10,12",
            "--test-sets", 2, "--trials", 2, "--permutations", 10, "--epochs", 2, "--threads", 1,
            "--out", out,
        )
        assert code == 0
        power = (out / "power.csv").read_text().splitlines()
        assert power[0] == "dataset,method,n,d,trial,power"
        assert len(power) == 5
        assert (out / "summary.csv").read_text().startswith("dataset,method,n,d,mean_power,sd")
        assert "null-gauss-null" in capsys.readouterr().out

    def test_csv_too_small(self, tmp_path):
        write_csv(tmp_path / "x.csv", np.zeros((1, 2)))
        write_csv(tmp_path / "y.csv", np.zeros((1, 2)))
        code = run("tst", "--dataset", "csv", "--x", tmp_path / "x.csv", "--y", tmp_path / "y.csv",
                   "--trials", 1, "--out", tmp_path / "t")
        assert code == 2


class TestSelfcheck:
    def test_passes(self, capsys):
        assert run("selfcheck", "--seed", 7) == 0
        lines = capsys.readouterr().out.splitlines()
        assert all(line.startswith("PASS") for line in lines[:-1])

    @pytest.mark.parametrize("mutation", ["entropy-grad-sign", "no-trace-normalization", "wrong-pi"])
    def test_mutations_fail(self, mutation, capsys):
        assert run("selfcheck", "--seed", 7, "--mutation", mutation) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_mutation_is_undone(self):
        run("selfcheck", "--mutation", "wrong-pi")
        assert run("selfcheck") == 0


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "repjsd", "tst", "--method", "nope"], capture_output=True)
    assert proc.returncode == 2
    assert b"invalid choice" in proc.stderr


def test_gan_toy(tmp_path):
    out = tmp_path / "g"
    assert run("gan-toy", "--steps", 2, "--batch-size", 16, "--samples", 50, "--out", out) == 0
    report = json.loads((out / "coverage.json").read_text())
    assert set(report) == {"modes_hit", "histogram", "kl_to_uniform", "heldout_divergence"}
    assert load_csv(out / "samples.csv", True).rows.shape == (50, 2)
