import json

import numpy as np
import pytest
from click.testing import CliRunner

from qpresonance.cli import main
from qpresonance.model import sample_model, save_spec


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.delenv("QPRESONANCE_OUTPUT_DIR", raising=False)

    def _run(*args, out="out"):
        res = CliRunner().invoke(main, [*args, "--output-dir", str(tmp_path / out)])
        return res, tmp_path / out

    return _run


def test_all_commands_pass(run, tmp_path):
    spec_path = tmp_path / "sample.json"
    save_spec(sample_model(), spec_path)
    res, out = run("all", "--spec", str(spec_path), "--K", "3")
    assert res.exit_code == 0, res.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ok"] is True
    assert set(summary["verdicts"].values()) == {"pass"}
    assert (out / "profile.csv").exists() and (out / "sweep.csv").exists()


def test_reports_are_deterministic(run):
    a, out_a = run("melnikov", out="a")
    b, out_b = run("melnikov", out="b")
    assert a.exit_code == b.exit_code == 0
    assert (out_a / "melnikov.json").read_bytes() == (out_b / "melnikov.json").read_bytes()


def test_melnikov_zeros_first_order(run):
    res, out = run("melnikov", "--K", "1")
    assert res.exit_code == 0
    zeros = json.loads((out / "melnikov.json").read_text())["results"]["zeros"]
    assert np.allclose([z["beta"] for z in zeros], [0.0, np.pi])
    assert [z["order"] for z in zeros] == [1, 1]


def test_missing_spec_is_io_error(run, tmp_path):
    res, out = run("series", "--spec", str(tmp_path / "nope.json"))
    assert res.exit_code == 3
    assert json.loads((out / "error.json").read_text())["error"] == "io"


def test_invalid_spec_is_module_error(run, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    res, _ = run("series", "--spec", str(bad))
    assert res.exit_code == 4


def test_size_caps(run):
    res, _ = run("trees", "--K-tree", "5")
    assert res.exit_code == 2
    assert "allow-large" in res.output


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QPRESONANCE_OUTPUT_DIR", str(tmp_path / "env"))
    res = CliRunner().invoke(main, ["series", "--K", "2"])
    assert res.exit_code == 0
    assert (tmp_path / "env" / "series.json").exists()
