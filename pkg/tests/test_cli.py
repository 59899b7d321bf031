import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lloglog.cli import main
from lloglog.content import ContentParams, length, thickness
from lloglog.dyadic import GridFunction
from lloglog.families import random_sparse

FIXTURE = Path(__file__).parent / "fixtures" / "v.json"


def _grid(path):
    return GridFunction.from_json(Path(path).read_text())


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def test_unknown_flag_exits_1(capsys):
    assert main(["content", "--frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_subcommand_exits_1():
    assert main([]) == 1


def test_missing_input_exits_1(tmp_path):
    assert main(["content", "--op", "length", "--input", str(tmp_path / "nope.json"), "--n", "2",
                 "--out", str(tmp_path)]) == 1


def test_malformed_grid_exits_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"cells": 3}')
    assert main(["content", "--op", "length", "--input", str(bad), "--n", "2", "--out", str(tmp_path)]) == 1


def test_decompose_21_writes_split(tmp_path):
    assert main(["decompose", "--prop", "21", "--input", str(FIXTURE), "--n", "3", "--out", str(tmp_path)]) == 0
    assert set(_files(tmp_path)) == {"g.json", "h.json", "cert.json"}
    v, g, h = _grid(FIXTURE), _grid(tmp_path / "g.json"), _grid(tmp_path / "h.json")
    assert np.array_equal(g.values + h.values, v.values)
    cert = json.loads((tmp_path / "cert.json").read_text())
    assert cert["version"] == "1"
    assert cert["constants_achieved"]["length_h_over_length_v"] <= 0.5


def test_decompose_outputs_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert main(["decompose", "--prop", "23", "--input", str(FIXTURE), "--n", "3",
                     "--out", str(tmp_path / run)]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


@pytest.mark.parametrize("op", ["length", "thickness", "theta"])
def test_content_ops(op, tmp_path, capsys):
    assert main(["content", "--op", op, "--input", str(FIXTURE), "--n", "3", "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / f"{op}.json").read_text())
    v = _grid(FIXTURE)
    if op == "length":
        assert out["value"] == length(v, ContentParams(3))
    elif op == "thickness":
        assert out["value"] == thickness(v, ContentParams(3))
    else:
        assert 0 < out["value"] <= v.integral() / length(v, ContentParams(3))
    assert json.loads(capsys.readouterr().out)["op"] == op


def test_czd_and_op(tmp_path):
    assert main(["czd", "--input", str(FIXTURE), "--alpha", "1.0", "--dil", "[1,2]",
                 "--out", str(tmp_path / "czd")]) == 0
    assert "measured" in json.loads((tmp_path / "czd" / "czd.json").read_text())
    fine = tmp_path / "fine.json"
    fine.write_text(random_sparse(resolution=7, seed=1).to_json())
    assert main(["op", "--kind", "maximal", "--surface", "parabola:b=2", "--input", str(fine),
                 "--krange", "-2:0", "--out", str(tmp_path / "op")]) == 0
    rows = (tmp_path / "op" / "diagnostics.csv").read_text().splitlines()
    assert rows[0].split(",")[0] == "version" and len(rows) == 4


def test_op_rejects_coarse_grid_and_missing_cancellation(tmp_path):
    # the 8 x 8 fixture cannot resolve scale 2^-2
    assert main(["op", "--kind", "maximal", "--surface", "parabola:b=2", "--input", str(FIXTURE),
                 "--krange", "-2:0", "--out", str(tmp_path)]) == 1
    assert main(["op", "--kind", "radon", "--surface", "parabola:b=2", "--input", str(FIXTURE),
                 "--out", str(tmp_path)]) == 1


def test_harness_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_wrok": 3}))
    assert main(["harness", "--suite", "cor31", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lloglog", "content", "--op", "length", "--input",
                          str(FIXTURE), "--n", "2", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert (tmp_path / "length.json").exists()
