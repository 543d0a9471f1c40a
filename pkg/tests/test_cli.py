import json
import subprocess
import sys

import numpy as np
import pytest

from nlheat.cli import EXIT_FAIL, EXIT_INFRA, EXIT_PASS, EXIT_USAGE, main
from nlheat.grid import Grid, read_field, write_field
from nlheat.suites import ANCHORS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_prints_every_suite(capsys):
    code, out, _ = run(capsys, "verify", "--list")
    assert code == EXIT_PASS
    for name in ANCHORS:
        assert name in out


def test_print_config_merges_flags(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec": "log_corrected:eps=1", "times": [0.5, 1.5]}))
    code, out, _ = run(capsys, "verify", "--config", str(cfg), "--d", "2", "--print-config")
    doc = json.loads(out)
    assert code == EXIT_PASS
    assert doc["spec"] == "log_corrected:eps=1" and doc["d"] == 2 and doc["times"] == [0.5, 1.5]


@pytest.mark.parametrize("argv", [
    ("verify", "no-such-suite"),
    ("verify",),
    ("symbol", "--spec", "fractional:alpha=2.5"),
    ("symbol", "--spec", "nonsense"),
    ("symbol",),
    ("frobnicate",),
])
def test_usage_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_bad_config_files_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "verify", "symbol", "--config", str(bad))[0] == EXIT_USAGE
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"colour": "blue"}))
    assert run(capsys, "verify", "symbol", "--config", str(unknown))[0] == EXIT_USAGE
    assert run(capsys, "verify", "symbol", "--config", str(tmp_path / "missing.json"))[0] \
        == EXIT_USAGE


def test_unresolvable_time_exits_3(capsys):
    code, _, err = run(capsys, "heatkernel", "--spec", "fractional:alpha=1", "--t", "1e-4")
    assert code == EXIT_INFRA
    assert "Nyquist" in err


def test_deterministic_runs_are_byte_identical(capsys, tmp_path):
    argv = ("verify", "symbol", "--deterministic", "--csv", str(tmp_path))
    c1, o1, _ = run(capsys, *argv)
    c2, o2, _ = run(capsys, *argv)
    assert c1 == c2 == EXIT_PASS
    assert o1 == o2
    doc = json.loads(o1)
    assert doc["suite"] == "symbol" and doc["pass"] and doc["seconds"] == 0.0
    rows = (tmp_path / "symbol.csv").read_text().splitlines()
    assert rows[0] == "suite,check,quantity,value,pass" and len(rows) > 1


def test_symbol_command(capsys):
    code, out, _ = run(capsys, "symbol", "--spec", "fractional:alpha=1.5", "--xi", "1", "2")
    vals = json.loads(out)["values"]
    assert code == EXIT_PASS
    assert vals[1]["m"] == pytest.approx(2 ** 1.5, rel=1e-8)


def test_heatkernel_then_apply_round_trip(capsys, tmp_path):
    pk = tmp_path / "p.bin"
    lk = tmp_path / "lp.bin"
    code, out, _ = run(capsys, "heatkernel", "--spec", "fractional:alpha=1", "--N", "1024",
                       "--L", "32", "--t", "1", "--out", str(pk))
    assert code == EXIT_PASS
    assert json.loads(out)["mass"] == pytest.approx(1.0, abs=1e-4)
    code, _, _ = run(capsys, "apply", "--spec", "fractional:alpha=1", "--input", str(pk),
                     "--out", str(lk))
    assert code == EXIT_PASS
    g, vals, t = read_field(lk)
    # L P_1 = -d_t P_t at t = 1 for the Cauchy kernel: (1 - x^2) / (pi (1 + x^2)^2)
    x = g.axis
    exact = (1 - x ** 2) / (np.pi * (1 + x ** 2) ** 2)
    mask = g.trusted_mask(0.5)
    assert t == 1.0
    assert np.max(np.abs(vals - exact)[mask]) < 1e-3


def test_apply_rejects_dimension_mismatch(capsys, tmp_path):
    g = Grid(2, 16, 4.0)
    f = tmp_path / "f.bin"
    write_field(f, g, np.zeros(g.shape), 0.0)
    assert run(capsys, "apply", "--spec", "fractional:alpha=1", "--input", str(f))[0] \
        == EXIT_USAGE


def test_solve_and_phi_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--spec", "fractional:alpha=1", "--N", "1024",
                       "--L", "32", "--times", "0.5", "1", "--dirac", "0", "1",
                       "--out", str(tmp_path / "u"))
    doc = json.loads(out)
    assert code == EXIT_PASS
    assert len(doc["files"]) == 2 and doc["min"] >= 0
    assert np.allclose(doc["masses"], 2.0, atol=1e-6)
    code, out, _ = run(capsys, "phi", "--spec", "fractional:alpha=1", "--no-refine")
    assert code == EXIT_PASS and json.loads(out)["c"] > 0


def test_failing_oracle_exits_1(capsys):
    # 10^4 samples cannot reach the 0.02 acceptance distance
    code, out, _ = run(capsys, "oracle", "--spec", "fractional:alpha=1", "--n", "10000")
    assert code == EXIT_FAIL
    assert json.loads(out)["pass"] is False


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nlheat", "verify", "--list"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "symbol" in r.stdout
