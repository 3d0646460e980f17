import csv
import io
import json
import os
import subprocess
import sys

import pytest

from exactsde.cli import COLUMNS, run

CIR_ARGS = ["--model", "cir", "--model-params", "kappa=0.5,vinf=0.04,eps=0.1", "--x0", "0.04", "--horizon", "1"]


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_price_row_has_contract_columns(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = run(["price", *CIR_ARGS, "--payoff", "identity", "--paths", "200000", "--seed", "42",
                "--variant", "ordinate", "--trunc-k", "20", "--out", str(out)])
    assert code == 0
    rows = _rows(out.read_text())
    assert list(rows[0]) == COLUMNS
    r = rows[0]
    assert r["command"] == "price" and r["quantity"] == "price" and r["wall_seconds"] == ""
    assert abs(float(r["mean"]) - 0.04) <= 4 * float(r["std_error"])
    assert float(r["trunc_k"]) == 20.0


def test_low_degree_cir_exits_with_validation_code(capsys):
    code = run(["price", "--model", "cir", "--model-params", "kappa=0.5,vinf=0.01,eps=0.1", "--x0", "0.04",
                "--trunc-k", "20"])
    assert code == 2
    assert "< 3" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["price", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--paths", "1"],
        ["price", "--model", "trig", "--model-params", "b=1", "--x0", "0"],
        ["price", "--model", "trig", "--x0", "0"],
        ["price", "--model", "heston", "--x0", "0"],
        ["price", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--payoff", "call"],
        ["price", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--variant", "sideways"],
        ["price", "--model", "symmetric-ou", "--model-params", "m=0.5", "--x0", "0"],
        ["price", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--trunc-k", "-3"],
        ["baseline", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--delta-t", "0.3", "--dx", "0.1"],
        ["frobnicate", "--model", "trig", "--x0", "0"],
    ],
)
def test_bad_configurations_exit_2(argv, capsys):
    assert run(argv) == 2


def test_budget_exhaustion_exits_3(capsys):
    code = run(["price", "--model", "trig", "--model-params", "a=40", "--x0", "0", "--paths", "4", "--budget", "2"])
    assert code == 3


def test_pk_sweep_rows(capsys):
    code = run(["pk-sweep", "--model", "symmetric-ou", "--model-params", "m=0.5", "--x0", "0.04",
                "--k", "0,1,2,100", "--paths", "20000"])
    assert code == 0
    rows = _rows(capsys.readouterr().out)
    assert [float(r["trunc_k"]) for r in rows] == [0.0, 1.0, 2.0, 100.0]
    p = [float(r["mean"]) for r in rows]
    assert p == sorted(p, reverse=True)


def test_jsonl_output(capsys):
    code = run(["delta", "--model", "trig", "--model-params", "a=1", "--x0", "0", "--paths", "5000",
                "--format", "jsonl"])
    assert code == 0
    rec = json.loads(capsys.readouterr().out.strip())
    assert rec["quantity"] == "delta" and rec["n_paths"] == 5000


@pytest.mark.parametrize("method,n", [("fd", 3), ("malliavin", 2)])
def test_baseline_rows(method, n, capsys):
    code = run(["baseline", *CIR_ARGS, "--method", method, "--delta-t", "0.1", "--dx", "0.005", "--paths", "5000"])
    assert code == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == n and all(r["trunc_k"] == "nan" for r in rows)


def test_other_commands_run(tmp_path, capsys):
    base = ["--model", "modified-ou", "--model-params", "m=0.5", "--x0", "0.04", "--paths", "2000"]
    assert run(["bench-variants", *base]) == 0
    assert run(["bias-bound", "--model", "symmetric-ou", "--model-params", "m=0.5", "--x0", "0.04",
                "--trunc-k", "1", "--payoff", "indicator", "--paths", "2000"]) == 0
    sk = tmp_path / "sk.csv"
    assert run(["sample", *base, "--dump-skeleton", str(sk)]) == 0
    assert sk.read_text().startswith("t,value")
    assert run(["gamma", *CIR_ARGS, "--trunc-k", "20", "--paths", "2000", "--timing"]) == 0
    out = capsys.readouterr().out
    assert _rows(out.split("\n\n")[-1] if "\n\n" in out else out)


def _cli(args, threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "exactsde", *args], capture_output=True, env=env, check=True).stdout


def test_output_is_bitwise_stable_across_runs_and_workers():
    args = ["gamma", "--model", "modified-ou", "--model-params", "m=0.5", "--x0", "0.04", "--payoff", "square",
            "--paths", "70000", "--seed", "5"]
    one = _cli([*args, "--workers", "1"], 1)
    again = _cli([*args, "--workers", "1"], 1)
    four = _cli([*args, "--workers", "4"], 4)
    assert one == again == four
