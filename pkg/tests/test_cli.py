import subprocess
import sys

import numpy as np

from whquant import basis, field_from_csv, operator_from_csv, operator_to_csv
from whquant.cli import run

from conftest import maxabs


def cli(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_mop_coherent_projector(capsys):
    code, out, _ = cli(capsys, "mop", "--weight", "cg:-1", "--dim", "8")
    assert code == 0
    assert out == "# fock dim=8\n0,0,1,0\n"


def test_quantize_gaussian_p_squared(capsys):
    code, out, err = cli(capsys, "quantize", "--weight", "gauss:2,2", "--symbol", "p^2", "--dim", "12")
    assert code == 0 and "poly-qp" in err
    A = operator_from_csv(out).mat
    from whquant import quadrature_ops

    P = quadrature_ops(14)[1].mat
    ref = (P @ P)[:12, :12] + 0.25 * np.eye(12)
    assert maxabs(A[:10, :10] - ref[:10, :10]) < 1e-12


def test_quantize_to_file(capsys, tmp_path):
    out = tmp_path / "a.csv"
    assert run(["quantize", "--weight", "ww", "--symbol", "z*zbar", "--dim", "6", "--out", str(out)]) == 0
    A = operator_from_csv(out.read_text()).mat
    assert maxabs(np.diag(A)[:5] - (np.arange(5) + 0.5)) < 1e-13


def test_coeffs_and_star_headers(capsys):
    code, out, _ = cli(capsys, "coeffs", "--weight", "cg:-1", "--order", "2", "--family", "a")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# coeffs weight=cg:-1 family=a order=2 rep=z"
    assert "1,0,0,1,-1,0" in lines
    code, out, _ = cli(capsys, "star", "--weight", "ww", "--f", "z", "--g", "zbar")
    assert out.splitlines() == ["# star weight=ww rep=z order=2", "0,0,0.5,0", "1,1,1,0"]
    code, out, _ = cli(capsys, "star", "--weight", "bj", "--f", "q", "--g", "p", "--rep", "qp")
    assert "0,0,0,0.5" in out.splitlines()


def test_portrait_roundtrip(capsys, tmp_path):
    op = tmp_path / "e0.csv"
    op.write_text(operator_to_csv(basis(0, 16).projector()))
    code, out, _ = cli(capsys, "portrait", "--weight", "cg:-1", "--op", str(op), "--grid", "5,32")
    assert code == 0
    fld = field_from_csv(out)
    assert maxabs(fld.values - np.exp(-np.abs(fld.grid.z) ** 2)) < 1e-12
    code, out, _ = cli(capsys, "portrait", "--kind", "wigner", "--op", str(op), "--grid", "5,32")
    fld = field_from_csv(out)
    assert maxabs(fld.values - 2 * np.exp(-2 * np.abs(fld.grid.z) ** 2)) < 1e-12


def test_verify_passes(capsys):
    code, out, _ = cli(capsys, "verify", "--suite", "ccr", "--weight", "bj", "--dim", "16")
    assert code == 0
    assert out.splitlines()[0] == "suite,weight,check,value,tol,result"
    assert out.splitlines()[1].endswith(",PASS")


def test_exit_codes(capsys, tmp_path):
    assert cli(capsys, "quantize", "--weight", "nope", "--symbol", "q", "--dim", "4")[0] == 1
    assert cli(capsys, "quantize", "--weight", "ww", "--symbol", "q+", "--dim", "4")[0] == 1
    assert cli(capsys, "quantize", "--weight", "ww")[0] == 1
    assert cli(capsys)[0] == 1
    assert cli(capsys, "portrait", "--op", str(tmp_path / "missing.csv"))[0] == 1
    assert cli(capsys, "verify", "--suite", "bogus")[0] == 1
    assert cli(capsys, "--help")[0] == 0
    # a real contract failure: the Heaviside weight's resolution check at a small working space
    code, out, _ = cli(capsys, "verify", "--suite", "resolution", "--weight", "heavi-e:0.5", "--dim", "8")
    assert code == 2 and out.rstrip().endswith("FAIL")
    code, _, err = cli(capsys, "quantize", "--weight", "bj", "--symbol", "q", "--dim", "4", "--pipeline", "quad")
    assert code == 3 and "unsupported" in err
    assert cli(capsys, "coeffs", "--weight", "heavi-e:1", "--order", "2", "--family", "a")[0] == 3


def test_console_script_exit_code():
    r = subprocess.run([sys.executable, "-m", "whquant.cli", "mop", "--weight", "bj", "--dim", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 3
    r = subprocess.run([sys.executable, "-m", "whquant.cli", "mop", "--weight", "ww", "--dim", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.splitlines()[1] == "0,0,2,0"


def test_output_is_deterministic(capsys):
    args = ["verify", "--suite", "duality", "--weight", "cg:-1", "--dim", "16"]
    outs = {cli(capsys, "--threads", str(t), *args)[1] for t in (1, 2, 1, 4)}
    assert len(outs) == 1
    args = ["quantize", "--weight", "cg:-0.5", "--symbol", "q^2*p", "--dim", "10", "--pipeline", "quad"]
    outs = {cli(capsys, "--threads", str(t), *args)[1] for t in (1, 3)}
    assert len(outs) == 1
