import io
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bcinverse import acceptance
from bcinverse.cli import main
from bcinverse.config import load_config
from bcinverse.formats import read_kernel, read_report, write_kernel, write_spectral_csv
from bcinverse.schrodinger_forward import free_spectral_data

REPO = Path(__file__).resolve().parents[1]

SMALL = """\
[problem]
potential = shift:2

[discretization]
n_x = 64
n_t = 600
T = 0.06
M = 120
K = 20
n_T = 60
"""


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "small.ini"
    cfg.write_text(SMALL)
    assert run("simulate", "-c", cfg, "-o", d / "k.bcik")[0] == 0
    assert run("recover-spectrum", "-c", cfg, d / "k.bcik", "-o", d / "s.csv")[0] == 0
    return d, cfg


def test_pipeline_round_trip(small):
    d, cfg = small
    code, out = run("reconstruct", "-c", cfg, d / "s.csv", "-o", d / "r.csv")
    assert code == 0
    rep = read_report(d / "r.csv.report")
    assert list(rep) == ["config", "simulate", "recover-spectrum", "reconstruct"]
    assert float(rep["reconstruct"]["interior_relative_l2"]) < 0.01
    h = load_config(cfg).hash
    assert rep["config"]["config_hash"] == h
    assert read_kernel(d / "k.bcik")[1]["config_hash"] == h


def test_outputs_are_byte_identical(small, tmp_path):
    d, cfg = small
    assert run("simulate", "-c", cfg, "--threads", "1", "-o", tmp_path / "k.bcik")[0] == 0
    assert (tmp_path / "k.bcik").read_bytes() == (d / "k.bcik").read_bytes()
    assert run("recover-spectrum", "-c", cfg, d / "k.bcik", "-o", tmp_path / "s.csv")[0] == 0
    assert (tmp_path / "s.csv").read_bytes() == (d / "s.csv").read_bytes()


def test_hash_mismatch_rejected(small, capsys):
    d, cfg = small
    code, _ = run("recover-spectrum", "-c", cfg, "--K", "10", d / "k.bcik", "-o", d / "x.csv")
    assert code == 1
    assert "config" in capsys.readouterr().err
    code, _ = run("reconstruct", "-c", cfg, "--n-T", "30", d / "s.csv", "-o", d / "x.csv")
    assert code == 1


def test_missing_files_exit_2(tmp_path, capsys):
    assert run("recover-spectrum", tmp_path / "absent.bcik")[0] == 2
    code, _ = run("simulate", "--potential", tmp_path / "q.csv", "-o", tmp_path / "k.bcik")
    assert code == 2
    assert "q.csv" in capsys.readouterr().err


def test_short_horizon_exit_3(small):
    d, cfg = small
    assert run("recover-spectrum", "-c", cfg, "--T", "0.08", d / "k.bcik", "-o", d / "x.csv")[0] == 3


def test_masked_exit_4(tmp_path):
    cfg = tmp_path / "m.ini"
    cfg.write_text("[discretization]\nn_T = 30\n[solver]\ndet_threshold = 3\n")
    write_spectral_csv(tmp_path / "s.csv", free_spectral_data(30), {"config_hash": load_config(cfg).hash})
    code, out = run("reconstruct", "-c", cfg, tmp_path / "s.csv", "-o", tmp_path / "r.csv")
    assert code == 4


def test_zero_kernel_empty_table(small, tmp_path):
    d, cfg = small
    K, meta = read_kernel(d / "k.bcik")
    K.matrix[:] = 0
    write_kernel(tmp_path / "z.bcik", K, meta)
    code, out = run("recover-spectrum", "-c", cfg, tmp_path / "z.bcik", "-o", tmp_path / "z.csv")
    assert code == 0
    assert out.strip().splitlines() == ["k,re_lambda,im_lambda,L"]
    assert read_report(tmp_path / "z.csv.report")["recover-spectrum"]["status"] == "empty"


def test_spectrum_table_free_case(small):
    d, cfg = small
    rows = (d / "s.csv").read_text().splitlines()
    first = next(r for r in rows if r.startswith("1,1,"))
    assert abs(float(first.split(",")[2]) - (np.pi**2 + 2)) < 0.01 * np.pi**2


def test_testbed_export_multiplicities(tmp_path):
    cfg = REPO / "configs" / "jordan-testbed.ini"
    assert run("simulate", "-c", cfg, "-o", tmp_path / "tb.bcik")[0] == 0
    code, out = run("recover-spectrum", "-c", cfg, tmp_path / "tb.bcik", "-o", tmp_path / "tb.csv")
    assert code == 0
    mult = sorted(int(line.split(",")[3]) for line in out.strip().splitlines()[1:])
    assert mult == [1, 2, 3]


def test_oracle_subcommand(tmp_path):
    code, out = run("oracle", "--n-x", "48", "--modes", "5", "-o", tmp_path / "o.csv")
    assert code == 0
    lam = [float(line.split(",")[1]) for line in out.strip().splitlines()[1:]]
    assert np.allclose(lam, (np.arange(1, 6) * np.pi) ** 2, rtol=1e-8)


def test_verify_reports_failures(monkeypatch):
    fail = acceptance.CriterionResult("x", "always fails", False, [("v", 1.0, "<", 0.5, False)])
    monkeypatch.setitem(acceptance.CRITERIA, "1", lambda: fail)
    monkeypatch.setitem(acceptance.PRESETS, "jordan-testbed", ["1"])
    code, out = run("verify", "--preset", "jordan-testbed")
    assert code == 5
    assert "failed criteria: x" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bcinverse", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "recover-spectrum", "reconstruct", "verify", "oracle"):
        assert sub in proc.stdout
