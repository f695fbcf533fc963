import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bcinverse.abstract_system import ResponseKernel
from bcinverse.config import default_config, load_config
from bcinverse.formats import (FormatError, read_kernel, read_potential_csv, read_recovered_csv, read_spectral_csv,
                               write_kernel, write_potential_csv, write_recovered_csv, write_spectral_csv)
from bcinverse.grids import TimeGrid
from bcinverse.schrodinger_forward import free_spectral_data
from bcinverse.spectral_recovery import SpectralData, SpectralRecord
from bcinverse.validation import ValidationError
from bcinverse.wave_reconstruction import ReconstructionConfig, recover_potential

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
HASH = "ab" * 32


def _kernel(vals, d):
    n = vals.shape[0] // d - 1
    M = np.tril(vals)
    return ResponseKernel(TimeGrid(0.25, n), M, d)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(re=hnp.arrays(np.float64, (6, 6), elements=finite), im=hnp.arrays(np.float64, (6, 6), elements=finite),
       ext=st.sampled_from([".bcik", ".csv"]))
def test_kernel_round_trip_bit_exact(tmp_path, re, im, ext):
    K = _kernel(re + 1j * im, 2)
    path = tmp_path / f"k{ext}"
    write_kernel(path, K, {"config_hash": HASH, "convention": "abstract"})
    K2, meta = read_kernel(path)
    assert K2.matrix.tobytes() == K.matrix.astype(complex).tobytes()
    assert K2.grid == K.grid and K2.dim_Y == 2
    assert meta["config_hash"] == HASH


def test_kernel_header_hash_checked(tmp_path):
    K = _kernel(np.ones((4, 4)), 1)
    path = tmp_path / "k.bcik"
    write_kernel(path, K, {"config_hash": HASH})
    side = path.with_name("k.bcik.meta")
    side.write_text(side.read_text().replace(HASH, "cd" * 32))
    with pytest.raises(FormatError):
        read_kernel(path)


def test_kernel_bad_magic_and_missing(tmp_path):
    path = tmp_path / "k.bcik"
    path.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(FormatError):
        read_kernel(path)
    with pytest.raises(FileNotFoundError):
        read_kernel(tmp_path / "absent.bcik")


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(lams=st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                     min_size=1, max_size=5),
       L=st.integers(1, 3), N=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_spectral_round_trip_bit_exact(tmp_path, lams, L, N, seed):
    rng = np.random.default_rng(seed)
    recs = [SpectralRecord(complex(l), L, rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N)),
                           rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))) for l in lams]
    sd = SpectralData(recs, N, {})
    path = tmp_path / "s.csv"
    write_spectral_csv(path, sd, {"config_hash": HASH})
    sd2, meta = read_spectral_csv(path)
    assert meta["config_hash"] == HASH
    for a, b in zip(sd.records, sd2.records):
        assert a.lam == b.lam and a.L == b.L
        assert np.array_equal(a.Phi, b.Phi) and np.array_equal(a.Psi, b.Psi)


def test_spectral_empty_table(tmp_path):
    path = tmp_path / "s.csv"
    write_spectral_csv(path, SpectralData([], 1, {}, status="empty"))
    sd, meta = read_spectral_csv(path)
    assert len(sd) == 0 and meta["status"] == "empty"


def test_potential_csv_round_trip_and_uniform_check(tmp_path):
    x = np.linspace(0, 1, 11)
    vals = np.stack([np.array([[xi, 1.0], [-xi, 2.0]]) for xi in x])
    path = tmp_path / "q.csv"
    write_potential_csv(path, x, vals)
    x2, v2, _ = read_potential_csv(path)
    assert np.array_equal(x2, x) and np.array_equal(v2, vals)
    bad = tmp_path / "bad.csv"
    write_potential_csv(bad, x**2, vals)
    with pytest.raises(FormatError):
        read_potential_csv(bad)


def test_recovered_csv(tmp_path):
    rec = recover_potential(free_spectral_data(30, 1.0, 1), ReconstructionConfig(n_T=20))
    path = tmp_path / "r.csv"
    write_recovered_csv(path, rec, {"config_hash": HASH})
    out, meta = read_recovered_csv(path)
    assert np.array_equal(out["x"], rec.x) and np.array_equal(out["values"], rec.values)
    assert meta["config_hash"] == HASH


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_defaults_and_hash_stability():
    a, b = default_config(), default_config()
    assert a.hash == b.hash
    b.set("discretization", "K", 20)
    assert a.hash != b.hash
    c = default_config()
    c.set("solver", "threads", 4)
    assert c.hash == a.hash  # thread count does not change results


def test_file_and_overrides(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[problem]\nN = 2\npotential = shift:1\n[discretization]\nn_x = 64\n")
    cfg = load_config(p, {"discretization.n_x": "32"})
    assert cfg["problem"]["N"] == 2 and cfg["discretization"]["n_x"] == 32
    cfg.dump(tmp_path / "copy.ini")
    assert load_config(tmp_path / "copy.ini").hash == cfg.hash


@pytest.mark.parametrize("text", [
    "[problem]\nbogus = 1\n",
    "[nosection]\nx = 1\n",
    "[solver]\nrank_tol = -1\n",
    "[discretization]\nn_x = many\n",
    "[discretization]\nscheme = spectral\n",
    "[meta]\nschema = 99\n",
])
def test_invalid_config_rejected(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ValidationError):
        load_config(p)


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.ini")
    p = tmp_path / "run.ini"
    p.write_text("[problem]\npotential = q_missing.csv\n")
    with pytest.raises(FileNotFoundError):
        load_config(p)
