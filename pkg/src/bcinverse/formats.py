"""Readers and writers for every on-disk artifact.

All text formats start with ``#`` provenance lines (``# key=value``) followed
by a CSV header.  Floats are written with ``repr`` so that every value
round-trips bit-exactly.  See ``FORMATS.md`` for the layouts.
"""

from __future__ import annotations

import configparser
import csv
import io
import struct
from pathlib import Path

import numpy as np

from .abstract_system import ResponseKernel
from .grids import TimeGrid
from .spectral_recovery import SpectralData, SpectralRecord
from .validation import ValidationError

__all__ = [
    "KERNEL_MAGIC",
    "FormatError",
    "write_kernel_binary",
    "read_kernel_binary",
    "write_kernel_csv",
    "read_kernel_csv",
    "write_kernel",
    "read_kernel",
    "write_spectral_csv",
    "read_spectral_csv",
    "write_potential_csv",
    "read_potential_csv",
    "write_recovered_csv",
    "read_recovered_csv",
    "write_report",
    "read_report",
]

KERNEL_MAGIC = b"BCIK"
_HEADER = struct.Struct("<4sIIi")  # magic, rows, cols, config-hash prefix
SPECTRAL_VERSION = 1
KERNEL_VERSION = 1
RECOVERED_VERSION = 1


class FormatError(ValidationError):
    """Malformed or inconsistent artifact."""


def _fmt(v):
    return repr(float(v))


def _write_meta(fh, kind, meta):
    fh.write(f"# bcinverse {kind}\n")
    for k in sorted(meta):
        fh.write(f"# {k}={meta[k]}\n")


def _split_meta(text):
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, eq, val = line[1:].strip().partition("=")
            if eq:
                meta[key.strip()] = val.strip()
            else:
                meta.setdefault("_kind", key.strip())
        elif line.strip():
            body.append(line)
    return meta, body


def _hash_prefix(config_hash):
    if not config_hash:
        return 0
    return struct.unpack("<i", bytes.fromhex(config_hash[:8]))[0]


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def _sidecar(path):
    return Path(str(path) + ".meta")


def write_kernel_binary(path, kernel, meta=None):
    """Dense little-endian binary with a 16-byte header and a key-value sidecar.

    Header: ``b"BCIK"``, ``uint32 rows``, ``uint32 cols``, ``int32`` holding the
    first 32 bits of the config hash (0 when absent).  Payload: row-major
    ``float64`` pairs ``(re, im)`` per entry.  Grid and block size live in the
    ``<path>.meta`` sidecar.
    """
    meta = dict(meta or {})
    M = np.ascontiguousarray(kernel.matrix, dtype="<c16")
    rows, cols = M.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(KERNEL_MAGIC, rows, cols, _hash_prefix(meta.get("config_hash", ""))))
        fh.write(M.view("<f8").tobytes(order="C"))
    side = {"format": f"bcik-v{KERNEL_VERSION}", "T": _fmt(kernel.grid.T), "n": kernel.grid.n,
            "dim_Y": kernel.dim_Y, **meta}
    with _sidecar(path).open("w") as fh:
        _write_meta(fh, "kernel-meta", side)


def read_kernel_binary(path):
    """Inverse of :func:`write_kernel_binary`; returns ``(kernel, meta)``."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols, prefix = _HEADER.unpack_from(raw)
    if magic != KERNEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    want = _HEADER.size + 16 * rows * cols
    if len(raw) != want:
        raise FormatError(f"{path}: expected {want} bytes, found {len(raw)}")
    side = _sidecar(path)
    if not side.exists():
        raise FileNotFoundError(str(side))
    meta, _ = _split_meta(side.read_text())
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).view("<c16").reshape(rows, cols)
    if meta.get("config_hash") and _hash_prefix(meta["config_hash"]) != prefix:
        raise FormatError(f"{path}: header hash prefix disagrees with sidecar")
    grid = TimeGrid(float(meta["T"]), int(meta["n"]))
    return ResponseKernel(grid, data.astype(complex), int(meta["dim_Y"])), meta


def write_kernel_csv(path, kernel, meta=None):
    """Sparse ``i,j,re,im`` listing of the nonzero entries."""
    meta = dict(meta or {})
    M = kernel.matrix
    ii, jj = np.nonzero(M)
    with Path(path).open("w", newline="") as fh:
        _write_meta(fh, "kernel", {"format": f"bcik-csv-v{KERNEL_VERSION}", "T": _fmt(kernel.grid.T),
                                   "n": kernel.grid.n, "dim_Y": kernel.dim_Y, "rows": M.shape[0], **meta})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "re", "im"])
        for i, j in zip(ii, jj):
            v = M[i, j]
            w.writerow([i, j, _fmt(v.real), _fmt(v.imag)])


def read_kernel_csv(path):
    meta, body = _split_meta(Path(path).read_text())
    if not body or body[0].replace(" ", "") != "i,j,re,im":
        raise FormatError(f"{path}: missing i,j,re,im header")
    rows = int(meta["rows"])
    M = np.zeros((rows, rows), complex)
    for line in body[1:]:
        i, j, re, im = line.split(",")
        M[int(i), int(j)] = complex(float(re), float(im))
    grid = TimeGrid(float(meta["T"]), int(meta["n"]))
    return ResponseKernel(grid, M, int(meta["dim_Y"])), meta


def write_kernel(path, kernel, meta=None):
    """Dispatch on the suffix: ``.csv`` for text, anything else binary."""
    (write_kernel_csv if str(path).endswith(".csv") else write_kernel_binary)(path, kernel, meta)


def read_kernel(path):
    if not Path(path).exists():
        raise FileNotFoundError(str(path))
    return (read_kernel_csv if str(path).endswith(".csv") else read_kernel_binary)(path)


# ---------------------------------------------------------------------------
# spectral data
# ---------------------------------------------------------------------------


def _spectral_columns(N):
    cols = ["k", "l", "re_lambda", "im_lambda", "L"]
    for nm in ("phi", "psi"):
        cols += [f"re_{nm}_{a + 1}" for a in range(N)] + [f"im_{nm}_{a + 1}" for a in range(N)]
    return cols


def write_spectral_csv(path, data, meta=None):
    """One row per chain member ``(k, l)``; ``phi``/``psi`` columns hold ``Phi``/``Psi``."""
    N = data.dim_Y
    m = {"format": f"spectral-v{SPECTRAL_VERSION}", "dim_Y": N, "status": data.status,
         "records": len(data), **(meta or {})}
    with Path(path).open("w", newline="") as fh:
        _write_meta(fh, "spectral", m)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_spectral_columns(N))
        for k, r in enumerate(data.records, start=1):
            for l in range(r.L):
                row = [k, l + 1, _fmt(r.lam.real), _fmt(r.lam.imag), r.L]
                for arr in (r.Phi[l], r.Psi[l]):
                    row += [_fmt(v.real) for v in arr] + [_fmt(v.imag) for v in arr]
                w.writerow(row)


def read_spectral_csv(path):
    meta, body = _split_meta(Path(path).read_text())
    fmt = meta.get("format", "")
    if not fmt.startswith("spectral-v"):
        raise FormatError(f"{path}: not a spectral data file")
    if int(fmt.split("v")[-1]) > SPECTRAL_VERSION:
        raise FormatError(f"{path}: unsupported version {fmt}")
    N = int(meta["dim_Y"])
    cols = _spectral_columns(N)
    if not body or body[0].split(",") != cols:
        raise FormatError(f"{path}: unexpected column header")
    rows = {}
    for line in body[1:]:
        v = line.split(",")
        k, l, L = int(v[0]), int(v[1]), int(v[4])
        lam = complex(float(v[2]), float(v[3]))
        nums = [float(x) for x in v[5:]]
        phi = np.array(nums[:N]) + 1j * np.array(nums[N:2 * N])
        psi = np.array(nums[2 * N:3 * N]) + 1j * np.array(nums[3 * N:])
        rec = rows.setdefault(k, {"lam": lam, "L": L, "Phi": {}, "Psi": {}})
        rec["Phi"][l], rec["Psi"][l] = phi, psi
    records = []
    for k in sorted(rows):
        r = rows[k]
        if sorted(r["Phi"]) != list(range(1, r["L"] + 1)):
            raise FormatError(f"{path}: record {k} has incomplete chain")
        records.append(SpectralRecord(r["lam"], r["L"], np.array([r["Phi"][l] for l in range(1, r["L"] + 1)]),
                                      np.array([r["Psi"][l] for l in range(1, r["L"] + 1)])))
    sd = SpectralData(records, N, {k: v for k, v in meta.items() if not k.startswith("_")},
                      status=meta.get("status", "ok"))
    return sd, meta


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def _entry_columns(N):
    return [f"entry_{i + 1}{j + 1}" for i in range(N) for j in range(N)]


def write_potential_csv(path, x, values, meta=None):
    """``x,entry_11,...,entry_NN`` per node (row-major entries)."""
    values = np.asarray(values, float)
    N = values.shape[1]
    with Path(path).open("w", newline="") as fh:
        _write_meta(fh, "potential", {"format": "potential-v1", "N": N, **(meta or {})})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + _entry_columns(N))
        for xi, q in zip(x, values):
            w.writerow([_fmt(xi)] + [_fmt(v) for v in q.ravel()])


def read_potential_csv(path):
    """Return ``(x, values)``; ``x`` must be a uniform grid starting at 0."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    meta, body = _split_meta(path.read_text())
    head = body[0].split(",") if body else []
    if not head or head[0] != "x":
        raise FormatError(f"{path}: missing x,entry_... header")
    n_ent = len(head) - 1
    N = int(round(np.sqrt(n_ent)))
    if N * N != n_ent or head[1:] != _entry_columns(N):
        raise FormatError(f"{path}: entry columns do not form a square matrix")
    arr = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
    x, vals = arr[:, 0], arr[:, 1:].reshape(-1, N, N)
    h = np.diff(x)
    if x[0] != 0.0 or not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise FormatError(f"{path}: x must be a uniform grid starting at 0")
    return x, vals, meta


def write_recovered_csv(path, rec, meta=None):
    """``x,entry_11..,masked,det_M,residual`` on the reconstruction grid."""
    N = rec.N
    m = {"format": f"recovered-v{RECOVERED_VERSION}", "N": N, "ell": _fmt(rec.ell),
         "reliable": rec.reliable, **(meta or {})}
    with Path(path).open("w", newline="") as fh:
        _write_meta(fh, "recovered", m)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + _entry_columns(N) + ["masked", "det_M", "residual"])
        for i in range(rec.x.size):
            w.writerow([_fmt(rec.x[i])] + [_fmt(v) for v in rec.values[i].ravel()]
                       + [int(rec.masked[i]), _fmt(abs(rec.det_M[i])), _fmt(rec.residual[i])])


def read_recovered_csv(path):
    """Return a dict of arrays (``x``, ``values``, ``masked``, ``det_M``, ``residual``) and meta."""
    meta, body = _split_meta(Path(path).read_text())
    N = int(meta["N"])
    arr = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
    return {
        "x": arr[:, 0],
        "values": arr[:, 1:1 + N * N].reshape(-1, N, N),
        "masked": arr[:, 1 + N * N].astype(bool),
        "det_M": arr[:, 2 + N * N],
        "residual": arr[:, 3 + N * N],
    }, meta


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def write_report(path, sections):
    """Sectioned key-value report (INI syntax), one section per pipeline stage."""
    cp = configparser.ConfigParser(interpolation=None)
    for name, kv in sections.items():
        cp[name] = {str(k): str(v) for k, v in kv.items()}
    buf = io.StringIO()
    cp.write(buf)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(Path(path).read_text())
    return {s: dict(cp[s]) for s in cp.sections()}
