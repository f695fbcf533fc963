"""Command-line entry point ``bcinverse``.

Each subcommand reads a sectioned config file (``--config``), applies flag
overrides, runs one pipeline stage and writes its artifact plus a report
(``<artifact>.report``).  Reports chain: a stage copies the sections of the
report next to its input and adds its own.

Exit codes
----------
0  success
1  invalid input (bad config value, malformed artifact, config hash mismatch)
2  missing file
3  kernel horizon shorter than ``2T``
4  reconstruction unreliable (masked fraction above the limit)
5  ``verify``: one or more acceptance criteria failed
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import SCHEMA, load_config
from .formats import (read_kernel, read_report, read_spectral_csv, write_kernel, write_recovered_csv,
                      write_report, write_spectral_csv)
from .pipeline import HorizonError, recover_spectrum, reconstruct, simulate
from .validation import ValidationError

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INVALID", "EXIT_MISSING", "EXIT_HORIZON",
           "EXIT_UNRELIABLE", "EXIT_FAILED"]

EXIT_OK, EXIT_INVALID, EXIT_MISSING, EXIT_HORIZON, EXIT_UNRELIABLE, EXIT_FAILED = 0, 1, 2, 3, 4, 5

# flag -> config key; ``--set section.key=value`` covers everything else
_SHORTCUTS = {
    "potential": "problem.potential",
    "N": "problem.N",
    "ell": "problem.ell",
    "testbed": "problem.testbed",
    "seed": "problem.seed",
    "scheme": "discretization.scheme",
    "n_x": "discretization.n_x",
    "n_t": "discretization.n_t",
    "T": "discretization.T",
    "M": "discretization.M",
    "K": "discretization.K",
    "n_T": "discretization.n_T",
    "noise": "solver.noise",
    "threads": "solver.threads",
}


class HashMismatch(ValidationError):
    """Artifact produced under a different configuration."""


def _report_path(path):
    return Path(str(path) + ".report")


def _overrides(args):
    out = {}
    for item in args.set or []:
        key, eq, val = item.partition("=")
        if not eq:
            raise ValidationError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = val.strip()
    for flag, key in _SHORTCUTS.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    return out


def _config(args):
    return load_config(args.config, _overrides(args))


def _check_hash(meta, cfg, what):
    got = meta.get("config_hash")
    if not got:
        raise HashMismatch(f"{what} carries no config hash")
    if got != cfg.hash:
        raise HashMismatch(f"{what} was produced with config {got[:12]}, current config is {cfg.hash[:12]}")


def _previous_report(path):
    p = _report_path(path)
    return read_report(p) if p.exists() else {}


def _threads(cfg):
    n = cfg["solver"]["threads"]
    if n <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _config_section(cfg):
    return {"config_hash": cfg.hash, "source": cfg.source or "<defaults>"}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args, out):
    cfg = _config(args)
    with _threads(cfg):
        res = simulate(cfg)
    path = Path(args.output)
    write_kernel(path, res.value, res.meta)
    sections = {"config": _config_section(cfg),
                "simulate": {**res.meta, "T": cfg["discretization"]["T"],
                             "horizon": res.value.grid.T, "n_t": res.value.grid.n,
                             "runtime_s": f"{res.runtime:.3f}", "output": path}}
    write_report(_report_path(path), sections)
    print(f"kernel {path} ({res.value.matrix.shape[0]} x {res.value.matrix.shape[1]}), "
          f"acausal mass {res.meta['acausal_mass']}", file=out)
    return EXIT_OK


def _spectrum_table(sd):
    rows = [("k", "re_lambda", "im_lambda", "L")]
    rows += [(str(k), repr(r.lam.real), repr(r.lam.imag), str(r.L)) for k, r in enumerate(sd.records, 1)]
    return rows


def cmd_recover_spectrum(args, out):
    cfg = _config(args)
    kernel, meta = read_kernel(args.kernel)
    # horizon first so a short kernel reports as such rather than as a hash mismatch
    if kernel.grid.T < 2.0 * cfg["discretization"]["T"] * (1 - 1e-12):
        raise HorizonError(f"kernel horizon {kernel.grid.T} is shorter than 2T = {2 * cfg['discretization']['T']}")
    _check_hash(meta, cfg, str(args.kernel))
    with _threads(cfg):
        res = recover_spectrum(kernel, cfg, convention=meta.get("convention", "schrodinger"))
    sd = res.value
    path = Path(args.output)
    write_spectral_csv(path, sd, {"config_hash": cfg.hash, "convention": meta.get("convention", "")})
    sections = _previous_report(args.kernel) or {"config": _config_section(cfg)}
    stage = {"status": sd.status, "records": len(sd), "runtime_s": f"{res.runtime:.3f}", "output": path}
    if len(sd):
        stage["multiplicities"] = " ".join(str(int(m)) for m in sd.multiplicities)
        stage["eigenvalues"] = " ".join(f"{lam:.10g}" for lam in sd.eigenvalues)
        per = [r.diagnostics for r in sd.records if r.diagnostics]
        if per:
            stage["max_residual"] = max(d.get("residual", 0.0) for d in per)
            stage["max_biorth_error"] = max(d.get("biorth_error", 0.0) for d in per)
    else:
        stage["reason"] = sd.meta.get("reason", "no spectrum recoverable")
    for key, val in sd.meta.get("diagnostics", {}).items():
        stage[f"pencil_{key}"] = val
    sections["recover-spectrum"] = stage
    write_report(_report_path(path), sections)
    for row in _spectrum_table(sd):
        print(",".join(row), file=out)
    return EXIT_OK


def _truth_metrics(cfg, rec):
    """Error against the configured potential; runs after the reconstruction."""
    if cfg["problem"]["testbed"]:
        return {}
    from .pipeline import load_potential

    Q = load_potential(cfg)
    if Q.N != rec.N:
        return {"truth": f"dimension mismatch ({Q.N} vs {rec.N})"}
    m = rec.interior()
    err = rec.values[m] - Q(rec.x[m])
    out = {"truth": Q.name}
    if np.any(Q(rec.x[m])):
        out["interior_relative_l2"] = rec.relative_l2_error(Q)
    for i in range(rec.N):
        for j in range(rec.N):
            out[f"max_abs_error_{i + 1}{j + 1}"] = float(np.max(np.abs(err[:, i, j])))
    return out


def cmd_reconstruct(args, out):
    cfg = _config(args)
    sd, meta = read_spectral_csv(args.spectral)
    _check_hash(meta, cfg, str(args.spectral))
    with _threads(cfg):
        res = reconstruct(sd, cfg)
    rec = res.value
    path = Path(args.output)
    write_recovered_csv(path, rec, {"config_hash": cfg.hash})
    sections = _previous_report(args.spectral) or {"config": _config_section(cfg)}
    stage = {k: v for k, v in rec.report.items()}
    stage.update(runtime_s=f"{res.runtime:.3f}", output=path, interior_max_abs=rec.max_abs())
    if not args.no_truth:
        stage.update(_truth_metrics(cfg, rec))
    sections["reconstruct"] = stage
    write_report(_report_path(path), sections)
    frac = rec.report["masked_fraction"]
    print(f"recovered {path}: {rec.x.size} points, masked {frac:.1%}, status {rec.report['status']}", file=out)
    if "interior_relative_l2" in stage:
        print(f"interior relative L2 error {stage['interior_relative_l2']:.4g}", file=out)
    if frac > cfg["solver"]["max_masked_fraction"]:
        print(f"unreliable: {frac:.1%} of the grid is masked", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


def cmd_verify(args, out):
    from .acceptance import PRESETS, run_criteria

    cfg = load_config(args.config, _overrides(args)) if (args.config or args.threads) else None
    with _threads(cfg) if cfg is not None else nullcontext():
        results = run_criteria(PRESETS[args.preset], stream=out)
    failed = [r.key for r in results if not r.passed]
    if args.report:
        write_report(args.report, {f"criterion {r.key}": {
            "title": r.title, "passed": r.passed, "runtime_s": f"{r.runtime:.3f}",
            **{lab: val for lab, val, *_ in r.checks}, "notes": r.notes} for r in results})
    if failed:
        print("failed criteria: " + ", ".join(failed), file=out)
        return EXIT_FAILED
    print(f"all {len(results)} criteria passed", file=out)
    return EXIT_OK


def cmd_oracle(args, out):
    from .pipeline import load_potential
    from .schrodinger_forward import dirichlet_spectrum_oracle

    cfg = _config(args)
    d = cfg["discretization"]
    Q = load_potential(cfg)
    with _threads(cfg):
        sd = dirichlet_spectrum_oracle(Q, args.modes, d["scheme"], d["n_x"], cfg["solver"]["cluster_tol"])
    path = Path(args.output)
    write_spectral_csv(path, sd, {"config_hash": cfg.hash, "source": f"oracle:{Q.name}"})
    write_report(_report_path(path), {"config": _config_section(cfg),
                                      "oracle": {"records": len(sd), "modes": args.modes, "output": path}})
    for row in _spectrum_table(sd):
        print(",".join(row), file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("-c", "--config", help="sectioned key-value config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config key")
    types = {sec_key: SCHEMA[sec_key.split(".")[0]][sec_key.split(".")[1]][0] for sec_key in _SHORTCUTS.values()}
    for flag, key in _SHORTCUTS.items():
        typ = types[key]
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ, default=None,
                       help=f"override {key}")


def build_parser():
    ap = argparse.ArgumentParser(prog="bcinverse",
                                 description="Boundary-control recovery of matrix Schrodinger potentials.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a response kernel")
    _common(p)
    p.add_argument("-o", "--output", default="kernel.bcik", help="kernel file (.csv for text)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover-spectrum", help="spectral data from a kernel file")
    _common(p)
    p.add_argument("kernel")
    p.add_argument("-o", "--output", default="spectral.csv")
    p.set_defaults(func=cmd_recover_spectrum)

    p = sub.add_parser("reconstruct", help="potential from a spectral data file")
    _common(p)
    p.add_argument("spectral")
    p.add_argument("-o", "--output", default="recovered.csv")
    p.add_argument("--no-truth", action="store_true", help="skip the comparison with the configured potential")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", help="run acceptance criteria")
    _common(p)
    p.add_argument("--preset", default="all", choices=["zero", "shift", "nonsym2x2", "jordan-testbed", "all"])
    p.add_argument("--report", help="write a sectioned report of all checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="reference spectral data of the configured potential")
    _common(p)
    p.add_argument("--modes", type=int, default=40)
    p.add_argument("-o", "--output", default="oracle.csv")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except HorizonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
