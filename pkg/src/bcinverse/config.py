"""Run configuration: sectioned key-value files with a typed schema.

Files use INI syntax (``configparser``).  Unknown sections or keys are
rejected, values are coerced to the schema type, and the canonical
serialization of the physical and numerical settings is hashed so every
artifact can be traced to the configuration that produced it.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .validation import ValidationError

__all__ = ["SCHEMA", "SCHEMA_VERSION", "RunConfig", "load_config", "default_config"]

SCHEMA_VERSION = 1

# section -> key -> (type, default)
SCHEMA = {
    "problem": {
        "N": (int, 1),
        "ell": (float, 1.0),
        "potential": (str, "zero"),
        "testbed": (str, ""),
        "seed": (int, 0),
    },
    "discretization": {
        "scheme": (str, "chebyshev"),
        "n_x": (int, 400),
        "n_t": (int, 1600),
        "T": (float, 0.06),
        "M": (int, 300),
        "derivative": (str, "tustin"),
        "K": (int, 30),
        "n_T": (int, 200),
        "steps_per_T": (int, 2),
    },
    "solver": {
        "rank_tol": (float, 1e-12),
        "residual_tol": (float, 1e-5),
        "pair_tol": (float, 1e-4),
        "cluster_tol": (float, 1e-7),
        "null_tol": (float, 1e-6),
        "chain_tol": (float, 1e-4),
        "refine_check": (bool, True),
        "refine_tol": (float, 1e-3),
        "tail": (bool, True),
        "stencil_len": (int, 8),
        "sg_window": (int, 9),
        "sg_degree": (int, 4),
        "det_threshold": (float, 1e-6),
        "max_masked_fraction": (float, 0.2),
        "noise": (float, 0.0),
        "threads": (int, 0),
    },
    "output": {
        "dir": (str, "."),
        "kernel_format": (str, "binary"),
    },
}

# settings that do not change numerical results stay out of the hash
_UNHASHED = {("output", "dir"), ("output", "kernel_format"), ("solver", "threads")}

_POSITIVE = {
    ("problem", "ell"), ("problem", "N"), ("discretization", "n_x"), ("discretization", "n_t"),
    ("discretization", "T"), ("discretization", "M"), ("discretization", "n_T"),
    ("discretization", "steps_per_T"), ("solver", "rank_tol"), ("solver", "residual_tol"),
    ("solver", "pair_tol"), ("solver", "cluster_tol"), ("solver", "null_tol"), ("solver", "chain_tol"),
    ("solver", "refine_tol"), ("solver", "det_threshold"), ("solver", "max_masked_fraction"),
    ("solver", "stencil_len"), ("solver", "sg_window"),
}


def _coerce(typ, raw, where):
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError as exc:
        raise ValidationError(f"{where}: cannot parse {text!r} as {typ.__name__}") from exc


@dataclass
class RunConfig:
    """Resolved configuration values, ``values[section][key]``."""

    values: dict = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, section):
        return self.values[section]

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ValidationError(f"unknown setting [{section}] {key}")
        typ, _ = SCHEMA[section][key]
        self.values[section][key] = _coerce(typ, value, f"[{section}] {key}")
        self.validate()

    def validate(self):
        for sec, key in _POSITIVE:
            if not self.values[sec][key] > 0:
                raise ValidationError(f"[{sec}] {key} must be positive, got {self.values[sec][key]!r}")
        if self.values["discretization"]["scheme"] not in ("chebyshev", "fd2"):
            raise ValidationError("[discretization] scheme must be chebyshev or fd2")
        if self.values["discretization"]["derivative"] not in ("tustin", "analytic"):
            raise ValidationError("[discretization] derivative must be tustin or analytic")
        if self.values["output"]["kernel_format"] not in ("binary", "csv"):
            raise ValidationError("[output] kernel_format must be binary or csv")
        pot = self.values["problem"]["potential"]
        if pot and not _is_preset(pot) and not self.values["problem"]["testbed"]:
            path = Path(pot) if Path(pot).is_absolute() or self.source is None else Path(self.source).parent / pot
            if not path.exists():
                raise FileNotFoundError(str(path))
        return self

    def potential_path(self):
        pot = self.values["problem"]["potential"]
        if _is_preset(pot):
            return None
        p = Path(pot)
        return p if p.is_absolute() or self.source is None else Path(self.source).parent / p

    def canonical(self):
        """Stable text form of the hashed settings."""
        lines = [f"schema={SCHEMA_VERSION}"]
        for sec in sorted(SCHEMA):
            for key in sorted(SCHEMA[sec]):
                if (sec, key) in _UNHASHED:
                    continue
                v = self.values[sec][key]
                lines.append(f"{sec}.{key}={repr(v) if isinstance(v, float) else v}")
        return "\n".join(lines)

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def dump(self, path=None):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["meta"] = {"schema": str(SCHEMA_VERSION)}
        for sec in SCHEMA:
            cp[sec] = {k: str(v) for k, v in self.values[sec].items()}
        if path is None:
            import io

            buf = io.StringIO()
            cp.write(buf)
            return buf.getvalue()
        with Path(path).open("w") as fh:
            cp.write(fh)
        return None


def _is_preset(name):
    head = name.split(":", 1)[0]
    return head in ("zero", "shift", "nonsym2x2")


def default_config():
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def load_config(path=None, overrides=None):
    """Read a config file (optional) and apply ``overrides`` ``{"section.key": value}``.

    Raises
    ------
    FileNotFoundError
        Missing config file or missing potential file.
    ValidationError
        Unknown keys, bad types, non-positive tolerances or an unsupported schema.
    """
    cfg = default_config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(str(path))
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read(path)
        cfg.source = str(path)
        for sec in cp.sections():
            if sec == "meta":
                ver = int(cp[sec].get("schema", SCHEMA_VERSION))
                if ver > SCHEMA_VERSION:
                    raise ValidationError(f"config schema {ver} is newer than supported {SCHEMA_VERSION}")
                continue
            if sec not in SCHEMA:
                raise ValidationError(f"unknown config section [{sec}]")
            for key, raw in cp[sec].items():
                if key not in SCHEMA[sec]:
                    raise ValidationError(f"unknown key [{sec}] {key}")
                typ, _ = SCHEMA[sec][key]
                cfg.values[sec][key] = _coerce(typ, raw, f"[{sec}] {key}")
    for dotted, raw in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ValidationError(f"unknown setting {dotted}")
        typ, _ = SCHEMA[sec][key]
        cfg.values[sec][key] = _coerce(typ, raw, dotted)
    return cfg.validate()
