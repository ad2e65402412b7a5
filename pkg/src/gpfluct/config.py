"""Run configuration: a YAML file of named sections, validated up front.

Every key has a documented default (see DEFAULTS); unknown sections or keys
are rejected so typos surface before any computation starts.
"""

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .scattering import Potential

QUANTITIES = ("scattering_integral", "lambda_gap", "w_deviation", "field_distance", "eta_distance",
              "G_distance", "H_distance", "d_defect")

DEFAULTS = {
    "potential": {"kind": "square_well", "v0": 2.0, "R": 1.0},
    "grid": {"L": 8.0, "M": 8},
    "physics": {"N": [25, 50, 100, 200], "ell": 0.25, "t_end": 0.5, "dt": 1.0e-3},
    "field": {"seed": 3, "max_mode": 1, "amplitude": 0.4},
    "kernels": {"t": 0.2, "tol": 1.0e-12, "nodes": 64, "s_nodes": 8},
    "theta": {"flavor": "limiting", "N": 100, "dt": 2.0e-3, "tol": 1.0e-6, "lattice": 0.05,
              "polar": False, "record_every": 25},
    "clt": {
        "observable": {"kind": "multiplication", "function": "cos", "mode": [1, 0, 0], "scale": 1.0},
        "tau": {"kind": "zero"},
        "intervals": [[-1.0, 1.0]],
        "theta_from": None,
    },
    "fock": {"m": 3, "N": [4, 6, 8, 12], "eta_norm": 0.3, "seed": 0, "weyl_s": 1.0},
    "study": {"quantity": "eta_distance"},
    "output": {"dir": "out"},
}

OBSERVABLE_FUNCTIONS = ("cos", "sin", "constant", "gaussian")


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}; expected one of {sorted(base)}")
        if isinstance(base[key], dict) and key not in ("potential", "observable", "tau"):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where!r} must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _number(raw, where, positive=False, integer=False, lo=None, hi=None):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{where} must be a number, got {raw!r}")
    if integer and (not float(raw).is_integer()):
        raise ConfigError(f"{where} must be an integer, got {raw!r}")
    value = int(raw) if integer else float(raw)
    if not math.isfinite(value):
        raise ConfigError(f"{where} must be finite, got {raw!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where} must be positive, got {raw!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{where} must be >= {lo}, got {raw!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where} must be <= {hi}, got {raw!r}")
    return value


def _int_list(raw, where, lo):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [raw]
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError(f"{where} must be a non-empty list of integers")
    values = [_number(x, where, integer=True, lo=lo) for x in raw]
    if len(set(values)) != len(values):
        raise ConfigError(f"{where} has repeated entries")
    return sorted(values)


def _mode(raw, where):
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise ConfigError(f"{where} must be three integers")
    return [_number(x, where, integer=True) for x in raw]


def _observable(section):
    if not isinstance(section, dict):
        raise ConfigError("clt.observable must be a mapping")
    kind = section.get("kind", "multiplication")
    if kind == "multiplication":
        fn = section.get("function", "cos")
        if fn not in OBSERVABLE_FUNCTIONS:
            raise ConfigError(f"clt.observable.function must be one of {OBSERVABLE_FUNCTIONS}, got {fn!r}")
        out = {"kind": kind, "function": fn, "scale": _number(section.get("scale", 1.0), "clt.observable.scale")}
        if fn in ("cos", "sin"):
            out["mode"] = _mode(section.get("mode", [1, 0, 0]), "clt.observable.mode")
        if fn == "gaussian":
            out["width"] = _number(section.get("width", 1.0), "clt.observable.width", positive=True)
        extra = set(section) - set(out)
        if extra:
            raise ConfigError(f"unexpected keys {sorted(extra)} in clt.observable")
        return out
    if kind == "finite_rank":
        out = {"kind": kind,
               "bra_mode": _mode(section.get("bra_mode", [1, 0, 0]), "clt.observable.bra_mode"),
               "ket_mode": _mode(section.get("ket_mode", [1, 0, 0]), "clt.observable.ket_mode"),
               "scale": _number(section.get("scale", 1.0), "clt.observable.scale")}
        extra = set(section) - set(out)
        if extra:
            raise ConfigError(f"unexpected keys {sorted(extra)} in clt.observable")
        return out
    raise ConfigError(f"clt.observable.kind must be 'multiplication' or 'finite_rank', got {kind!r}")


def _tau(section):
    if not isinstance(section, dict):
        raise ConfigError("clt.tau must be a mapping")
    kind = section.get("kind", "zero")
    if kind == "zero":
        out = {"kind": "zero"}
    elif kind == "separable":
        out = {"kind": kind, "lambda": _number(section.get("lambda", 0.1), "clt.tau.lambda"),
               "mode": _mode(section.get("mode", [0, 1, 0]), "clt.tau.mode")}
    elif kind == "file":
        path = section.get("path")
        if not isinstance(path, str) or not path:
            raise ConfigError("clt.tau with kind 'file' needs a 'path' to a kernel binary")
        out = {"kind": kind, "path": path}
    else:
        raise ConfigError(f"clt.tau.kind must be 'zero', 'separable' or 'file', got {kind!r}")
    extra = set(section) - set(out)
    if extra:
        raise ConfigError(f"unexpected keys {sorted(extra)} in clt.tau")
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict
    base_dir: str = "."

    def __getitem__(self, key):
        return self.data[key]

    def potential(self):
        return Potential.from_config(self.data["potential"], base_dir=self.base_dir)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def dump(self):
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)

    def with_overrides(self, overrides):
        """Apply dotted-key overrides such as {"physics.N": [25, 50]}."""
        raw = self.to_dict()
        for dotted, value in overrides.items():
            node = raw
            keys = dotted.split(".")
            for key in keys[:-1]:
                if key not in node or not isinstance(node[key], dict):
                    raise ConfigError(f"unknown config key {dotted!r}")
                node = node[key]
            if keys[-1] not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[keys[-1]] = value
        return normalize(raw, self.base_dir)


def normalize(raw, base_dir="."):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("the config file must hold a mapping of sections")
    data = _merge(DEFAULTS, raw)
    Potential.from_config(data["potential"], base_dir=base_dir)

    g = data["grid"]
    g["L"] = _number(g["L"], "grid.L", positive=True)
    g["M"] = _number(g["M"], "grid.M", integer=True, lo=8)
    if g["M"] % 2:
        raise ConfigError(f"grid.M must be even, got {g['M']}")

    p = data["physics"]
    p["N"] = _int_list(p["N"], "physics.N", lo=2)
    p["ell"] = _number(p["ell"], "physics.ell", positive=True, hi=0.5)
    if p["ell"] >= 0.5:
        raise ConfigError(f"physics.ell must lie in (0, 1/2), got {p['ell']}")
    if not g["L"] > 4.0 * p["ell"]:
        raise ConfigError(f"grid.L = {g['L']} must exceed 4 * physics.ell = {4.0 * p['ell']}")
    p["t_end"] = _number(p["t_end"], "physics.t_end", lo=0.0)
    p["dt"] = _number(p["dt"], "physics.dt", positive=True)

    f = data["field"]
    f["seed"] = _number(f["seed"], "field.seed", integer=True, lo=0)
    f["max_mode"] = _number(f["max_mode"], "field.max_mode", integer=True, lo=0)
    f["amplitude"] = _number(f["amplitude"], "field.amplitude", lo=0.0)

    k = data["kernels"]
    k["t"] = _number(k["t"], "kernels.t", lo=0.0)
    k["tol"] = _number(k["tol"], "kernels.tol", lo=1e-14, hi=1e-8)
    k["nodes"] = _number(k["nodes"], "kernels.nodes", integer=True, lo=8)
    k["s_nodes"] = _number(k["s_nodes"], "kernels.s_nodes", integer=True, lo=4)

    th = data["theta"]
    if th["flavor"] not in ("limiting", "finite_N"):
        raise ConfigError(f"theta.flavor must be 'limiting' or 'finite_N', got {th['flavor']!r}")
    th["N"] = _number(th["N"], "theta.N", integer=True, lo=2)
    th["dt"] = _number(th["dt"], "theta.dt", positive=True)
    th["tol"] = _number(th["tol"], "theta.tol", positive=True)
    th["lattice"] = _number(th["lattice"], "theta.lattice", positive=True)
    if not isinstance(th["polar"], bool):
        raise ConfigError(f"theta.polar must be true or false, got {th['polar']!r}")
    th["record_every"] = _number(th["record_every"], "theta.record_every", integer=True, lo=0)

    c = data["clt"]
    c["observable"] = _observable(c["observable"])
    c["tau"] = _tau(c["tau"])
    if not isinstance(c["intervals"], (list, tuple)):
        raise ConfigError("clt.intervals must be a list of [a, b] pairs")
    intervals = []
    for pair in c["intervals"]:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"clt.intervals entries must be [a, b] pairs, got {pair!r}")
        a, b = (_number(x, "clt.intervals") for x in pair)
        if a > b:
            raise ConfigError(f"clt.intervals entry [{a}, {b}] has a > b")
        intervals.append([a, b])
    c["intervals"] = intervals
    if c["theta_from"] is not None and not isinstance(c["theta_from"], str):
        raise ConfigError("clt.theta_from must be a path prefix or null")

    fk = data["fock"]
    fk["m"] = _number(fk["m"], "fock.m", integer=True, lo=1)
    fk["N"] = _int_list(fk["N"], "fock.N", lo=1)
    fk["eta_norm"] = _number(fk["eta_norm"], "fock.eta_norm", lo=0.0, hi=1.0)
    fk["seed"] = _number(fk["seed"], "fock.seed", integer=True, lo=0)
    fk["weyl_s"] = _number(fk["weyl_s"], "fock.weyl_s")

    q = data["study"]["quantity"]
    if q not in QUANTITIES:
        raise ConfigError(f"study.quantity must be one of {QUANTITIES}, got {q!r}")
    if not isinstance(data["output"]["dir"], str) or not data["output"]["dir"]:
        raise ConfigError("output.dir must be a non-empty path")
    return RunConfig(data, str(base_dir))


def load_config(path=None):
    """Parse and validate a YAML config; None gives the documented defaults."""
    if path is None:
        return normalize({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return normalize(raw, path.parent)
