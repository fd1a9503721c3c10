"""Run configuration: JSON schema validation and defaults."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError, SchemaViolation
from .forcing import FIELDS, MacroForcing, Profile

DEFAULTS = {
    "geometry": {"h_cell": 0.05, "params": {}},
    "material": {},
    "macro": {"sigma": [0.0, 1.0], "n_nodes": 161, "dirichlet": "a", "T": 1.0, "dt": None,
              "coefficients": None},
    "forcing": {},
    "micro": {"eps": [0.25, 0.125, 0.0625], "dt": None, "forcing": None},
    "check": {"coefficient_overrides": {}, "micro_h_cell": 0.5, "micro_eps": 0.25,
              "micro_steps": 50},
    "output": "out",
    "tol": 1e-10,
    "deterministic": True,
}

_ALLOWED = {
    "geometry": {"family", "params", "h_cell"},
    "material": {"lambda", "mu", "voigt"},
    "macro": {"sigma", "n_nodes", "dirichlet", "T", "dt", "coefficients"},
    "micro": {"eps", "dt", "forcing"},
    "check": {"coefficient_overrides", "micro_h_cell", "micro_eps", "micro_steps"},
}


@dataclass
class RunSpec:
    """Validated configuration with every default filled in."""

    data: dict
    source: str | None = None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def geometry(self) -> dict:
        return self.data["geometry"]

    @property
    def material(self) -> dict:
        return self.data["material"]

    @property
    def macro(self) -> dict:
        return self.data["macro"]

    @property
    def micro(self) -> dict:
        return self.data["micro"]

    @property
    def tol(self) -> float:
        return self.data["tol"]

    @property
    def output(self) -> str:
        return self.data["output"]

    def forcing(self) -> MacroForcing:
        return MacroForcing.from_dict(self.data["forcing"], tuple(self.macro["sigma"]))

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _check_keys(block: dict, allowed: set, path: str) -> None:
    if not isinstance(block, dict):
        raise SchemaViolation(f"{path}: expected an object")
    extra = sorted(set(block) - allowed)
    if extra:
        raise SchemaViolation(f"{path}.{extra[0]}: unknown field")


def _positive(value, path: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise SchemaViolation(f"{path}: expected a number") from None
    if not v > 0:
        raise SchemaViolation(f"{path}: must be positive")
    return v


def validate(raw: dict) -> RunSpec:
    """Check the structure of ``raw`` and fill defaults."""
    if not isinstance(raw, dict):
        raise SchemaViolation("config: expected a JSON object")
    _check_keys(raw, set(DEFAULTS), "config")
    for block in ("geometry", "material"):
        if block not in raw:
            raise SchemaViolation(f"{block}: required block missing")
    data = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key in _ALLOWED:
            _check_keys(value, _ALLOWED[key], key)
            data[key].update(copy.deepcopy(value))
        elif key == "forcing":
            _check_keys(value, set(FIELDS), "forcing")
            data["forcing"] = copy.deepcopy(value)
        else:
            data[key] = value

    geo = data["geometry"]
    if "family" not in geo:
        raise SchemaViolation("geometry.family: required field missing")
    geo["h_cell"] = _positive(geo["h_cell"], "geometry.h_cell")
    mat = data["material"]
    if "voigt" in mat:
        if "lambda" in mat or "mu" in mat:
            raise SchemaViolation("material: give either voigt or lambda/mu")
    elif not {"lambda", "mu"} <= set(mat):
        raise SchemaViolation("material: lambda and mu (or voigt) are required")

    mac = data["macro"]
    sigma = mac["sigma"]
    if not isinstance(sigma, (list, tuple)) or len(sigma) != 2 or not float(sigma[1]) > float(sigma[0]):
        raise SchemaViolation("macro.sigma: expected [a, b] with a < b")
    mac["sigma"] = [float(sigma[0]), float(sigma[1])]
    mac["T"] = _positive(mac["T"], "macro.T")
    mac["dt"] = mac["T"] / 100 if mac["dt"] is None else _positive(mac["dt"], "macro.dt")
    if mac["dirichlet"] not in ("a", "b"):
        raise SchemaViolation("macro.dirichlet: expected 'a' or 'b'")
    if int(mac["n_nodes"]) < 3:
        raise SchemaViolation("macro.n_nodes: at least 3 nodes are required")
    mac["n_nodes"] = int(mac["n_nodes"])

    for name, prof in data["forcing"].items():
        Profile.from_dict(prof, f"forcing.{name}")
    mic = data["micro"]
    eps = mic["eps"]
    if isinstance(eps, (int, float)):
        eps = [eps]
    eps = [_positive(e, "micro.eps") for e in eps]
    if not eps:
        raise SchemaViolation("micro.eps: at least one value is required")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise SchemaViolation("micro.eps: values must be strictly decreasing", "not-decreasing")
    mic["eps"] = eps
    mic["dt"] = mac["dt"] if mic["dt"] is None else _positive(mic["dt"], "micro.dt")
    if mic["forcing"] is not None:
        _check_keys(mic["forcing"], set(FIELDS), "micro.forcing")
    data["tol"] = _positive(data["tol"], "tol")
    if not isinstance(data["output"], str):
        raise SchemaViolation("output: expected a path string")
    return RunSpec(data)


def load_config(path: str | Path) -> RunSpec:
    """Read and validate a UTF-8 JSON configuration file."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file {str(p)!r} not found", "file-not-found")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    spec = validate(raw)
    spec.source = str(p)
    return spec
