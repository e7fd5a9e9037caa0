"""Run configuration: a flat INI file of ``key = value`` pairs, checked against a strict schema.

Lengths are nm and energies eV throughout.  Every violation found in a
file is collected and reported together.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

from .electron import ElectronParams
from .materials import ChiralOscillator, Environment, MaterialModel, Oscillator
from .quadrature import NumericsConfig
from .response import ResponseConfig
from .slab import Geometry
from .units import PhysicalConstants

ENV_VAR = "CHIRAL_DECOHERENCE_CONFIG"


class ConfigError(ValueError):
    """All problems found in one configuration file."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    format: str = "csv"
    precision: int = 12


@dataclass(frozen=True)
class GridSpec:
    """Axes of the map and spectrum subcommands."""
    energy_min: float = 0.5
    energy_max: float = 10.0
    n_energy: int = 96
    y_min: float = -15.0
    y_max: float = 15.0
    n_y: int = 31
    z_min: float = -40.0
    z_max: float = -4.0
    n_z: int = 19
    x_tilde: float = 0.0
    z_prime: float = -18.0       # height of the fixed point of the gamma and asymmetry maps
    probe_z: float = -4.0        # near-film z_tilde of the sweep's Delta_A probe
    probe_y: float = 10.0


@dataclass(frozen=True)
class SimulationConfig:
    constants: PhysicalConstants
    material: MaterialModel
    environment: Environment
    d: float
    L_list: tuple
    beta_list: tuple
    sigma_y: float
    sigma_z: float
    impact_b: float
    E_i: Optional[float]
    numerics: NumericsConfig
    output: OutputSpec = field(default_factory=OutputSpec)
    grids: GridSpec = field(default_factory=GridSpec)

    def geometry(self, L: Optional[float] = None) -> Geometry:
        return Geometry(self.d, self.L_list[0] if L is None else L, self.environment)

    def response(self, beta: Optional[float] = None, L: Optional[float] = None) -> ResponseConfig:
        return ResponseConfig(self.material, self.geometry(L),
                              self.beta_list[0] if beta is None else beta,
                              self.constants, self.numerics)

    def electron(self, beta: Optional[float] = None) -> ElectronParams:
        return ElectronParams(self.beta_list[0] if beta is None else beta,
                              self.sigma_y, self.sigma_z, self.impact_b, self.E_i)

    def canonical(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


# -- schema --------------------------------------------------------------------

_FLOAT, _INT, _LIST, _OSC, _TEXT = "float", "int", "list", "oscillators", "text"

_SCHEMA = {
    "constants": {"hbar_c": _FLOAT, "electron_rest_energy": _FLOAT, "fine_structure": _FLOAT},
    "material": {"eps_background": _FLOAT, "oscillators": _OSC, "chiral_oscillators": _OSC},
    "environment": {"eps1": _FLOAT, "eps2": _FLOAT},
    "geometry": {"d": _FLOAT, "L": _LIST},
    "electron": {"beta": _LIST, "sigma_y": _FLOAT, "sigma_z": _FLOAT, "b": _FLOAT, "E_i": _FLOAT},
    "numerics": {"rel_tol": _FLOAT, "abs_tol": _FLOAT, "E_max": _FLOAT, "ky_cutoff_factor": _FLOAT,
                 "max_subdivisions": _INT, "pv_window": _FLOAT, "z_floor": _FLOAT, "gh_nodes": _INT},
    "output": {"directory": _TEXT, "format": _TEXT, "precision": _INT},
    "grids": {k: (_INT if k.startswith("n_") else _FLOAT) for k in GridSpec.__dataclass_fields__},
}
_REQUIRED = {"material": ["eps_background"], "geometry": ["d", "L"], "electron": ["beta"]}


def _convert(kind, text, where, bad):
    try:
        if kind == _FLOAT:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == _INT:
            return int(text)
        if kind == _LIST:
            vals = [float(t) for t in text.replace(",", " ").split()]
            if not vals:
                raise ValueError
            return tuple(vals)
        if kind == _OSC:
            out = []
            for chunk in text.split(";"):
                if chunk.strip():
                    parts = [float(t) for t in chunk.replace(",", " ").split()]
                    if len(parts) != 3:
                        raise ValueError
                    out.append(tuple(parts))
            return tuple(out)
        return text.strip()
    except ValueError:
        hint = {"list": "numbers separated by commas", "oscillators": "'E0 strength damping; ...'"}
        bad.append(f"{where}: cannot read {text!r} as {hint.get(kind, kind)}")
        return None


def _read(text: str, source: str):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"{source}: line {exc.lineno}, column 1: key outside any [section]"])
    except configparser.ParsingError as exc:
        lines = text.splitlines()
        raise ConfigError([f"{source}: line {ln}, column 1: expected 'key = value', got "
                           f"{lines[ln - 1].strip()!r}" for ln, _ in exc.errors])
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError([f"{source}: line {exc.lineno}, column 1: {exc.message}"
                           if hasattr(exc, "message") else f"{source}: {exc}"])
    return cp


def parse_config_text(text: str, source: str = "<string>") -> SimulationConfig:
    cp = _read(text, source)
    bad: list[str] = []
    raw: dict = {s: {} for s in _SCHEMA}
    for section in cp.sections():
        if section not in _SCHEMA:
            bad.append(f"unknown section [{section}]")
            continue
        for key, value in cp.items(section):
            if key not in _SCHEMA[section]:
                bad.append(f"unknown key {section}.{key}")
                continue
            v = _convert(_SCHEMA[section][key], value, f"{section}.{key}", bad)
            if v is not None:
                raw[section][key] = v
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in raw[section] and not any(m.startswith(f"{section}.{key}:") for m in bad):
                bad.append(f"missing required key {section}.{key}")
    cfg = _build(raw, bad)
    if bad:
        raise ConfigError(bad)
    return cfg


def _attempt(bad, where, fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        bad.append(f"{where}: {exc}")
        return None


def _build(raw, bad) -> Optional[SimulationConfig]:
    const = _attempt(bad, "constants", lambda: PhysicalConstants(**raw["constants"]))
    m = raw["material"]
    mat = None
    if "eps_background" in m:
        if not m["eps_background"] >= 1:
            bad.append("material.eps_background: must be >= 1")
        mat = _attempt(bad, "material", lambda: MaterialModel(
            m["eps_background"],
            tuple(Oscillator(*o) for o in m.get("oscillators", ())),
            tuple(ChiralOscillator(*o) for o in m.get("chiral_oscillators", ()))))
    env = _attempt(bad, "environment", lambda: Environment(**raw["environment"]))
    g = raw["geometry"]
    d = g.get("d")
    if d is not None and not d >= 0:
        bad.append("geometry.d: film thickness must be >= 0")
    L_list = g.get("L")
    if L_list is not None and not all(L > 0 for L in L_list):
        bad.append("geometry.L: every interaction length must be > 0")
    e = raw["electron"]
    betas = e.get("beta")
    if betas is not None:
        for b in betas:
            if not 0 < b < 1:
                bad.append(f"electron.beta: {b} is outside (0, 1)")
            elif env is not None and b * math.sqrt(env.eps1) >= 1:
                bad.append(f"electron.beta: {b} exceeds the light speed of the vacuum half-space")
    sy, sz, imp = e.get("sigma_y", 3.0), e.get("sigma_z", 3.0), e.get("b", 18.0)
    for name, v in (("sigma_y", sy), ("sigma_z", sz), ("b", imp)):
        if not v > 0:
            bad.append(f"electron.{name}: must be > 0")
    if "E_i" in e and not e["E_i"] > 0:
        bad.append("electron.E_i: must be > 0")
    num = _attempt(bad, "numerics", lambda: NumericsConfig(**raw["numerics"]))
    if num is not None and mat is not None:
        _attempt(bad, "numerics.E_max", lambda: num.resolved_E_max(mat.resonances))
    o = raw["output"]
    if o.get("format", "csv") not in ("csv", "json"):
        bad.append(f"output.format: {o['format']!r} is not csv or json")
    if not 3 <= o.get("precision", 12) <= 17:
        bad.append("output.precision: must lie in [3, 17]")
    out = OutputSpec(**o)
    grids = GridSpec(**raw["grids"])
    _check_grids(grids, bad)
    if bad:
        return None
    return SimulationConfig(const, mat, env, d, L_list, betas, sy, sz, imp, e.get("E_i"), num,
                            out, grids)


def _check_grids(g: GridSpec, bad):
    if not 0 < g.energy_min < g.energy_max:
        bad.append("grids.energy_min/energy_max: need 0 < energy_min < energy_max")
    if not g.y_min < g.y_max:
        bad.append("grids.y_min/y_max: need y_min < y_max")
    if not g.z_min < g.z_max < 0:
        bad.append("grids.z_min/z_max: need z_min < z_max < 0")
    if not g.z_prime < 0:
        bad.append("grids.z_prime: must be < 0")
    if not g.probe_z < 0:
        bad.append("grids.probe_z: must be < 0")
    for name in ("n_energy", "n_y", "n_z"):
        if getattr(g, name) < 1:
            bad.append(f"grids.{name}: must be >= 1")


def default_config_path() -> str:
    return str(resources.files("chiral_decoherence") / "default.ini")


def resolve_config_path(path: Optional[str]) -> str:
    """Explicit path, else the environment variable, else the shipped default file."""
    return path or os.environ.get(ENV_VAR) or default_config_path()


def parse_config(path: Optional[str] = None) -> SimulationConfig:
    path = resolve_config_path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    return parse_config_text(text, source=path)
