"""INI-style scenario files: parsing, overrides, resolution and echo.

See ``docs/scenario-format.md`` for the grammar. Every key has a default in
:data:`SCHEMA`; unknown sections or keys are rejected. :func:`echo_text`
writes the fully resolved document, which reproduces a run exactly.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nussbaum as nb
from .analysis import OracleSpec, make_alpha
from .controller import CORE_FUNCTIONS, ControllerConfig, FilterConfig, GateFunction, Variant
from .errors import ConfigError, DomainError
from .faults import make_schedule, piecewise_constant
from .plant import Harmonic, ReferenceTrajectory, constant_reference, example_reference, make_plant, robot_reference
from .simulate import DEFAULT_H, Scenario

ENV_DEFAULT_H = "ATL_DEFAULT_H"

# section -> key -> default ("" means unset / not applicable)
SCHEMA: dict[str, dict[str, str]] = {
    "plant": {"name": "", "b": "1", "m": "", "n": "", "gain": "", "gravity": "", "disturbance": ""},
    "faults": {"schedule": "healthy", "switches": "", "rho": "", "eps": "", "eps_bar": ""},
    "controller": {
        "variant": "", "k": "", "sigma1": "", "sigma2": "", "lambdas": "", "core": "unit",
        "gate": "exp", "gate_amplitude": "0.5", "gate_rate": "0.5",
        "nussbaum": "exp_quad_cos", "nussbaum_a": "", "nussbaum_b": "", "nussbaum_cap": "1e12",
    },
    "reference": {"kind": "", "values": "", "channels": ""},
    "initial": {"x0": "", "zeta0": "0", "theta0": "0"},
    "integrator": {"h": "", "t_end": "30", "divergence_cap": "1e8"},
    "oracle": {"alpha": "", "theta": "", "theta_margin": "1.1"},
    "outputs": {
        "name": "", "probe": "false", "probe_horizons": "", "probe_target": "10",
        "max_band": "", "max_tail_growth": "", "require_monotone": "false", "require_no_clamp": "true",
        "require_budget": "false",
    },
}
REQUIRED = ("plant", "controller", "reference", "initial")
OPTIONAL_SECTIONS = ("oracle",)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive
    return cp


@dataclass
class ScenarioFile:
    """Resolved key/value view of a scenario document."""

    values: dict[str, dict[str, str]]
    source: str = "<string>"
    has_oracle: bool = False

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]


def parse_text(text: str, source: str = "<string>", overrides=(), env=None) -> ScenarioFile:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {sec}.{key}")
    for sec in REQUIRED:
        if not cp.has_section(sec):
            raise ConfigError(f"{source}: missing section [{sec}]")
    has_oracle = cp.has_section("oracle")
    values = {sec: dict(keys) for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        values[sec].update({k: v.strip() for k, v in cp[sec].items()})
    for item in overrides:
        key, sep, val = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if sec not in SCHEMA or name not in SCHEMA[sec]:
            raise ConfigError(f"override names unknown key {sec}.{name}")
        values[sec][name] = val.strip()
        if sec == "oracle":
            has_oracle = True
    if not values["outputs"]["name"]:
        values["outputs"]["name"] = Path(source).stem if source != "<string>" else "scenario"
    if not values["integrator"]["h"]:
        env = os.environ if env is None else env
        values["integrator"]["h"] = env.get(ENV_DEFAULT_H, "") or repr(DEFAULT_H)
    return ScenarioFile(values, source, has_oracle)


def load(path, overrides=(), env=None) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_text(text, str(path), overrides, env)


def echo_text(sf: ScenarioFile) -> str:
    """Canonical, fully resolved document (all keys, fixed order)."""
    lines = []
    for sec, keys in SCHEMA.items():
        if sec in OPTIONAL_SECTIONS and not sf.has_oracle:
            continue
        lines.append(f"[{sec}]")
        lines += [f"{k} = {sf.values[sec][k]}" for k in keys]
        lines.append("")
    return "\n".join(lines)


# --- field converters ---------------------------------------------------------

def _float(sf, sec, key, required=True):
    raw = sf.get(sec, key)
    if raw == "":
        if required:
            raise ConfigError(f"{sec}.{key} is required")
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{sec}.{key}: {raw!r} is not a number") from None


def _bool(sf, sec, key):
    raw = sf.get(sec, key).lower()
    if raw in ("true", "yes", "1", "on"):
        return True
    if raw in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{sec}.{key}: {raw!r} is not a boolean")


def _vector(raw, where):
    try:
        return np.array([float(v) for v in raw.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"{where}: {raw!r} is not a list of numbers") from None


def _rows(raw, where):
    return [_vector(r, where) for r in raw.split(";") if r.strip()]


def _int(sf, sec, key):
    v = _float(sf, sec, key)
    if v != int(v):
        raise ConfigError(f"{sec}.{key} must be an integer")
    return int(v)


# --- builders -------------------------------------------------------------------

def build_plant(sf: ScenarioFile):
    name = sf.get("plant", "name")
    if not name:
        raise ConfigError("plant.name is required")
    params = {"b": _int(sf, "plant", "b")}
    for key in ("m", "n"):
        if sf.get("plant", key):
            params[key] = _int(sf, "plant", key)
    for key in ("gain", "gravity"):
        if sf.get("plant", key):
            params[key] = _float(sf, "plant", key)
    if sf.get("plant", "disturbance"):
        params["disturbance"] = _bool(sf, "plant", "disturbance")
    return make_plant(name, **params)


def build_faults(sf: ScenarioFile, m: int):
    name = sf.get("faults", "schedule")
    if name != "table":
        for key in ("switches", "rho", "eps"):
            if sf.get("faults", key):
                raise ConfigError(f"faults.{key} applies to schedule = table only")
        return make_schedule(name, m)
    switches = _vector(sf.get("faults", "switches"), "faults.switches")
    rhos = _rows(sf.get("faults", "rho"), "faults.rho")
    eps = _rows(sf.get("faults", "eps"), "faults.eps") if sf.get("faults", "eps") else None
    return piecewise_constant(m, switches, rhos, eps, _float(sf, "faults", "eps_bar", required=False))


def build_nussbaum(sf: ScenarioFile):
    kind = sf.get("controller", "nussbaum")
    if kind == "constant":
        raise ConfigError("controller.nussbaum: the constant function is a probe control, not a gain")
    try:
        return nb.make_nussbaum(kind, _float(sf, "controller", "nussbaum_a", required=False),
                                _float(sf, "controller", "nussbaum_b", required=False),
                                _float(sf, "controller", "nussbaum_cap"))
    except DomainError as exc:
        raise ConfigError(f"controller.nussbaum: {exc}") from None


def build_controller(sf: ScenarioFile) -> ControllerConfig:
    try:
        variant = Variant(sf.get("controller", "variant"))
    except ValueError:
        raise ConfigError(f"controller.variant: unknown {sf.get('controller', 'variant')!r}; "
                          f"known: {[v.value for v in Variant]}") from None
    core_name = sf.get("controller", "core")
    if core_name not in CORE_FUNCTIONS:
        raise ConfigError(f"controller.core: unknown {core_name!r}; known: {sorted(CORE_FUNCTIONS)}")
    gate = GateFunction(sf.get("controller", "gate"), _float(sf, "controller", "gate_amplitude"),
                        _float(sf, "controller", "gate_rate"))
    return ControllerConfig(
        variant,
        _float(sf, "controller", "k"),
        _float(sf, "controller", "sigma1"),
        _float(sf, "controller", "sigma2"),
        FilterConfig(tuple(_vector(sf.get("controller", "lambdas"), "controller.lambdas"))),
        CORE_FUNCTIONS[core_name],
        gate,
        build_nussbaum(sf) if variant.uses_nussbaum else None,
    )


def build_reference(sf: ScenarioFile) -> ReferenceTrajectory:
    kind = sf.get("reference", "kind")
    if kind == "two_channel_example":
        return example_reference()
    if kind == "planar_3link":
        return robot_reference()
    if kind == "constant":
        return constant_reference(_vector(sf.get("reference", "values"), "reference.values"))
    if kind == "harmonic":
        chans = []
        for row in sf.get("reference", "channels").split(";"):
            parts = row.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ConfigError("reference.channels rows are 'offset amplitude frequency sin|cos'")
            try:
                chans.append(Harmonic(float(parts[0]), float(parts[1]), float(parts[2]), parts[3]))
            except ValueError:
                raise ConfigError(f"reference.channels: bad row {row.strip()!r}") from None
        return ReferenceTrajectory(chans)
    raise ConfigError(f"reference.kind: unknown {kind!r}")


def build_oracle(sf: ScenarioFile, m: int) -> OracleSpec | None:
    if not sf.has_oracle:
        return None
    name = sf.get("oracle", "alpha") or "identity"
    return OracleSpec(make_alpha(name, m), _float(sf, "oracle", "theta", required=False),
                      _float(sf, "oracle", "theta_margin"))


def build_scenario(sf: ScenarioFile) -> Scenario:
    """Construct and validate; any domain error becomes a ConfigError naming the problem."""
    try:
        plant = build_plant(sf)
        sc = Scenario(
            name=sf.get("outputs", "name"),
            plant=plant,
            controller=build_controller(sf),
            reference=build_reference(sf),
            faults=build_faults(sf, plant.m),
            x0=_vector(sf.get("initial", "x0"), "initial.x0"),
            zeta0=_float(sf, "initial", "zeta0"),
            theta0=_float(sf, "initial", "theta0"),
            t_end=_float(sf, "integrator", "t_end"),
            h=_float(sf, "integrator", "h"),
            oracle=build_oracle(sf, plant.m),
            divergence_cap=_float(sf, "integrator", "divergence_cap"),
        )
        if not (sc.t_end > 0 and math.isfinite(sc.t_end)):
            raise ConfigError("integrator.t_end must be positive and finite")
        return sc.validate()
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class OutputOptions:
    probe: bool
    probe_horizons: tuple[float, ...]
    probe_target: float
    max_band: float | None
    max_tail_growth: float | None
    require_monotone: bool
    require_no_clamp: bool
    require_budget: bool


def output_options(sf: ScenarioFile) -> OutputOptions:
    horizons = sf.get("outputs", "probe_horizons")
    return OutputOptions(
        _bool(sf, "outputs", "probe"),
        tuple(_vector(horizons, "outputs.probe_horizons")) if horizons else (10.0, 20.0, 30.0, 40.0, 50.0, 60.0),
        _float(sf, "outputs", "probe_target"),
        _float(sf, "outputs", "max_band", required=False),
        _float(sf, "outputs", "max_tail_growth", required=False),
        _bool(sf, "outputs", "require_monotone"),
        _bool(sf, "outputs", "require_no_clamp"),
        _bool(sf, "outputs", "require_budget"),
    )
