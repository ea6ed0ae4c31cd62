"""YAML run configuration: parsing, defaults, and field-level validation.

Every value has a default matching the benchmark parameter tables, so a
minimal scenario file is just a mode and a fault. Errors name the offending
field with its dotted path. Schema (all sections optional unless noted):

    mode: CC | FT_ISPC | REGULAR_ISPC        (required for simulate)
    seed: int
    t_end, dt, detection_delay, excitation_amplitude: float
    fault:                                    (required for simulate/sweep)
      t_start, t_clear, xg, vg: float
    plant:
      omega0, xf, rf, bf, xca, rca, xg, vg, cdc, vdc2_base, pbase, pwind,
      kpll_p, kpll_i: float
    conventional:
      inner | dc_link | pcc_voltage: {kp, ki}
      l_tilde: float
    references: {vdc2, vpcc}
    ispc:
      ts: float;  T, T_ini, N: int;  rcond: float
      q_diag, p_diag, r_diag: [float, float]
    sweep:                                    (required for sweep)
      modes: [..];  bracket: [lo, hi];  vg: float;  tol: float
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .conventional import ConventionalGains, ControlReferences, PiGains
from .ispc import IspcConfig
from .plant import FaultEvent, PlantParams
from .scenario import MODES, ScenarioConfig

__all__ = ["ConfigError", "load_yaml", "scenario_from_dict", "sweep_from_dict",
           "SweepSpec"]

_REQUIRED = object()


class ConfigError(ValueError):
    """A configuration problem, reported with the field's dotted path."""


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a mapping at top level")
    return doc


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return value


def _reject_unknown(section: dict, path: str, known: set[str]) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field" if path
                              else f"{key}: unknown field")


def _scalar(section: dict, path: str, key: str, typ, default=_REQUIRED):
    if key not in section or section[key] is None:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}: missing required field"
                              if path else f"{key}: missing required field")
        return default
    value = section[key]
    loc = f"{path}.{key}" if path else key
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{loc}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{loc}: expected an integer, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{loc}: expected a string, got {value!r}")
        return value
    raise AssertionError(typ)


def _pair(section: dict, path: str, key: str, default=None):
    if key not in section or section[key] is None:
        return default
    value = section[key]
    loc = f"{path}.{key}"
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in value)):
        raise ConfigError(f"{loc}: expected a pair of numbers, got {value!r}")
    return [float(v) for v in value]


def _plant(doc: dict) -> PlantParams:
    section = _section(doc, "plant")
    defaults = PlantParams()
    fields = ("omega0", "xf", "rf", "bf", "xca", "rca", "xg", "vg", "cdc",
              "vdc2_base", "pbase", "pwind", "kpll_p", "kpll_i")
    _reject_unknown(section, "plant", set(fields))
    kwargs = {f: _scalar(section, "plant", f, float, getattr(defaults, f))
              for f in fields}
    try:
        return PlantParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"plant: {exc}") from exc


def _pi(section: dict, path: str, key: str, default: PiGains) -> PiGains:
    if key not in section or section[key] is None:
        return default
    sub = section[key]
    loc = f"{path}.{key}"
    if not isinstance(sub, dict):
        raise ConfigError(f"{loc}: expected a mapping with kp and ki")
    _reject_unknown(sub, loc, {"kp", "ki"})
    try:
        return PiGains(_scalar(sub, loc, "kp", float, default.kp),
                       _scalar(sub, loc, "ki", float, default.ki))
    except ValueError as exc:
        raise ConfigError(f"{loc}: {exc}") from exc


def _conventional(doc: dict) -> ConventionalGains:
    section = _section(doc, "conventional")
    _reject_unknown(section, "conventional",
                    {"inner", "dc_link", "pcc_voltage", "l_tilde"})
    defaults = ConventionalGains()
    return ConventionalGains(
        inner=_pi(section, "conventional", "inner", defaults.inner),
        dc_link=_pi(section, "conventional", "dc_link", defaults.dc_link),
        pcc_voltage=_pi(section, "conventional", "pcc_voltage",
                        defaults.pcc_voltage),
        l_tilde=_scalar(section, "conventional", "l_tilde", float,
                        defaults.l_tilde),
    )


def _references(doc: dict) -> ControlReferences:
    section = _section(doc, "references")
    _reject_unknown(section, "references", {"vdc2", "vpcc"})
    try:
        return ControlReferences(
            vdc2_ref=_scalar(section, "references", "vdc2", float, 1.0),
            vpcc_ref=_scalar(section, "references", "vpcc", float, 1.0))
    except ValueError as exc:
        raise ConfigError(f"references: {exc}") from exc


def _ispc(doc: dict, mode: str) -> IspcConfig:
    section = _section(doc, "ispc")
    _reject_unknown(section, "ispc",
                    {"ts", "T", "T_ini", "N", "q_diag", "p_diag", "r_diag",
                     "rcond"})
    # Benchmark dataset sizes: the fault-triggered window must fit inside
    # the fault, the pre-fault identification uses the long log.
    default_t = 10_000 if mode == "REGULAR_ISPC" else 750
    defaults = IspcConfig()
    q_diag = _pair(section, "ispc", "q_diag")
    p_diag = _pair(section, "ispc", "p_diag")
    r_diag = _pair(section, "ispc", "r_diag")
    cfg = IspcConfig(
        ts=_scalar(section, "ispc", "ts", float, defaults.ts),
        T=_scalar(section, "ispc", "T", int, default_t),
        T_ini=_scalar(section, "ispc", "T_ini", int, defaults.T_ini),
        N=_scalar(section, "ispc", "N", int, defaults.N),
        Q=np.diag(q_diag) if q_diag else defaults.Q,
        P=np.diag(p_diag) if p_diag else None,
        R=np.diag(r_diag) if r_diag else defaults.R,
        rcond=_scalar(section, "ispc", "rcond", float, None),
    )
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"ispc: {exc}") from exc


def _fault(doc: dict, required: bool) -> FaultEvent | None:
    if "fault" not in doc and not required:
        return None
    if "fault" not in doc or doc["fault"] is None:
        raise ConfigError("fault: missing required section")
    section = _section(doc, "fault")
    _reject_unknown(section, "fault", {"t_start", "t_clear", "xg", "vg"})
    try:
        return FaultEvent(
            t_start=_scalar(section, "fault", "t_start", float),
            t_clear=_scalar(section, "fault", "t_clear", float),
            xg_fault=_scalar(section, "fault", "xg", float),
            vg_fault=_scalar(section, "fault", "vg", float))
    except ValueError as exc:
        raise ConfigError(f"fault: {exc}") from exc


_TOP_FIELDS = {"mode", "seed", "t_end", "dt", "detection_delay",
               "excitation_amplitude", "fault", "plant", "conventional",
               "references", "ispc", "sweep"}


def scenario_from_dict(doc: dict, require_fault: bool = True,
                       mode_override: str | None = None,
                       seed_override: int | None = None) -> ScenarioConfig:
    """Build a validated scenario configuration from a parsed document."""
    _reject_unknown(doc, "", _TOP_FIELDS)
    mode = mode_override or _scalar(doc, "", "mode", str,
                                    None if not require_fault else _REQUIRED)
    if mode is None:
        mode = "CC"
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {mode!r}")
    fault = _fault(doc, require_fault)
    if fault is None:
        fault = ScenarioConfig().fault
    seed = seed_override if seed_override is not None else _scalar(
        doc, "", "seed", int, 1)
    cfg = ScenarioConfig(
        mode=mode,
        fault=fault,
        plant=_plant(doc),
        cc_gains=_conventional(doc),
        refs=_references(doc),
        ispc=_ispc(doc, mode),
        t_end=_scalar(doc, "", "t_end", float, 9.0),
        dt=_scalar(doc, "", "dt", float, 1e-5),
        detection_delay=_scalar(doc, "", "detection_delay", float, 1.0),
        excitation_amplitude=_scalar(doc, "", "excitation_amplitude", float,
                                     0.03),
        seed=seed,
    )
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SweepSpec:
    """One base configuration per mode (dataset-size defaults differ)."""

    bases: dict[str, ScenarioConfig]
    modes: tuple[str, ...]
    bracket: tuple[float, float]
    vg_fault: float
    tol: float

    def base_for(self, mode: str) -> ScenarioConfig:
        return self.bases[mode]


def sweep_from_dict(doc: dict, seed_override: int | None = None) -> SweepSpec:
    if "sweep" not in doc or doc["sweep"] is None:
        raise ConfigError("sweep: missing required section")
    section = _section(doc, "sweep")
    _reject_unknown(section, "sweep", {"modes", "bracket", "vg", "tol"})
    modes = section.get("modes", ["CC", "REGULAR_ISPC"])
    if (not isinstance(modes, list) or not modes
            or any(m not in MODES for m in modes)):
        raise ConfigError(f"sweep.modes: expected a list drawn from {MODES}")
    bracket = _pair(section, "sweep", "bracket")
    if bracket is None:
        raise ConfigError("sweep.bracket: missing required field")
    if not bracket[0] < bracket[1]:
        raise ConfigError(
            f"sweep.bracket: must satisfy lo < hi, got {bracket}")
    modes = tuple(dict.fromkeys(modes))
    bases = {m: scenario_from_dict(doc, require_fault=True, mode_override=m,
                                   seed_override=seed_override)
             for m in modes}
    first = bases[modes[0]]
    return SweepSpec(
        bases=bases,
        modes=modes,
        bracket=(bracket[0], bracket[1]),
        vg_fault=_scalar(section, "sweep", "vg", float,
                         first.fault.vg_fault),
        tol=_scalar(section, "sweep", "tol", float, 5e-4),
    )
