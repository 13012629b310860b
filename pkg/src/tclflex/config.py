"""Run configuration: one YAML document per run.

Sections: ``seed``, ``population``, ``ambient``, ``simulation``,
``prediction``, ``curve``, ``control`` and ``scenario``. Only ``population``
and ``ambient`` are mandatory. Relative TMY paths resolve against the config
file's directory; :meth:`RunConfig.resolved` returns the fully expanded
document that goes into a run manifest. A manifest JSON file is itself
accepted as a config.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import yaml

from ._core import ACCOUNTING
from .controller import ControlConfig
from .errors import InvalidConfigError, InvalidParameterError, InvalidSpecError
from .market import Scenario, get_product
from .predict import ConfidenceSpec
from .thermal import (COOLING, HEATING, PRESETS, DeviceGroup, DisturbanceModel, PopulationSpec,
                      TclParams)
from .weather import TmyReference

MANIFEST_KIND = "tclflex-run-manifest"

_PARAM_KEYS = {"r_th": "thermal_resistance", "c_th": "thermal_capacitance",
               "p_nom": "nominal_power", "cop": "cop", "setpoint": "setpoint",
               "half_band": "half_band", "tau": "min_switch_interval"}
_DEVICE_TYPES = {"cooling": COOLING, "heating": HEATING, 0: COOLING, 1: HEATING}

DEFAULTS = {
    "seed": 0,
    "simulation": {"step_minutes": 1.0, "disturbance_variance": 0.05, "pre_minutes": 0,
                   "event_minutes": 15, "start": None, "headroom_accounting": "draw"},
    "prediction": {"epsilon": 0.02, "delta": 0.005, "tolerance_kw": 10.0, "search": "range",
                   "positive_bound_kw": 5000.0, "negative_bound_kw": -5000.0},
    "curve": {"start_kw": 0.0, "stop_kw": 5000.0, "points": 11, "trials": None},
    "control": {"horizon_minutes": 45, "management_windows": [[30, 45]], "r_kw": 0.0},
}
SEARCH_MODES = ("range", "zero", "success", "failure")


def _section(doc: Mapping, name: str) -> dict:
    given = doc.get(name) or {}
    if not isinstance(given, Mapping):
        raise InvalidConfigError(f"section {name!r} must be a mapping")
    base = copy.deepcopy(DEFAULTS.get(name, {}))
    if base:
        unknown = set(given) - set(base)
        if unknown:
            raise InvalidConfigError(f"unknown key(s) in {name!r}: {sorted(unknown)}")
    base.update(given)
    return base


def parse_timestamp(value) -> datetime | None:
    if value is None:
        return None
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip().replace("Z", "+00:00")
        try:
            ts = datetime.fromisoformat(text)
        except ValueError:
            raise InvalidConfigError(f"bad timestamp {value!r}") from None
    return ts.replace(tzinfo=timezone.utc) if ts.tzinfo is None else ts.astimezone(timezone.utc)


def _iso(ts: datetime | None):
    return None if ts is None else ts.isoformat()


def _group(entry: Mapping, idx: int) -> tuple[DeviceGroup, dict]:
    entry = dict(entry)
    resolved: dict[str, Any] = {}
    preset = entry.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise InvalidConfigError(f"group {idx}: unknown preset {preset!r}")
        p = PRESETS[preset]
        values = {k: getattr(p, attr) for k, attr in _PARAM_KEYS.items()}
        values["device_type"] = p.device_type
    else:
        values = {}
    count = entry.pop("count", None)
    ambient = entry.pop("ambient", "default")
    name = entry.pop("name", preset or f"group{idx}")
    for key in list(entry):
        if key == "device_type":
            dt = entry.pop(key)
            if dt not in _DEVICE_TYPES:
                raise InvalidConfigError(f"group {idx}: device_type must be cooling or heating")
            values["device_type"] = _DEVICE_TYPES[dt]
        elif key in _PARAM_KEYS:
            values[key] = entry.pop(key)
        else:
            raise InvalidConfigError(f"group {idx}: unknown key {key!r}")
    missing = [k for k in (*_PARAM_KEYS, "device_type") if k not in values]
    if missing:
        raise InvalidConfigError(f"group {idx}: missing {missing}")
    if not isinstance(count, int) or isinstance(count, bool):
        raise InvalidConfigError(f"group {idx}: count must be an integer")
    try:
        params = TclParams(**{attr: values[k] for k, attr in _PARAM_KEYS.items()},
                           device_type=values["device_type"])
        group = DeviceGroup(params, count, str(ambient), str(name))
    except (InvalidParameterError, InvalidSpecError, TypeError) as exc:
        raise InvalidConfigError(f"group {idx}: {exc}") from None
    resolved = {"name": str(name), "count": count, "ambient": str(ambient),
                "device_type": "heating" if values["device_type"] == HEATING else "cooling",
                **{k: values[k] for k in _PARAM_KEYS}}
    return group, resolved


def _ambient(doc: Mapping, base_dir: Path):
    sources: dict[str, Any] = {}
    resolved: dict[str, Any] = {}
    for key, val in (doc or {}).items():
        key = str(key)
        if isinstance(val, Mapping):
            if "tmy" not in val:
                raise InvalidConfigError(f"ambient {key!r}: expected a number or {{tmy: path}}")
            unknown = set(val) - {"tmy", "column", "at"}
            if unknown:
                raise InvalidConfigError(f"ambient {key!r}: unknown key(s) {sorted(unknown)}")
            path = Path(os.path.expanduser(str(val["tmy"])))
            if not path.is_absolute():
                path = (base_dir / path).resolve()
            if not path.exists():
                raise InvalidConfigError(f"ambient {key!r}: TMY file not found: {path}")
            at = parse_timestamp(val.get("at"))
            ref = TmyReference(str(path), str(val.get("column", "T2m")), at)
            sources[key] = ref
            resolved[key] = {"tmy": str(path), "column": ref.column, "at": _iso(at)}
        else:
            try:
                sources[key] = float(val)
            except (TypeError, ValueError):
                raise InvalidConfigError(f"ambient {key!r}: not a temperature: {val!r}") from None
            resolved[key] = sources[key]
    return sources, resolved


@dataclass
class RunConfig:
    path: str
    seed: int
    population: PopulationSpec
    ambient: dict
    simulation: dict
    prediction: dict
    curve: dict
    control: dict
    scenario_doc: dict | None
    _resolved: dict = field(repr=False, default_factory=dict)

    def resolved(self) -> dict:
        return copy.deepcopy(self._resolved)

    @property
    def step_hours(self) -> float:
        return float(self.simulation["step_minutes"]) / 60.0

    @property
    def start(self) -> datetime | None:
        return parse_timestamp(self.simulation["start"])

    @property
    def accounting(self) -> str:
        return self.simulation["headroom_accounting"]

    @property
    def disturbance(self) -> DisturbanceModel:
        return DisturbanceModel(float(self.simulation["disturbance_variance"]))

    @property
    def confidence(self) -> ConfidenceSpec:
        return ConfidenceSpec(float(self.prediction["epsilon"]), float(self.prediction["delta"]))

    def minutes_to_steps(self, minutes) -> int:
        steps = float(minutes) / float(self.simulation["step_minutes"])
        if abs(steps - round(steps)) > 1e-9:
            raise InvalidConfigError(f"{minutes} min is not a whole number of steps")
        return int(round(steps))

    def control_config(self) -> ControlConfig:
        windows = tuple((self.minutes_to_steps(a), self.minutes_to_steps(b))
                        for a, b in self.control["management_windows"])
        return ControlConfig(step_hours=self.step_hours, management_windows=windows)

    def scenario(self) -> Scenario:
        if self.scenario_doc is None:
            raise InvalidConfigError("config has no 'scenario' section")
        s = self.scenario_doc
        return Scenario(
            population=self.population, ambient=self.ambient,
            product=get_product(s["product"]),
            delivery_start=parse_timestamp(s["delivery_start"]),
            direction=s["direction"], far_bound_kw=float(s["far_bound_kw"]),
            prediction_compute_minutes=int(s["prediction_compute_minutes"]),
            event_minutes=int(s["event_minutes"]),
            pre_period_cap_minutes=s["pre_period_cap_minutes"],
            step_minutes=float(self.simulation["step_minutes"]),
            disturbance=self.disturbance, name=str(s["name"]), accounting=self.accounting)


_SCENARIO_DEFAULTS = {"name": "", "product": None, "delivery_start": None, "direction": None,
                      "far_bound_kw": None, "prediction_compute_minutes": 5,
                      "event_minutes": 15, "pre_period_cap_minutes": None}


def config_from_dict(doc: Mapping, base_dir: str | os.PathLike = ".", path: str = "") -> RunConfig:
    if not isinstance(doc, Mapping):
        raise InvalidConfigError("config must be a mapping at the top level")
    if doc.get("kind") == MANIFEST_KIND:
        seed = doc.get("master_seed", 0)
        doc = dict(doc["config"])
        doc["seed"] = seed
    known = {"seed", "population", "ambient", "simulation", "prediction", "curve", "control",
             "scenario"}
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    base = Path(base_dir)
    pop_doc = doc.get("population")
    if not isinstance(pop_doc, Mapping) or not pop_doc.get("groups"):
        raise InvalidConfigError("population.groups is required")
    groups, groups_resolved = [], []
    for i, entry in enumerate(pop_doc["groups"]):
        if not isinstance(entry, Mapping):
            raise InvalidConfigError(f"group {i} must be a mapping")
        g, r = _group(entry, i)
        groups.append(g)
        groups_resolved.append(r)
    try:
        population = PopulationSpec(tuple(groups))
    except InvalidSpecError as exc:
        raise InvalidConfigError(str(exc)) from None
    ambient, amb_resolved = _ambient(doc.get("ambient"), base)
    for aid in population.ambient_ids:
        if aid not in ambient:
            raise InvalidConfigError(f"no ambient source for {aid!r}")
    seed = doc.get("seed", DEFAULTS["seed"])
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise InvalidConfigError("seed must be a non-negative integer")
    sim = _section(doc, "simulation")
    sim["start"] = _iso(parse_timestamp(sim["start"]))
    if sim["headroom_accounting"] not in ACCOUNTING:
        raise InvalidConfigError(f"simulation.headroom_accounting must be one of {ACCOUNTING}")
    pred = _section(doc, "prediction")
    if pred["search"] not in SEARCH_MODES:
        raise InvalidConfigError(f"prediction.search must be one of {SEARCH_MODES}")
    curve = _section(doc, "curve")
    control = _section(doc, "control")
    scen = None
    if doc.get("scenario") is not None:
        scen = dict(_SCENARIO_DEFAULTS)
        unknown = set(doc["scenario"]) - set(scen)
        if unknown:
            raise InvalidConfigError(f"unknown key(s) in 'scenario': {sorted(unknown)}")
        scen.update(doc["scenario"])
        for key in ("product", "delivery_start", "direction", "far_bound_kw"):
            if scen[key] is None:
                raise InvalidConfigError(f"scenario.{key} is required")
        scen["delivery_start"] = _iso(parse_timestamp(scen["delivery_start"]))
    cfg = RunConfig(path=str(path), seed=seed, population=population, ambient=ambient,
                    simulation=sim, prediction=pred, curve=curve, control=control,
                    scenario_doc=scen)
    try:
        cfg.confidence
        cfg.disturbance
        if scen is not None:
            cfg.scenario()
        cfg.control_config()
    except (InvalidParameterError, ValueError, KeyError) as exc:
        if isinstance(exc, InvalidConfigError):
            raise
        raise InvalidConfigError(str(exc)) from None
    cfg._resolved = {
        "seed": seed,
        "population": {"groups": groups_resolved},
        "ambient": amb_resolved,
        "simulation": sim, "prediction": pred, "curve": curve, "control": control,
        **({"scenario": scen} if scen is not None else {}),
    }
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a YAML (or manifest JSON) config; errors name the file."""
    p = Path(path)
    if not p.is_file():
        raise InvalidConfigError(f"config file not found: {p}")
    try:
        with open(p, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{p}: {exc}") from None
    try:
        return config_from_dict(doc or {}, p.resolve().parent, str(p))
    except InvalidConfigError as exc:
        raise InvalidConfigError(f"{p}: {exc}") from None
