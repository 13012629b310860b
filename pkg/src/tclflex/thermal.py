"""First-order thermal model of a thermostatically controlled load (TCL).

Temperatures are in degC, powers in kW, thermal resistance in degC/kW,
capacitance in kWh/degC and times in hours. Nominal power is signed:
positive for cooling devices, negative for heating devices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameterError, InvalidSpecError

COOLING = 0
HEATING = 1


@dataclass(frozen=True)
class TclParams:
    thermal_resistance: float
    thermal_capacitance: float
    nominal_power: float
    cop: float
    setpoint: float
    half_band: float
    device_type: int
    min_switch_interval: int = 1

    def __post_init__(self):
        for name in ("thermal_resistance", "thermal_capacitance", "cop", "half_band"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be positive, got {value!r}")
        if self.device_type not in (COOLING, HEATING):
            raise InvalidParameterError(f"device_type must be 0 or 1, got {self.device_type!r}")
        if self.device_type == COOLING and not self.nominal_power > 0:
            raise InvalidParameterError("cooling devices need a positive nominal_power")
        if self.device_type == HEATING and not self.nominal_power < 0:
            raise InvalidParameterError("heating devices need a negative nominal_power")
        if int(self.min_switch_interval) != self.min_switch_interval or self.min_switch_interval < 0:
            raise InvalidParameterError("min_switch_interval must be a non-negative integer")

    @property
    def direction(self) -> int:
        """``1 - 2*device_type``: +1 for cooling, -1 for heating."""
        return 1 - 2 * self.device_type

    @property
    def heat_gain(self) -> float:
        """Temperature offset produced by running the device, ``R * P * cop``."""
        return self.thermal_resistance * self.nominal_power * self.cop

    @property
    def band(self) -> tuple[float, float]:
        return self.setpoint - self.half_band, self.setpoint + self.half_band

    @property
    def time_constant(self) -> float:
        return self.thermal_resistance * self.thermal_capacitance


@dataclass
class TclState:
    temperature: float
    status: int
    steps_since_switch: int = 0
    available_charge: bool = True
    available_discharge: bool = True

    def __post_init__(self):
        if self.steps_since_switch < 0:
            raise InvalidParameterError("steps_since_switch must be >= 0")
        if self.status not in (0, 1):
            raise InvalidParameterError("status must be 0 or 1")


# Residential device presets (summer/winter pump variants share a housing).
HEATING_PUMP = TclParams(2.0, 2.0, -5.6, 3.5, 22.0, 0.5, HEATING)
COOLING_PUMP = TclParams(2.0, 2.0, 5.6, 2.5, 24.0, 0.5, COOLING)
WATER_HEATER = TclParams(120.0, 0.4, -4.5, 1.0, 48.5, 3.0, HEATING)
REFRIGERATOR = TclParams(90.0, 0.6, 0.3, 2.0, 2.5, 1.5, COOLING)

PRESETS = {
    "heating_pump": HEATING_PUMP,
    "cooling_pump": COOLING_PUMP,
    "water_heater": WATER_HEATER,
    "refrigerator": REFRIGERATOR,
}


@dataclass(frozen=True)
class DeviceGroup:
    params: TclParams
    count: int
    ambient: str = "default"
    name: str = ""


@dataclass(frozen=True)
class PopulationSpec:
    groups: tuple[DeviceGroup, ...]
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        for g in self.groups:
            if g.count <= 0:
                raise InvalidSpecError(f"group {g.name or g.params} has non-positive count {g.count}")

    @property
    def size(self) -> int:
        return sum(g.count for g in self.groups)

    @property
    def ambient_ids(self) -> list[str]:
        seen: list[str] = []
        for g in self.groups:
            if g.ambient not in seen:
                seen.append(g.ambient)
        return seen


@dataclass(frozen=True)
class DisturbanceModel:
    variance: float = 0.0

    def __post_init__(self):
        if not self.variance >= 0:
            raise InvalidParameterError(f"variance must be >= 0, got {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


class Availability(NamedTuple):
    available_charge: bool
    available_discharge: bool
    forced_toggle: bool


def _check_step(step_hours):
    if not (step_hours > 0 and math.isfinite(step_hours)):
        raise InvalidParameterError(f"step_hours must be positive, got {step_hours!r}")


def decay_factor(params: TclParams, step_hours: float) -> float:
    """Per-step retention of the temperature gap, ``exp(-h / (R*C))``."""
    _check_step(step_hours)
    return math.exp(-step_hours / (params.thermal_resistance * params.thermal_capacitance))


def step_temperature(state: TclState, params: TclParams, ambient: float,
                     disturbance: float, step_hours: float) -> float:
    if not math.isfinite(ambient):
        raise InvalidParameterError("ambient temperature must be finite")
    g = decay_factor(params, step_hours)
    return g * state.temperature + (1.0 - g) * (ambient - state.status * params.heat_gain) + disturbance


def baseline_power(params: TclParams, ambient: float) -> float:
    """Signed power needed to hold the setpoint at ``ambient``."""
    return (ambient - params.setpoint) / (params.cop * params.thermal_resistance)


def in_comfort_band(params: TclParams, temperature: float) -> bool:
    lo, hi = params.band
    return lo <= temperature <= hi


def _band_distance(lo, hi, temperature):
    return max(lo - temperature, temperature - hi, 0.0)


def _admissible(params: TclParams, temperature: float, ambient: float, g: float):
    """Which of (off, on) may be held over the next step.

    A status is admissible when its disturbance-free prediction stays in the
    band, or moves an out-of-band device back toward it. Ambient
    disqualification forbids running a heater above its band or a cooler
    below it.
    """
    lo, hi = params.band
    omg = 1.0 - g
    pred_off = g * temperature + omg * (ambient - 0 * params.heat_gain)
    pred_on = g * temperature + omg * (ambient - 1 * params.heat_gain)
    d_now = _band_distance(lo, hi, temperature)
    d_off = _band_distance(lo, hi, pred_off)
    d_on = _band_distance(lo, hi, pred_on)
    ok_off = d_off == 0.0 or d_off < d_now
    ok_on = d_on == 0.0 or d_on < d_now
    if params.device_type == HEATING and ambient > hi:
        ok_on, ok_off = False, True
    elif params.device_type == COOLING and ambient < lo:
        ok_on, ok_off = False, True
    if not ok_on and not ok_off:
        if d_on < d_off:
            ok_on = True
        else:
            ok_off = True
    return ok_off, ok_on


def availability(state: TclState, params: TclParams, ambient: float,
                 step_hours: float) -> Availability:
    g = decay_factor(params, step_hours)
    ok_off, ok_on = _admissible(params, state.temperature, ambient, g)
    locked = state.steps_since_switch < params.min_switch_interval
    forced = not (ok_on if state.status else ok_off)
    may_toggle = (not locked) or forced
    charge = ok_on and (state.status == 1 or may_toggle)
    discharge = ok_off and (state.status == 0 or may_toggle)
    return Availability(bool(charge), bool(discharge), bool(forced))


def refresh_availability(state: TclState, params: TclParams, ambient: float,
                         step_hours: float) -> TclState:
    flags = availability(state, params, ambient, step_hours)
    return replace(state, available_charge=flags.available_charge,
                   available_discharge=flags.available_discharge)


def time_to_boundary(state: TclState, params: TclParams, ambient: float) -> float:
    """Hours until the noise-free trajectory under the current status reaches
    the band edge it drifts toward; ``inf`` if it never does."""
    lo, hi = params.band
    theta = state.temperature
    asymptote = ambient - state.status * params.heat_gain
    if asymptote < theta:
        edge = lo
    elif asymptote > theta:
        edge = hi
    else:
        return math.inf
    if lo <= asymptote <= hi:
        return math.inf
    ratio = (theta - asymptote) / (edge - asymptote)
    if ratio <= 1.0:
        return 0.0
    return params.time_constant * math.log(ratio)


@dataclass
class Population:
    """Struct-of-arrays view of a TCL population.

    ``group`` indexes into ``groups``; ``ambient_index`` maps each group to a
    column of the ambient matrix supplied at simulation time.
    """

    groups: tuple[DeviceGroup, ...]
    group: np.ndarray
    theta: np.ndarray
    status: np.ndarray
    since: np.ndarray
    ambient_ids: list[str] = field(default_factory=list)

    def __len__(self):
        return int(self.theta.shape[0])

    def _param_array(self, attr, dtype=float):
        values = np.array([getattr(g.params, attr) for g in self.groups], dtype=dtype)
        return values[self.group] if len(self.groups) else np.zeros(0, dtype=dtype)

    @property
    def r_th(self):
        return self._param_array("thermal_resistance")

    @property
    def c_th(self):
        return self._param_array("thermal_capacitance")

    @property
    def p_nom(self):
        return self._param_array("nominal_power")

    @property
    def cop(self):
        return self._param_array("cop")

    @property
    def setpoint(self):
        return self._param_array("setpoint")

    @property
    def half_band(self):
        return self._param_array("half_band")

    @property
    def device_type(self):
        return self._param_array("device_type", np.int8)

    @property
    def tau(self):
        return self._param_array("min_switch_interval", np.int32)

    @property
    def ambient_index(self):
        cols = np.array([self.ambient_ids.index(g.ambient) for g in self.groups], dtype=np.int32)
        return cols[self.group] if len(self.groups) else np.zeros(0, dtype=np.int32)

    def device(self, i: int) -> tuple[TclParams, TclState]:
        params = self.groups[int(self.group[i])].params
        state = TclState(float(self.theta[i]), int(self.status[i]), int(self.since[i]))
        return params, state

    def copy(self) -> "Population":
        return Population(self.groups, self.group.copy(), self.theta.copy(),
                          self.status.copy(), self.since.copy(), list(self.ambient_ids))


def generate_population(spec: PopulationSpec, seed: int | np.random.Generator | None = None) -> Population:
    """Random initial status and uniform in-band temperatures, reproducible by seed.

    ``seed`` overrides ``spec.master_seed``; a ``Generator`` is consumed in place.
    """
    if not spec.groups:
        raise InvalidSpecError("population spec has no device groups")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        spec.master_seed if seed is None else seed)
    counts = [g.count for g in spec.groups]
    group = np.repeat(np.arange(len(counts), dtype=np.int32), counts)
    n = group.shape[0]
    status = rng.integers(0, 2, size=n).astype(np.int8)
    lo = np.array([g.params.band[0] for g in spec.groups])[group]
    hi = np.array([g.params.band[1] for g in spec.groups])[group]
    theta = rng.uniform(lo, hi)
    since = np.array([g.params.min_switch_interval for g in spec.groups], dtype=np.int32)[group]
    return Population(spec.groups, group, theta, status, since, spec.ambient_ids)


def empty_population() -> Population:
    return Population((), np.zeros(0, np.int32), np.zeros(0), np.zeros(0, np.int8),
                      np.zeros(0, np.int32), [])


def sample_disturbance(model: DisturbanceModel, rng: np.random.Generator,
                       size: int | Sequence[int] | None = None):
    """Zero-mean Gaussian temperature disturbance with the model's variance."""
    if model.variance == 0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, model.std, size=size)
