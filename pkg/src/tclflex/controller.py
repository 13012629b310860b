"""Closed-loop virtual-battery controller.

Each step aggregates the population, compares the deviation signal with the
operator request ``r`` and toggles devices by priority so the consumption
deviation tracks ``r``. Steps outside the management windows only execute
the toggles forced by comfort-band constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _core, _pykernel
from .errors import InvalidConfigError
from .thermal import DisturbanceModel, Population, TclState, time_to_boundary
from .vb import VbSnapshot, device_ambient, snapshot_from_record

TRACE_COLUMNS = ("step", "r_kw", "beta_kw", "e_kw", "abs_error_kw", "toggles", "overrides",
                 "m_plus_kw", "m_minus_kw", "p_plus_kw", "p_minus_kw", "consumed_kw",
                 "baseline_kw", "forced_kw")


@dataclass(frozen=True)
class ControlConfig:
    step_hours: float = 1.0 / 60.0
    management_windows: tuple[tuple[int, int], ...] = ()
    record_trace: bool = True

    def __post_init__(self):
        if not self.step_hours > 0:
            raise InvalidConfigError("step_hours must be positive")
        windows = tuple((int(a), int(b)) for a, b in self.management_windows)
        prev_end = None
        for start, end in windows:
            if start < 0 or end <= start:
                raise InvalidConfigError(f"bad management window ({start}, {end})")
            if prev_end is not None and start < prev_end:
                raise InvalidConfigError("management windows must be ordered and non-overlapping")
            prev_end = end
        object.__setattr__(self, "management_windows", windows)

    def managed_mask(self, steps: int) -> np.ndarray:
        mask = np.zeros(steps, dtype=np.uint8)
        for start, end in self.management_windows:
            mask[start:min(end, steps)] = 1
        return mask


@dataclass
class ControlTrace:
    r: np.ndarray
    managed: np.ndarray
    records: np.ndarray
    step_hours: float
    status_history: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.r.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.records[:, _core.RECORD_FIELDS.index(name)]

    @property
    def beta(self):
        return self.column("beta")

    @property
    def m_plus(self):
        return self.column("m_plus")

    @property
    def m_minus(self):
        return self.column("m_minus")

    @property
    def achieved(self) -> np.ndarray:
        """Consumption deviation from baseline after this step's toggles."""
        return self.column("consumed_after") - self.column("baseline")

    @property
    def e(self):
        return np.where(self.managed.astype(bool), self.column("e"), np.nan)

    @property
    def abs_error(self) -> np.ndarray:
        err = np.abs(self.r - self.achieved)
        return np.where(self.managed.astype(bool), err, np.nan)

    @property
    def max_abs_error(self) -> float:
        err = self.abs_error[self.managed.astype(bool)]
        return float(err.max()) if err.size else math.nan

    @property
    def toggles(self):
        return self.column("toggles").astype(int)

    @property
    def overrides(self):
        return self.column("overrides").astype(int)

    @property
    def band_violations(self):
        return self.column("band_violations").astype(int)

    def snapshot(self, k: int) -> VbSnapshot:
        return snapshot_from_record(self.records[k], k)

    def rows(self):
        err = self.abs_error
        e = self.e
        for k in range(len(self)):
            rec = self.records[k]
            yield {
                "step": k,
                "r_kw": float(self.r[k]),
                "beta_kw": float(rec[4]),
                "e_kw": float(e[k]),
                "abs_error_kw": float(err[k]),
                "toggles": int(rec[10]),
                "overrides": int(rec[11]),
                "m_plus_kw": float(rec[0]),
                "m_minus_kw": float(rec[1]),
                "p_plus_kw": float(rec[2]),
                "p_minus_kw": float(rec[3]),
                "consumed_kw": float(rec[5]),
                "baseline_kw": float(rec[6]),
                "forced_kw": float(rec[7]),
            }


@dataclass(frozen=True)
class Candidate:
    device: int
    power: float
    priority: float


def disaggregate(e: float, candidates: Sequence[Candidate | tuple]) -> list[int]:
    """Pick devices to toggle so their summed power approximates ``|e|``.

    Candidates are taken by descending priority (ties by ascending id) while
    the running total stays within ``|e|``; the first candidate that would
    overshoot is kept only if it strictly shrinks the residual.
    """
    target = abs(e)
    if target == 0:
        return []
    cands = [c if isinstance(c, Candidate) else Candidate(*c) for c in candidates]
    cands.sort(key=lambda c: (-c.priority, c.device))
    chosen: list[int] = []
    total = 0.0
    for c in cands:
        if total + c.power <= target:
            total = total + c.power
            chosen.append(c.device)
        else:
            if abs(target - (total + c.power)) < target - total:
                chosen.append(c.device)
            break
    return chosen


@dataclass
class StepDecision:
    e: float
    forced: list[int]
    voluntary: list[int]
    lock_overrides: int

    @property
    def toggled(self) -> list[int]:
        return sorted(self.forced + self.voluntary)


def control_step(population: Population, snapshot: VbSnapshot, r: float | None, ambient,
                 step_hours: float = 1.0 / 60.0) -> tuple[StepDecision, Population]:
    """Decide and apply this step's toggles; temperatures are not advanced.

    ``r=None`` marks an unmanaged step: only forced toggles execute.
    """
    pop = population.copy()
    if len(pop) == 0:
        return StepDecision(0.0, [], [], 0), pop
    amb = device_ambient(pop, ambient)
    a = _core.DeviceArrays.from_population(pop, step_hours)
    u, _, forced, locked, can_c, can_d = _pykernel.device_flags(
        a.g, a.omg, a.theta_g, a.heating, a.lo, a.hi, a.setpoint, a.cop_r, a.tau,
        pop.theta, pop.status, pop.since, amb)
    forced_ids = [int(i) for i in np.flatnonzero(forced)]
    overrides = int((forced & locked).sum())
    voluntary: list[int] = []
    e = 0.0
    if r is not None:
        e = r - snapshot.deviation_power
        if e != 0:
            new_u = 1 if e > 0 else 0
            pool = ((~u & can_c) if e > 0 else (u & can_d)) & ~forced
            cands = []
            for i in np.flatnonzero(pool):
                params, state = pop.device(int(i))
                flipped = TclState(state.temperature, new_u, state.steps_since_switch)
                asym = amb[i] - new_u * params.heat_gain
                # voluntary switches must be sustainable through the lock period
                end = asym + a.gtau[i] * (state.temperature - asym)
                lo, hi = params.band
                if lo <= end <= hi:
                    cands.append(Candidate(int(i), float(a.pe[i]),
                                           time_to_boundary(flipped, params, float(amb[i]))))
            voluntary = disaggregate(e, cands)
    flip = np.zeros(len(pop), dtype=bool)
    flip[forced_ids] = True
    flip[voluntary] = True
    pop.status[flip] = 1 - pop.status[flip]
    pop.since[flip] = 0
    return StepDecision(float(e), forced_ids, voluntary, overrides), pop


def ambient_matrix(population, ambient, steps: int, start_hour: float = 0.0,
                   step_hours: float = 1.0 / 60.0) -> np.ndarray:
    """Ambient temperatures as a ``(steps, n_ambient_ids)`` matrix.

    ``population`` is a :class:`Population` or :class:`PopulationSpec`
    (only its ``ambient_ids`` are used).
    ``ambient`` maps each ambient id to a constant, to a callable of the
    simulation hour, or to any object with a ``lookup(hour)`` method.
    A bare number applies to every id.
    """
    ids = population.ambient_ids
    out = np.empty((steps, max(len(ids), 1)))
    if not isinstance(ambient, Mapping):
        ambient = {a: ambient for a in ids}
    hours = start_hour + step_hours * np.arange(steps)
    for j, aid in enumerate(ids):
        if aid not in ambient:
            raise InvalidConfigError(f"no ambient source for {aid!r}")
        src = ambient[aid]
        if hasattr(src, "lookup"):
            out[:, j] = [src.lookup(h) for h in hours]
        elif callable(src):
            out[:, j] = [float(src(h)) for h in hours]
        else:
            out[:, j] = float(src)
    return out


def disturbance_matrix(model: DisturbanceModel, rng: np.random.Generator, steps: int, n: int):
    if model.variance == 0:
        return None
    return rng.normal(0.0, model.std, size=(steps, n))


def run_horizon(population: Population, r_schedule, config: ControlConfig,
                disturbance: DisturbanceModel, rng: np.random.Generator | int | None = None, *,
                ambient=None, start_hour: float = 0.0, history: bool = False,
                backend: str | None = None, accounting: str = "draw") -> ControlTrace:
    """Run aggregate -> control -> thermal step over the whole schedule.

    The population is advanced in place. ``ambient`` is either a ready
    ``(steps, n_ambient_ids)`` matrix or anything ``ambient_matrix`` accepts.
    """
    r = np.asarray(r_schedule, dtype=np.float64)
    if r.ndim != 1:
        raise InvalidConfigError("r_schedule must be one-dimensional")
    steps = r.shape[0]
    for _, end in config.management_windows:
        if end > steps:
            raise InvalidConfigError(
                f"management window ends at step {end} but the schedule has {steps} steps")
    if ambient is None:
        raise InvalidConfigError("an ambient source is required")
    amb = np.asarray(ambient, dtype=np.float64) if isinstance(ambient, np.ndarray) else \
        ambient_matrix(population, ambient, steps, start_hour, config.step_hours)
    if amb.shape[0] != steps:
        raise InvalidConfigError(f"ambient has {amb.shape[0]} rows, schedule has {steps} steps")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    noise = disturbance_matrix(disturbance, rng, steps, len(population))
    managed = config.managed_mask(steps)
    arrays = _core.DeviceArrays.from_population(population, config.step_hours)
    _, rec, hist = _core.simulate(population, arrays, amb, noise, r, managed,
                                  records=True, history=history, backend=backend,
                                  accounting=accounting)
    return ControlTrace(r=r, managed=managed, records=rec, step_hours=config.step_hours,
                        status_history=hist)
