"""Virtual-battery view of a TCL population.

Charging (extra consumption) is positive. ``max_discharge_power`` is reported
as a non-negative capacity; the signed discharge limit is its negation.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from . import _pykernel
from ._core import DeviceArrays, check_accounting
from .thermal import Population, TclParams

CSV_COLUMNS = ("step", "m_plus_kw", "m_minus_kw", "p_plus_kw", "p_minus_kw", "beta_kw",
               "consumed_kw", "baseline_kw", "forced_kw")


@dataclass(frozen=True)
class VbSnapshot:
    max_charge_power: float = 0.0
    max_discharge_power: float = 0.0
    unavailable_charge_power: float = 0.0
    unavailable_discharge_power: float = 0.0
    deviation_power: float = 0.0
    consumed_power: float = 0.0
    baseline_power: float = 0.0
    forced_switch_power: float = 0.0
    step_index: int = 0

    def to_row(self) -> dict:
        return {
            "step": self.step_index,
            "m_plus_kw": self.max_charge_power,
            "m_minus_kw": self.max_discharge_power,
            "p_plus_kw": self.unavailable_charge_power,
            "p_minus_kw": self.unavailable_discharge_power,
            "beta_kw": self.deviation_power,
            "consumed_kw": self.consumed_power,
            "baseline_kw": self.baseline_power,
            "forced_kw": self.forced_switch_power,
        }

    @classmethod
    def from_row(cls, row: Mapping) -> "VbSnapshot":
        return cls(
            max_charge_power=float(row["m_plus_kw"]),
            max_discharge_power=float(row["m_minus_kw"]),
            unavailable_charge_power=float(row["p_plus_kw"]),
            unavailable_discharge_power=float(row["p_minus_kw"]),
            deviation_power=float(row["beta_kw"]),
            consumed_power=float(row["consumed_kw"]),
            baseline_power=float(row["baseline_kw"]),
            forced_switch_power=float(row["forced_kw"]),
            step_index=int(row["step"]),
        )

    def supports(self, power: float) -> bool:
        """Whether a constant deviation ``power`` fits the current headroom."""
        if power == 0:
            return True
        cap = self.max_charge_power if power > 0 else self.max_discharge_power
        return abs(power) <= cap


def electrical_power(params: TclParams, status: int) -> float:
    """Non-negative electrical draw, ``(1 - 2*type) * P * u``."""
    return params.direction * params.nominal_power * status


def _seq_sum(values) -> float:
    return float(np.cumsum(values)[-1]) if len(values) else 0.0


def device_ambient(population: Population, ambient) -> np.ndarray:
    """Broadcast a scalar, a per-device array or an ``{ambient_id: degC}``
    mapping to one ambient temperature per device."""
    n = len(population)
    if isinstance(ambient, Mapping):
        cols = np.array([float(ambient[a]) for a in population.ambient_ids])
        return cols[population.ambient_index] if n else np.zeros(0)
    arr = np.asarray(ambient, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected {n} ambient values, got shape {arr.shape}")
    return arr


def aggregate(population: Population, ambient, step_index: int = 0,
              step_hours: float = 1.0 / 60.0, accounting: str = "draw") -> VbSnapshot:
    """Headroom, unavailable power and deviation signal for one step.

    ``accounting="draw"`` counts unavailable devices in P+/P- with their
    current draw; ``"nameplate"`` counts them with their rated draw.
    """
    nameplate = check_accounting(accounting) == "nameplate"
    if len(population) == 0:
        return VbSnapshot(step_index=step_index)
    amb = device_ambient(population, ambient)
    a = DeviceArrays.from_population(population, step_hours)
    u, p0e, forced, _, can_c, can_d = _pykernel.device_flags(
        a.g, a.omg, a.theta_g, a.heating, a.lo, a.hi, a.setpoint, a.cop_r, a.tau,
        population.theta, population.status, population.since, amb)
    pe = a.pe
    counted = np.ones_like(u) if nameplate else u
    p_plus = _seq_sum(np.where(~can_c & counted, pe, 0.0))
    p_minus = _seq_sum(np.where(~can_d & counted, pe, 0.0))
    base = _seq_sum(p0e)
    consumed = _seq_sum(np.where(u, pe, 0.0))
    forced_kw = _seq_sum(np.where(forced, np.where(u, -pe, pe), 0.0))
    return VbSnapshot(
        max_charge_power=_seq_sum(pe - p0e) - p_plus,
        max_discharge_power=base - p_minus,
        unavailable_charge_power=p_plus,
        unavailable_discharge_power=p_minus,
        deviation_power=consumed - base + forced_kw,
        consumed_power=consumed,
        baseline_power=base,
        forced_switch_power=forced_kw,
        step_index=step_index,
    )


def snapshot_from_record(record, step_index: int) -> VbSnapshot:
    """Build a snapshot from one row of a kernel record array."""
    return VbSnapshot(
        max_charge_power=float(record[0]),
        max_discharge_power=float(record[1]),
        unavailable_charge_power=float(record[2]),
        unavailable_discharge_power=float(record[3]),
        deviation_power=float(record[4]),
        consumed_power=float(record[5]),
        baseline_power=float(record[6]),
        forced_switch_power=float(record[7]),
        step_index=step_index,
    )


SNAPSHOT_FIELDS = tuple(f.name for f in fields(VbSnapshot))
__all__ = ["VbSnapshot", "electrical_power", "aggregate", "device_ambient",
           "snapshot_from_record", "CSV_COLUMNS", "SNAPSHOT_FIELDS"]
