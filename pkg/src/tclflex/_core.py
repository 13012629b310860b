"""Kernel selection and input packing.

The compiled ``_kernel`` extension is used when importable; otherwise the
NumPy twin in ``_pykernel`` runs. Set ``TCLFLEX_PURE=1`` to force the
fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _pykernel

try:
    if os.environ.get("TCLFLEX_PURE"):
        raise ImportError("pure-Python kernel requested")
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

RECORD_FIELDS = (
    "m_plus", "m_minus", "p_plus", "p_minus", "beta", "consumed", "baseline",
    "forced", "e", "consumed_after", "toggles", "overrides", "band_violations",
)

BACKENDS = {"python": _pykernel.simulate}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.simulate

DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"

# how unavailable devices enter P+ / P-: with their current draw (only devices
# that are on) or with their rated draw (on or off)
ACCOUNTING = ("draw", "nameplate")


def check_accounting(accounting: str) -> str:
    if accounting not in ACCOUNTING:
        raise ValueError(f"accounting must be one of {ACCOUNTING}, got {accounting!r}")
    return accounting


def has_compiled() -> bool:
    return _compiled is not None


@dataclass
class DeviceArrays:
    """Per-device constants derived once from a population and step length."""

    g: np.ndarray
    omg: np.ndarray
    gtau: np.ndarray
    theta_g: np.ndarray
    pe: np.ndarray
    heating: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    setpoint: np.ndarray
    cop_r: np.ndarray
    rc: np.ndarray
    tau: np.ndarray
    amb_col: np.ndarray

    @classmethod
    def from_population(cls, pop, step_hours: float) -> "DeviceArrays":
        # per-group constants computed with scalar math so every device of a
        # group shares identical bits with thermal.decay_factor
        groups = pop.groups
        gi = pop.group

        def per_group(fn, dtype=np.float64):
            vals = np.array([fn(grp.params) for grp in groups], dtype=dtype)
            return np.ascontiguousarray(vals[gi]) if len(groups) else np.zeros(0, dtype)

        g = per_group(lambda p: math.exp(-step_hours / (p.thermal_resistance * p.thermal_capacitance)))
        return cls(
            g=g,
            omg=per_group(lambda p: 1.0 - math.exp(-step_hours / (p.thermal_resistance * p.thermal_capacitance))),
            gtau=per_group(lambda p: math.exp(-step_hours / (p.thermal_resistance * p.thermal_capacitance))
                           ** max(int(p.min_switch_interval), 1)),
            theta_g=per_group(lambda p: p.heat_gain),
            pe=per_group(lambda p: p.direction * p.nominal_power),
            heating=per_group(lambda p: p.device_type, np.int8),
            lo=per_group(lambda p: p.band[0]),
            hi=per_group(lambda p: p.band[1]),
            setpoint=per_group(lambda p: p.setpoint),
            cop_r=per_group(lambda p: p.cop * p.thermal_resistance),
            rc=per_group(lambda p: p.time_constant),
            tau=per_group(lambda p: int(p.min_switch_interval), np.int32),
            amb_col=np.ascontiguousarray(pop.ambient_index, dtype=np.int32),
        )


def simulate(pop, arrays: DeviceArrays, ambient, noise, r, managed, *,
             supply_sign: int = 0, records: bool = True, history: bool = False,
             backend: str | None = None, accounting: str = "draw"):
    """Advance ``pop`` in place over ``len(r)`` steps.

    Returns ``(fail_step, records, history)``; ``records`` is an
    ``(steps, len(RECORD_FIELDS))`` array or ``None``.
    """
    fn = BACKENDS[backend or DEFAULT_BACKEND]
    steps = int(np.shape(r)[0])
    n = len(pop)
    ambient = np.ascontiguousarray(ambient, dtype=np.float64)
    if noise is None:
        noise = np.zeros((steps, n))
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    managed = np.ascontiguousarray(managed, dtype=np.uint8)
    rec = np.zeros((steps, len(RECORD_FIELDS))) if records else None
    hist = np.zeros((steps, n), dtype=np.int8) if history else None
    pop.theta = np.ascontiguousarray(pop.theta, dtype=np.float64)
    pop.status = np.ascontiguousarray(pop.status, dtype=np.int8)
    pop.since = np.ascontiguousarray(pop.since, dtype=np.int32)
    a = arrays
    fail = fn(a.g, a.omg, a.gtau, a.theta_g, a.pe, a.heating, a.lo, a.hi, a.setpoint,
              a.cop_r, a.rc, a.tau, a.amb_col, pop.theta, pop.status, pop.since,
              ambient, noise, r, managed, int(supply_sign),
              check_accounting(accounting) == "nameplate", rec, hist,
              bool(records), bool(history))
    return int(fail), rec, hist
