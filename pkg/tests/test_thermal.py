import math

import numpy as np
import pytest

from helpers import random_params
from tclflex.errors import InvalidParameterError, InvalidSpecError
from tclflex.thermal import (COOLING, COOLING_PUMP, HEATING, HEATING_PUMP, REFRIGERATOR,
                             WATER_HEATER, DeviceGroup, DisturbanceModel, PopulationSpec,
                             TclParams, TclState, availability, baseline_power, decay_factor,
                             generate_population, in_comfort_band, sample_disturbance,
                             step_temperature, time_to_boundary)

H = 1.0 / 60.0


def test_decay_factor_examples():
    unit = TclParams(2.0, 2.0, 1.0, 1.0, 20.0, 1.0, COOLING)
    assert decay_factor(unit, 1.0) == pytest.approx(0.778801, abs=1e-6)
    assert decay_factor(REFRIGERATOR, H) == pytest.approx(0.9996914, abs=1e-7)
    assert decay_factor(unit, 1e-9) > 1 - 1e-6


def test_decay_factor_monotone(rng):
    for _ in range(50):
        p = random_params(rng)
        g = [decay_factor(p, h) for h in (0.001, 0.01, 0.1, 1.0)]
        assert all(0 < a < 1 for a in g)
        assert all(a > b for a, b in zip(g, g[1:]))
    slow = TclParams(4.0, 2.0, 1.0, 1.0, 20.0, 1.0, COOLING)
    fast = TclParams(2.0, 2.0, 1.0, 1.0, 20.0, 1.0, COOLING)
    assert decay_factor(slow, H) > decay_factor(fast, H)


@pytest.mark.parametrize("h", [0.0, -1.0, math.nan])
def test_decay_factor_rejects_bad_step(h):
    with pytest.raises(InvalidParameterError):
        decay_factor(REFRIGERATOR, h)


@pytest.mark.parametrize("kwargs", [
    dict(thermal_resistance=0.0), dict(thermal_capacitance=-1.0), dict(cop=0.0),
    dict(half_band=0.0), dict(nominal_power=-0.3), dict(min_switch_interval=-1),
])
def test_params_validation(kwargs):
    base = dict(thermal_resistance=90.0, thermal_capacitance=0.6, nominal_power=0.3, cop=2.0,
                setpoint=2.5, half_band=1.5, device_type=COOLING)
    base.update(kwargs)
    with pytest.raises(InvalidParameterError):
        TclParams(**base)


def test_heating_needs_negative_power():
    with pytest.raises(InvalidParameterError):
        TclParams(2.0, 2.0, 5.6, 3.5, 22.0, 0.5, HEATING)


def test_step_temperature_examples():
    assert step_temperature(TclState(24.0, 0), COOLING_PUMP, 24.0, 0.0, H) == 24.0
    fridge = step_temperature(TclState(2.5, 1), REFRIGERATOR, 24.0, 0.0, H)
    g = math.exp(-H / 54.0)
    assert fridge == pytest.approx(g * 2.5 + (1 - g) * (24 - 54), abs=1e-12)
    # 0.9996914 * 2.5 - 0.0003086 * 30
    assert fridge == pytest.approx(2.48997, abs=1e-5)
    assert HEATING_PUMP.heat_gain == pytest.approx(-39.2)
    assert step_temperature(TclState(22.0, 1), HEATING_PUMP, 5.0, 0.0, H) > 22.0


def test_step_temperature_adds_disturbance():
    a = step_temperature(TclState(3.0, 0), REFRIGERATOR, 24.0, 0.0, H)
    b = step_temperature(TclState(3.0, 0), REFRIGERATOR, 24.0, 0.25, H)
    assert b - a == pytest.approx(0.25)


def test_step_temperature_converges_monotonically(rng):
    for _ in range(30):
        p = random_params(rng)
        u = int(rng.integers(0, 2))
        amb = float(rng.uniform(-5, 40))
        target = amb - u * p.heat_gain
        theta = float(rng.uniform(-10, 60))
        gap = abs(theta - target)
        for _ in range(200):
            theta = step_temperature(TclState(theta, u), p, amb, 0.0, 0.1)
            new_gap = abs(theta - target)
            assert new_gap < gap or new_gap == 0.0
            gap = new_gap


def test_baseline_power_examples():
    assert baseline_power(REFRIGERATOR, 24.0) == pytest.approx(0.119444, abs=1e-6)
    assert baseline_power(WATER_HEATER, 24.0) == pytest.approx(-0.204167, abs=1e-6)
    assert baseline_power(COOLING_PUMP, COOLING_PUMP.setpoint) == 0.0


@pytest.mark.parametrize("params", [REFRIGERATOR, WATER_HEATER, COOLING_PUMP, HEATING_PUMP])
@pytest.mark.parametrize("offset", [-7.0, -0.1, 0.1, 7.0])
def test_baseline_sign(params, offset):
    p0 = baseline_power(params, params.setpoint + offset)
    assert np.sign(p0) == np.sign(offset)


def test_in_comfort_band():
    assert in_comfort_band(REFRIGERATOR, 2.5)
    assert in_comfort_band(REFRIGERATOR, 4.0)
    assert in_comfort_band(REFRIGERATOR, 1.0)
    assert not in_comfort_band(REFRIGERATOR, 4.01)
    assert not in_comfort_band(REFRIGERATOR, 0.99)


def test_availability_ambient_disqualification():
    a = availability(TclState(22.0, 1, 5), HEATING_PUMP, 25.0, H)
    assert not a.available_charge
    assert a.available_discharge
    # a cooler in a cold room must stay off as well
    b = availability(TclState(24.0, 0, 5), COOLING_PUMP, 20.0, H)
    assert not b.available_charge


def test_availability_mid_band_free():
    a = availability(TclState(2.5, 1, 1), REFRIGERATOR, 24.0, H)
    assert a.available_charge and a.available_discharge and not a.forced_toggle


def test_availability_forced_near_edge():
    state = TclState(1.001, 1, 1)
    assert step_temperature(state, REFRIGERATOR, 24.0, 0.0, H) < 1.0
    a = availability(state, REFRIGERATOR, 24.0, H)
    assert a.forced_toggle
    assert not a.available_charge
    assert a.available_discharge


def test_availability_lock_blocks_voluntary_toggle():
    locked = TclState(2.5, 1, 0)
    a = availability(locked, REFRIGERATOR, 24.0, H)
    assert a.available_charge  # already on
    assert not a.available_discharge  # turning off needs the lock to expire


def test_forced_toggle_overrides_lock():
    a = availability(TclState(1.001, 1, 0), REFRIGERATOR, 24.0, H)
    assert a.forced_toggle and a.available_discharge


def test_time_to_boundary_examples():
    assert time_to_boundary(TclState(2.5, 0), REFRIGERATOR, 24.0) == pytest.approx(
        54 * math.log(1.075), abs=1e-9)
    assert time_to_boundary(TclState(2.5, 0), REFRIGERATOR, 24.0) == pytest.approx(3.905, abs=1e-3)
    assert time_to_boundary(TclState(4.0, 0), REFRIGERATOR, 24.0) == 0.0
    # asymptote inside the band
    assert time_to_boundary(TclState(23.9, 0), COOLING_PUMP, 24.2) == math.inf


def test_time_to_boundary_matches_forward_simulation(rng):
    checked = 0
    while checked < 100:
        p = random_params(rng)
        lo, hi = p.band
        u = int(rng.integers(0, 2))
        amb = float(rng.uniform(p.setpoint - 30, p.setpoint + 30))
        state = TclState(float(rng.uniform(lo, hi)), u)
        t = time_to_boundary(state, p, amb)
        if not math.isfinite(t) or t > 50:
            continue
        h = max(t / 400.0, 1e-4)
        theta, k = state.temperature, 0
        while lo <= theta <= hi:
            theta = step_temperature(TclState(theta, u), p, amb, 0.0, h)
            k += 1
        assert abs(k - math.ceil(t / h)) <= 1
        checked += 1


def test_generate_population_deterministic(summer_spec):
    a = generate_population(summer_spec)
    b = generate_population(summer_spec)
    for name in ("group", "theta", "status", "since"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = generate_population(summer_spec, seed=8)
    assert not np.array_equal(a.theta, c.theta)


def test_generate_population_in_band(summer_spec):
    pop = generate_population(summer_spec)
    assert len(pop) == 3000
    assert np.all((pop.theta >= pop.setpoint - pop.half_band)
                  & (pop.theta <= pop.setpoint + pop.half_band))
    assert abs(pop.status.mean() - 0.5) <= 0.05
    assert np.array_equal(pop.since, pop.tau)


def test_generate_population_across_threads(summer_spec):
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(4) as ex:
        pops = list(ex.map(lambda s: generate_population(summer_spec, seed=s), [5] * 4))
    assert all(np.array_equal(p.theta, pops[0].theta) for p in pops)


def test_empty_spec_rejected():
    with pytest.raises(InvalidSpecError):
        generate_population(PopulationSpec(()))
    with pytest.raises(InvalidSpecError):
        PopulationSpec((DeviceGroup(REFRIGERATOR, 0),))


def test_sample_disturbance_zero_variance(rng):
    assert sample_disturbance(DisturbanceModel(0.0), rng) == 0.0
    assert not sample_disturbance(DisturbanceModel(0.0), rng, 10).any()


def test_sample_disturbance_moments():
    x = sample_disturbance(DisturbanceModel(0.05), np.random.default_rng(2023), 10**6)
    assert abs(x.mean()) <= 0.001
    assert abs(x.var() - 0.05) <= 0.002


def test_negative_variance_rejected():
    with pytest.raises(InvalidParameterError):
        DisturbanceModel(-0.1)
