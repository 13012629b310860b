import numpy as np
import pytest

from tclflex.thermal import (COOLING_PUMP, HEATING_PUMP, REFRIGERATOR, WATER_HEATER, DeviceGroup,
                             PopulationSpec, availability, baseline_power, empty_population,
                             generate_population)
from tclflex.vb import CSV_COLUMNS, VbSnapshot, aggregate, electrical_power

H = 1.0 / 60.0
PRESETS = (REFRIGERATOR, WATER_HEATER, COOLING_PUMP, HEATING_PUMP)


def oracle(pop, amb, accounting="draw"):
    """Per-device loop straight from the headroom definitions."""
    m_plus = base = p_plus = p_minus = consumed = forced_kw = 0.0
    for i in range(len(pop)):
        params, state = pop.device(i)
        a = availability(state, params, float(amb[i]), H)
        pe = electrical_power(params, 1)
        p0 = params.direction * baseline_power(params, float(amb[i]))
        counted = accounting == "nameplate" or state.status == 1
        m_plus += pe - p0
        base += p0
        if not a.available_charge and counted:
            p_plus += pe
        if not a.available_discharge and counted:
            p_minus += pe
        if state.status:
            consumed += pe
        if a.forced_toggle:
            forced_kw += -pe if state.status else pe
    return {"max_charge_power": m_plus - p_plus, "max_discharge_power": base - p_minus,
            "unavailable_charge_power": p_plus, "unavailable_discharge_power": p_minus,
            "deviation_power": consumed - base + forced_kw, "consumed_power": consumed,
            "baseline_power": base, "forced_switch_power": forced_kw}


def random_population(rng, n):
    groups = tuple(DeviceGroup(PRESETS[int(k)], 1, f"a{j}")
                   for j, k in enumerate(rng.integers(0, 4, size=n)))
    pop = generate_population(PopulationSpec(groups), seed=int(rng.integers(1 << 30)))
    # widen states beyond the band and randomise locks
    lo = pop.setpoint - pop.half_band
    hi = pop.setpoint + pop.half_band
    pop.theta = rng.uniform(lo - 0.5, hi + 0.5)
    pop.since = rng.integers(0, 3, size=n).astype(np.int32)
    amb = {f"a{j}": float(rng.uniform(-5, 45)) for j in range(n)}
    return pop, amb


def test_electrical_power_examples():
    assert electrical_power(HEATING_PUMP, 1) == 5.6
    assert electrical_power(COOLING_PUMP, 1) == 5.6
    for p in PRESETS:
        assert electrical_power(p, 0) == 0


def test_empty_population():
    snap = aggregate(empty_population(), {})
    assert snap == VbSnapshot()


def _single_pump(theta, status, ambient=30.0):
    pop = generate_population(PopulationSpec((DeviceGroup(COOLING_PUMP, 1, "out"),)))
    pop.theta[:] = theta
    pop.status[:] = status
    return aggregate(pop, {"out": ambient})


def test_single_available_pump():
    assert baseline_power(COOLING_PUMP, 30.0) == pytest.approx(1.2)
    snap = _single_pump(24.0, 0)
    assert snap.max_charge_power == pytest.approx(4.4)
    assert snap.max_discharge_power == pytest.approx(1.2)
    assert snap.unavailable_charge_power == 0 and snap.unavailable_discharge_power == 0


def test_single_pump_unavailable_for_charging():
    snap = _single_pump(23.5001, 1)  # running it another step leaves the band
    assert snap.unavailable_charge_power == 5.6
    assert snap.max_charge_power == pytest.approx(-1.2)


@pytest.mark.parametrize("accounting", ["draw", "nameplate"])
def test_aggregate_matches_oracle_exactly(accounting):
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(1, 11))
        pop, amb = random_population(rng, n)
        got = aggregate(pop, amb, accounting=accounting)
        want = oracle(pop, [amb[a] for a in np.array(pop.ambient_ids)[pop.ambient_index]],
                      accounting)
        for name, value in want.items():
            assert getattr(got, name) == value, name


def test_nameplate_counts_off_devices():
    snap = _single_pump(23.5001, 0, ambient=20.0)  # cold room: must stay off
    assert snap.unavailable_charge_power == 0.0
    pop = generate_population(PopulationSpec((DeviceGroup(COOLING_PUMP, 1, "out"),)))
    pop.theta[:] = 23.5001
    pop.status[:] = 0
    assert aggregate(pop, {"out": 20.0}, accounting="nameplate").unavailable_charge_power == 5.6


def test_band_sum_identity(summer_spec):
    pop = generate_population(summer_spec)
    pop.theta = pop.setpoint.copy()
    amb = {"indoor": 24.0, "outdoor": 30.0}
    snap = aggregate(pop, amb)
    assert snap.unavailable_charge_power == 0 and snap.unavailable_discharge_power == 0
    total = float(np.sum(np.abs(pop.p_nom)))
    assert snap.max_charge_power + snap.max_discharge_power == pytest.approx(total, rel=1e-12)


def test_beta_zero_at_baseline():
    groups = (DeviceGroup(COOLING_PUMP, 5, "a"), DeviceGroup(WATER_HEATER, 5, "b"))
    pop = generate_population(PopulationSpec(groups))
    pop.status[:] = 0
    pop.theta = pop.setpoint.copy()
    snap = aggregate(pop, {"a": COOLING_PUMP.setpoint, "b": WATER_HEATER.setpoint})
    assert snap.baseline_power == 0 and snap.consumed_power == 0
    assert snap.forced_switch_power == 0
    assert snap.deviation_power == 0


def test_beta_composition(summer_spec):
    pop = generate_population(summer_spec)
    snap = aggregate(pop, {"indoor": 24.0, "outdoor": 37.5})
    assert snap.deviation_power == pytest.approx(
        snap.consumed_power - snap.baseline_power + snap.forced_switch_power)


def test_headroom_nonnegative_in_aggregate(summer_spec):
    rng = np.random.default_rng(1)
    for _ in range(5):
        pop = generate_population(summer_spec, seed=int(rng.integers(1 << 30)))
        snap = aggregate(pop, {"indoor": 24.0, "outdoor": 37.5})
        assert snap.max_charge_power >= 0 and snap.max_discharge_power >= 0


def test_supports():
    snap = VbSnapshot(max_charge_power=10.0, max_discharge_power=4.0)
    assert snap.supports(0) and snap.supports(10.0) and snap.supports(-4.0)
    assert not snap.supports(10.1) and not snap.supports(-4.1)


def test_snapshot_row_round_trip():
    snap = VbSnapshot(1.5, 2.5, 0.1, 0.2, -3.0, 7.0, 9.0, -1.0, 12)
    row = snap.to_row()
    assert tuple(row) == CSV_COLUMNS
    assert VbSnapshot.from_row({k: str(v) for k, v in row.items()}) == snap
