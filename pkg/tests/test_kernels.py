import os
import subprocess
import sys

import numpy as np
import pytest

from tclflex import _core
from tclflex.thermal import (COOLING_PUMP, HEATING_PUMP, REFRIGERATOR, WATER_HEATER, DeviceGroup,
                             PopulationSpec, generate_population)

compiled = pytest.mark.skipif(not _core.has_compiled(), reason="compiled extension not built")


def _case(seed, n_each=40, steps=60):
    rng = np.random.default_rng(seed)
    groups = (DeviceGroup(REFRIGERATOR, n_each, "in"), DeviceGroup(WATER_HEATER, n_each, "in"),
              DeviceGroup(COOLING_PUMP, n_each, "out"), DeviceGroup(HEATING_PUMP, n_each, "cold"))
    spec = PopulationSpec(groups)
    pop = generate_population(spec, seed=seed)
    pop.since = rng.integers(0, 3, size=len(pop)).astype(np.int32)
    amb = np.column_stack([np.full(steps, 24.0), rng.uniform(28, 40, steps),
                           rng.uniform(0, 12, steps)])
    noise = rng.normal(0, 0.05 ** 0.5, size=(steps, len(pop)))
    r = rng.uniform(-60, 120, size=steps)
    managed = (rng.random(steps) < 0.6).astype(np.uint8)
    return pop, amb, noise, r, managed


def _run(backend, seed, accounting, supply_sign=0, records=True):
    pop, amb, noise, r, managed = _case(seed)
    arrays = _core.DeviceArrays.from_population(pop, 1 / 60)
    fail, rec, hist = _core.simulate(pop, arrays, amb, noise, r, managed,
                                     supply_sign=supply_sign, records=records, history=True,
                                     backend=backend, accounting=accounting)
    return fail, rec, hist, pop


@compiled
@pytest.mark.parametrize("accounting", _core.ACCOUNTING)
@pytest.mark.parametrize("seed", range(6))
def test_backends_bit_identical(seed, accounting):
    a = _run("python", seed, accounting)
    b = _run("compiled", seed, accounting)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])
    assert np.array_equal(a[2], b[2])
    for name in ("theta", "status", "since"):
        assert np.array_equal(getattr(a[3], name), getattr(b[3], name))


@compiled
@pytest.mark.parametrize("sign", [1, -1])
def test_backends_agree_on_failure_step(sign):
    for seed in range(4):
        a = _run("python", seed, "draw", supply_sign=sign, records=False)
        b = _run("compiled", seed, "draw", supply_sign=sign, records=False)
        assert a[0] == b[0]


def test_default_backend():
    expected = "compiled" if _core.has_compiled() else "python"
    assert _core.DEFAULT_BACKEND == expected
    assert "python" in _core.BACKENDS


def test_pure_fallback_selected_by_env():
    env = dict(os.environ, TCLFLEX_PURE="1")
    code = "from tclflex import _core; print(_core.DEFAULT_BACKEND, sorted(_core.BACKENDS))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.strip()
    assert out == "python ['python']"


def test_unknown_accounting():
    with pytest.raises(ValueError):
        _core.check_accounting("peak")
