import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from tclflex import io
from tclflex.errors import InvalidConfigError, InvalidInputError, InvalidProductError
from tclflex.market import (DOWNWARD, NO_DIRECTION, PRODUCTS, UPWARD, Bid, DeliveryResult,
                            Scenario, ScenarioReport, direction_map, get_product, make_bid,
                            quantize_bid, run_scenario, validate_bid)
from tclflex.predict import ConfidenceSpec, trial_seed
from tclflex.thermal import (COOLING_PUMP, REFRIGERATOR, WATER_HEATER, DeviceGroup,
                             PopulationSpec)

UTC = timezone.utc
DELIVERY = datetime(2001, 7, 19, 16, 0, tzinfo=UTC)


def test_products_table():
    sr, tr, rr = PRODUCTS["SR"], PRODUCTS["TR"], PRODUCTS["RR"]
    assert (sr.activation, tr.activation, rr.activation) == ("automatic", "manual", "manual")
    assert tr.lead_minutes == 25 and rr.lead_minutes == 55 and sr.gate_clock == "16:00"
    for p in PRODUCTS.values():
        assert p.period_minutes == 15 and p.min_bid_kw == 1000


def test_submission_deadlines():
    d = datetime(2001, 2, 7, 1, 0, tzinfo=UTC)
    assert PRODUCTS["SR"].submission_deadline(d) == datetime(2001, 2, 6, 16, 0, tzinfo=UTC)
    assert PRODUCTS["SR"].lead_before(d) == 540
    assert PRODUCTS["TR"].submission_deadline(DELIVERY) == DELIVERY - timedelta(minutes=25)


def test_get_product():
    assert get_product("tr") is PRODUCTS["TR"]
    with pytest.raises(InvalidProductError):
        get_product("FCR")


def test_validate_bid_examples():
    assert validate_bid(3608.0, "TR", DELIVERY - timedelta(minutes=30), DELIVERY).valid
    for prod in PRODUCTS:
        v = validate_bid(950.0, prod, DELIVERY - timedelta(days=2), DELIVERY)
        assert not v.valid and "minimum" in v.reasons[0]
    v = validate_bid(2000.0, "RR", DELIVERY - timedelta(minutes=40), DELIVERY)
    assert not v.valid and "deadline" in v.reasons[0]
    assert validate_bid(-1000.0, "RR", DELIVERY - timedelta(minutes=55), DELIVERY).valid


def test_validate_bid_sr_gate():
    d = datetime(2001, 2, 7, 1, 0, tzinfo=UTC)
    assert validate_bid(3600, "SR", datetime(2001, 2, 6, 15, 55, tzinfo=UTC), d).valid
    assert not validate_bid(3600, "SR", datetime(2001, 2, 6, 16, 1, tzinfo=UTC), d).valid


def test_validate_bid_errors():
    with pytest.raises(InvalidProductError):
        validate_bid(2000, "XX", DELIVERY, DELIVERY)
    with pytest.raises(InvalidInputError):
        validate_bid(2000, "TR", DELIVERY + timedelta(minutes=1), DELIVERY)


def test_direction_map():
    assert direction_map(-1482.9) == UPWARD
    assert direction_map(3608.0) == DOWNWARD
    assert direction_map(0.0) == NO_DIRECTION


def test_quantize_bid():
    assert quantize_bid(3608.0) == 3600.0
    assert quantize_bid(-1482.9) == -1400.0
    assert quantize_bid(99.9) == 0.0
    assert quantize_bid(1000.0) == 1000.0


def test_sub_mw_predictions_rejected():
    for p in (0.0, 500.0, -999.9, 1099.0 - 100.0):
        assert not make_bid(p, "TR", DELIVERY - timedelta(hours=1), DELIVERY).valid
    for p in (1000.0, -1223.6, 5841.8):
        assert make_bid(p, "TR", DELIVERY - timedelta(hours=1), DELIVERY).valid


def test_bid_round_trip():
    bid = make_bid(-1223.6, "TR", DELIVERY - timedelta(minutes=25), DELIVERY)
    assert bid.power_kw == -1200.0 and bid.raw_power_kw == -1223.6
    assert bid.direction == UPWARD and bid.valid
    assert bid.delivery_end - bid.delivery_start == timedelta(minutes=15)
    assert Bid.from_dict(json.loads(json.dumps(bid.to_dict()))) == bid


def _small_scenario(**kw):
    spec = PopulationSpec((DeviceGroup(REFRIGERATOR, 150, "indoor"),
                           DeviceGroup(WATER_HEATER, 150, "indoor"),
                           DeviceGroup(COOLING_PUMP, 150, "outdoor")))
    args = dict(population=spec, ambient={"indoor": 24.0, "outdoor": 37.5}, product="TR",
                delivery_start=DELIVERY, direction="negative", far_bound_kw=-1500.0,
                name="small")
    args.update(kw)
    return Scenario(**args)


def test_scenario_pre_period():
    sc = _small_scenario()
    assert sc.full_pre_period_minutes == 30 and sc.pre_period_minutes == 30
    assert sc.simulation_start == DELIVERY - timedelta(minutes=30)
    assert sc.submission_time == DELIVERY - timedelta(minutes=25)
    assert sc.trial_model().pre_steps == 30 and sc.trial_model().event_steps == 15
    sr = _small_scenario(product="SR", delivery_start=datetime(2001, 2, 7, 1, tzinfo=UTC),
                         pre_period_cap_minutes=60)
    assert sr.full_pre_period_minutes == 545
    assert sr.pre_period_minutes == 60 and sr.pre_period_capped
    assert sr.summary()["pre_period_cap_minutes"] == 60


@pytest.mark.parametrize("kw", [dict(direction="sideways"), dict(far_bound_kw=1500.0),
                                dict(event_minutes=30), dict(prediction_compute_minutes=-1),
                                dict(accounting="peak"), dict(pre_period_cap_minutes=-5)])
def test_scenario_validation(kw):
    with pytest.raises(InvalidConfigError):
        _small_scenario(**kw)


@pytest.fixture(scope="module")
def small_report():
    return run_scenario(_small_scenario(), ConfidenceSpec(0.1, 0.05), 10.0, 21)


def test_run_scenario_stages(small_report):
    rep = small_report
    assert rep.prediction.power < 0
    assert rep.bid.raw_power_kw == rep.prediction.power
    assert rep.bid.direction == UPWARD
    assert rep.bid.valid == (abs(rep.bid.power_kw) >= 1000)
    assert len(rep.delivery.trace) == 45 and rep.delivery.trace.managed.sum() == 15
    assert rep.delivery.trace.r[0] == rep.prediction.power
    assert rep.delivery.seed == [21, 4, 0]


def test_report_round_trip(small_report):
    doc = json.loads(io.dumps(small_report.to_dict()))
    back = ScenarioReport.from_dict(doc)
    assert io.dumps(back.to_dict()) == io.dumps(small_report.to_dict())
    assert np.array_equal(back.delivery.trace.records, small_report.delivery.trace.records)


def test_certified_batch_replays_without_violations(small_report):
    sc = _small_scenario()
    model = sc.trial_model()
    pred = small_report.prediction
    it = next((e["iteration"] for e in pred.log if e["x"] == pred.power), 0)
    n = ConfidenceSpec(0.1, 0.05).trials
    for j in range(n):
        trace = model.delivery(pred.power, trial_seed(21, (1, 2, it), j))
        assert DeliveryResult([], trace).supply_violations == 0


def test_scenario_deterministic(small_report):
    again = run_scenario(_small_scenario(), ConfidenceSpec(0.1, 0.05), 10.0, 21, threads=2)
    assert io.dumps(again.to_dict()) == io.dumps(small_report.to_dict())
