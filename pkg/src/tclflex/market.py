"""Balancing-market products, bid validation and end-to-end scenario runs.

A scenario predicts the flexibility a population can certify for one
15-minute delivery period, turns it into a bid and then simulates delivery on
a fresh realisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from . import __version__
from ._core import ACCOUNTING, RECORD_FIELDS
from .controller import ControlTrace
from .errors import InvalidConfigError, InvalidInputError, InvalidProductError
from .predict import (BisectionConfig, ConfidenceSpec, PredictionResult, SUCCESS, VbTrialModel,
                      mcesb_search, trial_seed)
from .thermal import DisturbanceModel, PopulationSpec
from .weather import bind_ambient

UPWARD = "upward"
DOWNWARD = "downward"
NO_DIRECTION = "none"

BID_STEP_KW = 100.0


@dataclass(frozen=True)
class MarketProduct:
    name: str
    activation: str
    max_ramp_minutes: float  # 0 means real time
    lead_minutes: int | None = None  # fixed lead before delivery
    gate_clock: str | None = None  # HH:MM on the day before delivery
    period_minutes: int = 15
    min_bid_kw: float = 1000.0
    entsoe_name: str = ""
    platform: str = ""

    def submission_deadline(self, delivery_start: datetime) -> datetime:
        """Latest instant a bid for ``delivery_start`` may be submitted."""
        if self.gate_clock is not None:
            hh, mm = map(int, self.gate_clock.split(":"))
            day_before = (delivery_start - timedelta(days=1)).date()
            return datetime(day_before.year, day_before.month, day_before.day, hh, mm,
                            tzinfo=delivery_start.tzinfo)
        return delivery_start - timedelta(minutes=self.lead_minutes)

    def lead_before(self, delivery_start: datetime) -> float:
        """Minutes between the submission deadline and delivery."""
        return (delivery_start - self.submission_deadline(delivery_start)).total_seconds() / 60.0


PRODUCTS: dict[str, MarketProduct] = {
    "SR": MarketProduct("SR", "automatic", 0.0, gate_clock="16:00",
                        entsoe_name="aFRR", platform="PICASSO"),
    "TR": MarketProduct("TR", "manual", 15.0, lead_minutes=25,
                        entsoe_name="mFRR", platform="MARI"),
    "RR": MarketProduct("RR", "manual", 30.0, lead_minutes=55,
                        entsoe_name="RR", platform="TERRE"),
}


def get_product(product) -> MarketProduct:
    if isinstance(product, MarketProduct):
        return product
    try:
        return PRODUCTS[str(product).upper()]
    except KeyError:
        raise InvalidProductError(f"unknown market product {product!r}; "
                                  f"expected one of {sorted(PRODUCTS)}") from None


def direction_map(vb_power: float) -> str:
    """Market direction for a VB deviation: discharging offers upward
    regulation, charging offers downward."""
    if vb_power < 0:
        return UPWARD
    if vb_power > 0:
        return DOWNWARD
    return NO_DIRECTION


@dataclass(frozen=True)
class BidVerdict:
    valid: bool
    reasons: tuple[str, ...] = ()

    def __bool__(self):
        return self.valid


def _utc(ts: datetime) -> datetime:
    return ts.replace(tzinfo=timezone.utc) if ts.tzinfo is None else ts


def validate_bid(power: float, product, now: datetime, delivery_start: datetime) -> BidVerdict:
    """A bid is valid when it reaches the minimum size and is submitted no
    later than the product's deadline."""
    prod = get_product(product)
    now, delivery_start = _utc(now), _utc(delivery_start)
    if now > delivery_start:
        raise InvalidInputError("submission time is after delivery start")
    reasons = []
    if not abs(power) >= prod.min_bid_kw:
        reasons.append(f"|power| {abs(power):.1f} kW is below the {prod.min_bid_kw:.0f} kW minimum")
    deadline = prod.submission_deadline(delivery_start)
    if now > deadline:
        reasons.append(f"submitted at {now:%Y-%m-%d %H:%M}, after the {prod.name} deadline "
                       f"{deadline:%Y-%m-%d %H:%M}")
    return BidVerdict(not reasons, tuple(reasons))


def quantize_bid(power: float, step_kw: float = BID_STEP_KW) -> float:
    """Floor ``|power|`` to the bid granularity, keeping the sign."""
    q = math.floor(abs(power) / step_kw + 1e-9) * step_kw
    return math.copysign(q, power) if q else 0.0


@dataclass(frozen=True)
class Bid:
    power_kw: float
    raw_power_kw: float
    direction: str
    product: str
    delivery_start: datetime
    delivery_end: datetime
    submitted_at: datetime
    valid: bool
    reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "power_kw": self.power_kw, "raw_power_kw": self.raw_power_kw,
            "direction": self.direction, "product": self.product,
            "delivery_start": self.delivery_start.isoformat(),
            "delivery_end": self.delivery_end.isoformat(),
            "submitted_at": self.submitted_at.isoformat(),
            "valid": self.valid, "reasons": list(self.reasons),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Bid":
        return cls(float(d["power_kw"]), float(d["raw_power_kw"]), d["direction"], d["product"],
                   datetime.fromisoformat(d["delivery_start"]),
                   datetime.fromisoformat(d["delivery_end"]),
                   datetime.fromisoformat(d["submitted_at"]), bool(d["valid"]),
                   tuple(d["reasons"]))


def make_bid(power: float, product, submitted_at: datetime, delivery_start: datetime) -> Bid:
    prod = get_product(product)
    q = quantize_bid(power)
    verdict = validate_bid(q, prod, submitted_at, delivery_start)
    start = _utc(delivery_start)
    return Bid(q, float(power), direction_map(power), prod.name, start,
               start + timedelta(minutes=prod.period_minutes), _utc(submitted_at),
               verdict.valid, verdict.reasons)


@dataclass(frozen=True)
class Scenario:
    """One market participation case.

    ``ambient`` maps ambient ids to constants or :class:`TmyReference`
    objects. ``pre_period_cap_minutes`` shortens long pre-periods (SR gates
    close the afternoon before) for desk-scale runs.
    """

    population: PopulationSpec
    ambient: Mapping
    product: MarketProduct
    delivery_start: datetime
    direction: str = "positive"
    far_bound_kw: float = 5000.0
    prediction_compute_minutes: int = 5
    event_minutes: int = 15
    pre_period_cap_minutes: int | None = None
    step_minutes: float = 1.0
    disturbance: DisturbanceModel = field(default_factory=lambda: DisturbanceModel(0.05))
    name: str = ""
    accounting: str = "draw"

    def __post_init__(self):
        object.__setattr__(self, "product", get_product(self.product))
        object.__setattr__(self, "delivery_start", _utc(self.delivery_start))
        if self.direction not in ("positive", "negative"):
            raise InvalidConfigError(f"direction must be positive or negative, got {self.direction!r}")
        if self.far_bound_kw == 0 or (self.far_bound_kw > 0) != (self.direction == "positive"):
            raise InvalidConfigError("far bound sign must match the direction")
        if self.event_minutes != self.product.period_minutes:
            raise InvalidConfigError(f"event_minutes must equal the {self.product.name} period "
                                     f"({self.product.period_minutes} min)")
        if self.prediction_compute_minutes < 0:
            raise InvalidConfigError("prediction_compute_minutes must be >= 0")
        if self.pre_period_cap_minutes is not None and self.pre_period_cap_minutes < 0:
            raise InvalidConfigError("pre_period_cap_minutes must be >= 0")
        if self.accounting not in ACCOUNTING:
            raise InvalidConfigError(f"accounting must be one of {ACCOUNTING}")
        steps = self.event_minutes / self.step_minutes
        if self.step_minutes <= 0 or steps != int(steps):
            raise InvalidConfigError("event_minutes must be a whole number of steps")

    @property
    def full_pre_period_minutes(self) -> float:
        return self.prediction_compute_minutes + self.product.lead_before(self.delivery_start)

    @property
    def pre_period_minutes(self) -> float:
        full = self.full_pre_period_minutes
        if self.pre_period_cap_minutes is None:
            return full
        return min(full, float(self.pre_period_cap_minutes))

    @property
    def pre_period_capped(self) -> bool:
        return self.pre_period_minutes < self.full_pre_period_minutes

    @property
    def prediction_start(self) -> datetime:
        """Instant the prediction starts (deadline minus compute time)."""
        return self.product.submission_deadline(self.delivery_start) - \
            timedelta(minutes=self.prediction_compute_minutes)

    @property
    def submission_time(self) -> datetime:
        return self.prediction_start + timedelta(minutes=self.prediction_compute_minutes)

    @property
    def simulation_start(self) -> datetime:
        return self.delivery_start - timedelta(minutes=self.pre_period_minutes)

    def trial_model(self, backend: str | None = None) -> VbTrialModel:
        pre = self.pre_period_minutes / self.step_minutes
        return VbTrialModel(
            population=self.population,
            ambient=bind_ambient(self.ambient, self.simulation_start),
            pre_steps=int(round(pre)),
            event_steps=int(round(self.event_minutes / self.step_minutes)),
            step_hours=self.step_minutes / 60.0,
            disturbance=self.disturbance,
            backend=backend,
            accounting=self.accounting,
        )

    def summary(self) -> dict:
        return {
            "name": self.name, "product": self.product.name,
            "delivery_start": self.delivery_start.isoformat(),
            "direction": self.direction, "far_bound_kw": self.far_bound_kw,
            "prediction_compute_minutes": self.prediction_compute_minutes,
            "event_minutes": self.event_minutes,
            "full_pre_period_minutes": self.full_pre_period_minutes,
            "pre_period_minutes": self.pre_period_minutes,
            "pre_period_cap_minutes": self.pre_period_cap_minutes,
            "pre_period_capped": self.pre_period_capped,
            "simulation_start": self.simulation_start.isoformat(),
            "devices": self.population.size,
            "headroom_accounting": self.accounting,
        }


@dataclass
class DeliveryResult:
    seed: list
    trace: ControlTrace

    @property
    def supply_violations(self) -> int:
        """Managed steps whose request exceeded the available headroom."""
        tr = self.trace
        m = tr.managed.astype(bool)
        r = tr.r
        cap = np.where(r > 0, tr.m_plus, tr.m_minus)
        return int(((np.abs(r) > cap) & (r != 0) & m).sum())

    @property
    def beta_out_of_range(self) -> int:
        tr = self.trace
        m = tr.managed.astype(bool)
        out = (tr.beta > tr.m_plus) | (tr.beta < -tr.m_minus)
        return int((out & m).sum())

    def summary(self) -> dict:
        tr = self.trace
        return {
            "seed_entropy": self.seed,
            "steps": len(tr),
            "managed_steps": int(tr.managed.sum()),
            "max_abs_error_kw": tr.max_abs_error,
            "supply_violations": self.supply_violations,
            "beta_out_of_range": self.beta_out_of_range,
            "band_violations": int(tr.band_violations.sum()),
            "toggles": int(tr.toggles.sum()),
            "overrides": int(tr.overrides.sum()),
        }

    def to_dict(self) -> dict:
        tr = self.trace
        return {
            "seed_entropy": self.seed,
            "step_hours": tr.step_hours,
            "r_kw": tr.r.tolist(),
            "managed": tr.managed.astype(int).tolist(),
            "record_fields": list(RECORD_FIELDS),
            "records": tr.records.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeliveryResult":
        tr = ControlTrace(r=np.array(d["r_kw"], dtype=np.float64),
                          managed=np.array(d["managed"], dtype=np.uint8),
                          records=np.array(d["records"], dtype=np.float64).reshape(
                              -1, len(RECORD_FIELDS)),
                          step_hours=float(d["step_hours"]))
        return cls(list(d["seed_entropy"]), tr)


@dataclass
class ScenarioReport:
    scenario: dict
    prediction: PredictionResult
    bid: Bid
    delivery: DeliveryResult
    master_seed: int
    version: str = __version__

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "version": self.version,
            "master_seed": self.master_seed,
            "scenario": dict(self.scenario),
            "prediction": self.prediction.to_dict(timing=timing),
            "bid": self.bid.to_dict(),
            "delivery_summary": self.delivery.summary(),
            "delivery": self.delivery.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioReport":
        return cls(dict(d["scenario"]), PredictionResult.from_dict(d["prediction"]),
                   Bid.from_dict(d["bid"]), DeliveryResult.from_dict(d["delivery"]),
                   int(d["master_seed"]), d["version"])


DELIVERY_KEY = 4


def run_scenario(scenario: Scenario, spec: ConfidenceSpec = ConfidenceSpec(),
                 tolerance: float = 10.0, master_seed: int = 0, *, threads: int = 1,
                 backend: str | None = None) -> ScenarioReport:
    """Predict, bid and simulate delivery.

    Delivery re-randomises the population and disturbances with a seed
    outside every prediction batch, then tracks the raw predicted power.
    """
    model = scenario.trial_model(backend)
    cfg = BisectionConfig(0.0, scenario.far_bound_kw, tolerance, SUCCESS)
    prediction = mcesb_search(model, cfg, spec, master_seed, threads=threads)
    bid = make_bid(prediction.power, scenario.product, scenario.submission_time,
                   scenario.delivery_start)
    seed = trial_seed(master_seed, (DELIVERY_KEY,), 0)
    trace = model.delivery(prediction.power, seed)
    delivery = DeliveryResult([int(v) for v in np.atleast_1d(seed.entropy)], trace)
    return ScenarioReport(scenario.summary(), prediction, bid, delivery, int(master_seed))
