"""Monte Carlo trials combined with extremum search by bisection.

A *trial model* is any object with ``run_trial(x, seed) -> bool`` answering
whether one randomized realisation supplies a constant deviation ``x`` (kW)
for the whole event. :class:`VbTrialModel` simulates a TCL population;
:class:`ThresholdModel` and :class:`BernoulliModel` are synthetic oracles.

Posterior inference assumes a uniform prior on the success probability, so
after ``n`` successes in ``N`` trials the posterior is Beta(n+1, N-n+1).
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import betainc

from . import _core
from .controller import ControlTrace, ambient_matrix
from .errors import DegenerateScenarioError, InvalidConfigError, InvalidInputError
from .thermal import DisturbanceModel, PopulationSpec, generate_population

log = logging.getLogger(__name__)

SUCCESS = "guaranteed-success"
FAILURE = "guaranteed-failure"


@dataclass(frozen=True)
class ConfidenceSpec:
    epsilon: float = 0.02
    delta: float = 0.005

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1), got {v!r}")

    @property
    def trials(self) -> int:
        return required_trials(self)


@dataclass(frozen=True)
class TrialBatch:
    demanded_power: float
    trials_run: int
    successes: int
    early_stopped: bool = False

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials_run:
            raise InvalidInputError("need 0 <= successes <= trials_run")

    @property
    def p_hat(self) -> float:
        if self.trials_run == 0:
            raise InvalidInputError("no trials run")
        return self.successes / self.trials_run

    @property
    def all_success(self) -> bool:
        return self.trials_run > 0 and self.successes == self.trials_run

    @property
    def all_failure(self) -> bool:
        return self.trials_run > 0 and self.successes == 0


@dataclass(frozen=True)
class BisectionConfig:
    """Search interval ``[a, b]`` with ``a`` the zero end and ``b`` the far end."""

    a: float = 0.0
    b: float = 5000.0
    tolerance: float = 10.0
    mode: str = SUCCESS

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidConfigError("tolerance must be positive")
        if self.a == self.b:
            raise InvalidConfigError("search interval is degenerate")
        if self.a != 0 and self.b != 0:
            raise InvalidConfigError("one end of the search interval must be 0")
        if self.mode not in (SUCCESS, FAILURE):
            raise InvalidConfigError(f"unknown search mode {self.mode!r}")
        if self.a != 0:
            # normalise so that a is the zero end
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def sign(self) -> int:
        return 1 if self.b > 0 else -1


@dataclass
class PredictionResult:
    power: float
    iterations: int
    trials_total: int
    confidence: ConfidenceSpec
    mode: str = SUCCESS
    tolerance: float = 10.0
    interval: tuple[float, float] = (0.0, 0.0)
    final_midpoint: float = math.nan
    log: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["confidence"] = {"epsilon": self.confidence.epsilon, "delta": self.confidence.delta,
                           "trials": required_trials(self.confidence)}
        d["interval"] = list(self.interval)
        if not timing:
            # wall time would break byte-identical reruns
            del d["wall_time"]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PredictionResult":
        conf = d["confidence"]
        return cls(
            power=float(d["power"]), iterations=int(d["iterations"]),
            trials_total=int(d["trials_total"]),
            confidence=ConfidenceSpec(conf["epsilon"], conf["delta"]), mode=d["mode"],
            tolerance=float(d["tolerance"]), interval=tuple(d["interval"]),
            final_midpoint=math.nan if d["final_midpoint"] is None else float(d["final_midpoint"]),
            log=[dict(e) for e in d["log"]],
            wall_time=float(d.get("wall_time", 0.0)))


@dataclass(frozen=True)
class ProbabilityPoint:
    power: float
    estimate: float
    lower: float
    upper: float
    successes: int = 0
    trials: int = 0


class TrialModel(Protocol):
    def run_trial(self, x: float, seed) -> bool: ...


def required_trials(spec: ConfidenceSpec) -> int:
    """Smallest N with ``1 - (1 - eps)**(N + 1) >= 1 - delta``."""
    eps, delta = spec.epsilon, spec.delta
    n = max(0, math.ceil(math.log(1.0 / delta) / math.log(1.0 / (1.0 - eps)) - 1.0))

    def ok(k):
        return 1.0 - (1.0 - eps) ** (k + 1) >= 1.0 - delta

    while not ok(n):
        n += 1
    while n > 0 and ok(n - 1):
        n -= 1
    return n


def trial_seed(master_seed: int, key: Sequence[int], index: int) -> np.random.SeedSequence:
    """Seed for trial ``index`` of the batch identified by ``key``."""
    return np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, key), int(index)])


@dataclass
class VbTrialModel:
    """One trial: fresh population, unmanaged pre-period, managed event at ``r = x``."""

    population: PopulationSpec
    ambient: Mapping
    pre_steps: int = 0
    event_steps: int = 15
    step_hours: float = 1.0 / 60.0
    disturbance: DisturbanceModel = field(default_factory=lambda: DisturbanceModel(0.05))
    start_hour: float = 0.0
    backend: str | None = None
    accounting: str = "draw"

    def __post_init__(self):
        if self.pre_steps < 0 or self.event_steps <= 0:
            raise InvalidConfigError("pre_steps must be >= 0 and event_steps > 0")
        if self.accounting not in _core.ACCOUNTING:
            raise InvalidConfigError(f"accounting must be one of {_core.ACCOUNTING}")
        self._amb = None

    @property
    def steps(self) -> int:
        return self.pre_steps + self.event_steps

    def ambient_matrix(self) -> np.ndarray:
        if self._amb is None:
            self._amb = ambient_matrix(self.population, self.ambient, self.steps,
                                       self.start_hour, self.step_hours)
        return self._amb

    def installed_power(self) -> float:
        return float(sum(g.count * abs(g.params.nominal_power) for g in self.population.groups))

    def managed_mask(self) -> np.ndarray:
        return np.r_[np.zeros(self.pre_steps, np.uint8), np.ones(self.event_steps, np.uint8)]

    def simulate(self, x: float, seed, *, records: bool = False, history: bool = False,
                 stop_on_failure: bool = True):
        rng = np.random.default_rng(seed)
        if not self.population.groups:
            return -1 if x == 0 else self.pre_steps, None, None
        pop = generate_population(self.population, rng)
        std = self.disturbance.std
        noise = rng.normal(0.0, std, size=(self.steps, len(pop))) if std > 0 else None
        r = np.full(self.steps, float(x))
        arrays = _core.DeviceArrays.from_population(pop, self.step_hours)
        sign = (1 if x >= 0 else -1) if stop_on_failure or records else 0
        return _core.simulate(pop, arrays, self.ambient_matrix(), noise, r, self.managed_mask(),
                              supply_sign=sign, records=records, history=history,
                              backend=self.backend, accounting=self.accounting)

    def run_trial(self, x: float, seed) -> bool:
        if x == 0:
            return True
        fail, _, _ = self.simulate(x, seed)
        return fail < 0

    def delivery(self, x: float, seed, *, history: bool = False) -> ControlTrace:
        """Full trace of one realisation tracking ``r = x`` in the event window.

        The same seed gives exactly the realisation ``run_trial`` judged.
        """
        fail, rec, hist = self.simulate(x, seed, records=True, history=history,
                                        stop_on_failure=False)
        if rec is None:
            rec = np.zeros((self.steps, len(_core.RECORD_FIELDS)))
        return ControlTrace(r=np.full(self.steps, float(x)), managed=self.managed_mask(),
                            records=rec, step_hours=self.step_hours, status_history=hist,
                            meta={"fail_step": int(fail)})


@dataclass(frozen=True)
class ThresholdModel:
    """Deterministic oracle: success iff ``lower <= x <= upper``."""

    upper: float = math.inf
    lower: float = -math.inf

    def run_trial(self, x: float, seed) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class BernoulliModel:
    """Random oracle: success with probability ``prob(x)`` drawn from ``seed``."""

    prob: Callable[[float], float]

    def run_trial(self, x: float, seed) -> bool:
        return bool(np.random.default_rng(seed).random() < self.prob(x))


def resolve_threads(threads: int | None) -> int:
    if not threads:
        return os.cpu_count() or 1
    return max(1, int(threads))


def estimate_batch(model: TrialModel, x: float, n_trials: int, master_seed: int,
                   early_stop: str | None = None, *, key: Sequence[int] = (),
                   threads: int = 1) -> TrialBatch:
    """Run up to ``n_trials`` independent trials at power ``x``.

    ``early_stop`` is ``None``, ``"on-failure"`` or ``"on-success"``. Trial
    ``j`` always uses the seed derived from ``(master_seed, key, j)`` and the
    stop point is the first stopping trial in index order, so the result does
    not depend on ``threads``.
    """
    if n_trials < 1:
        raise InvalidInputError("n_trials must be >= 1")
    if early_stop not in (None, "on-failure", "on-success"):
        raise InvalidInputError(f"unknown early_stop {early_stop!r}")
    stop_value = {"on-failure": False, "on-success": True}.get(early_stop)
    threads = resolve_threads(threads)

    def one(j):
        return bool(model.run_trial(x, trial_seed(master_seed, key, j)))

    successes = 0
    run = 0
    if threads == 1:
        for j in range(n_trials):
            ok = one(j)
            run += 1
            successes += ok
            if stop_value is not None and ok == stop_value:
                return TrialBatch(x, run, successes, run < n_trials)
        return TrialBatch(x, run, successes, False)

    block = threads * 4 if stop_value is not None else n_trials
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, n_trials, block):
            idx = range(start, min(start + block, n_trials))
            for ok in pool.map(one, idx):
                run += 1
                successes += ok
                if stop_value is not None and ok == stop_value:
                    return TrialBatch(x, run, successes, run < n_trials)
    return TrialBatch(x, run, successes, False)


def posterior_map(batch: TrialBatch) -> float:
    """Posterior mode of the success probability, ``n / N``."""
    if batch.early_stopped:
        raise InvalidInputError("posterior of an early-stopped batch is biased")
    if batch.trials_run <= 0:
        raise InvalidInputError("no trials run")
    return batch.successes / batch.trials_run


def posterior_cdf(p, successes: int, trials: int):
    """Posterior CDF of the success probability under a uniform prior."""
    return betainc(successes + 1, trials - successes + 1, np.clip(p, 0.0, 1.0))


def credible_interval(batch: TrialBatch, delta: float, tol: float = 1e-12) -> tuple[float, float]:
    """Interval around ``n/N`` holding posterior mass ``1 - delta``.

    Both sides get the same half-width; a side that would cross 0 or 1 is
    clipped and the other keeps widening until the mass is restored.
    """
    if batch.trials_run <= 0:
        raise InvalidInputError("no trials run")
    if not 0.0 < delta < 1.0:
        raise InvalidInputError("delta must lie in (0, 1)")
    n, big_n = batch.successes, batch.trials_run
    p_hat = n / big_n

    def mass(w):
        hi = min(1.0, p_hat + w)
        lo = max(0.0, p_hat - w)
        return float(posterior_cdf(hi, n, big_n) - posterior_cdf(lo, n, big_n))

    target = 1.0 - delta
    lo_w, hi_w = 0.0, 1.0
    while hi_w - lo_w > tol:
        mid = 0.5 * (lo_w + hi_w)
        if mass(mid) >= target:
            hi_w = mid
        else:
            lo_w = mid
    return max(0.0, p_hat - hi_w), min(1.0, p_hat + hi_w)


_MODE_TAG = {SUCCESS: 1, FAILURE: 2}


def _batch_verdict(model, x, n_trials, seed, mode, key, threads):
    stop = "on-failure" if mode == SUCCESS else "on-success"
    batch = estimate_batch(model, x, n_trials, seed, stop, key=key, threads=threads)
    passed = batch.all_success if mode == SUCCESS else batch.all_failure
    return passed, batch


def mcesb_search(model: TrialModel, config: BisectionConfig, spec: ConfidenceSpec,
                 master_seed: int, *, threads: int = 1) -> PredictionResult:
    """Bisection for the largest ``|x|`` supplied in every one of N trials
    (``guaranteed-success``) or the smallest ``|x|`` beyond which every trial
    fails (``guaranteed-failure``).

    Returns the certified end of the final bracket: the last all-success
    point, or the last all-failure point.
    """
    t0 = time.perf_counter()
    n_trials = max(required_trials(spec), 1)
    mode = config.mode
    tag = (_MODE_TAG[mode], 1 if config.sign > 0 else 2)
    inner, outer = float(config.a), float(config.b)
    trials_total = 0
    entries = []

    # the certified end must actually pass before bisecting
    check_x = inner if mode == SUCCESS else outer
    passed, batch = _batch_verdict(model, check_x, n_trials, master_seed, mode, (*tag, 0), threads)
    trials_total += batch.trials_run
    if not passed:
        raise DegenerateScenarioError(
            f"{mode} search: endpoint x={check_x:g} kW did not pass its {n_trials}-trial batch "
            f"({batch.successes}/{batch.trials_run} successes)")

    # inner holds the side where the mode's property fails to hold
    # (success mode: inner = all-success, outer = failing)
    it = 0
    x = math.nan
    while abs(inner - outer) >= config.tolerance:
        it += 1
        x = 0.5 * (inner + outer)
        passed, batch = _batch_verdict(model, x, n_trials, master_seed, mode, (*tag, it), threads)
        trials_total += batch.trials_run
        if mode == SUCCESS:
            if passed:
                inner = x
            else:
                outer = x
        else:
            if passed:
                outer = x
            else:
                inner = x
        entries.append({"iteration": it, "a": inner, "b": outer, "x": x,
                        "n": batch.successes, "N": batch.trials_run})
        log.debug("%s it=%d x=%.3f n=%d N=%d", mode, it, x, batch.successes, batch.trials_run)

    power = inner if mode == SUCCESS else outer
    return PredictionResult(
        power=power, iterations=it, trials_total=trials_total, confidence=spec, mode=mode,
        tolerance=config.tolerance, interval=(float(config.a), float(config.b)),
        final_midpoint=x, log=entries, wall_time=time.perf_counter() - t0)


def guaranteed_range(model: TrialModel, spec: ConfidenceSpec, pos_bound: float,
                     neg_bound: float, tolerance: float = 10.0, master_seed: int = 0, *,
                     threads: int = 1, detail: bool = False):
    """``(x_min, x_max)``: every power in between passed all N trials."""
    hi = mcesb_search(model, BisectionConfig(0.0, pos_bound, tolerance, SUCCESS), spec,
                      master_seed, threads=threads)
    lo = mcesb_search(model, BisectionConfig(0.0, neg_bound, tolerance, SUCCESS), spec,
                      master_seed, threads=threads)
    return (lo, hi) if detail else (lo.power, hi.power)


def zero_prob_bounds(model: TrialModel, spec: ConfidenceSpec, pos_bound: float,
                     neg_bound: float, tolerance: float = 10.0, master_seed: int = 0, *,
                     threads: int = 1, detail: bool = False):
    """``(x'_min, x'_max)``: beyond these every one of N trials failed."""
    hi = mcesb_search(model, BisectionConfig(0.0, pos_bound, tolerance, FAILURE), spec,
                      master_seed, threads=threads)
    lo = mcesb_search(model, BisectionConfig(0.0, neg_bound, tolerance, FAILURE), spec,
                      master_seed, threads=threads)
    return (lo, hi) if detail else (lo.power, hi.power)


def probability_curve(model: TrialModel, start: float, stop: float, points: int,
                      n_trials: int, delta: float, master_seed: int, *,
                      threads: int = 1) -> list[ProbabilityPoint]:
    """Full (no early stop) batches at ``points`` equally spaced powers."""
    if points < 2:
        raise InvalidInputError("points must be >= 2")
    out = []
    for k, x in enumerate(np.linspace(start, stop, points)):
        batch = estimate_batch(model, float(x), n_trials, master_seed, None,
                               key=(3, k), threads=threads)
        lo, hi = credible_interval(batch, delta)
        out.append(ProbabilityPoint(float(x), posterior_map(batch), lo, hi,
                                    batch.successes, batch.trials_run))
    return out
