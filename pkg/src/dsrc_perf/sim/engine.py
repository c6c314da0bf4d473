"""Seeded Monte Carlo runs of the shared broadcast channel.

Each vehicle generates one packet every ``1/lambda`` seconds from a phase
drawn uniformly at the start of the replication.  All timing lives on the
slot grid: DIFS is ``difs/slot`` slots and a transmission occupies
``ceil(t_tr/slot)`` slots.  Delays are reported in seconds with the
continuous ``t_tr`` added to the slot-quantised access delay.

Random numbers come from numpy's Philox4x64 counter-based generator keyed
with ``seed ^ replication``.  Every draw a replication can need (phases,
one backoff draw per packet, one SpCDC perturbation per epoch) is made up
front in a fixed order, so a run is bit-reproducible and the fast and
reference engines see the same randomness.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from ..params import ScenarioParams, derive_timing
from ..policies import POLICIES
from . import kernels
from .kernels import COLLIDED, DELIVERED, DROPPED, IN_FLIGHT, NOT_GENERATED
from .reference import simulate_reference

log = logging.getLogger(__name__)

CI_LEVEL = 0.99
DEFAULT_WARMUP = 2.0
DEFAULT_DURATION = 100.0
DEFAULT_REPS = 20

OUTCOME_NAMES = {DELIVERED: "delivered", COLLIDED: "collided", DROPPED: "dropped", IN_FLIGHT: "in_flight"}


class InvalidPolicy(ValueError):
    pass


def policy_id(policy: str) -> int:
    try:
        return POLICIES.index(policy)
    except ValueError:
        raise InvalidPolicy(f"unknown policy {policy!r}; expected one of {POLICIES}") from None


def make_rng(seed: int, replication: int) -> np.random.Generator:
    key = (int(seed) ^ int(replication)) & 0xFFFF_FFFF_FFFF_FFFF
    return np.random.Generator(np.random.Philox(key))


@dataclass
class SimTrace:
    """Per-packet records of one replication (generated packets only)."""

    vehicle: np.ndarray
    gen_slot: np.ndarray
    tx_slot: np.ndarray
    outcome: np.ndarray
    slot: float
    t_tr: float
    period_slots: int
    warmup_slot: int
    end_slot: int

    @property
    def gen_time_s(self) -> np.ndarray:
        return self.gen_slot * self.slot

    @property
    def tx_start_s(self) -> np.ndarray:
        return np.where(self.tx_slot >= 0, self.tx_slot * self.slot, np.nan)

    @property
    def access_delay_s(self) -> np.ndarray:
        return np.where(self.tx_slot >= 0, (self.tx_slot - self.gen_slot) * self.slot, np.nan)

    @property
    def service_time_s(self) -> np.ndarray:
        return self.access_delay_s + self.t_tr

    def to_csv(self, path: str | Path) -> None:
        cols = ("vehicle_id", "gen_time_s", "tx_start_s", "outcome", "access_delay_s", "service_time_s")
        tx, acc, svc = self.tx_start_s, self.access_delay_s, self.service_time_s
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self.vehicle)):
                sent = self.tx_slot[k] >= 0
                w.writerow([
                    int(self.vehicle[k]),
                    repr(float(self.gen_time_s[k])),
                    repr(float(tx[k])) if sent else "",
                    OUTCOME_NAMES[int(self.outcome[k])],
                    repr(float(acc[k])) if sent else "",
                    repr(float(svc[k])) if sent else "",
                ])


@dataclass
class RepStats:
    generated: int
    delivered: int
    collided: int
    dropped: int
    in_flight: int
    sum_access: float
    sum_service: float
    n_sent: int
    sum_reception: float
    n_reception: int
    density: float
    events: int

    @property
    def pdr(self) -> float:
        done = self.delivered + self.collided
        return self.delivered / done if done else float("nan")


@dataclass
class SimMetrics:
    pdr: float
    pdr_ci: tuple[float, float]
    mean_service_s: float
    mean_access_s: float
    mean_reception_s: float
    contention_density: float
    generated: int
    delivered: int
    collided: int
    dropped: int
    in_flight: int
    replications: int
    seed: int
    per_rep: list[RepStats] = field(default_factory=list, repr=False)

    @property
    def pdr_half_width(self) -> float:
        # the CI is clipped to [0, 1], so take the wider side
        lo, hi = self.pdr_ci
        return max(self.pdr - lo, hi - self.pdr)

    @property
    def overload_fraction(self) -> float:
        return self.dropped / self.generated if self.generated else 0.0


@dataclass
class SimResult:
    metrics: SimMetrics
    traces: list[SimTrace] = field(default_factory=list)


# -- estimators --------------------------------------------------------------

def reception_delay_accumulate(delivered, service_time, lambda_: float) -> float:
    """Mean reception delay over one vehicle's packets in generation order.

    A delivered packet preceded by ``f`` consecutive failed packets waited
    ``f/lambda`` extra seconds.  Failures after the last delivery are ignored.
    Returns NaN when nothing was delivered.
    """
    contrib = _reception_contributions(np.asarray(delivered, bool), np.asarray(service_time, float), lambda_)
    return float(np.mean(contrib)) if len(contrib) else float("nan")


def _reception_contributions(delivered: np.ndarray, service: np.ndarray, lambda_: float) -> np.ndarray:
    pos = np.flatnonzero(delivered)
    if len(pos) == 0:
        return np.empty(0)
    run = np.diff(np.concatenate(([-1], pos))) - 1
    return run / lambda_ + service[pos]


def contention_density_sample(waiting) -> int:
    """Number of vehicles holding a generated but unsent packet at a slot boundary."""
    return int(np.count_nonzero(waiting))


def mean_contention_density(trace: SimTrace) -> float:
    """Time average of :func:`contention_density_sample` over the measurement window."""
    lo, hi = trace.warmup_slot, trace.end_slot
    if hi <= lo:
        return float("nan")
    start = trace.gen_slot
    stop = np.where(trace.tx_slot >= 0, trace.tx_slot, hi)
    dropped = trace.outcome == DROPPED
    stop = np.where(dropped, trace.gen_slot + trace.period_slots, stop)
    overlap = np.clip(np.minimum(stop, hi) - np.maximum(start, lo), 0, None)
    return math.fsum(overlap.tolist()) / (hi - lo)


def trace_stats(trace: SimTrace, lambda_: float, events: int = 0) -> RepStats:
    in_win = trace.gen_slot >= trace.warmup_slot
    out = trace.outcome
    sent = in_win & ((out == DELIVERED) | (out == COLLIDED))
    access = trace.access_delay_s[sent]

    rec_sum, rec_n = 0.0, 0
    order = np.lexsort((trace.gen_slot, trace.vehicle))
    veh, svc, ok, win = trace.vehicle[order], trace.service_time_s[order], out[order] == DELIVERED, in_win[order]
    bounds = np.flatnonzero(np.diff(veh)) + 1
    for lo, hi in zip(np.concatenate(([0], bounds)), np.concatenate((bounds, [len(veh)]))):
        d = ok[lo:hi]
        contrib = _reception_contributions(d, svc[lo:hi], lambda_)
        keep = win[lo:hi][d]
        rec_sum += math.fsum(contrib[keep].tolist())
        rec_n += int(keep.sum())

    return RepStats(
        generated=int(in_win.sum()),
        delivered=int((in_win & (out == DELIVERED)).sum()),
        collided=int((in_win & (out == COLLIDED)).sum()),
        dropped=int((in_win & (out == DROPPED)).sum()),
        in_flight=int((in_win & (out == IN_FLIGHT)).sum()),
        sum_access=math.fsum(access.tolist()),
        sum_service=math.fsum((access + trace.t_tr).tolist()),
        n_sent=int(sent.sum()),
        sum_reception=rec_sum,
        n_reception=rec_n,
        density=mean_contention_density(trace),
        events=events,
    )


def merge(reps: list[RepStats], seed: int) -> SimMetrics:
    """Pool replications; order-independent up to compensated summation."""
    tot = lambda name: sum(getattr(r, name) for r in reps)  # noqa: E731
    fs = lambda name: math.fsum(getattr(r, name) for r in reps)  # noqa: E731
    delivered, collided = tot("delivered"), tot("collided")
    done = delivered + collided
    pdr = delivered / done if done else float("nan")
    pdrs = np.array([r.pdr for r in reps])
    if len(reps) >= 2:
        half = stats.t.ppf(0.5 + CI_LEVEL / 2.0, len(reps) - 1) * pdrs.std(ddof=1) / math.sqrt(len(reps))
    else:
        half = float("nan")
    n_sent = tot("n_sent")
    n_rec = tot("n_reception")
    return SimMetrics(
        pdr=pdr,
        pdr_ci=(max(pdr - half, 0.0), min(pdr + half, 1.0)),
        mean_service_s=fs("sum_service") / n_sent if n_sent else float("nan"),
        mean_access_s=fs("sum_access") / n_sent if n_sent else float("nan"),
        mean_reception_s=fs("sum_reception") / n_rec if n_rec else float("nan"),
        contention_density=math.fsum(r.density for r in reps) / len(reps),
        generated=tot("generated"),
        delivered=delivered,
        collided=collided,
        dropped=tot("dropped"),
        in_flight=tot("in_flight"),
        replications=len(reps),
        seed=seed,
        per_rep=list(reps),
    )


# -- driver ------------------------------------------------------------------

ENGINES = ("fast", "numba", "numpy", "reference")


def _kernel(engine: str):
    if engine == "fast":
        return kernels.simulate
    if engine == "numba":
        return kernels.simulate_numba
    if engine == "numpy":
        return kernels.simulate_numpy
    if engine == "reference":
        return simulate_reference
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def run_replication(
    params: ScenarioParams,
    policy: str,
    sim_duration: float,
    warmup: float,
    seed: int,
    replication: int = 0,
    *,
    phases=None,
    initial_busy_slots: int = 0,
    oracle: bool = False,
    engine: str = "fast",
) -> tuple[SimTrace, int]:
    pid = policy_id(policy)
    timing = derive_timing(params)
    period = timing.period_slots
    end_slot = int(round(sim_duration / params.slot))
    warm_slot = int(round(warmup / params.slot))
    n = params.n_vehicles
    n_pk = -(-end_slot // period) + 1
    epoch = max(1, int(round(params.spcdc_period * params.lambda_)))

    rng = make_rng(seed, replication)
    # continuous phase in slot units: integer part places the generation on
    # the grid, the fraction orders same-slot arrivals
    cont_phase = rng.random(n) * period
    cw_draws = rng.integers(0, params.cw, size=(n, n_pk), dtype=np.int64)
    omega = rng.integers(-1, 2, size=(n, n_pk // epoch + 1), dtype=np.int64)
    if phases is None:
        phase = np.floor(cont_phase).astype(np.int64)
        frac = cont_phase - phase
    else:
        phase = np.asarray(phases, dtype=np.int64)
        frac = np.zeros(n)
        if phase.shape != (n,):
            raise ValueError("phases must hold one slot offset per vehicle")

    tx_slot = np.full((n, n_pk), -1, np.int64)
    outcome = np.full((n, n_pk), NOT_GENERATED, np.int8)
    events = _kernel(engine)(
        pid, phase, frac, period, end_slot, timing.slots_per_tx, timing.difs_slots,
        cw_draws, omega, epoch, params.spcdc_c, int(initial_busy_slots), bool(oracle),
        tx_slot, outcome,
    )
    gen = outcome != NOT_GENERATED
    veh, j = np.nonzero(gen)
    trace = SimTrace(
        vehicle=veh.astype(np.int64),
        gen_slot=phase[veh] + j * period,
        tx_slot=tx_slot[gen],
        outcome=outcome[gen],
        slot=params.slot,
        t_tr=timing.t_tr,
        period_slots=period,
        warmup_slot=warm_slot,
        end_slot=end_slot,
    )
    return trace, int(events)


def _one(args) -> tuple[RepStats, SimTrace | None]:
    params, policy, duration, warmup, seed, r, keep_trace, kw = args
    trace, events = run_replication(params, policy, duration, warmup, seed, r, **kw)
    return trace_stats(trace, params.lambda_, events), (trace if keep_trace else None)


def run(
    params: ScenarioParams,
    policy: str,
    sim_duration: float = DEFAULT_DURATION,
    warmup: float = DEFAULT_WARMUP,
    seed: int = 0,
    reps: int = DEFAULT_REPS,
    *,
    trace: bool = False,
    workers: int = 1,
    **kw,
) -> SimResult:
    """Run ``reps`` independent replications and pool their metrics.

    Extra keywords go to :func:`run_replication` (``phases``,
    ``initial_busy_slots``, ``oracle``, ``engine``).
    """
    policy_id(policy)
    if not sim_duration > warmup >= 0:
        raise ValueError("need sim_duration > warmup >= 0")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    jobs = [(params, policy, sim_duration, warmup, seed, r, trace, kw) for r in range(reps)]
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(job) for job in jobs]
    reps_stats = [r[0] for r in results]
    metrics = merge(reps_stats, seed)
    if metrics.dropped:
        log.warning(
            "%s: %d of %d packets replaced before transmission (overload)",
            policy, metrics.dropped, metrics.generated,
        )
    return SimResult(metrics, [r[1] for r in results if r[1] is not None])
