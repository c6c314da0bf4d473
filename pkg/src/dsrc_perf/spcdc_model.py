"""Steady-state model of semi-persistent contention density control (SpCDC).

The unknowns are the mean contention density ``c_s`` and the collision
probability used for the packets-per-busy-slot term.  Given them, the
zero-contender probability, busy-slot occupancy ``gamma``, busy/idle delay
split and the collision upper bound all follow in closed form.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .dot11p_model import NoConvergence, mean_collision_delay
from .params import ScenarioParams, derive_timing

P0_GUARD = 1e-12


class Saturated(RuntimeError):
    """The channel cannot drain the offered load; the drift balance has no root."""


@dataclass(frozen=True)
class SpcdcAnalysis:
    c_s: float
    gamma: float
    p_ck0: float
    n_b: float
    e_tdb: float
    e_tdi: float
    e_td: float
    p_c_upper: float
    pdr_lower: float
    e_tc: float
    e_tre: float
    t_tr: float
    iterations: int
    residual: float
    gamma_clamped: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def zero_contender_prob(c_s: float, n_vehicles: int) -> float:
    if n_vehicles <= 1:
        return 1.0
    return (1.0 - c_s / (n_vehicles - 1)) ** (n_vehicles - 1)


def gamma_from_state(
    params: ScenarioParams, c_s: float, p_ck0: float, n_b: float, t_tr: float | None = None
) -> tuple[float, bool]:
    """Busy-slot occupancy given at least one contender, from the zero-drift balance.

    Returns ``(gamma, clamped)``; ``clamped`` is True when the raw value left [0, 1].
    """
    if t_tr is None:
        t_tr = derive_timing(params).t_tr
    load = params.lambda_ * params.n_vehicles
    drain = n_b - load * (t_tr - params.slot)
    if drain <= 0:
        raise Saturated(f"busy slots carry {n_b:.3g} packets but {load * (t_tr - params.slot):.3g} arrive per busy slot")
    if p_ck0 >= 1.0:
        return (1.0, True) if load > 0 else (0.0, False)
    raw = load * params.slot / ((1.0 - p_ck0) * drain)
    if raw > 1.0:
        return 1.0, True
    return max(raw, 0.0), raw < 0.0


def busy_slot_delay(c_s: float, p_ck0: float, t_tr: float) -> float:
    """Own transmission plus the contenders' busy slots (half of the ongoing one)."""
    return (c_s + 0.5 * (1.0 + p_ck0)) * t_tr


def busy_slot_delay_by_sum(pmf: np.ndarray, t_tr: float) -> float:
    """Same quantity as :func:`busy_slot_delay` from an explicit contender pmf."""
    j = np.arange(len(pmf), dtype=float)
    return (1.0 + math.fsum(pmf[1:] * (j[1:] - 0.5))) * t_tr


def contender_pmf(c_s: float, n_vehicles: int) -> np.ndarray:
    """Binomial(N-1, c_s/(N-1)) contender law; its zero mass matches :func:`zero_contender_prob`."""
    n = max(n_vehicles - 1, 0)
    if n == 0:
        return np.array([1.0])
    return stats.binom.pmf(np.arange(n + 1), n, c_s / n)


def idle_slot_delay(c_s: float, spcdc_c: float, slot: float) -> float:
    return (spcdc_c * (c_s + 1.0) - c_s) * slot


def collision_upper_bound(gamma: float, c_s: float, p_ck0: float, spcdc_c: float) -> float:
    """Worst-case collision probability over the C(c_s+1) backoff slots."""
    exponent = spcdc_c * (c_s + 1.0) - 1.0
    later = (1.0 - (1.0 - gamma) ** c_s) ** exponent
    return (1.0 - p_ck0) * (gamma + (1.0 - gamma) * later)


def drift_balance_residual(params: ScenarioParams, t_tr: float, gamma: float, p_ck0: float, n_b: float) -> float:
    """Expected one-slot change of the contention density; zero in steady state."""
    load = params.lambda_ * params.n_vehicles
    p_idle = p_ck0 + (1.0 - p_ck0) * (1.0 - gamma)
    p_busy = (1.0 - p_ck0) * gamma
    return load * params.slot * p_idle + (load * t_tr - n_b) * p_busy


def _step(params: ScenarioParams, t_tr: float, c_s: float, p_c: float):
    n = params.n_vehicles
    p_ck0 = min(zero_contender_prob(c_s, n), 1.0 - P0_GUARD)
    n_b = 1.0 + p_c
    gamma, clamped = gamma_from_state(params, c_s, p_ck0, n_b, t_tr)
    e_tdb = busy_slot_delay(c_s, p_ck0, t_tr)
    e_tdi = idle_slot_delay(c_s, params.spcdc_c, params.slot)
    e_td = e_tdb + e_tdi
    c_s_new = params.lambda_ * (n - 1) * e_td
    p_c_new = collision_upper_bound(gamma, c_s, p_ck0, params.spcdc_c)
    return c_s_new, p_c_new, dict(p_ck0=p_ck0, n_b=n_b, gamma=gamma, clamped=clamped, e_tdb=e_tdb, e_tdi=e_tdi, e_td=e_td)


def solve_spcdc_fixed_point(
    params: ScenarioParams,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    damping: float = 0.5,
) -> SpcdcAnalysis:
    if tol <= 0:
        raise ValueError("tol must be positive")
    t_tr = derive_timing(params).t_tr

    if params.n_vehicles == 1:
        e_tdb = busy_slot_delay(0.0, 1.0, t_tr)
        e_tdi = idle_slot_delay(0.0, params.spcdc_c, params.slot)
        return SpcdcAnalysis(
            c_s=0.0, gamma=0.0, p_ck0=1.0, n_b=1.0, e_tdb=e_tdb, e_tdi=e_tdi, e_td=e_tdb + e_tdi,
            p_c_upper=0.0, pdr_lower=1.0, e_tc=0.0, e_tre=e_tdb + e_tdi, t_tr=t_tr,
            iterations=0, residual=0.0,
        )

    c_s, p_c = 0.0, 0.0
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        c_new, p_new, _ = _step(params, t_tr, c_s, p_c)
        # contention density cannot exceed the number of other vehicles
        c_new = min(max(c_new, 0.0), params.n_vehicles - 1.0)
        residual = max(abs(c_new - c_s), abs(p_new - p_c))
        c_s = damping * c_s + (1.0 - damping) * c_new
        p_c = damping * p_c + (1.0 - damping) * p_new
        if residual < tol:
            break
    else:
        raise NoConvergence(
            f"SpCDC fixed point did not converge in {max_iter} iterations",
            dict(c_s=c_s, p_c_upper=p_c),
            residual,
        )

    _, p_c_upper, s = _step(params, t_tr, c_s, p_c)
    e_tc = mean_collision_delay(p_c_upper, params.lambda_)
    return SpcdcAnalysis(
        c_s=c_s,
        gamma=s["gamma"],
        p_ck0=s["p_ck0"],
        n_b=s["n_b"],
        e_tdb=s["e_tdb"],
        e_tdi=s["e_tdi"],
        e_td=s["e_td"],
        p_c_upper=p_c_upper,
        pdr_lower=1.0 - p_c_upper,
        e_tc=e_tc,
        e_tre=s["e_td"] + e_tc,
        t_tr=t_tr,
        iterations=it,
        residual=residual,
        gamma_clamped=s["clamped"],
    )
