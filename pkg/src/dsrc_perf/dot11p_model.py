"""Fixed-point model of 802.11p periodic broadcast (DCF, fixed CW, no ACK).

Unknowns are the buffer occupancy ``rho``, the busy-on-arrival probability
``p_b`` and the collision probability ``p_c``.  Everything else (backoff,
interruption and residual times, access and service delay) is a closed-form
function of those three, so the solver iterates on the triple only.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .params import ScenarioParams, derive_timing

# mean packets involved in a collision; only pairwise collisions are modelled
N_COLLIDED = 2.0


class NoConvergence(RuntimeError):
    def __init__(self, message: str, iterate: dict, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class Infeasible(RuntimeError):
    """Converged occupancy exceeds one: the offered load cannot be served."""


class ModelValidityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Dot11pAnalysis:
    rho: float
    p_b: float
    p_c: float
    pdr: float
    pi0: float
    pi_m: np.ndarray
    n_c: float
    e_m: float
    e_ti: float
    e_tb: float
    e_tres: float
    e_ta: float
    e_s: float
    e_tc: float
    e_tre: float
    cs_prime: float
    t_tr: float
    iterations: int
    residual: float
    p_b_clamped: bool = False

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pi_m"] = self.pi_m.tolist()
        return d


def pi0(cw: int) -> float:
    """Per-slot transmit probability of a vehicle in backoff, 2/(1+CW)."""
    if cw < 1:
        raise ValueError("cw must be >= 1")
    return 2.0 / (1.0 + cw)


def stationary_backoff_distribution(cw: int) -> np.ndarray:
    """Stationary law of the backoff counter chain: pi_m = (CW-m)/CW * pi_0."""
    p0 = pi0(cw)
    m = np.arange(cw, dtype=float)
    return (cw - m) / cw * p0


def mean_collision_delay(p_c: float, lambda_: float) -> float:
    """Mean extra wait, in seconds, for the first collision-free packet."""
    if not 0.0 <= p_c <= 1.0:
        raise ValueError("p_c must lie in [0, 1]")
    if lambda_ <= 0:
        raise ValueError("lambda must be positive")
    if p_c >= 1.0:
        raise ZeroDivisionError("collision delay is unbounded at p_c = 1")
    return p_c / ((1.0 - p_c) * lambda_)


def _interrupt_prob(rho: float, p0: float, n: int) -> float:
    return 1.0 - (1.0 - rho * p0) ** (n - 1)


def _delays(params: ScenarioParams, t_tr: float, rho: float, p_b: float) -> dict:
    p = params
    p0 = pi0(p.cw)
    e_m = (p.cw - 1) / 2.0
    e_ti = _interrupt_prob(rho, p0, p.n_vehicles) * (t_tr + p.difs)
    e_tb = (p.slot + e_ti) * e_m
    e_tres = t_tr / 2.0 + p.difs
    e_ta = p.difs + p_b * (e_tb + e_tres)
    e_s = e_ta + t_tr
    return dict(e_m=e_m, e_ti=e_ti, e_tb=e_tb, e_tres=e_tres, e_ta=e_ta, e_s=e_s)


def _map(params: ScenarioParams, t_tr: float, rho: float, p_b: float, p_c: float):
    """One simultaneous substitution of the coupled system.

    Returns the raw (unclamped) images so that infeasibility is detectable.
    """
    n = params.n_vehicles
    p0 = pi0(params.cw)
    p_b_raw = (n - 1) * params.lambda_ * t_tr * (1.0 - (N_COLLIDED - 1.0) / N_COLLIDED * p_c)
    p_c_new = p_b * _interrupt_prob(rho, p0, n)
    rho_raw = params.lambda_ * _delays(params, t_tr, rho, p_b)["e_s"]
    return rho_raw, p_b_raw, p_c_new


def solve_fixed_point(
    params: ScenarioParams,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    damping: float = 0.5,
) -> Dot11pAnalysis:
    """Solve for (rho, p_b, p_c) by damped simultaneous substitution.

    ``damping`` is the weight kept on the old iterate (0 = plain substitution).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    timing = derive_timing(params)
    t_tr = timing.t_tr

    rho, p_b, p_c = 0.0, 0.0, 0.0
    residual = np.inf
    clamped = False
    it = 0
    for it in range(1, max_iter + 1):
        rho_raw, p_b_raw, p_c_new = _map(params, t_tr, rho, p_b, p_c)
        clamped = p_b_raw > 1.0
        target = (min(max(rho_raw, 0.0), 1.0), min(max(p_b_raw, 0.0), 1.0), min(max(p_c_new, 0.0), 1.0))
        residual = max(abs(target[0] - rho), abs(target[1] - p_b), abs(target[2] - p_c))
        rho = damping * rho + (1.0 - damping) * target[0]
        p_b = damping * p_b + (1.0 - damping) * target[1]
        p_c = damping * p_c + (1.0 - damping) * target[2]
        if residual < tol:
            break
    else:
        raise NoConvergence(
            f"802.11p fixed point did not converge in {max_iter} iterations",
            dict(rho=rho, p_b=p_b, p_c=p_c),
            residual,
        )

    rho_raw, _, _ = _map(params, t_tr, rho, p_b, p_c)
    if rho_raw > 1.0:
        raise Infeasible(f"converged buffer occupancy {rho_raw:.4g} > 1")
    if clamped:
        warnings.warn(
            "busy-on-arrival probability exceeded 1 and was clamped; model outside its validity range",
            ModelValidityWarning,
            stacklevel=2,
        )

    d = _delays(params, t_tr, rho, p_b)
    e_tc = mean_collision_delay(p_c, params.lambda_)
    p0 = pi0(params.cw)
    return Dot11pAnalysis(
        rho=rho,
        p_b=p_b,
        p_c=p_c,
        pdr=1.0 - p_c,
        pi0=p0,
        pi_m=stationary_backoff_distribution(params.cw),
        n_c=N_COLLIDED,
        e_tc=e_tc,
        e_tre=d["e_s"] + e_tc,
        cs_prime=_contention_density(params.cw, rho, p0, params.n_vehicles),
        t_tr=t_tr,
        iterations=it,
        residual=residual,
        p_b_clamped=clamped,
        **d,
    )


def _contention_density(cw: int, rho: float, p0: float, n: int) -> float:
    return (cw - 1) * _interrupt_prob(rho, p0, n) / 2.0


def contention_density_dot11p(analysis: Dot11pAnalysis, params: ScenarioParams) -> float:
    """Mean contention density of 802.11p.

    The per-slot attempt probability in this expression is taken to be the
    backoff transmit probability pi_0 (the same term as in the interruption
    probability).
    """
    return _contention_density(params.cw, analysis.rho, analysis.pi0, params.n_vehicles)
