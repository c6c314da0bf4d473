"""Analytic-vs-simulation residuals and SpCDC-vs-802.11p comparisons over a result table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .sweep import ResultRow, case_id


class IncomparableTable(ValueError):
    """The policies in a table were not evaluated on the same grid."""


@dataclass(frozen=True)
class Thresholds:
    pdr_abs: float = 0.03
    delay_rel: float = 0.10
    pdr_gain: float = 0.10
    reception_ratio: float = 0.5
    density_gap: tuple[float, float] = (5.0, 9.0)
    overload_frac: float = 1e-3
    heavy_point: tuple[str, int] = (case_id(6e6, 10, 200), 200)


@dataclass
class Check:
    name: str
    status: str  # "pass", "fail" or "skipped"
    detail: str

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(c.status == "fail" for c in self.checks)

    def text(self) -> str:
        body = list(self.lines)
        body.append("")
        body.append("acceptance checks")
        for c in self.checks:
            body.append(f"  [{c.status.upper():7s}] {c.name}: {c.detail}")
        return "\n".join(body) + "\n"


def _index(rows: list[ResultRow]) -> dict[tuple[str, int, str, str], ResultRow]:
    return {(r.case, r.n_vehicles, r.policy, r.source): r for r in rows if not r.error}


def _grid(rows: list[ResultRow]) -> list[tuple[str, int]]:
    return sorted({r.point() for r in rows})


def check_alignment(rows: list[ResultRow]) -> None:
    by_policy: dict[str, set] = {}
    for r in rows:
        by_policy.setdefault(r.policy, set()).add(r.point())
    grids = list(by_policy.values())
    if len(grids) > 1 and any(g != grids[0] for g in grids[1:]):
        sizes = ", ".join(f"{p}: {len(g)} points" for p, g in sorted(by_policy.items()))
        raise IncomparableTable(f"policies cover different grid points ({sizes})")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else math.inf


def _f(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4g}"


def _agreement(idx, grid, policy: str, th: Thresholds, with_pdr: bool) -> tuple[Check | None, Check | None, list[str]]:
    worst_pdr, worst_delay, n = 0.0, 0.0, 0
    bad_pdr, bad_delay = [], []
    lines = []
    for case, nv in grid:
        a = idx.get((case, nv, policy, "analytic"))
        s = idx.get((case, nv, policy, "simulation"))
        if a is None or s is None:
            continue
        n += 1
        dp = s.pdr - a.pdr
        dd = _rel(a.mean_delay_s, s.mean_delay_s)
        lines.append(f"  {case:18s} N={nv:3d} {policy:10s} dPDR={dp:+.4f} delay_rel_err={dd:.3f}")
        worst_pdr, worst_delay = max(worst_pdr, abs(dp)), max(worst_delay, dd)
        if abs(dp) > th.pdr_abs:
            bad_pdr.append(f"{case}/N={nv}")
        if not dd <= th.delay_rel:
            bad_delay.append(f"{case}/N={nv}")
    if n == 0:
        return None, None, lines

    def mk(name, worst, bad, lim):
        status = "fail" if bad else "pass"
        more = f"; out of tolerance at {', '.join(bad[:6])}{' ...' if len(bad) > 6 else ''}" if bad else ""
        return Check(name, status, f"worst {worst:.4f} vs limit {lim} over {n} points{more}")

    pdr_check = mk(f"{policy} PDR analytic vs simulation", worst_pdr, bad_pdr, th.pdr_abs) if with_pdr else None
    delay_check = mk(f"{policy} mean delay analytic vs simulation (relative)", worst_delay, bad_delay, th.delay_rel)
    return pdr_check, delay_check, lines


def compare_report(rows: list[ResultRow], th: Thresholds | None = None) -> Report:
    th = th or Thresholds()
    check_alignment(rows)
    idx = _index(rows)
    grid = _grid(rows)
    policies = sorted({r.policy for r in rows})
    rep = Report()
    rep.lines.append(f"{len(rows)} rows, {len(grid)} grid points, policies: {', '.join(policies)}")
    errors = [r for r in rows if r.error]
    if errors:
        rep.lines.append(f"{len(errors)} rows failed:")
        rep.lines += [f"  {r.case} N={r.n_vehicles} {r.policy} {r.source}: {r.error}" for r in errors]

    # analytic vs simulation
    rep.lines.append("")
    rep.lines.append("analytic vs simulation")
    for policy, with_pdr in (("dot11p", True), ("spcdc", False)):
        pc, dc, lines = _agreement(idx, grid, policy, th, with_pdr)
        rep.lines += lines
        rep.checks += [c for c in (pc, dc) if c is not None]

    # bound validity
    bound_pts, violations = 0, []
    for case, nv in grid:
        a = idx.get((case, nv, "spcdc", "analytic"))
        s = idx.get((case, nv, "spcdc", "simulation"))
        if a is None or s is None or s.pdr_ci_lo is None:
            continue
        bound_pts += 1
        if not a.pdr <= s.pdr_ci_lo:
            violations.append(f"{case}/N={nv} ({a.pdr:.4f} > {s.pdr_ci_lo:.4f})")
    if bound_pts:
        rep.checks.append(Check(
            "SpCDC PDR lower bound <= simulated PDR CI lower edge",
            "fail" if violations else "pass",
            f"{len(violations)} violations over {bound_pts} points" + (": " + ", ".join(violations[:6]) if violations else ""),
        ))

    # policy comparison per grid point
    ref = "dot11p@128" if "dot11p@128" in policies else "dot11p"
    if "spcdc" in policies and ("dot11p" in policies or ref in policies):
        rep.lines.append("")
        rep.lines.append(f"simulated SpCDC vs 802.11p (PDR vs dot11p, reception delay and density vs {ref})")
        for case, nv in grid:
            sp = idx.get((case, nv, "spcdc", "simulation"))
            d16 = idx.get((case, nv, "dot11p", "simulation"))
            dref = idx.get((case, nv, ref, "simulation"))
            if sp is None or (d16 is None and dref is None):
                continue
            dpdr = sp.pdr - d16.pdr if d16 else math.nan
            ratio = sp.mean_reception_delay_s / dref.mean_reception_delay_s if dref else math.nan
            ddens = dref.contention_density - sp.contention_density if dref else math.nan
            rep.lines.append(f"  {case:18s} N={nv:3d} dPDR={_f(dpdr)} rx_delay_ratio={_f(ratio)} d_density={_f(ddens)}")

    # heavy-load claims
    hc, hn = th.heavy_point
    sp = idx.get((hc, hn, "spcdc", "simulation"))
    d16 = idx.get((hc, hn, "dot11p", "simulation"))
    d128 = idx.get((hc, hn, "dot11p@128", "simulation"))
    where = f"{hc} N={hn}"
    if sp and d16:
        gain = sp.pdr - d16.pdr
        rep.checks.append(Check("SpCDC PDR gain over 802.11p CW=16", "pass" if gain >= th.pdr_gain else "fail",
                                f"{gain:+.4f} at {where} (need >= {th.pdr_gain})"))
    else:
        rep.checks.append(Check("SpCDC PDR gain over 802.11p CW=16", "skipped", f"no simulated rows at {where}"))
    if sp and d128:
        ratio = sp.mean_reception_delay_s / d128.mean_reception_delay_s
        gap = d128.contention_density - sp.contention_density
        lo, hi = th.density_gap
        rep.checks.append(Check("SpCDC / 802.11p CW=128 reception delay", "pass" if ratio <= th.reception_ratio else "fail",
                                f"{ratio:.3f} at {where} (need <= {th.reception_ratio})"))
        rep.checks.append(Check("802.11p CW=128 minus SpCDC contention density", "pass" if lo <= gap <= hi else "fail",
                                f"{gap:.3f} at {where} (need in [{lo}, {hi}])"))
    else:
        for name in ("SpCDC / 802.11p CW=128 reception delay", "802.11p CW=128 minus SpCDC contention density"):
            rep.checks.append(Check(name, "skipped", f"no simulated spcdc and dot11p@128 rows at {where}"))

    # overload drops
    sims = [r for r in idx.values() if r.source == "simulation" and r.generated]
    if sims:
        worst = max(sims, key=lambda r: r.overload_drops / r.generated)
        frac = worst.overload_drops / worst.generated
        rep.checks.append(Check("overload drops below 0.1% of generated", "pass" if frac < th.overload_frac else "fail",
                                f"worst {frac:.2e} ({worst.case} N={worst.n_vehicles} {worst.policy})"))
    return rep
