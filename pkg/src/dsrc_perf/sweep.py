"""Parameter sweeps over the vehicle count: analytic and simulated rows for each MAC."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable

from .dot11p_model import contention_density_dot11p, solve_fixed_point
from .params import InvalidParams, ScenarioParams, read_mapping, SCENARIO_KEYS, validate
from .sim.engine import DEFAULT_DURATION, DEFAULT_REPS, DEFAULT_WARMUP, run
from .spcdc_model import solve_spcdc_fixed_point

log = logging.getLogger(__name__)

DEFAULT_N_VALUES = tuple(range(10, 201, 10))
# (data_rate bit/s, lambda pkt/s, payload bytes)
DEFAULT_CASES = ((6e6, 10.0, 200), (12e6, 10.0, 400), (24e6, 2.0, 200))
SOURCES = ("analytic", "simulation")
# "dot11p@128" is 802.11p with the contention window overridden to 128
POLICY_LABELS = ("dot11p", "dot11p@128", "spcdc")

COLUMNS = (
    "case", "n_vehicles", "policy", "source", "pdr", "pdr_ci_lo", "pdr_ci_hi",
    "mean_delay_s", "mean_reception_delay_s", "contention_density",
    "overload_drops", "generated", "runtime_s", "seed", "error",
)


def case_id(data_rate: float, lambda_: float, payload_bytes: int) -> str:
    return f"{data_rate / 1e6:g}Mbps-{lambda_:g}pps-{int(payload_bytes)}B"


def parse_policy(label: str) -> tuple[str, int | None]:
    """Split ``"dot11p@128"`` into the MAC id and an optional CW override."""
    name, _, cw = label.partition("@")
    if name not in ("dot11p", "spcdc") or (cw and (name != "dot11p" or not cw.isdigit())):
        raise InvalidParams("policy", f"unknown policy label {label!r}")
    return name, int(cw) if cw else None


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioParams = field(default_factory=ScenarioParams)
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    cases: tuple[tuple[float, float, int], ...] = DEFAULT_CASES
    policies: tuple[str, ...] = ("dot11p", "spcdc")
    sources: tuple[str, ...] = SOURCES
    reps: int = DEFAULT_REPS
    duration: float = DEFAULT_DURATION
    warmup: float = DEFAULT_WARMUP
    seed: int = 0
    tol: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        if not self.policies:
            raise InvalidParams("policies", "at least one policy is required")
        for p in self.policies:
            parse_policy(p)
        for s in self.sources:
            if s not in SOURCES:
                raise InvalidParams("sources", f"unknown source {s!r}")
        if "simulation" in self.sources and self.reps < 2:
            raise InvalidParams("reps", "simulation rows need at least 2 replications for a CI")
        for pt in self.points():
            validate(pt[2])

    def points(self) -> list[tuple[str, int, ScenarioParams]]:
        out = []
        for rate, lam, payload in self.cases:
            for n in self.n_values:
                p = self.base.with_(data_rate=float(rate), lambda_=float(lam), payload_bytes=int(payload), n_vehicles=int(n))
                out.append((case_id(rate, lam, payload), int(n), p))
        return out

    def fingerprint(self) -> dict[str, Any]:
        """Everything that changes a row's value; policies and sources only select rows."""
        return {
            "base": self.base.to_dict(),
            "n_values": list(self.n_values),
            "cases": [list(c) for c in self.cases],
            "reps": self.reps,
            "duration": self.duration,
            "warmup": self.warmup,
            "seed": self.seed,
            "tol": self.tol,
        }

    @classmethod
    def from_mapping(cls, data: dict[str, Any], **overrides) -> SweepSpec:
        base = ScenarioParams.from_dict({k: v for k, v in data.items() if k in SCENARIO_KEYS})
        kw: dict[str, Any] = {"base": base}
        if "n_values" in data:
            kw["n_values"] = tuple(int(v) for v in data["n_values"])
        if "cases" in data:
            kw["cases"] = tuple((float(c[0]), float(c[1]), int(c[2])) for c in data["cases"])
        if "policies" in data:
            kw["policies"] = tuple(_as_list(data["policies"]))
        if "sources" in data:
            kw["sources"] = tuple(_as_list(data["sources"]))
        for key, conv in (("reps", int), ("duration", float), ("warmup", float), ("seed", int), ("tol", float), ("workers", int)):
            if key in data:
                kw[key] = conv(data[key])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> SweepSpec:
        return cls.from_mapping(read_mapping(path), **overrides)


def _as_list(value) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


@dataclass
class ResultRow:
    case: str
    n_vehicles: int
    policy: str
    source: str
    pdr: float = math.nan
    pdr_ci_lo: float | None = None
    pdr_ci_hi: float | None = None
    mean_delay_s: float = math.nan
    mean_reception_delay_s: float = math.nan
    contention_density: float = math.nan
    overload_drops: int | None = None
    generated: int | None = None
    runtime_s: float = 0.0
    seed: int | None = None
    error: str = ""

    def sort_key(self):
        return (self.case, self.n_vehicles, self.policy, self.source)

    def point(self) -> tuple[str, int]:
        return self.case, self.n_vehicles


# -- evaluation -------------------------------------------------------------

def analytic_row(case: str, params: ScenarioParams, label: str, tol: float = 1e-10) -> ResultRow:
    name, cw = parse_policy(label)
    p = params.with_(cw=cw) if cw else params
    row = ResultRow(case, p.n_vehicles, label, "analytic")
    t0 = time.perf_counter()
    try:
        if name == "dot11p":
            a = solve_fixed_point(p, tol=tol)
            row.pdr, row.mean_delay_s, row.mean_reception_delay_s = a.pdr, a.e_s, a.e_tre
            row.contention_density = contention_density_dot11p(a, p)
        else:
            s = solve_spcdc_fixed_point(p, tol=tol)
            row.pdr, row.mean_delay_s, row.mean_reception_delay_s = s.pdr_lower, s.e_td, s.e_tre
            row.contention_density = s.c_s
    except Exception as exc:  # recorded per row, the sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
    row.runtime_s = time.perf_counter() - t0
    return row


def simulation_row(
    case: str, params: ScenarioParams, label: str, *, reps: int, duration: float, warmup: float, seed: int
) -> ResultRow:
    name, cw = parse_policy(label)
    p = params.with_(cw=cw) if cw else params
    row = ResultRow(case, p.n_vehicles, label, "simulation", seed=seed)
    t0 = time.perf_counter()
    try:
        m = run(p, name, duration, warmup, seed, reps).metrics
        row.pdr = m.pdr
        row.pdr_ci_lo, row.pdr_ci_hi = m.pdr_ci
        row.mean_delay_s = m.mean_service_s
        row.mean_reception_delay_s = m.mean_reception_s
        row.contention_density = m.contention_density
        row.overload_drops, row.generated = m.dropped, m.generated
    except Exception as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    row.runtime_s = time.perf_counter() - t0
    return row


def _task(args) -> ResultRow:
    kind, case, params, label, opts = args
    if kind == "analytic":
        return analytic_row(case, params, label, opts["tol"])
    return simulation_row(case, params, label, reps=opts["reps"], duration=opts["duration"],
                          warmup=opts["warmup"], seed=opts["seed"])


def sweep_tasks(spec: SweepSpec) -> list[tuple]:
    opts = dict(tol=spec.tol, reps=spec.reps, duration=spec.duration, warmup=spec.warmup, seed=spec.seed)
    return [
        (source, case, params, label, opts)
        for case, _, params in spec.points()
        for label in spec.policies
        for source in spec.sources
    ]


def _spec_path(out_csv: Path) -> Path:
    return out_csv.with_name(out_csv.name + ".spec.json")


def _resumable(spec: SweepSpec, out_csv: Path) -> list[ResultRow]:
    """Rows of an earlier run of the same spec, or [] when there is nothing safe to reuse."""
    side = _spec_path(out_csv)
    if not (out_csv.exists() and side.exists()):
        return []
    try:
        if json.loads(side.read_text(encoding="utf-8")) != json.loads(json.dumps(spec.fingerprint())):
            log.info("%s was produced with different sweep settings; starting over", out_csv)
            return []
        # an interrupted run can leave a torn last line
        with open(out_csv, encoding="utf-8") as fh:
            lines = fh.readlines()
        if lines and not lines[-1].endswith("\n"):
            lines = lines[:-1]
        reader = csv.DictReader(lines)
        return [ResultRow(**{c: _parse(c, rec[c]) for c in COLUMNS}) for rec in reader if None not in rec.values()]
    except (ValueError, KeyError, TypeError) as exc:
        log.warning("cannot resume from %s: %s", out_csv, exc)
        return []


def run_sweep(
    spec: SweepSpec, out_csv: str | Path | None = None, progress=None, resume: bool = False
) -> list[ResultRow]:
    """Evaluate every (case, N, policy, source) cell.

    With ``out_csv`` each finished row is appended and flushed immediately, so
    an interrupted sweep keeps what it finished; the file is rewritten sorted
    at the end. ``resume`` reuses those rows when the settings are unchanged.
    """
    tasks = sweep_tasks(spec)
    rows: list[ResultRow] = []
    fh = None
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        wanted = {(t[1], t[2].n_vehicles, t[3], t[0]) for t in tasks}
        if resume:
            rows = [r for r in _resumable(spec, out_csv) if r.sort_key() in wanted and not r.error]
            done = {r.sort_key() for r in rows}
            tasks = [t for t in tasks if (t[1], t[2].n_vehicles, t[3], t[0]) not in done]
            if rows:
                log.info("resuming: %d rows reused, %d to go", len(rows), len(tasks))
        write_csv(rows, out_csv)
        _spec_path(out_csv).write_text(json.dumps(spec.fingerprint(), indent=2) + "\n", encoding="utf-8")
        fh = open(out_csv, "a", newline="", encoding="utf-8")
    try:
        if spec.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                results: Iterable[ResultRow] = pool.map(_task, tasks)
                for row in results:
                    _collect(row, rows, fh, progress)
        else:
            for t in tasks:
                _collect(_task(t), rows, fh, progress)
    finally:
        if fh is not None:
            fh.close()
    rows.sort(key=ResultRow.sort_key)
    if out_csv is not None:
        write_csv(rows, out_csv)
    return rows


def _collect(row: ResultRow, rows: list, fh, progress) -> None:
    if row.error:
        log.warning("%s N=%d %s %s failed: %s", row.case, row.n_vehicles, row.policy, row.source, row.error)
    rows.append(row)
    if fh is not None:
        fh.write(_csv_line(row))
        fh.flush()
    if progress is not None:
        progress(row)


# -- serialisation ---------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(int(value)) if not isinstance(value, str) else value


def _csv_line(row: ResultRow) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_fmt(getattr(row, c)) for c in COLUMNS])
    return buf.getvalue()


_TYPES = {f.name: f.type for f in fields(ResultRow)}


def _parse(col: str, text: str):
    kind = _TYPES[col]
    if col in ("case", "policy", "source", "error"):
        return text
    if text == "":
        return None if "None" in kind else math.nan
    if kind.startswith("int"):
        return int(text)
    return float(text)


def write_csv(rows: Iterable[ResultRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in rows:
            fh.write(_csv_line(row))


def read_csv(path: str | Path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow(**{c: _parse(c, rec[c]) for c in COLUMNS}) for rec in reader]


def _json_safe(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def write_json(rows: Iterable[ResultRow], path: str | Path) -> None:
    payload = [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
