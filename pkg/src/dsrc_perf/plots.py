"""Deterministic hand-written SVG line charts of a result table.

Analytic values are drawn as polylines, simulated values as markers (PDR
markers carry CI whiskers).  Axes come from the data extents and nothing
time-dependent is written, so the same table always yields the same bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .sweep import ResultRow

METRICS = {
    "pdr": ("PDR", "pdr"),
    "delay": ("mean delay (ms)", "mean_delay_s"),
    "reception_delay": ("mean reception delay (ms)", "mean_reception_delay_s"),
    "contention_density": ("contention density", "contention_density"),
}
SINGLE_POLICY_METRICS = ("delay", "pdr")

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 30, 50


def _num(v) -> float | None:
    return v if isinstance(v, (int, float)) and v is not None and math.isfinite(v) else None


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + step * 1e-9:
        out.append(round(t, 12))
        t += step
    return out


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def render_metric(rows: list[ResultRow], metric: str) -> str:
    title, attr = METRICS[metric]
    scale = 1e3 if attr.endswith("_s") else 1.0
    series: dict[tuple[str, str], dict[str, list]] = {}
    for r in sorted(rows, key=ResultRow.sort_key):
        if r.error:
            continue
        y = _num(getattr(r, attr))
        if y is None:
            continue
        s = series.setdefault((r.case, r.policy), {"analytic": [], "simulation": []})
        lo = hi = None
        if attr == "pdr" and r.source == "simulation":
            lo, hi = _num(r.pdr_ci_lo), _num(r.pdr_ci_hi)
        s[r.source].append((r.n_vehicles, y * scale, lo, hi))

    xs = [p[0] for s in series.values() for pts in s.values() for p in pts]
    ys = [v for s in series.values() for pts in s.values() for p in pts for v in (p[1], p[2], p[3]) if v is not None]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)} vs number of vehicles</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{TOP + ph}" x2="{px(t):.2f}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{TOP + ph + 16}" text-anchor="middle">{_fmt_tick(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 4}" y1="{py(t):.2f}" x2="{LEFT}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{_fmt_tick(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">number of vehicles</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(title)}</text>')

    for k, ((case, policy), s) in enumerate(sorted(series.items())):
        color = PALETTE[k % len(PALETTE)]
        an = sorted(s["analytic"])
        if len(an) > 1:
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y, _, _ in an)
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        elif an:
            x, y = an[0][:2]
            out.append(f'<rect x="{px(x) - 3:.2f}" y="{py(y) - 3:.2f}" width="6" height="6" fill="none" stroke="{color}"/>')
        for x, y, lo, hi in sorted(s["simulation"]):
            if lo is not None and hi is not None:
                out.append(f'<line x1="{px(x):.2f}" y1="{py(lo):.2f}" x2="{px(x):.2f}" y2="{py(hi):.2f}" stroke="{color}"/>')
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 14 + 16 * k
        lx = W - RIGHT + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(case)} {escape(policy)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_plots(rows: list[ResultRow], out_dir: str | Path) -> list[Path]:
    """Write one SVG per metric; returns the paths written.

    A single-policy table gets delay and PDR charts, a comparison table all four.
    """
    if not rows:
        raise ValueError("cannot plot an empty result table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    policies = {r.policy for r in rows}
    metrics = SINGLE_POLICY_METRICS if len(policies) == 1 else tuple(METRICS)
    written = []
    for m in metrics:
        path = out_dir / f"{m}.svg"
        path.write_text(render_metric(rows, m), encoding="utf-8")
        written.append(path)
    return written
