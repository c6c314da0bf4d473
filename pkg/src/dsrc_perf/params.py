"""Scenario parameters, derived timing and scenario-file loading."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml


class InvalidParams(ValueError):
    """Raised when a scenario violates a parameter invariant."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ScenarioParams:
    """Inputs of one scenario, SI units throughout.

    Defaults are the heavy-load DSRC setting: 6 Mb/s, 10 packets/s,
    200 byte payload, CW = 16.
    """

    lambda_: float = 10.0
    n_vehicles: int = 10
    cw: int = 16
    slot: float = 16e-6
    difs: float = 64e-6
    payload_bytes: float = 200.0
    data_rate: float = 6e6
    phy_preamble: float = 28e-6
    plcp_header: float = 4e-6
    mac_header_bytes: float = 50.0
    prop_delay: float = 0.0
    spcdc_c: int = 3
    spcdc_period: float = 1.0

    def with_(self, **changes: Any) -> "ScenarioParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioParams":
        """Build from a mapping keyed by field name; ``lambda`` is accepted for ``lambda_``."""
        data = dict(data)
        if "lambda" in data:
            data["lambda_"] = data.pop("lambda")
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise InvalidParams(key, "unknown scenario key")
            kwargs[key] = _coerce(key, value, known[key].type)
        return cls(**kwargs)


def _coerce(key: str, value: Any, type_name: Any) -> Any:
    try:
        if type_name in (int, "int"):
            if isinstance(value, float) and not value.is_integer():
                raise InvalidParams(key, f"expected an integer, got {value!r}")
            return int(value)
        return float(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParams):
            raise
        raise InvalidParams(key, f"not a number: {value!r}") from exc


@dataclass(frozen=True)
class DerivedTiming:
    t_header: float
    t_tr: float
    slots_per_tx: int
    difs_slots: int
    period_slots: int


def derive_timing(params: ScenarioParams) -> DerivedTiming:
    """Header time, per-packet transmission time and their slot-grid images.

    ``t_header`` is PHY preamble + PLCP header + MAC header bits at the data
    rate; ``t_tr`` adds the payload airtime and propagation delay.
    """
    validate(params)
    p = params
    t_header = p.phy_preamble + p.plcp_header + p.mac_header_bytes * 8.0 / p.data_rate
    t_tr = p.payload_bytes * 8.0 / p.data_rate + t_header + p.prop_delay
    if t_tr <= 0.0:
        raise InvalidParams("payload_bytes", "transmission time must be positive")
    if 1.0 / p.lambda_ <= t_tr:
        raise InvalidParams("lambda", "inter-generation time must exceed the transmission time")
    return DerivedTiming(
        t_header=t_header,
        t_tr=t_tr,
        slots_per_tx=_ceil_slots(t_tr, p.slot),
        difs_slots=round(p.difs / p.slot),
        period_slots=max(1, round(1.0 / (p.lambda_ * p.slot))),
    )


def _ceil_slots(duration: float, slot: float) -> int:
    n = duration / slot
    # absorb representation error so that 32.0000000001 slots stays 32
    n_round = round(n)
    if abs(n - n_round) < 1e-9:
        return max(1, int(n_round))
    return max(1, math.ceil(n))


def validate(params: ScenarioParams) -> None:
    p = params
    checks = [
        ("lambda", p.lambda_ > 0, "must be > 0"),
        ("n_vehicles", p.n_vehicles >= 1, "must be >= 1"),
        ("cw", p.cw >= 1, "must be >= 1"),
        ("slot", p.slot > 0, "must be > 0"),
        ("difs", p.difs > 0, "must be > 0"),
        ("data_rate", p.data_rate > 0, "must be > 0"),
        ("payload_bytes", p.payload_bytes >= 0, "must be >= 0"),
        ("mac_header_bytes", p.mac_header_bytes >= 0, "must be >= 0"),
        ("phy_preamble", p.phy_preamble >= 0, "must be >= 0"),
        ("plcp_header", p.plcp_header >= 0, "must be >= 0"),
        ("prop_delay", p.prop_delay >= 0, "must be >= 0"),
        ("spcdc_c", p.spcdc_c >= 1, "must be >= 1"),
        ("spcdc_period", p.spcdc_period > 0, "must be > 0"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise InvalidParams(name, msg)
    ratio = p.difs / p.slot
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise InvalidParams("difs", "must be an integer multiple of slot")


# -- scenario files ---------------------------------------------------------

def read_mapping(path: str | Path) -> dict[str, Any]:
    """Read a flat key/value scenario file (YAML-style ``key: value`` or JSON)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise InvalidParams(str(path), "scenario file must be a flat key/value mapping")
    return data


SCENARIO_KEYS = frozenset(f.name for f in fields(ScenarioParams)) | {"lambda"}


def load_scenario(path: str | Path) -> ScenarioParams:
    data = read_mapping(path)
    return ScenarioParams.from_dict({k: v for k, v in data.items() if k in SCENARIO_KEYS})
