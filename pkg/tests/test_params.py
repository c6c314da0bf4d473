import json
import math

import pytest
from hypothesis import given, strategies as st

from dsrc_perf.params import InvalidParams, ScenarioParams, derive_timing, load_scenario


def test_timing_6mbps_200b():
    # 28 + 4 us headers, 50 B MAC header and 200 B payload at 6 Mb/s
    t = derive_timing(ScenarioParams())
    assert t.t_header == pytest.approx(98.666_666_666_7e-6, rel=1e-12)
    assert t.t_tr == pytest.approx(365.333_333_333_3e-6, rel=1e-12)
    assert t.slots_per_tx == 23
    assert t.difs_slots == 4
    assert t.period_slots == 6250


def test_timing_24mbps_400b():
    t = derive_timing(ScenarioParams(payload_bytes=400, data_rate=24e6))
    assert t.t_tr == pytest.approx(182.0e-6, rel=1e-12)
    # 182 us / 16 us = 11.375 slots
    assert t.slots_per_tx == 12


def test_zero_airtime_rejected():
    p = ScenarioParams(payload_bytes=0, phy_preamble=0, plcp_header=0, mac_header_bytes=0)
    with pytest.raises(InvalidParams) as err:
        derive_timing(p)
    assert err.value.field == "payload_bytes"


@pytest.mark.parametrize(
    "change, field",
    [
        (dict(lambda_=0), "lambda"),
        (dict(n_vehicles=0), "n_vehicles"),
        (dict(cw=0), "cw"),
        (dict(difs=50e-6), "difs"),
        (dict(data_rate=-1), "data_rate"),
        (dict(spcdc_c=0), "spcdc_c"),
        (dict(lambda_=5000), "lambda"),
    ],
)
def test_invariant_violations_name_the_field(change, field):
    with pytest.raises(InvalidParams) as err:
        derive_timing(ScenarioParams(**change))
    assert err.value.field == field


@given(
    payload=st.integers(0, 1500),
    rate=st.sampled_from([3e6, 6e6, 12e6, 24e6, 27e6]),
)
def test_slot_quantisation_brackets_airtime(payload, rate):
    t = derive_timing(ScenarioParams(payload_bytes=payload, data_rate=rate))
    assert t.slots_per_tx * 16e-6 >= t.t_tr * (1 - 1e-12)
    assert t.t_tr > (t.slots_per_tx - 1) * 16e-6


@given(payload=st.integers(0, 1500), rate=st.floats(1e6, 50e6))
def test_faster_rate_shortens_airtime(payload, rate):
    a = derive_timing(ScenarioParams(payload_bytes=payload, data_rate=rate)).t_tr
    b = derive_timing(ScenarioParams(payload_bytes=payload, data_rate=2 * rate)).t_tr
    assert b < a


def test_yaml_and_json_scenarios_agree(tmp_path):
    y = tmp_path / "s.yaml"
    y.write_text("n_vehicles: 50\nlambda: 2\ndata_rate: 24.0e6\npayload_bytes: 200\n")
    j = tmp_path / "s.json"
    j.write_text(json.dumps({"n_vehicles": 50, "lambda": 2, "data_rate": 24e6, "payload_bytes": 200}))
    a, b = load_scenario(y), load_scenario(j)
    assert a == b
    assert a.lambda_ == 2.0 and isinstance(a.n_vehicles, int)


def test_unknown_key_rejected():
    with pytest.raises(InvalidParams):
        ScenarioParams.from_dict({"bogus": 1})


def test_dict_round_trip():
    p = ScenarioParams(n_vehicles=33, cw=128)
    assert ScenarioParams.from_dict(p.to_dict()) == p
    assert math.isclose(p.to_dict()["lambda"], 10.0)
