import os
import pathlib

import pytest

import blis_sim

CONFIGS = pathlib.Path(os.environ.get("BLIS_SIM_CONFIGS", pathlib.Path(__file__).parents[2] / "configs"))


def test_oracle_run_meets_targets():
    m = blis_sim.run(CONFIGS / "oracle_rate.json")
    assert m["data_loss"] == 0.0
    assert m["apps"][0]["achieved_rate"] == m["apps"][0]["target_rate"] == [20, 20]
    assert not m["aborted"]
    assert m["audit_failures"] == 0


def test_run_is_deterministic():
    a = blis_sim.run(CONFIGS / "fig6_replay.json", seed=3)
    b = blis_sim.run(CONFIGS / "fig6_replay.json", seed=3)
    assert a == b


def test_bad_config_raises():
    with pytest.raises(blis_sim.BlisError):
        blis_sim.run_config({"duration_s": -1})


def test_codec_and_cli():
    code, out, err = blis_sim.cli("codec", "--hex", "424301010000000002030001000300010002000000000100000000")
    assert code == 0, err
    assert "beacon" in out
    assert blis_sim.cli()[0] == 1
    with pytest.raises(blis_sim.BlisError):
        blis_sim.describe_packet("zz")


def test_forecast_rmse_on_constant_power():
    assert blis_sim.forecast_rmse([2.0] * 100, model="persistence") == pytest.approx(0.0)
