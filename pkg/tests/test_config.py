import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from timebin.config import PRESETS, dump_config, load_config, load_preset, parse_config
from timebin.errors import RangeError, SchemaError
from timebin.ring import pump_resonance
from timebin.sim import ExperimentConfig


def test_paper_25c_preset():
    cfg = load_preset("paper-25C")
    assert cfg.source.pump_wavelength_nm == 1551.63
    assert cfg.source.pump_power_mw == 0.46
    assert (cfg.signal_filter_nm, cfg.idler_filter_nm) == (1564.34, 1539.01)
    assert cfg.ring_temperature_c == 25.0


@pytest.mark.parametrize("name,temp,pump", [
    ("paper-25C", 25.0, 1551.63), ("paper-20C", 20.0, 1551.27), ("paper-10C", 10.0, 1550.59)])
def test_presets_sit_on_the_comb(name, temp, pump):
    cfg = load_preset(name)
    assert cfg.ring_temperature_c == temp
    assert abs(pump_resonance(cfg.ring, temp) - pump) < 0.02
    assert cfg.pair_rate_hz() > 0


def test_empty_sections_take_defaults():
    cfg = parse_config("[phases]\n[run]\n")
    assert (cfg.phases.theta1, cfg.phases.theta2, cfg.phases.delta_pump) == (0.0, 0.0, 0.0)
    assert cfg == ExperimentConfig()


def test_negative_loss_rejected():
    with pytest.raises(RangeError) as exc:
        parse_config("[channels.3]\ntransmittance_db = -28\n")
    assert exc.value.key == "channels.3.transmittance_db"


@pytest.mark.parametrize("text,key", [
    ("[ring]\nradius = 7e-6\n", "ring.radius"),
    ("[pump]\n", "pump"),
    ("[channels.9]\n", "channels.9"),
    ("[channels.1]\ngain = 2\n", "channels.1.gain"),
    ("[source]\npump_power_mw = lots\n", "source.pump_power_mw"),
    ("[run]\nseed = 1.5\n", "run.seed"),
    ("[run]\nduration_s = nan\n", "run.duration_s"),
])
def test_schema_errors_carry_key_path(text, key):
    with pytest.raises(SchemaError) as exc:
        parse_config(text)
    assert exc.value.key == key


@pytest.mark.parametrize("text,key", [
    ("[ring]\nq_factor = 0\n", "ring.q_factor"),
    ("[ring]\ntemperature_c = 400\n", "ring.temperature_c"),
    ("[run]\nmode = pulsed\n", "run.mode"),
    ("[phases]\ntwo_photon_coherence = 2\n", "phases.two_photon_coherence"),
])
def test_range_errors_carry_key_path(text, key):
    with pytest.raises(RangeError) as exc:
        parse_config(text)
    assert exc.value.key == key


def test_unparseable_file():
    with pytest.raises(SchemaError):
        parse_config("no section header\n")


def test_missing_file_and_unknown_preset(tmp_path):
    with pytest.raises(SchemaError):
        load_config(tmp_path / "missing.ini")
    with pytest.raises(SchemaError):
        load_preset("paper-30C")


@pytest.mark.parametrize("name", PRESETS)
def test_dump_round_trip(name, tmp_path):
    cfg = load_preset(name)
    path = tmp_path / "cfg.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


@given(st.floats(0.0, 2.0), st.floats(-math.pi, math.pi), st.floats(0.0, 1.0),
       st.integers(0, 2**64 - 1), st.floats(0.0, 40.0))
@settings(max_examples=40, deadline=None)
def test_round_trip_property(power, theta, coh, seed, loss):
    base = load_preset("paper-25C")
    chans = tuple(replace(c, transmittance_db=loss) if c.channel_id == 2 else c for c in base.channels)
    cfg = replace(base, source=replace(base.source, pump_power_mw=power), channels=chans,
                  phases=replace(base.phases, theta1=theta), two_photon_coherence=coh, seed=seed)
    assert parse_config(dump_config(cfg)) == cfg
