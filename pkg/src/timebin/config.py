"""Sectioned key/value experiment configuration.

Files are INI-style with sections ``[ring]``, ``[source]``, ``[phases]``,
``[channels.N]`` (N = 0..7, signal Z0 X0 X1 Z1 then idler Z'0 X'0 X'1 Z'1)
and ``[run]``.  Every key carries its unit in the name.  Omitted keys take
the defaults below; unknown sections or keys are schema errors.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

from .core import PhaseConfig
from .errors import SchemaError, TimebinError
from .ring import RingSpec, SourceSpec
from .sim import ChannelSpec, ExperimentConfig, default_channels

PRESETS = ("paper-25C", "paper-20C", "paper-10C")

# (key, type, target, attribute); target names the object the key populates
_RING_KEYS = {
    "radius_m": (float, "ring", "radius_m"),
    "group_index": (float, "ring", "group_index"),
    "q_factor": (float, "ring", "q_factor"),
    "thermo_optic_shift_nm_per_c": (float, "ring", "thermo_optic_shift"),
    "ref_wavelength_nm": (float, "ring", "ref_wavelength_nm"),
    "ref_temperature_c": (float, "ring", "ref_temperature_c"),
    "temperature_c": (float, "exp", "ring_temperature_c"),
}
_SOURCE_KEYS = {
    "pump_power_mw": (float, "source", "pump_power_mw"),
    "pump_wavelength_nm": (float, "source", "pump_wavelength_nm"),
    "pair_rate_coefficient_hz_per_mw2": (float, "source", "pair_rate_coefficient"),
    "pair_correlation_time_ps": (float, "source", "pair_correlation_time_ps"),
    "signal_filter_nm": (float, "exp", "signal_filter_nm"),
    "idler_filter_nm": (float, "exp", "idler_filter_nm"),
    "filter_bandwidth_nm": (float, "exp", "filter_bandwidth_nm"),
}
_PHASE_KEYS = {
    "theta1_rad": (float, "phases", "theta1"),
    "theta2_rad": (float, "phases", "theta2"),
    "delta_pump_rad": (float, "phases", "delta_pump"),
    "amzi_delay_ps": (float, "exp", "amzi_delay_ps"),
    "amzi_insertion_db": (float, "exp", "amzi_insertion_db"),
    "two_photon_coherence": (float, "exp", "two_photon_coherence"),
}
_RUN_KEYS = {
    "duration_s": (float, "exp", "duration_s"),
    "seed": (int, "exp", "seed"),
    "chunk_s": (float, "exp", "chunk_s"),
    "mode": (str, "exp", "mode"),
}
_CHANNEL_KEYS = {
    "transmittance_db": float,
    "jitter_fwhm_ps": float,
    "dark_rate_hz": float,
    "delay_offset_ps": float,
    "dead_time_ps": float,
}
_SECTIONS = {"ring": _RING_KEYS, "source": _SOURCE_KEYS, "phases": _PHASE_KEYS, "run": _RUN_KEYS}


def _parse(kind, raw: str, key: str):
    try:
        if kind is int:
            return int(raw, 0)
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return raw.strip()
    except ValueError:
        raise SchemaError(f"cannot parse {raw!r} as {kind.__name__}", key) from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SchemaError(str(exc).splitlines()[0], source) from None

    buckets = {"ring": {}, "source": {}, "phases": {}, "exp": {}}
    channels = {c.channel_id: {} for c in default_channels()}
    for section in cp.sections():
        if section.startswith("channels."):
            idx_txt = section.split(".", 1)[1]
            if not idx_txt.isdigit() or int(idx_txt) not in channels:
                raise SchemaError("channel sections are channels.0 .. channels.7", section)
            cid = int(idx_txt)
            for key, raw in cp[section].items():
                path = f"{section}.{key}"
                if key not in _CHANNEL_KEYS:
                    raise SchemaError("unknown key", path)
                channels[cid][key] = _parse(_CHANNEL_KEYS[key], raw, path)
            continue
        if section not in _SECTIONS:
            raise SchemaError("unknown section", section)
        schema = _SECTIONS[section]
        for key, raw in cp[section].items():
            path = f"{section}.{key}"
            if key not in schema:
                raise SchemaError("unknown key", path)
            kind, target, attr = schema[key]
            buckets[target][attr] = (_parse(kind, raw, path), path)

    def build(cls, target):
        # constructors validate and raise RangeError keyed by config path
        return cls(**{a: v for a, (v, _) in buckets[target].items()})

    ring = build(RingSpec, "ring")
    source = build(SourceSpec, "source")
    phases = build(PhaseConfig, "phases")
    chans = []
    for base in default_channels():
        kw = channels[base.channel_id]
        chans.append(replace(base, **kw))
    exp_kw = {a: v for a, (v, _) in buckets["exp"].items()}
    config = ExperimentConfig(ring=ring, source=source, phases=phases, channels=tuple(chans), **exp_kw)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise SchemaError("config file not found", str(path))
    return parse_config(path.read_text(), str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset (choose from {', '.join(PRESETS)})", name)
    return resources.files("timebin.presets").joinpath(f"{name}.ini").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), name)


def dump_config(config: ExperimentConfig) -> str:
    """Render a config as a loadable file; ``parse_config(dump_config(c)) == c``."""
    def fmt(v):
        return repr(float(v)) if isinstance(v, float) else str(v)

    def section(name, schema):
        lines = [f"[{name}]"]
        for key, (_, target, attr) in schema.items():
            obj = {"ring": config.ring, "source": config.source, "phases": config.phases,
                   "exp": config}[target]
            v = getattr(obj, attr)
            if v is not None:
                lines.append(f"{key} = {fmt(v)}")
        return lines

    out = section("ring", _RING_KEYS) + [""] + section("source", _SOURCE_KEYS) + [""]
    out += section("phases", _PHASE_KEYS) + [""]
    for ch in sorted(config.channels, key=lambda c: c.channel_id):
        out.append(f"[channels.{ch.channel_id}]")
        for f in fields(ChannelSpec):
            if f.name != "channel_id":
                out.append(f"{f.name} = {fmt(getattr(ch, f.name))}")
        out.append("")
    out += section("run", _RUN_KEYS)
    return "\n".join(out) + "\n"


def resolve(config_path=None, preset=None) -> ExperimentConfig:
    if config_path and preset:
        raise SchemaError("give either a config file or a preset, not both")
    if config_path:
        return load_config(config_path)
    return load_preset(preset or "paper-25C")


__all__ = ["PRESETS", "parse_config", "load_config", "load_preset", "preset_text", "dump_config",
           "resolve", "TimebinError"]
