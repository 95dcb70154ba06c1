"""Line-oriented experiment configs: ``[section]`` headers and ``key = value``.

Example::

    [signal]
    duration_s = 0.06
    rate_hz = 333000

    [component.beam]
    kind = sinusoid          # dc | sinusoid | white | narrowband | pulse
    freq_hz = 16650
    amplitude_v = 1.0

    [component.hiss]
    kind = white
    sigma_v = 1.0
    seed = 11

    [adaptive]
    topology = predictor     # predictor | identification
    taps = 32
    mu = 0.002
    normalized = true

    [pipeline]               # optional for ident/predict: run on the dual core
    block_len = 16

Every error names the offending ``section.key``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Dict, List, Optional

from .adaptive import LmsConfig, PredictorConfig
from .board import AdcModel, DacModel, TripConfig
from .dualcore import PipelineConfig
from .signal import (
    DC, InvalidSpecError, NarrowbandNoise, Pulse, SignalSpec, Sinusoid, WhiteNoise,
)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_KINDS = {
    "dc": (DC, {"level_v": float}),
    "sinusoid": (Sinusoid, {"freq_hz": float, "amplitude_v": float, "phase_rad": float}),
    "white": (WhiteNoise, {"sigma_v": float, "seed": int}),
    "narrowband": (NarrowbandNoise, {"center_hz": float, "bandwidth_hz": float,
                                     "sigma_v": float, "seed": int}),
    "pulse": (Pulse, {"period_s": float, "duty": float, "amplitude_v": float}),
}
_OPTIONAL = {"phase_rad"}


def parse_text(text: str, source: str = "<config>") -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, str(exc).splitlines()[0]) from None
    return cp


def read_file(path) -> configparser.ConfigParser:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_text(text, str(path))


class _Section:
    def __init__(self, cp, name, required=True):
        if not cp.has_section(name):
            if required:
                raise ConfigError(name, "missing section")
            self.sec = None
        else:
            self.sec = cp[name]
        self.name = name

    def __bool__(self):
        return self.sec is not None

    def get(self, key, conv, default=...):
        if self.sec is None or key not in self.sec:
            if default is ...:
                raise ConfigError(f"{self.name}.{key}", "missing")
            return default
        raw = self.sec[key].strip()
        try:
            if conv is bool:
                return _bool(raw)
            if conv is list:
                return [float(v) for v in raw.replace(",", " ").split()]
            return conv(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}", f"cannot parse {raw!r}") from None


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def signal_spec(cp, seed: Optional[int] = None) -> SignalSpec:
    """Build the signal from ``[signal]`` and every ``[component.*]``.

    ``seed`` overrides component seeds: the i-th seeded component gets
    ``seed + i``.
    """
    sig = _Section(cp, "signal")
    duration = sig.get("duration_s", float)
    rate = sig.get("rate_hz", float, 333_000.0)
    if not rate > 0:
        raise ConfigError("signal.rate_hz", "must be positive")
    if not duration > 0:
        raise ConfigError("signal.duration_s", "must be positive")
    components = []
    seeded = 0
    for name in cp.sections():
        if not name.startswith("component."):
            continue
        sec = _Section(cp, name)
        kind = sec.get("kind", str).lower()
        if kind not in _KINDS:
            raise ConfigError(f"{name}.kind", f"unknown kind {kind!r}")
        cls, fields = _KINDS[kind]
        kwargs = {}
        for key, conv in fields.items():
            if key in _OPTIONAL:
                kwargs[key] = sec.get(key, conv, 0.0)
            else:
                kwargs[key] = sec.get(key, conv)
        if "seed" in kwargs and seed is not None:
            kwargs["seed"] = seed + seeded
        if "seed" in kwargs:
            seeded += 1
        role = sec.get("role", str, None)
        if role is not None:
            if role not in ("beam", "noise"):
                raise ConfigError(f"{name}.role", "must be 'beam' or 'noise'")
            kwargs["role"] = role
        comp = cls(**kwargs)
        try:
            comp.validate(rate)
        except InvalidSpecError as exc:
            raise ConfigError(f"{name}.{exc.field}", str(exc).split(": ", 1)[1]) from None
        components.append(comp)
    return SignalSpec(duration, rate, components)


@dataclass(frozen=True)
class AdaptiveSection:
    topology: str
    lms: LmsConfig
    delay: int
    na: int
    output: str

    def predictor(self) -> PredictorConfig:
        return PredictorConfig(self.lms, self.delay)


def adaptive_section(cp, default_topology: str = "predictor") -> AdaptiveSection:
    sec = _Section(cp, "adaptive")
    topology = sec.get("topology", str, default_topology).lower()
    if topology not in ("predictor", "identification"):
        raise ConfigError("adaptive.topology", "must be 'predictor' or 'identification'")
    try:
        lms = LmsConfig(
            mu=sec.get("mu", float),
            num_taps=sec.get("taps", int),
            normalized=sec.get("normalized", bool, False),
            leakage=sec.get("leakage", float, 0.0),
            eps=sec.get("eps", float, 1e-6),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("adaptive", str(exc)) from None
    delay = sec.get("delay", int, 1)
    if delay < 1:
        raise ConfigError("adaptive.delay", "must be >= 1")
    na = sec.get("na", int, 0)
    if na < 0:
        raise ConfigError("adaptive.na", "must be >= 0")
    if topology == "predictor" and na:
        raise ConfigError("adaptive.na", "the predictor is FIR only")
    output = sec.get("output", str, "y" if topology == "predictor" else "e").lower()
    if output not in ("y", "e"):
        raise ConfigError("adaptive.output", "must be 'y' or 'e'")
    return AdaptiveSection(topology, lms, delay, na, output)


def pipeline_config(cp, adaptive: AdaptiveSection, required: bool = True) -> Optional[PipelineConfig]:
    sec = _Section(cp, "pipeline", required=required)
    if not sec:
        return None
    topo = adaptive.predictor() if adaptive.topology == "predictor" else adaptive.lms
    try:
        return PipelineConfig(
            block_len=sec.get("block_len", int, 16),
            topology=topo,
            filter_port=sec.get("filter_port", str, "A").upper(),
            na=adaptive.na,
            scheduler_seed=sec.get("scheduler_seed", int, None),
            strict=sec.get("strict", bool, False),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("pipeline", str(exc)) from None


def trip_config(cp) -> TripConfig:
    sec = _Section(cp, "trip")
    try:
        return TripConfig(
            threshold_v=sec.get("threshold_v", float),
            persistence=sec.get("persistence", int, 1),
            output_line=sec.get("output_line", int, 0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("trip", str(exc)) from None


def converters(cp):
    adc_sec = _Section(cp, "adc", required=False)
    dac_sec = _Section(cp, "dac", required=False)
    adc = AdcModel(full_scale_v=adc_sec.get("full_scale_v", float, 5.0))
    dac = DacModel(full_scale_v=dac_sec.get("full_scale_v", float, 5.0))
    if not adc.full_scale_v > 0:
        raise ConfigError("adc.full_scale_v", "must be positive")
    if not dac.full_scale_v > 0:
        raise ConfigError("dac.full_scale_v", "must be positive")
    quantize = adc_sec.get("quantize", bool, True)
    return adc, dac, quantize


def plant(cp) -> Dict[str, List[float]]:
    sec = _Section(cp, "plant")
    b = sec.get("b", list)
    a = sec.get("a", list, [])
    if not b:
        raise ConfigError("plant.b", "needs at least one coefficient")
    return {"b": b, "a": a}
