"""Test-signal synthesis and SNR measurement.

Noise generators draw from NumPy's ``PCG64`` bit generator seeded with the
component seed (normal deviates via ``Generator.standard_normal``), so a
``SignalSpec`` fully determines its samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import signal as sps

DEFAULT_RATE_HZ = 333_000.0
NARROWBAND_ORDER = 4


class InvalidSpecError(ValueError):
    """A signal specification violates its invariants.

    ``field`` names the offending attribute so callers (config loaders)
    can point at the exact key.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class SampleStream:
    samples: np.ndarray
    rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate_hz

    def __add__(self, other: "SampleStream") -> "SampleStream":
        _check_compatible(self, other)
        return SampleStream(self.samples + other.samples, self.rate_hz)

    def __sub__(self, other: "SampleStream") -> "SampleStream":
        _check_compatible(self, other)
        return SampleStream(self.samples - other.samples, self.rate_hz)


def _check_compatible(a: SampleStream, b: SampleStream):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    if a.rate_hz != b.rate_hz:
        raise ValueError(f"rate mismatch: {a.rate_hz} != {b.rate_hz}")


# -- components -------------------------------------------------------------
# ``role`` separates the clean beam from contamination; it only matters to
# experiments that need a ground-truth reference.

@dataclass(frozen=True)
class DC:
    level_v: float
    role: str = "beam"

    def validate(self, rate_hz):
        pass

    def render(self, n, rate_hz):
        return np.full(n, float(self.level_v))


@dataclass(frozen=True)
class Sinusoid:
    freq_hz: float
    amplitude_v: float
    phase_rad: float = 0.0
    role: str = "beam"

    def validate(self, rate_hz):
        if not 0 <= self.freq_hz < rate_hz / 2:
            raise InvalidSpecError(
                "freq_hz", f"{self.freq_hz} Hz is not below Nyquist ({rate_hz / 2} Hz)")

    def render(self, n, rate_hz):
        k = np.arange(n, dtype=np.float64)
        return self.amplitude_v * np.sin(2 * np.pi * self.freq_hz * k / rate_hz + self.phase_rad)


@dataclass(frozen=True)
class WhiteNoise:
    sigma_v: float
    seed: int
    role: str = "noise"

    def validate(self, rate_hz):
        if not self.sigma_v >= 0:
            raise InvalidSpecError("sigma_v", f"must be >= 0, got {self.sigma_v}")

    def render(self, n, rate_hz):
        return self.sigma_v * _gaussian(self.seed, n)


@dataclass(frozen=True)
class NarrowbandNoise:
    center_hz: float
    bandwidth_hz: float
    sigma_v: float
    seed: int
    role: str = "noise"

    def validate(self, rate_hz):
        if not self.sigma_v >= 0:
            raise InvalidSpecError("sigma_v", f"must be >= 0, got {self.sigma_v}")
        _check_band(self.center_hz, self.bandwidth_hz, rate_hz)

    def render(self, n, rate_hz):
        return narrowband_noise(self.center_hz, self.bandwidth_hz, self.sigma_v,
                                self.seed, n, rate_hz).samples


@dataclass(frozen=True)
class Pulse:
    """Rectangular pulse train, high for the first ``duty`` of each period."""

    period_s: float
    duty: float
    amplitude_v: float
    role: str = "beam"

    def validate(self, rate_hz):
        if not self.period_s > 0:
            raise InvalidSpecError("period_s", f"must be positive, got {self.period_s}")
        if not 0 < self.duty <= 1:
            raise InvalidSpecError("duty", f"must be in (0, 1], got {self.duty}")

    def render(self, n, rate_hz):
        t = np.arange(n, dtype=np.float64) / rate_hz
        high = np.mod(t, self.period_s) < self.duty * self.period_s
        return np.where(high, float(self.amplitude_v), 0.0)


Component = Union[DC, Sinusoid, WhiteNoise, NarrowbandNoise, Pulse]


@dataclass
class SignalSpec:
    duration_s: float
    rate_hz: float = DEFAULT_RATE_HZ
    components: Sequence[Component] = field(default_factory=list)

    def validate(self):
        if not self.duration_s > 0:
            raise InvalidSpecError("duration_s", f"must be positive, got {self.duration_s}")
        if not self.rate_hz > 0:
            raise InvalidSpecError("rate_hz", f"must be positive, got {self.rate_hz}")
        for comp in self.components:
            comp.validate(self.rate_hz)

    @property
    def num_samples(self) -> int:
        return int(math.floor(self.duration_s * self.rate_hz))

    def only(self, role: str) -> "SignalSpec":
        """Copy of this signal keeping only components with the given role."""
        return SignalSpec(self.duration_s, self.rate_hz,
                          [c for c in self.components if c.role == role])


@dataclass(frozen=True)
class SnrReport:
    signal_power_v2: float
    noise_power_v2: float
    snr_db: float

    @property
    def infinite(self) -> bool:
        return self.noise_power_v2 == 0.0


def _gaussian(seed: int, n: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(seed)).standard_normal(n)


def _check_band(center_hz, bandwidth_hz, rate_hz):
    nyquist = rate_hz / 2
    if center_hz == 0:
        if not 0 < bandwidth_hz / 2 < nyquist:
            raise InvalidSpecError("bandwidth_hz", "lowpass cutoff must lie in (0, Nyquist)")
        return
    if not 0 < bandwidth_hz < center_hz:
        raise InvalidSpecError(
            "bandwidth_hz", f"need 0 < bandwidth ({bandwidth_hz}) < center ({center_hz})")
    if not center_hz + bandwidth_hz / 2 < nyquist:
        raise InvalidSpecError(
            "center_hz", f"band edge {center_hz + bandwidth_hz / 2} Hz reaches Nyquist ({nyquist} Hz)")


def synthesize(spec: SignalSpec) -> SampleStream:
    """Render every component and sum them pointwise, in list order."""
    spec.validate()
    n = spec.num_samples
    out = np.zeros(n)
    for i, comp in enumerate(spec.components):
        part = comp.render(n, spec.rate_hz)
        out = part.copy() if i == 0 else out + part
    return SampleStream(out, spec.rate_hz)


def narrowband_noise(center_hz, bandwidth_hz, sigma_v, seed, n, rate_hz) -> SampleStream:
    """Gaussian noise shaped by a Butterworth bandpass (lowpass when center is 0).

    The shaper has ``NARROWBAND_ORDER`` second-order sections with -3 dB
    points at ``center_hz +- bandwidth_hz/2``; the output is rescaled to a
    sample standard deviation of exactly ``sigma_v``.
    """
    _check_band(center_hz, bandwidth_hz, rate_hz)
    if sigma_v < 0:
        raise InvalidSpecError("sigma_v", f"must be >= 0, got {sigma_v}")
    if sigma_v == 0 or n == 0:
        return SampleStream(np.zeros(n), rate_hz)
    if center_hz == 0:
        sos = sps.butter(2 * NARROWBAND_ORDER, bandwidth_hz / 2, btype="lowpass",
                         fs=rate_hz, output="sos")
    else:
        band = [center_hz - bandwidth_hz / 2, center_hz + bandwidth_hz / 2]
        sos = sps.butter(NARROWBAND_ORDER, band, btype="bandpass", fs=rate_hz, output="sos")
    shaped = sps.sosfilt(sos, _gaussian(seed, n))
    std = shaped.std()
    if std == 0:
        return SampleStream(np.zeros(n), rate_hz)
    return SampleStream(shaped * (sigma_v / std), rate_hz)


def measure_snr(reference: SampleStream, contaminated: SampleStream) -> SnrReport:
    """Signal power of ``reference`` against the power of the difference.

    A zero noise power gives ``snr_db = inf``; a zero signal power with
    nonzero noise gives ``-inf``.
    """
    _check_compatible(reference, contaminated)
    if len(reference) == 0:
        raise ValueError("cannot measure SNR of empty streams")
    ref = reference.samples
    signal_power = float(np.mean(ref * ref))
    diff = contaminated.samples - ref
    noise_power = float(np.mean(diff * diff))
    if noise_power == 0:
        snr_db = math.inf
    elif signal_power == 0:
        snr_db = -math.inf
    else:
        snr_db = 10 * math.log10(signal_power / noise_power)
    return SnrReport(signal_power, noise_power, snr_db)


def write_stream_csv(stream: SampleStream, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "volts"])
        for i, v in enumerate(stream.samples.tolist()):
            w.writerow([i, repr(v)])


def read_stream_csv(path, rate_hz: float = DEFAULT_RATE_HZ) -> SampleStream:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "volts"]:
        raise ValueError(f"{path}: expected header 'index,volts'")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if int(row[0]) != lineno - 2:
            raise ValueError(f"{path}:{lineno}: index out of sequence")
        values.append(float(row[1]))
    return SampleStream(np.array(values, dtype=np.float64), rate_hz)
