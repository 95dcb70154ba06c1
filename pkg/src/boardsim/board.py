"""Board peripherals: 12-bit ADC/DAC, digital I/O, watchdog, trip comparator.

Register map
------------
Each EMIF chip-select space holds one kind of resource; the peripheral
space CE3 gives every peripheral its own 0x100-byte page. Addresses are
byte addresses; DPRAM and peripheral registers are 16 bits wide, at even
offsets.

========  ==========  ==========  =====  ======  =============================
name      base        size        width  access  contents
========  ==========  ==========  =====  ======  =============================
sdram     0x80000000  0x01000000  32     rw      4M x 32 (CE0)
flash     0x90000000  0x00100000  32     r       256K x 32, reads erased (CE1)
dpram     0xA0000000  0x00020000  16     rw      64K x 16 dual-port RAM (CE2)
adc       0xB0000000  0x00000100  16     r       +0 last code, +2 saturations
dac       0xB0000100  0x00000100  16     rw      +0 code (write converts),
                                                 +2 settle violations (r)
dio       0xB0000200  0x00000100  16     rw      +0 inputs (r), +2 outputs
watchdog  0xB0000300  0x00000100  16     rw      +0 kick (w), +2 expired (r),
                                                 +4 timeout, +6 reset (w)
trip      0xB0000400  0x00000100  16     rw      +0 tripped (r), +2 persistence,
                                                 +4 output line
========  ==========  ==========  =====  ======  =============================
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .dualcore import DualPortMemory
from .signal import SampleStream

log = logging.getLogger(__name__)

ADC_BITS = 12
ADC_CODES = 1 << ADC_BITS
ADC_RATE_HZ = 333_000.0
DAC_SETTLE_S = 3e-6


class UnmappedAddressError(LookupError):
    pass


class AccessError(PermissionError):
    pass


@dataclass
class AdcModel:
    """Bipolar offset-binary converter, ``+-full_scale_v``."""

    full_scale_v: float = 5.0
    rate_hz: float = ADC_RATE_HZ
    bits: int = ADC_BITS
    saturations: int = 0
    last_code: int = ADC_CODES // 2

    @property
    def lsb_v(self) -> float:
        return 2 * self.full_scale_v / (1 << self.bits)


@dataclass
class DacModel:
    full_scale_v: float = 5.0
    settle_s: float = DAC_SETTLE_S
    bits: int = ADC_BITS
    last_update_s: Optional[float] = None
    last_code: int = ADC_CODES // 2
    timing_violations: int = 0

    @property
    def lsb_v(self) -> float:
        return 2 * self.full_scale_v / (1 << self.bits)


def adc_sample(model: AdcModel, volts: float) -> int:
    """Quantize to the nearest code (ties up), clamped to the rails."""
    top = (1 << model.bits) - 1
    raw = math.floor((volts + model.full_scale_v) / (2 * model.full_scale_v)
                     * (1 << model.bits) + 0.5)
    code = min(max(raw, 0), top)
    if code != raw:
        model.saturations += 1
        log.debug("ADC saturated at %g V", volts)
    model.last_code = code
    return code


def adc_convert(model: AdcModel, volts: np.ndarray) -> np.ndarray:
    """Vectorized ``adc_sample``; same rounding and clamping."""
    top = (1 << model.bits) - 1
    raw = np.floor((np.asarray(volts, dtype=np.float64) + model.full_scale_v)
                   / (2 * model.full_scale_v) * (1 << model.bits) + 0.5)
    codes = np.clip(raw, 0, top).astype(np.int64)
    model.saturations += int(np.count_nonzero(codes != raw))
    if len(codes):
        model.last_code = int(codes[-1])
    return codes


def code_to_volts(code, full_scale_v: float = 5.0, bits: int = ADC_BITS):
    return np.asarray(code) / (1 << bits) * 2 * full_scale_v - full_scale_v


def dac_output(model: DacModel, code: int, time_s: Optional[float] = None) -> float:
    """Convert a code to volts.

    ``time_s`` is the simulated update time; an update less than
    ``settle_s`` after the previous one counts as a timing violation.
    """
    top = (1 << model.bits) - 1
    if not 0 <= code <= top:
        raise ValueError(f"DAC code {code} outside [0, {top}]")
    if time_s is not None:
        if model.last_update_s is not None and time_s - model.last_update_s < model.settle_s:
            model.timing_violations += 1
            log.warning("DAC updated %.3g s after the previous update (settle %.3g s)",
                        time_s - model.last_update_s, model.settle_s)
        model.last_update_s = time_s
    model.last_code = code
    return float(code_to_volts(code, model.full_scale_v, model.bits))


def dac_stream(model: DacModel, volts, rate_hz: float):
    """Quantize a stream to DAC codes updated once per sample.

    The stream starts at time 0. Returns ``(codes, output_volts)``. Updates closer together than
    ``settle_s`` are counted as timing violations, one per update.
    """
    top = (1 << model.bits) - 1
    raw = np.floor((np.asarray(volts, dtype=np.float64) + model.full_scale_v)
                   / (2 * model.full_scale_v) * (1 << model.bits) + 0.5)
    codes = np.clip(raw, 0, top).astype(np.int64)
    n = len(codes)
    if n:
        period = 1.0 / rate_hz
        if n > 1 and period < model.settle_s:
            model.timing_violations += n - 1
        model.last_update_s = (n - 1) * period
        model.last_code = int(codes[-1])
    return codes, code_to_volts(codes, model.full_scale_v, model.bits)


@dataclass
class DigitalIo:
    inputs: List[bool] = field(default_factory=lambda: [False] * 8)
    outputs: List[bool] = field(default_factory=lambda: [False] * 8)

    def __post_init__(self):
        if len(self.inputs) != 8 or len(self.outputs) != 8:
            raise ValueError("digital I/O has exactly 8 inputs and 8 outputs")

    @staticmethod
    def _mask(lines) -> int:
        return sum(1 << i for i, on in enumerate(lines) if on)

    @property
    def input_mask(self) -> int:
        return self._mask(self.inputs)

    @property
    def output_mask(self) -> int:
        return self._mask(self.outputs)

    def set_outputs(self, mask: int):
        self.outputs = [bool(mask >> i & 1) for i in range(8)]


@dataclass
class WatchdogTimer:
    """Expires when more than ``timeout_steps`` pass without a kick.

    Expiry latches; a kick does not clear it, only ``reset`` does.
    """

    timeout_steps: int
    last_kick_step: int = 0
    expired: bool = False

    def __post_init__(self):
        if self.timeout_steps < 1:
            raise ValueError("timeout_steps must be >= 1")


def watchdog_tick(wd: WatchdogTimer, now_step: int) -> bool:
    """Advance to ``now_step``; returns the (latched) expired flag."""
    if now_step - wd.last_kick_step > wd.timeout_steps:
        wd.expired = True
    return wd.expired


def watchdog_kick(wd: WatchdogTimer, now_step: int) -> None:
    watchdog_tick(wd, now_step)
    wd.last_kick_step = now_step


def watchdog_reset(wd: WatchdogTimer, now_step: int) -> None:
    wd.expired = False
    wd.last_kick_step = now_step


@dataclass(frozen=True)
class TripConfig:
    threshold_v: float
    persistence: int = 1
    output_line: int = 0

    def __post_init__(self):
        if self.persistence < 1:
            raise ValueError("persistence must be >= 1")
        if not 0 <= self.output_line <= 7:
            raise ValueError("output_line must be in 0..7")


@dataclass(frozen=True)
class TripReport:
    tripped: bool
    trip_index: Optional[int] = None
    latency_s: Optional[float] = None
    run_start: Optional[int] = None


def trip_evaluate(cfg: TripConfig, filtered: SampleStream,
                  dio: Optional[DigitalIo] = None) -> TripReport:
    """Trip on the first run of ``persistence`` samples above threshold.

    ``trip_index`` is the sample completing the run; latency is the run
    length in time, ``persistence / rate``. When a ``DigitalIo`` is given
    the configured output line is asserted on trip.
    """
    over = filtered.samples > cfg.threshold_v
    m = cfg.persistence
    if len(over) >= m:
        # count of over-threshold samples in each trailing window of m
        csum = np.concatenate([[0], np.cumsum(over, dtype=np.int64)])
        full = np.flatnonzero(csum[m:] - csum[:-m] == m)
        if len(full):
            idx = int(full[0]) + m - 1
            if dio is not None:
                dio.outputs[cfg.output_line] = True
            return TripReport(True, idx, m / filtered.rate_hz, idx - m + 1)
    return TripReport(False)


def write_trip_csv(report: TripReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tripped", "trip_index", "latency_s", "run_start"])
        w.writerow([int(report.tripped),
                    "" if report.trip_index is None else report.trip_index,
                    "" if report.latency_s is None else repr(report.latency_s),
                    "" if report.run_start is None else report.run_start])


# -- register map -----------------------------------------------------------

@dataclass(frozen=True)
class Region:
    name: str
    base: int
    size: int
    width: int
    access: str

    def __contains__(self, address: int) -> bool:
        return self.base <= address < self.base + self.size


CE0, CE1, CE2, CE3 = 0x80000000, 0x90000000, 0xA0000000, 0xB0000000
PAGE = 0x100

_REGIONS = (
    Region("sdram", CE0, 0x01000000, 32, "rw"),
    Region("flash", CE1, 0x00100000, 32, "r"),
    Region("dpram", CE2, 0x00020000, 16, "rw"),
    Region("adc", CE3 + 0 * PAGE, PAGE, 16, "r"),
    Region("dac", CE3 + 1 * PAGE, PAGE, 16, "rw"),
    Region("dio", CE3 + 2 * PAGE, PAGE, 16, "rw"),
    Region("watchdog", CE3 + 3 * PAGE, PAGE, 16, "rw"),
    Region("trip", CE3 + 4 * PAGE, PAGE, 16, "rw"),
)


def register_map() -> Dict[str, Region]:
    return {r.name: r for r in _REGIONS}


def register_map_markdown() -> str:
    lines = ["| name | base | size | width | access |",
             "|------|------|------|-------|--------|"]
    for r in _REGIONS:
        lines.append(f"| {r.name} | 0x{r.base:08X} | 0x{r.size:X} | {r.width} | {r.access} |")
    return "\n".join(lines) + "\n"


class Board:
    """All peripherals behind one address dispatcher.

    ``now_step`` is the board's simulated time base for the watchdog and
    DAC settle checks (one step = one ADC sample period).
    """

    def __init__(self, adc: Optional[AdcModel] = None, dac: Optional[DacModel] = None,
                 watchdog_timeout: int = 1000, trip: Optional[TripConfig] = None,
                 dpram: Optional[DualPortMemory] = None, dpram_port: str = "A"):
        self.adc = adc or AdcModel()
        self.dac = dac or DacModel()
        self.dio = DigitalIo()
        self.watchdog = WatchdogTimer(watchdog_timeout)
        self.trip = trip or TripConfig(threshold_v=self.adc.full_scale_v)
        self.tripped = False
        self.dpram = dpram or DualPortMemory()
        self.dpram_port = dpram_port
        self.now_step = 0
        self._sdram: Dict[int, int] = {}

    def resolve(self, address: int):
        for region in _REGIONS:
            if address in region:
                return region, address - region.base
        raise UnmappedAddressError(f"no peripheral at {address:#010x}")

    def _unit(self, region: Region, offset: int) -> int:
        unit = region.width // 8
        if offset % unit:
            raise UnmappedAddressError(
                f"{region.name}+{offset:#x} not aligned to {region.width}-bit cells")
        return offset // unit

    def read(self, address: int) -> int:
        region, offset = self.resolve(address)
        cell = self._unit(region, offset)
        name = region.name
        if name == "sdram":
            return self._sdram.get(cell, 0)
        if name == "flash":
            return 0xFFFFFFFF
        if name == "dpram":
            return self.dpram.read(self.dpram_port, cell)
        if name == "adc":
            return self._pick(region, cell, [self.adc.last_code, self.adc.saturations & 0xFFFF])
        if name == "dac":
            return self._pick(region, cell, [self.dac.last_code, self.dac.timing_violations & 0xFFFF])
        if name == "dio":
            return self._pick(region, cell, [self.dio.input_mask, self.dio.output_mask])
        if name == "watchdog":
            wd = self.watchdog
            watchdog_tick(wd, self.now_step)
            regs = {1: int(wd.expired), 2: wd.timeout_steps & 0xFFFF}
            if cell not in regs:
                raise AccessError(f"watchdog register +{2 * cell:#x} is write-only or absent")
            return regs[cell]
        # trip
        return self._pick(region, cell, [int(self.tripped), self.trip.persistence & 0xFFFF,
                                         self.trip.output_line])

    @staticmethod
    def _pick(region, cell, regs):
        if cell >= len(regs):
            raise UnmappedAddressError(f"{region.name} has no register at +{2 * cell:#x}")
        return regs[cell]

    def write(self, address: int, value: int) -> None:
        region, offset = self.resolve(address)
        cell = self._unit(region, offset)
        if not 0 <= value < (1 << region.width):
            raise ValueError(f"value {value:#x} wider than {region.width} bits")
        name = region.name
        if "w" not in region.access:
            raise AccessError(f"{name} is read-only")
        if name == "sdram":
            self._sdram[cell] = value
        elif name == "dpram":
            self.dpram.write(self.dpram_port, cell, value)
        elif name == "dac":
            if cell != 0:
                raise AccessError(f"dac register +{2 * cell:#x} is read-only or absent")
            dac_output(self.dac, value, self.now_step / self.adc.rate_hz)
        elif name == "dio":
            if cell != 1:
                raise AccessError(f"dio register +{2 * cell:#x} is read-only or absent")
            self.dio.set_outputs(value & 0xFF)
        elif name == "watchdog":
            if cell == 0:
                watchdog_kick(self.watchdog, self.now_step)
            elif cell == 2:
                self.watchdog.timeout_steps = max(value, 1)
            elif cell == 3:
                watchdog_reset(self.watchdog, self.now_step)
            else:
                raise AccessError(f"watchdog register +{2 * cell:#x} is read-only or absent")
        elif name == "trip":
            if cell == 1:
                self.trip = TripConfig(self.trip.threshold_v, max(value, 1), self.trip.output_line)
            elif cell == 2:
                self.trip = TripConfig(self.trip.threshold_v, self.trip.persistence, value & 7)
            else:
                raise AccessError(f"trip register +{2 * cell:#x} is read-only or absent")

    def writable(self, address: int) -> bool:
        """Whether a write to ``address`` would be accepted."""
        region, offset = self.resolve(address)
        if offset % (region.width // 8) or "w" not in region.access:
            return False
        cell = offset // (region.width // 8)
        return {
            "sdram": True, "dpram": True, "dac": cell == 0, "dio": cell == 1,
            "watchdog": cell in (0, 2, 3), "trip": cell in (1, 2),
        }[region.name]
