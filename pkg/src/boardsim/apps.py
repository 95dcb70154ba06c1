"""End-to-end demos: the beam current monitor chain and the BPM X/Y split.

BCM chain::

    synthesize -> ADC -> dual-core adaptive filter -> trip comparator -> DAC / DIO

The clean ("beam") part of the signal is synthesized separately and kept
as SNR ground truth. A real monitor has no such reference; it is a
simulation-only affordance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import config as cfgmod
from .adaptive import AdaptiveRun
from .board import (
    AdcModel, DacModel, DigitalIo, TripConfig, TripReport, adc_convert, code_to_volts,
    dac_stream, trip_evaluate,
)
from .dualcore import (
    DualPortMemory, PipelineConfig, decode_f64, encode_f64, run_dual_pipeline, run_workers,
)
from .signal import SampleStream, SignalSpec, measure_snr, synthesize


# -- BPM --------------------------------------------------------------------

class InvalidReadingError(ValueError):
    pass


@dataclass(frozen=True)
class BpmReading:
    """Four electrode amplitudes; X from (a, b), Y from (c, d)."""

    a: float
    b: float
    c: float
    d: float
    k_scale: float = 1.0

    def validate(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(v) for v in vals + (self.k_scale,)):
            raise InvalidReadingError("electrode amplitudes must be finite")
        if any(v < 0 for v in vals):
            raise InvalidReadingError("electrode amplitudes must be non-negative")
        if not self.a + self.b > 0:
            raise InvalidReadingError("a + b is zero: no X position")
        if not self.c + self.d > 0:
            raise InvalidReadingError("c + d is zero: no Y position")


def difference_over_sum(p: float, q: float, k: float) -> float:
    return k * (p - q) / (p + q)


# DPRAM word addresses used by the BPM demo
BPM_START = 0x0000
BPM_X_IN = 0x0010   # a, b, k as f64 (12 words)
BPM_Y_IN = 0x0020   # c, d, k
BPM_X_OUT = 0x0030  # x as f64, done flag after it
BPM_Y_OUT = 0x0040
BPM_DONE = 4        # flag offset past the result


def _bpm_worker(mem, port, base_in, base_out):
    while mem.read(port, BPM_START) == 0:
        yield False
    p, q, k = (float(v) for v in decode_f64(mem.read_block(port, base_in, 12)))
    yield True
    mem.write_block(port, base_out, encode_f64([difference_over_sum(p, q, k)]))
    yield True
    mem.write(port, base_out + BPM_DONE, 1)
    yield True


def bpm_position(reading: BpmReading, scheduler_seed: Optional[int] = None,
                 mem: Optional[DualPortMemory] = None) -> Tuple[float, float]:
    """Beam position ``(x_mm, y_mm)``; X on the port-A core, Y on port B.

    The host loads the electrode values into the DPRAM, each core reads its
    pair, computes the difference over sum and deposits the result (f64,
    so the value read back is exact).
    """
    reading.validate()
    mem = DualPortMemory() if mem is None else mem
    k = reading.k_scale
    mem.write_block("A", BPM_X_IN, encode_f64([reading.a, reading.b, k]))
    mem.write_block("A", BPM_Y_IN, encode_f64([reading.c, reading.d, k]))
    mem.write("A", BPM_START, 1)
    mem.tick()
    run_workers(mem, {"A": _bpm_worker(mem, "A", BPM_X_IN, BPM_X_OUT),
                      "B": _bpm_worker(mem, "B", BPM_Y_IN, BPM_Y_OUT)},
                scheduler_seed=scheduler_seed)
    if mem.words[BPM_X_OUT + BPM_DONE] != 1 or mem.words[BPM_Y_OUT + BPM_DONE] != 1:
        raise RuntimeError("BPM workers finished without posting results")
    x = float(decode_f64(mem.words[BPM_X_OUT:BPM_X_OUT + 4])[0])
    y = float(decode_f64(mem.words[BPM_Y_OUT:BPM_Y_OUT + 4])[0])
    return x, y


# -- BCM --------------------------------------------------------------------

@dataclass
class BcmExperiment:
    """One BCM run.

    ``output`` picks the enhanced stream: ``y`` for the predictor (the
    narrowband estimate), ``e`` for identification, where the filter is fed
    the noise reference and the error is the cleaned beam signal. None
    picks by topology.
    """

    signal: SignalSpec
    topology: PipelineConfig
    trip: TripConfig
    adc: AdcModel
    dac: DacModel
    quantize: bool = True
    output: Optional[str] = None

    def validate(self):
        self.signal.validate()
        if self.output not in (None, "y", "e"):
            raise ValueError(f"output must be 'y' or 'e', got {self.output!r}")

    @property
    def output_stream(self) -> str:
        if self.output is not None:
            return self.output
        return "y" if self.topology.is_predictor else "e"


@dataclass
class BcmReport:
    input_snr_db: float
    output_snr_db: float
    improvement_db: float
    trip: TripReport
    runs: AdaptiveRun
    output: SampleStream
    reference_trip: TripReport
    filter_delay_s: Optional[float]
    dac_codes: np.ndarray
    dac_output: SampleStream
    dac_timing_violations: int
    adc_saturations: int
    clean: SampleStream
    contaminated: SampleStream

    def rows(self) -> List[Tuple[str, object]]:
        t, r = self.trip, self.reference_trip
        return [
            ("samples", len(self.output)),
            ("rate_hz", self.output.rate_hz),
            ("input_snr_db", self.input_snr_db),
            ("output_snr_db", self.output_snr_db),
            ("improvement_db", self.improvement_db),
            ("tripped", int(t.tripped)),
            ("trip_index", t.trip_index),
            ("trip_latency_s", t.latency_s),
            ("reference_trip_index", r.trip_index),
            ("filter_delay_s", self.filter_delay_s),
            ("adc_saturations", self.adc_saturations),
            ("dac_timing_violations", self.dac_timing_violations),
        ]

    def summary(self) -> str:
        t = self.trip
        lines = [
            "BCM experiment",
            f"  input SNR   {self.input_snr_db:9.3f} dB",
            f"  output SNR  {self.output_snr_db:9.3f} dB",
            f"  improvement {self.improvement_db:9.3f} dB",
        ]
        if t.tripped:
            lines.append(f"  trip at sample {t.trip_index} "
                         f"(persistence latency {t.latency_s * 1e6:.3f} us)")
            if self.filter_delay_s is not None:
                lines.append(f"  filter delay {self.filter_delay_s * 1e6:.3f} us "
                             "against the clean reference")
        else:
            lines.append("  no trip")
        lines.append(f"  ADC saturations {self.adc_saturations}, "
                     f"DAC timing violations {self.dac_timing_violations}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(report: BcmReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in report.rows():
            w.writerow([name, _fmt(value)])


def _quantize(adc: AdcModel, stream: SampleStream) -> SampleStream:
    codes = adc_convert(adc, stream.samples)
    return SampleStream(code_to_volts(codes, adc.full_scale_v, adc.bits), stream.rate_hz)


def run_bcm_experiment(exp: BcmExperiment, dio: Optional[DigitalIo] = None) -> BcmReport:
    """Run the full chain; deterministic given the experiment (seeds included).

    When the input has no noise, the improvement is reported as 0 dB:
    there is nothing to remove, and the infinite input SNR would make the
    difference meaningless.
    """
    exp.validate()
    spec = exp.signal
    clean = synthesize(spec.only("beam"))
    contaminated = synthesize(spec)
    seen = _quantize(exp.adc, contaminated) if exp.quantize else contaminated
    if exp.topology.is_predictor:
        run = run_dual_pipeline(seen, None, exp.topology)
    else:
        reference = synthesize(spec.only("noise"))
        if exp.quantize:
            reference = _quantize(exp.adc, reference)
        run = run_dual_pipeline(reference, seen, exp.topology)
    out = run.y if exp.output_stream == "y" else run.e

    snr_in = measure_snr(clean, contaminated)
    snr_out = measure_snr(clean, out)
    if snr_in.infinite:
        improvement = 0.0
    else:
        improvement = snr_out.snr_db - snr_in.snr_db

    trip = trip_evaluate(exp.trip, out, dio)
    reference_trip = trip_evaluate(exp.trip, clean)
    delay = None
    if trip.tripped and reference_trip.tripped:
        delay = (trip.trip_index - reference_trip.trip_index) / out.rate_hz

    before = exp.dac.timing_violations
    codes, volts = dac_stream(exp.dac, out.samples, out.rate_hz)
    return BcmReport(
        input_snr_db=snr_in.snr_db, output_snr_db=snr_out.snr_db,
        improvement_db=improvement, trip=trip, runs=run, output=out,
        reference_trip=reference_trip, filter_delay_s=delay,
        dac_codes=codes, dac_output=SampleStream(volts, out.rate_hz),
        dac_timing_violations=exp.dac.timing_violations - before,
        adc_saturations=exp.adc.saturations,
        clean=clean, contaminated=contaminated,
    )


def load_bcm_experiment(cp, seed: Optional[int] = None) -> BcmExperiment:
    """Build an experiment from a parsed config (see ``boardsim.config``).

    ``[pipeline]`` is optional here and defaults to 16-sample blocks.
    """
    spec = cfgmod.signal_spec(cp, seed)
    adaptive = cfgmod.adaptive_section(cp)
    pipe = cfgmod.pipeline_config(cp, adaptive, required=False)
    if pipe is None:
        topo = adaptive.predictor() if adaptive.topology == "predictor" else adaptive.lms
        pipe = PipelineConfig(block_len=16, topology=topo, na=adaptive.na)
    adc, dac, quantize = cfgmod.converters(cp)
    return BcmExperiment(spec, pipe, cfgmod.trip_config(cp), adc, dac,
                         quantize=quantize, output=adaptive.output)
