"""LMS-adapted FIR and equation-error IIR filters.

Two topologies are supported:

* identification: the filter sees the plant input and is adapted until its
  output matches the plant output (``desired``);
* prediction: the filter sees the input delayed by ``delay`` samples and
  predicts the current sample, so ``y`` carries the predictable narrowband
  part and ``e`` the broadband residue (an adaptive line enhancer).

The update is Widrow-Hoff, ``b' = (1 - leakage) b + 2 mu_eff e x``, with
``mu_eff = mu / (eps + |x|^2)`` when normalized (NLMS). Delay lines start
zeroed. The IIR variant uses the equation-error form: the regressor holds
delayed *desired* samples rather than past filter outputs, and feedback
weights use the sign convention ``y_k = sum b_i x_{k-i} + sum a_j d_{k-j}``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .signal import SampleStream

log = logging.getLogger(__name__)

DEFAULT_STRIDE = 100


class DivergenceError(RuntimeError):
    def __init__(self, index: int):
        super().__init__(f"filter output became non-finite at sample {index}")
        self.index = index


@dataclass
class FilterCoefficients:
    b: np.ndarray
    a: Optional[np.ndarray] = None

    def __post_init__(self):
        self.b = np.array(self.b, dtype=np.float64, ndmin=1)
        if self.a is not None:
            self.a = np.array(self.a, dtype=np.float64, ndmin=1)
        if len(self.b) < 1:
            raise ValueError("need at least one FIR tap")
        if not np.all(np.isfinite(self.vector())):
            raise ValueError("coefficients must be finite")

    @classmethod
    def zeros(cls, nb: int, na: int = 0) -> "FilterCoefficients":
        return cls(np.zeros(nb), np.zeros(na) if na else None)

    @property
    def nb(self) -> int:
        return len(self.b)

    @property
    def na(self) -> int:
        return 0 if self.a is None else len(self.a)

    def vector(self) -> np.ndarray:
        """Concatenated ``[b..., a...]`` in regressor order."""
        if self.a is None:
            return self.b.copy()
        return np.concatenate([self.b, self.a])

    @classmethod
    def from_vector(cls, vec, nb: int) -> "FilterCoefficients":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[:nb], vec[nb:] if len(vec) > nb else None)


@dataclass(frozen=True)
class LmsConfig:
    mu: float
    num_taps: int
    normalized: bool = False
    leakage: float = 0.0
    eps: float = 1e-6

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.num_taps < 1:
            raise ValueError(f"num_taps must be >= 1, got {self.num_taps}")
        if not 0 <= self.leakage < 1:
            raise ValueError(f"leakage must lie in [0, 1), got {self.leakage}")
        if self.normalized and not self.eps > 0:
            raise ValueError("NLMS needs eps > 0")


@dataclass(frozen=True)
class PredictorConfig:
    lms: LmsConfig
    delay: int = 1

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError(f"delay must be >= 1, got {self.delay}")


@dataclass
class AdaptiveRun:
    """Per-sample record of one adaptive filtering run.

    ``x`` is the stream fed to the filter input, ``d`` the desired stream;
    ``e = d - y`` holds at every sample. ``coeff_trajectory[j]`` are the
    coefficients in use at sample ``j * stride``.
    """

    x: SampleStream
    d: SampleStream
    y: SampleStream
    e: SampleStream
    final: FilterCoefficients
    coeff_trajectory: Optional[list] = None
    stride: int = DEFAULT_STRIDE


def stability_bound(cfg: LmsConfig, input_power: float) -> float:
    """Conservative largest LMS step size, ``1 / (taps * power)``."""
    if not input_power > 0:
        raise ValueError(f"input_power must be positive, got {input_power}")
    return 1.0 / (cfg.num_taps * input_power)


def fir_lms_step(state: FilterCoefficients, window: Sequence[float], desired: float,
                 cfg: LmsConfig):
    """One filter-and-update step; ``window`` is newest-first.

    Returns ``(y, e, new_state)``.
    """
    b = state.b.tolist()
    w = [float(v) for v in window]
    if len(w) != cfg.num_taps or len(b) != cfg.num_taps:
        raise ValueError(
            f"window has {len(w)} samples, filter has {len(b)} taps, config says {cfg.num_taps}")
    if not (all(math.isfinite(v) for v in w) and math.isfinite(desired)):
        raise ValueError("non-finite input to LMS step")
    y = 0.0
    for bi, wi in zip(b, w):
        y = y + bi * wi
    e = desired - y
    if cfg.normalized:
        power = 0.0
        for wi in w:
            power = power + wi * wi
        mu_eff = cfg.mu / (cfg.eps + power)
    else:
        mu_eff = cfg.mu
    g = (2.0 * mu_eff) * e
    keep = 1.0 - cfg.leakage
    new_b = [keep * bi + g * wi for bi, wi in zip(b, w)]
    return y, e, FilterCoefficients(new_b)


def _run(x: SampleStream, u, d: SampleStream, cfg: LmsConfig, initial: FilterCoefficients,
         stride: int) -> AdaptiveRun:
    nb, na = initial.nb, initial.na
    y, e, final, snaps, diverged = kernels.lms_run(
        np.ascontiguousarray(u, dtype=np.float64), d.samples, initial.vector(),
        nb, na, float(cfg.mu), float(cfg.leakage), bool(cfg.normalized), float(cfg.eps),
        int(stride))
    if diverged >= 0:
        raise DivergenceError(int(diverged))
    trajectory = [FilterCoefficients.from_vector(row, nb) for row in snaps] if stride else None
    return AdaptiveRun(
        x=x, d=d,
        y=SampleStream(y, x.rate_hz), e=SampleStream(e, x.rate_hz),
        final=FilterCoefficients.from_vector(final, nb),
        coeff_trajectory=trajectory, stride=stride,
    )


def _warn_step(cfg: LmsConfig, samples: np.ndarray):
    if cfg.normalized or len(samples) == 0:
        return
    power = float(np.mean(samples * samples))
    if power > 0 and cfg.mu > stability_bound(cfg, power):
        log.warning("mu=%g exceeds the stability bound %g for input power %g",
                    cfg.mu, stability_bound(cfg, power), power)


def _check_pair(a: SampleStream, b: SampleStream):
    if len(a) != len(b) or a.rate_hz != b.rate_hz:
        raise ValueError(
            f"stream mismatch: {len(a)} @ {a.rate_hz} Hz vs {len(b)} @ {b.rate_hz} Hz")


def run_identification(input: SampleStream, desired: SampleStream, cfg: LmsConfig,
                       initial: Optional[FilterCoefficients] = None,
                       stride: int = DEFAULT_STRIDE) -> AdaptiveRun:
    _check_pair(input, desired)
    if initial is None:
        initial = FilterCoefficients.zeros(cfg.num_taps)
    if initial.nb != cfg.num_taps or initial.na:
        raise ValueError(f"initial coefficients do not match {cfg.num_taps} FIR taps")
    _warn_step(cfg, input.samples)
    return _run(input, input.samples, desired, cfg, initial, stride)


def predictor_regressor_input(x: np.ndarray, delay: int) -> np.ndarray:
    """The input delayed by ``delay`` samples with a zeroed delay line."""
    u = np.zeros(len(x))
    u[delay:] = x[: len(x) - delay]
    return u


def run_predictor(input: SampleStream, cfg: PredictorConfig,
                  initial: Optional[FilterCoefficients] = None,
                  stride: int = DEFAULT_STRIDE) -> AdaptiveRun:
    if len(input) < cfg.delay:
        raise ValueError(f"stream of {len(input)} samples is shorter than delay {cfg.delay}")
    if initial is None:
        initial = FilterCoefficients.zeros(cfg.lms.num_taps)
    if initial.nb != cfg.lms.num_taps or initial.na:
        raise ValueError(f"initial coefficients do not match {cfg.lms.num_taps} FIR taps")
    _warn_step(cfg.lms, input.samples)
    u = predictor_regressor_input(input.samples, cfg.delay)
    return _run(input, u, input, cfg.lms, initial, stride)


def run_iir_equation_error(input: SampleStream, desired: SampleStream, cfg: LmsConfig,
                           nb: int, na: int,
                           initial: Optional[FilterCoefficients] = None,
                           stride: int = DEFAULT_STRIDE) -> AdaptiveRun:
    """Equation-error adaptive IIR; ``na == 0`` is plain FIR identification."""
    _check_pair(input, desired)
    if nb < 1 or na < 0:
        raise ValueError(f"need nb >= 1 and na >= 0, got nb={nb}, na={na}")
    if cfg.num_taps != nb:
        raise ValueError(f"config has {cfg.num_taps} taps but nb={nb}")
    if initial is None:
        initial = FilterCoefficients.zeros(nb, na)
    if initial.nb != nb or initial.na != na:
        raise ValueError(f"initial coefficients do not match nb={nb}, na={na}")
    return _run(input, input.samples, desired, cfg, initial, stride)


def write_coefficients_csv(coeffs: FilterCoefficients, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(coeffs.vector().tolist()):
            w.writerow([i, repr(v)])


def read_coefficients_csv(path, na: int = 0) -> FilterCoefficients:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "value"]:
        raise ValueError(f"{path}: expected header 'index,value'")
    vec = [float(r[1]) for r in rows[1:]]
    return FilterCoefficients.from_vector(vec, len(vec) - na)


def write_run_csv(run: AdaptiveRun, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "x", "y", "e"])
        cols = zip(run.x.samples.tolist(), run.y.samples.tolist(), run.e.samples.tolist())
        for k, (x, y, e) in enumerate(cols):
            w.writerow([k, repr(x), repr(y), repr(e)])
