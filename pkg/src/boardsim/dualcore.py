"""Two-worker adaptive filtering over a modeled 64K x 16 dual-port RAM.

One worker (F) runs the FIR/IIR filter, the other (L) runs the LMS update.
They share nothing except ``DualPortMemory`` cells.

Staleness
---------
While F filters block ``n`` with coefficient set ``c_n``, L folds block
``n - 1`` into its master copy. Hence ``c_{n+1} = U(c_n, block n-1)`` and
errors from block ``n`` first influence filtering in block ``n + 2``. This
one-block delayed update is the defined semantics of the pipeline; it is
*not* plain per-sample LMS. ``delayed_update_reference`` computes the same
thing serially and the two must agree bit for bit.

Word formats
------------
Reals cross the DPRAM as IEEE-754 binary32, high 16-bit word at the lower
address. So F filters with float32-rounded coefficients, and L adapts from
float32-rounded inputs and errors; L's master coefficients stay float64.
``encode_f64`` (four words, same ordering) is available for results that
must survive exactly.

Handshake
---------
Three 16-bit cells, each written by exactly one side, hold counters mod
2**16: ``flag_coeff_ready`` (sets published by L), ``flag_data_ready``
(blocks published by F), ``seqno`` (blocks consumed by L). Coefficients
and data are double-buffered; bank ``i % 2`` holds set/block ``i``.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from . import kernels
from .adaptive import (
    AdaptiveRun, DivergenceError, FilterCoefficients, LmsConfig, PredictorConfig,
    predictor_regressor_input,
)
from .signal import SampleStream

DPRAM_WORDS = 0x10000
PORTS = ("A", "B")
MAC_BUDGET_PER_S = 3.0e8


class HandshakeTimeout(RuntimeError):
    pass


class HazardError(RuntimeError):
    pass


class CoefficientRangeError(OverflowError):
    pass


# -- word encodings ---------------------------------------------------------

def encode_f32(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore"):
        single = v.astype(">f4")
    if not np.all(np.isfinite(single)):
        raise CoefficientRangeError("value not representable as a finite binary32")
    return single.view(">u2").astype(np.uint16)


def decode_f32(words) -> np.ndarray:
    return np.asarray(words, dtype=np.uint16).astype(">u2").view(">f4").astype(np.float64)


def _encode_f32_small(values: list) -> list:
    # struct beats numpy below a few dozen values; same rounding (nearest-even)
    n = len(values)
    try:
        raw = struct.pack(f">{n}f", *values)
    except OverflowError:
        raise CoefficientRangeError("value not representable as a finite binary32") from None
    if not all(math.isfinite(v) for v in values):
        raise CoefficientRangeError("value not representable as a finite binary32")
    return list(struct.unpack(f">{2 * n}H", raw))


def encode_f64(values) -> np.ndarray:
    return np.asarray(values, dtype=">f8").view(">u2").astype(np.uint16)


def decode_f64(words) -> np.ndarray:
    return np.asarray(words, dtype=np.uint16).astype(">u2").view(">f8").astype(np.float64)


# -- memory -----------------------------------------------------------------

@dataclass(frozen=True)
class Hazard:
    step: int
    address: int
    ports: Tuple[str, str]


class DualPortMemory:
    """Zero-initialized 65536 x 16-bit memory with two ports.

    Writes commit immediately. Two writes to the same address from
    different ports within one simulated step (between ``tick`` calls) are
    a hazard; real parts leave the result undefined, here the later write
    wins and a ``Hazard`` is recorded (or ``HazardError`` raised if strict).
    """

    def __init__(self, log: bool = False, strict: bool = False):
        self.words = np.zeros(DPRAM_WORDS, dtype=np.uint16)
        self.step = 0
        self.strict = strict
        self.hazards: List[Hazard] = []
        self.log: Optional[list] = [] if log else None
        self._written: list = []  # (port, lo, hi) this step

    def tick(self):
        self.step += 1
        if self._written:
            self._written = []

    @staticmethod
    def _check(address, count=1):
        if not (0 <= address and address + count <= DPRAM_WORDS) or count < 0:
            raise IndexError(f"DPRAM access [{address:#x}, +{count}) outside 0..0xFFFF")

    def _check_port(self, port):
        if port not in PORTS:
            raise ValueError(f"unknown port {port!r}")

    def _note_write(self, port, lo, hi):
        for other, a, b in self._written:
            if other != port and a < hi and lo < b:
                for addr in range(max(a, lo), min(b, hi)):
                    if self.strict:
                        raise HazardError(
                            f"ports {other} and {port} both wrote {addr:#06x} in step {self.step}")
                    self.hazards.append(Hazard(self.step, addr, (other, port)))
        self._written.append((port, lo, hi))

    def read(self, port: str, address: int) -> int:
        self._check_port(port)
        self._check(address)
        value = int(self.words[address])
        if self.log is not None:
            self.log.append((self.step, port, "R", address, value))
        return value

    def write(self, port: str, address: int, value: int) -> None:
        self._check_port(port)
        self._check(address)
        if not 0 <= value <= 0xFFFF:
            raise ValueError(f"value {value:#x} does not fit 16 bits")
        self._note_write(port, address, address + 1)
        self.words[address] = value
        if self.log is not None:
            self.log.append((self.step, port, "W", address, int(value)))

    def read_block(self, port: str, address: int, count: int) -> np.ndarray:
        self._check_port(port)
        self._check(address, count)
        out = self.words[address:address + count].copy()
        if self.log is not None:
            self.log.extend((self.step, port, "R", address + i, int(v))
                            for i, v in enumerate(out.tolist()))
        return out

    def write_block(self, port: str, address: int, words) -> None:
        self._check_port(port)
        if not (isinstance(words, np.ndarray) and words.dtype == np.uint16):
            words = np.asarray(words)
            if len(words) and (words.min() < 0 or words.max() > 0xFFFF):
                raise ValueError("block contains values wider than 16 bits")
        self._check(address, len(words))
        self._note_write(port, address, address + len(words))
        self.words[address:address + len(words)] = words
        if self.log is not None:
            self.log.extend((self.step, port, "W", address + i, int(v))
                            for i, v in enumerate(words.tolist()))


def write_access_log_csv(mem: DualPortMemory, path) -> None:
    if mem.log is None:
        raise ValueError("memory was created without an access log")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "port", "op", "address", "value"])
        for step, port, op, addr, value in mem.log:
            w.writerow([step, port, op, f"0x{addr:04X}", f"0x{value:04X}"])


# -- layout -----------------------------------------------------------------

DATA_STREAMS = 3  # regressor input, error, desired


@dataclass(frozen=True)
class SharedLayout:
    """Where the pipeline keeps its cells, in 16-bit word addresses.

    Coefficient bank ``i`` starts at ``coeff_base + i * 2 * coeff_count``.
    Data bank ``i`` starts at ``data_base + i * 6 * block_len`` and holds
    three float32 arrays of ``block_len`` values: input, error, desired.
    """

    coeff_base: int
    coeff_count: int
    data_base: int
    block_len: int
    flag_data_ready: int
    flag_coeff_ready: int
    seqno: int

    @classmethod
    def default(cls, coeff_count: int, block_len: int) -> "SharedLayout":
        coeff_base = 0x0010
        data_base = (coeff_base + 4 * coeff_count + 0xFF) & ~0xFF
        layout = cls(coeff_base, coeff_count, data_base, block_len, 0x0000, 0x0001, 0x0002)
        layout.validate()
        return layout

    def coeff_bank(self, i: int) -> int:
        return self.coeff_base + (i % 2) * 2 * self.coeff_count

    def data_bank(self, i: int) -> int:
        return self.data_base + (i % 2) * 2 * DATA_STREAMS * self.block_len

    def regions(self) -> Dict[str, Tuple[int, int]]:
        return {
            "coeff": (self.coeff_base, self.coeff_base + 4 * self.coeff_count),
            "data": (self.data_base, self.data_base + 4 * DATA_STREAMS * self.block_len),
            "flag_data_ready": (self.flag_data_ready, self.flag_data_ready + 1),
            "flag_coeff_ready": (self.flag_coeff_ready, self.flag_coeff_ready + 1),
            "seqno": (self.seqno, self.seqno + 1),
        }

    def validate(self) -> None:
        if self.coeff_count < 1 or self.block_len < 1:
            raise ValueError("coeff_count and block_len must be >= 1")
        spans = sorted(self.regions().items(), key=lambda kv: kv[1])
        for name, (lo, hi) in spans:
            if lo < 0 or hi > DPRAM_WORDS:
                raise ValueError(f"region {name} [{lo:#x}, {hi:#x}) does not fit the 64K space")
        for (n1, (_, hi1)), (n2, (lo2, _)) in zip(spans, spans[1:]):
            if lo2 < hi1:
                raise ValueError(f"regions {n1} and {n2} overlap")

    def to_text(self) -> str:
        lines = []
        for key in ("coeff_base", "coeff_count", "data_base", "block_len",
                    "flag_data_ready", "flag_coeff_ready", "seqno"):
            lines.append(f"{key} = 0x{getattr(self, key):04X}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SharedLayout":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            values[key.strip()] = int(val.strip(), 0)
        try:
            layout = cls(**values)
        except TypeError as exc:
            raise ValueError(f"bad layout keys: {exc}") from None
        layout.validate()
        return layout


# -- scheduler --------------------------------------------------------------

Worker = Iterator[bool]

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> Tuple[int, int]:
    """One splitmix64 draw; returns ``(new_state, output)``.

    The scheduler uses this rather than ``random`` so that the compiled
    engine can reproduce the exact same schedule.
    """
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def run_workers(mem: DualPortMemory, workers: Dict[str, Worker],
                scheduler_seed: Optional[int] = None,
                max_steps: Optional[int] = None) -> int:
    """Drive one or two generator workers to completion; returns the final step.

    Each worker yields ``True`` after making progress and ``False`` after an
    unsuccessful flag poll. Without a seed the workers alternate one per
    step (round robin, first-listed first). With a seed, each step draws
    one of four schedules while both are live: first only, second only,
    both in order, both reversed. Two writes in one step are what the
    memory checks for hazards.

    If every live worker has polled unsuccessfully since the last progress
    anywhere, nothing can change and ``HandshakeTimeout`` is raised;
    likewise when ``max_steps`` is reached.
    """
    if not 1 <= len(workers) <= 2:
        raise ValueError("the board has two ports, so one or two workers")
    order = list(workers)
    live = dict(workers)
    state = None if scheduler_seed is None else int(scheduler_seed) & _MASK64
    blocked = set()
    rr = 0
    while live:
        if max_steps is not None and mem.step >= max_steps:
            raise HandshakeTimeout(
                f"workers {sorted(live)} unfinished after {max_steps} steps")
        ports = [p for p in order if p in live]
        if len(ports) == 2 and state is not None:
            state, draw = splitmix64(state)
            pick = draw & 3
            chosen = [ports[pick]] if pick < 2 else (ports if pick == 2 else ports[::-1])
        elif state is None:
            chosen = [ports[rr % len(ports)]]
            rr += 1
        else:
            chosen = ports
        for port in chosen:
            try:
                progressed = next(live[port])
            except StopIteration:
                del live[port]
                progressed = True
            if progressed:
                blocked.clear()
            else:
                blocked.add(port)
        if live and blocked >= set(live):
            raise HandshakeTimeout(f"deadlock: {sorted(live)} waiting on each other")
        mem.tick()
    return mem.step


# -- pipeline ---------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """``topology`` is a ``PredictorConfig`` or, for identification, an
    ``LmsConfig``; ``na > 0`` turns identification into equation-error IIR."""

    block_len: int
    topology: Union[PredictorConfig, LmsConfig]
    filter_port: str = "A"
    na: int = 0
    scheduler_seed: Optional[int] = None
    strict: bool = False
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.block_len < 1:
            raise ValueError(f"block_len must be >= 1, got {self.block_len}")
        if self.filter_port not in PORTS:
            raise ValueError(f"filter_port must be one of {PORTS}")
        if self.na < 0:
            raise ValueError("na must be >= 0")
        if isinstance(self.topology, PredictorConfig) and self.na:
            raise ValueError("the predictor topology is FIR only")
        if not isinstance(self.topology, (PredictorConfig, LmsConfig)):
            raise TypeError("topology must be PredictorConfig or LmsConfig")

    @property
    def lms(self) -> LmsConfig:
        t = self.topology
        return t.lms if isinstance(t, PredictorConfig) else t

    @property
    def is_predictor(self) -> bool:
        return isinstance(self.topology, PredictorConfig)

    @property
    def lms_port(self) -> str:
        return "B" if self.filter_port == "A" else "A"


def _prepare(input: SampleStream, desired: Optional[SampleStream], cfg: PipelineConfig,
             initial: Optional[FilterCoefficients]):
    if cfg.is_predictor:
        if desired is not None:
            raise ValueError("the predictor topology takes no desired stream")
        if len(input) < cfg.topology.delay:
            raise ValueError("stream shorter than the prediction delay")
        u = predictor_regressor_input(input.samples, cfg.topology.delay)
        d = input
    else:
        if desired is None:
            raise ValueError("identification needs a desired stream")
        if len(desired) != len(input) or desired.rate_hz != input.rate_hz:
            raise ValueError("input and desired streams differ in length or rate")
        u = input.samples.copy()
        d = desired
    nb = cfg.lms.num_taps
    if initial is None:
        initial = FilterCoefficients.zeros(nb, cfg.na)
    if initial.nb != nb or initial.na != cfg.na:
        raise ValueError(f"initial coefficients do not match nb={nb}, na={cfg.na}")
    return u, d, initial


def _blocks(n: int, block_len: int) -> List[Tuple[int, int]]:
    return [(k0, min(k0 + block_len, n)) for k0 in range(0, n, block_len)]


def _filter_worker(mem, port, lay: SharedLayout, u, d, y, e, blocks, nb, na):
    p = nb + na
    bl = lay.block_len
    # inputs are known up front, so their wire images are too
    u_words = encode_f32(u)
    d_words = encode_f32(d)
    staging = np.zeros(2 * DATA_STREAMS * bl, dtype=np.uint16)
    for n, (k0, k1) in enumerate(blocks):
        while (n + 2 - mem.read(port, lay.flag_coeff_ready)) & 0xFFFF > 1:
            yield False
        coeffs = decode_f32(mem.read_block(port, lay.coeff_bank(n), 2 * p))
        yield True
        if n >= 2:
            while (n - mem.read(port, lay.seqno)) & 0xFFFF > 1:
                yield False
        bad = kernels.filter_block(u, d, coeffs, nb, na, k0, k1, y, e)
        if bad >= 0:
            raise DivergenceError(bad)
        yield True
        cnt = k1 - k0
        staging[:2 * cnt] = u_words[2 * k0:2 * k1]
        staging[2 * bl:2 * bl + 2 * cnt] = (
            _encode_f32_small(e[k0:k1].tolist()) if cnt <= 16 else encode_f32(e[k0:k1]))
        staging[4 * bl:4 * bl + 2 * cnt] = d_words[2 * k0:2 * k1]
        if cnt == bl:
            mem.write_block(port, lay.data_bank(n), staging)
        else:
            base = lay.data_bank(n)
            for off in (0, 2 * bl, 4 * bl):
                mem.write_block(port, base + off, staging[off:off + 2 * cnt])
        yield True
        mem.write(port, lay.flag_data_ready, (n + 1) & 0xFFFF)
        yield True


def _lms_worker(mem, port, lay: SharedLayout, lms: LmsConfig, initial, blocks, nb, na, out):
    bl = lay.block_len
    n = blocks[-1][1] if blocks else 0
    u32, e32, d32 = np.zeros(n), np.zeros(n), np.zeros(n)
    c = initial.vector()
    for j in range(min(2, len(blocks))):
        mem.write_block(port, lay.coeff_bank(j), encode_f32(c))
        yield True
        mem.write(port, lay.flag_coeff_ready, j + 1)
        yield True
    for m, (k0, k1) in enumerate(blocks):
        while (m + 2 - mem.read(port, lay.flag_data_ready)) & 0xFFFF > 1:
            yield False
        base = lay.data_bank(m)
        cnt = k1 - k0
        if cnt == bl:
            vals = decode_f32(mem.read_block(port, base, 2 * DATA_STREAMS * bl))
            u32[k0:k1] = vals[:bl]
            e32[k0:k1] = vals[bl:2 * bl]
            d32[k0:k1] = vals[2 * bl:]
        else:
            u32[k0:k1] = decode_f32(mem.read_block(port, base, 2 * cnt))
            e32[k0:k1] = decode_f32(mem.read_block(port, base + 2 * bl, 2 * cnt))
            d32[k0:k1] = decode_f32(mem.read_block(port, base + 4 * bl, 2 * cnt))
        yield True
        mem.write(port, lay.seqno, (m + 1) & 0xFFFF)
        yield True
        kernels.update_block(u32, d32, e32, c, nb, na, float(lms.mu), float(lms.leakage),
                             bool(lms.normalized), float(lms.eps), k0, k1)
        yield True
        if m + 2 < len(blocks):
            mem.write_block(port, lay.coeff_bank(m + 2), encode_f32(c))
            yield True
            mem.write(port, lay.flag_coeff_ready, (m + 3) & 0xFFFF)
            yield True
    out["final"] = c


def run_dual_pipeline(input: SampleStream, desired: Optional[SampleStream],
                      cfg: PipelineConfig, layout: Optional[SharedLayout] = None,
                      initial: Optional[FilterCoefficients] = None,
                      mem: Optional[DualPortMemory] = None) -> AdaptiveRun:
    """Run the filter/LMS split; pass ``mem`` to inspect hazards or the log."""
    u, d, initial = _prepare(input, desired, cfg, initial)
    nb, na = initial.nb, initial.na
    if layout is None:
        layout = SharedLayout.default(nb + na, cfg.block_len)
    layout.validate()
    if layout.coeff_count != nb + na or layout.block_len != cfg.block_len:
        raise ValueError("layout does not match the filter size or block length")
    if mem is None:
        mem = DualPortMemory(strict=cfg.strict)
    if kernels.pipeline_run is not None and mem.log is None:
        y, e, final = _run_compiled(u, d.samples, mem, layout, cfg, initial)
    else:
        y, e, final = _run_generators(u, d.samples, mem, layout, cfg, initial)
    rate = input.rate_hz
    return AdaptiveRun(
        x=input, d=d, y=SampleStream(y, rate), e=SampleStream(e, rate),
        final=FilterCoefficients.from_vector(final, nb),
        coeff_trajectory=None, stride=0,
    )


def _run_generators(u, d, mem, layout, cfg, initial):
    nb, na = initial.nb, initial.na
    n = len(u)
    blocks = _blocks(n, cfg.block_len)
    y, e = np.zeros(n), np.zeros(n)
    out: dict = {}
    workers = {
        cfg.filter_port: _filter_worker(mem, cfg.filter_port, layout, u, d, y, e,
                                        blocks, nb, na),
        cfg.lms_port: _lms_worker(mem, cfg.lms_port, layout, cfg.lms, initial, blocks,
                                  nb, na, out),
    }
    run_workers(mem, workers, cfg.scheduler_seed, cfg.max_steps)
    return y, e, out["final"]


def _run_compiled(u, d, mem, layout, cfg, initial):
    lms = cfg.lms
    lay = (layout.coeff_base, layout.coeff_count, layout.data_base, layout.block_len,
           layout.flag_data_ready, layout.flag_coeff_ready, layout.seqno)
    y, e, final, end, hazards, status, detail = kernels.pipeline_run(
        np.ascontiguousarray(u, dtype=np.float64), np.ascontiguousarray(d, dtype=np.float64),
        mem.words, lay, initial.nb, initial.na, float(lms.mu), float(lms.leakage),
        bool(lms.normalized), float(lms.eps), initial.vector(), cfg.scheduler_seed,
        -1 if cfg.max_steps is None else int(cfg.max_steps), mem.step, mem.strict)
    ports = (cfg.filter_port, cfg.lms_port)
    mem.hazards.extend(Hazard(s, a, (ports[w1], ports[w2])) for s, a, w1, w2 in hazards)
    mem.step = end
    mem._written = []
    if status == 1:
        raise HandshakeTimeout("deadlock: filter and LMS workers waiting on each other")
    if status == 2:
        raise HandshakeTimeout(f"workers unfinished after {cfg.max_steps} steps")
    if status == 3:
        raise DivergenceError(detail)
    if status == 4:
        raise HazardError(f"both ports wrote {detail:#06x} in step {end}")
    if status == 5:
        raise CoefficientRangeError("value not representable as a finite binary32")
    return y, e, final


def delayed_update_reference(input: SampleStream, desired: Optional[SampleStream],
                             cfg: PipelineConfig,
                             initial: Optional[FilterCoefficients] = None):
    """Serial, single-threaded statement of the pipeline's arithmetic.

    Plain Python floats throughout, with binary32 rounding done by
    ``struct`` wherever a value crosses the shared memory. Returns
    ``(y, e, final)`` as lists.
    """
    def f32(v):
        return struct.unpack(">f", struct.pack(">f", v))[0]

    x = input.samples.tolist()
    n = len(x)
    nb = cfg.lms.num_taps
    na = cfg.na
    if cfg.is_predictor:
        delay = cfg.topology.delay
        u = [0.0] * min(delay, n) + x[: max(n - delay, 0)]
        d = x
    else:
        u = x
        d = desired.samples.tolist()
    master = [0.0] * (nb + na) if initial is None else initial.vector().tolist()
    lms = cfg.lms
    keep = 1.0 - lms.leakage

    def regressor(us, ds, k):
        r = [us[k - i] if k - i >= 0 else 0.0 for i in range(nb)]
        return r + [ds[k - j] if k - j >= 0 else 0.0 for j in range(1, na + 1)]

    u32 = [f32(v) for v in u]
    d32 = [f32(v) for v in d]
    e32 = [0.0] * n
    y = [0.0] * n
    e = [0.0] * n

    def fold(k0, k1):
        for k in range(k0, k1):
            r = regressor(u32, d32, k)
            if lms.normalized:
                power = 0.0
                for ri in r:
                    power = power + ri * ri
                mu_eff = lms.mu / (lms.eps + power)
            else:
                mu_eff = lms.mu
            g = (2.0 * mu_eff) * e32[k]
            for i, ri in enumerate(r):
                master[i] = keep * master[i] + g * ri

    blocks = [(k0, min(k0 + cfg.block_len, n)) for k0 in range(0, n, cfg.block_len)]
    in_use = [f32(v) for v in master]
    for j, (k0, k1) in enumerate(blocks):
        for k in range(k0, k1):
            acc = 0.0
            for ci, ri in zip(in_use, regressor(u, d, k)):
                acc = acc + ci * ri
            y[k] = acc
            e[k] = d[k] - acc
            e32[k] = f32(e[k])
        if j >= 1:
            fold(*blocks[j - 1])
            in_use = [f32(v) for v in master]
    if blocks:
        fold(*blocks[-1])
    return y, e, master


def check_flag_discipline(log, layout: SharedLayout, filter_port: str = "A") -> List[str]:
    """Replay an access log and report any region read before it was published.

    L may read a data bank only while it holds a published, unconsumed
    block; F may read a coefficient bank only if it holds one of the two
    most recently published sets.
    """
    lms_port = "B" if filter_port == "A" else "A"
    data_lo, data_hi = layout.regions()["data"]
    coeff_lo, coeff_hi = layout.regions()["coeff"]
    bank_words = 2 * DATA_STREAMS * layout.block_len
    published = acked = coeffs = 0
    last = {layout.flag_data_ready: 0, layout.seqno: 0, layout.flag_coeff_ready: 0}
    problems = []
    for step, port, op, addr, value in log:
        if op == "W" and addr in last:
            delta = (value - last[addr]) & 0xFFFF
            last[addr] = value
            if addr == layout.flag_data_ready:
                published += delta
            elif addr == layout.seqno:
                acked += delta
            else:
                coeffs += delta
            continue
        if op != "R":
            continue
        if port == lms_port and data_lo <= addr < data_hi:
            bank = (addr - data_lo) // bank_words
            if not any(m % 2 == bank for m in range(acked, published)):
                problems.append(f"step {step}: {port} read data {addr:#06x} before publish")
        elif port == filter_port and coeff_lo <= addr < coeff_hi:
            bank = (addr - coeff_lo) // (2 * layout.coeff_count)
            if not any(m % 2 == bank for m in range(max(coeffs - 2, 0), coeffs)):
                problems.append(f"step {step}: {port} read coefficients {addr:#06x} before publish")
    return problems


# -- MAC budget -------------------------------------------------------------

@dataclass(frozen=True)
class MacBudget:
    macs_per_sample: int
    sample_rate_hz: float
    macs_per_second: float
    budget_macs_per_second: float = MAC_BUDGET_PER_S
    utilization: float = field(default=0.0)

    @property
    def over_budget(self) -> bool:
        return self.utilization > 1

    def table(self) -> str:
        rows = [
            ("macs_per_sample", f"{self.macs_per_sample}"),
            ("sample_rate_hz", f"{self.sample_rate_hz:g}"),
            ("macs_per_second", f"{self.macs_per_second:.6g}"),
            ("budget_macs_per_second", f"{self.budget_macs_per_second:.6g}"),
            ("utilization", f"{self.utilization:.6g}"),
            ("over_budget", "yes" if self.over_budget else "no"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def mac_budget(num_taps: int, topology: str = "fir", sample_rate_hz: float = 333_000.0,
               na: int = 0) -> MacBudget:
    """MACs per second for filtering plus LMS update against the 3e8 MAC/s budget.

    ``topology`` is ``"fir"`` or ``"iir"``; IIR adds ``na`` feedback taps
    to both the filter and the update.
    """
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    if not sample_rate_hz > 0:
        raise ValueError("sample rate must be positive")
    if topology not in ("fir", "iir"):
        raise ValueError(f"topology must be 'fir' or 'iir', got {topology!r}")
    feedback = na if topology == "iir" else 0
    per_sample = 2 * (num_taps + feedback)
    per_second = per_sample * sample_rate_hz
    return MacBudget(per_sample, float(sample_rate_hz), per_second, MAC_BUDGET_PER_S,
                     per_second / MAC_BUDGET_PER_S)
