"""Transaction-level VMEbus slave for the board's protocol subset.

One call to ``slave_execute`` is one complete bus cycle; there are no
strobe waveforms. The slave decodes a fixed window starting at ``base``:

* ``+0x00000 .. +0x1FFFF``  the dual-port RAM, byte addressed, big-endian
  lanes (the even byte is the high half of the 16-bit word);
* ``+0x20000 .. +0x204FF``  the CE3 peripheral pages of the board, same
  offsets as on the DSP side.

Address pipelining: an ADO cycle latches its address; the next data cycle
given no address (``address=None``) uses the latch. Any data cycle clears
the latch. Interrupts hold one pending request per level.

``slave_execute`` runs to completion before returning, so an RMW cycle is
atomic by construction: several logical masters are modeled by
interleaving their transactions at call granularity.
"""
from __future__ import annotations

import csv
import enum
import shlex
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .board import CE3, AccessError, Board, UnmappedAddressError

DPRAM_SPAN = 0x20000
REG_SPAN = 0x500
WINDOW_SIZE = DPRAM_SPAN + REG_SPAN
BLT_BOUNDARY = 256


class Cycle(enum.Enum):
    D16 = "D16"
    D08_EO = "D08"
    BLT = "BLT"
    RMW = "RMW"
    ADO = "ADO"


@dataclass(frozen=True)
class VmeTransaction:
    cycle: Cycle
    direction: Optional[str] = None  # "R", "W"; None for RMW/ADO
    address: Optional[int] = None
    data: Tuple[int, ...] = ()
    count: int = 0  # words for a BLT read
    and_mask: int = 0xFFFF
    or_mask: int = 0x0000

    def __post_init__(self):
        c = self.cycle
        if c in (Cycle.D16, Cycle.D08_EO, Cycle.BLT) and self.direction not in ("R", "W"):
            raise ValueError(f"{c.value} needs direction R or W")
        width = 0xFF if c is Cycle.D08_EO else 0xFFFF
        if any(not 0 <= v <= width for v in self.data):
            raise ValueError(f"{c.value} data wider than the cycle")
        if c in (Cycle.D16, Cycle.D08_EO) and self.direction == "W" and len(self.data) != 1:
            raise ValueError(f"{c.value} write carries exactly one datum")
        if c is Cycle.BLT:
            n = len(self.data) if self.direction == "W" else self.count
            if n < 1:
                raise ValueError("BLT needs at least one word")
        if c is Cycle.ADO and self.data:
            raise ValueError("ADO carries no data")
        if c is Cycle.ADO and self.address is None:
            raise ValueError("ADO needs an address")


@dataclass(frozen=True)
class BusResult:
    outcome: str  # "DTACK" or "BERR"
    data: Tuple[int, ...] = ()
    reason: Optional[str] = None
    cycles_consumed: int = 1

    @property
    def ok(self) -> bool:
        return self.outcome == "DTACK"


class InterruptPendingError(RuntimeError):
    pass


@dataclass
class SlaveState:
    backing: Board = field(default_factory=Board)
    base: int = 0x000000
    window_size: int = WINDOW_SIZE
    pipeline_reg: Optional[int] = None
    pending: Dict[int, Tuple[int, str]] = field(default_factory=dict)

    def snapshot(self):
        """Everything a bus cycle could change, for before/after comparisons."""
        b = self.backing
        return (b.dpram.words.tobytes(), tuple(sorted(b._sdram.items())),
                b.dio.output_mask, b.dac.last_code, b.watchdog.last_kick_step,
                b.watchdog.expired, b.trip, dict(self.pending))


class _Berr(Exception):
    pass


def _decode(state: SlaveState, address: int) -> int:
    off = address - state.base
    if not 0 <= off < state.window_size:
        raise _Berr("unmapped")
    return off


def _read16(state: SlaveState, off: int) -> int:
    b = state.backing
    try:
        if off < DPRAM_SPAN:
            return b.dpram.read(b.dpram_port, off >> 1)
        return b.read(CE3 + off - DPRAM_SPAN)
    except (AccessError, UnmappedAddressError) as exc:
        raise _Berr(f"access: {exc}") from None


def _write16(state: SlaveState, off: int, value: int) -> None:
    b = state.backing
    try:
        if off < DPRAM_SPAN:
            b.dpram.write(b.dpram_port, off >> 1, value)
        else:
            b.write(CE3 + off - DPRAM_SPAN, value)
    except (AccessError, UnmappedAddressError) as exc:
        raise _Berr(f"access: {exc}") from None


def slave_execute(state: SlaveState, txn: VmeTransaction) -> BusResult:
    """Execute one bus cycle; every cycle ends in exactly one DTACK or BERR."""
    address = txn.address
    if txn.cycle is not Cycle.ADO:
        if address is None:
            address = state.pipeline_reg
        state.pipeline_reg = None
    try:
        if address is None:
            raise _Berr("no address latched")
        off = _decode(state, address)
        return _execute(state, txn, off)
    except _Berr as exc:
        return BusResult("BERR", reason=str(exc))


def _execute(state: SlaveState, txn: VmeTransaction, off: int) -> BusResult:
    c = txn.cycle
    if c is Cycle.ADO:
        state.pipeline_reg = txn.address
        return BusResult("DTACK")
    if c is Cycle.D08_EO:
        word_off = off & ~1
        shift = 0 if off & 1 else 8
        if txn.direction == "R":
            return BusResult("DTACK", ((_read16(state, word_off) >> shift) & 0xFF,))
        old = _read16(state, word_off)
        new = (old & ~(0xFF << shift) & 0xFFFF) | (txn.data[0] << shift)
        _write16(state, word_off, new)
        return BusResult("DTACK")
    if off & 1:
        raise _Berr("alignment")
    if c is Cycle.D16:
        if txn.direction == "R":
            return BusResult("DTACK", (_read16(state, off),))
        _write16(state, off, txn.data[0])
        return BusResult("DTACK")
    if c is Cycle.RMW:
        old = _read16(state, off)
        _write16(state, off, (old & txn.and_mask) | txn.or_mask)
        return BusResult("DTACK", (old,), cycles_consumed=2)
    # BLT
    n = len(txn.data) if txn.direction == "W" else txn.count
    if off % BLT_BOUNDARY + 2 * n > BLT_BOUNDARY:
        raise _Berr("boundary")
    if off + 2 * n > state.window_size:
        raise _Berr("unmapped")
    if txn.direction == "W":
        for i, word in enumerate(txn.data):
            _write16(state, off + 2 * i, word)
        return BusResult("DTACK", cycles_consumed=n)
    words = tuple(_read16(state, off + 2 * i) for i in range(n))
    return BusResult("DTACK", words, cycles_consumed=n)


def raise_interrupt(state: SlaveState, level: int, status_id: int, width: str = "D08") -> None:
    if not 1 <= level <= 7:
        raise ValueError(f"interrupt level must be 1..7, got {level}")
    if width not in ("D08", "D16"):
        raise ValueError(f"Status/ID width must be D08 or D16, got {width!r}")
    limit = 0xFF if width == "D08" else 0xFFFF
    if not 0 <= status_id <= limit:
        raise ValueError(f"Status/ID {status_id:#x} does not fit {width}")
    if level in state.pending:
        raise InterruptPendingError(f"level {level} already has a pending request")
    state.pending[level] = (status_id, width)


def iack_cycle(state: SlaveState, level: int) -> Optional[int]:
    """Acknowledge ``level``; returns the Status/ID, or None for no response."""
    if not 1 <= level <= 7:
        raise ValueError(f"interrupt level must be 1..7, got {level}")
    entry = state.pending.pop(level, None)
    if entry is None:
        return None
    status_id, width = entry
    return status_id & (0xFF if width == "D08" else 0xFFFF)


# -- scripts ----------------------------------------------------------------
# One transaction per line:  CYCLE DIR ADDRESS DATA... [EXPECT ...]
#   D16 W 000100 BEEF
#   D16 R 000100 EXPECT BEEF
#   D08 W 000101 EF
#   BLT W 000200 0001 0002 0003
#   BLT R 000200 3 EXPECT 0001 0002 0003     (DATA is the word count)
#   RMW - 000100 FFFF 0100 EXPECT 00FF       (AND mask, OR mask; pre-image)
#   ADO - 000100
#   D16 R - EXPECT BEEF                      (address from the ADO latch)
#   D16 R 000101 EXPECT BERR
#   IRQ - 3 A5 D08                           (ADDRESS column is the level)
#   IACK - 3 EXPECT A5                       (or EXPECT NORESP)
# Numbers are hex. '#' starts a comment.

@dataclass(frozen=True)
class InterruptOp:
    kind: str  # "IRQ" or "IACK"
    level: int
    status_id: int = 0
    width: str = "D08"


@dataclass(frozen=True)
class ScriptLine:
    lineno: int
    text: str
    op: Union[VmeTransaction, InterruptOp]
    expect: Optional[Tuple[str, ...]] = None


class ScriptError(ValueError):
    pass


def parse_script(text: str) -> List[ScriptLine]:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            lines.append(_parse_line(lineno, body))
        except (ValueError, IndexError) as exc:
            raise ScriptError(f"line {lineno}: {exc}") from None
    return lines


def _parse_line(lineno: int, body: str) -> ScriptLine:
    tokens = shlex.split(body)
    expect = None
    if "EXPECT" in (t.upper() for t in tokens):
        cut = [t.upper() for t in tokens].index("EXPECT")
        expect = tuple(t.upper() for t in tokens[cut + 1:])
        if not expect:
            raise ValueError("EXPECT with nothing after it")
        tokens = tokens[:cut]
    if len(tokens) < 3:
        raise ValueError("need at least CYCLE DIR ADDRESS")
    name, direction, addr_tok, *data = tokens
    name = name.upper().replace("(EO)", "").replace("_EO", "")
    direction = direction.upper()
    if name in ("IRQ", "IACK"):
        level = int(addr_tok, 16)
        if name == "IRQ":
            width = data[1].upper() if len(data) > 1 else "D08"
            op = InterruptOp("IRQ", level, int(data[0], 16), width)
        else:
            op = InterruptOp("IACK", level)
        return ScriptLine(lineno, body, op, expect)
    address = None if addr_tok == "-" else int(addr_tok, 16)
    nums = [int(t, 16) for t in data]
    dir_ = None if direction == "-" else direction
    cycle = Cycle(name)
    if cycle is Cycle.RMW:
        if len(nums) != 2:
            raise ValueError("RMW takes AND and OR masks")
        txn = VmeTransaction(cycle, None, address, and_mask=nums[0], or_mask=nums[1])
    elif cycle is Cycle.BLT and dir_ == "R":
        if len(nums) != 1:
            raise ValueError("BLT read takes a word count")
        txn = VmeTransaction(cycle, dir_, address, count=nums[0])
    else:
        txn = VmeTransaction(cycle, dir_, address, tuple(nums))
    return ScriptLine(lineno, body, txn, expect)


@dataclass(frozen=True)
class LineResult:
    line: ScriptLine
    outcome: str  # DTACK, BERR, NORESP, ERROR
    data: Tuple[int, ...]
    cycles: int
    ok: bool
    reason: Optional[str] = None


@dataclass
class ConformanceReport:
    results: List[LineResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def failures(self) -> List[LineResult]:
        return [r for r in self.results if not r.ok]

    def summary(self) -> str:
        checked = sum(1 for r in self.results if r.line.expect is not None)
        return (f"transactions: {len(self.results)}\n"
                f"expectations: {checked}\n"
                f"failures: {len(self.failures)}\n"
                f"result: {'PASS' if self.passed else 'FAIL'}\n")


def _matches(expect: Optional[Tuple[str, ...]], outcome: str, data: Tuple[int, ...]) -> bool:
    if expect is None:
        return outcome != "ERROR"
    if expect in (("BERR",), ("NORESP",), ("DTACK",)):
        return outcome == expect[0]
    if outcome not in ("DTACK", "IACK"):
        return False
    try:
        return tuple(int(t, 16) for t in expect) == data
    except ValueError:
        return False


def run_conformance(state: SlaveState, script: Sequence[ScriptLine]) -> ConformanceReport:
    report = ConformanceReport()
    for line in script:
        op = line.op
        reason = None
        if isinstance(op, InterruptOp):
            if op.kind == "IRQ":
                try:
                    raise_interrupt(state, op.level, op.status_id, op.width)
                    outcome, data = "DTACK", ()
                except (InterruptPendingError, ValueError) as exc:
                    outcome, data, reason = "ERROR", (), str(exc)
            else:
                sid = iack_cycle(state, op.level)
                outcome, data = ("NORESP", ()) if sid is None else ("IACK", (sid,))
            cycles = 1
        else:
            res = slave_execute(state, op)
            outcome, data, cycles, reason = res.outcome, res.data, res.cycles_consumed, res.reason
        ok = _matches(line.expect, outcome, data)
        report.results.append(LineResult(line, outcome, data, cycles, ok, reason))
    return report


def write_report_csv(report: ConformanceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "line", "cycle", "dir", "address", "outcome", "data",
                    "expect", "pass", "cycles"])
        for i, r in enumerate(report.results):
            op = r.line.op
            if isinstance(op, InterruptOp):
                cycle, dir_, addr = op.kind, "-", str(op.level)
            else:
                cycle = op.cycle.value
                dir_ = op.direction or "-"
                addr = "-" if op.address is None else f"{op.address:06X}"
            w.writerow([i, r.line.lineno, cycle, dir_, addr, r.outcome,
                        " ".join(f"{v:04X}" for v in r.data),
                        "" if r.line.expect is None else " ".join(r.line.expect),
                        int(r.ok), r.cycles])
