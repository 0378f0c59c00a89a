"""Run trace and the three performance metrics computed from it."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .engine import US_PER_S, fmt_time, to_us
from .errors import ParseError

GENERATED = "Generated"
SENT = "Sent"
HOPTX_CONTROL = "HopTxControl"
HOPTX_DATA = "HopTxData"
DELIVERED = "Delivered"
DROPPED = "Dropped"
TX_FAIL = "TxFail"
LINK_BREAK = "LinkBreak"
PENDING = "Pending"  # data packet still in the network when the run ends

KINDS = frozenset(
    {GENERATED, SENT, HOPTX_CONTROL, HOPTX_DATA, DELIVERED, DROPPED, TX_FAIL, LINK_BREAK, PENDING}
)

# drop reasons
QUEUE_FULL = "QueueFull"
BUFFER_TIMEOUT = "BufferTimeout"
BUFFER_FULL = "BufferFull"
NO_ROUTE = "NoRoute"
LINK_BREAK_EXHAUSTED = "LinkBreakExhausted"
TTL_EXCEEDED = "TtlExceeded"

DROP_REASONS = (QUEUE_FULL, BUFFER_TIMEOUT, BUFFER_FULL, NO_ROUTE, LINK_BREAK_EXHAUSTED, TTL_EXCEEDED)

TRACE_HEADER = "#manetsim-trace v1"

# (at_us, kind, uid, node, extra) -- extra is the drop reason, or the packet
# kind for hop transmissions, or "" when unused
TraceEvent = tuple


class ZeroGenerated(ValueError):
    pass


class Trace:
    """Append-only event log owned by one run."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.log = self.events.append

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def write(self, fh: TextIO) -> None:
        fh.write(TRACE_HEADER + "\n")
        for at, kind, uid, node, extra in self.events:
            if extra:
                fh.write(f"{fmt_time(at)} {kind} {uid} {node} {extra}\n")
            else:
                fh.write(f"{fmt_time(at)} {kind} {uid} {node}\n")


def parse_trace(fh: TextIO, source: str = "") -> list[TraceEvent]:
    first = fh.readline()
    if first.rstrip("\n") != TRACE_HEADER:
        raise ParseError(1, f"expected header {TRACE_HEADER!r}", source)
    events = []
    for no, raw in enumerate(fh, start=2):
        toks = raw.split()
        if not toks:
            continue
        if len(toks) not in (4, 5):
            raise ParseError(no, "expected <t> <kind> <pkt-uid> <node> [reason]", source)
        if toks[1] not in KINDS:
            raise ParseError(no, f"unknown event kind {toks[1]!r}", source)
        try:
            at = to_us(float(toks[0]))
            uid = int(toks[2])
        except ValueError:
            raise ParseError(no, "bad time or uid", source) from None
        events.append((at, toks[1], uid, toks[3], toks[4] if len(toks) == 5 else ""))
    return events


@dataclass
class RunReport:
    generated: int
    delivered: int
    pdf: float | None
    avg_delay: float | None
    routing_tx: int
    nrl: float | None
    drops_by_reason: dict[str, int] = field(default_factory=dict)


def _window(trace: Iterable[TraceEvent], warmup_us: int):
    """Generation times of the counted data packets, and their deliveries."""
    born: dict[int, int] = {}
    delivered: dict[int, int] = {}
    for at, kind, uid, _node, _extra in trace:
        if kind == GENERATED:
            if at >= warmup_us:
                born[uid] = at
        elif kind == DELIVERED:
            if uid not in delivered:
                delivered[uid] = at
    delivered = {u: t for u, t in delivered.items() if u in born}
    return born, delivered


def compute_pdf(trace: Iterable[TraceEvent], warmup_us: int = 0) -> float:
    born, delivered = _window(trace, warmup_us)
    if not born:
        raise ZeroGenerated("no CBR data packet was generated")
    return len(delivered) / len(born)


def compute_avg_delay(trace: Iterable[TraceEvent], warmup_us: int = 0) -> float | None:
    """Mean generation-to-delivery latency in seconds; ``None`` when nothing was delivered."""
    born, delivered = _window(trace, warmup_us)
    if not delivered:
        return None
    total = sum(t - born[u] for u, t in delivered.items())
    return total / len(delivered) / US_PER_S


def compute_nrl(trace: Iterable[TraceEvent], warmup_us: int = 0) -> float | None:
    events = trace if isinstance(trace, list) else list(trace)
    _, delivered = _window(events, warmup_us)
    if not delivered:
        return None
    control = sum(1 for e in events if e[1] == HOPTX_CONTROL and e[0] >= warmup_us)
    return control / len(delivered)


def build_report(trace: Iterable[TraceEvent], warmup_us: int = 0) -> RunReport:
    events = trace if isinstance(trace, list) else list(trace)
    born, delivered = _window(events, warmup_us)
    routing_tx = 0
    drops: Counter = Counter()
    for at, kind, uid, _node, extra in events:
        if kind == HOPTX_CONTROL:
            if at >= warmup_us:
                routing_tx += 1
        elif kind == DROPPED and uid in born:
            drops[extra] += 1
    n_gen = len(born)
    n_del = len(delivered)
    delay = None
    if n_del:
        delay = sum(t - born[u] for u, t in delivered.items()) / n_del / US_PER_S
    return RunReport(
        generated=n_gen,
        delivered=n_del,
        pdf=n_del / n_gen if n_gen else None,
        avg_delay=delay,
        routing_tx=routing_tx,
        nrl=routing_tx / n_del if n_del else None,
        drops_by_reason={r: drops[r] for r in sorted(drops)},
    )


@dataclass
class Conservation:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def conservation_check(trace: Iterable[TraceEvent]) -> Conservation:
    """Every generated data packet must end exactly once: delivered, dropped, or pending at run end."""
    gen: Counter = Counter()
    born: dict[int, int] = {}
    ends: dict[int, list[str]] = {}
    problems: list[str] = []
    for at, kind, uid, _node, _extra in trace:
        if kind == GENERATED:
            gen[uid] += 1
            born.setdefault(uid, at)
        elif kind in (DELIVERED, DROPPED, PENDING):
            if kind == DROPPED and uid not in gen:
                continue  # control packet drop
            if uid not in gen:
                problems.append(f"uid {uid}: {kind} without a preceding {GENERATED}")
                continue
            if kind == DELIVERED and at < born[uid]:
                problems.append(f"uid {uid}: delivered before generation")
            ends.setdefault(uid, []).append(kind)
    for uid, n in gen.items():
        if n != 1:
            problems.append(f"uid {uid}: generated {n} times")
        outcome = ends.get(uid, [])
        if len(outcome) != 1:
            desc = ", ".join(outcome) if outcome else "no outcome"
            problems.append(f"uid {uid}: expected exactly one outcome, got {desc}")
    return Conservation(problems)
