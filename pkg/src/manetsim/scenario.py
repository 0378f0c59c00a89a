"""Random waypoint movement scripts, CBR traffic scripts, and their text formats.

All times in scripts are integer microseconds; coordinates, speeds and
rates are rounded to 6 decimals at generation time so the text formats
round-trip exactly.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

from .engine import US_PER_S, fmt_time, to_us
from .errors import InvalidParams, ParseError, UnknownNode

MOVEMENT_HEADER = "#manetsim-movement v1"
TRAFFIC_HEADER = "#manetsim-traffic v1"

_NODE_RE = re.compile(r"^(w|f)(\d+)$|^bs0$|^router$")

Position = tuple[float, float]


def node_sort_key(node: str) -> tuple:
    """w0 < w1 < ... < w10 < bs0 < router < f0 < ...; natural order on the index."""
    if node == "bs0":
        return (1, 0)
    if node == "router":
        return (2, 0)
    m = _NODE_RE.match(node)
    if m is None or m.group(1) is None:
        return (9, node)
    return (0 if m.group(1) == "w" else 3, int(m.group(2)))


def wireless_ids(n: int) -> list[str]:
    return [f"w{k}" for k in range(n)]


def wired_ids(n: int) -> list[str]:
    return [f"f{k}" for k in range(n)]


def _fmt(value: float) -> str:
    return f"{value:.6f}"


@dataclass(frozen=True)
class MobilityParams:
    node_count: int = 50
    width: float = 800.0
    height: float = 500.0
    pause_time: float = 0.0
    max_speed: float = 20.0
    min_speed: float = 0.1
    duration: float = 800.0

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidParams(f"area must be positive, got {self.width} x {self.height}")
        if self.max_speed <= 0:
            raise InvalidParams(f"max_speed must be positive, got {self.max_speed}")
        if not 0 <= self.min_speed < self.max_speed:
            raise InvalidParams(f"min_speed must lie in [0, max_speed), got {self.min_speed}")
        if self.pause_time < 0 or self.duration < 0:
            raise InvalidParams("pause_time and duration must be nonnegative")
        if self.node_count < 0:
            raise InvalidParams("node_count must be nonnegative")


@dataclass(frozen=True)
class Leg:
    depart_us: int
    dest: Position
    speed: float


def leg_duration_us(start: Position, leg: Leg) -> int:
    """Travel time rounded up to a whole microsecond, so the node sits exactly on the waypoint afterwards."""
    dist = math.hypot(leg.dest[0] - start[0], leg.dest[1] - start[1])
    return math.ceil(dist / leg.speed * US_PER_S)


@dataclass(frozen=True)
class MovementScript:
    initial: dict[str, Position] = field(default_factory=dict)
    legs: dict[str, list[Leg]] = field(default_factory=dict)

    def nodes(self) -> list[str]:
        return sorted(self.initial, key=node_sort_key)

    @cached_property
    def _timeline(self) -> dict[str, tuple[list[int], list[int], list[Position]]]:
        # per node: departures, arrivals, start point of each leg
        out = {}
        for node, start in self.initial.items():
            departs, arrives, starts = [], [], []
            pos = start
            for leg in self.legs.get(node, ()):
                departs.append(leg.depart_us)
                arrives.append(leg.depart_us + leg_duration_us(pos, leg))
                starts.append(pos)
                pos = leg.dest
            out[node] = (departs, arrives, starts)
        return out

    def arrivals(self, node: str) -> list[int]:
        return self._timeline[node][1]


def position_at(script: MovementScript, node: str, t: int) -> Position:
    """Position of ``node`` at time ``t`` (microseconds): linear along the active leg, held during pauses."""
    if node not in script.initial:
        raise UnknownNode(node)
    departs, arrives, starts = script._timeline[node]
    k = bisect_right(departs, t) - 1
    if k < 0:
        return script.initial[node]
    leg = script.legs[node][k]
    if t >= arrives[k]:
        return leg.dest
    sx, sy = starts[k]
    frac = (t - departs[k]) / (arrives[k] - departs[k])
    return (sx + (leg.dest[0] - sx) * frac, sy + (leg.dest[1] - sy) * frac)


def generate_movement(params: MobilityParams, stream, nodes: Iterable[str] | None = None) -> MovementScript:
    params.validate()
    if nodes is None:
        nodes = wireless_ids(params.node_count)
    pause_us = to_us(params.pause_time)
    duration_us = to_us(params.duration)
    span = params.max_speed - params.min_speed

    def coord(limit: float) -> float:
        return min(round(stream.uniform(0.0, limit), 6), limit)

    initial: dict[str, Position] = {}
    legs: dict[str, list[Leg]] = {}
    for node in nodes:
        pos = (coord(params.width), coord(params.height))
        initial[node] = pos
        node_legs: list[Leg] = []
        t = pause_us
        while t < duration_us:
            dest = (coord(params.width), coord(params.height))
            # 1 - random() lies in (0, 1], giving speeds on (min, max]
            speed = round(params.min_speed + span * (1.0 - stream.random()), 6)
            if speed <= 0:
                speed = 1e-6
            leg = Leg(t, dest, speed)
            node_legs.append(leg)
            t = t + leg_duration_us(pos, leg) + pause_us
            pos = dest
        legs[node] = node_legs
    return MovementScript(initial, legs)


@dataclass(frozen=True)
class TrafficParams:
    source_count: int = 15
    packet_size: int = 512
    rate: float = 4.0
    cross_domain_fraction: float = 0.5
    start_window: float = 30.0

    def validate(self) -> None:
        if self.packet_size <= 0:
            raise InvalidParams("packet_size must be positive")
        if self.rate <= 0:
            raise InvalidParams("rate must be positive")
        if not 0.0 <= self.cross_domain_fraction <= 1.0:
            raise InvalidParams("cross_domain_fraction must lie in [0, 1]")
        if self.source_count < 0 or self.start_window < 0:
            raise InvalidParams("source_count and start_window must be nonnegative")


@dataclass(frozen=True)
class Connection:
    source: str
    dest: str
    start_us: int
    stop_us: int
    rate: float
    size: int

    @property
    def interval_us(self) -> int:
        return to_us(1.0 / self.rate)

    def send_times(self) -> range:
        return range(self.start_us, self.stop_us, self.interval_us)


@dataclass(frozen=True)
class TrafficScript:
    connections: list[Connection] = field(default_factory=list)


def generate_traffic(
    params: TrafficParams,
    wireless_nodes: list[str],
    wired_nodes: list[str],
    stream,
    duration: float = 800.0,
) -> TrafficScript:
    params.validate()
    if params.source_count > len(wireless_nodes):
        raise InvalidParams(
            f"source_count {params.source_count} exceeds {len(wireless_nodes)} wireless nodes"
        )
    n_cross = round(params.cross_domain_fraction * params.source_count)
    if n_cross and not wired_nodes:
        raise InvalidParams("cross-domain traffic requested but there are no wired nodes")
    if n_cross < params.source_count and len(wireless_nodes) < 2:
        raise InvalidParams("peer-to-peer traffic needs at least two wireless nodes")

    sources = stream.sample(list(wireless_nodes), params.source_count)
    crossing = set(stream.sample(range(params.source_count), n_cross))
    stop_us = to_us(duration)
    conns = []
    for i, src in enumerate(sources):
        if i in crossing:
            dst = stream.choice(wired_nodes)
        else:
            dst = stream.choice([w for w in wireless_nodes if w != src])
        start_us = to_us(round(stream.uniform(0.0, params.start_window), 6))
        conns.append(
            Connection(src, dst, min(start_us, stop_us), stop_us, float(params.rate), params.packet_size)
        )
    return TrafficScript(conns)


# -- text formats -----------------------------------------------------------


def write_movement(script: MovementScript, fh: TextIO) -> None:
    fh.write(MOVEMENT_HEADER + "\n")
    order = script.nodes()
    for node in order:
        x, y = script.initial[node]
        fh.write(f"init {node} {_fmt(x)} {_fmt(y)}\n")
    rank = {n: i for i, n in enumerate(order)}
    rows = []
    for node in order:
        for k, leg in enumerate(script.legs.get(node, ())):
            rows.append((leg.depart_us, rank[node], k, node, leg))
    rows.sort(key=lambda r: r[:3])
    for depart, _, _, node, leg in rows:
        fh.write(
            f"leg {node} {fmt_time(depart)} {_fmt(leg.dest[0])} {_fmt(leg.dest[1])} {_fmt(leg.speed)}\n"
        )


def movement_text(script: MovementScript) -> str:
    import io

    buf = io.StringIO()
    write_movement(script, buf)
    return buf.getvalue()


def _number(tok: str, line: int, what: str, source: str) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(line, f"{what} is not a number: {tok!r}", source) from None
    if not math.isfinite(value):
        raise ParseError(line, f"{what} is not finite: {tok!r}", source)
    return value


def _time_us(tok: str, line: int, what: str, source: str) -> int:
    value = _number(tok, line, what, source)
    if value < 0:
        raise ParseError(line, f"{what} must be nonnegative, got {tok}", source)
    return to_us(value)


def _node(tok: str, line: int, source: str) -> str:
    if not _NODE_RE.match(tok):
        raise ParseError(line, f"bad node id {tok!r}", source)
    return tok


def _lines(fh: TextIO, header: str, source: str):
    first = fh.readline()
    if first.rstrip("\n") != header:
        raise ParseError(1, f"expected header {header!r}", source)
    for no, raw in enumerate(fh, start=2):
        text = raw.rstrip("\n")
        if text.strip():
            yield no, text.split(" ")


def parse_movement(fh: TextIO, source: str = "") -> MovementScript:
    initial: dict[str, Position] = {}
    legs: dict[str, list[Leg]] = {}
    for no, toks in _lines(fh, MOVEMENT_HEADER, source):
        if toks[0] == "init":
            if len(toks) != 4:
                raise ParseError(no, "init takes <node-id> <x> <y>", source)
            node = _node(toks[1], no, source)
            if node in initial:
                raise ParseError(no, f"duplicate init for {node}", source)
            x = _number(toks[2], no, "x", source)
            y = _number(toks[3], no, "y", source)
            if x < 0 or y < 0:
                raise ParseError(no, "coordinates must be nonnegative", source)
            initial[node] = (x, y)
            legs[node] = []
        elif toks[0] == "leg":
            if len(toks) != 6:
                raise ParseError(no, "leg takes <node-id> <depart-s> <dest-x> <dest-y> <speed-mps>", source)
            node = _node(toks[1], no, source)
            if node not in initial:
                raise ParseError(no, f"leg for {node} before its init line", source)
            depart = _time_us(toks[2], no, "depart time", source)
            x = _number(toks[3], no, "dest-x", source)
            y = _number(toks[4], no, "dest-y", source)
            speed = _number(toks[5], no, "speed", source)
            if x < 0 or y < 0:
                raise ParseError(no, "coordinates must be nonnegative", source)
            if speed <= 0:
                raise ParseError(no, f"speed must be positive, got {toks[5]}", source)
            prev = legs[node]
            if prev:
                start = prev[-2].dest if len(prev) > 1 else initial[node]
                if depart < prev[-1].depart_us + leg_duration_us(start, prev[-1]):
                    raise ParseError(no, f"leg for {node} departs before the previous leg arrives", source)
            legs[node].append(Leg(depart, (x, y), speed))
        else:
            raise ParseError(no, f"unknown record {toks[0]!r}", source)
    return MovementScript(initial, legs)


def write_traffic(script: TrafficScript, fh: TextIO) -> None:
    fh.write(TRAFFIC_HEADER + "\n")
    for c in script.connections:
        fh.write(
            f"cbr {c.source} {c.dest} {fmt_time(c.start_us)} {fmt_time(c.stop_us)} {_fmt(c.rate)} {c.size}\n"
        )


def traffic_text(script: TrafficScript) -> str:
    import io

    buf = io.StringIO()
    write_traffic(script, buf)
    return buf.getvalue()


def parse_traffic(fh: TextIO, source: str = "") -> TrafficScript:
    conns = []
    for no, toks in _lines(fh, TRAFFIC_HEADER, source):
        if toks[0] != "cbr":
            raise ParseError(no, f"unknown record {toks[0]!r}", source)
        if len(toks) != 7:
            raise ParseError(no, "cbr takes <src> <dst> <start> <stop> <rate> <size>", source)
        src = _node(toks[1], no, source)
        dst = _node(toks[2], no, source)
        if src == dst:
            raise ParseError(no, "source and destination must differ", source)
        start = _time_us(toks[3], no, "start", source)
        stop = _time_us(toks[4], no, "stop", source)
        if stop < start:
            raise ParseError(no, "stop precedes start", source)
        rate = _number(toks[5], no, "rate", source)
        if rate <= 0:
            raise ParseError(no, f"rate must be positive, got {toks[5]}", source)
        try:
            size = int(toks[6])
        except ValueError:
            raise ParseError(no, f"size is not an integer: {toks[6]!r}", source) from None
        if size <= 0:
            raise ParseError(no, "size must be positive", source)
        conns.append(Connection(src, dst, start, stop, rate, size))
    return TrafficScript(conns)
