"""DSR: dynamic source routing agent with a path cache and a send buffer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import metrics as M
from .engine import to_us
from .errors import InvalidParams
from .netstack import DATA, ROUTE_ERROR, ROUTE_REPLY, ROUTE_REQUEST, NetStack, Packet, RoutingAgent

REPLY = "Reply"
SNOOPED = "Snooped"
ROUTE_RECORD = "RouteRecord"

SENT_WITH_ROUTE = "SentWithRoute"
BUFFERED = "BufferedAndDiscovering"
DROPPED_BUFFER_FULL = "DroppedBufferFull"

IGNORE = "Ignore"
FORWARD = "Forward"
REPLIED = "Reply"


class MalformedRoute(ValueError):
    pass


@dataclass(frozen=True)
class DsrConfig:
    cache_capacity: int = 64
    send_buffer_capacity: int = 64
    send_buffer_timeout: float = 30.0
    sweep_period: float = 1.0
    max_hops: int = 16
    retry_base: float = 0.5
    retry_cap: float = 10.0

    def validate(self) -> None:
        if min(self.cache_capacity, self.send_buffer_capacity, self.max_hops) < 1:
            raise InvalidParams("cache_capacity, send_buffer_capacity and max_hops must be at least 1")
        if min(self.send_buffer_timeout, self.sweep_period, self.retry_base, self.retry_cap) <= 0:
            raise InvalidParams("timers must be positive")


def retry_backoff(attempt: int, base: float = 0.5, cap: float = 10.0) -> float:
    """Seconds to wait after discovery attempt ``attempt`` before flooding again."""
    return min(base * 2.0**attempt, cap)


@dataclass
class RouteCacheEntry:
    route: tuple[str, ...]
    learned_at: int
    source: str


@dataclass(frozen=True)
class RreqMsg:
    origin: str
    target: str
    request_id: int
    route_record: tuple[str, ...]


@dataclass(frozen=True)
class RerrMsg:
    reporter: str
    broken_from: str
    broken_to: str
    original_sender: str


def has_link(route, u: str, v: str) -> bool:
    for a, b in zip(route, route[1:]):
        if a == u and b == v:
            return True
    return False


class RouteCache:
    """Path cache: whole routes from the owner, any prefix of which is usable.

    No time-based expiry. When full, the oldest learned route is evicted.
    """

    def __init__(self, owner: str, capacity: int = 64) -> None:
        self.owner = owner
        self.capacity = capacity
        self._entries: dict[tuple[str, ...], RouteCacheEntry] = {}
        self._best: dict[str, tuple[str, ...] | None] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def routes(self) -> list[tuple[str, ...]]:
        return list(self._entries)

    def insert(self, route, now: int, source: str) -> bool:
        route = tuple(route)
        if route in self._entries:
            return False
        if len(route) < 2 or route[0] != self.owner or len(set(route)) != len(route):
            return False
        if len(self._entries) >= self.capacity:
            oldest = min(self._entries.values(), key=lambda e: e.learned_at)
            del self._entries[oldest.route]
        self._entries[route] = RouteCacheEntry(route, now, source)
        self._best.clear()
        return True

    def find(self, dest: str) -> tuple[str, ...] | None:
        """Shortest cached route (or route prefix) to ``dest``; newest wins ties."""
        try:
            return self._best[dest]
        except KeyError:
            pass
        best = None
        for route in self._entries:
            if dest in route:
                k = route.index(dest)
                if best is None or k + 1 <= len(best):
                    best = route[: k + 1]
        self._best[dest] = best
        return best

    def purge_link(self, u: str, v: str) -> int:
        doomed = [r for r in self._entries if has_link(r, u, v)]
        for r in doomed:
            del self._entries[r]
        if doomed:
            self._best.clear()
        return len(doomed)


class SendBuffer:
    def __init__(self, capacity: int = 64) -> None:
        self.capacity = capacity
        self._q: deque[tuple[Packet, int]] = deque()

    def __len__(self) -> int:
        return len(self._q)

    def __iter__(self):
        return iter(self._q)

    def add(self, pkt: Packet, now: int) -> bool:
        if len(self._q) >= self.capacity:
            return False
        self._q.append((pkt, now))
        return True

    def expire(self, now: int, timeout_us: int) -> list[Packet]:
        """Remove and return packets that have waited longer than ``timeout_us``."""
        gone = [p for p, t in self._q if now - t > timeout_us]
        if gone:
            self._q = deque((p, t) for p, t in self._q if now - t <= timeout_us)
        return gone

    def take(self, pred) -> list[Packet]:
        out = []
        keep = deque()
        for p, t in self._q:
            if pred(p):
                out.append(p)
            else:
                keep.append((p, t))
        self._q = keep
        return out

    def waiting_for(self, pred) -> bool:
        return any(pred(p) for p, _ in self._q)


class _Discovery:
    __slots__ = ("attempt", "handle")

    def __init__(self) -> None:
        self.attempt = 0
        self.handle = None


class DsrAgent(RoutingAgent):
    def __init__(self, node: str, stack: NetStack, config: DsrConfig | None = None):
        super().__init__(node, stack)
        self.config = config or DsrConfig()
        self.cache = RouteCache(node, self.config.cache_capacity)
        self.buffer = SendBuffer(self.config.send_buffer_capacity)
        self.seen: set[tuple[str, int]] = set()
        self.discoveries: dict[str, _Discovery] = {}
        self.floods = 0
        self.salvages = 0
        self._next_rid = 0
        self._sweep = None
        self._timeout_us = to_us(self.config.send_buffer_timeout)
        self._sweep_us = to_us(self.config.sweep_period)

    # -- origination ---------------------------------------------------------

    def originate(self, pkt: Packet) -> None:
        self.send(pkt)

    def inject(self, pkt: Packet) -> None:
        """Packet from the wired side: the gateway acts as its wireless source."""
        self.send(pkt)

    def send(self, pkt: Packet) -> str:
        target = self.stack.wireless_target(pkt.final_dest)
        if target == self.node:
            self.stack.arrive(self.node, pkt)
            return SENT_WITH_ROUTE
        route = self.cache.find(target)
        if route is not None:
            self._launch(pkt, route)
            return SENT_WITH_ROUTE
        if not self.buffer.add(pkt, self.engine.now):
            self.stack.drop(self.node, pkt, M.BUFFER_FULL)
            return DROPPED_BUFFER_FULL
        self._arm_sweep()
        self.start_discovery(target)
        return BUFFERED

    def _launch(self, pkt: Packet, route) -> None:
        st = self.stack
        pkt.source_route = list(route)
        pkt.cursor = 0
        pkt.header_size = st.header_bytes(len(route))
        if pkt.kind == DATA and pkt.hops == 0:
            st.trace.log((self.engine.now, M.SENT, pkt.uid, self.node, ""))
        st.send(self.node, pkt, route[1])

    # -- send buffer ---------------------------------------------------------

    def _arm_sweep(self) -> None:
        if self._sweep is None:
            self._sweep = self.engine.schedule(self.engine.now + self._sweep_us, self._on_sweep)

    def _on_sweep(self) -> None:
        self._sweep = None
        for pkt in self.buffer.expire(self.engine.now, self._timeout_us):
            self.stack.drop(self.node, pkt, M.BUFFER_TIMEOUT)
        if len(self.buffer):
            self._arm_sweep()

    def _drain(self) -> int:
        for pkt in self.buffer.expire(self.engine.now, self._timeout_us):
            self.stack.drop(self.node, pkt, M.BUFFER_TIMEOUT)
        target_of = self.stack.wireless_target
        ready = self.buffer.take(lambda p: self.cache.find(target_of(p.final_dest)) is not None)
        for pkt in ready:
            self._launch(pkt, self.cache.find(target_of(pkt.final_dest)))
        return len(ready)

    # -- route discovery -----------------------------------------------------

    def start_discovery(self, target: str) -> None:
        if target in self.discoveries:
            return
        d = self.discoveries[target] = _Discovery()
        self._flood(target, d)

    def _flood(self, target: str, d: _Discovery) -> None:
        rid = self._next_rid
        self._next_rid += 1
        self.seen.add((self.node, rid))
        msg = RreqMsg(self.node, target, rid, (self.node,))
        st = self.stack
        pkt = Packet(st.new_uid(), ROUTE_REQUEST, self.node, target, 0, st.header_bytes(1), self.engine.now, body=msg)
        self.floods += 1
        st.send(self.node, pkt, None)
        wait = retry_backoff(d.attempt, self.config.retry_base, self.config.retry_cap)
        d.handle = self.engine.schedule(self.engine.now + to_us(wait), self.retry_discovery, target)

    def retry_discovery(self, target: str) -> bool:
        """Re-flood for ``target`` if packets still wait on it; returns whether a new RREQ went out."""
        d = self.discoveries.get(target)
        if d is None:
            return False
        target_of = self.stack.wireless_target
        if self.cache.find(target) is not None or not self.buffer.waiting_for(
            lambda p: target_of(p.final_dest) == target
        ):
            self._end_discovery(target)
            return False
        d.attempt += 1
        self._flood(target, d)
        return True

    def _end_discovery(self, target: str) -> None:
        d = self.discoveries.pop(target, None)
        if d is not None and d.handle is not None:
            self.engine.cancel(d.handle)

    def handle_rreq(self, pkt: Packet) -> str:
        m: RreqMsg = pkt.body
        key = (m.origin, m.request_id)
        if key in self.seen or self.node in m.route_record:
            return IGNORE
        self.seen.add(key)
        now = self.engine.now
        record = m.route_record + (self.node,)
        self.cache.insert(record[::-1], now, ROUTE_RECORD)
        if self.node == m.target:
            self._reply(record, record)
            return REPLIED
        cached = self.cache.find(m.target)
        if cached is not None:
            full = m.route_record + cached
            if len(set(full)) == len(full):
                self._reply(full, record)
                return REPLIED
        st = self.stack
        if len(record) - 1 >= self.config.max_hops:
            st.drop(self.node, pkt, M.TTL_EXCEEDED)
            return IGNORE
        fwd = Packet(
            st.new_uid(),
            ROUTE_REQUEST,
            m.origin,
            m.target,
            0,
            st.header_bytes(len(record)),
            pkt.created_at,
            body=RreqMsg(m.origin, m.target, m.request_id, record),
        )
        st.send(self.node, fwd, None)
        return FORWARD

    def _reply(self, route: tuple[str, ...], record: tuple[str, ...]) -> None:
        st = self.stack
        back = list(record[::-1])
        pkt = Packet(
            st.new_uid(),
            ROUTE_REPLY,
            self.node,
            back[-1],
            st.link.route_hop_bytes * len(route),
            st.header_bytes(len(back)),
            self.engine.now,
            source_route=back,
            body=route,
        )
        st.send(self.node, pkt, back[1])

    def handle_rrep(self, route: tuple[str, ...]) -> int:
        """Cache the discovered route and release whatever it unblocks; returns packets sent."""
        self.cache.insert(route, self.engine.now, REPLY)
        for target in list(self.discoveries):
            if self.cache.find(target) is not None:
                self._end_discovery(target)
        return self._drain()

    # -- forwarding ----------------------------------------------------------

    def _position(self, pkt: Packet) -> int:
        route = pkt.source_route
        i = pkt.cursor + 1
        if route is None:
            raise MalformedRoute(f"{pkt!r} carries no source route")
        if i >= len(route) or route[i] != self.node:
            try:
                i = route.index(self.node)
            except ValueError:
                raise MalformedRoute(f"{self.node} is not on route {route}") from None
        pkt.cursor = i
        return i

    def forward_data(self, pkt: Packet) -> None:
        i = self._position(pkt)
        route = pkt.source_route
        if i == len(route) - 1:
            self.stack.arrive(self.node, pkt)
            return
        now = self.engine.now
        self.cache.insert(route[i:], now, SNOOPED)
        if i > 0:
            self.cache.insert(route[i::-1], now, SNOOPED)
        self.stack.send(self.node, pkt, route[i + 1])

    def receive(self, pkt: Packet, prev_hop: str) -> None:
        kind = pkt.kind
        if kind == DATA:
            self.forward_data(pkt)
        elif kind == ROUTE_REQUEST:
            self.handle_rreq(pkt)
        elif kind == ROUTE_REPLY:
            i = self._position(pkt)
            if i == len(pkt.source_route) - 1:
                self.handle_rrep(pkt.body)
            else:
                self.stack.send(self.node, pkt, pkt.source_route[i + 1])
        elif kind == ROUTE_ERROR:
            i = self._position(pkt)
            m: RerrMsg = pkt.body
            self.cache.purge_link(m.broken_from, m.broken_to)
            if i < len(pkt.source_route) - 1:
                self.stack.send(self.node, pkt, pkt.source_route[i + 1])

    # -- route maintenance ---------------------------------------------------

    def on_link_break(self, lost: str, pkts: list[Packet]) -> None:
        self.cache.purge_link(self.node, lost)
        notified: set[str] = set()
        for pkt in pkts:
            if pkt.kind == DATA:
                self._maintain(pkt, lost, notified)
            else:
                self.stack.drop(self.node, pkt, M.LINK_BREAK_EXHAUSTED)

    def _maintain(self, pkt: Packet, lost: str, notified: set[str]) -> None:
        st = self.stack
        route = pkt.source_route
        i = pkt.cursor
        src = route[0]
        if src != self.node and src not in notified:
            notified.add(src)
            self._send_rerr(route[i::-1], lost)
        target = st.wireless_target(pkt.final_dest)
        alt = self.cache.find(target)
        if src == self.node:
            if alt is not None:
                self._launch(pkt, alt)
            elif self.buffer.add(pkt, self.engine.now):
                self._arm_sweep()
                self.start_discovery(target)
            else:
                st.drop(self.node, pkt, M.BUFFER_FULL)
            return
        if alt is not None and not pkt.salvaged:
            salvaged = route[:i] + list(alt)
            if len(set(salvaged)) == len(salvaged):
                pkt.salvaged = True
                self.salvages += 1
                pkt.source_route = salvaged
                pkt.header_size = st.header_bytes(len(salvaged))
                st.send(self.node, pkt, alt[1])
                return
        st.drop(self.node, pkt, M.LINK_BREAK_EXHAUSTED)

    def _send_rerr(self, back: list[str], lost: str) -> None:
        st = self.stack
        msg = RerrMsg(self.node, self.node, lost, back[-1])
        pkt = Packet(
            st.new_uid(),
            ROUTE_ERROR,
            self.node,
            back[-1],
            2 * st.link.route_hop_bytes,
            st.header_bytes(len(back)),
            self.engine.now,
            source_route=list(back),
            body=msg,
        )
        st.send(self.node, pkt, back[1])
