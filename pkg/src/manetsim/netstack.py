"""Wireless plane below routing: packets, the priority interface queue, and an abstract MAC.

Connectivity is a unit disk of radius ``tx_range``. Unicast frames are
retried up to ``max_unicast_retries`` times and then reported to the
routing agent as a link break; broadcasts are fire-and-forget. With
``carrier_sense`` on, a node defers while any node within range is
transmitting, then draws a fresh backoff; there is no collision loss
unless ``busy_receiver`` is also set.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable

from . import metrics as M
from .engine import Engine, to_us
from .errors import UnknownNode

DATA = "Data"
ROUTE_REQUEST = "RouteRequest"
ROUTE_REPLY = "RouteReply"
ROUTE_ERROR = "RouteError"
DSDV_UPDATE = "DsdvUpdate"

CONTROL_KINDS = frozenset({ROUTE_REQUEST, ROUTE_REPLY, ROUTE_ERROR, DSDV_UPDATE})


@dataclass(frozen=True)
class LinkModel:
    tx_range: float = 250.0
    bandwidth: float = 2e6
    broadcast_jitter_max: float = 0.010
    unicast_jitter_max: float = 0.001
    max_unicast_retries: int = 7
    header_size: int = 20
    route_hop_bytes: int = 4
    busy_receiver: bool = False
    # defer while another transmitter within range is on air
    carrier_sense: bool = False

    def validate(self) -> None:
        from .errors import InvalidParams

        for name in ("tx_range", "bandwidth", "broadcast_jitter_max"):
            if getattr(self, name) <= 0:
                raise InvalidParams(f"{name} must be positive")
        if self.unicast_jitter_max < 0:
            raise InvalidParams("unicast_jitter_max must be nonnegative")
        if self.max_unicast_retries < 0:
            raise InvalidParams("max_unicast_retries must be nonnegative")

    def airtime_us(self, nbytes: int) -> int:
        return to_us(8 * nbytes / self.bandwidth)


class Packet:
    __slots__ = (
        "uid",
        "kind",
        "origin",
        "final_dest",
        "payload_size",
        "header_size",
        "source_route",
        "created_at",
        "hops",
        "next_hop",
        "cursor",
        "salvaged",
        "body",
        "trail",
    )

    def __init__(
        self,
        uid: int,
        kind: str,
        origin: str,
        final_dest: str | None,
        payload_size: int,
        header_size: int,
        created_at: int,
        source_route: list[str] | None = None,
        body=None,
    ) -> None:
        self.uid = uid
        self.kind = kind
        self.origin = origin
        self.final_dest = final_dest
        self.payload_size = payload_size
        self.header_size = header_size
        self.source_route = source_route
        self.created_at = created_at
        self.hops = 0
        self.next_hop: str | None = None
        self.cursor = 0
        self.salvaged = False
        self.body = body
        self.trail: list[str] = [origin]

    @property
    def size(self) -> int:
        return self.payload_size + self.header_size

    @property
    def is_control(self) -> bool:
        return self.kind != DATA

    def __repr__(self) -> str:
        return f"Packet(uid={self.uid}, {self.kind}, {self.origin}->{self.final_dest})"


class InterfaceQueue:
    """Bounded transmit queue; routing control always ahead of data, FIFO within each class."""

    def __init__(self, capacity: int = 50) -> None:
        self.capacity = capacity
        self._control: deque[Packet] = deque()
        self._data: deque[Packet] = deque()

    def __len__(self) -> int:
        return len(self._control) + len(self._data)

    def __iter__(self):
        return itertools.chain(self._control, self._data)

    def enqueue(self, pkt: Packet) -> Packet | None:
        """Queue ``pkt``; return the packet dropped to make it fit, if any.

        On a full queue an arriving data packet is itself dropped, while an
        arriving control packet evicts the newest queued data packet (and is
        dropped only when the queue holds nothing but control).
        """
        control = pkt.kind != DATA
        if len(self._control) + len(self._data) < self.capacity:
            (self._control if control else self._data).append(pkt)
            return None
        if control and self._data:
            victim = self._data.pop()
            self._control.append(pkt)
            return victim
        return pkt

    def dequeue(self) -> Packet | None:
        if self._control:
            return self._control.popleft()
        if self._data:
            return self._data.popleft()
        return None

    def remove_if(self, pred: Callable[[Packet], bool]) -> list[Packet]:
        out = []
        for q in (self._control, self._data):
            keep = deque()
            for p in q:
                (out if pred(p) else keep).append(p)
            q.clear()
            q.extend(keep)
        return out


class RoutingAgent:
    """Interface the stack expects from a per-node routing agent."""

    def __init__(self, node: str, stack: "NetStack") -> None:
        self.node = node
        self.stack = stack
        self.engine = stack.engine

    def start(self) -> None:
        pass

    def originate(self, pkt: Packet) -> None:
        raise NotImplementedError

    def receive(self, pkt: Packet, prev_hop: str) -> None:
        raise NotImplementedError

    def on_link_break(self, lost: str, pkts: list[Packet]) -> None:
        raise NotImplementedError


class NetStack:
    """All wireless nodes' queues and MACs, sharing one engine and mobility kernel."""

    def __init__(
        self,
        engine: Engine,
        core,
        order: list[str],
        link: LinkModel,
        trace: M.Trace,
        is_wired: Callable[[str], bool] = lambda n: False,
        gateway: str | None = None,
        queue_capacity: int = 50,
    ) -> None:
        self.engine = engine
        self.core = core
        self.ids = list(order)
        self.index = {n: i for i, n in enumerate(self.ids)}
        self.link = link
        self.trace = trace
        self._log = trace.log
        self.is_wired = is_wired
        self.gateway = gateway
        self.to_wired: Callable[[str, Packet], None] | None = None
        self.queues = [InterfaceQueue(queue_capacity) for _ in self.ids]
        self.busy = [False] * len(self.ids)
        self.agents: list[RoutingAgent | None] = [None] * len(self.ids)
        self._jitter = engine.rng_stream("mac-jitter")
        self._uids = itertools.count(1)
        self._rx: list[list[tuple[int, int, int]]] = [[] for _ in self.ids]
        self._frame_ids = itertools.count()
        self.live: dict[int, Packet] = {}  # data packets not yet delivered or dropped
        self.attempts = 0
        self._bcast_max_us = to_us(link.broadcast_jitter_max)
        self._ucast_max_us = to_us(link.unicast_jitter_max)

    # -- bookkeeping -------------------------------------------------------

    def new_uid(self) -> int:
        return next(self._uids)

    def attach(self, node: str, agent: RoutingAgent) -> None:
        self.agents[self.index[node]] = agent

    def agent(self, node: str) -> RoutingAgent:
        return self.agents[self.index[node]]

    def wireless_target(self, dest: str) -> str:
        """Wired destinations are reached through the gateway."""
        if self.gateway is not None and self.is_wired(dest):
            return self.gateway
        return dest

    def header_bytes(self, hops_listed: int = 0) -> int:
        return self.link.header_size + self.link.route_hop_bytes * hops_listed

    def neighbors(self, node: str) -> set[str]:
        i = self.index.get(node)
        if i is None:
            raise UnknownNode(node)
        ids = self.ids
        return {ids[j] for j in self.core.neighbors(i, self.engine.now, self.link.tx_range)}

    def drop(self, node: str, pkt: Packet, reason: str) -> None:
        self._log((self.engine.now, M.DROPPED, pkt.uid, node, reason))
        if pkt.kind == DATA:
            self.live.pop(pkt.uid, None)

    def arrive(self, node: str, pkt: Packet) -> None:
        """``pkt`` reached the last wireless hop it was routed to."""
        if pkt.final_dest == node:
            self._log((self.engine.now, M.DELIVERED, pkt.uid, node, ""))
            self.live.pop(pkt.uid, None)
        elif node == self.gateway and self.is_wired(pkt.final_dest) and self.to_wired is not None:
            self.to_wired(node, pkt)
        else:
            self.drop(node, pkt, M.NO_ROUTE)

    def finish(self) -> None:
        now = self.engine.now
        for uid in sorted(self.live):
            pkt = self.live[uid]
            self._log((now, M.PENDING, uid, pkt.trail[-1], ""))

    # -- transmit path -----------------------------------------------------

    def send(self, node: str, pkt: Packet, next_hop: str | None) -> bool:
        """Hand ``pkt`` to ``node``'s interface queue; ``next_hop=None`` broadcasts."""
        i = self.index[node]
        pkt.next_hop = next_hop
        victim = self.queues[i].enqueue(pkt)
        if victim is not None:
            self.drop(node, victim, M.QUEUE_FULL)
        if not self.busy[i]:
            self._kick(i)
        return victim is not pkt

    def _kick(self, i: int) -> None:
        pkt = self.queues[i].dequeue()
        if pkt is None:
            return
        self.busy[i] = True
        eng = self.engine
        now = eng.now
        node = self.ids[i]
        kind = pkt.kind
        if kind == DATA:
            self._log((now, M.HOPTX_DATA, pkt.uid, node, ""))
        else:
            self._log((now, M.HOPTX_CONTROL, pkt.uid, node, kind))
        air = self.link.airtime_us(pkt.payload_size + pkt.header_size)
        if pkt.next_hop is None:
            if self.link.carrier_sense:
                eng.post(now + self._backoff(), self._sense, i, pkt, -1, air)
            else:
                self._broadcast(i, pkt, air)
        else:
            if pkt.next_hop not in self.index:
                raise UnknownNode(pkt.next_hop)
            self._attempt(i, pkt, 0, air)

    def _done(self, i: int) -> None:
        self.busy[i] = False
        self._kick(i)

    def _bcast_rx(self, j: int, pkt: Packet, sender: str, fid: int) -> None:
        if fid >= 0 and self._collided(j, fid):
            return
        self.agents[j].receive(pkt, sender)

    def _broadcast(self, i: int, pkt: Packet, air: int) -> None:
        eng = self.engine
        now = eng.now
        node = self.ids[i]
        rnd = self._jitter.random
        jmax = self._bcast_max_us
        start = now + air
        if self.link.carrier_sense:
            self.core.mark_tx(i, start)
        for j in self.core.neighbors(i, now, self.link.tx_range):
            at = start + int(rnd() * (jmax + 1))
            if self.link.busy_receiver:
                fid = self._note_frame(j, at - air, at)
                eng.post(at, self._bcast_rx, j, pkt, node, fid)
            else:
                eng.post(at, self._bcast_rx, j, pkt, node, -1)
        eng.post(start, self._done, i)

    def _backoff(self) -> int:
        return int(self._jitter.random() * (self._ucast_max_us + 1))

    def _sense(self, i: int, pkt: Packet, n: int, air: int) -> None:
        """Carrier sense after a backoff; ``n < 0`` marks a broadcast."""
        now = self.engine.now
        until = self.core.busy_until(i, now, self.link.tx_range)
        if until > now:
            self.engine.post(until + self._backoff(), self._sense, i, pkt, n, air)
        elif n < 0:
            self._broadcast(i, pkt, air)
        else:
            self._transmit(i, pkt, n, air)

    def _attempt(self, i: int, pkt: Packet, n: int, air: int) -> None:
        self.attempts += 1
        if self.link.carrier_sense:
            self.engine.post(self.engine.now + self._backoff(), self._sense, i, pkt, n, air)
            return
        backoff = self._backoff()
        now = self.engine.now
        end = now + backoff + air
        fid = -1
        if self.link.busy_receiver:
            fid = self._note_frame(self.index[pkt.next_hop], now + backoff, end)
        self.engine.post(end, self._attempt_end, i, pkt, n, air, fid)

    def _transmit(self, i: int, pkt: Packet, n: int, air: int) -> None:
        now = self.engine.now
        end = now + air
        self.core.mark_tx(i, end)
        fid = -1
        if self.link.busy_receiver:
            fid = self._note_frame(self.index[pkt.next_hop], now, end)
        self.engine.post(end, self._attempt_end, i, pkt, n, air, fid)

    def _attempt_end(self, i: int, pkt: Packet, n: int, air: int, fid: int) -> None:
        eng = self.engine
        j = self.index[pkt.next_hop]
        ok = self.core.in_range(i, j, eng.now, self.link.tx_range)
        if ok and fid >= 0 and self._collided(j, fid):
            ok = False
        node = self.ids[i]
        if ok:
            self.busy[i] = False
            pkt.hops += 1
            rx = self.ids[j]
            pkt.trail.append(rx)
            self.agents[j].receive(pkt, node)
            if not self.busy[i]:
                self._kick(i)
            return
        self._log((eng.now, M.TX_FAIL, pkt.uid, node, pkt.next_hop))
        if n < self.link.max_unicast_retries:
            self._attempt(i, pkt, n + 1, air)
            return
        lost = pkt.next_hop
        self._log((eng.now, M.LINK_BREAK, pkt.uid, node, lost))
        stranded = self.queues[i].remove_if(lambda p: p.next_hop == lost)
        self.busy[i] = False
        self.agents[i].on_link_break(lost, [pkt] + stranded)
        if not self.busy[i]:
            self._kick(i)

    # -- optional receiver-side interference --------------------------------

    def _note_frame(self, j: int, start: int, end: int) -> int:
        fid = next(self._frame_ids)
        log = self._rx[j]
        horizon = self.engine.now - 1_000_000
        if log and log[0][1] < horizon:
            log[:] = [f for f in log if f[1] >= horizon]
        log.append((start, end, fid))
        return fid

    def _collided(self, j: int, fid: int) -> bool:
        mine = None
        for f in self._rx[j]:
            if f[2] == fid:
                mine = f
                break
        if mine is None:
            return False
        s, e, _ = mine
        return any(f[2] != fid and f[0] < e and s < f[1] for f in self._rx[j])


def neighbors(positions: dict[str, tuple[float, float]], node: str, tx_range: float = 250.0) -> set[str]:
    """Unit-disk neighbor set from a position snapshot (boundary inclusive)."""
    if node not in positions:
        raise UnknownNode(node)
    x0, y0 = positions[node]
    r2 = tx_range * tx_range
    out = set()
    for other, (x, y) in positions.items():
        if other != node:
            dx = x - x0
            dy = y - y0
            if dx * dx + dy * dy <= r2:
                out.add(other)
    return out

