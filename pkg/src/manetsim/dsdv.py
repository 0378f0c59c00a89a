"""DSDV: destination-sequenced distance-vector routing agent."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import metrics as M
from .engine import to_us
from .errors import InvalidParams
from .netstack import DATA, DSDV_UPDATE, NetStack, Packet, RoutingAgent

INFINITE = math.inf

FULL_DUMP = "FullDump"
INCREMENTAL = "Incremental"


@dataclass(frozen=True)
class DsdvConfig:
    periodic_interval: float = 15.0
    full_dump_period: int = 3
    npdu_capacity: int = 100
    trigger_damping: float = 1.0
    entry_bytes: int = 12
    max_hops: int = 32
    # what makes an adopted route worth a triggered update: "metric" (hop
    # count or reachability changed), "route" (metric or next hop), "any"
    trigger_on: str = "route"

    def validate(self) -> None:
        if self.periodic_interval <= 0 or self.trigger_damping < 0:
            raise InvalidParams("periodic_interval must be positive, trigger_damping nonnegative")
        if self.full_dump_period < 1 or self.npdu_capacity < 1:
            raise InvalidParams("full_dump_period and npdu_capacity must be at least 1")
        if self.trigger_on not in ("metric", "route", "any"):
            raise InvalidParams(f"trigger_on must be metric, route or any, got {self.trigger_on!r}")


@dataclass
class DsdvEntry:
    dest: str
    next_hop: str
    hop_count: float
    seq: int
    installed_at: int
    changed_since_full_dump: bool = False

    @property
    def reachable(self) -> bool:
        return self.hop_count != INFINITE


@dataclass(frozen=True)
class DsdvUpdateMsg:
    sender: str
    entries: tuple[tuple[str, float, int], ...]
    kind: str


class DsdvAgent(RoutingAgent):
    def __init__(self, node: str, stack: NetStack, config: DsdvConfig | None = None, phase: float = 0.0):
        super().__init__(node, stack)
        self.config = config or DsdvConfig()
        self.phase_us = to_us(phase)
        self.seq = 0
        self.table: dict[str, DsdvEntry] = {node: DsdvEntry(node, node, 0, 0, self.engine.now)}
        self.adverts = 0
        self.stale_discarded = 0
        self.triggered_sent = 0
        self._pending: set[str] = set()
        self._trigger = None
        self._last_trigger = None
        self._interval_us = to_us(self.config.periodic_interval)
        self._damping_us = to_us(self.config.trigger_damping)

    def start(self) -> None:
        self.engine.post(self.engine.now + self.phase_us, self._on_periodic)

    # -- advertisements ------------------------------------------------------

    def periodic_advertise(self, now: int) -> DsdvUpdateMsg:
        self.seq += 2
        own = self.table[self.node]
        own.seq = self.seq
        own.installed_at = now
        own.changed_since_full_dump = True
        changed = [e for e in self.table.values() if e.changed_since_full_dump]
        full = (self.adverts % self.config.full_dump_period == 0) or len(changed) > self.config.npdu_capacity
        self.adverts += 1
        if full:
            chosen = list(self.table.values())
            for e in chosen:
                e.changed_since_full_dump = False
            kind = FULL_DUMP
        else:
            chosen = changed
            kind = INCREMENTAL
        # anything awaiting a triggered update is covered by this advertisement
        self._pending.clear()
        if self._trigger is not None:
            self.engine.cancel(self._trigger)
            self._trigger = None
        return DsdvUpdateMsg(self.node, tuple((e.dest, e.hop_count, e.seq) for e in chosen), kind)

    def _on_periodic(self) -> None:
        self._broadcast(self.periodic_advertise(self.engine.now))
        self.engine.post(self.engine.now + self._interval_us, self._on_periodic)

    def _broadcast(self, msg: DsdvUpdateMsg) -> None:
        st = self.stack
        pkt = Packet(
            st.new_uid(),
            DSDV_UPDATE,
            self.node,
            None,
            self.config.entry_bytes * len(msg.entries),
            st.header_bytes(),
            self.engine.now,
            body=msg,
        )
        st.send(self.node, pkt, None)

    def _schedule_trigger(self) -> None:
        if self._trigger is not None:
            return
        now = self.engine.now
        at = now
        if self._last_trigger is not None:
            at = max(now, self._last_trigger + self._damping_us)
        self._trigger = self.engine.schedule(at, self._fire_trigger)

    def _fire_trigger(self) -> None:
        self._trigger = None
        if not self._pending:
            return
        entries = tuple(
            (e.dest, e.hop_count, e.seq) for e in self.table.values() if e.dest in self._pending
        )
        self._pending.clear()
        self._last_trigger = self.engine.now
        self.triggered_sent += 1
        self._broadcast(DsdvUpdateMsg(self.node, entries, INCREMENTAL))

    # -- table maintenance ---------------------------------------------------

    def handle_update(self, msg: DsdvUpdateMsg, now: int) -> list[DsdvEntry]:
        """Merge a neighbor's advertisement; returns entries whose route changed."""
        table = self.table
        sender = msg.sender
        trigger = self.config.trigger_on
        changed = []
        for dest, hops, seq in msg.entries:
            if dest == self.node:
                continue
            new_hops = hops + 1
            cur = table.get(dest)
            if cur is None:
                if new_hops == INFINITE:
                    continue
                cur = table[dest] = DsdvEntry(dest, sender, new_hops, seq, now, True)
                changed.append(cur)
                continue
            if seq > cur.seq or (seq == cur.seq and new_hops < cur.hop_count):
                if trigger == "metric":
                    significant = cur.hop_count != new_hops
                elif trigger == "route":
                    significant = cur.hop_count != new_hops or cur.next_hop != sender
                else:
                    significant = True
                cur.next_hop = sender
                cur.hop_count = new_hops
                cur.seq = seq
                cur.installed_at = now
                cur.changed_since_full_dump = True
                if significant:
                    changed.append(cur)
            else:
                self.stale_discarded += 1
        if changed:
            self._pending.update(e.dest for e in changed)
            self._schedule_trigger()
        return changed

    def on_link_break(self, lost: str, pkts: list[Packet]) -> None:
        self.invalidate_via(lost)
        for pkt in pkts:
            if pkt.kind != DATA:
                self.stack.drop(self.node, pkt, M.LINK_BREAK_EXHAUSTED)
                continue
            nh = self.next_hop(self.stack.wireless_target(pkt.final_dest))
            if nh is None:
                self.stack.drop(self.node, pkt, M.LINK_BREAK_EXHAUSTED)
            else:
                self.stack.send(self.node, pkt, nh)

    def invalidate_via(self, lost: str) -> list[DsdvEntry]:
        broken = []
        for e in self.table.values():
            if e.next_hop == lost and e.dest != self.node and e.hop_count != INFINITE:
                e.hop_count = INFINITE
                e.seq += 1
                e.installed_at = self.engine.now
                e.changed_since_full_dump = True
                broken.append(e)
        if broken:
            self._pending.update(e.dest for e in broken)
            self._schedule_trigger()
        return broken

    def next_hop(self, dest: str) -> str | None:
        if dest == self.node:
            return self.node
        e = self.table.get(dest)
        if e is None or e.hop_count == INFINITE:
            return None
        return e.next_hop

    # -- data plane ----------------------------------------------------------

    def originate(self, pkt: Packet) -> None:
        pkt.header_size = self.stack.header_bytes()
        self._forward(pkt, origin=True)

    def inject(self, pkt: Packet) -> None:
        """Packet handed over by the gateway from the wired side."""
        self._forward(pkt)

    def _forward(self, pkt: Packet, origin: bool = False) -> None:
        st = self.stack
        target = st.wireless_target(pkt.final_dest)
        if target == self.node:
            st.arrive(self.node, pkt)
            return
        if pkt.hops >= self.config.max_hops:
            st.drop(self.node, pkt, M.TTL_EXCEEDED)
            return
        nh = self.next_hop(target)
        if nh is None:
            st.drop(self.node, pkt, M.NO_ROUTE)
            return
        if origin:
            st.trace.log((self.engine.now, M.SENT, pkt.uid, self.node, ""))
        st.send(self.node, pkt, nh)

    def receive(self, pkt: Packet, prev_hop: str) -> None:
        if pkt.kind == DSDV_UPDATE:
            self.handle_update(pkt.body, self.engine.now)
        elif pkt.kind == DATA:
            self._forward(pkt)
