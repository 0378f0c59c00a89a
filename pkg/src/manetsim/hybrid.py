"""Wired domain, domain classification of node ids, and the base-station gateway."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from . import metrics as M
from .engine import Engine, to_us
from .errors import ManetSimError, UnknownNode
from .netstack import NetStack, Packet
from .scenario import _NODE_RE, node_sort_key

BASE_STATION = "bs0"
ROUTER = "router"
BASE_STATION_POSITION = (400.0, 250.0)


class Domain(str, Enum):
    WIRED = "Wired"
    WIRELESS = "Wireless"


class Unreachable(ManetSimError):
    pass


def classify(addr: str) -> Domain:
    if not _NODE_RE.match(addr):
        raise UnknownNode(addr)
    if addr.startswith("f") or addr == ROUTER:
        return Domain.WIRED
    return Domain.WIRELESS


def is_wired(addr: str) -> bool:
    return addr[0] == "f" or addr == ROUTER


@dataclass(frozen=True)
class WiredLink:
    a: str
    b: str
    bandwidth: float = 10e6
    latency: float = 0.002

    def delay_us(self, nbytes: int) -> int:
        return to_us(self.latency + 8 * nbytes / self.bandwidth)


@dataclass(frozen=True)
class WiredTopology:
    links: tuple[WiredLink, ...] = field(default_factory=tuple)

    @cached_property
    def nodes(self) -> list[str]:
        seen = set()
        for ln in self.links:
            seen.update((ln.a, ln.b))
        return sorted(seen, key=node_sort_key)

    @cached_property
    def _adjacency(self) -> dict[str, list[tuple[str, WiredLink]]]:
        # parallel links collapse to the lowest-latency one, so forwarding
        # delays agree with the path costs Dijkstra used
        best: dict[frozenset, WiredLink] = {}
        for ln in self.links:
            key = frozenset((ln.a, ln.b))
            if key not in best or ln.latency < best[key].latency:
                best[key] = ln
        adj: dict[str, list[tuple[str, WiredLink]]] = {n: [] for n in self.nodes}
        for ln in best.values():
            adj[ln.a].append((ln.b, ln))
            adj[ln.b].append((ln.a, ln))
        for n in adj:
            adj[n].sort(key=lambda e: node_sort_key(e[0]))
        return adj

    @cached_property
    def routes(self) -> dict[str, dict[str, list[str]]]:
        """All-pairs shortest-latency paths (Dijkstra from every node)."""
        return {src: self._dijkstra(src) for src in self.nodes}

    def _dijkstra(self, src: str) -> dict[str, list[str]]:
        adj = self._adjacency
        dist = {src: 0.0}
        paths = {src: [src]}
        heap = [(0.0, node_sort_key(src), src)]
        done = set()
        while heap:
            d, _, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, ln in adj[u]:
                nd = d + ln.latency
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    paths[v] = paths[u] + [v]
                    heapq.heappush(heap, (nd, node_sort_key(v), v))
        return paths

    def link(self, a: str, b: str) -> WiredLink:
        for v, ln in self._adjacency[a]:
            if v == b:
                return ln
        raise Unreachable(f"no wired link {a}-{b}")

    def connected(self) -> bool:
        if not self.nodes:
            return True
        return len(self.routes[self.nodes[0]]) == len(self.nodes)


def default_star(fixed: int = 10, bandwidth: float = 10e6, latency: float = 0.002) -> WiredTopology:
    links = [WiredLink(BASE_STATION, ROUTER, bandwidth, latency)]
    links += [WiredLink(ROUTER, f"f{k}", bandwidth, latency) for k in range(fixed)]
    return WiredTopology(tuple(links))


def wired_route(topology: WiredTopology, src: str, dst: str) -> list[str]:
    if src not in topology.routes:
        raise UnknownNode(src)
    if dst not in topology.routes:
        raise UnknownNode(dst)
    path = topology.routes[src].get(dst)
    if path is None:
        raise Unreachable(f"{dst} is unreachable from {src}")
    return list(path)


class Gateway:
    """Static wired forwarding plus the base station's bridge into the ad hoc plane.

    Wired hops are modelled as pure delay (latency + serialization); the
    wired plane never looks at ad hoc routing state and vice versa.
    """

    def __init__(self, engine: Engine, stack: NetStack, topology: WiredTopology, node: str = BASE_STATION):
        self.engine = engine
        self.stack = stack
        self.topology = topology
        self.node = node
        stack.gateway = node
        stack.to_wired = self._from_wireless

    def _from_wireless(self, at: str, pkt: Packet) -> None:
        self.gateway_forward(pkt)

    def gateway_forward(self, pkt: Packet) -> None:
        """Packet is at the base station: push it into the wired plane or the ad hoc plane."""
        if is_wired(pkt.final_dest):
            try:
                path = wired_route(self.topology, self.node, pkt.final_dest)
            except (Unreachable, UnknownNode):
                self.stack.drop(self.node, pkt, M.NO_ROUTE)
                return
            self._hop(pkt, path, 0)
        else:
            self.stack.agent(self.node).inject(pkt)

    def originate_wired(self, pkt: Packet) -> None:
        """Traffic generated on a wired node travels to the base station first."""
        if pkt.origin == self.node:
            self.gateway_forward(pkt)
            return
        try:
            path = wired_route(self.topology, pkt.origin, self.node)
        except (Unreachable, UnknownNode):
            self.stack.drop(pkt.origin, pkt, M.NO_ROUTE)
            return
        self._hop(pkt, path, 0)

    def _hop(self, pkt: Packet, path: list[str], k: int) -> None:
        here = path[k]
        if k == len(path) - 1:
            if here == pkt.final_dest:
                self.stack.arrive(here, pkt)
            elif here == self.node:
                self.gateway_forward(pkt)
            else:
                self.stack.drop(here, pkt, M.NO_ROUTE)
            return
        nxt = path[k + 1]
        ln = self.topology.link(here, nxt)
        self.stack.trace.log((self.engine.now, M.HOPTX_DATA, pkt.uid, here, ""))
        self.engine.post(self.engine.now + ln.delay_us(pkt.payload_size + pkt.header_size), self._advance, pkt, path, k + 1)

    def _advance(self, pkt: Packet, path: list[str], k: int) -> None:
        pkt.trail.append(path[k])
        self._hop(pkt, path, k)
