import heapq
import itertools
import random

import pytest

from conftest import flow, static_sim
from manetsim import metrics as M
from manetsim.engine import to_us
from manetsim.errors import UnknownNode
from manetsim.hybrid import (
    BASE_STATION_POSITION,
    Domain,
    Unreachable,
    WiredLink,
    WiredTopology,
    classify,
    default_star,
    wired_route,
)
from manetsim.netstack import DATA, Packet


def test_classify():
    assert classify("f3") == Domain.WIRED
    assert classify("w17") == Domain.WIRELESS
    assert classify("bs0") == Domain.WIRELESS
    with pytest.raises(UnknownNode):
        classify("zz")


def test_wired_route_examples():
    star = default_star()
    assert wired_route(star, "f0", "f0") == ["f0"]
    assert wired_route(star, "bs0", "f7") == ["bs0", "router", "f7"]
    assert wired_route(star, "f2", "bs0") == ["f2", "router", "bs0"]
    with pytest.raises(UnknownNode):
        wired_route(star, "bs0", "f10")


def test_wired_hop_delay():
    ln = WiredLink("a", "b")
    assert ln.delay_us(548) == to_us(0.002 + 8 * 548 / 10e6)


def test_disconnected_wired_graph():
    topo = WiredTopology((WiredLink("bs0", "f0"), WiredLink("f1", "f2")))
    assert not topo.connected()
    with pytest.raises(Unreachable):
        wired_route(topo, "bs0", "f1")


def oracle_dijkstra(links, src):
    """Shortest-latency distances by exhaustive relaxation over simple paths."""
    nodes = sorted({n for ln in links for n in (ln.a, ln.b)})
    adj = {n: {} for n in nodes}
    for ln in links:
        adj[ln.a][ln.b] = min(adj[ln.a].get(ln.b, float("inf")), ln.latency)
        adj[ln.b][ln.a] = min(adj[ln.b].get(ln.a, float("inf")), ln.latency)
    dist = {src: 0.0}
    frontier = [(0.0, src)]
    while frontier:
        d, u = heapq.heappop(frontier)
        if d > dist[u]:
            continue
        for v, w in adj[u].items():
            if d + w < dist.get(v, float("inf")):
                dist[v] = d + w
                heapq.heappush(frontier, (d + w, v))
    return dist


def path_cost(topo, path):
    return sum(topo.link(a, b).latency for a, b in zip(path, path[1:]))


def random_wired_graph(rng, n=8):
    names = ["bs0", "router"] + [f"f{k}" for k in range(n - 2)]
    links = []
    order = names[:]
    rng.shuffle(order)
    for k in range(1, n):  # spanning tree keeps it connected
        links.append(WiredLink(order[k], rng.choice(order[:k]), 10e6, rng.choice([0.001, 0.002, 0.005, 0.01])))
    for a, b in itertools.combinations(names, 2):
        if rng.random() < 0.2:
            links.append(WiredLink(a, b, 10e6, rng.choice([0.001, 0.002, 0.005, 0.01])))
    return names, WiredTopology(tuple(links))


def test_wired_routes_match_oracle():
    rng = random.Random(12)
    for _ in range(20):
        names, topo = random_wired_graph(rng)
        assert topo.connected()
        src, dst = rng.sample(names, 2)
        path = wired_route(topo, src, dst)
        assert path[0] == src and path[-1] == dst
        assert len(set(path)) == len(path)
        assert path_cost(topo, path) == pytest.approx(oracle_dijkstra(topo.links, src)[dst])


# -- gateway behaviour in whole runs --------------------------------------------

NEAR_BS = {"w0": (300.0, 250.0), "w1": (100.0, 250.0)}


def delivered_packets(sim):
    got = []
    real = sim.stack.arrive

    def spy(node, pkt):
        if pkt.final_dest == node:
            got.append(pkt)
        real(node, pkt)

    sim.stack.arrive = spy
    # wired deliveries go through the gateway's own call to arrive
    return got


@pytest.mark.parametrize("protocol", ["DSDV", "DSR"])
def test_wireless_to_wired_via_base_station(protocol):
    sim = static_sim(protocol, NEAR_BS, [flow("w1", "f2", 40.0, 8)], duration=60.0)
    got = delivered_packets(sim)
    report = sim.run()
    assert report.delivered == 8
    for pkt in got:
        assert pkt.trail.count("bs0") == 1
        assert pkt.trail[-3:] == ["bs0", "router", "f2"]


@pytest.mark.parametrize("protocol", ["DSDV", "DSR"])
def test_wired_to_wireless_via_base_station(protocol):
    sim = static_sim(protocol, NEAR_BS, [flow("f2", "w1", 40.0, 8)], duration=60.0)
    got = delivered_packets(sim)
    report = sim.run()
    assert report.delivered == 8
    for pkt in got:
        assert pkt.trail[:3] == ["f2", "router", "bs0"]
        assert pkt.trail.count("bs0") == 1 and pkt.trail[-1] == "w1"


def test_dsr_base_station_buffers_on_cache_miss():
    sim = static_sim("DSR", NEAR_BS, [], duration=1.0)
    for agent in sim.stack.agents:
        agent.start()
    pkt = Packet(sim.stack.new_uid(), DATA, "f2", "w1", 512, 20, 0)
    sim.gateway.gateway_forward(pkt)
    bs = sim.stack.agent("bs0")
    assert [p.uid for p, _ in bs.buffer] == [pkt.uid]
    assert "w1" in bs.discoveries


def test_peer_to_peer_avoids_base_station():
    pos = {"w0": (0.0, 0.0), "w1": (100.0, 0.0)}
    sim = static_sim("DSR", pos, [flow("w0", "w1", 1.0, 5)], duration=10.0)
    got = delivered_packets(sim)
    sim.run()
    assert len(got) == 5 and all("bs0" not in p.trail for p in got)


def test_partitioned_base_station_drops():
    pos = {"w0": (0.0, 0.0), "w1": (50.0, 0.0)}
    sim = static_sim("DSDV", pos, [flow("w0", "f1", 40.0, 4)], duration=60.0)
    report = sim.run()
    assert report.delivered == 0
    assert report.drops_by_reason == {M.NO_ROUTE: 4}


def test_base_station_position_fixed():
    sim = static_sim("DSDV", NEAR_BS, [], duration=5.0)
    i = sim.stack.index["bs0"]
    for t in (0, to_us(2.5), to_us(5)):
        assert sim.stack.core.position(i, t) == BASE_STATION_POSITION
