import os
import sys
from dataclasses import replace

import pytest

from manetsim.engine import Engine, to_us
from manetsim.harness import RunConfig, Simulation
from manetsim.kernels import build_core
from manetsim.metrics import Trace
from manetsim.netstack import LinkModel, NetStack, RoutingAgent
from manetsim.scenario import Connection, MobilityParams, MovementScript, TrafficParams, TrafficScript

sys.path.insert(0, os.path.dirname(__file__))


def static_script(positions):
    return MovementScript(dict(positions), {n: [] for n in positions})


class Recorder(RoutingAgent):
    """Stand-in routing agent that just remembers what the stack hands it."""

    def __init__(self, node, stack):
        super().__init__(node, stack)
        self.got = []
        self.breaks = []

    def receive(self, pkt, prev_hop):
        self.got.append((self.engine.now, pkt, prev_hop))

    def on_link_break(self, lost, pkts):
        self.breaks.append((self.engine.now, lost, list(pkts)))


def make_stack(positions, link=None, seed=1, movement=None, agent_cls=Recorder, backend=None):
    eng = Engine(seed)
    script = movement or static_script(positions)
    order = script.nodes()
    core = build_core(script, order, backend=backend)
    stack = NetStack(eng, core, order, link or LinkModel(), Trace())
    for n in order:
        stack.attach(n, agent_cls(n, stack))
    return eng, stack


def flow(src, dst, start, count, rate=4.0, size=512):
    start_us = to_us(start)
    return Connection(src, dst, start_us, start_us + count * to_us(1.0 / rate), rate, size)


def static_sim(protocol, positions, flows, duration=10.0, seed=1, link=None, **cfg_changes):
    movement = static_script(positions)
    traffic = TrafficScript(list(flows))
    cfg = RunConfig(
        protocol=protocol,
        seed=seed,
        duration=duration,
        mobility=replace(MobilityParams(), node_count=len(positions), duration=duration),
        traffic=replace(TrafficParams(), source_count=len(flows)),
        **cfg_changes,
    )
    if link is not None:
        cfg = replace(cfg, link=link)
    return Simulation(cfg, movement, traffic)


@pytest.fixture
def engine():
    return Engine(1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
