import io
import math
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manetsim.engine import Engine, RandomStream, to_us
from manetsim.errors import InvalidParams, ParseError, UnknownNode
from manetsim.scenario import (
    Leg,
    MobilityParams,
    MovementScript,
    TrafficParams,
    generate_movement,
    generate_traffic,
    leg_duration_us,
    movement_text,
    parse_movement,
    parse_traffic,
    position_at,
    traffic_text,
    wired_ids,
    wireless_ids,
    write_movement,
)


def gen(pause=0.0, seed=1, n=10, duration=800.0, **kw):
    p = MobilityParams(node_count=n, pause_time=pause, duration=duration, **kw)
    return generate_movement(p, RandomStream(seed, "mobility"))


def test_motionless_at_full_pause():
    script = gen(pause=800, n=50)
    assert all(legs == [] for legs in script.legs.values())


def test_continuous_motion_at_zero_pause():
    script = gen(pause=0, n=20)
    for node, legs in script.legs.items():
        assert legs[0].depart_us == 0
        arrivals = script.arrivals(node)
        for k in range(1, len(legs)):
            assert legs[k].depart_us == arrivals[k - 1]


def test_pause_between_legs_exact():
    script = gen(pause=100, n=20)
    for node, legs in script.legs.items():
        assert legs[0].depart_us == to_us(100)
        arrivals = script.arrivals(node)
        for k in range(1, len(legs)):
            assert legs[k].depart_us - arrivals[k - 1] == to_us(100)


def test_speed_statistics():
    stream = RandomStream(11, "mobility")
    p = MobilityParams(node_count=1, pause_time=0, duration=10**9)
    speeds = []
    while len(speeds) < 10_000:
        script = generate_movement(replace_duration(p, 20_000), stream)
        speeds.extend(leg.speed for leg in script.legs["w0"])
    speeds = speeds[:10_000]
    assert all(0 < s <= 20 for s in speeds)
    mean = statistics.fmean(speeds)
    se = statistics.stdev(speeds) / math.sqrt(len(speeds))
    assert abs(mean - (0.1 + 20) / 2) < 3 * se


def replace_duration(p, d):
    from dataclasses import replace

    return replace(p, duration=d)


def test_invalid_params():
    with pytest.raises(InvalidParams):
        gen(width=0)
    with pytest.raises(InvalidParams):
        gen(max_speed=0)


def test_position_at_linear():
    script = MovementScript({"w0": (0.0, 0.0)}, {"w0": [Leg(0, (100.0, 0.0), 10.0)]})
    assert position_at(script, "w0", to_us(5)) == (50.0, 0.0)
    assert position_at(script, "w0", to_us(10)) == (100.0, 0.0)
    assert position_at(script, "w0", to_us(50)) == (100.0, 0.0)


def test_position_at_pause():
    script = MovementScript({"w0": (100.0, 100.0)}, {"w0": [Leg(to_us(50), (0.0, 0.0), 1.0)]})
    for t in (0, 10, 49.999999):
        assert position_at(script, "w0", to_us(t)) == (100.0, 100.0)
    with pytest.raises(UnknownNode):
        position_at(script, "w9", 0)


def test_positions_stay_inside_area():
    import random

    script = gen(pause=0, n=50, seed=4)
    rng = random.Random(5)
    for _ in range(1000):
        node = f"w{rng.randrange(50)}"
        t = rng.randrange(0, to_us(800) + 1)
        x, y = position_at(script, node, t)
        assert 0 <= x <= 800 and 0 <= y <= 500


def test_determinism_and_seed_sensitivity():
    assert movement_text(gen(seed=3)) == movement_text(gen(seed=3))
    texts = {movement_text(gen(seed=s)) for s in range(1, 11)}
    assert len(texts) == 10


def _traffic(n_src, fraction, seed=1):
    p = TrafficParams(source_count=n_src, cross_domain_fraction=fraction)
    return generate_traffic(p, wireless_ids(50), wired_ids(10), RandomStream(seed, "traffic"))


def test_traffic_peer_to_peer():
    t = _traffic(15, 0.0)
    assert len(t.connections) == 15
    assert all(c.dest.startswith("w") for c in t.connections)
    assert len({c.source for c in t.connections}) == 15
    assert all(c.source != c.dest for c in t.connections)


def test_traffic_all_cross_domain():
    t = _traffic(15, 1.0)
    assert all(c.dest.startswith("f") for c in t.connections)


def test_traffic_cross_domain_count():
    t = _traffic(25, 0.48)
    assert sum(c.dest.startswith("f") for c in t.connections) == round(0.48 * 25) == 12


def test_traffic_starts_and_packet_counts():
    t = _traffic(25, 0.5, seed=9)
    for c in t.connections:
        assert 0 <= c.start_us <= to_us(30)
        assert c.stop_us == to_us(800)
        expected = math.floor((c.stop_us - c.start_us) / 1e6 * c.rate)
        assert abs(len(c.send_times()) - expected) <= 1


def test_traffic_too_many_sources():
    with pytest.raises(InvalidParams):
        generate_traffic(TrafficParams(source_count=5), wireless_ids(3), [], RandomStream(1, "traffic"))


def test_empty_movement_round_trip():
    empty = MovementScript({}, {})
    text = movement_text(empty)
    assert text == "#manetsim-movement v1\n"
    assert parse_movement(io.StringIO(text)) == empty


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(0, 8),
    pause=st.sampled_from([0.0, 3.5, 100.0]),
    max_speed=st.floats(0.5, 30.0),
)
def test_movement_round_trip(seed, n, pause, max_speed):
    script = gen(pause=pause, seed=seed, n=n, duration=300.0, max_speed=max_speed)
    buf = io.StringIO()
    write_movement(script, buf)
    back = parse_movement(io.StringIO(buf.getvalue()))
    assert back.initial == script.initial
    assert back.legs == script.legs


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 25), fraction=st.floats(0, 1))
def test_traffic_round_trip(seed, n, fraction):
    t = _traffic(n, fraction, seed)
    assert parse_traffic(io.StringIO(traffic_text(t))) == t


def test_negative_speed_rejected():
    text = "#manetsim-movement v1\ninit w0 1.0 2.0\nleg w0 0.000000 5.0 5.0 -3\n"
    with pytest.raises(ParseError) as exc:
        parse_movement(io.StringIO(text), "m.txt")
    assert exc.value.line == 3
    assert "speed" in exc.value.reason


def test_bad_header_and_records():
    with pytest.raises(ParseError) as exc:
        parse_movement(io.StringIO("garbage\n"))
    assert exc.value.line == 1
    with pytest.raises(ParseError):
        parse_traffic(io.StringIO("#manetsim-traffic v1\ncbr w0 w0 0 1 4 512\n"))
    with pytest.raises(ParseError):
        parse_traffic(io.StringIO("#manetsim-traffic v1\ncbr w0 x1 0 1 4 512\n"))


def test_leg_duration_rounds_up():
    leg = Leg(0, (1.0, 0.0), 3.0)
    assert leg_duration_us((0.0, 0.0), leg) == 333334


def test_scripts_reuse_engine_streams():
    # the same labelled stream from an engine gives the same script
    a = generate_movement(MobilityParams(node_count=5), Engine(2).rng_stream("mobility"))
    b = generate_movement(MobilityParams(node_count=5), RandomStream(2, "mobility"))
    assert a == b
