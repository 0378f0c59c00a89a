"""Compare the compiled and pure-Python mobility kernels.

Times neighbor queries on a 51-node scenario and one full 800 s run per
backend, and checks that both backends give the same answers.

    python benchmarks/bench_kernels.py [--queries N] [--protocol DSR]
"""

import argparse
import random
import sys
import time

from manetsim.engine import RandomStream, to_us
from manetsim.harness import RunConfig, Simulation
from manetsim.hybrid import BASE_STATION, BASE_STATION_POSITION
from manetsim.kernels import backends, build_core
from manetsim.scenario import MobilityParams, generate_movement


def bench_neighbors(backend, queries, seed=1):
    script = generate_movement(MobilityParams(pause_time=0.0), RandomStream(seed, "mobility"))
    order = script.nodes() + [BASE_STATION]
    core = build_core(script, order, fixed={BASE_STATION: BASE_STATION_POSITION}, backend=backend)
    rng = random.Random(seed)
    # monotone query times, as the simulator issues them
    times = sorted(rng.randrange(0, to_us(800)) for _ in range(queries))
    nodes = [rng.randrange(len(order)) for _ in range(queries)]
    t0 = time.perf_counter()
    total = 0
    for t, i in zip(times, nodes):
        total += len(core.neighbors(i, t, 250.0))
    return time.perf_counter() - t0, total


def bench_run(backend, protocol, seed=1):
    cfg = RunConfig().with_axes(protocol, 25, 0.0, seed)
    t0 = time.perf_counter()
    report = Simulation(cfg, backend=backend).run()
    return time.perf_counter() - t0, report


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--queries", type=int, default=200_000)
    p.add_argument("--protocol", choices=["DSDV", "DSR"], default="DSR")
    args = p.parse_args(argv)

    available = backends()
    if "cython" not in available:
        print("compiled extension not built; only the Python kernel is available", file=sys.stderr)

    rows = {}
    for name in available:
        nq, count = bench_neighbors(name, args.queries)
        run, report = bench_run(name, args.protocol)
        rows[name] = (nq, count, run, report)
        print(f"{name:>7}: {args.queries} neighbor queries {nq:7.3f} s | full {args.protocol} run {run:6.2f} s")

    if len(rows) == 2:
        py, cy = rows["python"], rows["cython"]
        assert py[1] == cy[1], "neighbor counts differ between backends"
        assert py[3] == cy[3], "run reports differ between backends"
        print(f"speedup: neighbor queries x{py[0] / cy[0]:.1f}, full run x{py[2] / cy[2]:.2f} (results identical)")


if __name__ == "__main__":
    main()
