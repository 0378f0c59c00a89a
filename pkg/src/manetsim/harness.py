"""Run construction, the experiment sweep, CSV output, and run configuration files."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

from . import metrics as M
from .dsdv import DsdvAgent, DsdvConfig
from .dsr import DsrAgent, DsrConfig
from .engine import Engine, to_us
from .errors import ConfigError, InvalidParams, UnknownNode
from .hybrid import BASE_STATION, BASE_STATION_POSITION, Gateway, WiredLink, WiredTopology, default_star, is_wired
from .kernels import build_core
from .netstack import DATA, LinkModel, NetStack, Packet
from .scenario import (
    MobilityParams,
    MovementScript,
    TrafficParams,
    TrafficScript,
    generate_movement,
    generate_traffic,
    movement_text,
    traffic_text,
)

PROTOCOLS = ("DSDV", "DSR")
DEFAULT_PAUSE_TIMES = (0, 100, 200, 300, 400, 500, 600, 700, 800)
DEFAULT_SOURCE_COUNTS = (15, 25)
DEFAULT_SEEDS = tuple(range(1, 11))

CSV_HEADER = "protocol,sources,pause_time,seed,generated,delivered,pdf,avg_delay_ms,routing_tx,nrl"


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "DSDV"
    mobility: MobilityParams = field(default_factory=MobilityParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    link: LinkModel = field(default_factory=LinkModel)
    wired: WiredTopology = field(default_factory=default_star)
    duration: float = 800.0
    seed: int = 1
    warmup_seconds: float = 0.0
    dsdv: DsdvConfig = field(default_factory=DsdvConfig)
    dsr: DsrConfig = field(default_factory=DsrConfig)

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError("run.protocol", f"expected one of {', '.join(PROTOCOLS)}, got {self.protocol!r}")
        if self.duration < 0:
            raise ConfigError("run.duration", "must be nonnegative")
        if self.warmup_seconds < 0:
            raise ConfigError("run.warmup_seconds", "must be nonnegative")
        if self.seed < 0:
            raise ConfigError("run.seed", "must be nonnegative")
        for section, obj in (
            ("mobility", self.mobility),
            ("traffic", self.traffic),
            ("link", self.link),
            ("dsdv", self.dsdv),
            ("dsr", self.dsr),
        ):
            try:
                obj.validate()
            except InvalidParams as exc:
                raise ConfigError(section, str(exc)) from None
        if self.traffic.source_count > self.mobility.node_count:
            raise ConfigError("traffic.source_count", "exceeds mobility.node_count")
        if BASE_STATION not in self.wired.nodes or not self.wired.connected():
            raise ConfigError("wired.links", "wired topology must be connected and include bs0")

    def with_axes(self, protocol: str, sources: int, pause: float, seed: int) -> "RunConfig":
        return replace(
            self,
            protocol=protocol,
            seed=seed,
            mobility=replace(self.mobility, pause_time=pause),
            traffic=replace(self.traffic, source_count=sources),
        )


def scenario_for(cfg: RunConfig) -> tuple[MovementScript, TrafficScript]:
    """The movement and traffic scripts a run with ``cfg`` uses; independent of the protocol."""
    eng = Engine(cfg.seed)
    mob = replace(cfg.mobility, duration=cfg.duration)
    movement = generate_movement(mob, eng.rng_stream("mobility"))
    wired = [n for n in cfg.wired.nodes if n.startswith("f")]
    traffic = generate_traffic(
        cfg.traffic, movement.nodes(), wired, eng.rng_stream("traffic"), duration=cfg.duration
    )
    return movement, traffic


def script_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class Simulation:
    """One fully wired-up run: engine, mobility kernel, stack, agents, gateway, CBR sources."""

    def __init__(
        self,
        cfg: RunConfig,
        movement: MovementScript | None = None,
        traffic: TrafficScript | None = None,
        backend: str | None = None,
    ) -> None:
        cfg.validate()
        self.cfg = cfg
        if movement is None or traffic is None:
            gen_m, gen_t = scenario_for(cfg)
            movement = movement or gen_m
            traffic = traffic or gen_t
        self.movement = movement
        self.traffic = traffic
        self.engine = eng = Engine(cfg.seed)
        self.trace = M.Trace()
        order = movement.nodes() + [BASE_STATION]
        core = build_core(movement, order, fixed={BASE_STATION: BASE_STATION_POSITION}, backend=backend)
        self.stack = NetStack(eng, core, order, cfg.link, self.trace, is_wired=is_wired)
        self.gateway = Gateway(eng, self.stack, cfg.wired)
        phases = eng.rng_stream("scenario")
        for node in order:
            if cfg.protocol == "DSDV":
                phase = phases.uniform(0.0, cfg.dsdv.periodic_interval)
                agent = DsdvAgent(node, self.stack, cfg.dsdv, phase)
            else:
                agent = DsrAgent(node, self.stack, cfg.dsr)
            self.stack.attach(node, agent)
        for conn in traffic.connections:
            for end in (conn.source, conn.dest):
                if end not in self.stack.index and end not in cfg.wired.nodes:
                    raise UnknownNode(end)

    @property
    def movement_hash(self) -> str:
        return script_hash(movement_text(self.movement))

    @property
    def traffic_hash(self) -> str:
        return script_hash(traffic_text(self.traffic))

    def _start_traffic(self) -> None:
        eng = self.engine
        for conn in self.traffic.connections:
            if conn.start_us < conn.stop_us:
                eng.post(conn.start_us, self._cbr, conn)

    def _cbr(self, conn) -> None:
        eng = self.engine
        st = self.stack
        pkt = Packet(st.new_uid(), DATA, conn.source, conn.dest, conn.size, st.header_bytes(), eng.now)
        st.live[pkt.uid] = pkt
        self.trace.log((eng.now, M.GENERATED, pkt.uid, conn.source, ""))
        if conn.source in st.index:
            st.agent(conn.source).originate(pkt)
        else:
            self.gateway.originate_wired(pkt)
        nxt = eng.now + conn.interval_us
        if nxt < conn.stop_us:
            eng.post(nxt, self._cbr, conn)

    def run(self) -> M.RunReport:
        for agent in self.stack.agents:
            agent.start()
        self._start_traffic()
        self.engine.run(to_us(self.cfg.duration))
        self.stack.finish()
        return self.report()

    def report(self) -> M.RunReport:
        return M.build_report(self.trace.events, to_us(self.cfg.warmup_seconds))


def run_experiment(
    cfg: RunConfig,
    movement: MovementScript | None = None,
    traffic: TrafficScript | None = None,
) -> M.RunReport:
    return Simulation(cfg, movement, traffic).run()


# -- sweep -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig = field(default_factory=RunConfig)
    pause_times: tuple[float, ...] = DEFAULT_PAUSE_TIMES
    source_counts: tuple[int, ...] = DEFAULT_SOURCE_COUNTS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    protocols: tuple[str, ...] = PROTOCOLS

    def validate(self) -> None:
        for name in ("pause_times", "source_counts", "seeds", "protocols"):
            if not getattr(self, name):
                raise ConfigError(f"sweep.{name}", "must not be empty")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ConfigError("sweep.protocols", f"unknown protocol {p!r}")


@dataclass(frozen=True)
class RunResult:
    protocol: str
    sources: int
    pause_time: float
    seed: int
    report: M.RunReport
    movement_hash: str
    traffic_hash: str

    @property
    def axes(self) -> tuple:
        return (self.protocol, self.sources, self.pause_time, self.seed)


@dataclass
class Row:
    protocol: str
    sources: int
    pause_time: float
    seed: int | str
    generated: float
    delivered: float
    pdf: float | None
    avg_delay_ms: float | None
    routing_tx: float
    nrl: float | None


def _run_job(job):
    cfg, movement, traffic, mhash, thash = job
    report = Simulation(cfg, movement, traffic).run()
    return RunResult(
        cfg.protocol, cfg.traffic.source_count, cfg.mobility.pause_time, cfg.seed, report, mhash, thash
    )


def sweep(spec: SweepSpec, parallel: int = 1, progress=None) -> list[RunResult]:
    """Run the Cartesian product of the sweep axes.

    Scripts are generated once per (pause, sources, seed) and shared by
    every protocol at that point, so protocol comparisons see identical
    scenarios.
    """
    spec.validate()
    jobs = []
    for pause in spec.pause_times:
        for sources in spec.source_counts:
            for seed in spec.seeds:
                point = spec.base.with_axes(spec.protocols[0], sources, pause, seed)
                point.validate()
                movement, traffic = scenario_for(point)
                mhash = script_hash(movement_text(movement))
                thash = script_hash(traffic_text(traffic))
                for protocol in spec.protocols:
                    cfg = replace(point, protocol=protocol)
                    jobs.append((cfg, movement, traffic, mhash, thash))
    results = []
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for res in pool.map(_run_job, jobs):
                results.append(res)
                if progress:
                    progress(res)
    else:
        for job in jobs:
            res = _run_job(job)
            results.append(res)
            if progress:
                progress(res)
    results.sort(key=lambda r: r.axes)
    return results


def run_row(res: RunResult) -> Row:
    r = res.report
    return Row(
        res.protocol,
        res.sources,
        res.pause_time,
        res.seed,
        r.generated,
        r.delivered,
        r.pdf,
        None if r.avg_delay is None else r.avg_delay * 1000.0,
        r.routing_tx,
        r.nrl,
    )


def _mean(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return statistics.fmean(vals) if vals else None


def aggregate(results: Iterable[RunResult]) -> list[Row]:
    """Arithmetic mean over seeds for every (protocol, sources, pause_time)."""
    groups: dict[tuple, list[Row]] = {}
    for res in results:
        groups.setdefault((res.protocol, res.sources, res.pause_time), []).append(run_row(res))
    out = []
    for key in sorted(groups):
        rows = groups[key]
        out.append(
            Row(
                *key,
                "mean",
                _mean(r.generated for r in rows),
                _mean(r.delivered for r in rows),
                _mean(r.pdf for r in rows),
                _mean(r.avg_delay_ms for r in rows),
                _mean(r.routing_tx for r in rows),
                _mean(r.nrl for r in rows),
            )
        )
    return out


def _num(value, integral: bool) -> str:
    if value is None:
        return ""
    if integral:
        return str(int(value))
    return f"{value:.6f}"


def _pause(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else f"{p:.6f}"


def emit_csv(rows: Iterable[Row], fh: TextIO) -> int:
    fh.write(CSV_HEADER + "\n")
    n = 0
    for r in rows:
        per_run = r.seed != "mean"
        fields = [
            r.protocol,
            str(r.sources),
            _pause(r.pause_time),
            str(r.seed),
            _num(r.generated, per_run),
            _num(r.delivered, per_run),
            _num(r.pdf, False),
            _num(r.avg_delay_ms, False),
            _num(r.routing_tx, per_run),
            _num(r.nrl, False),
        ]
        fh.write(",".join(fields) + "\n")
        n += 1
    return n


def sweep_rows(results: list[RunResult]) -> list[Row]:
    return [run_row(r) for r in results] + aggregate(results)


def parse_csv(fh: TextIO) -> list[dict[str, str]]:
    import csv

    return list(csv.DictReader(fh))


# -- configuration files -----------------------------------------------------

_SECTIONS = {
    "mobility": "mobility",
    "traffic": "traffic",
    "link": "link",
    "dsdv": "dsdv",
    "dsr": "dsr",
}
_RUN_KEYS = {"protocol", "duration", "seed", "warmup_seconds"}
_SWEEP_KEYS = {"pause_times", "source_counts", "seeds", "protocols"}


def _convert(path: str, raw: str, like):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(path, f"cannot parse {raw!r} as {type(like).__name__}") from None


def _update(obj, section: str, items) -> object:
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in items:
        if key not in names:
            raise ConfigError(f"{section}.{key}", "unknown field")
        changes[key] = _convert(f"{section}.{key}", raw, getattr(obj, key))
    return replace(obj, **changes)


def _wired_from(section) -> WiredTopology:
    if "links" in section:
        links = []
        for k, spec in enumerate(section["links"].split(",")):
            spec = spec.strip()
            if not spec:
                continue
            parts = spec.split(":")
            ends = parts[0].split("-")
            if len(ends) != 2 or len(parts) > 3:
                raise ConfigError(f"wired.links[{k}]", f"expected a-b[:bandwidth[:latency]], got {spec!r}")
            bw = _convert(f"wired.links[{k}].bandwidth", parts[1], 1.0) if len(parts) > 1 else 10e6
            lat = _convert(f"wired.links[{k}].latency", parts[2], 1.0) if len(parts) > 2 else 0.002
            if bw <= 0 or lat < 0:
                raise ConfigError(f"wired.links[{k}]", "bandwidth must be positive, latency nonnegative")
            links.append(WiredLink(ends[0].strip(), ends[1].strip(), bw, lat))
        return WiredTopology(tuple(links))
    fixed = _convert("wired.fixed_nodes", section.get("fixed_nodes", "10"), 1)
    bw = _convert("wired.bandwidth", section.get("bandwidth", "10e6"), 1.0)
    lat = _convert("wired.latency", section.get("latency", "0.002"), 1.0)
    for key in section:
        if key not in ("fixed_nodes", "bandwidth", "latency"):
            raise ConfigError(f"wired.{key}", "unknown field")
    return default_star(fixed, bw, lat)


def _list(path: str, raw: str, kind):
    out = []
    for tok in raw.split(","):
        tok = tok.strip()
        if tok:
            out.append(tok if kind is str else _convert(path, tok, kind()))
    return tuple(out)


def load_config(text: str, base: SweepSpec | None = None) -> SweepSpec:
    """Parse an INI-style run/sweep configuration on top of ``base`` (reference defaults)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    spec = base or SweepSpec()
    cfg = spec.base
    for name in parser.sections():
        section = parser[name]
        if name == "run":
            changes = {}
            for key, raw in section.items():
                if key not in _RUN_KEYS:
                    raise ConfigError(f"run.{key}", "unknown field")
                changes[key] = _convert(f"run.{key}", raw, getattr(cfg, key))
            cfg = replace(cfg, **changes)
        elif name in _SECTIONS:
            cfg = replace(cfg, **{name: _update(getattr(cfg, name), name, section.items())})
        elif name == "wired":
            cfg = replace(cfg, wired=_wired_from(section))
        elif name == "sweep":
            changes = {}
            for key, raw in section.items():
                if key not in _SWEEP_KEYS:
                    raise ConfigError(f"sweep.{key}", "unknown field")
                kind = {"pause_times": float, "source_counts": int, "seeds": int, "protocols": str}[key]
                changes[key] = _list(f"sweep.{key}", raw, kind)
            spec = replace(spec, **changes)
        else:
            raise ConfigError(name, "unknown section")
    cfg = replace(cfg, mobility=replace(cfg.mobility, duration=cfg.duration))
    return replace(spec, base=cfg)
