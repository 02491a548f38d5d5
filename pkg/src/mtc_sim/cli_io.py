"""Command-line front end: configuration, sweeps, result files, Pajek.

A sweep crosses topologies x sweep points x runs.  Every run gets its
own derived seed (base + run index), so an interrupted sweep can be
resumed or spot-checked by re-running single points with the same
numbers.  Raw rows are flushed as soon as they are computed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields

from .baseline_topologies import (
    CommunityConfig,
    DegreeCapDistribution,
    Topology,
    gen_ibc,
    gen_mtc,
    gen_unstructured,
    graph_density,
    sample_degree_caps,
)
from .dataset import (
    Dataset,
    DatasetSpec,
    build_workload,
    generate_dataset,
    place_random,
)
from .errors import (
    IoError,
    MtcSimError,
    NoQueries,
    ParseError,
    ValidationError,
)
from .memory_core import dump_memories
from .metrics import (
    RAW_HEADER,
    RunMetrics,
    SweepSummary,
    aggregate,
    raw_csv_row,
    summary_csv_lines,
)
from .sim_engine import schedule_queries, simulate

OUT_ENV = "MTC_SIM_OUT"
TOPOLOGY_CHOICES = ("unstructured", "ibc", "mtc", "all")
SWEEP_CHOICES = ("traffic", "size")
TRAFFIC_BS = (200.0, 100.0, 60.0, 40.0, 30.0, 25.0, 20.0, 15.0)
SIZE_NS = tuple(range(2000, 20001, 2000))
FORMATION_COST = "FormationCost"


@dataclass(frozen=True)
class SimConfig:
    """Effective settings of one sweep invocation."""

    topology: str = "all"
    sweep: str = "traffic"
    n_peers: int = 5000
    exponent: float = 2.5
    min_cap: int = 14
    max_cap: int = 40
    n_communities: int = 7
    memberships: int = 3
    ttl: int = 3
    k: int = 2
    b: float = 40.0
    m: float = 40.0
    horizon: float = 5000.0
    runs: int = 15
    seed: int = 1
    output_dir: str = ""
    min_gap: float = 1.0
    files_per_entity: float = 6.0
    memories_per_peer: int = 2
    duplicate_fraction: float = 0.75
    multi_position_fraction: float = 0.05
    homophily: float = 0.8
    subgroup_frac: float = 0.05
    min_subgroup: int = 64
    traffic_bs: tuple[float, ...] = TRAFFIC_BS
    size_ns: tuple[int, ...] = SIZE_NS
    charge_formation_overhead: bool = False
    emit_trace: bool = False
    export_pajek: bool = False

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ValidationError(msg)

        need(self.topology in TOPOLOGY_CHOICES,
             f"topology must be one of {TOPOLOGY_CHOICES}, "
             f"got {self.topology!r}")
        need(self.sweep in SWEEP_CHOICES,
             f"sweep must be one of {SWEEP_CHOICES}, got {self.sweep!r}")
        need(self.n_peers >= 2, f"n_peers must be >= 2, got {self.n_peers}")
        need(self.exponent > 2,
             f"exponent must be > 2, got {self.exponent}")
        need(self.min_cap >= 1, f"min_cap must be >= 1, got {self.min_cap}")
        need(self.max_cap >= self.min_cap,
             f"max_cap must be >= min_cap, got {self.max_cap}")
        need(self.n_communities >= 1,
             f"n_communities must be >= 1, got {self.n_communities}")
        need(1 <= self.memberships <= self.n_communities,
             f"memberships must be in [1, n_communities], "
             f"got {self.memberships}")
        need(self.ttl >= 1, f"ttl must be >= 1, got {self.ttl}")
        need(self.k >= 1, f"k must be >= 1, got {self.k}")
        need(self.b > 0, f"b must be > 0, got {self.b}")
        need(self.m >= 0, f"m must be >= 0, got {self.m}")
        need(self.horizon > 0, f"horizon must be > 0, got {self.horizon}")
        need(self.runs >= 1, f"runs must be >= 1, got {self.runs}")
        need(self.seed >= 0, f"seed must be >= 0, got {self.seed}")
        need(self.min_gap > 0, f"min_gap must be > 0, got {self.min_gap}")
        need(self.files_per_entity > 0,
             f"files_per_entity must be > 0, got {self.files_per_entity}")
        need(self.memories_per_peer >= 1,
             f"memories_per_peer must be >= 1, "
             f"got {self.memories_per_peer}")
        need(0 <= self.duplicate_fraction < 1,
             f"duplicate_fraction must be in [0, 1), "
             f"got {self.duplicate_fraction}")
        need(0 <= self.multi_position_fraction < 1,
             f"multi_position_fraction must be in [0, 1), "
             f"got {self.multi_position_fraction}")
        need(0 <= self.homophily <= 1,
             f"homophily must be in [0, 1], got {self.homophily}")
        need(0 < self.subgroup_frac <= 1,
             f"subgroup_frac must be in (0, 1], got {self.subgroup_frac}")
        need(self.min_subgroup >= 2,
             f"min_subgroup must be >= 2, got {self.min_subgroup}")
        need(len(self.traffic_bs) > 0 and all(x > 0 for x in self.traffic_bs),
             f"traffic_bs must be positive values, got {self.traffic_bs}")
        need(len(self.size_ns) > 0 and all(x >= 2 for x in self.size_ns),
             f"size_ns must all be >= 2, got {self.size_ns}")

    def out_dir(self) -> str:
        return (self.output_dir or os.environ.get(OUT_ENV, "")
                or os.path.join(".", "results"))


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _parse_value(name: str, kind, text: str):
    text = text.strip()
    try:
        if kind is bool:
            if text.lower() not in _BOOL_WORDS:
                raise ValueError(text)
            return _BOOL_WORDS[text.lower()]
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        # tuple fields: comma-separated numbers
        items = [x.strip() for x in text.split(",") if x.strip()]
        if name == "size_ns":
            return tuple(int(x) for x in items)
        return tuple(float(x) for x in items)
    except ValueError as exc:
        raise ParseError(f"bad value for {name!r}: {text!r}") from exc


def _field_types() -> dict[str, type]:
    out = {}
    for f in fields(SimConfig):
        t = f.type if isinstance(f.type, type) else None
        if t is None:
            name = str(f.type)
            t = (bool if name.startswith("bool")
                 else int if name.startswith("int")
                 else float if name.startswith("float")
                 else str if name.startswith("str") else tuple)
        out[f.name] = t
    return out


_TYPES = _field_types()


def parse_config(path: str | None = None,
                 overrides: dict | None = None) -> SimConfig:
    """Config from a ``key = value`` file with flag overrides on top."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ParseError(f"cannot read config {path!r}: {exc}") from exc
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value, "
                                 f"got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in _TYPES:
                raise ParseError(f"{path}:{lineno}: unknown setting "
                                 f"{key!r}")
            values[key] = _parse_value(key, _TYPES[key], text)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _TYPES:
            raise ParseError(f"unknown setting {key!r}")
        values[key] = val
    cfg = SimConfig(**values)
    cfg.validate()
    return cfg


def emit_config(cfg: SimConfig) -> str:
    """Textual form accepted back by parse_config unchanged."""
    lines = []
    for f in fields(SimConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def gen_dataset(spec: DatasetSpec, n_peers: int, seed: int,
                out_path: str) -> Dataset:
    """Generate the synthetic corpus and write it as a memory dump."""
    ds = generate_dataset(spec, n_peers, seed=seed)
    dump_memories(ds.memories, out_path)
    return ds


def export_pajek(t: Topology, path: str) -> None:
    """Classic .net file: 1-based quoted vertices, one edge per line."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"*Vertices {t.n_peers}\n")
            for p in range(t.n_peers):
                fh.write(f'{p + 1} "p{p}"\n')
            fh.write("*Edges\n")
            for u, v in sorted(t.edges):
                fh.write(f"{u + 1} {v + 1}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def parse_pajek(path: str) -> tuple[int, set[tuple[int, int]]]:
    """Read back a .net file; returns (n_vertices, 0-based edge set)."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path!r}: {exc}") from exc
    if not lines or not lines[0].lower().startswith("*vertices"):
        raise ParseError(f"{path}: missing *Vertices header")
    n = int(lines[0].split()[1])
    edges: set[tuple[int, int]] = set()
    in_edges = False
    for ln in lines[1:]:
        if ln.lower().startswith("*edges"):
            in_edges = True
            continue
        if ln.startswith("*"):
            in_edges = False
            continue
        if in_edges:
            u, v = (int(x) - 1 for x in ln.split()[:2])
            edges.add((min(u, v), max(u, v)))
    return n, edges


# -- sweep machinery ---------------------------------------------------------

def dataset_spec_for(cfg: SimConfig, n: int) -> DatasetSpec:
    """Dataset shape at one network size.

    Entity count scales with the network so that thread length (files
    per entity) stays constant across the size sweep.
    """
    n_files = round(n * cfg.memories_per_peer
                    * (1 - cfg.duplicate_fraction))
    n_entities = max(cfg.n_communities,
                     round(n_files / cfg.files_per_entity))
    return DatasetSpec(n_entities=n_entities,
                       n_classes=cfg.n_communities,
                       memberships=cfg.memberships,
                       memories_per_peer=cfg.memories_per_peer,
                       duplicate_fraction=cfg.duplicate_fraction,
                       multi_position_fraction=cfg.multi_position_fraction,
                       seed=cfg.seed)


@dataclass
class Bundle:
    """Everything one run shares across its sweep points."""

    n: int
    run: int
    seed: int
    dataset: Dataset
    topologies: dict[str, Topology] = field(default_factory=dict)
    formation_messages: int = 0


def active_kinds(cfg: SimConfig) -> tuple[str, ...]:
    if cfg.topology == "all":
        return ("unstructured", "ibc", "mtc")
    return (cfg.topology,)


def build_bundle(cfg: SimConfig, n: int, run_idx: int) -> Bundle:
    kinds = active_kinds(cfg)
    seed_eff = cfg.seed + run_idx
    ds = generate_dataset(dataset_spec_for(cfg, n), n, seed=seed_eff)
    dist = DegreeCapDistribution(exponent=cfg.exponent,
                                 min_cap=cfg.min_cap, max_cap=cfg.max_cap)
    caps = sample_degree_caps(n, dist, seed_eff)
    bundle = Bundle(n=n, run=run_idx, seed=seed_eff, dataset=ds)
    # both baselines are edge-budget matched to the thread overlay so the
    # three graphs land at near-equal density; the thread topology is
    # therefore built regardless of which kinds are active
    t_mtc = gen_mtc(n, dist, ds, seed_eff, k=cfg.k, caps=caps)
    bundle.formation_messages = t_mtc.overlay.formation_messages
    if "unstructured" in kinds:
        t = gen_unstructured(n, dist, seed_eff, caps=caps,
                             edge_budget=len(t_mtc.edges))
        t.placement = place_random(ds, seed_eff)
        bundle.topologies["unstructured"] = t
    if "ibc" in kinds:
        cc = CommunityConfig(n_communities=cfg.n_communities,
                             memberships_per_peer=cfg.memberships,
                             homophily=cfg.homophily,
                             subgroup_frac=cfg.subgroup_frac,
                             min_subgroup=cfg.min_subgroup)
        bundle.topologies["ibc"] = gen_ibc(
            n, dist, cc, seed_eff, caps=caps, dataset=ds,
            edge_budget=len(t_mtc.edges))
    if "mtc" in kinds:
        bundle.topologies["mtc"] = t_mtc
    return bundle


def run_point(cfg: SimConfig, bundle: Bundle, kind: str, b: float, *,
              trace_path: str | None = None) -> RunMetrics:
    """One (topology, sweep point, run) simulation -> raw counters."""
    sched = schedule_queries(b, cfg.m, cfg.horizon, bundle.seed,
                             min_gap=cfg.min_gap)
    if not sched.times:
        raise NoQueries(f"no queries fit in horizon {cfg.horizon} "
                        f"at b={b}")
    t = bundle.topologies[kind]
    queries = build_workload(bundle.dataset, t.placement,
                             len(sched.times), bundle.seed)
    res = simulate(t, bundle.dataset, queries, times=list(sched.times),
                   ttl=cfg.ttl, trace=trace_path is not None)
    drops = res.drops_by_reason()
    if cfg.charge_formation_overhead and kind == "mtc":
        drops[FORMATION_COST] = bundle.formation_messages
    if trace_path is not None and res.trace is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(res.trace) + "\n")
    return RunMetrics(topology=kind, n_peers=bundle.n, b=b, m=cfg.m,
                      seed=bundle.seed, issued=res.issued,
                      succeeded=res.succeeded, dropped_by_reason=drops,
                      hop_histogram=res.hop_histogram,
                      density=graph_density(t))


def sweep_points(cfg: SimConfig) -> list[tuple[int, float]]:
    if cfg.sweep == "traffic":
        return [(cfg.n_peers, b) for b in cfg.traffic_bs]
    return [(n, cfg.b) for n in cfg.size_ns]


def run_sweep(cfg: SimConfig, log=None) -> int:
    """Execute the configured sweep; returns a process exit code."""
    log = log or (lambda msg: print(msg, file=sys.stderr, flush=True))
    out = cfg.out_dir()
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "effective_config.cfg"), "w",
              encoding="utf-8") as fh:
        fh.write(emit_config(cfg))
    kinds = active_kinds(cfg)
    points = sweep_points(cfg)
    by_point: dict[tuple[int, float], dict[str, list[RunMetrics]]] = {
        pt: {k: [] for k in kinds} for pt in points}
    raw_path = os.path.join(out, "raw_results.csv")
    exported: set[str] = set()

    def iter_cells():
        # traffic sweeps share one bundle per run across every b;
        # size sweeps need a fresh bundle per point anyway
        if cfg.sweep == "traffic":
            for run in range(cfg.runs):
                bundle = build_bundle(cfg, cfg.n_peers, run)
                for pt in points:
                    yield pt, run, bundle
        else:
            for pt in points:
                for run in range(cfg.runs):
                    yield pt, run, build_bundle(cfg, pt[0], run)

    try:
        with open(raw_path, "w", encoding="utf-8") as raw:
            raw.write(RAW_HEADER + "\n")
            raw.flush()
            for (n, b), run, bundle in iter_cells():
                for kind in kinds:
                    ctx = f"topology={kind} n={n} b={b:g} run={run}"
                    trace_path = None
                    if cfg.emit_trace and run == 0:
                        trace_path = os.path.join(
                            out, f"trace_{kind}_n{n}_b{b:g}.log")
                    try:
                        rm = run_point(cfg, bundle, kind, b,
                                       trace_path=trace_path)
                    except MtcSimError as exc:
                        log(f"error: {ctx}: {exc}")
                        return 1
                    by_point[(n, b)][kind].append(rm)
                    raw.write(raw_csv_row(rm) + "\n")
                    raw.flush()
                    if cfg.export_pajek and kind not in exported:
                        export_pajek(bundle.topologies[kind],
                                     os.path.join(out,
                                                  f"topology_{kind}.net"))
                        exported.add(kind)
                log(f"done n={n} b={b:g} run={run + 1}/{cfg.runs}")
    except OSError as exc:
        log(f"error: cannot write results: {exc}")
        return 1

    summaries = []
    for kind in kinds:
        per_point = [aggregate(by_point[pt][kind], point=pt)
                     for pt in points if by_point[pt][kind]]
        summaries.append(SweepSummary(topology=kind, per_point=per_point))
    with open(os.path.join(out, "summary.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(summary_csv_lines(summaries)) + "\n")
    log(f"wrote {raw_path}")
    return 0


# -- entry point -------------------------------------------------------------

def _run_overrides(args: argparse.Namespace) -> dict:
    keys = ("topology", "sweep", "n_peers", "b", "m", "seed", "runs",
            "output_dir", "ttl", "emit_trace", "export_pajek")
    return {k: getattr(args, k, None) for k in keys}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="mtc-sim",
        description="Discrete-event search simulation over memory-thread, "
                    "interest-community and unstructured P2P overlays.")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a sweep")
    run_p.add_argument("--config", help="key = value settings file")
    run_p.add_argument("--topology", choices=TOPOLOGY_CHOICES)
    run_p.add_argument("--sweep", choices=SWEEP_CHOICES)
    run_p.add_argument("--peers", type=int, dest="n_peers")
    run_p.add_argument("--b", type=float)
    run_p.add_argument("--m", type=float)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--runs", type=int)
    run_p.add_argument("--ttl", type=int)
    run_p.add_argument("--out", dest="output_dir")
    run_p.add_argument("--export-pajek", dest="export_pajek",
                       action="store_true", default=None)
    run_p.add_argument("--emit-trace", dest="emit_trace",
                       action="store_true", default=None)

    gen_p = sub.add_parser("gen-dataset",
                           help="write a synthetic memory corpus")
    gen_p.add_argument("--out", required=True)
    gen_p.add_argument("--peers", type=int, default=5000)
    gen_p.add_argument("--seed", type=int, default=1)
    gen_p.add_argument("--entities", type=int, default=175)
    gen_p.add_argument("--classes", type=int, default=7)
    gen_p.add_argument("--memberships", type=int, default=3)
    gen_p.add_argument("--memories-per-peer", type=int, default=3)
    gen_p.add_argument("--duplicate-fraction", type=float, default=0.05)
    gen_p.add_argument("--multi-position-fraction", type=float,
                       default=0.05)

    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config, _run_overrides(args))
            return run_sweep(cfg)
        spec = DatasetSpec(
            n_entities=args.entities, n_classes=args.classes,
            memberships=args.memberships,
            memories_per_peer=args.memories_per_peer,
            duplicate_fraction=args.duplicate_fraction,
            multi_position_fraction=args.multi_position_fraction,
            seed=args.seed)
        ds = gen_dataset(spec, args.peers, args.seed, args.out)
        print(f"wrote {len(ds.memories)} memories for "
              f"{len(ds.entity_files)} entities to {args.out}",
              file=sys.stderr)
        return 0
    except MtcSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
