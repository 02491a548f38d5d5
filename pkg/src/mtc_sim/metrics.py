"""Run counters, cross-run aggregation, and sweep stability measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import MixedPoints, NoQueries, TooFewPoints

DROP_TTL = "TtlExpired"
DROP_DUP = "DuplicateReceived"
DROP_RESP = "DropResponse"
DROP_REASONS = (DROP_TTL, DROP_DUP, DROP_RESP)

RAW_HEADER = ("topology,n_peers,b,m,seed,issued,succeeded,success_pct,"
              "dropped_ttl,dropped_dup,dropped_resp,overhead,mean_hops,"
              "density")


@dataclass
class RunMetrics:
    """Counters for one simulation run at one sweep point."""

    topology: str
    n_peers: int
    b: float
    m: float
    seed: int
    issued: int
    succeeded: int
    dropped_by_reason: dict[str, int] = field(default_factory=dict)
    hop_histogram: dict[int, int] = field(default_factory=dict)
    density: float = 0.0

    @property
    def sweep_point(self) -> tuple[int, float]:
        return (self.n_peers, self.b)


def success_rate(m: RunMetrics) -> float:
    """Successful queries as a percentage of issued ones."""
    if m.issued <= 0:
        raise NoQueries("run issued no queries")
    return 100.0 * m.succeeded / m.issued


def overhead(m: RunMetrics) -> int:
    """Dropped messages, all reasons combined."""
    return sum(m.dropped_by_reason.values())


def mean_hops(m: RunMetrics) -> float:
    """Average hop count over successful queries (0 when none)."""
    total = sum(m.hop_histogram.values())
    if total == 0:
        return 0.0
    return sum(h * c for h, c in m.hop_histogram.items()) / total


@dataclass
class PointSummary:
    point: tuple[int, float]
    runs: int
    mean_success: float
    mean_overhead: float
    mean_hops: float
    run_sd: float                  # per-run scatter at this point
    mean_overhead_per_query: float


def aggregate(runs: list[RunMetrics],
              point: tuple[int, float] | None = None) -> PointSummary:
    """Arithmetic means over the runs of one sweep point."""
    if not runs:
        raise NoQueries("nothing to aggregate")
    pt = point or runs[0].sweep_point
    if any(r.sweep_point != pt for r in runs):
        raise MixedPoints(f"runs span multiple sweep points, expected {pt}")
    rates = [success_rate(r) for r in runs]
    ovs = [overhead(r) for r in runs]
    mean_rate = sum(rates) / len(rates)
    opq = [overhead(r) / r.issued for r in runs]
    return PointSummary(
        point=pt, runs=len(runs), mean_success=mean_rate,
        mean_overhead=sum(ovs) / len(ovs),
        mean_hops=sum(mean_hops(r) for r in runs) / len(runs),
        run_sd=_population_sd(rates),
        mean_overhead_per_query=sum(opq) / len(opq))


@dataclass
class SweepSummary:
    topology: str
    per_point: list[PointSummary]

    def success_sd(self) -> float:
        return stability_sd(self)


def _population_sd(values: list[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def stability_sd(summary: SweepSummary) -> float:
    """Population SD of the per-point mean success rates.

    The spread of the mean curve across sweep points; a flat curve gives
    a small value and signals a structure that keeps its performance as
    conditions change.
    """
    points = summary.per_point
    if len(points) < 2:
        raise TooFewPoints("stability needs at least 2 sweep points")
    return _population_sd([p.mean_success for p in points])


def _num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return f"{x:g}"


def raw_csv_row(m: RunMetrics) -> str:
    d = m.dropped_by_reason
    return (f"{m.topology},{m.n_peers},{_num(m.b)},{_num(m.m)},{m.seed},"
            f"{m.issued},{m.succeeded},{success_rate(m):.4f},"
            f"{d.get(DROP_TTL, 0)},{d.get(DROP_DUP, 0)},"
            f"{d.get(DROP_RESP, 0)},{overhead(m)},{mean_hops(m):.4f},"
            f"{m.density:.8f}")


def summary_csv_lines(summaries: list[SweepSummary]) -> list[str]:
    """Per-point mean rows plus one SD footer row per topology."""
    lines = ["topology,n_peers,b,runs,mean_success_pct,mean_overhead,"
             "mean_overhead_per_query,mean_hops,run_sd"]
    for s in summaries:
        for p in s.per_point:
            n, b = p.point
            lines.append(
                f"{s.topology},{n},{_num(b)},{p.runs},"
                f"{p.mean_success:.4f},{p.mean_overhead:.2f},"
                f"{p.mean_overhead_per_query:.4f},{p.mean_hops:.4f},"
                f"{p.run_sd:.4f}")
    for s in summaries:
        if len(s.per_point) >= 2:
            lines.append(f"{s.topology},sd,,,{stability_sd(s):.6f},,,,")
    return lines
