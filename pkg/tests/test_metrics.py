"""Metric helpers: rates, aggregation, stability, CSV shapes."""

import numpy as np
import pytest

from mtc_sim.errors import MixedPoints, NoQueries, TooFewPoints
from mtc_sim.metrics import (
    DROP_DUP,
    DROP_RESP,
    DROP_TTL,
    RAW_HEADER,
    PointSummary,
    RunMetrics,
    SweepSummary,
    aggregate,
    mean_hops,
    overhead,
    raw_csv_row,
    stability_sd,
    success_rate,
    summary_csv_lines,
)


def rm(issued=50, succeeded=40, ttl=0, dup=0, resp=0, hops=None, b=40.0,
       n=2000, seed=1):
    return RunMetrics(topology="unstructured", n_peers=n, b=b, m=40.0,
                      seed=seed, issued=issued, succeeded=succeeded,
                      dropped_by_reason={DROP_TTL: ttl, DROP_DUP: dup,
                                         DROP_RESP: resp},
                      hop_histogram=dict(hops or {}), density=0.005)


def test_success_rate_is_percentage():
    assert success_rate(rm(50, 40)) == 80.0
    assert success_rate(rm(3, 3)) == 100.0


def test_success_rate_requires_queries():
    with pytest.raises(NoQueries):
        success_rate(rm(0, 0))


def test_overhead_sums_all_drop_reasons():
    assert overhead(rm(ttl=10, dup=5, resp=2)) == 17
    assert overhead(rm()) == 0


def test_mean_hops_weighted_by_histogram():
    assert mean_hops(rm(hops={1: 2, 3: 2})) == 2.0
    assert mean_hops(rm(hops={})) == 0.0


def test_aggregate_averages_and_scatter():
    runs = [rm(100, 94, ttl=10, seed=1), rm(100, 96, ttl=20, seed=2)]
    s = aggregate(runs)
    assert s.point == (2000, 40.0)
    assert s.mean_success == 95.0
    assert s.mean_overhead == 15.0
    assert s.run_sd == 1.0                 # population SD of {94, 96}
    assert s.mean_overhead_per_query == pytest.approx(0.15)


def test_aggregate_rejects_mixed_points():
    with pytest.raises(MixedPoints):
        aggregate([rm(b=40.0), rm(b=60.0)])
    with pytest.raises(MixedPoints):
        aggregate([rm(n=2000), rm(n=4000)])
    with pytest.raises(NoQueries):
        aggregate([])


def test_stability_sd_of_two_point_sweep():
    def pt(b, mean):
        return PointSummary(point=(2000, b), runs=15, mean_success=mean,
                            mean_overhead=0, mean_hops=0, run_sd=0,
                            mean_overhead_per_query=0)
    s = SweepSummary("mtc", [pt(40, 94.0), pt(60, 96.0)])
    assert stability_sd(s) == 1.0
    assert s.success_sd() == 1.0


def test_stability_sd_matches_numpy_population_sd():
    rng = np.random.default_rng(0)
    for _ in range(25):
        vals = rng.uniform(50, 100, size=rng.integers(2, 9))
        s = SweepSummary("u", [
            PointSummary((2000, float(i)), 15, float(v), 0, 0, 0, 0)
            for i, v in enumerate(vals)])
        assert stability_sd(s) == pytest.approx(np.std(vals), rel=1e-12)


def test_stability_needs_two_points():
    s = SweepSummary("u", [PointSummary((2000, 40.0), 15, 90, 0, 0, 0, 0)])
    with pytest.raises(TooFewPoints):
        stability_sd(s)


def test_raw_header_field_order():
    assert RAW_HEADER == ("topology,n_peers,b,m,seed,issued,succeeded,"
                          "success_pct,dropped_ttl,dropped_dup,"
                          "dropped_resp,overhead,mean_hops,density")


def test_raw_csv_row_formatting():
    m = rm(issued=50, succeeded=40, ttl=10, dup=5, resp=2,
           hops={1: 10, 2: 30}, seed=7)
    row = raw_csv_row(m)
    assert row == ("unstructured,2000,40,40,7,50,40,80.0000,"
                   "10,5,2,17,1.7500,0.00500000")
    assert len(row.split(",")) == len(RAW_HEADER.split(","))


def test_summary_lines_include_sd_footer():
    def pt(b, mean):
        return PointSummary(point=(2000, b), runs=15, mean_success=mean,
                            mean_overhead=12.5, mean_hops=2.0, run_sd=0.5,
                            mean_overhead_per_query=0.25)
    s = SweepSummary("mtc", [pt(40.0, 94.0), pt(60.0, 96.0)])
    lines = summary_csv_lines([s])
    assert lines[0].startswith("topology,n_peers,b,runs,mean_success_pct")
    assert lines[1] == "mtc,2000,40,15,94.0000,12.50,0.2500,2.0000,0.5000"
    assert lines[-1] == "mtc,sd,,,1.000000,,,,"
