import json
from fractions import Fraction

import numpy as np
import pytest

from features.simulator import (SimConfig, assign_success, format_report, gen_zipf, report, run_sim, sweep,
                                uplift_analysis, write_records, zipf_pages)

P = 579 / 735


def harmonic(n):
    return sum(1 / k for k in range(1, n + 1))


def test_zipf_frequencies():
    pages = zipf_pages(735, 200_000, seed=1)
    assert pages.min() >= 1 and pages.max() <= 735
    first = np.count_nonzero(pages == 1) / len(pages)
    assert first == pytest.approx(1 / harmonic(735), rel=0.03)
    assert np.count_nonzero(pages == 2) / np.count_nonzero(pages == 1) == pytest.approx(0.5, rel=0.05)


def test_gen_zipf_ticks():
    events = gen_zipf(10, 5, seed=3)
    assert [e.time for e in events] == [1, 2, 3, 4, 5]
    assert all(1 <= e.id_page <= 10 for e in events)


def test_assign_success():
    profiles = assign_success(735, Fraction(579, 735), seed=2)
    assert [p.id_page for p in profiles] == list(range(1, 736))
    assert sum(p.scratch_succeeds for p in profiles) == pytest.approx(579, abs=60)

    exact = assign_success(735, Fraction(579, 735), seed=2, exact_success_count=579)
    assert sum(p.scratch_succeeds for p in exact) == 579


def test_same_seed_same_run():
    config = SimConfig(n_pages=50, n_requests=2_000, seed=9)
    assert run_sim(config).records == run_sim(config).records
    assert run_sim(config).records != run_sim(SimConfig(n_pages=50, n_requests=2_000, seed=10)).records


def test_default_rate_is_near_the_page_success_ratio():
    rates = [r.success_rate for r in sweep(SimConfig(), range(120))]
    assert np.mean(rates) == pytest.approx(P, abs=0.02)
    assert max(rates[:40]) > 0.84


def test_rate_is_the_demand_share_of_succeeding_pages():
    result = run_sim(SimConfig(n_pages=100, n_requests=5_000, seed=4))
    ok = {p.id_page for p in result.profiles if p.scratch_succeeds}
    assert result.successes == sum(1 for r in result.records if r.id_page in ok)
    assert all(r.success_code == 0 for r in result.records if r.id_page not in ok)


def test_refresh_shape_of_the_busiest_page():
    result = next(r for r in (run_sim(SimConfig(seed=s)) for s in range(50)) if r.profiles[0].scratch_succeeds)
    counts = result.per_page[1]
    total = result.requests_to(1)
    assert counts[1] / total == pytest.approx(0.058, abs=0.02)
    assert counts[2] / total == pytest.approx(0.201, abs=0.03)
    assert counts[3] / total == pytest.approx(0.741, abs=0.03)


def test_literal_mode_leans_on_the_pattern_tier():
    refresh = run_sim(SimConfig(n_requests=20_000, seed=5, refresh_mode="refresh"))
    literal = run_sim(SimConfig(n_requests=20_000, seed=5, refresh_mode="literal"))
    # same demand and same page outcomes, only the tier mix differs
    assert refresh.successes == literal.successes
    assert literal.totals[1] > refresh.totals[1]
    assert literal.totals[3] < refresh.totals[3]


def test_single_page_literal_cycle():
    result = run_sim(SimConfig(n_pages=1, n_requests=40, p_success=1, refresh_mode="literal"))
    codes = [r.success_code for r in result.records]
    assert codes[:20] == [1] + [3] * 9 + [2] * 10
    assert codes[20] == 1


def test_page_that_never_succeeds():
    result = run_sim(SimConfig(n_pages=1, n_requests=30, p_success=0))
    assert result.totals == {0: 30}
    assert result.success_rate == 0.0


def test_no_requests():
    result = run_sim(SimConfig(n_requests=0))
    assert result.records == []
    assert result.success_rate == 0.0


@pytest.mark.parametrize("kwargs", [
    {"n_pages": 0},
    {"n_requests": -1},
    {"p_success": Fraction(3, 2)},
    {"social_validity": 20, "pattern_validity": 10},
    {"refresh_mode": "lazy"},
    {"exact_success_count": 736},
])
def test_bad_configs(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


@pytest.mark.parametrize("seed", range(10))
def test_uplift_identity(seed):
    result = run_sim(SimConfig(n_requests=10_000, seed=seed))
    uplift = uplift_analysis(result, 0.1)
    failed = set(uplift.failed_pages)
    oracle = sum(1 for r in result.records if r.id_page in failed and r.success_code <= 0)

    assert len(uplift.top_pages) == 74
    assert uplift.reclassified_requests == oracle
    assert uplift.recomputed_successes == result.successes + oracle
    assert uplift.projected_rate == pytest.approx(uplift.recomputed_rate)
    assert uplift.recomputed_rate >= uplift.observed_rate


def test_uplift_ranks_by_demand():
    result = run_sim(SimConfig(n_pages=20, n_requests=3_000, seed=1))
    top = uplift_analysis(result, 0.25).top_pages
    demand = [result.requests_to(p) for p in top]
    assert len(top) == 5
    assert demand == sorted(demand, reverse=True)
    assert uplift_analysis(result, 0).top_pages == ()


def test_parallel_sweep_matches_serial():
    config = SimConfig(n_pages=30, n_requests=1_000)
    serial = sweep(config, [0, 1, 2])
    parallel = sweep(config, [0, 1, 2], jobs=2)
    assert [r.records for r in serial] == [r.records for r in parallel]
    assert [r.config.seed for r in parallel] == [0, 1, 2]


def test_report_and_records(tmp_path):
    result = run_sim(SimConfig(n_pages=20, n_requests=500, seed=2))
    summary = report(result, top=3)
    assert summary["requests"] == 500
    assert summary["config"]["p_success"] == "193/245"
    assert sum(summary["histogram"].values()) == 500
    assert len(summary["pages"]) == 3
    assert summary["pages"][0]["requests"] >= summary["pages"][1]["requests"]
    json.dumps(summary)
    assert "Successes:" in format_report(summary)

    path = tmp_path / "records.jsonl"
    write_records(result, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 500
    assert json.loads(lines[0]) == {"id_page": result.records[0].id_page,
                                    "success": result.records[0].success_code, "time": 1}
