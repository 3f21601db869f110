import json
import math
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from features.wextractor import OrchestratorConfig, SuccessCode
from utils.helpers import is_fresh

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SimConfig:
    n_pages: int = 735
    n_requests: int = 50_000
    p_success: Fraction = Fraction(579, 735)
    social_validity: int = 10
    pattern_validity: int = 20
    seed: int = 0
    refresh_mode: str = "refresh"
    exact_success_count: int = None

    def __post_init__(self):
        if self.n_pages < 1:
            raise ValueError("n_pages must be at least 1")
        if self.n_requests < 0:
            raise ValueError("n_requests must not be negative")
        if not 0 <= self.p_success <= 1:
            raise ValueError("p_success must lie in [0, 1]")
        if self.exact_success_count is not None and not 0 <= self.exact_success_count <= self.n_pages:
            raise ValueError(f"exact_success_count must lie in [0, {self.n_pages}]")
        # same freshness rules as live extraction
        OrchestratorConfig(self.social_validity, self.pattern_validity, self.refresh_mode)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["p_success"] = str(self.p_success)
        return data


@dataclass(frozen=True, slots=True)
class PageProfile:
    id_page: int
    scratch_succeeds: bool


@dataclass(frozen=True, slots=True)
class RequestEvent:
    time: int
    id_page: int


@dataclass(frozen=True, slots=True)
class SimRecord:
    id_page: int
    success_code: int
    time: int


@dataclass
class SimResult:
    config: SimConfig
    profiles: list
    records: list
    totals: Counter = field(init=False)
    per_page: dict = field(init=False)

    def __post_init__(self):
        self.totals = Counter(r.success_code for r in self.records)
        self.per_page = {}
        for r in self.records:
            self.per_page.setdefault(r.id_page, Counter())[r.success_code] += 1

    @property
    def successes(self) -> int:
        return sum(n for code, n in self.totals.items() if code > 0)

    @property
    def success_rate(self) -> float:
        return self.successes / len(self.records) if self.records else 0.0

    def requests_to(self, id_page: int) -> int:
        return sum(self.per_page.get(id_page, Counter()).values())


def _rng(seed):
    return np.random.default_rng(seed)


def zipf_pages(n_pages: int, n_requests: int, seed) -> np.ndarray:
    """Page ids 1..n_pages drawn with probability (1/k)/H(n_pages), by inverse CDF."""
    if n_pages < 1:
        raise ValueError("n_pages must be at least 1")
    cdf = np.cumsum(1.0 / np.arange(1, n_pages + 1))
    cdf /= cdf[-1]
    draws = _rng(seed).random(n_requests)
    return np.minimum(np.searchsorted(cdf, draws, side="right"), n_pages - 1) + 1


def gen_zipf(n_pages: int, n_requests: int, seed) -> list:
    pages = zipf_pages(n_pages, n_requests, seed)
    return [RequestEvent(time, page) for time, page in enumerate(pages.tolist(), start=1)]


def assign_success(n_pages: int, p_success, seed, exact_success_count: int = None) -> list:
    rng = _rng(seed)
    if exact_success_count is not None:
        chosen = set((rng.choice(n_pages, size=exact_success_count, replace=False) + 1).tolist())
        flags = [k in chosen for k in range(1, n_pages + 1)]
    else:
        flags = (rng.random(n_pages) < float(p_success)).tolist()
    return [PageProfile(k, bool(ok)) for k, ok in enumerate(flags, start=1)]


def run_sim(config: SimConfig) -> SimResult:
    """One request per tick. Each request walks the social, pattern and from-scratch tiers
    against in-memory timestamps, with the page's fixed from-scratch outcome."""
    demand_seed, assignment_seed = np.random.SeedSequence(config.seed).spawn(2)
    profiles = assign_success(config.n_pages, config.p_success, assignment_seed, config.exact_success_count)
    pages = zipf_pages(config.n_pages, config.n_requests, demand_seed).tolist()

    succeeds = [False] + [p.scratch_succeeds for p in profiles]
    social_at = [None] * (config.n_pages + 1)
    confirmed_at = [None] * (config.n_pages + 1)
    refresh = config.refresh_mode == "refresh"
    sv, pv = config.social_validity, config.pattern_validity
    social, pattern, scratch, missing = (int(c) for c in (SuccessCode.SOCIAL, SuccessCode.POINTING_PATTERN,
                                                          SuccessCode.FROM_SCRATCH, SuccessCode.NOT_FOUND))

    records = []
    for now, page in enumerate(pages, start=1):
        if is_fresh(social_at[page], now, sv):
            code = social
        elif is_fresh(confirmed_at[page], now, pv):
            code = pattern
        elif succeeds[page]:
            code = scratch
        else:
            code = missing

        if code == scratch or (refresh and code > scratch):
            social_at[page] = confirmed_at[page] = now
        records.append(SimRecord(page, code, now))

    result = SimResult(config, profiles, records)
    logger.info(f"seed {config.seed} ({config.refresh_mode}): {result.successes}/{config.n_requests} "
                f"successes ({result.success_rate:.2%})")
    return result


def sweep(config: SimConfig, seeds: list, jobs: int = 1) -> list:
    configs = [replace(config, seed=s) for s in seeds]
    if jobs <= 1 or len(configs) <= 1:
        return [run_sim(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_sim, configs))


@dataclass(frozen=True, slots=True)
class Uplift:
    top_fraction: float
    top_pages: tuple
    failed_pages: tuple
    reclassified_requests: int
    recomputed_successes: int
    observed_rate: float
    recomputed_rate: float
    projected_rate: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["top_pages"] = len(self.top_pages)
        data["failed_pages"] = list(self.failed_pages)
        return data


def uplift_analysis(result: SimResult, top_fraction: float) -> Uplift:
    """Success rate if the failing pages among the most requested had a hand-written pattern."""
    n = len(result.records)
    k = math.ceil(Fraction(top_fraction).limit_denominator(10**6) * result.config.n_pages)
    by_demand = sorted(range(1, result.config.n_pages + 1), key=lambda p: (-result.requests_to(p), p))
    top = tuple(by_demand[:k])
    failing = {p.id_page for p in result.profiles if not p.scratch_succeeds}
    failed = tuple(p for p in top if p in failing)

    failed_set = set(failed)
    reclassified = sum(1 for r in result.records if r.id_page in failed_set and r.success_code <= 0)
    recomputed = sum(1 for r in result.records if r.success_code > 0 or r.id_page in failed_set)
    observed = result.success_rate
    return Uplift(
        top_fraction=top_fraction,
        top_pages=top,
        failed_pages=failed,
        reclassified_requests=reclassified,
        recomputed_successes=recomputed,
        observed_rate=observed,
        recomputed_rate=recomputed / n if n else 0.0,
        projected_rate=observed + reclassified / n if n else 0.0,
    )


def report(result: SimResult, top: int = 10) -> dict:
    rows = []
    for id_page in sorted(result.per_page, key=lambda p: (-result.requests_to(p), p))[:top]:
        counts = result.per_page[id_page]
        rows.append({
            "id_page": id_page,
            "requests": result.requests_to(id_page),
            "scratch_succeeds": result.profiles[id_page - 1].scratch_succeeds if result.profiles else None,
            "success_0": counts[0],
            "success_1": counts[1],
            "success_2": counts[2],
            "success_3": counts[3],
        })
    return {
        "config": result.config.to_dict(),
        "refresh_mode": result.config.refresh_mode,
        "requests": len(result.records),
        "successes": result.successes,
        "success_rate": result.success_rate,
        "histogram": {code: n for code, n in sorted(result.totals.items()) if n},
        "pages": rows,
    }


def format_report(summary: dict) -> str:
    lines = [
        f"Mode: {summary['refresh_mode']}  seed: {summary['config']['seed']}",
        f"Successes: {summary['successes']} of {summary['requests']} ({summary['success_rate']:.2%})",
        "Codes: " + ", ".join(f"{code}={n}" for code, n in summary["histogram"].items()),
        "",
        f"{'page':>6} {'requests':>9} {'ok':>3} {'code 1':>7} {'code 2':>7} {'code 3':>7}",
    ]
    for row in summary["pages"]:
        ok = "yes" if row["scratch_succeeds"] else "no"
        lines.append(f"{row['id_page']:>6} {row['requests']:>9} {ok:>3} "
                     f"{row['success_1']:>7} {row['success_2']:>7} {row['success_3']:>7}")
    return "\n".join(lines)


def write_records(result: SimResult, path):
    with open(path, "w", encoding="utf-8") as f:
        for r in result.records:
            f.write(json.dumps({"id_page": r.id_page, "success": r.success_code, "time": r.time}) + "\n")
