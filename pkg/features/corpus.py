import json
import asyncio
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

from database.db import Stores
from features.fetcher import CorpusIndex, Fetcher, PageUrl
from features.fragmenter import DEFAULT_FRAGMENT_CAP
from features.wextractor import LiveBackend, OrchestratorConfig, SuccessCode, Wextractor
from utils.helpers import to_minor

logger = logging.getLogger(__name__)

STATUSES = ("exact", "miss", "ambiguous", "unscored", "unavailable")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class CorpusEntry:
    url: PageUrl
    local_path: str
    expected_amount: Decimal = None
    expected_currency: str = None
    category: str = ""
    # False when the entry carries no expectation at all
    scored: bool = True


@dataclass(slots=True)
class EntryResult:
    entry: CorpusEntry
    outcome: object
    status: str

    def to_dict(self) -> dict:
        return {
            "url": self.entry.url.raw,
            "category": self.entry.category,
            "status": self.status,
            "expected_amount": str(self.entry.expected_amount) if self.entry.expected_amount is not None else None,
            "expected_currency": self.entry.expected_currency,
            **{k: v for k, v in self.outcome.to_dict().items() if k != "url"},
        }


@dataclass
class CorpusReport:
    results: list = field(default_factory=list)

    @property
    def counts(self) -> Counter:
        return Counter(r.status for r in self.results)

    def by_category(self) -> dict:
        table = {}
        for r in self.results:
            table.setdefault(r.entry.category or "-", Counter())[r.status] += 1
        return table

    def to_dict(self) -> dict:
        return {
            "total": len(self.results),
            "counts": {status: self.counts[status] for status in STATUSES},
            "categories": {cat: dict(c) for cat, c in sorted(self.by_category().items())},
            "entries": [r.to_dict() for r in self.results],
        }


def load_manifest(path) -> list:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    if not isinstance(data, dict) or not isinstance(data.get("entries", []), list):
        raise ManifestError(f"{path}: expected an object with an 'entries' list")

    entries, seen = [], set()
    for number, item in enumerate(data.get("entries", []), start=1):
        try:
            url = PageUrl.parse(item["url"])
            local_path = item["local_path"]
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}, entry {number}: {e}") from e
        if url.raw in seen:
            raise ManifestError(f"{path}, entry {number}: duplicate url {url}")
        if not (path.parent / local_path).is_file():
            raise ManifestError(f"{path}, entry {number}: missing file {local_path}")
        seen.add(url.raw)

        amount = item.get("expected_amount")
        try:
            amount = Decimal(str(amount)) if amount is not None else None
        except InvalidOperation as e:
            raise ManifestError(f"{path}, entry {number}: bad expected_amount {amount!r}") from e
        entries.append(CorpusEntry(
            url=url,
            local_path=local_path,
            expected_amount=amount,
            expected_currency=item.get("expected_currency"),
            category=item.get("category", ""),
            scored="expected_amount" in item or "expected_currency" in item,
        ))
    return entries


def score(entry: CorpusEntry, outcome) -> str:
    if outcome.code == SuccessCode.UNAVAILABLE:
        return "unavailable"
    if outcome.code == SuccessCode.NOT_FOUND and outcome.candidate_count > 1:
        return "ambiguous"
    if not entry.scored:
        return "unscored"
    if entry.expected_amount is None:
        # the page is expected to yield no price
        return "exact" if outcome.price is None else "miss"
    if outcome.price is None:
        return "miss"
    same_amount = outcome.price.amount_minor == to_minor(entry.expected_amount)
    same_currency = entry.expected_currency in (None, outcome.price.currency_code)
    return "exact" if same_amount and same_currency else "miss"


async def run_corpus(manifest_path, clues: list, rules: list, jobs: int = 1,
                     cap: int = DEFAULT_FRAGMENT_CAP, config: OrchestratorConfig = None) -> CorpusReport:
    """From-scratch extraction of every manifest entry against its local copy."""
    entries = load_manifest(manifest_path)
    config = config or OrchestratorConfig(86400, 604800)
    semaphore = asyncio.Semaphore(max(1, jobs))

    async with Fetcher(corpus=CorpusIndex.from_manifest(manifest_path)) as fetcher:

        async def run_one(entry):
            async with semaphore:
                # every entry starts from empty stores so runs do not depend on order
                stores = Stores()
                backend = LiveBackend(fetcher, clues, rules, stores, cap)
                outcome = await Wextractor(config, stores, backend).extract(entry.url)
                result = EntryResult(entry, outcome, score(entry, outcome))
                logger.debug(f"{entry.url}: {result.status} (code {int(outcome.code)})")
                return result

        results = await asyncio.gather(*(run_one(e) for e in entries))

    report = CorpusReport(list(results))
    logger.info(f"Corpus run over {len(entries)} pages: {dict(report.counts)}")
    return report


def format_corpus_report(report: CorpusReport) -> str:
    counts = report.counts
    lines = [f"Pages: {len(report.results)}  " + "  ".join(f"{s}: {counts[s]}" for s in STATUSES), ""]
    for r in report.results:
        price = f"{r.outcome.price.amount} {r.outcome.price.currency_code}" if r.outcome.price else "-"
        trace = " > ".join(f"{a.tier}:{a.result}" for a in r.outcome.tier_trace)
        lines.append(f"[{r.status:>11}] code {int(r.outcome.code):>2}  {price:<14} {r.entry.category:<20} {trace}")
    return "\n".join(lines)
