import time
import asyncio
import logging
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from enum import IntEnum

from database.db import PatternRecord, SocialRecord, Stores
from features.fetcher import Fetcher, PageUrl, Unavailable
from features.fragmenter import DEFAULT_FRAGMENT_CAP, extract_fragments
from features.patterns import apply_pattern, derive_pattern
from features.rules import Selection, select_price

logger = logging.getLogger(__name__)

REFRESH_MODES = ("refresh", "literal")


class SuccessCode(IntEnum):
    UNAVAILABLE = -1
    NOT_FOUND = 0
    FROM_SCRATCH = 1
    POINTING_PATTERN = 2
    SOCIAL = 3


@dataclass(frozen=True, slots=True)
class TierAttempt:
    tier: str
    result: str
    reason: str = ""


@dataclass(slots=True)
class ExtractionOutcome:
    code: SuccessCode
    price: object
    url: PageUrl
    decided_at: float
    tier_trace: list = field(default_factory=list)
    candidate_count: int = 0
    entity: str = ""

    def to_dict(self) -> dict:
        return {
            "code": int(self.code),
            "amount": self.price.amount if self.price else None,
            "currency": self.price.currency_code if self.price else None,
            "url": self.url.raw,
            "entity": self.entity,
            "decided_at": self.decided_at,
            "candidate_count": self.candidate_count,
            "tier_trace": [{"tier": a.tier, "result": a.result, "reason": a.reason} for a in self.tier_trace],
        }


@dataclass(frozen=True, slots=True)
class OrchestratorConfig:
    social_validity: float
    pattern_validity: float
    refresh_mode: str = "refresh"

    def __post_init__(self):
        if not 0 < self.social_validity < self.pattern_validity:
            raise ValueError(f"need 0 < social validity ({self.social_validity}) "
                             f"< pattern validity ({self.pattern_validity})")
        if self.refresh_mode not in REFRESH_MODES:
            raise ValueError(f"unknown refresh mode {self.refresh_mode!r}, expected one of {REFRESH_MODES}")

    @property
    def refreshes(self) -> bool:
        return self.refresh_mode == "refresh"

    @classmethod
    def from_config(cls, config, refresh_mode: str = None) -> "OrchestratorConfig":
        return cls(config.SOCIAL_VALIDITY, config.PATTERN_VALIDITY, refresh_mode or config.REFRESH_MODE)


class PriceBackend:
    """What the orchestrator needs from the outside world. Subclasses fill in the I/O."""

    async def is_available(self, url: PageUrl) -> bool:
        raise NotImplementedError

    async def fetch_raw_html(self, url: PageUrl):
        raise NotImplementedError

    def apply_pattern(self, page, pattern):
        raise NotImplementedError

    def from_scratch(self, page, url: PageUrl) -> Selection:
        raise NotImplementedError

    def derive_pattern(self, selection: Selection, page, url: PageUrl, now: float):
        raise NotImplementedError

    def forget(self, url: PageUrl):
        pass


class LiveBackend(PriceBackend):
    """Fetcher + fragmenter + rule engine + pattern engine."""

    def __init__(self, fetcher: Fetcher, clues: list, rules: list, stores: Stores,
                 cap: int = DEFAULT_FRAGMENT_CAP, narrow_digits: bool = False):
        self.fetcher = fetcher
        self.clues = clues
        self.rules = rules
        self.stores = stores
        self.cap = cap
        self.narrow_digits = narrow_digits

    async def is_available(self, url):
        return await self.fetcher.is_available(url)

    async def fetch_raw_html(self, url):
        return await self.fetcher.fetch_raw_html(url)

    def apply_pattern(self, page, pattern):
        return apply_pattern(page, pattern)

    def from_scratch(self, page, url):
        self.stores.fragments.put(url, extract_fragments(page, self.clues, self.cap))
        return select_price(self.stores.fragments.get(url), self.rules)

    def derive_pattern(self, selection, page, url, now):
        return derive_pattern(selection.price.source_fragment, selection.price, url, now,
                              page=page, narrow_digits=self.narrow_digits)

    def forget(self, url):
        self.fetcher.forget(url)
        self.stores.fragments.forget(url)


class Wextractor:
    """Tiered price extraction: social cache, then pointing pattern, then from scratch."""

    def __init__(self, config: OrchestratorConfig, stores: Stores, backend: PriceBackend):
        self.config = config
        self.stores = stores
        self.backend = backend
        self._locks = {}

    @asynccontextmanager
    async def _serialized(self, url: PageUrl):
        # [lock, callers holding or waiting]; dropped when the last caller leaves
        entry = self._locks.setdefault(url.raw, [asyncio.Lock(), 0])
        entry[1] += 1
        try:
            async with entry[0]:
                yield
        finally:
            entry[1] -= 1
            if entry[1] == 0:
                del self._locks[url.raw]

    async def extract(self, url: PageUrl, entity: str = None, now: float = None) -> ExtractionOutcome:
        async with self._serialized(url):
            try:
                return await self._extract(url, entity, time.time() if now is None else now)
            finally:
                self.backend.forget(url)

    async def _extract(self, url, entity, now) -> ExtractionOutcome:
        trace = []

        if not await self.backend.is_available(url):
            logger.info(f"code -1 for {url}: page unavailable")
            return ExtractionOutcome(SuccessCode.UNAVAILABLE, None, url, now, trace, entity=entity or "")

        social = self.stores.social.get(url, now, self.config.social_validity)
        if social is not None:
            trace.append(TierAttempt("social", "hit", f"observed at {social.observed_at}"))
            self._refresh(url, entity or social.entity, social.price, now)
            return self._done(SuccessCode.SOCIAL, social.price, url, now, trace, entity or social.entity)
        trace.append(TierAttempt("social", "miss", self._why_missing(self.stores.social.newest(url),
                                                                    self.config.social_validity)))

        page = None
        record = self.stores.patterns.get(url, now, self.config.pattern_validity)
        if record is not None:
            try:
                page = await self.backend.fetch_raw_html(url)
            except Unavailable as e:
                logger.warning(f"{url} went away between probe and fetch: {e}")
                return ExtractionOutcome(SuccessCode.UNAVAILABLE, None, url, now, trace, entity=entity or "")
            price = self.backend.apply_pattern(page, record.pattern)
            if price is not None:
                trace.append(TierAttempt("pattern", "hit", f"created at {record.pattern.created_at}"))
                if self.config.refreshes:
                    previous = self.stores.social.newest(url)
                    entity = entity or (previous.entity if previous else "")
                    self._refresh(url, entity, price, now)
                return self._done(SuccessCode.POINTING_PATTERN, price, url, now, trace, entity or "")
            trace.append(TierAttempt("pattern", "miss", "pattern no longer matches"))
        else:
            trace.append(TierAttempt("pattern", "miss", self._why_missing(self.stores.patterns.newest(url),
                                                                         self.config.pattern_validity)))

        if page is None:
            try:
                page = await self.backend.fetch_raw_html(url)
            except Unavailable as e:
                logger.warning(f"{url} went away between probe and fetch: {e}")
                return ExtractionOutcome(SuccessCode.UNAVAILABLE, None, url, now, trace, entity=entity or "")

        selection = self.backend.from_scratch(page, url)
        if not selection.found:
            reason = "ambiguous" if selection.ambiguous else "no candidate"
            trace.append(TierAttempt("scratch", "miss", f"{reason} after {selection.stage}"))
            logger.info(f"code 0 for {url}: {selection.candidate_count} distinct candidates")
            return ExtractionOutcome(SuccessCode.NOT_FOUND, None, url, now, trace, selection.candidate_count,
                                     entity or "")

        trace.append(TierAttempt("scratch", "hit", f"unique after {selection.stage}"))
        pattern = self.backend.derive_pattern(selection, page, url, now)
        self.stores.patterns.put(PatternRecord(url, pattern, now))
        self.stores.social.put(SocialRecord(entity or "", url, _bare(selection.price), now))
        return self._done(SuccessCode.FROM_SCRATCH, selection.price, url, now, trace, entity or "", 1)

    def _refresh(self, url, entity, price, now):
        if not self.config.refreshes:
            return
        self.stores.social.put(SocialRecord(entity, url, _bare(price), now))
        self.stores.patterns.confirm(url, now)

    @staticmethod
    def _why_missing(record, validity) -> str:
        if record is None:
            return "no record"
        return f"stale (validity {validity})"

    @staticmethod
    def _done(code, price, url, now, trace, entity, candidates=1) -> ExtractionOutcome:
        logger.info(f"code {int(code)} for {url}: {price.amount} {price.currency_code}")
        return ExtractionOutcome(code, _bare(price), url, now, trace, candidates, entity)


def _bare(price):
    # cached prices do not carry the fragment they came from
    if price is None or price.source_fragment is None:
        return price
    return type(price)(price.amount_minor, price.currency_code)
