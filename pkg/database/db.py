import os
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from features.fetcher import PageUrl
from features.patterns import PointingPattern
from features.rules import CandidatePrice
from utils.helpers import entity_matches, is_fresh, site_matches

logger = logging.getLogger(__name__)

SOCIAL_FILE = "social.jsonl"
PATTERNS_FILE = "patterns.jsonl"


class StoreError(Exception):
    """A store file could not be read or written."""


@dataclass(frozen=True, slots=True)
class SocialRecord:
    entity: str
    url: PageUrl
    price: CandidatePrice
    observed_at: float

    def to_dict(self) -> dict:
        return {
            "entity": self.entity,
            "url": self.url.raw,
            "amount_minor": self.price.amount_minor,
            "currency": self.price.currency_code,
            "observed_at": self.observed_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SocialRecord":
        return cls(
            entity=data.get("entity", ""),
            url=PageUrl.parse(data["url"]),
            price=CandidatePrice(int(data["amount_minor"]), data["currency"]),
            observed_at=data["observed_at"],
        )


@dataclass(frozen=True, slots=True)
class PatternRecord:
    url: PageUrl
    pattern: PointingPattern
    confirmed_at: float

    def to_dict(self) -> dict:
        return {
            "url": self.url.raw,
            "regex": self.pattern.regex_source,
            "currency": self.pattern.currency_code,
            "created_at": self.pattern.created_at,
            "confirmed_at": self.confirmed_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatternRecord":
        url = PageUrl.parse(data["url"])
        pattern = PointingPattern(url, data["regex"], data["currency"], data["created_at"])
        return cls(url=url, pattern=pattern, confirmed_at=data.get("confirmed_at", data["created_at"]))


class JsonlStore:
    """Append-only JSON Lines file, last record per key wins. In memory only when `directory` is None."""

    filename = None
    record_type = None

    def __init__(self, directory=None):
        self.path = Path(directory) / self.filename if directory is not None else None
        self._records = {}
        self._lock = threading.Lock()
        if self.path is not None:
            self._load()

    def _key(self, record):
        raise NotImplementedError

    def _load(self):
        if not self.path.exists():
            return
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise StoreError(f"Cannot read {self.path}: {e}") from e
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = self.record_type.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as e:
                logger.warning(f"Skipping bad record at {self.path}:{number}: {e}")
                continue
            self._records[self._key(record)] = record
        logger.debug(f"Loaded {len(self._records)} records from {self.path}")

    def _append(self, record):
        if self.path is None:
            return
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                f.flush()
        except OSError as e:
            raise StoreError(f"Cannot write {self.path}: {e}") from e

    def put(self, record):
        with self._lock:
            self._append(record)
            self._records[self._key(record)] = record

    def records(self) -> list:
        with self._lock:
            return list(self._records.values())

    def __len__(self):
        return len(self._records)

    def compact(self) -> int:
        """Rewrites the file with one line per key. Returns the number of lines dropped."""
        if self.path is None or not self.path.exists():
            return 0
        with self._lock:
            try:
                before = sum(1 for line in self.path.read_text(encoding="utf-8").splitlines() if line.strip())
                tmp = self.path.with_suffix(".jsonl.tmp")
                with tmp.open("w", encoding="utf-8") as f:
                    for record in self._records.values():
                        f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                os.replace(tmp, self.path)
            except OSError as e:
                raise StoreError(f"Cannot compact {self.path}: {e}") from e
        dropped = before - len(self._records)
        logger.info(f"Compacted {self.path}: {dropped} stale lines dropped")
        return dropped


class SocialStore(JsonlStore):
    filename = SOCIAL_FILE
    record_type = SocialRecord

    def _key(self, record):
        return record.entity, record.url.raw

    def newest(self, url: PageUrl, entity: str = None):
        """The newest record for `url` regardless of age; `entity` narrows it when given."""
        with self._lock:
            found = [r for r in self._records.values()
                     if r.url.raw == url.raw and (entity is None or r.entity == entity)]
        return max(found, key=lambda r: r.observed_at, default=None)

    def get(self, url: PageUrl, now: float, validity: float, entity: str = None):
        if validity <= 0:
            raise ValueError("validity must be positive")
        record = self.newest(url, entity)
        if record is None or not is_fresh(record.observed_at, now, validity):
            return None
        return record

    def find_by_site(self, entity: str, site: str) -> list:
        if not (site or "").strip():
            raise ValueError("site must not be empty")
        with self._lock:
            found = [r for r in self._records.values()
                     if site_matches(site, r.url.host) and entity_matches(entity, r.entity)]
        return sorted(found, key=lambda r: r.observed_at, reverse=True)


class PatternStore(JsonlStore):
    filename = PATTERNS_FILE
    record_type = PatternRecord

    def _key(self, record):
        return record.url.raw

    def newest(self, url: PageUrl):
        with self._lock:
            return self._records.get(url.raw)

    def get(self, url: PageUrl, now: float, validity: float):
        if validity <= 0:
            raise ValueError("validity must be positive")
        record = self.newest(url)
        if record is None or not is_fresh(record.confirmed_at, now, validity):
            return None
        return record

    def confirm(self, url: PageUrl, now: float):
        record = self.newest(url)
        if record is not None:
            self.put(replace(record, confirmed_at=now))


class FragmentStore:
    """Fragments of the page being extracted, kept for the rest of the run only."""

    def __init__(self):
        self._fragments = {}

    def put(self, url: PageUrl, fragments: list):
        self._fragments[url.raw] = list(fragments)

    def get(self, url: PageUrl) -> list:
        return [replace(f, weight=0) for f in self._fragments.get(url.raw, [])]

    def forget(self, url: PageUrl):
        self._fragments.pop(url.raw, None)


@dataclass
class Stores:
    social: SocialStore = field(default_factory=SocialStore)
    patterns: PatternStore = field(default_factory=PatternStore)
    fragments: FragmentStore = field(default_factory=FragmentStore)

    @classmethod
    def open(cls, directory) -> "Stores":
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StoreError(f"Cannot create store directory {directory}: {e}") from e
        return cls(SocialStore(directory), PatternStore(directory), FragmentStore())
