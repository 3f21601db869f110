import json
from collections import Counter
from pathlib import Path

import pytest

from database.db import Stores
from features.fetcher import PageUrl, RawHtml
from features.fragmenter import load_clues
from features.patterns import PointingPattern
from features.rules import CandidatePrice, Selection, load_rules
from features.wextractor import PriceBackend

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
MANIFEST = FIXTURES / "manifest.json"
ZINGERMAN_URL = "https://www.zingermans.com/Product.aspx?ProductID=A-ZDV"


def read_page(name: str) -> RawHtml:
    return RawHtml(body=(FIXTURES / name).read_text(encoding="utf-8"), fetched_at=0.0, source="local-file")


def manifest_entries() -> list:
    return json.loads(MANIFEST.read_text(encoding="utf-8"))["entries"]


def file_url(name: str) -> PageUrl:
    return PageUrl.parse((FIXTURES / name).as_uri())


@pytest.fixture
def clues():
    return load_clues(ROOT / "resources" / "clues.txt")


@pytest.fixture
def rules():
    return load_rules(ROOT / "resources" / "rules.txt")


@pytest.fixture
def stores():
    return Stores()


class CountingBackend(PriceBackend):
    """Scripted backend that records how often each tier touched it."""

    def __init__(self, price=CandidatePrice(12500, "USD"), available=True, pattern_works=True, candidates=0):
        self.price = price
        self.available = available
        self.pattern_works = pattern_works
        self.candidates = candidates
        self.calls = Counter()

    async def is_available(self, url):
        self.calls["is_available"] += 1
        return self.available

    async def fetch_raw_html(self, url):
        self.calls["fetch"] += 1
        return RawHtml("<html><body>stub</body></html>", 0.0, "network")

    def apply_pattern(self, page, pattern):
        self.calls["apply_pattern"] += 1
        return self.price if self.pattern_works else None

    def from_scratch(self, page, url):
        self.calls["from_scratch"] += 1
        if self.price is None:
            return Selection(None, self.candidates, [], "recover")
        return Selection(self.price, 1, [], "discard")

    def derive_pattern(self, selection, page, url, now):
        self.calls["derive_pattern"] += 1
        return PointingPattern(url, r"stub(\d+)", selection.price.currency_code, now)


@pytest.fixture
def backend():
    return CountingBackend()
