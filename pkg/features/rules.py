import re
import logging
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from pathlib import Path

from bs4 import BeautifulSoup

from features.fragmenter import Fragment
from utils.helpers import amount_near, format_minor, strip_tags, to_minor

logger = logging.getLogger(__name__)

PHASES = ("discard", "recover")
KINDS = ("contains_text", "matches_regex", "attr_equals", "class_contains", "value_below", "value_above")


class RuleFileError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class CandidatePrice:
    amount_minor: int
    currency_code: str
    source_fragment: Fragment = field(default=None, compare=False)

    @property
    def amount(self) -> str:
        return format_minor(self.amount_minor)

    def key(self) -> tuple:
        return self.amount_minor, self.currency_code


@dataclass(frozen=True, slots=True)
class Predicate:
    kind: str
    argument: object
    regex: re.Pattern = field(default=None, compare=False, repr=False)

    def matches(self, fragment: Fragment) -> bool:
        if self.kind == "contains_text":
            return self.argument in fragment.text
        if self.kind == "matches_regex":
            return self.regex.search(fragment.html) is not None
        if self.kind == "attr_equals":
            name, _, value = self.argument.partition("=")
            return _root_attrs(fragment.html).get(name.strip()) == value.strip()
        if self.kind == "class_contains":
            classes = _root_attrs(fragment.html).get("class", "").split()
            return any(self.argument in cls for cls in classes)

        price = parse_price(fragment)
        if price is None:
            return False
        amount = Decimal(price.amount_minor) / 100
        if self.kind == "value_below":
            return amount < self.argument
        return amount > self.argument


@dataclass(frozen=True, slots=True)
class Rule:
    id: str
    phase: str
    predicate: Predicate
    order: int


@dataclass(slots=True)
class Selection:
    """Outcome of the discard/recover pipeline on one page."""
    price: CandidatePrice = None
    candidate_count: int = 0
    survivors: list = field(default_factory=list)
    stage: str = "discard"

    @property
    def found(self) -> bool:
        return self.price is not None

    @property
    def ambiguous(self) -> bool:
        return self.candidate_count > 1

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "amount": self.price.amount if self.price else None,
            "currency": self.price.currency_code if self.price else None,
            "candidate_count": self.candidate_count,
            "stage": self.stage,
            "survivors": [f.html for f in self.survivors],
        }


@lru_cache(maxsize=4096)
def _root_attrs(fragment_html: str) -> dict:
    root = BeautifulSoup(fragment_html, "html.parser").find()
    if root is None:
        return {}
    return {name: " ".join(value) if isinstance(value, list) else value for name, value in root.attrs.items()}


def _make_predicate(rule_id: str, kind: str, argument: str) -> Predicate:
    if kind not in KINDS:
        raise RuleFileError(f"rule {rule_id}: unknown predicate kind {kind!r}")
    if kind == "matches_regex":
        try:
            return Predicate(kind, argument, re.compile(argument))
        except re.error as e:
            raise RuleFileError(f"rule {rule_id}: bad regex {argument!r}: {e}") from e
    if kind in ("value_below", "value_above"):
        try:
            return Predicate(kind, Decimal(argument))
        except InvalidOperation as e:
            raise RuleFileError(f"rule {rule_id}: {kind} needs a number, got {argument!r}") from e
    if kind == "attr_equals" and "=" not in argument:
        raise RuleFileError(f"rule {rule_id}: attr_equals needs 'name=value', got {argument!r}")
    if not argument:
        raise RuleFileError(f"rule {rule_id}: {kind} needs an argument")
    return Predicate(kind, argument)


def load_rules(path) -> list:
    """Reads `id|phase|kind|argument` lines, in file order."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise RuleFileError(f"Cannot read rule file {path}: {e}") from e

    rules, seen = [], set()
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.strip().split("|", 3)
        if len(parts) != 4:
            raise RuleFileError(f"{path}, line {number}: expected 'id|phase|kind|argument'")
        rule_id, phase, kind, argument = (p.strip() for p in parts)
        if rule_id in seen:
            raise RuleFileError(f"rule {rule_id}: duplicate id (line {number})")
        if phase not in PHASES:
            raise RuleFileError(f"rule {rule_id}: unknown phase {phase!r}")
        seen.add(rule_id)
        rules.append(Rule(rule_id, phase, _make_predicate(rule_id, kind, argument), len(rules)))
    logger.debug(f"Loaded {len(rules)} rules from {path}")
    return rules


def _clue_span(fragment: Fragment):
    """Where the fragment's own clue occurrence lands in its text, or None when unknown."""
    if fragment.clue_offset is None:
        return None
    at = fragment.clue_offset - fragment.start_offset
    if not 0 <= at < len(fragment.html):
        return None
    start = len(strip_tags(fragment.html[:at]))
    return start, start + len(strip_tags(fragment.html[at:at + fragment.clue_length]))


def parse_price(fragment: Fragment):
    """The amount written next to the clue occurrence that produced the fragment, in minor units."""
    text = fragment.text
    span = _clue_span(fragment)
    if span is not None:
        amount = amount_near(text, *span)
        if amount is None:
            return None
        return CandidatePrice(to_minor(amount), fragment.clue.currency_code, fragment)

    for form in fragment.clue.text_forms():
        at = text.find(form)
        while at != -1:
            amount = amount_near(text, at, at + len(form))
            if amount is not None:
                return CandidatePrice(to_minor(amount), fragment.clue.currency_code, fragment)
            at = text.find(form, at + 1)
    return None


def apply_discard(fragments: list, rules: list) -> list:
    discard = [r for r in rules if r.phase == "discard"]
    weighted = []
    for fragment in fragments:
        hits = sum(1 for rule in discard if rule.predicate.matches(fragment))
        weighted.append(replace(fragment, weight=fragment.weight + hits) if hits else fragment)
    return weighted


def apply_recover(fragments: list, rules: list) -> list:
    recover = [r for r in rules if r.phase == "recover"]
    rescued = []
    for fragment in fragments:
        if fragment.weight >= 1 and any(rule.predicate.matches(fragment) for rule in recover):
            fragment = replace(fragment, weight=0)
        rescued.append(fragment)
    return rescued


def _distinct_candidates(fragments: list) -> dict:
    distinct = {}
    for fragment in fragments:
        if fragment.weight != 0:
            continue
        price = parse_price(fragment)
        if price is not None:
            distinct.setdefault(price.key(), price)
    return distinct


def select_price(fragments: list, rules: list) -> Selection:
    weighted = apply_discard([replace(f, weight=0) for f in fragments], rules)
    stage = "discard"
    distinct = _distinct_candidates(weighted)

    if len(distinct) != 1:
        weighted = apply_recover(weighted, rules)
        stage = "recover"
        distinct = _distinct_candidates(weighted)

    survivors = [f for f in weighted if f.weight == 0]
    if len(distinct) == 1:
        price = next(iter(distinct.values()))
        logger.debug(f"Unique price {price.amount} {price.currency_code} after {stage}")
        return Selection(price, 1, survivors, stage)

    logger.debug(f"No unique price: {len(distinct)} candidates after {stage}")
    return Selection(None, len(distinct), survivors, stage)
