import re
import logging
from dataclasses import dataclass
from functools import lru_cache

from features.fetcher import PageUrl
from features.fragmenter import Fragment, opening_tag
from features.rules import CandidatePrice
from utils.helpers import parse_amount, to_minor

logger = logging.getLogger(__name__)

FALLBACK_ANCHOR_CHARS = 30
MAX_GAP_CHARS = 60

# numbers as they sit in raw markup: cents may live in their own element
_RAW_NUMBER = r"[0-9]{1,3}(?:[.,][0-9]{3})+(?:(?:<[^>]+>)*[.,][0-9]{1,2})?|[0-9]+(?:(?:<[^>]+>)*[.,][0-9]{1,2})?"
_SPACE = r"(?:\s|&nbsp;)*"
_SPACE_OR_TAGS = r"(?:\s|&nbsp;|<[^>]+>)*"
_RAW_AFTER = re.compile(_SPACE + "(" + _RAW_NUMBER + ")")
_RAW_BEFORE = re.compile("(" + _RAW_NUMBER + ")" + _SPACE_OR_TAGS + "$")
_STABLE_ATTR = re.compile(r"\b(?:id|class)\s*=", re.I)
_META = re.compile(r"([\\.^$|?*+()\[\]{}])")


@dataclass(frozen=True, slots=True)
class PointingPattern:
    url: PageUrl
    regex_source: str
    currency_code: str
    created_at: float


def escape(text: str) -> str:
    """Escapes regex metacharacters only, keeping sources readable and portable."""
    return _META.sub(r"\\\1", text)


def numeric_matcher(integer_digits: int, narrow_digits: bool = False) -> str:
    lo = max(1, integer_digits - 1)
    hi = max(lo, integer_digits if narrow_digits else integer_digits + 1)
    return rf"((?:[0-9]{{1,3}}(?:[.,][0-9]{{3}})+|[0-9]{{{lo},{hi}}})(?:(?:<[^>]+>)*[.,][0-9]{{1,2}})?)"


def _inside_tag(markup: str, at: int) -> bool:
    return markup.rfind("<", 0, at) > markup.rfind(">", 0, at)


def _locate(fragment: Fragment, price: CandidatePrice):
    """Finds the clue token and the written number of `price` in the fragment's markup.

    Returns (token start, token end, number start, number end, currency first) or None."""
    markup = fragment.html
    for form in fragment.clue.forms():
        at = markup.find(form)
        while at != -1:
            if not _inside_tag(markup, at):
                end = at + len(form)
                after = _RAW_AFTER.match(markup, end)
                if after and _same_amount(after.group(1), price):
                    return at, end, after.start(1), after.end(1), True
                before = _RAW_BEFORE.search(markup, 0, at)
                if before and _same_amount(before.group(1), price):
                    return at, end, before.start(1), before.end(1), False
            at = markup.find(form, at + 1)
    return None


def _same_amount(written: str, price: CandidatePrice) -> bool:
    amount = parse_amount(written)
    return amount is not None and to_minor(amount) == price.amount_minor


def _terminator(markup: str, at: int) -> str:
    if at < len(markup):
        if markup[at] == "<":
            return "<"
        if markup[at].isspace():
            return r"\s"
    return ""


def _attribute_anchor(fragment: Fragment, lead_end: int):
    tag = opening_tag(fragment)
    if tag is None or not _STABLE_ATTR.search(tag[1]):
        return None
    markup = fragment.html
    open_end = markup.find(">") + 1
    gap = markup[open_end:lead_end]
    if len(gap) > MAX_GAP_CHARS:
        return None
    return escape(markup[1 + len(tag[0]):open_end].lstrip() + gap)


def _context_anchor(fragment: Fragment, lead_end: int) -> str:
    preceding = fragment.context + fragment.html[:lead_end]
    return escape(preceding[-FALLBACK_ANCHOR_CHARS:])


def _points_at(regex_source: str, page, fragment: Fragment, price: CandidatePrice) -> bool:
    match = _compiled(regex_source).search(page.body)
    if match is None:
        return False
    lo = fragment.start_offset - len(fragment.context)
    if not (lo <= match.start() < fragment.end_offset):
        return False
    return _same_amount(match.group(1), price)


def derive_pattern(fragment: Fragment, price: CandidatePrice, url: PageUrl, now: float,
                   page=None, narrow_digits: bool = False) -> PointingPattern:
    """Builds the pointing pattern of a page from its winning fragment.

    The anchor is the fragment's opening-tag attributes when it has an id or class,
    otherwise the characters preceding the price. With `page`, an attribute anchor that
    would first match somewhere else on the page is replaced by the preceding-characters one.
    """
    located = _locate(fragment, price)
    markup = fragment.html
    cur = "(?:" + "|".join(escape(form) for form in fragment.clue.forms()) + ")"
    digits = len(str(price.amount_minor // 100))
    number = numeric_matcher(digits, narrow_digits)

    if located is None:
        # the number could not be tied to the markup; point at the clue alone
        logger.warning(f"Could not locate {price.amount} in fragment of {url}; using a loose pattern")
        lead_end = markup.find(fragment.clue.text) if fragment.clue.text in markup else 0
        body = cur + _SPACE + number
    else:
        tok_start, tok_end, num_start, num_end, currency_first = located
        if currency_first:
            lead_end = tok_start
            body = cur + _SPACE + number + _terminator(markup, num_end)
        else:
            lead_end = num_start
            body = number + _SPACE_OR_TAGS + cur

    anchors = [a for a in (_attribute_anchor(fragment, lead_end), _context_anchor(fragment, lead_end)) if a is not None]
    regex_source = anchors[0] + body
    if page is not None:
        for anchor in anchors:
            if _points_at(anchor + body, page, fragment, price):
                regex_source = anchor + body
                break
        else:
            logger.warning(f"Derived pattern for {url} does not point back at its fragment")

    return PointingPattern(url=url, regex_source=regex_source, currency_code=price.currency_code, created_at=now)


@lru_cache(maxsize=1024)
def _compiled(regex_source: str) -> re.Pattern:
    return re.compile(regex_source)


def apply_pattern(page, pattern: PointingPattern):
    """First match wins; None when the page no longer has the anchored price."""
    try:
        match = _compiled(pattern.regex_source).search(page.body)
    except re.error:
        logger.error(f"Stored pattern for {pattern.url} does not compile: {pattern.regex_source!r}")
        return None
    if match is None:
        return None
    amount = parse_amount(match.group(1))
    if amount is None:
        return None
    return CandidatePrice(to_minor(amount), pattern.currency_code)
