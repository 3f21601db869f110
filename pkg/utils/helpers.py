import re
import html
import logging
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from functools import lru_cache

from bs4 import BeautifulSoup

logger = logging.getLogger(__name__)

# A written amount: grouped thousands ("1,234" / "1.104") or a plain digit run,
# followed by an optional 1-2 digit decimal part in either convention.
NUMBER_TEXT = r"[0-9]{1,3}(?:[.,][0-9]{3})+(?:[.,][0-9]{1,2})?|[0-9]+(?:[.,][0-9]{1,2})?"

_AFTER_TOKEN = re.compile(r"\s*(" + NUMBER_TEXT + ")")
_BEFORE_TOKEN = re.compile("(" + NUMBER_TEXT + r")\s*$")


@lru_cache(maxsize=8192)
def strip_tags(fragment: str) -> str:
    """Text content of an HTML snippet: tags removed, entities decoded."""
    if "<" not in fragment:
        return html.unescape(fragment)
    return BeautifulSoup(fragment, "html.parser").get_text()


def parse_amount(text: str):
    """Turns '1,234.56', '1.234,56', '125' or '12.80' into a Decimal (None if it is not a number)."""
    if not text:
        return None
    s = re.sub(r"\s+", "", strip_tags(text))
    if not s:
        return None

    if "," in s and "." in s:
        # both present: the last one is the decimal separator
        if s.rfind(",") > s.rfind("."):
            s = s.replace(".", "").replace(",", ".")
        else:
            s = s.replace(",", "")
    elif "," in s or "." in s:
        sep = "," if "," in s else "."
        head, _, tail = s.rpartition(sep)
        if s.count(sep) > 1 or len(tail) == 3:
            s = s.replace(sep, "")
        else:
            s = head.replace(sep, "") + "." + tail

    try:
        return Decimal(s)
    except (InvalidOperation, ValueError):
        logger.debug(f"Could not parse amount from '{text}'")
        return None


def to_minor(amount: Decimal) -> int:
    return int((amount * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_minor(amount_minor: int) -> str:
    return f"{Decimal(amount_minor) / 100:.2f}"


def amount_near(text: str, start: int, end: int):
    """The amount written right after text[start:end] or, failing that, right before it."""
    match = _AFTER_TOKEN.match(text, end)
    if not match:
        match = _BEFORE_TOKEN.search(text, 0, start)
    if not match:
        return None
    return parse_amount(match.group(1))


def normalize_site(site: str) -> str:
    """'https://www.Zingermans.com/x' -> 'zingermans.com', "Zingerman's" -> 'zingermans'."""
    s = (site or "").strip().lower()
    s = re.sub(r"^[a-z][a-z0-9+.\-]*://", "", s)
    s = re.split(r"[/?#]", s, maxsplit=1)[0]
    s = s.rsplit("@", 1)[-1].split(":", 1)[0]
    s = re.sub(r"[^a-z0-9.\-]", "", s).strip(".")
    while s.startswith("www."):
        s = s[4:]
    return s.strip(".")


def site_matches(site: str, host: str) -> bool:
    """Every label of the normalized site is a prefix of consecutive host labels."""
    wanted = normalize_site(site)
    if not wanted:
        return False
    site_labels = wanted.split(".")
    labels = [label for label in host.lower().split(".") if label]
    while labels and labels[0] == "www":
        labels = labels[1:]
    for i in range(len(labels) - len(site_labels) + 1):
        if all(labels[i + j].startswith(part) for j, part in enumerate(site_labels)):
            return True
    return False


def entity_tokens(entity: str) -> list:
    return re.findall(r"\w+", (entity or "").lower())


def entity_matches(query: str, stored: str) -> bool:
    tokens = entity_tokens(query)
    if not tokens:
        return False
    return set(tokens) <= set(entity_tokens(stored))


def is_fresh(stamp, now, validity) -> bool:
    """Strict window: a stamp exactly `validity` old is expired."""
    return stamp is not None and now - stamp < validity
