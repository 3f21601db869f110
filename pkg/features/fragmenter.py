import re
import html
import logging
from dataclasses import dataclass
from functools import lru_cache
from html.entities import html5
from pathlib import Path

from utils.helpers import strip_tags

logger = logging.getLogger(__name__)

DEFAULT_FRAGMENT_CAP = 1000
CONTEXT_CHARS = 30

VOID_TAGS = {"area", "base", "br", "col", "embed", "hr", "img", "input", "link",
             "meta", "param", "source", "track", "wbr"}
RAWTEXT_TAGS = {"script", "style"}

_TOKEN_RE = re.compile(
    r"<!--.*?-->|<!\[CDATA\[.*?\]\]>|<![^>]*>|<\?[^>]*>"
    r"|<(/?)([A-Za-z][A-Za-z0-9:\-]*)((?:[^>\"']|\"[^\"]*\"|'[^']*')*)>",
    re.S,
)
_CURRENCY_CODE = re.compile(r"^[A-Z]{3}$")
_DIGIT = re.compile(r"[0-9]")


class ClueFileError(ValueError):
    pass


@lru_cache(maxsize=None)
def _spellings(text: str) -> tuple:
    decoded = html.unescape(text)
    forms = [text, decoded]
    if len(decoded) == 1:
        point = ord(decoded)
        forms += [f"&#{point};", f"&#x{point:x};", f"&#x{point:X};"]
        forms += [f"&{name}" for name, value in html5.items() if value == decoded and name.endswith(";")]
    return tuple(dict.fromkeys(forms))


@dataclass(frozen=True, slots=True)
class Clue:
    text: str
    currency_code: str

    def forms(self) -> list:
        """The literal text first, then the decoded symbol and its entity spellings."""
        return list(_spellings(self.text))

    def text_forms(self) -> list:
        return list(dict.fromkeys([html.unescape(self.text), self.text]))


@dataclass(frozen=True, slots=True)
class Fragment:
    html: str
    start_offset: int
    end_offset: int
    clue: Clue
    weight: int = 0
    context: str = ""
    # body offset and length of the clue occurrence that produced the fragment
    clue_offset: int = None
    clue_length: int = 0

    @property
    def text(self) -> str:
        return strip_tags(self.html)


def load_clues(path) -> list:
    """Reads a clue file: one `symbol,ISO-code` pair per line, `#` comments."""
    clues = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ClueFileError(f"Cannot read clue file {path}: {e}") from e

    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        text, sep, code = line.rpartition(",")
        text, code = text.strip(), code.strip()
        if not sep or not text or not _CURRENCY_CODE.match(code):
            raise ClueFileError(f"{path}, line {number}: expected 'symbol,ISO-code', got {line!r}")
        clue = Clue(text, code)
        if clue not in clues:
            clues.append(clue)
    logger.debug(f"Loaded {len(clues)} clues from {path}")
    return clues


@dataclass(slots=True)
class _Element:
    tag: str
    start: int
    open_end: int
    parent: int
    attrs: str
    end: int = -1


def scan_elements(body: str):
    """Tolerant tag scan. Returns (elements, text runs as (start, end, owner element index))."""
    elements, texts, stack = [], [], []
    pos = 0
    while True:
        m = _TOKEN_RE.search(body, pos)
        text_end = m.start() if m else len(body)
        if text_end > pos:
            texts.append((pos, text_end, stack[-1] if stack else None))
        if not m:
            break
        pos = m.end()
        closing, name = m.group(1), m.group(2)
        if name is None:
            continue
        name = name.lower()

        if closing:
            # close up to the matching open tag; a stray closer is ignored
            for depth in range(len(stack) - 1, -1, -1):
                if elements[stack[depth]].tag == name:
                    for idx in stack[depth + 1:]:
                        elements[idx].end = m.start()
                    elements[stack[depth]].end = m.end()
                    del stack[depth:]
                    break
            continue

        attrs = m.group(3)
        index = len(elements)
        elements.append(_Element(name, m.start(), m.end(), stack[-1] if stack else None,
                                 attrs.strip().rstrip("/").strip()))
        if name in VOID_TAGS or attrs.rstrip().endswith("/"):
            elements[index].end = m.end()
        elif name in RAWTEXT_TAGS:
            close = re.compile(rf"</{name}\s*>", re.I).search(body, pos)
            pos = close.end() if close else len(body)
            elements[index].end = pos
        else:
            stack.append(index)

    for idx in stack:
        elements[idx].end = len(body)
    return elements, texts


def _find_occurrences(body: str, texts: list, clues: list) -> list:
    """Clue occurrences in text content as (position, length, owner, clue); one per position."""
    taken = set()
    found = []

    def claim(form, clue):
        for start, end, owner in texts:
            at = body.find(form, start, end)
            while at != -1:
                span = range(at, at + len(form))
                if not any(i in taken for i in span):
                    taken.update(span)
                    found.append((at, len(form), owner, clue))
                at = body.find(form, at + 1, end)

    for clue in clues:
        claim(clue.text, clue)
    for clue in clues:
        for form in clue.forms()[1:]:
            claim(form, clue)
    found.sort(key=lambda item: item[0])
    return found


def extract_fragments(page, clues: list, cap: int = DEFAULT_FRAGMENT_CAP, widen: bool = True) -> list:
    """One fragment per clue occurrence: the innermost element around it, or its parent
    when the innermost element holds no digit."""
    body = page.body if hasattr(page, "body") else page
    if not clues or not body:
        return []

    elements, texts = scan_elements(body)
    digits = {}

    def has_digit(index):
        if index not in digits:
            el = elements[index]
            digits[index] = bool(_DIGIT.search(strip_tags(body[el.start:el.end])))
        return digits[index]

    fragments = []
    for at, length, owner, clue in _find_occurrences(body, texts, clues):
        if owner is None:
            lo, hi = 0, len(body)
        else:
            inner = elements[owner]
            chosen = inner
            if widen and inner.parent is not None and not has_digit(owner):
                chosen = elements[inner.parent]
            if chosen.end - chosen.start > cap:
                chosen = inner
            lo, hi = chosen.start, chosen.end

        start, end = lo, hi
        if end - start > cap:
            start = max(lo, at - cap // 2)
            end = min(hi, start + cap)
            start = max(lo, end - cap)
        fragments.append(Fragment(
            html=body[start:end],
            start_offset=start,
            end_offset=end,
            clue=clue,
            context=body[max(0, start - CONTEXT_CHARS):start],
            clue_offset=at,
            clue_length=length,
        ))

    logger.debug(f"Extracted {len(fragments)} fragments")
    return fragments


def opening_tag(fragment: Fragment):
    """(tag name, attribute string) of the element a fragment starts with, or None."""
    m = _TOKEN_RE.match(fragment.html)
    if not m or not m.group(2) or m.group(1):
        return None
    return m.group(2).lower(), m.group(3).strip().rstrip("/").strip()
