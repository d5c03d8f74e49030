"""Low-level text scanning shared by the rule analyzers and classifiers.

Matching is case-insensitive, on word boundaries, over an ASCII-folded
copy of the text. Folding is length-preserving so every reported span
indexes the original string.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache

Span = tuple[int, int]  # [start, end) character offsets


@lru_cache(maxsize=4096)
def _fold_char(ch: str) -> str:
    if ord(ch) < 128:
        return ch.lower()
    for part in unicodedata.normalize("NFKD", ch):
        if not unicodedata.combining(part) and ord(part) < 128:
            return part.lower()
    return " "  # no ASCII base character: treat as a separator


def fold(text: str) -> str:
    """Lowercased, accent-stripped copy with the same length as `text`."""
    return "".join(_fold_char(ch) for ch in text)


@lru_cache(maxsize=1024)
def term_pattern(term: str) -> re.Pattern[str]:
    """Word-boundary regex for a lexicon entry.

    Multi-word and hyphenated entries match across any whitespace/hyphen
    run, so "user-friendly" also matches "user friendly".
    """
    parts = [p for p in re.split(r"[\s\-]+", term.strip().lower()) if p]
    body = r"[\s\-]+".join(re.escape(p) for p in parts)
    return re.compile(r"(?<!\w)" + body + r"(?!\w)")


def find_terms(text: str, terms: tuple[str, ...] | list[str]) -> list[tuple[str, Span]]:
    """All lexicon hits in `text`, as (entry, span), ordered by span start.

    Ties (same start) keep the longer match first so multi-word entries
    win over their prefixes.
    """
    folded = fold(text)
    hits: list[tuple[str, Span]] = []
    for term in terms:
        for m in term_pattern(term).finditer(folded):
            hits.append((term, (m.start(), m.end())))
    hits.sort(key=lambda h: (h[1][0], -(h[1][1] - h[1][0]), h[0]))
    return hits


def tokens(text: str) -> list[str]:
    """Lowercased word tokens of the folded text."""
    return re.findall(r"[a-z0-9]+", fold(text))


# --- measurable-quantity extraction -----------------------------------------

_WORD_COMPARATORS = [
    "at least",
    "at most",
    "no more than",
    "no less than",
    "no later than",
    "not more than",
    "less than",
    "greater than",
    "more than",
    "fewer than",
    "within",
    "up to",
    "exactly",
    "every",
]

_SYMBOL_COMPARATORS = ["<=", ">=", "<", ">", "≤", "≥"]

_UNITS = [
    "milliseconds", "millisecond", "ms",
    "seconds", "second", "secs", "sec", "s",
    "minutes", "minute", "min",
    "hours", "hour", "hrs", "hr", "h",
    "days", "day", "weeks", "week", "months", "month", "years", "year",
    "percent", "%",
    "millimeters", "millimeter", "mm", "centimeters", "centimeter", "cm",
    "meters", "meter", "metres", "metre", "m", "kilometers", "kilometer", "km",
    "feet", "foot", "ft", "inches", "inch",
    "kilograms", "kilogram", "kg", "grams", "gram", "g", "pounds", "pound", "lbs", "lb",
    "bytes", "byte", "kb", "mb", "gb", "tb",
    "hz", "khz", "mhz", "ghz",
    "°c", "°f", "celsius", "fahrenheit", "kelvin",
    "db", "dba",
    "volts", "volt", "v", "amps", "amp", "watts", "watt", "w",
    "users", "user", "requests", "request", "transactions", "transaction",
    "records", "record", "items", "item", "devices", "device", "tags", "tag", "reads", "read",
    "messages", "message", "events", "event", "alerts", "alert", "attempts", "attempt",
    "retries", "retry", "times", "samples", "sample", "beds", "bed", "rooms", "room",
    "characters", "character", "digits", "digit", "entries", "entry", "concurrent sessions",
    "sessions", "session", "operations", "operation", "queries", "query", "pages", "page",
]


def _alternation(words: list[str]) -> str:
    ordered = sorted(words, key=len, reverse=True)
    return "|".join(re.escape(w) for w in ordered)


_NUMBER = r"[+-]?\d+(?:[.,]\d+)?"
_UNIT_ALT = _alternation(_UNITS)
_CMP_ALT = rf"\b(?:{_alternation(_WORD_COMPARATORS)})\b|{_alternation(_SYMBOL_COMPARATORS)}"

# Two measurable shapes: number+unit, or comparator+number (unit optional).
_QUANTITY_RE = re.compile(
    rf"(?:(?:{_CMP_ALT})\s*{_NUMBER}(?:\s*(?:{_UNIT_ALT})(?!\w))?"
    rf"|{_NUMBER}\s*(?:{_UNIT_ALT})(?!\w))",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Quantity:
    text: str  # exact substring of the source text
    span: Span


def find_quantity(text: str) -> Quantity | None:
    """Leftmost measurable quantity in `text`, or None."""
    m = _QUANTITY_RE.search(text)
    if m is None:
        return None
    return Quantity(text=m.group(0), span=(m.start(), m.end()))
