"""Find numeric entity spans in written text and put them in canonical form."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from decimal import Decimal
from pathlib import Path
from typing import Optional, Union

from .core import EntityKind, MalformedEntity, WrittenEntity, data_path, nfc


@dataclass(frozen=True)
class EntityPattern:
    kind: EntityKind
    regex: re.Pattern
    priority: int


class PatternSet:
    def __init__(self, patterns: list[EntityPattern]):
        self.patterns = sorted(patterns, key=lambda p: p.priority)

    @classmethod
    def parse(cls, text: str) -> "PatternSet":
        patterns = []
        cur: dict = {}

        def finish():
            if not cur:
                return
            missing = {"kind", "pattern", "priority"} - set(cur)
            if missing:
                raise ValueError(f"pattern stanza {cur.get('kind')!r} lacks {sorted(missing)}")
            patterns.append(EntityPattern(cur["kind"], re.compile(cur["pattern"]), cur["priority"]))

        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            rest = rest.strip()
            if key == "kind":
                finish()
                cur = {"kind": EntityKind(rest)}
            elif key == "pattern":
                cur["pattern"] = rest
            elif key == "priority":
                cur["priority"] = int(rest)
            else:
                raise ValueError(f"line {lineno}: unknown directive {key!r}")
        finish()
        return cls(patterns)

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "PatternSet":
        path = data_path("patterns.cfg") if path is None else Path(path)
        return cls.parse(path.read_text(encoding="utf-8"))


_DEFAULT: Optional[PatternSet] = None


def default_patterns() -> PatternSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = PatternSet.load()
    return _DEFAULT


def extract_entities(sentence: str, patterns: Optional[PatternSet] = None) -> list[WrittenEntity]:
    """Non-overlapping entity spans, longest first, ties broken by kind priority."""
    patterns = patterns or default_patterns()
    candidates = []
    for p in patterns.patterns:
        for m in p.regex.finditer(sentence):
            if m.end() > m.start():
                candidates.append((-(m.end() - m.start()), p.priority, m.start(), m.end(), p.kind))
    candidates.sort(key=lambda c: c[:3])
    taken: list[tuple[int, int]] = []
    chosen = []
    for _, _, start, end, kind in candidates:
        if any(start < e and s < end for s, e in taken):
            continue
        taken.append((start, end))
        raw = sentence[start:end]
        chosen.append(WrittenEntity(kind, raw, start, end, raw))
    chosen.sort(key=lambda e: e.start)
    return chosen


# --------------------------------------------------------------------------
# canonical forms


def _plain_number(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(int(value))
    return format(value.normalize(), "f")


def _ordinal_suffix(n: int) -> str:
    if 10 <= n % 100 <= 20:
        return "th"
    return {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")


_MAGNITUDE = {"k": Decimal(1000), "K": Decimal(1000), "M": Decimal(1000000)}


def canonical_text(kind: EntityKind, text: str) -> str:
    text = nfc(text)
    if kind is EntityKind.CARDINAL:
        out = text.replace(",", "")
        if not re.fullmatch(r"\d+(\.\d+)?", out):
            raise MalformedEntity(f"not a cardinal: {text!r}")
        return out
    if kind is EntityKind.ORDINAL:
        m = re.fullmatch(r"([\d,]+)(st|nd|rd|th)", text)
        if not m:
            raise MalformedEntity(f"not an ordinal: {text!r}")
        digits = m.group(1).replace(",", "")
        if _ordinal_suffix(int(digits)) != m.group(2):
            raise MalformedEntity(f"wrong ordinal suffix: {text!r}")
        return digits + m.group(2)
    if kind is EntityKind.CURRENCY:
        out = text.replace(",", "")
        if not re.fullmatch(r"[$£€]\d+(\.\d{1,2})?", out):
            raise MalformedEntity(f"not a currency amount: {text!r}")
        return out
    if kind is EntityKind.FRACTION:
        out = re.sub(r"\s+", "", text)
        m = re.fullmatch(r"(\d+)/(\d+)", out)
        if not m or int(m.group(2)) == 0:
            raise MalformedEntity(f"not a fraction: {text!r}")
        return out
    if kind is EntityKind.PERCENT:
        if not re.fullmatch(r"\d+(\.\d+)?%", text):
            raise MalformedEntity(f"not a percentage: {text!r}")
        return text
    if kind is EntityKind.MEASURE:
        m = re.fullmatch(r"([\d,]+(?:\.\d+)?)([KkM]?)( ?)([A-Za-z]+)", text)
        if not m:
            raise MalformedEntity(f"not a measure: {text!r}")
        value = Decimal(m.group(1).replace(",", ""))
        if m.group(2):
            value *= _MAGNITUDE[m.group(2)]
        return _plain_number(value) + m.group(3) + m.group(4)
    if kind is EntityKind.TIME:
        m = re.fullmatch(r"(\d{1,2}):(\d{2})", text) or re.fullmatch(r"(\d{1,2}) hours (\d{1,2}) minutes", text)
        if not m:
            raise MalformedEntity(f"not a time: {text!r}")
        hours, minutes = int(m.group(1)), int(m.group(2))
        if hours > 23 or minutes > 59:
            raise MalformedEntity(f"time out of range: {text!r}")
        return f"{hours} hours {minutes} minutes"
    if kind is EntityKind.DECADE:
        out = text.lstrip("'")
        if not re.fullmatch(r"(\d\d)?\d0s", out):
            raise MalformedEntity(f"not a decade: {text!r}")
        return out
    if kind is EntityKind.PHONE_NUMBER:
        if not re.fullmatch(r"\d+([-.]\d+)+", text):
            raise MalformedEntity(f"not a phone number: {text!r}")
        return text
    if kind is EntityKind.ABBREVIATION:
        if not text:
            raise MalformedEntity("empty abbreviation")
        return text
    raise MalformedEntity(f"unsupported kind {kind}")


def canonicalize(entity: WrittenEntity) -> WrittenEntity:
    return replace(entity, canonical=canonical_text(entity.kind, entity.canonical or entity.raw))
