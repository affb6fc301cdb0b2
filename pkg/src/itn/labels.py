"""Five-task label algebra: spoken tokens + label rows -> written text, and back."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Optional, Sequence, TextIO

from .core import (
    CONTINUATION,
    IDENTITY,
    MULTIPLIER_CLASSES,
    NUMERIC_CLASSES,
    PREPEND_SYMBOLS,
    ITNError,
    LabelRow,
    Lexicon,
    MalformedNumberRun,
    Post,
    Prepend,
    Rewrite,
    Space,
    SpokenWrittenPair,
    TraceIncomplete,
    UnbalancedMarkers,
)

WILDCARD = "\x00"
DIGIT_WILDCARD = "\x01"

_SPLIT_SUFFIX = re.compile(r"(\d*)(\D*)")


class NumberRun:
    """Left-to-right accumulator for a Space-Off run of numeric rewrites.

    Multipliers multiply and carry; a value that fits the trailing zeros of
    the current group is added; a multi-word value that does not fit is
    concatenated as digits ("one" "twenty" -> 120); verbatim digits always
    concatenate and verbatim symbols ("point", "over") close the group.
    """

    def __init__(self):
        self.prefix = ""
        self.total = 0
        self.cur = ""
        self.last: Optional[str] = None
        self.suffix = ""

    def group(self) -> str:
        if self.total == 0:
            return self.cur
        if self.cur and not self.cur.isdigit():
            raise MalformedNumberRun(f"cannot add {self.cur!r} to {self.total}")
        return str(self.total + int(self.cur or 0))

    def render(self) -> str:
        return self.prefix + self.group() + self.suffix

    def feed(self, cls: Rewrite, out: str, prepend: Prepend = Prepend.NONE) -> None:
        if self.suffix:
            raise MalformedNumberRun(f"{out!r} follows an ordinal or decade")
        if cls is Rewrite.VERBATIM:
            if prepend is Prepend.DIGITS:
                out = "0" + out
            if out.isdigit():
                self.cur = self.group() + out
                self.total = 0
                self.last = "verb"
            else:
                self.prefix += self.group() + out
                self.total = 0
                self.cur = ""
                self.last = "sym"
            return
        if cls in MULTIPLIER_CLASSES:
            if self.cur and not self.cur.isdigit():
                raise MalformedNumberRun(f"cannot multiply {self.cur!r}")
            m = int(out)
            base = int(self.cur) if self.cur else 1
            if m == 100:
                if self.cur == "" and self.total:
                    raise MalformedNumberRun("hundred without a value")
                self.cur = str(base * 100)
            else:
                if self.total and self.total % (m * 1000) != 0:
                    raise MalformedNumberRun(f"multiplier {m} out of order")
                self.total += base * m
                self.cur = ""
            self.last = "mult"
            return
        digits, suffix = _SPLIT_SUFFIX.fullmatch(out).groups()
        if not digits:
            if suffix:
                raise MalformedNumberRun(f"{out!r} has no digits")
            return
        if prepend is Prepend.DIGITS:
            self.cur = self.group() + "0" + digits
            self.total = 0
        elif self.cur == "":
            self.cur = digits
        elif (self.cur.isdigit() and int(self.cur) > 0 and int(digits) > 0
              and int(self.cur) % 10 ** len(digits) == 0):
            self.cur = str(int(self.cur) + int(digits))
        elif len(digits) >= 2:
            self.cur = self.group() + digits
            self.total = 0
        else:
            raise MalformedNumberRun(f"{digits!r} cannot follow {self.render()!r}")
        self.suffix = suffix
        self.last = "card"


@dataclass
class _Unit:
    first: int
    last: int
    lead: bool
    text: str = ""
    run: Optional[NumberRun] = None
    multiplier: int = 0
    symbol: str = ""
    rewrite: Rewrite = Rewrite.NONE

    def body(self) -> str:
        return self.symbol + (self.run.render() if self.run is not None else self.text)


def _check_markers(rows: Sequence[LabelRow], partial: bool) -> list[tuple[Post, int, Optional[int]]]:
    regions = []
    open_: dict[Post, int] = {}
    for i, row in enumerate(rows):
        if row.post_start is not Post.NONE:
            if row.post_start in open_:
                raise UnbalancedMarkers(f"nested {row.post_start.value} at token {i}")
            open_[row.post_start] = i
        if row.post_end is not Post.NONE:
            if row.post_end not in open_:
                raise UnbalancedMarkers(f"{row.post_end.value} closed at token {i} without start")
            if list(open_)[-1] is not row.post_end:
                raise UnbalancedMarkers(f"{row.post_end.value} closed across another region at token {i}")
            regions.append((row.post_end, open_.pop(row.post_end), i))
    if open_ and not partial:
        kinds = ", ".join(k.value for k in open_)
        raise UnbalancedMarkers(f"unclosed regions: {kinds}")
    regions.extend((k, s, None) for k, s in open_.items())
    return regions


def _build_units(tokens: Sequence[str], rows: Sequence[LabelRow], outputs: Sequence[str]) -> list[_Unit]:
    units: list[_Unit] = []
    for i, (tok, row, out) in enumerate(zip(tokens, rows, outputs)):
        cls = row.rewrite
        prev = units[-1] if units else None
        magnitude = cls in MULTIPLIER_CLASSES and row.post_end is Post.MAGNITUDE
        joins = (
            prev is not None
            and prev.run is not None
            and cls in NUMERIC_CLASSES
            and not magnitude
            and row.space is Space.OFF
            and row.prepend in (Prepend.NONE, Prepend.DIGITS)
            and row.post_start is Post.NONE
            and rows[i - 1].post_end is Post.NONE
        )
        if joins:
            prev.run.feed(cls, out, row.prepend)
            prev.last = i
            continue
        unit = _Unit(i, i, row.space is Space.ON and i > 0)
        if row.prepend is not Prepend.NONE and not (cls in NUMERIC_CLASSES and row.prepend is Prepend.DIGITS):
            unit.symbol = PREPEND_SYMBOLS[row.prepend]
        if magnitude:
            unit.multiplier = int(out)
        elif cls in NUMERIC_CLASSES:
            unit.run = NumberRun()
            unit.run.feed(cls, out, row.prepend)
        else:
            unit.text = out
            unit.rewrite = cls
        units.append(unit)
    return units


def _plain(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(int(value))
    return format(value.normalize(), "f")


def _join(units: list[_Unit], drop_first_lead: bool = True) -> str:
    parts = []
    for k, u in enumerate(units):
        if u.lead and not (drop_first_lead and k == 0):
            parts.append(" ")
        parts.append(u.body())
    return "".join(parts)


def _apply_region(kind: Post, inner: list[_Unit]) -> _Unit:
    first, last = inner[0], inner[-1]
    merged = _Unit(first.first, last.last, first.lead)
    if kind is Post.MAJOR_CURRENCY:
        symbol = last.body() if len(inner) > 1 else ""
        merged.text = symbol + _join(inner[:-1] if len(inner) > 1 else inner)
    elif kind is Post.MINOR_CURRENCY:
        digits = _join(inner[:-1] if len(inner) > 1 else inner).replace(" ", "")
        merged.text = "." + (digits.zfill(2) if digits.isdigit() else digits)
    elif kind is Post.MAGNITUDE:
        if last.multiplier == 0 or len(inner) < 2:
            raise MalformedNumberRun("magnitude region needs a number and a magnitude word")
        number = _join(inner[:-1]).replace(" ", "")
        try:
            merged.text = _plain(Decimal(number) * last.multiplier)
        except InvalidOperation:
            raise MalformedNumberRun(f"cannot scale {number!r}") from None
    else:
        # a unit abbreviation attaches to the number; a spelled-out unit keeps its space
        if len(inner) > 1 and last.rewrite is Rewrite.MEASURE:
            last.lead = False
        merged.text = _join(inner)
    return merged


def _settle(tokens: Sequence[str], rows: Sequence[LabelRow], lexicon: Lexicon,
            partial: bool) -> tuple[list[_Unit], list]:
    if len(tokens) != len(rows):
        raise ValueError(f"{len(tokens)} tokens but {len(rows)} label rows")
    regions = _check_markers(rows, partial)
    outputs = [tok if row.rewrite is Rewrite.NONE else lexicon.lookup(tok, row.rewrite)
               for tok, row in zip(tokens, rows)]
    units = _build_units(tokens, rows, outputs)
    closed = sorted((r for r in regions if r[2] is not None), key=lambda r: r[2] - r[1])
    for kind, start, end in closed:
        idx = [k for k, u in enumerate(units) if u.first >= start and u.last <= end]
        if not idx or units[idx[0]].first != start or units[idx[-1]].last != end:
            raise MalformedNumberRun(f"{kind.value} region splits a number run")
        units[idx[0]:idx[-1] + 1] = [_apply_region(kind, units[idx[0]:idx[-1] + 1])]
    for u in units:
        if u.multiplier and u.run is None and not u.text:
            raise MalformedNumberRun("magnitude word outside a magnitude region")
    return units, regions


def _signature(units: list[_Unit], regions: list, rows: Sequence[LabelRow]) -> tuple:
    """Everything about a partial render that later tokens can observe."""
    open_at = {s: k for k, s, e in regions if e is None}
    blind = min((s for k, s, e in regions
                 if e is None and k in (Post.MINOR_CURRENCY, Post.MAGNITUDE)), default=None)
    sig = []
    for u in units:
        run = None if u.run is None else (u.run.prefix, u.run.total, u.run.cur, u.run.suffix)
        # spaces inside a minor-currency or magnitude region are dropped
        lead = u.lead and (blind is None or u.first <= blind)
        sig.append((lead, u.symbol, u.text, run, u.multiplier, open_at.get(u.first)))
    return tuple(sig), rows[-1].post_end if rows else None


def render(tokens: Sequence[str], rows: Sequence[LabelRow], lexicon: Lexicon,
           partial: bool = False) -> str:
    """Written text for the labelled tokens.

    With ``partial`` the rows may cover a prefix of a sentence; the result is
    the part of the output that later tokens cannot change, with WILDCARD
    standing for a currency symbol that has not been seen yet.
    """
    return _render(tokens, rows, lexicon, partial)[0]


def _render(tokens, rows, lexicon, partial):
    units, regions = _settle(tokens, rows, lexicon, partial)
    if not partial:
        return _join(units), None
    sig = _signature(units, regions, rows)
    return _partial_text(units, regions, rows), sig


def _partial_text(units: list[_Unit], regions: list, rows: Sequence[LabelRow]) -> str:

    open_regions = [r for r in regions if r[2] is None and r[0] is not Post.MEASURE]
    last_open = units and units[-1].run is not None and rows[-1].post_end is Post.NONE
    if last_open:
        u = units[-1]
        text = u.body()
        keep = len(u.symbol) + len(u.run.prefix) + (1 if u.run.group() else 0)
        u.run = None
        u.text = text[len(u.symbol):keep]
    if not open_regions:
        return _join(units)
    for kind, s0, _ in open_regions:
        if kind is Post.MAGNITUDE:
            number = _join([u for u in units if u.first >= s0]).replace(" ", "")
            if not re.fullmatch(r"\d*(\.\d*)?", number):
                raise MalformedNumberRun(f"{number!r} cannot be scaled")
    opens = sorted((s0, k) for k, s0, _ in open_regions)
    start = opens[0][0]
    head = [u for u in units if u.last < start]
    text = _join(head)
    if units[len(head)].lead and start > 0:
        text += " "
    return text + _open_region_prefix(units[len(head):], opens)


def _open_region_prefix(inner: list[_Unit], opens: list[tuple[int, Post]]) -> str:
    """Settled start of the text of the outermost open region in ``opens``."""
    kind = opens[0][1]
    if kind is Post.MAGNITUDE:
        if len(opens) > 1:
            return DIGIT_WILDCARD
        # scaling by at least a hundred keeps the integer digits and two decimals in front
        whole, _, frac = _join(inner).replace(" ", "").partition(".")
        settled = (whole + frac[:2]).lstrip("0")
        return settled or DIGIT_WILDCARD
    if kind is Post.MINOR_CURRENCY:
        if len(opens) > 1:
            return "."
        # one digit may still be zero-padded; anything longer is settled
        digits = _join(inner).replace(" ", "")
        return "." + (digits if len(digits) >= 2 or not digits.isdigit() else "")
    if len(opens) == 1:
        return WILDCARD + _join(inner)
    nested = opens[1][0]
    before = [u for u in inner if u.last < nested]
    rest = inner[len(before):]
    text = WILDCARD + _join(before)
    if before and rest[0].lead:
        text += " "
    return text + _open_region_prefix(rest, opens[1:])


def apply_labels(spoken: Sequence[str], rows: Sequence[LabelRow], lexicon: Lexicon) -> str:
    return render(spoken, rows, lexicon)


def _matches_prefix(pattern: str, written: str, symbols: Optional[frozenset] = None) -> bool:
    """Whether ``pattern`` can begin ``written``; WILDCARD stands for one currency
    symbol (any character when ``symbols`` is None), DIGIT_WILDCARD for a digit."""
    if len(pattern) > len(written):
        return False
    for a, b in zip(pattern, written):
        if a == b:
            continue
        if a == WILDCARD:
            if symbols is None:
                continue
            if b not in symbols:
                return False
        elif not (a == DIGIT_WILDCARD and b.isdigit()):
            return False
    return True


# --------------------------------------------------------------------------
# inference


def infer_labels_from_trace(pair: SpokenWrittenPair, lexicon: Lexicon) -> list[LabelRow]:
    if pair.trace is None:
        raise TraceIncomplete("pair has no trace")
    n = len(pair.spoken)
    rows: list[Optional[LabelRow]] = [None] * n
    spans: dict[tuple[int, int], list[int]] = {}
    for t in pair.trace:
        if not 0 <= t.tok_idx < n:
            raise TraceIncomplete(f"trace index {t.tok_idx} out of range")
        if t.label.rewrite is not Rewrite.NONE:
            lexicon.lookup(pair.spoken[t.tok_idx], t.label.rewrite)
        rows[t.tok_idx] = t.label
        spans.setdefault(tuple(t.entity_span), []).append(t.tok_idx)
    ends: dict[int, int] = {}
    starts = []
    for span, idxs in spans.items():
        idxs.sort()
        if idxs != list(range(idxs[0], idxs[-1] + 1)):
            raise TraceIncomplete(f"entity {span} has untraced tokens")
        ends[idxs[-1]] = span[1]
        starts.append(span[0])
    starts.sort()
    written = pair.written
    lower = written.lower()
    cursor = 0
    for i, tok in enumerate(pair.spoken):
        if rows[i] is not None:
            if i in ends:
                cursor = ends[i]
            continue
        limit = next((s for s in starts if s >= cursor), len(written))
        at = lower.find(tok, cursor, limit)
        if at < 0:
            raise TraceIncomplete(f"untraced token {tok!r} not found in written form")
        glued = at > 0 and not written[at - 1].isspace()
        rows[i] = CONTINUATION if glued else IDENTITY
        cursor = at + len(tok)
    return rows


@dataclass
class _SearchContext:
    tokens: Sequence[str]
    written: str
    lexicon: Lexicon
    currency: bool
    later_symbol: list[bool] = field(default_factory=list)
    later_multiplier: list[bool] = field(default_factory=list)
    symbols: Optional[frozenset] = None
    allow_digits: bool = False


def _candidates(ctx: _SearchContext, i: int, open_: frozenset) -> Iterator[LabelRow]:
    tok = ctx.tokens[i]
    rewrites = [Rewrite.NONE] + ctx.lexicon.classes(tok)
    # attaching is preferred: inside numbers and regions an unneeded space is invisible
    spaces = [Space.ON] if i == 0 else [Space.OFF, Space.ON]
    for rw in rewrites:
        numeric = rw in NUMERIC_CLASSES
        prepends = [Prepend.NONE]
        if numeric and Post.MINOR_CURRENCY not in open_:
            prepends += [p for p, sym in PREPEND_SYMBOLS.items()
                         if p is not Prepend.DIGITS and sym in ctx.written]
            if ctx.allow_digits:
                prepends.append(Prepend.DIGITS)
        starts = [Post.NONE]
        if numeric:
            if ctx.currency and ctx.later_symbol[i] and Post.MAJOR_CURRENCY not in open_:
                starts.append(Post.MAJOR_CURRENCY)
            if ctx.currency and ctx.later_symbol[i] and not open_ & {Post.MINOR_CURRENCY, Post.MAGNITUDE}:
                starts.append(Post.MINOR_CURRENCY)
            if ctx.later_multiplier[i] and not open_ & {Post.MINOR_CURRENCY, Post.MAGNITUDE}:
                starts.append(Post.MAGNITUDE)
        for pre, sp, ps in itertools.product(prepends, spaces, starts):
            now_open = open_ | {ps} if ps is not Post.NONE else open_
            ends = [Post.NONE]
            if rw is Rewrite.CURRENCY_SYMBOL:
                ends += [k for k in (Post.MAJOR_CURRENCY, Post.MINOR_CURRENCY) if k in now_open]
            if rw in MULTIPLIER_CLASSES and Post.MAGNITUDE in now_open:
                ends.append(Post.MAGNITUDE)
            for pe in ends:
                yield LabelRow(rw, pre, sp, ps, pe)


def _open_after(open_: frozenset, row: LabelRow) -> frozenset:
    out = set(open_)
    if row.post_start is not Post.NONE:
        out.add(row.post_start)
    if row.post_end is not Post.NONE:
        out.discard(row.post_end)
    return frozenset(out)


def infer_labels_search(spoken: Sequence[str], written: str, lexicon: Lexicon,
                        beam: int = 64) -> Optional[list[LabelRow]]:
    """Lowest-ordered label sequence that replays to ``written``, or None.

    Beam search over per-token candidate rows; a partial hypothesis survives
    while its settled output is a prefix of the written form.
    """
    tokens = list(spoken)
    n = len(tokens)
    if n == 0:
        return [] if written == "" else None
    symbols = lexicon.outputs(Rewrite.CURRENCY_SYMBOL)
    ctx = _SearchContext(tokens, written, lexicon, any(s in written for s in symbols if s))
    if all(len(s) == 1 for s in symbols):
        ctx.symbols = frozenset(symbols)
    has_sym = [Rewrite.CURRENCY_SYMBOL in lexicon.classes(t) for t in tokens]
    has_mult = [bool(MULTIPLIER_CLASSES & set(lexicon.classes(t))) for t in tokens]
    ctx.later_symbol = [any(has_sym[j] for j in range(i + 1, n)) for i in range(n)]
    # a magnitude region holds only a number, so a multiplier must follow within a numeric stretch
    numeric = [bool(NUMERIC_CLASSES & set(lexicon.classes(t))) for t in tokens]
    reach = [False] * n
    for i in range(n - 2, -1, -1):
        reach[i] = numeric[i] and (has_mult[i + 1] or reach[i + 1])
    ctx.later_multiplier = reach

    # the padding prepend is a last resort: it makes almost any digit string derivable
    for allow_digits in (False, True):
        ctx.allow_digits = allow_digits
        found = _beam(ctx, beam)
        if found is not None:
            return found
    return None


def _beam(ctx: _SearchContext, beam: int) -> Optional[list[LabelRow]]:
    tokens, written, lexicon = ctx.tokens, ctx.written, ctx.lexicon
    n = len(tokens)
    states: list[tuple[tuple[LabelRow, ...], frozenset]] = [((), frozenset())]
    for i in range(n):
        nxt = []
        seen: set = set()
        for rows, open_ in states:
            for cand in _candidates(ctx, i, open_):
                new = rows + (cand,)
                try:
                    text, sig = _render(tokens[:i + 1], new, lexicon, True)
                except (ITNError, ValueError):
                    continue
                if _matches_prefix(text, written, ctx.symbols) and sig not in seen:
                    seen.add(sig)
                    nxt.append((new, _open_after(open_, cand)))
        states = nxt[:beam]
        if not states:
            return None
    for rows, open_ in states:
        if open_:
            continue
        try:
            if render(tokens, rows, lexicon) == written:
                return list(rows)
        except ITNError:
            continue
    return None


# --------------------------------------------------------------------------
# label files


def write_label_file(fh: TextIO, sentences: Iterable[tuple[Sequence[str], Sequence[LabelRow]]]) -> None:
    for k, (tokens, rows) in enumerate(sentences):
        if k:
            fh.write("\n")
        for tok, row in zip(tokens, rows):
            fh.write(f"{tok}\t{row.render()}\n")


def read_label_file(fh: TextIO) -> Iterator[tuple[list[str], list[LabelRow]]]:
    tokens: list[str] = []
    rows: list[LabelRow] = []
    for line in fh:
        line = line.rstrip("\n")
        if not line.strip():
            if tokens:
                yield tokens, rows
                tokens, rows = [], []
            continue
        tok, _, rest = line.partition("\t")
        tokens.append(tok)
        rows.append(LabelRow.parse(rest))
    if tokens:
        yield tokens, rows
