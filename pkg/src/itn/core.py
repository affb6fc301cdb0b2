"""Shared domain types together with the lexicon and rule grammar they rely on."""

from __future__ import annotations

import enum
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union


class ITNError(Exception):
    """Base class for toolkit errors."""


class UnknownWord(ITNError):
    pass


class GrammarError(ITNError):
    pass


class MalformedEntity(ITNError):
    pass


class NoRuleMatch(ITNError):
    pass


class UnbalancedMarkers(ITNError):
    pass


class MalformedNumberRun(ITNError):
    pass


class TraceIncomplete(ITNError):
    pass


class EntityKind(enum.Enum):
    CARDINAL = "Cardinal"
    ORDINAL = "Ordinal"
    CURRENCY = "Currency"
    FRACTION = "Fraction"
    MEASURE = "Measure"
    ABBREVIATION = "Abbreviation"
    PHONE_NUMBER = "PhoneNumber"
    TIME = "Time"
    DECADE = "Decade"
    PERCENT = "Percent"

    @property
    def rule_id(self) -> str:
        # entry rule of the grammar for this kind, e.g. PhoneNumber -> phone_number
        return re.sub(r"(?<!^)(?=[A-Z])", "_", self.value).lower()


class _Label(enum.Enum):
    """Label enums keep declaration order; that order is the tie-break order."""

    @classmethod
    def parse(cls, text: str):
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown {cls.__name__} label {text!r}") from None

    @property
    def index(self) -> int:
        return _ORDER[type(self)][self]


class Rewrite(_Label):
    NONE = "None"
    CARDINAL = "Cardinal"
    CARDINAL_DECADE = "CardinalDecade"
    CARDINAL_HUNDRED = "CardinalHundred"
    CARDINAL_THOUSAND = "CardinalThousand"
    CARDINAL_MILLION = "CardinalMillion"
    CARDINAL_BILLION = "CardinalBillion"
    ORDINAL = "Ordinal"
    VERBATIM = "Verbatim"
    ABBREVIATE = "Abbreviate"
    MEASURE = "Measure"
    CURRENCY_SYMBOL = "CurrencySymbol"


class Prepend(_Label):
    NONE = "None"
    PERIOD = "Period"
    COLON = "Colon"
    SLASH = "Slash"
    HYPHEN = "Hyphen"
    DIGITS = "Digits"


class Space(_Label):
    ON = "On"
    OFF = "Off"


class Post(_Label):
    NONE = "None"
    MAJOR_CURRENCY = "MajorCurrency"
    MINOR_CURRENCY = "MinorCurrency"
    MEASURE = "Measure"
    MAGNITUDE = "Magnitude"


_ORDER = {cls: {m: i for i, m in enumerate(cls)} for cls in (Rewrite, Prepend, Space, Post)}

PREPEND_SYMBOLS = {
    Prepend.PERIOD: ".",
    Prepend.COLON: ":",
    Prepend.SLASH: "/",
    Prepend.HYPHEN: "-",
    Prepend.DIGITS: "0",
}

MULTIPLIER_CLASSES = {
    Rewrite.CARDINAL_HUNDRED,
    Rewrite.CARDINAL_THOUSAND,
    Rewrite.CARDINAL_MILLION,
    Rewrite.CARDINAL_BILLION,
}

NUMERIC_CLASSES = MULTIPLIER_CLASSES | {
    Rewrite.CARDINAL,
    Rewrite.CARDINAL_DECADE,
    Rewrite.ORDINAL,
    Rewrite.VERBATIM,
}


@dataclass(frozen=True)
class LabelRow:
    rewrite: Rewrite = Rewrite.NONE
    prepend: Prepend = Prepend.NONE
    space: Space = Space.ON
    post_start: Post = Post.NONE
    post_end: Post = Post.NONE

    def render(self) -> str:
        return "\t".join(
            (self.rewrite.value, self.prepend.value, self.space.value,
             self.post_start.value, self.post_end.value)
        )

    @classmethod
    def parse(cls, text: str) -> "LabelRow":
        parts = text.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise ValueError(f"label row needs 5 fields, got {len(parts)}: {text!r}")
        return cls(
            Rewrite.parse(parts[0]),
            Prepend.parse(parts[1]),
            Space.parse(parts[2]),
            Post.parse(parts[3]),
            Post.parse(parts[4]),
        )

    def key(self) -> tuple:
        return (self.rewrite.index, self.prepend.index, self.space.index,
                self.post_start.index, self.post_end.index)


IDENTITY = LabelRow()
CONTINUATION = LabelRow(space=Space.OFF)


@dataclass(frozen=True)
class WrittenEntity:
    kind: EntityKind
    raw: str
    start: int
    end: int
    canonical: str = ""

    @property
    def display(self) -> str:
        """Written form the spoken variants of this entity map back to."""
        if self.kind is EntityKind.TIME and self.canonical:
            m = re.fullmatch(r"(\d+) hours (\d+) minutes", self.canonical)
            if m:
                return f"{int(m.group(1))}:{int(m.group(2)):02d}"
        return self.canonical or self.raw


@dataclass(frozen=True)
class TraceEntry:
    tok_idx: int
    rule: str
    alt: int
    pos: int
    entity_kind: EntityKind
    entity_span: tuple[int, int]
    label: LabelRow

    def to_json(self) -> dict:
        return {
            "tok_idx": self.tok_idx,
            "rule": self.rule,
            "alt": self.alt,
            "pos": self.pos,
            "entity_kind": self.entity_kind.value,
            "entity_span": list(self.entity_span),
            "label": self.label.render(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TraceEntry":
        return cls(
            d["tok_idx"], d["rule"], d["alt"], d.get("pos", 0),
            EntityKind(d["entity_kind"]), tuple(d["entity_span"]),
            LabelRow.parse(d["label"]),
        )


@dataclass(frozen=True)
class SpokenWrittenPair:
    spoken: tuple[str, ...]
    written: str
    trace: Optional[tuple[TraceEntry, ...]] = None
    line: int = 0

    def to_json(self) -> dict:
        d = {"spoken": list(self.spoken), "written": self.written}
        if self.trace is not None:
            d["trace"] = [t.to_json() for t in self.trace]
        d["line"] = self.line
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SpokenWrittenPair":
        trace = d.get("trace")
        return cls(
            tuple(d["spoken"]), d["written"],
            None if trace is None else tuple(TraceEntry.from_json(t) for t in trace),
            d.get("line", 0),
        )


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def data_path(name: str) -> Path:
    return Path(str(resources.files("itn") / "data" / name))


# --------------------------------------------------------------------------
# lexicon


class Lexicon:
    """(word, rewrite class) -> written fragment."""

    def __init__(self, entries: Iterable[tuple[str, Rewrite, str]] = ()):
        self._table: dict[tuple[str, Rewrite], str] = {}
        self._classes: dict[str, list[Rewrite]] = {}
        for word, cls, out in entries:
            self.add(word, cls, out)

    def add(self, word: str, cls: Rewrite, output: str) -> None:
        if cls is Rewrite.NONE:
            raise ValueError(f"lexicon entry for {word!r} has class None")
        key = (word, cls)
        if key in self._table:
            raise ValueError(f"duplicate lexicon entry {word!r}/{cls.value}")
        self._table[key] = output
        self._classes.setdefault(word, []).append(cls)

    def lookup(self, word: str, cls: Rewrite) -> str:
        try:
            return self._table[(word, cls)]
        except KeyError:
            raise UnknownWord(f"{word!r} has no {cls.value} rewrite") from None

    def classes(self, word: str) -> list[Rewrite]:
        return sorted(self._classes.get(word, ()), key=lambda c: c.index)

    def outputs(self, cls: Rewrite) -> set[str]:
        return {out for (_, c), out in self._table.items() if c is cls}

    def words(self) -> set[str]:
        return set(self._classes)

    def __contains__(self, key) -> bool:
        return key in self._table

    def __len__(self) -> int:
        return len(self._table)

    def items(self):
        return self._table.items()

    @classmethod
    def parse(cls, text: str) -> "Lexicon":
        lex = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 2:
                parts.append("")
            if len(parts) != 3:
                raise ValueError(f"lexicon line {lineno}: expected 3 columns")
            word, klass, out = parts
            lex.add(nfc(word), Rewrite.parse(klass), nfc(out))
        return lex

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "Lexicon":
        path = data_path("lexicon.tsv") if path is None else Path(path)
        return cls.parse(path.read_text(encoding="utf-8"))


def lexicon_lookup(word: str, cls: Rewrite, lexicon: Lexicon) -> str:
    if cls is Rewrite.NONE:
        raise ValueError("lexicon_lookup needs a rewrite class other than None")
    return lexicon.lookup(word, cls)


# --------------------------------------------------------------------------
# rewrite grammar
#
# Template items:
#   word            literal spoken word (rewrite class = stanza default)
#   word:Class      literal with explicit rewrite class
#   {1}             capture text, split on whitespace, lowercased
#   {1:rule}        expansions of rule on capture 1
#   [Type ... ]     post-processing region around the enclosed items
# Any item may be prefixed with `+` (space before it) and/or `<Prepend>`.


@dataclass(frozen=True)
class Literal:
    word: str
    rewrite: Optional[Rewrite]
    pos: int


@dataclass(frozen=True)
class Capture:
    group: int
    rule: Optional[str]


@dataclass(frozen=True)
class Region:
    kind: Post
    items: tuple


@dataclass(frozen=True)
class Item:
    atom: Union[Literal, Capture, Region]
    space: bool = False
    prepend: Prepend = Prepend.NONE


@dataclass(frozen=True)
class Alternative:
    index: int
    text: str
    items: tuple[Item, ...]

    def literals(self) -> list[Literal]:
        out: list[Literal] = []

        def walk(items):
            for it in items:
                if isinstance(it.atom, Literal):
                    out.append(it.atom)
                elif isinstance(it.atom, Region):
                    walk(it.atom.items)

        walk(self.items)
        return out


@dataclass(frozen=True)
class RewriteRule:
    id: str
    pattern: str
    alternatives: tuple[Alternative, ...]
    default_class: Rewrite = Rewrite.NONE
    regex: re.Pattern = field(compare=False, repr=False, default=None)


_MOD = re.compile(r"^(\+)?(?:<(\w+)>)?(\+)?")


def _parse_template(text: str, first_alt: int, default_class: Rewrite) -> tuple:
    tokens = text.split()
    pos = [0]

    def parse_items(i: int, closing: bool) -> tuple[list[Item], int]:
        items: list[Item] = []
        while i < len(tokens):
            tok = tokens[i]
            if tok == "]":
                if not closing:
                    raise GrammarError(f"unbalanced ']' in template {text!r}")
                return items, i + 1
            m = _MOD.match(tok)
            space = bool(m.group(1) or m.group(3))
            prepend = Prepend.parse(m.group(2)) if m.group(2) else Prepend.NONE
            body = tok[m.end():]
            trailing = 0
            while body.endswith("]") and not body.startswith("["):
                body = body[:-1]
                trailing += 1
            if body.startswith("["):
                kind = Post.parse(body[1:])
                if kind is Post.NONE:
                    raise GrammarError("region type cannot be None")
                inner, i = parse_items(i + 1, True)
                if not inner:
                    raise GrammarError(f"empty region in {text!r}")
                items.append(Item(Region(kind, tuple(inner)), space, prepend))
                continue
            cm = re.fullmatch(r"\{(\d+)(?::(\w+))?\}", body)
            if cm:
                atom = Capture(int(cm.group(1)), cm.group(2))
            elif body:
                word, _, klass = body.partition(":") if ":" in body and not body.startswith(":") else (body, "", "")
                rewrite = Rewrite.parse(klass) if klass else default_class
                atom = Literal(word, rewrite, pos[0])
                pos[0] += 1
            else:
                raise GrammarError(f"empty template item in {text!r}")
            items.append(Item(atom, space, prepend))
            i += 1
            if trailing:
                if not closing or trailing > 1:
                    raise GrammarError(f"unbalanced ']' in template {text!r}")
                return items, i
        if closing:
            raise GrammarError(f"unclosed region in template {text!r}")
        return items, i

    items, _ = parse_items(0, False)
    if not items:
        raise GrammarError("empty emit template")
    return tuple(items)


def _full_span_groups(pattern: str) -> set[int]:
    """Capture groups whose parentheses enclose the whole pattern."""
    groups: set[int] = set()
    stack: list[tuple[int, Optional[int]]] = []
    n = 0
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\":
            i += 2
            continue
        if ch == "[":
            j = i + 1
            if j < len(pattern) and pattern[j] == "]":
                j += 1
            while j < len(pattern) and pattern[j] != "]":
                j += 2 if pattern[j] == "\\" else 1
            i = j + 1
            continue
        if ch == "(":
            if pattern.startswith("(?", i) and not pattern.startswith("(?P<", i):
                stack.append((i, None))
            else:
                n += 1
                stack.append((i, n))
        elif ch == ")":
            start, g = stack.pop()
            if g is not None and start == 0 and i == len(pattern) - 1:
                groups.add(g)
        i += 1
    return groups


class Grammar:
    """Ordered collection of rewrite-rule stanzas; several stanzas may share an id."""

    def __init__(self, rules: Iterable[RewriteRule]):
        self.rules: dict[str, list[RewriteRule]] = {}
        for rule in rules:
            self.rules.setdefault(rule.id, []).append(rule)
        self._alts: dict[str, list[Alternative]] = {
            rid: [a for r in stanzas for a in r.alternatives] for rid, stanzas in self.rules.items()
        }
        self._check_references()
        self._check_cycles()

    def stanzas(self, rule_id: str) -> list[RewriteRule]:
        try:
            return self.rules[rule_id]
        except KeyError:
            raise GrammarError(f"unknown rule {rule_id!r}") from None

    def alternative(self, rule_id: str, alt: int) -> Alternative:
        return self._alts[rule_id][alt]

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self.rules

    def _references(self, rule: RewriteRule):
        for alt in rule.alternatives:
            def walk(items):
                for it in items:
                    if isinstance(it.atom, Capture) and it.atom.rule:
                        yield it.atom
                    elif isinstance(it.atom, Region):
                        yield from walk(it.atom.items)
            yield from walk(alt.items)

    def _check_references(self) -> None:
        for stanzas in self.rules.values():
            for rule in stanzas:
                for cap in self._references(rule):
                    if cap.rule not in self.rules:
                        raise GrammarError(f"rule {rule.id!r} invokes unknown rule {cap.rule!r}")
                    if cap.group > rule.regex.groups:
                        raise GrammarError(f"rule {rule.id!r} references missing group {cap.group}")

    def _check_cycles(self) -> None:
        # only invocations on a capture that can span the whole match may recurse
        edges: dict[str, set[str]] = {rid: set() for rid in self.rules}
        for rid, stanzas in self.rules.items():
            for rule in stanzas:
                full = _full_span_groups(rule.pattern)
                for cap in self._references(rule):
                    if cap.group in full:
                        edges[rid].add(cap.rule)
        state: dict[str, int] = {}
        path: list[str] = []

        def visit(node: str) -> None:
            state[node] = 1
            path.append(node)
            for nxt in sorted(edges[node]):
                if state.get(nxt) == 1:
                    cycle = path[path.index(nxt):] + [nxt]
                    raise GrammarError("rule cycle: " + " -> ".join(cycle))
                if nxt not in state:
                    visit(nxt)
            path.pop()
            state[node] = 2

        for rid in self.rules:
            if rid not in state:
                visit(rid)

    def literal_words(self) -> set[tuple[str, Rewrite]]:
        out = set()
        for stanzas in self.rules.values():
            for rule in stanzas:
                for alt in rule.alternatives:
                    for lit in alt.literals():
                        out.add((lit.word, lit.rewrite))
        return out

    def spoken_vocabulary(self) -> set[str]:
        return {w for w, _ in self.literal_words()}

    @classmethod
    def parse(cls, text: str) -> "Grammar":
        rules: list[RewriteRule] = []
        counts: dict[str, int] = {}
        cur: Optional[dict] = None

        def finish():
            if cur is None:
                return
            if cur["pattern"] is None:
                raise GrammarError(f"rule {cur['id']!r} has no match line")
            if not cur["emits"]:
                raise GrammarError(f"rule {cur['id']!r} has no emit line")
            try:
                regex = re.compile(cur["pattern"])
            except re.error as exc:
                raise GrammarError(f"rule {cur['id']!r}: bad pattern: {exc}") from None
            first = counts.get(cur["id"], 0)
            alts = tuple(
                Alternative(first + k, t, _parse_template(t, first + k, cur["class"]))
                for k, t in enumerate(cur["emits"])
            )
            counts[cur["id"]] = first + len(alts)
            rules.append(RewriteRule(cur["id"], cur["pattern"], alts, cur["class"], regex))

        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            rest = rest.strip()
            if key == "rule":
                finish()
                cur = {"id": rest, "pattern": None, "emits": [], "class": Rewrite.NONE}
            elif cur is None:
                raise GrammarError(f"line {lineno}: {key!r} outside a rule stanza")
            elif key == "match":
                cur["pattern"] = rest
            elif key == "class":
                cur["class"] = Rewrite.parse(rest)
            elif key == "emit":
                cur["emits"].append(nfc(rest))
            else:
                raise GrammarError(f"line {lineno}: unknown directive {key!r}")
        finish()
        return cls(rules)

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "Grammar":
        path = data_path("rules.g") if path is None else Path(path)
        return cls.parse(path.read_text(encoding="utf-8"))
