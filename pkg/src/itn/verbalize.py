"""Exhaustive spoken-form expansion of entities and sentence-level augmentation."""

from __future__ import annotations

import itertools
import logging
import multiprocessing
import random
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

from .core import (
    Capture,
    EntityKind,
    Grammar,
    GrammarError,
    ITNError,
    LabelRow,
    Literal,
    NoRuleMatch,
    Post,
    Prepend,
    Region,
    Rewrite,
    Space,
    SpokenWrittenPair,
    TraceEntry,
    WrittenEntity,
    nfc,
)
from .extract import PatternSet, canonicalize, default_patterns, extract_entities

log = logging.getLogger(__name__)

_WORD = re.compile(r"\w+(?:'\w+)*")


@dataclass(frozen=True)
class Emission:
    """One spoken token produced by a rule template, with its label annotation."""

    word: str
    rule: str
    alt: int
    pos: int
    rewrite: Rewrite = Rewrite.NONE
    prepend: Prepend = Prepend.NONE
    space: bool = False
    post_start: Post = Post.NONE
    post_end: Post = Post.NONE


@dataclass(frozen=True)
class VariantSet:
    entity: WrittenEntity
    forms: tuple[tuple[Emission, ...], ...]

    @property
    def spoken_forms(self) -> list[tuple[str, ...]]:
        return [tuple(e.word for e in form) for form in self.forms]


@dataclass(frozen=True)
class AugmentConfig:
    n_variants_per_sentence: int = 8
    max_expansions_per_entity: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_variants_per_sentence < 1:
            raise ValueError("n_variants_per_sentence must be positive")
        if self.max_expansions_per_entity < 1:
            raise ValueError("max_expansions_per_entity must be positive")


class Expander:
    """Depth-first expansion of grammar rules with a per-call cap and memo."""

    def __init__(self, grammar: Grammar, cap: int):
        self.grammar = grammar
        self.cap = cap
        self._memo: dict[tuple[str, str], list[tuple[Emission, ...]]] = {}
        self._stack: set[tuple[str, str]] = set()

    def expand(self, rule_id: str, text: str) -> list[tuple[Emission, ...]]:
        key = (rule_id, text)
        if key in self._memo:
            return self._memo[key]
        if key in self._stack:
            raise GrammarError(f"rule {rule_id!r} recurses on {text!r}")
        self._stack.add(key)
        try:
            out = self._dedup(self._generate(rule_id, text))
        finally:
            self._stack.discard(key)
        self._memo[key] = out
        return out

    def _dedup(self, seqs: Iterable[tuple[Emission, ...]]) -> list[tuple[Emission, ...]]:
        seen = set()
        out = []
        for seq in seqs:
            words = tuple(e.word for e in seq)
            if words in seen:
                continue
            seen.add(words)
            out.append(seq)
            if len(out) >= self.cap:
                break
        return out

    def _generate(self, rule_id: str, text: str):
        for stanza in self.grammar.stanzas(rule_id):
            m = stanza.regex.fullmatch(text)
            if not m:
                continue
            for alt in stanza.alternatives:
                yield from self._instantiate(alt.items, m, rule_id, alt.index)

    def _instantiate(self, items, m, rule_id, alt):
        options = []
        for item in items:
            opts = self._item(item, m, rule_id, alt)
            if not opts:
                return
            options.append(opts)
        for combo in itertools.product(*options):
            yield tuple(e for part in combo for e in part)

    def _item(self, item, m, rule_id, alt) -> list[tuple[Emission, ...]]:
        atom = item.atom
        if isinstance(atom, Literal):
            opts = [(Emission(atom.word, rule_id, alt, atom.pos, atom.rewrite),)]
        elif isinstance(atom, Capture):
            text = m.group(atom.group)
            if text is None:
                return []
            if atom.rule:
                opts = self.expand(atom.rule, text)
            else:
                words = tuple(Emission(w, rule_id, alt, -atom.group) for w in text.lower().split())
                opts = [words] if words else []
        else:
            opts = self._dedup(
                _mark_region(seq, atom.kind) for seq in self._instantiate(atom.items, m, rule_id, alt)
            )
        if item.space or item.prepend is not Prepend.NONE:
            opts = [_mark_first(seq, item.space, item.prepend) for seq in opts]
        return opts


def _mark_region(seq: tuple[Emission, ...], kind: Post) -> tuple[Emission, ...]:
    first, last = seq[0], seq[-1]
    if first.post_start is not Post.NONE or last.post_end is not Post.NONE:
        raise GrammarError(f"overlapping {kind.value} regions")
    if len(seq) == 1:
        return (replace(first, post_start=kind, post_end=kind),)
    return (replace(first, post_start=kind),) + seq[1:-1] + (replace(last, post_end=kind),)


def _mark_first(seq, space: bool, prepend: Prepend):
    first = seq[0]
    if prepend is not Prepend.NONE:
        if first.prepend is not Prepend.NONE and first.prepend is not prepend:
            raise GrammarError(f"conflicting prepend labels on {first.word!r}")
        first = replace(first, prepend=prepend)
    if space:
        first = replace(first, space=True)
    return (first,) + seq[1:]


def expand_entity(entity: WrittenEntity, grammar: Grammar, max_expansions: int = 64,
                  expander: Optional[Expander] = None) -> VariantSet:
    if not entity.canonical:
        raise ValueError("entity must be canonicalized before expansion")
    expander = expander or Expander(grammar, max_expansions)
    rule_id = entity.kind.rule_id
    if rule_id not in grammar:
        raise NoRuleMatch(f"grammar has no rule for {entity.kind.value}")
    forms = expander.expand(rule_id, entity.canonical)
    if not forms:
        raise NoRuleMatch(f"no rule covers {entity.kind.value} {entity.canonical!r}")
    return VariantSet(entity, tuple(forms))


# --------------------------------------------------------------------------
# sentence level


def spoken_words(text: str) -> list[tuple[str, int]]:
    """Lowercased word tokens with their offsets; punctuation is dropped."""
    return [(m.group(0).lower(), m.start()) for m in _WORD.finditer(text)]


def _emission_label(em: Emission, first: bool, spaced: bool) -> LabelRow:
    space = Space.ON if (spaced if first else em.space) else Space.OFF
    return LabelRow(em.rewrite, em.prepend, space, em.post_start, em.post_end)


@dataclass
class _Plan:
    written: str
    # ("word", token) or ("entity", index into variant sets)
    parts: list
    variants: list
    spans: list
    spaced: list


def _plan_sentence(sentence: str, grammar: Grammar, patterns: PatternSet,
                   expander: Expander) -> _Plan:
    entities = [canonicalize(e) for e in extract_entities(sentence, patterns)]
    parts = []
    variants = []
    spans = []
    spaced = []
    written = []
    pos = 0
    cursor = 0
    for ent in entities:
        chunk = sentence[cursor:ent.start]
        parts.extend(("word", w) for w, _ in spoken_words(chunk))
        written.append(chunk)
        pos += len(chunk)
        display = ent.display
        before = "".join(written)
        spaced.append(not before or before[-1].isspace())
        variants.append(expand_entity(ent, grammar, expander=expander))
        spans.append((pos, pos + len(display)))
        parts.append(("entity", len(variants) - 1))
        written.append(display)
        pos += len(display)
        cursor = ent.end
    tail = sentence[cursor:]
    parts.extend(("word", w) for w, _ in spoken_words(tail))
    written.append(tail)
    return _Plan("".join(written), parts, variants, spans, spaced)


def augment_sentence(sentence: str, config: AugmentConfig, grammar: Grammar,
                     patterns: Optional[PatternSet] = None, line: int = 0,
                     expander: Optional[Expander] = None) -> list[SpokenWrittenPair]:
    sentence = nfc(sentence.strip())
    patterns = patterns or default_patterns()
    expander = expander or Expander(grammar, config.max_expansions_per_entity)
    plan = _plan_sentence(sentence, grammar, patterns, expander)
    sizes = [len(v.forms) for v in plan.variants]
    total = 1
    for s in sizes:
        total *= s
    n = config.n_variants_per_sentence
    if total <= n:
        picks = range(total)
    else:
        rng = random.Random(f"{config.seed}\x1f{sentence}")
        picks = sorted(rng.sample(range(total), n))
    pairs = []
    for flat in picks:
        choice = []
        for s in reversed(sizes):
            flat, r = divmod(flat, s)
            choice.append(r)
        choice.reverse()
        spoken: list[str] = []
        trace: list[TraceEntry] = []
        for kind, ref in plan.parts:
            if kind == "word":
                spoken.append(ref)
                continue
            vs = plan.variants[ref]
            form = vs.forms[choice[ref]]
            for k, em in enumerate(form):
                label = _emission_label(em, k == 0, plan.spaced[ref])
                trace.append(TraceEntry(len(spoken), em.rule, em.alt, em.pos, vs.entity.kind,
                                        plan.spans[ref], label))
                spoken.append(em.word)
        pairs.append(SpokenWrittenPair(tuple(spoken), plan.written, tuple(trace), line))
    return pairs


# --------------------------------------------------------------------------
# corpus level


@dataclass
class AugmentStats:
    sentences: int = 0
    pairs: int = 0
    skipped: int = 0
    written_entities: int = 0
    spoken_forms: int = 0
    entity_counts: Counter = field(default_factory=Counter)

    def to_json(self) -> dict:
        return {
            "sentences": self.sentences,
            "pairs": self.pairs,
            "skipped": self.skipped,
            "written_entities": self.written_entities,
            "spoken_forms": self.spoken_forms,
            "entity_counts": {k: self.entity_counts[k] for k in sorted(self.entity_counts)},
        }


def spoken_form_counts(pairs: list[SpokenWrittenPair]) -> dict[tuple[int, int], set]:
    """Distinct spoken renderings per written entity span across a sentence's pairs."""
    forms: dict[tuple[int, int], set] = {}
    for p in pairs:
        by_span: dict[tuple[int, int], list[str]] = {}
        for t in p.trace or ():
            by_span.setdefault(t.entity_span, []).append(p.spoken[t.tok_idx])
        for span, words in by_span.items():
            forms.setdefault(span, set()).add(tuple(words))
    return forms


_WORKER: dict = {}


def _init_worker(config, grammar, patterns):
    _WORKER["args"] = (config, grammar, patterns)
    _WORKER["expander"] = Expander(grammar, config.max_expansions_per_entity)


def _augment_line(item):
    lineno, text = item
    config, grammar, patterns = _WORKER["args"]
    try:
        return lineno, augment_sentence(text, config, grammar, patterns, lineno, _WORKER["expander"]), None
    except ITNError as exc:
        return lineno, None, f"{type(exc).__name__}: {exc}"


def augment_corpus(lines: Iterable[str], config: AugmentConfig, grammar: Grammar,
                   patterns: Optional[PatternSet] = None, stats: Optional[AugmentStats] = None,
                   workers: int = 1, chunk: int = 512) -> Iterator[SpokenWrittenPair]:
    """Stream pairs for each non-blank line; bad lines are logged and skipped."""
    patterns = patterns or default_patterns()
    stats = stats if stats is not None else AugmentStats()
    items = ((i, line) for i, line in enumerate(lines) if line.strip())

    def consume(results):
        for lineno, pairs, err in results:
            stats.sentences += 1
            if err is not None:
                stats.skipped += 1
                log.warning("line %d skipped: %s", lineno + 1, err)
                continue
            forms = spoken_form_counts(pairs)
            if pairs and pairs[0].trace is not None:
                kinds = {t.entity_span: t.entity_kind for t in pairs[0].trace}
                for span, kind in kinds.items():
                    stats.entity_counts[kind.value] += 1
            stats.written_entities += len(forms)
            stats.spoken_forms += sum(len(v) for v in forms.values())
            stats.pairs += len(pairs)
            yield from pairs

    if workers <= 1:
        _init_worker(config, grammar, patterns)
        yield from consume(_augment_line(it) for it in items)
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers, initializer=_init_worker, initargs=(config, grammar, patterns)) as pool:
        while True:
            batch = list(itertools.islice(items, chunk))
            if not batch:
                break
            yield from consume(pool.map(_augment_line, batch))
