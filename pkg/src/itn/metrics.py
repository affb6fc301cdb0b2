"""Scoring: entity accuracy over aligned written forms, plus corpus statistics."""

from __future__ import annotations

import re
from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import EntityKind, ITNError, data_path

MATCH, SUBSTITUTE, DELETE, INSERT = "match", "substitute", "delete", "insert"

EVALUATED_KINDS = (EntityKind.CARDINAL, EntityKind.CURRENCY, EntityKind.FRACTION)

ENTITY_SHAPES = {
    EntityKind.CURRENCY: re.compile(r"[$£€]\d[\d,]*(\.\d+)?"),
    EntityKind.FRACTION: re.compile(r"\d+/\d+"),
    EntityKind.CARDINAL: re.compile(r"\d+"),
}


class ZeroWrittenEntities(ITNError):
    pass


class EmptyCorpus(ITNError):
    pass


def align_tokens(ref: Sequence[str], hyp: Sequence[str]) -> list[tuple[str, Optional[str], Optional[str]]]:
    """Minimum edit alignment as (op, ref_token, hyp_token) triples.

    The table holds the cost of aligning the remaining suffixes, so walking it
    from the front lets ties be broken left to right by operation preference.
    """
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if i == n:
                cost[i][j] = m - j
            elif j == m:
                cost[i][j] = n - i
            else:
                cost[i][j] = min(cost[i + 1][j + 1] + (ref[i] != hyp[j]),
                                 cost[i + 1][j] + 1, cost[i][j + 1] + 1)
    out = []
    i = j = 0
    while i < n or j < m:
        here = cost[i][j]
        if i < n and j < m and ref[i] == hyp[j] and here == cost[i + 1][j + 1]:
            out.append((MATCH, ref[i], hyp[j]))
            i, j = i + 1, j + 1
        elif i < n and j < m and ref[i] != hyp[j] and here == cost[i + 1][j + 1] + 1:
            out.append((SUBSTITUTE, ref[i], hyp[j]))
            i, j = i + 1, j + 1
        elif i < n and here == cost[i + 1][j] + 1:
            out.append((DELETE, ref[i], None))
            i += 1
        else:
            out.append((INSERT, None, hyp[j]))
            j += 1
    return out


def alignment_cost(alignment) -> int:
    return sum(op != MATCH for op, _, _ in alignment)


def classify_entity(token: str, kinds: Sequence[EntityKind] = EVALUATED_KINDS) -> Optional[EntityKind]:
    for kind in (EntityKind.CURRENCY, EntityKind.FRACTION, EntityKind.CARDINAL):
        if kind in kinds and ENTITY_SHAPES[kind].fullmatch(token):
            return kind
    return None


def _score(correct: int, error: int) -> dict:
    total = correct + error
    return {"correct": correct, "error": error,
            "accuracy": correct / total if total else "n/a"}


def accuracy(aligned: Iterable[Sequence[tuple]], kinds: Sequence[EntityKind] = EVALUATED_KINDS) -> dict:
    """Per-kind and pooled entity accuracy; a ref entity counts as correct only
    when its aligned hypothesis token is the identical string."""
    tally = {k: [0, 0] for k in kinds}
    for sentence in aligned:
        for op, ref_tok, _ in sentence:
            if ref_tok is None:
                continue
            kind = classify_entity(ref_tok, kinds)
            if kind is None:
                continue
            tally[kind][0 if op == MATCH else 1] += 1
    report = {"overall": _score(sum(c for c, _ in tally.values()), sum(e for _, e in tally.values()))}
    for kind in kinds:
        report[kind.rule_id] = _score(*tally[kind])
    return report


def evaluate(refs: Iterable[str], hyps: Iterable[str], kinds: Sequence[EntityKind] = EVALUATED_KINDS) -> dict:
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} reference lines but {len(hyps)} hypothesis lines")
    return accuracy((align_tokens(r.split(), h.split()) for r, h in zip(refs, hyps)), kinds)


def diversity(written_entity_count: int, spoken_form_count: int) -> Fraction:
    if written_entity_count <= 0:
        raise ZeroWrittenEntities("diversity needs at least one written entity")
    return Fraction(spoken_form_count, written_entity_count)


def load_stopwords(path: Union[str, Path, None] = None) -> frozenset:
    path = data_path("stopwords.txt") if path is None else Path(path)
    words = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line.lower())
    return frozenset(words)


def top_ngrams(corpus: Iterable[str], n: int, top_k: int, stopwords: frozenset) -> list[tuple]:
    counts: Counter = Counter()
    for line in corpus:
        toks = line.lower().split()
        for i in range(len(toks) - n + 1):
            gram = tuple(toks[i:i + n])
            if not any(t in stopwords for t in gram):
                counts[gram] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [g for g, _ in ranked[:top_k]]


def ngram_overlap(corpus_a: Iterable[str], corpus_b: Iterable[str], n: int = 1, top_k: int = 10000,
                  stopwords: Optional[frozenset] = None, jaccard: bool = False) -> float:
    """Percentage of shared n-grams among each corpus's top_k most frequent."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    stopwords = load_stopwords() if stopwords is None else frozenset(stopwords)
    a = set(top_ngrams(corpus_a, n, top_k, stopwords))
    b = set(top_ngrams(corpus_b, n, top_k, stopwords))
    if not a or not b:
        raise EmptyCorpus("a corpus has no n-grams outside the stopword list")
    shared = len(a & b)
    if jaccard:
        return 100.0 * shared / len(a | b)
    denom = top_k if len(a) >= top_k and len(b) >= top_k else min(len(a), len(b))
    return 100.0 * shared / denom
