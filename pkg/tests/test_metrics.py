import random
from collections import Counter
from fractions import Fraction

import pytest

from itn.core import EntityKind
from itn.metrics import (DELETE, INSERT, MATCH, SUBSTITUTE, ZeroWrittenEntities, accuracy, align_tokens,
                         alignment_cost, classify_entity, diversity, evaluate, load_stopwords, ngram_overlap)
from itn.synth import synth_corpus


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def test_alignment_cost_is_edit_distance():
    rng = random.Random(0)
    for _ in range(1000):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        al = align_tokens(a, b)
        assert alignment_cost(al) == levenshtein(a, b)
        assert [r for _, r, _ in al if r is not None] == a
        assert [h for _, _, h in al if h is not None] == b


def test_alignment_examples():
    assert align_tokens(["a", "b"], ["a", "b"]) == [(MATCH, "a", "a"), (MATCH, "b", "b")]
    assert align_tokens("i have $120".split(), "i have 120".split())[2] == (SUBSTITUTE, "$120", "120")
    assert align_tokens([], ["x", "y"]) == [(INSERT, None, "x"), (INSERT, None, "y")]
    assert align_tokens(["x"], []) == [(DELETE, "x", None)]
    # equal cost: substitution is preferred over a delete/insert pair
    assert align_tokens(["a"], ["b"]) == [(SUBSTITUTE, "a", "b")]


@pytest.mark.parametrize("tok,kind", [
    ("$120", EntityKind.CURRENCY), ("£1,200.50", EntityKind.CURRENCY), ("3/4", EntityKind.FRACTION),
    ("42", EntityKind.CARDINAL), ("hello", None), ("7:30", None), ("5kg", None),
])
def test_classify(tok, kind):
    assert classify_entity(tok) is kind


def recount(refs, hyps):
    """Hypotheses here differ from references only by in-place substitutions
    with strings that occur nowhere in the reference, so position i of the
    hypothesis is the aligned token of reference position i."""
    tally = {k: [0, 0] for k in ("cardinal", "currency", "fraction")}
    for r, h in zip(refs, hyps):
        for a, b in zip(r.split(), h.split()):
            kind = classify_entity(a)
            if kind is not None:
                tally[kind.rule_id][a != b] += 1
    return tally


@pytest.mark.parametrize("seed", range(100))
def test_accuracy_matches_recount(seed):
    rng = random.Random(seed)
    refs = list(synth_corpus(rng.choice(["source", "target"]), 20, seed))
    hyps = []
    for k, line in enumerate(refs):
        toks = line.split()
        for i in range(len(toks)):
            if rng.random() < 0.25:
                toks[i] = f"#{k}.{i}{toks[i]}"
        hyps.append(" ".join(toks))
    report = evaluate(refs, hyps)
    tally = recount(refs, hyps)
    for kind, (c, e) in tally.items():
        assert (report[kind]["correct"], report[kind]["error"]) == (c, e)
        assert report[kind]["accuracy"] == (c / (c + e) if c + e else "n/a")
    c = sum(v[0] for v in tally.values())
    e = sum(v[1] for v in tally.values())
    assert report["overall"]["accuracy"] == c / (c + e)


def test_accuracy_hand_cases():
    report = evaluate(["1 2 3", "hi"], ["1 2 4", "hi"])
    assert report["cardinal"]["accuracy"] == pytest.approx(2 / 3)
    assert report["currency"]["accuracy"] == "n/a"
    perfect = evaluate(["$5 and 1/2 of 3"], ["$5 and 1/2 of 3"])
    assert all(perfect[k]["accuracy"] == 1.0 for k in ("overall", "cardinal", "currency", "fraction"))


def test_accuracy_monotone_under_correction():
    refs = ["pay $5 for 3 and 1/2"]
    hyps = ["pay 5 for three and 1/2"]
    before = evaluate(refs, hyps)
    after = evaluate(refs, ["pay $5 for three and 1/2"])
    for k in ("overall", "cardinal", "currency", "fraction"):
        if before[k]["accuracy"] != "n/a":
            assert after[k]["accuracy"] >= before[k]["accuracy"]


def test_diversity():
    assert diversity(3, 20) == Fraction(20, 3)
    assert diversity(7, 7) == 1
    with pytest.raises(ZeroWrittenEntities):
        diversity(0, 3)


def overlap_recount(a, b, n, top_k, stop):
    def top(corpus):
        grams = Counter()
        for line in corpus:
            w = line.lower().split()
            for g in zip(*(w[i:] for i in range(n))):
                if not set(g) & stop:
                    grams[g] += 1
        return set(sorted(grams, key=lambda g: (-grams[g], g))[:top_k])
    ta, tb = top(a), top(b)
    denom = top_k if min(len(ta), len(tb)) >= top_k else min(len(ta), len(tb))
    return 100.0 * len(ta & tb) / denom


@pytest.mark.parametrize("seed", range(20))
def test_overlap_matches_recount(seed):
    rng = random.Random(seed)
    stop = load_stopwords()
    a = list(synth_corpus("source", 50, seed))
    b = list(synth_corpus(rng.choice(["source", "target"]), 50, seed + 1))
    for n in (1, 2):
        for top_k in (5, 50, 10000):
            assert ngram_overlap(a, b, n, top_k, stop) == pytest.approx(overlap_recount(a, b, n, top_k, stop))


def test_overlap_edges():
    assert ngram_overlap(["red green blue"], ["blue green red"]) == 100.0
    assert ngram_overlap(["red green"], ["cyan magenta"]) == 0.0
    assert ngram_overlap(["red green"], ["green cyan"], jaccard=True) == pytest.approx(100 / 3)


def test_stopwords_list():
    stop = load_stopwords()
    assert len(stop) == 150 and "the" in stop and "one" not in stop
