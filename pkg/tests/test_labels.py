import io
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itn.core import (IDENTITY, LabelRow, MalformedNumberRun, Post, Prepend, Rewrite, Space, SpokenWrittenPair,
                      TraceIncomplete, UnbalancedMarkers, UnknownWord)
from itn.labels import apply_labels, infer_labels_from_trace, infer_labels_search, read_label_file, write_label_file
from itn.synth import synth_corpus
from itn.verbalize import AugmentConfig, augment_corpus

C, CS, V = Rewrite.CARDINAL, Rewrite.CURRENCY_SYMBOL, Rewrite.VERBATIM
MAJ, MIN = Post.MAJOR_CURRENCY, Post.MINOR_CURRENCY

DOLLAR_TOKENS = ["i", "have", "one", "twenty", "dollar"]
DOLLAR_ROWS = [
    LabelRow(Rewrite.NONE, Prepend.NONE, Space.ON, Post.NONE, Post.NONE),
    LabelRow(Rewrite.NONE, Prepend.NONE, Space.ON, Post.NONE, Post.NONE),
    LabelRow(C, Prepend.NONE, Space.ON, MAJ, Post.NONE),
    LabelRow(C, Prepend.NONE, Space.OFF, Post.NONE, Post.NONE),
    LabelRow(CS, Prepend.NONE, Space.OFF, Post.NONE, MAJ),
]


def test_dollar_rows_apply(lexicon):
    assert apply_labels(DOLLAR_TOKENS, DOLLAR_ROWS, lexicon) == "i have $120"


def test_dollar_rows_search(lexicon):
    rows = infer_labels_search(DOLLAR_TOKENS, "i have $120", lexicon)
    assert apply_labels(DOLLAR_TOKENS, rows, lexicon) == "i have $120"
    assert rows == DOLLAR_ROWS


@pytest.mark.parametrize("spoken,written", [
    ("in the nineties", "in the 90s"),
    ("twenty o five", "2005"),
    ("one hundred and twenty three", "123"),
    ("twelve thousand three hundred", "12300"),
    ("two point five million dollars", "$2.5 million"),
    ("five dollars twenty cents", "$5.20"),
    ("at seven o five", "at 7:05"),
    ("two over three", "2/3"),
    ("call five five five one two three four", "call 555-1234"),
    ("three thirty kilos", "330 kilos"),
    ("the twenty first time", "the 21st time"),
    ("doctor who", "Dr. who"),
])
def test_search_finds_replayable_rows(lexicon, spoken, written):
    tokens = spoken.split()
    rows = infer_labels_search(tokens, written, lexicon)
    assert rows is not None
    assert apply_labels(tokens, rows, lexicon) == written


def test_search_reports_no_derivation(lexicon):
    assert infer_labels_search(["one", "two"], "$99", lexicon) is None
    assert infer_labels_search(["hello"], "goodbye", lexicon) is None


def test_number_run_composition(lexicon):
    def run(words, rows=None):
        rows = rows or [LabelRow(C)] + [LabelRow(C, space=Space.OFF)] * (len(words) - 1)
        return apply_labels(words, rows, lexicon)
    assert run(["one", "twenty"]) == "120"
    assert run(["twenty", "five"]) == "25"
    assert run(["nineteen", "ninety", "nine"]) == "1999"
    assert run(["seven"], [LabelRow(C, Prepend.DIGITS)]) == "07"
    with pytest.raises(MalformedNumberRun):
        run(["five", "two"])


def test_measure_attach(lexicon):
    toks = ["three", "thirty", "kilos"]
    base = [LabelRow(C, post_start=Post.MEASURE), LabelRow(C, space=Space.OFF)]
    assert apply_labels(toks, base + [LabelRow(Rewrite.MEASURE, post_end=Post.MEASURE)], lexicon) == "330kg"
    assert apply_labels(toks, base + [LabelRow(post_end=Post.MEASURE)], lexicon) == "330 kilos"


def test_marker_errors(lexicon):
    toks = ["five", "five", "dollars", "cents"]
    with pytest.raises(UnbalancedMarkers):
        apply_labels(toks[:2], [LabelRow(C, post_start=MAJ), LabelRow(CS, space=Space.OFF)], lexicon)
    with pytest.raises(UnbalancedMarkers):
        apply_labels(toks, [LabelRow(C, post_start=MAJ), LabelRow(C, space=Space.OFF, post_start=MIN),
                            LabelRow(CS, space=Space.OFF, post_end=MAJ),
                            LabelRow(CS, space=Space.OFF, post_end=MIN)], lexicon)
    with pytest.raises(UnknownWord):
        apply_labels(["banana"], [LabelRow(C)], lexicon)
    with pytest.raises(ValueError):
        apply_labels(["a", "b"], [IDENTITY], lexicon)


def _pairs(grammar, seed, size=6, domain="source"):
    lines = list(synth_corpus(domain, size, seed))
    return list(augment_corpus(lines, AugmentConfig(n_variants_per_sentence=3, seed=seed), grammar))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["source", "target"]))
def test_trace_round_trip(grammar, lexicon, seed, domain):
    for p in _pairs(grammar, seed, domain=domain):
        assert apply_labels(p.spoken, infer_labels_from_trace(p, lexicon), lexicon) == p.written


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_search_agrees_with_augmenter(grammar, lexicon, seed):
    for p in _pairs(grammar, seed, size=3):
        rows = infer_labels_search(p.spoken, p.written, lexicon)
        assert rows is not None, p.written
        assert apply_labels(p.spoken, rows, lexicon) == p.written


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_dropping_a_region_end_is_detected(grammar, lexicon, seed):
    rng = random.Random(seed)
    for p in _pairs(grammar, seed, size=4):
        rows = infer_labels_from_trace(p, lexicon)
        ends = [i for i, r in enumerate(rows) if r.post_end is not Post.NONE]
        if not ends:
            continue
        i = rng.choice(ends)
        rows[i] = replace(rows[i], post_end=Post.NONE)
        with pytest.raises(UnbalancedMarkers):
            apply_labels(p.spoken, rows, lexicon)


def test_trace_must_cover_entities(lexicon):
    pair = SpokenWrittenPair(("i", "have", "two"), "i have 2", ())
    with pytest.raises(TraceIncomplete):
        infer_labels_from_trace(pair, lexicon)
    with pytest.raises(TraceIncomplete):
        infer_labels_from_trace(SpokenWrittenPair(("two",), "2", None), lexicon)


def test_label_file_round_trip():
    sentences = [(DOLLAR_TOKENS, DOLLAR_ROWS), (["hi"], [IDENTITY])]
    buf = io.StringIO()
    write_label_file(buf, sentences)
    text = buf.getvalue()
    assert text.splitlines()[2] == "one\tCardinal\tNone\tOn\tMajorCurrency\tNone"
    assert "\n\n" in text
    assert list(read_label_file(io.StringIO(text))) == [(list(t), list(r)) for t, r in sentences]
