import re

import pytest

from itn.extract import extract_entities
from itn.metrics import ngram_overlap
from itn.synth import synth_corpus


def test_size_and_determinism():
    a = list(synth_corpus("source", 50, 3))
    assert len(a) == 50
    assert a == list(synth_corpus("source", 50, 3))
    assert a != list(synth_corpus("source", 50, 4))


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        list(synth_corpus("source", 0, 0))
    with pytest.raises(ValueError):
        list(synth_corpus("weather", 5, 0))


def test_source_and_target_carry_entities():
    for domain in ("source", "target"):
        lines = list(synth_corpus(domain, 100, 0))
        assert sum(bool(extract_entities(l)) for l in lines) == 100


def test_general_domain_is_spoken():
    for line in synth_corpus("general", 200, 0):
        assert not re.search(r"\d", line) and line == line.lower()


def test_domain_gap():
    src = list(synth_corpus("source", 2000, 0))
    tgt = list(synth_corpus("target", 2000, 0))
    assert ngram_overlap(src, tgt, 1) < 40.0
    assert ngram_overlap(src, tgt, 2) < ngram_overlap(src, tgt, 1)
