import pytest

from itn.core import EntityKind, MalformedEntity
from itn.extract import PatternSet, canonical_text, canonicalize, extract_entities


def kinds(text):
    return [(e.kind, e.raw) for e in extract_entities(text)]


def test_finds_each_kind():
    found = kinds("at 7:30 call 555-1234 to pay $1,200.50 for 3/4 of 20% of 5kg on the 3rd in the 90s or 42")
    assert found == [
        (EntityKind.TIME, "7:30"), (EntityKind.PHONE_NUMBER, "555-1234"),
        (EntityKind.CURRENCY, "$1,200.50"), (EntityKind.FRACTION, "3/4"), (EntityKind.PERCENT, "20%"),
        (EntityKind.MEASURE, "5kg"), (EntityKind.ORDINAL, "3rd"), (EntityKind.DECADE, "90s"),
        (EntityKind.CARDINAL, "42"),
    ]


def test_spans_do_not_overlap():
    ents = extract_entities("$5 and 5 and 5g and 5th and 12:05")
    for a, b in zip(ents, ents[1:]):
        assert a.end <= b.start


def test_text_without_numbers():
    assert extract_entities("hello there general kenobi") == []


@pytest.mark.parametrize("kind,raw,canon", [
    (EntityKind.CARDINAL, "1,234", "1234"),
    (EntityKind.CURRENCY, "$1,200.50", "$1200.50"),
    (EntityKind.TIME, "7:05", "7 hours 5 minutes"),
    (EntityKind.MEASURE, "1.5Kkg", "1500kg"),
    (EntityKind.FRACTION, "3 / 4", "3/4"),
    (EntityKind.DECADE, "'90s", "90s"),
    (EntityKind.ORDINAL, "21st", "21st"),
])
def test_canonical_text(kind, raw, canon):
    assert canonical_text(kind, raw) == canon


@pytest.mark.parametrize("kind,raw", [
    (EntityKind.ORDINAL, "21th"), (EntityKind.TIME, "25:00"), (EntityKind.FRACTION, "1/0"),
    (EntityKind.CURRENCY, "$1.234"),
])
def test_malformed(kind, raw):
    with pytest.raises(MalformedEntity):
        canonical_text(kind, raw)


def test_time_display_round_trips():
    (ent,) = extract_entities("wake me at 6:05")
    assert canonicalize(ent).display == "6:05"


def test_pattern_file_override():
    patterns = PatternSet.parse("kind Cardinal\npattern \\b\\d+\\b\npriority 1\n")
    assert [(e.kind, e.raw) for e in extract_entities("pay $5 now", patterns)] == [(EntityKind.CARDINAL, "5")]
