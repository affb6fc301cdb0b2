import io
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itn.core import CONTINUATION, LabelRow, Rewrite
from itn.tokenize import (BASE_SIZE, PAD_ID, UNK_ID, WS, WS_ID, PieceVocab, VocabTooSmall, build_vocab,
                          piece_labels, protected_words, symbols)


def naive_bpe(corpus, target):
    """Recount every pair from scratch at each step."""
    counts = Counter()
    for line in corpus:
        word = None
        for s in symbols(line):
            if s == WS:
                if word:
                    counts[tuple(word)] += 1
                word = [(WS,)]
            else:
                word.append((s,))
        counts[tuple(word)] += 1
    words = {w: c for w, c in counts.items()}
    pieces = [("<unk>",), ("<pad>",), (WS,)] + [(b,) for b in range(256)]
    while len(pieces) < target:
        pairs = Counter()
        for w, c in words.items():
            for a, b in zip(w, w[1:]):
                pairs[(a, b)] += c
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merged = best[0] + best[1]
        if merged not in pieces:
            pieces.append(merged)
        new = Counter()
        for w, c in words.items():
            out, i = [], 0
            while i < len(w):
                if i + 1 < len(w) and (w[i], w[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            new[tuple(out)] += c
        words = new
    return pieces


@pytest.mark.parametrize("seed", range(6))
def test_merges_match_naive_oracle(seed):
    rng = random.Random(seed)
    alphabet = "abcde"
    corpus = [" ".join("".join(rng.choice(alphabet) for _ in range(rng.randint(1, 6)))
                       for _ in range(rng.randint(1, 5))) for _ in range(30)]
    target = BASE_SIZE + rng.randint(5, 40)
    assert build_vocab(corpus, [], target).pieces == naive_bpe(corpus, target)


def test_single_merge():
    vocab = build_vocab(["aaaa"], [], BASE_SIZE + 1)
    assert vocab.pieces[-1] == (ord("a"), ord("a"))
    assert len(vocab.encode("aaaa")) == 3  # word start marker with "a", then "aa", then "a"


def test_special_ids():
    vocab = build_vocab(["x"], [], BASE_SIZE)
    assert (UNK_ID, PAD_ID, WS_ID) == (0, 1, 2)
    assert vocab.pieces[WS_ID] == (WS,)
    assert vocab.encode("") == [WS_ID]


def test_vocab_floor(grammar, lexicon):
    prot = protected_words(grammar, lexicon)
    with pytest.raises(VocabTooSmall):
        build_vocab(["a"], prot, BASE_SIZE + len(prot) - 1)
    assert len(build_vocab(["a"], prot, BASE_SIZE + len(prot))) == BASE_SIZE + len(prot)


def test_protected_words_are_single_pieces(grammar, lexicon):
    prot = protected_words(grammar, lexicon)
    vocab = build_vocab(["ninety nine red balloons", "ninetynine"] * 50, prot, 700)
    for word in grammar.spoken_vocabulary():
        assert len(vocab.encode(word)) == 1, word
    assert len(vocab.encode_tokens(["ninety"])[0]) == 1


@pytest.fixture(scope="module")
def small_vocab():
    return build_vocab(["the quick brown fox jumps over the lazy dog", "ünïcödé ✓ 日本"] * 3, ["the"], 320)


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=40))
def test_round_trip_fuzz(small_vocab, text):
    assert small_vocab.decode(small_vocab.encode(text)) == text


def test_unknown_id_decodes_to_replacement(small_vocab):
    assert small_vocab.decode([UNK_ID]) == "�"


def test_tsv_round_trip(small_vocab):
    buf = io.StringIO()
    small_vocab.write(buf)
    first = buf.getvalue().splitlines()[0]
    assert first.split("\t")[1] == "0"
    back = PieceVocab.read(io.StringIO(buf.getvalue()))
    assert back.pieces == small_vocab.pieces and back.protected == small_vocab.protected


def test_piece_labels():
    row = LabelRow(Rewrite.CARDINAL)
    assert piece_labels([row, row], [[5, 6, 7], [8]]) == [row, CONTINUATION, CONTINUATION, row]
    with pytest.raises(ValueError):
        piece_labels([row], [[1], [2]])
