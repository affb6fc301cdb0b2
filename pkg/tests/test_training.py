import numpy as np
import pytest

from itn.core import IDENTITY, LabelRow, Post, Rewrite, Space
from itn.synth import synth_corpus
from itn.tagger import TaggerConfig, TaggerModel
from itn.tokenize import build_vocab, protected_words
from itn.training import (Adam, EmptyCorpus, EmptyDataset, _batches, evaluate_examples, examples_from_pairs,
                          pretrain_embeddings, repair, tag, train)
from itn.verbalize import AugmentConfig, augment_corpus


@pytest.fixture(scope="module")
def data(grammar, lexicon):
    lines = list(synth_corpus("target", 32, 5))
    pairs = list(augment_corpus(lines, AugmentConfig(n_variants_per_sentence=1, seed=5), grammar))
    corpus = [" ".join(p.spoken) for p in pairs]
    vocab = build_vocab(corpus, protected_words(grammar, lexicon), 600)
    return pairs, vocab, examples_from_pairs(pairs, vocab, lexicon)


def small_config(vocab, **kw):
    base = dict(vocab_size=len(vocab), embed_dim=16, hidden_dim=32, head_hidden=16, learning_rate=0.01,
                batch_size=8, epochs=3, finetune_epochs=3)
    base.update(kw)
    return TaggerConfig(**base)


def test_adam_minimizes_quadratic():
    x = {"x": np.array([3.0, -2.0])}
    opt = Adam(x, lr=0.1, clip_norm=None)
    for _ in range(500):
        opt.step({"x": 2 * x["x"]})
    assert np.allclose(x["x"], 0, atol=1e-2)


def test_adam_clips_global_norm():
    x = {"x": np.zeros(2)}
    opt = Adam(x, lr=1.0, clip_norm=5.0)
    assert opt.step({"x": np.array([30.0, 40.0])}) == pytest.approx(50.0)


def test_memorizes_32_pairs(data):
    pairs, vocab, examples = data
    assert len(examples) == 32
    cfg = small_config(vocab)
    model = TaggerModel.initialize(cfg)
    opt = Adam(model.params, lr=cfg.learning_rate)
    rng = np.random.default_rng(0)
    reached = None
    for epoch in range(1, 201):
        for ids, gold in _batches(examples, cfg.batch_size, rng):
            opt.step(model.loss_and_grads(ids, gold)[1])
        if evaluate_examples(model, examples)[1] == 1.0:
            reached = epoch
            break
    assert reached is not None


def test_training_is_deterministic(data):
    _, vocab, examples = data
    cfg = small_config(vocab)
    a, b = TaggerModel.initialize(cfg), TaggerModel.initialize(cfg)
    ha = train(a, examples[:16], examples[16:], cfg)
    hb = train(b, examples[:16], examples[16:], cfg)
    assert ha == hb
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert {e["phase"] for e in ha} == {"pretrain", "finetune"}
    # parameters end on the float16 grid
    assert all(np.array_equal(v, v.astype(np.float16).astype(v.dtype)) for v in a.params.values())


def test_empty_training_sets(data):
    _, vocab, _ = data
    with pytest.raises(EmptyDataset):
        train(TaggerModel.initialize(small_config(vocab)), [], [])


def test_embedding_pretraining_learns(data):
    _, vocab, _ = data
    corpus = list(synth_corpus("general", 200, 0))
    emb = pretrain_embeddings(corpus, vocab, embed_dim=8, epochs=2)
    assert emb.shape == (len(vocab), 8) and np.isfinite(emb).all()
    again = pretrain_embeddings(corpus, vocab, embed_dim=8, epochs=2)
    assert np.array_equal(emb, again)
    with pytest.raises(EmptyCorpus):
        pretrain_embeddings(["", "  "], vocab)


def test_repair_policy(lexicon):
    toks = ["buy", "twenty", "eggs"]
    # a rewrite the lexicon does not know falls back to no rewrite
    written, rows, flagged = repair(toks, [LabelRow(Rewrite.CARDINAL), LabelRow(Rewrite.CARDINAL), IDENTITY],
                                    lexicon)
    assert (written, flagged) == ("buy 20 eggs", True)
    assert rows[0] == IDENTITY
    # an unclosed region is reset to identity labels
    bad = [IDENTITY, LabelRow(Rewrite.CARDINAL, post_start=Post.MAJOR_CURRENCY), IDENTITY]
    written, rows, flagged = repair(toks, bad, lexicon)
    assert (written, flagged) == ("buy twenty eggs", True)
    ok = [IDENTITY, LabelRow(Rewrite.CARDINAL), IDENTITY]
    assert repair(toks, ok, lexicon) == ("buy 20 eggs", ok, False)


def test_tag_always_produces_text(data, lexicon):
    pairs, vocab, _ = data
    model = TaggerModel.initialize(small_config(vocab), vocab, seed=3)
    for p in pairs[:10]:
        rows, written, _ = tag(model, p.spoken, lexicon)
        assert len(rows) == len(p.spoken) and isinstance(written, str)
    assert tag(model, "", lexicon)[:2] == ([], "")
