"""Desk-scale domain-shift experiment: pretrain on augmented source data and
finetune on a little target data, against a finetune-only baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import Grammar, Lexicon
from .extract import default_patterns
from .metrics import evaluate
from .synth import synth_corpus
from .tagger import TaggerConfig, TaggerModel
from .tokenize import build_vocab, protected_words
from .training import examples_from_pairs, pretrain_embeddings, tag, train
from .verbalize import AugmentConfig, AugmentStats, augment_corpus

log = logging.getLogger(__name__)


@dataclass
class ShiftSetup:
    source_size: int = 800
    target_train_size: int = 40
    target_test_size: int = 200
    general_size: int = 2000
    n_variants: int = 4
    vocab_size: int = 1024
    lm_epochs: int = 3
    model: TaggerConfig = field(default_factory=lambda: TaggerConfig(
        vocab_size=1024, embed_dim=48, hidden_dim=96, head_hidden=48,
        epochs=8, finetune_epochs=12, batch_size=16, learning_rate=0.005))


def _augment(lines, n, seed, grammar, patterns):
    return list(augment_corpus(lines, AugmentConfig(n_variants_per_sentence=n, seed=seed), grammar, patterns,
                               AugmentStats()))


def run_domain_shift(seed: int, setup: Optional[ShiftSetup] = None, grammar: Optional[Grammar] = None,
                     lexicon: Optional[Lexicon] = None) -> dict:
    setup = setup or ShiftSetup()
    grammar = grammar or Grammar.load()
    lexicon = lexicon or Lexicon.load()
    patterns = default_patterns()
    t0 = time.time()

    source = list(synth_corpus("source", setup.source_size, seed))
    target_all = list(synth_corpus("target", setup.target_train_size + setup.target_test_size, seed))
    general = list(synth_corpus("general", setup.general_size, seed))
    src_pairs = _augment(source, setup.n_variants, seed, grammar, patterns)
    tgt_pairs = _augment(target_all, 1, seed, grammar, patterns)
    tgt_train = tgt_pairs[:setup.target_train_size]
    tgt_test = tgt_pairs[setup.target_train_size:]

    corpus = [" ".join(p.spoken) for p in src_pairs + tgt_train] + general
    vocab = build_vocab(corpus, protected_words(grammar, lexicon), setup.vocab_size)
    cfg = replace(setup.model, vocab_size=len(vocab), seed=seed)
    pre_ex = examples_from_pairs(src_pairs, vocab, lexicon)
    fine_ex = examples_from_pairs(tgt_train, vocab, lexicon)

    refs = [p.written for p in tgt_test]
    results = {}

    emb = pretrain_embeddings(general, vocab, cfg.embed_dim, epochs=setup.lm_epochs, seed=seed)
    cand = TaggerModel.initialize(cfg, vocab, seed=seed)
    cand.params["embed"][...] = emb
    train(cand, pre_ex, fine_ex, cfg)
    results["candidate"] = evaluate(refs, [tag(cand, p.spoken, lexicon)[1] for p in tgt_test])

    base = TaggerModel.initialize(cfg, vocab, seed=seed)
    train(base, [], fine_ex, cfg)
    results["baseline"] = evaluate(refs, [tag(base, p.spoken, lexicon)[1] for p in tgt_test])
    results["seconds"] = time.time() - t0
    return results
