"""Optimizer, embedding pretraining, the pretrain/finetune recipe and inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import IDENTITY, ITNError, LabelRow, Lexicon, Rewrite, SpokenWrittenPair, UnknownWord
from .labels import apply_labels, infer_labels_from_trace
from .tagger import TASKS, TaggerConfig, TaggerModel, rows_from_indices
from .tokenize import PAD_ID, PieceVocab, piece_labels

log = logging.getLogger(__name__)


class EmptyCorpus(ITNError):
    pass


class EmptyDataset(ITNError):
    pass


class Adam:
    def __init__(self, params: dict, lr: float = 0.002, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, clip_norm: Optional[float] = 5.0):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict) -> float:
        norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
        scale = 1.0
        if self.clip_norm and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            g = g * scale
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            self.params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(self.params[k].dtype)
        return norm


# --------------------------------------------------------------------------
# embedding pretraining


def pretrain_embeddings(corpus: Iterable[str], vocab: PieceVocab, embed_dim: int = 64, epochs: int = 3,
                        lr: float = 0.01, batch_size: int = 512, seed: int = 0) -> np.ndarray:
    """Input embeddings of a log-bilinear next-piece model.

    Each piece predicts the piece after it through a softmax over the
    vocabulary; padding marks sentence boundaries.
    """
    prev, nxt = [], []
    for line in corpus:
        ids = vocab.encode(line)
        if not line.strip():
            continue
        seq = [PAD_ID] + ids + [PAD_ID]
        prev.extend(seq[:-1])
        nxt.extend(seq[1:])
    if not prev:
        raise EmptyCorpus("no text to pretrain embeddings on")
    prev = np.array(prev)
    nxt = np.array(nxt)
    V = len(vocab)
    rng = np.random.default_rng(seed)
    params = {"embed": rng.normal(0.0, 0.1, (V, embed_dim)).astype(np.float32),
              "out": np.zeros((V, embed_dim), np.float32),
              "bias": np.zeros(V, np.float32)}
    opt = Adam(params, lr=lr, clip_norm=5.0)
    for _ in range(epochs):
        order = rng.permutation(len(prev))
        for start in range(0, len(order), batch_size):
            sel = order[start:start + batch_size]
            x, y = prev[sel], nxt[sel]
            h = params["embed"][x]
            logits = h @ params["out"].T + params["bias"]
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(len(y)), y] -= 1
            p /= len(y)
            d_embed = np.zeros_like(params["embed"])
            np.add.at(d_embed, x, p @ params["out"])
            opt.step({"embed": d_embed, "out": p.T @ h, "bias": p.sum(axis=0)})
    return params["embed"]


# --------------------------------------------------------------------------
# data


@dataclass
class Example:
    ids: list
    gold: np.ndarray


def make_example(tokens: Sequence[str], rows: Sequence[LabelRow], vocab: PieceVocab) -> Example:
    per_token = vocab.encode_tokens(tokens)
    ids = [i for p in per_token for i in p]
    return Example(ids, TaggerModel.gold_indices(piece_labels(rows, per_token)))


def examples_from_pairs(pairs: Iterable[SpokenWrittenPair], vocab: PieceVocab, lexicon: Lexicon) -> list[Example]:
    out = []
    for p in pairs:
        if not p.spoken:
            continue
        out.append(make_example(p.spoken, infer_labels_from_trace(p, lexicon), vocab))
    return out


def _batches(examples: Sequence[Example], size: int, rng: Optional[np.random.Generator]):
    order = np.arange(len(examples)) if rng is None else rng.permutation(len(examples))
    for start in range(0, len(order), size):
        chunk = [examples[i] for i in order[start:start + size]]
        yield [e.ids for e in chunk], [e.gold for e in chunk]


def evaluate_examples(model: TaggerModel, examples: Sequence[Example], batch_size: int = 64) -> tuple[float, float]:
    """Mean loss and the share of pieces whose five argmax labels are all right."""
    if not examples:
        return float("nan"), float("nan")
    total_loss = total_tok = correct = 0.0
    for ids, gold in _batches(examples, batch_size, None):
        n = sum(len(i) for i in ids)
        total_loss += model.loss(ids, gold) * n
        total_tok += n
        for probs, g in zip(model.forward_batch(ids), gold):
            pred = np.stack([p.argmax(axis=1) for p in probs], axis=1)
            correct += int((pred == g).all(axis=1).sum())
    return total_loss / total_tok, correct / total_tok


def _split(examples: list, rng: np.random.Generator) -> tuple[list, list]:
    if len(examples) < 5:
        return examples, []
    order = rng.permutation(len(examples))
    cut = int(round(len(examples) * 0.8))
    return [examples[i] for i in order[:cut]], [examples[i] for i in order[cut:]]


def _run_phase(model: TaggerModel, examples: list, epochs: int, config: TaggerConfig,
               rng: np.random.Generator, phase: str, history: list, validate: bool = True) -> None:
    train_set, val_set = _split(examples, rng) if validate else (examples, [])
    opt = Adam(model.params, lr=config.learning_rate, clip_norm=config.clip_norm)
    best = (float("inf"), None)
    stale = 0
    for epoch in range(1, epochs + 1):
        losses = []
        for ids, gold in _batches(train_set, config.batch_size, rng):
            loss, grads = model.loss_and_grads(ids, gold)
            opt.step(grads)
            losses.append(loss)
        entry = {"phase": phase, "epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_set:
            entry["val_loss"], entry["val_acc"] = evaluate_examples(model, val_set)
        history.append(entry)
        log.info("%s epoch %d: %s", phase, epoch,
                 " ".join(f"{k}={v:.4f}" for k, v in entry.items() if isinstance(v, float)))
        if val_set:
            if entry["val_loss"] < best[0] - 1e-6:
                best = (entry["val_loss"], {k: v.copy() for k, v in model.params.items()})
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best[1] is not None:
        for k, v in best[1].items():
            model.params[k][...] = v


def train(model: TaggerModel, pretrain: Sequence[Example], finetune: Sequence[Example],
          config: Optional[TaggerConfig] = None, validate: bool = True) -> list[dict]:
    """Pretrain on augmented source pairs, then finetune on target pairs.

    Either set may be empty; each phase early-stops on its own held-out fifth.
    Parameters end on the float16 grid so a saved model replays exactly.
    """
    config = config or model.config
    if not pretrain and not finetune:
        raise EmptyDataset("both the pretraining and finetuning sets are empty")
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    if pretrain:
        _run_phase(model, list(pretrain), config.epochs, config, rng, "pretrain", history, validate)
    if finetune:
        _run_phase(model, list(finetune), config.finetune_epochs, config, rng, "finetune", history, validate)
    model.snap()
    return history


# --------------------------------------------------------------------------
# inference


def predict_rows(model: TaggerModel, tokens: Sequence[str]) -> list[LabelRow]:
    if model.vocab is None:
        raise ValueError("model has no vocabulary attached")
    if not tokens:
        return []
    per_token = model.vocab.encode_tokens(tokens)
    ids = [i for p in per_token for i in p]
    probs = model.forward(ids)
    pred = np.stack([p.argmax(axis=1) for p in probs], axis=1)
    starts = np.cumsum([0] + [len(p) for p in per_token[:-1]])
    return rows_from_indices(pred[starts])


def _spans(rows: Sequence[LabelRow]) -> list[tuple[int, int]]:
    spans = []
    start = None
    for i, r in enumerate(rows + [IDENTITY]):
        if r != IDENTITY and start is None:
            start = i
        elif r == IDENTITY and start is not None:
            spans.append((start, i))
            start = None
    return spans


def repair(tokens: Sequence[str], rows: list[LabelRow], lexicon: Lexicon) -> tuple[str, list[LabelRow], bool]:
    """Replay rows; spans that cannot be replayed fall back to identity labels."""
    rows = list(rows)
    flagged = False
    for i, (tok, r) in enumerate(zip(tokens, rows)):
        if r.rewrite is not Rewrite.NONE and (tok, r.rewrite) not in lexicon:
            rows[i] = LabelRow(Rewrite.NONE, r.prepend, r.space, r.post_start, r.post_end)
            flagged = True
    try:
        return apply_labels(tokens, rows, lexicon), rows, flagged
    except (ITNError, ValueError):
        flagged = True
    for start, end in _spans(rows):
        trial = [IDENTITY] * len(rows)
        trial[start:end] = rows[start:end]
        try:
            apply_labels(tokens, trial, lexicon)
        except (ITNError, ValueError):
            rows[start:end] = [IDENTITY] * (end - start)
    try:
        return apply_labels(tokens, rows, lexicon), rows, flagged
    except (ITNError, ValueError):
        rows = [IDENTITY] * len(tokens)
        return apply_labels(tokens, rows, lexicon), rows, flagged


def tag(model: TaggerModel, sentence, lexicon: Lexicon) -> tuple[list[LabelRow], str, bool]:
    """Label rows with the written hypothesis; the flag is set when labels had to be repaired."""
    tokens = sentence.split() if isinstance(sentence, str) else list(sentence)
    rows = predict_rows(model, tokens)
    written, rows, flagged = repair(tokens, rows, lexicon)
    return rows, written, flagged
