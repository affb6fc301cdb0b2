import random

import numpy as np
import pytest

from itn.core import IDENTITY, LabelRow, Post, Rewrite, Space
from itn.tagger import (HEAD_SIZES, AlignmentMismatch, IdOutOfRange, ModelFormatError, TaggerConfig, TaggerModel,
                        param_shapes, rows_from_indices)
from itn.tokenize import build_vocab

BUDGET = 2 * 1024 * 1024


def random_setup(seed):
    rng = random.Random(seed)
    cfg = TaggerConfig(vocab_size=rng.randint(5, 12), embed_dim=rng.randint(2, 4), hidden_dim=2 * rng.randint(1, 3),
                       layers=rng.randint(1, 2), head_hidden=rng.randint(2, 4),
                       task_weights=[rng.uniform(0.2, 2.0) for _ in range(5)], seed=seed)
    model = TaggerModel.initialize(cfg, dtype=np.float64)
    nrng = np.random.default_rng(seed)
    for v in model.params.values():
        v += nrng.normal(0, 0.3, v.shape)
    lengths = [rng.randint(1, 5) for _ in range(rng.randint(1, 3))]
    batch = [[rng.randrange(cfg.vocab_size) for _ in range(n)] for n in lengths]
    gold = [np.array([[rng.randrange(k) for k in HEAD_SIZES] for _ in range(n)]) for n in lengths]
    return model, batch, gold, nrng


@pytest.mark.parametrize("seed", range(20))
def test_gradient_check(seed):
    model, batch, gold, nrng = random_setup(seed)
    _, grads = model.loss_and_grads(batch, gold)
    h = 1e-4
    for name, value in model.params.items():
        flat = value.reshape(-1)
        picks = nrng.choice(flat.size, size=min(6, flat.size), replace=False)
        for i in picks:
            old = flat[i]
            f = {}
            for step in (-2, -1, 1, 2):
                flat[i] = old + step * h
                f[step] = model.loss(batch, gold)
            flat[i] = old
            # five-point central difference, error O(h^4)
            numeric = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
            analytic = grads[name].reshape(-1)[i]
            denom = max(abs(numeric) + abs(analytic), 1e-7)
            assert abs(numeric - analytic) / denom < 1e-4, (name, i, numeric, analytic)


def test_zero_model_is_uniform():
    cfg = TaggerConfig(vocab_size=10, embed_dim=4, hidden_dim=4, head_hidden=3)
    model = TaggerModel(cfg, dtype=np.float64)
    probs = model.forward([1, 2, 3])
    for p, k in zip(probs, HEAD_SIZES):
        assert np.allclose(p, 1.0 / k)
    gold = [np.zeros((3, 5), dtype=np.int64)]
    assert model.loss([[1, 2, 3]], gold) == pytest.approx(sum(np.log(k) for k in HEAD_SIZES))


def test_padding_does_not_change_outputs():
    model, _, _, _ = random_setup(3)
    alone = model.forward([1, 2])
    batched = model.forward_batch([[1, 2], [3, 4, 0, 1, 2]])[0]
    for a, b in zip(alone, batched):
        assert np.allclose(a, b)


def test_input_checks():
    cfg = TaggerConfig(vocab_size=5, embed_dim=2, hidden_dim=2, head_hidden=2)
    model = TaggerModel.initialize(cfg)
    with pytest.raises(IdOutOfRange):
        model.forward([5])
    with pytest.raises(AlignmentMismatch):
        model.loss_and_grads([[1, 2]], [np.zeros((1, 5), dtype=np.int64)])
    with pytest.raises(ValueError):
        TaggerConfig(hidden_dim=3)


def test_default_parameter_count():
    cfg = TaggerConfig()
    assert cfg.direction_dim == 128
    total = sum(int(np.prod(s)) for s in param_shapes(cfg).values())
    assert total == TaggerModel(cfg).n_params()
    # embeddings 4096*64, four LSTM cells, five two-layer heads
    lstm = 2 * (4 * 128 * (64 + 128) + 4 * 128) + 2 * (4 * 128 * (256 + 128) + 4 * 128)
    heads = sum(128 * 256 + 128 + k * 128 + k for k in HEAD_SIZES)
    assert total == 4096 * 64 + lstm + heads


def full_vocab(size=4096):
    rng = random.Random(0)
    words = ["".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(3, 9)))
             for _ in range(6000)]
    vocab = build_vocab([" ".join(words[i:i + 12]) for i in range(0, len(words), 12)], [], size)
    assert len(vocab) == size
    return vocab


def test_default_model_fits_budget():
    model = TaggerModel.initialize(TaggerConfig(), full_vocab())
    size = len(model.to_bytes())
    assert size < BUDGET, size


def test_serialization_is_bit_exact(tmp_path):
    cfg = TaggerConfig(vocab_size=300, embed_dim=8, hidden_dim=8, head_hidden=6)
    vocab = build_vocab(["one two three four"], [], 300)
    model = TaggerModel.initialize(cfg, vocab)
    model.snap()
    path = tmp_path / "m.itnf"
    model.save(path)
    back = TaggerModel.load(path)
    for k, v in model.params.items():
        assert np.array_equal(v, back.params[k])
    assert back.config == cfg
    assert back.vocab.pieces == vocab.pieces
    assert back.to_bytes() == path.read_bytes()
    ids = vocab.encode("one two three")
    for a, b in zip(model.forward(ids), back.forward(ids)):
        assert np.array_equal(a, b)
    wide = TaggerModel.from_bytes(model.to_bytes(np.float32))
    assert all(np.array_equal(v, wide.params[k]) for k, v in model.params.items())


def test_corrupt_files_rejected():
    cfg = TaggerConfig(vocab_size=6, embed_dim=2, hidden_dim=2, head_hidden=2)
    data = TaggerModel.initialize(cfg).to_bytes()
    with pytest.raises(ModelFormatError):
        TaggerModel.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ModelFormatError):
        TaggerModel.from_bytes(data + b"\0")


def test_rows_from_indices_round_trip():
    rows = [IDENTITY, LabelRow(Rewrite.CARDINAL, space=Space.OFF, post_end=Post.MEASURE)]
    assert rows_from_indices(TaggerModel.gold_indices(rows)) == rows
