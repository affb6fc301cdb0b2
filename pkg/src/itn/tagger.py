"""Multitask BiLSTM tagger: piece embeddings, stacked bidirectional LSTMs and
one MLP head per label task, with hand-written backpropagation in numpy."""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import ITNError, LabelRow, Post, Prepend, Rewrite, Space
from .tokenize import PieceVocab

TASKS = ("rewrite", "prepend", "space", "post_start", "post_end")
TASK_ENUMS = {"rewrite": Rewrite, "prepend": Prepend, "space": Space,
              "post_start": Post, "post_end": Post}
HEAD_SIZES = tuple(len(TASK_ENUMS[t]) for t in TASKS)

MAGIC = b"ITNF"
FORMAT_VERSION = 1
_DTYPES = {1: np.float16, 2: np.float32, 3: np.float64, 4: np.uint8}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class IdOutOfRange(ITNError):
    pass


class AlignmentMismatch(ITNError):
    pass


class ModelFormatError(ITNError):
    pass


@dataclass
class TaggerConfig:
    vocab_size: int = 4096
    embed_dim: int = 64
    hidden_dim: int = 256  # both directions together
    layers: int = 2
    head_hidden: int = 128
    task_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    learning_rate: float = 0.002
    epochs: int = 20
    finetune_epochs: int = 20
    batch_size: int = 32
    patience: int = 3
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        self.task_weights = tuple(float(w) for w in self.task_weights)
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even (split across two directions)")
        if len(self.task_weights) != len(TASKS):
            raise ValueError(f"need {len(TASKS)} task weights")
        for name in ("vocab_size", "embed_dim", "hidden_dim", "layers", "head_hidden", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def direction_dim(self) -> int:
        return self.hidden_dim // 2

    def to_json(self) -> dict:
        d = asdict(self)
        d["task_weights"] = list(self.task_weights)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TaggerConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def param_shapes(cfg: TaggerConfig) -> dict[str, tuple]:
    shapes = {"embed": (cfg.vocab_size, cfg.embed_dim)}
    h = cfg.direction_dim
    width = cfg.embed_dim
    for layer in range(cfg.layers):
        for d in ("fwd", "bwd"):
            shapes[f"lstm{layer}.{d}.W"] = (4 * h, width + h)
            shapes[f"lstm{layer}.{d}.b"] = (4 * h,)
        width = 2 * h
    for task, k in zip(TASKS, HEAD_SIZES):
        shapes[f"head.{task}.W1"] = (cfg.head_hidden, 2 * h)
        shapes[f"head.{task}.b1"] = (cfg.head_hidden,)
        shapes[f"head.{task}.W2"] = (k, cfg.head_hidden)
        shapes[f"head.{task}.b2"] = (k,)
    return shapes


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class TaggerModel:
    def __init__(self, config: TaggerConfig, params: Optional[dict] = None,
                 vocab: Optional[PieceVocab] = None, dtype=np.float32):
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        shapes = param_shapes(config)
        if params is None:
            params = {k: np.zeros(s, dtype=self.dtype) for k, s in shapes.items()}
        for k, s in shapes.items():
            if k not in params or params[k].shape != s:
                raise ModelFormatError(f"parameter {k} missing or not shaped {s}")
        self.params = {k: np.asarray(params[k], dtype=self.dtype) for k in shapes}

    @classmethod
    def initialize(cls, config: TaggerConfig, vocab: Optional[PieceVocab] = None,
                   seed: Optional[int] = None, dtype=np.float32) -> "TaggerModel":
        rng = np.random.default_rng(config.seed if seed is None else seed)
        params = {}
        for name, shape in param_shapes(config).items():
            if name == "embed":
                params[name] = rng.normal(0.0, 0.1, shape)
            elif name.endswith(".b"):
                b = np.zeros(shape)
                h = shape[0] // 4
                b[h:2 * h] = 1.0  # forget gate
                params[name] = b
            elif len(shape) == 1:
                params[name] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, shape)
        return cls(config, params, vocab, dtype)

    def astype(self, dtype) -> "TaggerModel":
        return TaggerModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.vocab, dtype)

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    # ------------------------------------------------------------------
    # forward / backward

    def _check_ids(self, batch: Sequence[Sequence[int]]) -> None:
        for ids in batch:
            for i in ids:
                if not 0 <= i < self.config.vocab_size:
                    raise IdOutOfRange(f"piece id {i} outside vocabulary of {self.config.vocab_size}")

    def _lstm(self, name: str, x: np.ndarray):
        W, b = self.params[name + ".W"], self.params[name + ".b"]
        B, T, _ = x.shape
        h_dim = W.shape[0] // 4
        h = np.zeros((B, h_dim), self.dtype)
        c = np.zeros((B, h_dim), self.dtype)
        hs = np.zeros((B, T, h_dim), self.dtype)
        cache = []
        for t in range(T):
            z = np.concatenate([x[:, t], h], axis=1)
            a = z @ W.T + b
            i = _sigmoid(a[:, :h_dim])
            f = _sigmoid(a[:, h_dim:2 * h_dim])
            g = np.tanh(a[:, 2 * h_dim:3 * h_dim])
            o = _sigmoid(a[:, 3 * h_dim:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            cache.append((z, i, f, g, o, c_prev, tc))
        return hs, cache

    def _lstm_back(self, name: str, dhs: np.ndarray, cache, grads: dict) -> np.ndarray:
        W = self.params[name + ".W"]
        B, T, h_dim = dhs.shape
        in_dim = W.shape[1] - h_dim
        dW = np.zeros_like(W)
        db = np.zeros(W.shape[0], self.dtype)
        dx = np.zeros((B, T, in_dim), self.dtype)
        dh_next = np.zeros((B, h_dim), self.dtype)
        dc_next = np.zeros((B, h_dim), self.dtype)
        for t in range(T - 1, -1, -1):
            z, i, f, g, o, c_prev, tc = cache[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            da = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dW += da.T @ z
            db += da.sum(axis=0)
            dz = da @ W
            dx[:, t] = dz[:, :in_dim]
            dh_next = dz[:, in_dim:]
        grads[name + ".W"] = grads.get(name + ".W", 0) + dW
        grads[name + ".b"] = grads.get(name + ".b", 0) + db
        return dx

    @staticmethod
    def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
        t = np.arange(T)[None, :]
        L = lengths[:, None]
        return np.where(t < L, L - 1 - t, t)

    def _forward(self, batch: Sequence[Sequence[int]]):
        self._check_ids(batch)
        B = len(batch)
        lengths = np.array([len(s) for s in batch])
        T = int(lengths.max()) if B else 0
        ids = np.ones((B, T), dtype=np.int64)  # padding id
        for k, s in enumerate(batch):
            ids[k, :len(s)] = s
        mask = (np.arange(T)[None, :] < lengths[:, None])
        rev = self._reverse_index(lengths, T)
        rows = np.arange(B)[:, None]
        x = self.params["embed"][ids]
        layer_caches = []
        for layer in range(self.config.layers):
            fwd, cf = self._lstm(f"lstm{layer}.fwd", x)
            bwd_r, cb = self._lstm(f"lstm{layer}.bwd", x[rows, rev])
            bwd = bwd_r[rows, rev]
            layer_caches.append((cf, cb))
            x = np.concatenate([fwd, bwd], axis=2)
        heads = {}
        for task in TASKS:
            p = self.params
            a = np.tanh(x @ p[f"head.{task}.W1"].T + p[f"head.{task}.b1"])
            logits = a @ p[f"head.{task}.W2"].T + p[f"head.{task}.b2"]
            logits = logits - logits.max(axis=2, keepdims=True)
            e = np.exp(logits)
            heads[task] = (a, e / e.sum(axis=2, keepdims=True))
        cache = dict(ids=ids, mask=mask, rev=rev, rows=rows, y=x, layers=layer_caches)
        return heads, cache

    def forward(self, ids: Sequence[int]) -> list[np.ndarray]:
        """Per-task probability arrays of shape (len(ids), K_task)."""
        if len(ids) == 0:
            return [np.zeros((0, k), self.dtype) for k in HEAD_SIZES]
        heads, _ = self._forward([list(ids)])
        return [heads[t][1][0] for t in TASKS]

    def forward_batch(self, batch: Sequence[Sequence[int]]) -> list[list[np.ndarray]]:
        heads, cache = self._forward(batch)
        out = []
        for k, s in enumerate(batch):
            out.append([heads[t][1][k, :len(s)] for t in TASKS])
        return out

    @staticmethod
    def gold_indices(rows: Sequence[LabelRow]) -> np.ndarray:
        return np.array([[r.rewrite.index, r.prepend.index, r.space.index,
                          r.post_start.index, r.post_end.index] for r in rows], dtype=np.int64).reshape(-1, 5)

    def loss_and_grads(self, batch: Sequence[Sequence[int]], gold: Sequence[np.ndarray],
                       need_grads: bool = True):
        """Weighted sum of per-task cross-entropies, averaged over real tokens."""
        if len(batch) != len(gold):
            raise AlignmentMismatch(f"{len(batch)} sequences but {len(gold)} gold label sets")
        for ids, g in zip(batch, gold):
            if len(ids) != len(g):
                raise AlignmentMismatch(f"{len(ids)} pieces but {len(g)} gold rows")
        heads, cache = self._forward(batch)
        mask = cache["mask"]
        n_tok = max(int(mask.sum()), 1)
        B, T = mask.shape
        gold_arr = np.zeros((B, T, 5), dtype=np.int64)
        for k, g in enumerate(gold):
            gold_arr[k, :len(g)] = g
        loss = 0.0
        dlogits = {}
        for ti, task in enumerate(TASKS):
            w = self.config.task_weights[ti]
            probs = heads[task][1]
            picked = np.take_along_axis(probs, gold_arr[:, :, ti:ti + 1], axis=2)[:, :, 0]
            nll = -np.log(np.maximum(picked, np.finfo(self.dtype).tiny))
            loss += w * float((nll * mask).sum()) / n_tok
            if need_grads:
                d = probs.copy()
                np.put_along_axis(d, gold_arr[:, :, ti:ti + 1],
                                  np.take_along_axis(d, gold_arr[:, :, ti:ti + 1], axis=2) - 1, axis=2)
                dlogits[task] = d * (mask[:, :, None] * (w / n_tok))
        if not need_grads:
            return loss, None
        return loss, self._backward(heads, cache, dlogits)

    def _backward(self, heads, cache, dlogits) -> dict:
        grads: dict = {}
        p = self.params
        y = cache["y"]
        dy = np.zeros_like(y)
        for task in TASKS:
            a = heads[task][0]
            dl = dlogits[task]
            grads[f"head.{task}.W2"] = np.einsum("btk,bth->kh", dl, a)
            grads[f"head.{task}.b2"] = dl.sum(axis=(0, 1))
            da = (dl @ p[f"head.{task}.W2"]) * (1 - a * a)
            grads[f"head.{task}.W1"] = np.einsum("bth,btd->hd", da, y)
            grads[f"head.{task}.b1"] = da.sum(axis=(0, 1))
            dy += da @ p[f"head.{task}.W1"]
        rows, rev = cache["rows"], cache["rev"]
        h = self.config.direction_dim
        for layer in range(self.config.layers - 1, -1, -1):
            cf, cb = cache["layers"][layer]
            dx_f = self._lstm_back(f"lstm{layer}.fwd", dy[:, :, :h], cf, grads)
            dx_b = self._lstm_back(f"lstm{layer}.bwd", dy[:, :, h:][rows, rev], cb, grads)
            dy = dx_f + dx_b[rows, rev]
        dE = np.zeros_like(p["embed"])
        np.add.at(dE, cache["ids"], dy * cache["mask"][:, :, None])
        grads["embed"] = dE
        return {k: np.asarray(grads[k], dtype=self.dtype) for k in p}

    def loss(self, batch, gold) -> float:
        return self.loss_and_grads(batch, gold, need_grads=False)[0]

    # ------------------------------------------------------------------
    # serialization

    def to_bytes(self, dtype=np.float16) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        header = dict(config=self.config.to_json(), tasks=list(TASKS), head_sizes=list(HEAD_SIZES))
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf.write(struct.pack("<HI", FORMAT_VERSION, len(hb)))
        buf.write(hb)
        blocks = [(k, np.asarray(v, dtype=dtype)) for k, v in self.params.items()]
        if self.vocab is not None:
            vb = io.StringIO()
            self.vocab.write(vb)
            packed = zlib.compress(vb.getvalue().encode("utf-8"), 9)
            blocks.append(("vocab.z", np.frombuffer(packed, dtype=np.uint8)))
        buf.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks:
            nb = name.encode("utf-8")
            buf.write(struct.pack("<H", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
        return buf.getvalue()

    def save(self, path: Union[str, Path], dtype=np.float16) -> int:
        data = self.to_bytes(dtype)
        Path(path).write_bytes(data)
        return len(data)

    @classmethod
    def from_bytes(cls, data: bytes, dtype=np.float32) -> "TaggerModel":
        view = memoryview(data)
        if bytes(view[:4]) != MAGIC:
            raise ModelFormatError("not an ITNF model file")
        version, hlen = struct.unpack_from("<HI", view, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        pos = 10
        header = json.loads(bytes(view[pos:pos + hlen]).decode("utf-8"))
        pos += hlen
        if tuple(header["head_sizes"]) != HEAD_SIZES:
            raise ModelFormatError("label inventory differs from this toolkit's")
        (n_blocks,) = struct.unpack_from("<I", view, pos)
        pos += 4
        params, vocab = {}, None
        for _ in range(n_blocks):
            (nlen,) = struct.unpack_from("<H", view, pos)
            pos += 2
            name = bytes(view[pos:pos + nlen]).decode("utf-8")
            pos += nlen
            code, ndim = struct.unpack_from("<BB", view, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", view, pos)
            pos += 4 * ndim
            dt = np.dtype(_DTYPES[code]).newbyteorder("<")
            size = int(np.prod(shape)) * dt.itemsize
            arr = np.frombuffer(view[pos:pos + size], dtype=dt).reshape(shape)
            pos += size
            if name in ("vocab", "vocab.z"):
                raw = arr.tobytes()
                if name == "vocab.z":
                    try:
                        raw = zlib.decompress(raw)
                    except zlib.error as exc:
                        raise ModelFormatError(f"damaged vocabulary block: {exc}") from None
                vocab = PieceVocab.read(io.StringIO(raw.decode("utf-8")))
            else:
                params[name] = arr
        if pos != len(data):
            raise ModelFormatError("trailing bytes after the last block")
        return cls(TaggerConfig.from_json(header["config"]), params, vocab, dtype)

    @classmethod
    def load(cls, path: Union[str, Path], dtype=np.float32) -> "TaggerModel":
        return cls.from_bytes(Path(path).read_bytes(), dtype)

    def snap(self, dtype=np.float16) -> None:
        """Round parameters to the storage grid so saving loses nothing."""
        for k, v in self.params.items():
            self.params[k] = v.astype(dtype).astype(self.dtype)


def rows_from_indices(idx: np.ndarray) -> list[LabelRow]:
    out = []
    for r, pre, sp, ps, pe in idx:
        out.append(LabelRow(list(Rewrite)[r], list(Prepend)[pre], list(Space)[sp],
                            list(Post)[ps], list(Post)[pe]))
    return out
