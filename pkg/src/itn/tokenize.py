"""Byte-level BPE pieces with whole-word protection for grammar vocabulary.

A text becomes a symbol sequence: every space is the word-start marker and
every other character contributes its UTF-8 bytes; a marker is also put in
front of the text.  Pieces never continue across a marker, so each piece is
either marker-initial (starts a word) or a word-internal continuation.
"""

from __future__ import annotations

import heapq
from collections import Counter
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

from .core import CONTINUATION, ITNError, LabelRow

UNK_ID = 0
PAD_ID = 1
WS_ID = 2
WS = 256
MARKER = "▁"
BASE_SIZE = 3 + 256

Piece = tuple  # tuple of symbols: 0..255 for bytes, WS for the word-start marker


class VocabTooSmall(ITNError):
    pass


def symbols(text: str) -> list[int]:
    out = [WS]
    for ch in text:
        if ch == " ":
            out.append(WS)
        else:
            out.extend(ch.encode("utf-8"))
    return out


def _word_piece(word: str) -> Piece:
    return (WS,) + tuple(word.encode("utf-8"))


def _segments(syms: Sequence[int]) -> list[list[int]]:
    segs: list[list[int]] = []
    for s in syms:
        if s == WS or not segs:
            segs.append([s])
        else:
            segs[-1].append(s)
    return segs


def _piece_bytes(piece: Piece) -> bytes:
    return bytes(s for s in piece if s != WS)


class PieceVocab:
    def __init__(self, pieces: Sequence[Piece], protected: Iterable[str] = ()):
        if list(pieces[:3]) != [("<unk>",), ("<pad>",), (WS,)]:
            raise ValueError("vocabulary must start with <unk>, <pad> and the word-start marker")
        self.pieces = [tuple(p) for p in pieces]
        self.ids = {p: i for i, p in enumerate(self.pieces)}
        if len(self.ids) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        self.protected = frozenset(protected)
        self._protected_ids = {w: self.ids[_word_piece(w)] for w in self.protected}
        self.max_len = max(len(p) for p in self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def is_initial(self, pid: int) -> bool:
        return pid == WS_ID or (pid > 1 and self.pieces[pid][0] == WS)

    # ------------------------------------------------------------------
    def _encode_segment(self, seg: Sequence[int]) -> list[int]:
        if seg[0] == WS and len(seg) > 1:
            word = bytes(seg[1:])
            try:
                pid = self._protected_ids.get(word.decode("utf-8"))
            except UnicodeDecodeError:
                pid = None
            if pid is not None:
                return [pid]
        out = []
        i = 0
        while i < len(seg):
            for j in range(min(len(seg), i + self.max_len), i, -1):
                pid = self.ids.get(tuple(seg[i:j]))
                if pid is not None:
                    out.append(pid)
                    i = j
                    break
            else:
                out.append(UNK_ID)
                i += 1
        return out

    def encode(self, text: str) -> list[int]:
        ids = []
        for seg in _segments(symbols(text)):
            ids.extend(self._encode_segment(seg))
        return ids

    def encode_tokens(self, tokens: Sequence[str]) -> list[list[int]]:
        """Piece ids per whitespace-free token; the first piece of each is word-initial."""
        return [self._encode_segment([WS] + list(t.encode("utf-8"))) for t in tokens]

    def decode(self, ids: Sequence[int]) -> str:
        parts = []
        for k, pid in enumerate(ids):
            if pid == UNK_ID:
                parts.append("�".encode("utf-8"))
                continue
            if pid == PAD_ID:
                continue
            piece = self.pieces[pid]
            if piece[0] == WS and k > 0:
                parts.append(b" ")
            parts.append(_piece_bytes(piece))
        return b"".join(parts).decode("utf-8", errors="replace")

    # ------------------------------------------------------------------
    def piece_text(self, pid: int) -> str:
        piece = self.pieces[pid]
        if pid < 2:
            return piece[0]
        lead = MARKER if piece[0] == WS else ""
        raw = _piece_bytes(piece)
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            text = None
        if (text is None or text.startswith("\\x:") or text in ("<unk>", "<pad>")
                or any(ch in "\t\n\r" or ch == MARKER or ord(ch) < 32 or ord(ch) == 127 for ch in text)):
            return lead + "\\x:" + raw.hex()
        return lead + text

    @staticmethod
    def _parse_piece(text: str) -> Piece:
        if text in ("<unk>", "<pad>"):
            return (text,)
        lead: tuple = ()
        if text.startswith(MARKER):
            lead, text = (WS,), text[len(MARKER):]
        if text.startswith("\\x:"):
            raw = bytes.fromhex(text[3:])
        else:
            raw = text.encode("utf-8")
        return lead + tuple(raw)

    def write(self, fh: TextIO) -> None:
        for pid in range(len(self.pieces)):
            flag = 0
            if pid > 2 and self.pieces[pid][0] == WS:
                try:
                    flag = int(_piece_bytes(self.pieces[pid]).decode("utf-8") in self.protected)
                except UnicodeDecodeError:
                    pass
            fh.write(f"{self.piece_text(pid)}\t{pid}\t{flag}\n")

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.write(fh)

    @classmethod
    def read(cls, fh: TextIO) -> "PieceVocab":
        pieces = []
        protected = []
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            text, pid, flag = line.split("\t")
            if int(pid) != len(pieces):
                raise ValueError(f"line {lineno}: expected id {len(pieces)}, found {pid}")
            piece = cls._parse_piece(text)
            pieces.append(piece)
            if flag == "1":
                protected.append(_piece_bytes(piece).decode("utf-8"))
        return cls(pieces, protected)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PieceVocab":
        with open(path, encoding="utf-8") as fh:
            return cls.read(fh)


def build_vocab(corpus: Iterable[str], protected: Iterable[str], target_size: int = 4096) -> PieceVocab:
    """Greedy pair merging over the corpus words, most frequent pair first.

    Ties go to the lexicographically smallest pair of symbol tuples, which
    makes the result a function of the corpus word counts alone.
    """
    protected = sorted(set(protected))
    floor = BASE_SIZE + len(protected)
    if target_size < floor:
        raise VocabTooSmall(f"target size {target_size} is below {floor} "
                            f"({len(protected)} protected words + {BASE_SIZE} base pieces)")
    pieces: list[Piece] = [("<unk>",), ("<pad>",), (WS,)] + [(b,) for b in range(256)]
    pieces += [_word_piece(w) for w in protected]
    known = set(pieces)

    counts: Counter = Counter()
    protected_set = set(protected)
    for line in corpus:
        for seg in _segments(symbols(line)):
            word = bytes(seg[1:]) if seg[0] == WS else None
            if word is not None and len(seg) > 1:
                try:
                    if word.decode("utf-8") in protected_set:
                        continue
                except UnicodeDecodeError:
                    pass
            counts[tuple(seg)] += 1

    words = [[(s,) for s in w] for w in sorted(counts)]
    freq = [counts[w] for w in sorted(counts)]
    pair_count: Counter = Counter()
    where: dict[tuple, set] = {}
    for idx, w in enumerate(words):
        for a, b in zip(w, w[1:]):
            if b[0] == WS:
                continue
            pair_count[(a, b)] += freq[idx]
            where.setdefault((a, b), set()).add(idx)
    heap = [(-c, p) for p, c in pair_count.items()]
    heapq.heapify(heap)

    while len(pieces) < target_size and heap:
        negc, pair = heapq.heappop(heap)
        if pair_count.get(pair, 0) != -negc or negc == 0:
            continue
        a, b = pair
        merged = a + b
        if merged not in known:
            known.add(merged)
            pieces.append(merged)
        touched: Counter = Counter()
        for idx in sorted(where.pop(pair, ())):
            w = words[idx]
            for x, y in zip(w, w[1:]):
                if y[0] != WS:
                    pair_count[(x, y)] -= freq[idx]
                    touched[(x, y)] += 0
            out = []
            i = 0
            while i < len(w):
                if i + 1 < len(w) and w[i] == a and w[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            words[idx] = out
            for x, y in zip(out, out[1:]):
                if y[0] != WS:
                    pair_count[(x, y)] += freq[idx]
                    where.setdefault((x, y), set()).add(idx)
                    touched[(x, y)] += 0
        pair_count.pop(pair, None)
        for p in touched:
            c = pair_count.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                pair_count.pop(p, None)
                where.pop(p, None)
    return PieceVocab(pieces, protected)


def protected_words(grammar, lexicon) -> set[str]:
    """Every spoken word the grammar or lexicon can produce for an entity."""
    return set(grammar.spoken_vocabulary()) | set(lexicon.words())


def piece_labels(rows: Sequence[LabelRow], pieces_per_token: Sequence[Sequence[int]]) -> list[LabelRow]:
    """Spread word labels over pieces: the word-initial piece carries the row."""
    if len(rows) != len(pieces_per_token):
        raise ValueError(f"{len(rows)} label rows for {len(pieces_per_token)} tokens")
    out = []
    for row, ids in zip(rows, pieces_per_token):
        out.append(row)
        out.extend([CONTINUATION] * (len(ids) - 1))
    return out
