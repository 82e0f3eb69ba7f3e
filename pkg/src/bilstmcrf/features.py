"""Per-token input features: word embeddings, one-hot POS/chunk, char vocab.

Word vectors come either from a text embedding file or from the bundled
skip-gram trainer.  Out-of-vocabulary words share one UNK row drawn
uniformly from ``[-sqrt(3/dim), +sqrt(3/dim)]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor, concat, get_default_dtype

logger = logging.getLogger(__name__)

UNK = "<unk>"
PAD = "<pad>"
UNK_INDEX = 0
PAD_INDEX = 1


class Vocab:
    """Symbol/index bijection with UNK at 0 and PAD at 1."""

    def __init__(self, symbols: Iterable[str] = ()):
        self.symbols: list[str] = [UNK, PAD]
        self.index: dict[str, int] = {UNK: UNK_INDEX, PAD: PAD_INDEX}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        idx = self.index.get(symbol)
        if idx is None:
            idx = self.index[symbol] = len(self.symbols)
            self.symbols.append(symbol)
        return idx

    def lookup(self, symbol: str, lower_fallback: bool = False) -> int:
        idx = self.index.get(symbol)
        if idx is None and lower_fallback:
            idx = self.index.get(symbol.lower())
        return UNK_INDEX if idx is None else idx

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.symbols == other.symbols

    def to_list(self) -> list[str]:
        return self.symbols[2:]

    @classmethod
    def from_list(cls, symbols: Sequence[str]) -> "Vocab":
        return cls(symbols)


class TagInventory:
    """Ordered tag set; indices follow first insertion."""

    def __init__(self, tags: Iterable[str] = ()):
        self.tags: list[str] = []
        self._index: dict[str, int] = {}
        for t in tags:
            self.add(t)

    def add(self, tag: str) -> int:
        if tag not in self._index:
            self._index[tag] = len(self.tags)
            self.tags.append(tag)
        return self._index[tag]

    def get(self, tag: str) -> int | None:
        return self._index.get(tag)

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    def __iter__(self):
        return iter(self.tags)

    def __eq__(self, other) -> bool:
        return isinstance(other, TagInventory) and self.tags == other.tags


@dataclass
class EmbeddingTable:
    vocab: Vocab
    dim: int
    rows: Tensor
    trainable: bool = False

    def __post_init__(self):
        if self.rows.shape != (len(self.vocab), self.dim):
            raise ValueError(
                f"embedding rows {self.rows.shape} do not match vocab {len(self.vocab)} x dim {self.dim}")
        self.rows.requires_grad = self.trainable

    def vector(self, symbol: str) -> np.ndarray:
        return self.rows.data[self.vocab.lookup(symbol, lower_fallback=True)]


def unk_bound(dim: int) -> float:
    return math.sqrt(3.0 / dim)


def unk_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim < 1:
        raise ValueError(f"embedding dimension must be positive, got {dim}")
    b = unk_bound(dim)
    return rng.uniform(-b, b, size=dim)


def random_table(vocab: Vocab, dim: int, rng: np.random.Generator, trainable: bool = True,
                 dtype=None) -> EmbeddingTable:
    """Every row drawn from the UNK range; PAD row is zero."""
    rows = np.stack([unk_vector(dim, rng) for _ in range(len(vocab))])
    rows[PAD_INDEX] = 0.0
    return EmbeddingTable(vocab, dim, Tensor(rows, dtype=dtype or get_default_dtype()), trainable)


def one_hot(tag: str, inventory: TagInventory) -> np.ndarray:
    """One-hot row for ``tag``; a tag outside the inventory gives all zeros."""
    if len(inventory) == 0:
        raise ValueError("one_hot needs a non-empty inventory")
    out = np.zeros(len(inventory), dtype=get_default_dtype())
    idx = inventory.get(tag)
    if idx is not None:
        out[idx] = 1.0
    return out


def one_hot_matrix(inventory: TagInventory, dtype=None) -> np.ndarray:
    """Identity rows plus a trailing zero row, so index -1 encodes 'unseen'."""
    n = len(inventory)
    return np.vstack([np.eye(n), np.zeros((1, n))]).astype(dtype or get_default_dtype())


def build_word_representation(token, word_table: EmbeddingTable, pos_inventory: TagInventory,
                              chunk_inventory: TagInventory, char_vector, char_dim: int) -> Tensor:
    """Concatenate ``[word | POS one-hot | chunk one-hot | char]`` for one token."""
    char_vector = char_vector if isinstance(char_vector, Tensor) else Tensor(char_vector)
    if char_vector.shape != (char_dim,):
        raise ValueError(f"char vector has shape {char_vector.shape}, expected ({char_dim},)")
    idx = word_table.vocab.lookup(token.surface, lower_fallback=True)
    dtype = word_table.rows.dtype
    return concat([
        word_table.rows[idx],
        Tensor(one_hot(token.pos, pos_inventory), dtype=dtype),
        Tensor(one_hot(token.chunk, chunk_inventory), dtype=dtype),
        char_vector,
    ])


# -- skip-gram --------------------------------------------------------------

def skipgram_pairs(sentence: Sequence[int], window: int) -> list[tuple[int, int]]:
    """Position pairs ``(i, j)`` with ``1 <= |i - j| <= window``."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(sentence)
    return [(i, j)
            for i in range(n)
            for j in range(max(0, i - window), min(n, i + window + 1))
            if j != i]


def train_skipgram(corpus: Sequence[Sequence[str]], dim: int, epochs: int,
                   rng: np.random.Generator, *, window: int = 2, negatives: int = 5,
                   lr: float = 0.025, chunk: int = 1024, dtype=None) -> EmbeddingTable:
    """Skip-gram with negative sampling over ``corpus``.

    Updates are applied per chunk of pairs (plain SGD, learning rate decayed
    linearly to ``lr * 1e-4``).  Noise words follow the unigram distribution
    raised to 0.75.
    """
    if dim < 1:
        raise ValueError(f"embedding dimension must be positive, got {dim}")
    sentences = [list(s) for s in corpus if len(s)]
    if not sentences:
        raise ValueError("cannot train embeddings on an empty corpus")

    counts: dict[str, int] = {}
    for s in sentences:
        for w in s:
            counts[w] = counts.get(w, 0) + 1
    # by frequency, ties in first-seen order (dicts preserve insertion)
    words = sorted(counts, key=lambda w: -counts[w])
    vocab = Vocab(words)
    n_vocab = len(vocab)

    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_vocab, dim))
    w_in[UNK_INDEX] = unk_vector(dim, rng)
    w_in[PAD_INDEX] = 0.0
    w_out = np.zeros((n_vocab, dim))

    freq = np.zeros(n_vocab)
    for w, c in counts.items():
        freq[vocab.index[w]] = c
    noise = freq ** 0.75
    noise /= noise.sum()
    noise_cdf = np.cumsum(noise)
    noise_cdf[-1] = 1.0

    encoded = [np.array([vocab.index[w] for w in s]) for s in sentences]
    pair_cache = {}
    total_pairs = 0
    for s in encoded:
        n = len(s)
        if n not in pair_cache:
            pair_cache[n] = np.array(skipgram_pairs(range(n), window), dtype=np.int64).reshape(-1, 2)
        total_pairs += len(pair_cache[n])
    total = max(1, total_pairs * epochs)
    labels = np.zeros(negatives + 1)
    labels[0] = 1.0

    seen = 0
    for _ in range(epochs):
        buf_t, buf_c = [], []
        pending = 0
        for s in encoded:
            pos = pair_cache[len(s)]
            if not len(pos):
                continue
            buf_t.append(s[pos[:, 0]])
            buf_c.append(s[pos[:, 1]])
            pending += len(pos)
            if pending >= chunk:
                seen = _sgns_update(w_in, w_out, buf_t, buf_c, noise_cdf, negatives, labels,
                                    lr, seen, total, rng)
                buf_t, buf_c, pending = [], [], 0
        if pending:
            seen = _sgns_update(w_in, w_out, buf_t, buf_c, noise_cdf, negatives, labels,
                                lr, seen, total, rng)

    logger.info("skip-gram: %d words, dim %d, %d pairs/epoch", n_vocab - 2, dim, total_pairs)
    return EmbeddingTable(vocab, dim, Tensor(w_in, dtype=dtype or get_default_dtype()), False)


def _sgns_update(w_in, w_out, buf_t, buf_c, noise_cdf, negatives, labels, lr, seen, total, rng):
    targets = np.concatenate(buf_t)
    contexts = np.concatenate(buf_c)
    p = len(targets)
    alpha = lr * max(1e-4, 1.0 - seen / total)
    neg = np.searchsorted(noise_cdf, rng.random((p, negatives)), side="right")
    ctx = np.concatenate([contexts[:, None], neg], axis=1)
    v = w_in[targets]
    u = w_out[ctx]
    score = np.einsum("pd,pkd->pk", v, u)
    sig = 0.5 * (1.0 + np.tanh(0.5 * score))
    g = (labels - sig) * alpha
    np.add.at(w_in, targets, np.einsum("pk,pkd->pd", g, u))
    np.add.at(w_out, ctx, g[:, :, None] * v[:, None, :])
    return seen + p


# -- embedding files --------------------------------------------------------

def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write ``<count> <dim>`` then one ``word v1 .. vdim`` line per word."""
    rows = table.rows.data
    words = table.vocab.to_list()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(words)} {table.dim}\n")
        for i, w in enumerate(words, start=2):
            fh.write(w + " " + " ".join(f"{float(v):.9g}" for v in rows[i]) + "\n")


def load_embeddings(path, rng: np.random.Generator, trainable: bool = False,
                    dtype=None) -> EmbeddingTable:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be '<count> <dim>'")
        count, dim = int(header[0]), int(header[1])
        vocab = Vocab()
        vectors = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            if parts[0] in vocab:
                continue
            vocab.add(parts[0])
            vectors.append(np.array(parts[1:], dtype=np.float64))
    if len(vectors) != count:
        logger.warning("%s: header says %d words, read %d", path, count, len(vectors))
    rows = np.zeros((len(vocab), dim))
    rows[UNK_INDEX] = unk_vector(dim, rng)
    if vectors:
        rows[2:] = np.stack(vectors)
    return EmbeddingTable(vocab, dim, Tensor(rows, dtype=dtype or get_default_dtype()), trainable)


def extend_table(table: EmbeddingTable, words: Iterable[str], rng: np.random.Generator) -> EmbeddingTable:
    """Add rows for ``words`` missing from ``table`` (matched with lowercase fallback)."""
    vocab = Vocab(table.vocab.to_list())
    new = []
    for w in words:
        if vocab.lookup(w, lower_fallback=True) == UNK_INDEX:
            vocab.add(w)
            new.append(unk_vector(table.dim, rng))
    if not new:
        return table
    rows = np.vstack([table.rows.data, np.asarray(new, dtype=table.rows.dtype)])
    return EmbeddingTable(vocab, table.dim, Tensor(rows, dtype=table.rows.dtype), table.trainable)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
