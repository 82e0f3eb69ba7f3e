"""Reading, writing, batching, and generating 4-column NER corpora.

File layout: one token per line as ``surface<TAB>POS<TAB>chunk<TAB>NER``,
sentences separated by blank lines, UTF-8.  Runs of spaces are accepted
in place of tabs on read; tabs are always written.  NER tags use IOB2
over the types PER, LOC, ORG and MISC.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .features import PAD_INDEX, TagInventory, Vocab

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC")
_TAG_RE = re.compile(r"^(O|[BI]-(PER|LOC|ORG|MISC))$")


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    chunk: str
    ner: str = "O"


Sentence = tuple  # tuple[Token, ...]


@dataclass
class Inventories:
    words: Vocab
    chars: Vocab
    pos: TagInventory
    chunk: TagInventory
    ner: TagInventory

    @classmethod
    def from_sentences(cls, sentences: Sequence[Sentence]) -> "Inventories":
        inv = cls(Vocab(), Vocab(), TagInventory(), TagInventory(), TagInventory())
        for sent in sentences:
            for tok in sent:
                inv.words.add(tok.surface)
                for ch in tok.surface:
                    inv.chars.add(ch)
                inv.pos.add(tok.pos)
                inv.chunk.add(tok.chunk)
                inv.ner.add(tok.ner)
        return inv

    def to_dict(self) -> dict:
        return {"words": self.words.to_list(), "chars": self.chars.to_list(),
                "pos": list(self.pos), "chunk": list(self.chunk), "ner": list(self.ner)}

    @classmethod
    def from_dict(cls, d: dict) -> "Inventories":
        return cls(Vocab(d["words"]), Vocab(d["chars"]), TagInventory(d["pos"]),
                   TagInventory(d["chunk"]), TagInventory(d["ner"]))


@dataclass
class Corpus:
    sentences: list[Sentence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self.sentences == other.sentences

    @cached_property
    def inventories(self) -> Inventories:
        return Inventories.from_sentences(self.sentences)

    def tags(self) -> list[list[str]]:
        return [[t.ner for t in s] for s in self.sentences]

    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def validate_bio(tags: Sequence[str]) -> list[tuple[int, str]]:
    """Positions of ``I-X`` tags not preceded by ``B-X`` or ``I-X``."""
    out = []
    prev = "O"
    for i, tag in enumerate(tags):
        if tag.startswith("I-") and prev[2:] != tag[2:]:
            out.append((i, f"{tag} follows {prev}"))
        prev = tag
    return out


def repair_bio(tags: Sequence[str]) -> list[str]:
    """Promote every orphan ``I-X`` to ``B-X``."""
    fixed = list(tags)
    for i, _ in validate_bio(tags):
        fixed[i] = "B-" + fixed[i][2:]
    return fixed


def parse_conll(text: str, source: str = "<string>", allow_missing_ner: bool = False) -> Corpus:
    """Parse 4-column text into a :class:`Corpus`.

    With ``allow_missing_ner`` 3-column lines are accepted too; their NER tag
    is set to ``O``.  Orphan ``I-X`` tags are repaired to ``B-X`` and logged.
    """
    sentences: list[Sentence] = []
    current: list[Token] = []
    start_line = 1

    def flush():
        if not current:
            return
        tags = [t.ner for t in current]
        problems = validate_bio(tags)
        if problems:
            logger.warning("%s: sentence at line %d: repaired %d IOB2 violation(s): %s",
                           source, start_line, len(problems), problems)
            tags = repair_bio(tags)
            current[:] = [Token(t.surface, t.pos, t.chunk, g) for t, g in zip(current, tags)]
        sentences.append(tuple(current))
        current.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\r\n")
        if not line.strip():
            flush()
            start_line = lineno + 1
            continue
        cols = line.split("\t")
        if len(cols) == 1 or any(not c for c in cols):
            cols = line.split()
        if len(cols) == 3 and allow_missing_ner:
            cols.append("O")
        if len(cols) != 4:
            expected = "3 or 4" if allow_missing_ner else "4"
            raise CorpusFormatError(
                f"{source}:{lineno}: expected {expected} columns, found {len(cols)}: {line!r}")
        surface, pos, chunk, ner = cols
        if not _TAG_RE.match(ner):
            raise CorpusFormatError(f"{source}:{lineno}: invalid NER tag {ner!r}")
        if not current:
            start_line = lineno
        current.append(Token(surface, pos, chunk, ner))
    flush()
    return Corpus(sentences)


def read_conll(path, allow_missing_ner: bool = False) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read(), source=str(path), allow_missing_ner=allow_missing_ner)


def serialize_conll(corpus: Corpus | Sequence[Sentence]) -> str:
    sentences = corpus.sentences if isinstance(corpus, Corpus) else corpus
    blocks = ["".join(f"{t.surface}\t{t.pos}\t{t.chunk}\t{t.ner}\n" for t in s) for s in sentences]
    return "\n".join(blocks)


def write_conll(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_conll(corpus))


# -- batching ---------------------------------------------------------------

@dataclass
class Batch:
    sentences: list[Sentence]
    word_ids: np.ndarray     # [B, T]
    char_ids: np.ndarray     # [B, T, C]
    char_lengths: np.ndarray  # [B, T], 0 on padding
    pos_ids: np.ndarray      # [B, T], -1 for unseen or padding
    chunk_ids: np.ndarray    # [B, T]
    tag_ids: np.ndarray      # [B, T]
    mask: np.ndarray         # [B, T] bool

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def __len__(self) -> int:
        return len(self.sentences)


class TagInventoryError(ValueError):
    pass


def make_batch(sentences: Sequence[Sentence], inv: Inventories, strict_tags: bool = True) -> Batch:
    B = len(sentences)
    steps = max(len(s) for s in sentences)
    max_chars = max(len(t.surface) for s in sentences for t in s)
    word_ids = np.full((B, steps), PAD_INDEX, dtype=np.int64)
    char_ids = np.full((B, steps, max_chars), PAD_INDEX, dtype=np.int64)
    char_lengths = np.zeros((B, steps), dtype=np.int64)
    pos_ids = np.full((B, steps), -1, dtype=np.int64)
    chunk_ids = np.full((B, steps), -1, dtype=np.int64)
    tag_ids = np.zeros((B, steps), dtype=np.int64)
    mask = np.zeros((B, steps), dtype=bool)
    for b, sent in enumerate(sentences):
        for t, tok in enumerate(sent):
            word_ids[b, t] = inv.words.lookup(tok.surface, lower_fallback=True)
            chars = [inv.chars.lookup(ch) for ch in tok.surface]
            char_ids[b, t, : len(chars)] = chars
            char_lengths[b, t] = len(chars)
            p = inv.pos.get(tok.pos)
            c = inv.chunk.get(tok.chunk)
            pos_ids[b, t] = -1 if p is None else p
            chunk_ids[b, t] = -1 if c is None else c
            k = inv.ner.get(tok.ner)
            if k is None:
                if strict_tags:
                    raise TagInventoryError(
                        f"NER tag {tok.ner!r} is not in the model's tag inventory {list(inv.ner)}")
                k = 0
            tag_ids[b, t] = k
            mask[b, t] = True
    return Batch(list(sentences), word_ids, char_ids, char_lengths, pos_ids, chunk_ids, tag_ids, mask)


def batch_iter(corpus: Corpus, batch_size: int, shuffle_seed: int | None = None,
               inventories: Inventories | None = None, strict_tags: bool = True) -> Iterator[Batch]:
    """Yield padded batches covering every sentence once.

    ``shuffle_seed=None`` keeps file order; otherwise the order is a
    permutation drawn from that seed.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    inv = inventories or corpus.inventories
    order = np.arange(len(corpus))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(corpus))
    for start in range(0, len(order), batch_size):
        chunk = [corpus.sentences[i] for i in order[start: start + batch_size]]
        yield make_batch(chunk, inv, strict_tags)


# -- synthetic data ---------------------------------------------------------

_PER_FIRST = ["Nguyễn", "Trần", "Lê", "Phạm", "Hoàng", "Vũ", "Đặng", "Bùi"]
_PER_REST = ["Văn", "Thị", "Minh", "Hùng", "Lan", "Dũng", "Quang", "Hải", "Thu"]
_LOC_SINGLE = ["Hà_Nội", "Đà_Nẵng", "Huế", "Cần_Thơ", "Hải_Phòng", "Sài_Gòn", "Nha_Trang"]
_LOC_HEAD = ["tỉnh", "huyện"]
_LOC_TAIL = ["Nghệ_An", "Bắc_Ninh", "Thanh_Hoá", "Quảng_Nam", "Lâm_Đồng"]
_ORG_HEAD = ["Công_ty", "Ngân_hàng", "Trường", "Tập_đoàn", "Bộ"]
_ORG_TAIL = ["FPT", "Vinamilk", "Bách_Khoa", "Viettel", "Sông_Đà", "Y_tế"]
_MISC_HEAD = ["Oscar", "SEA_Games", "Euro", "iPhone", "Tết"]
_MISC_TAIL = ["2018", "2019", "X"]

_FILLER_POS = {
    "Ông": ("Nc", "B-NP"), "Bà": ("Nc", "B-NP"), "đã": ("R", "O"), "đến": ("V", "B-VP"),
    "hôm_qua": ("N", "B-NP"), ".": ("CH", "O"), ",": ("CH", "O"), "vừa": ("R", "O"),
    "công_bố": ("V", "B-VP"), "kết_quả": ("N", "B-NP"), "tại": ("E", "B-PP"),
    "được": ("V", "B-VP"), "giới_thiệu": ("V", "B-VP"), "làm_việc": ("V", "B-VP"),
    "cho": ("E", "B-PP"), "giải": ("N", "B-NP"), "diễn_ra": ("V", "B-VP"), "ở": ("E", "B-PP"),
    "anh": ("P", "B-NP"), "ấy": ("P", "I-NP"), "thích": ("V", "B-VP"), "đọc": ("V", "B-VP"),
    "sách": ("N", "B-NP"), "và": ("CC", "O"), "gặp": ("V", "B-VP"), "trong": ("E", "B-PP"),
    "năm": ("N", "B-NP"), "nay": ("P", "I-NP"), "sự_kiện": ("N", "B-NP"), "mới": ("A", "B-AP"),
    "chuyển": ("V", "B-VP"), "về": ("E", "B-PP"), "trời": ("N", "B-NP"), "đẹp": ("A", "B-AP"),
}

_TEMPLATES = [
    ["Ông", "PER", "đã", "đến", "LOC", "hôm_qua", "."],
    ["ORG", "vừa", "công_bố", "kết_quả", "tại", "LOC", "."],
    ["sự_kiện", "MISC", "được", "PER", "giới_thiệu", "."],
    ["PER", "làm_việc", "cho", "ORG", "ở", "LOC", "."],
    ["giải", "MISC", "diễn_ra", "ở", "LOC", "."],
    ["Bà", "PER", "gặp", "PER", "tại", "ORG", "."],
    ["MISC", "mới", "được", "ORG", "giới_thiệu", "trong", "năm", "nay", "."],
    ["anh", "ấy", "thích", "đọc", "sách", "."],
    ["PER", "chuyển", "về", "LOC", "và", "làm_việc", "cho", "ORG", "."],
    ["trời", "ở", "LOC", "đẹp", "."],
    ["ORG", "và", "ORG", "gặp", "PER", "trong", "sự_kiện", "MISC", "."],
]


def _entity(kind: str, rng: np.random.Generator) -> list[str]:
    pick = lambda xs: xs[int(rng.integers(len(xs)))]  # noqa: E731
    if kind == "PER":
        return [pick(_PER_FIRST)] + [pick(_PER_REST) for _ in range(int(rng.integers(1, 3)))]
    if kind == "LOC":
        return [pick(_LOC_SINGLE)] if rng.random() < 0.6 else [pick(_LOC_HEAD), pick(_LOC_TAIL)]
    if kind == "ORG":
        return [pick(_ORG_HEAD), pick(_ORG_TAIL)]
    return [pick(_MISC_HEAD)] if rng.random() < 0.5 else [pick(_MISC_HEAD), pick(_MISC_TAIL)]


def synth_corpus(seed: int, n_sentences: int) -> Corpus:
    """Template sentences whose entity tags are recoverable from surface form.

    Every lexicon word belongs to exactly one entity type and one position
    (first or continuation), and filler words never occur in a lexicon.
    """
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        template = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        toks = []
        for slot in template:
            if slot in ENTITY_TYPES:
                words = _entity(slot, rng)
                for k, w in enumerate(words):
                    toks.append(Token(w, "Np" if not w.isdigit() else "M",
                                      "B-NP" if k == 0 else "I-NP",
                                      ("B-" if k == 0 else "I-") + slot))
            else:
                pos, chunk = _FILLER_POS[slot]
                toks.append(Token(slot, pos, chunk, "O"))
        sentences.append(tuple(toks))
    return Corpus(sentences)
