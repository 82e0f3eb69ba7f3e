"""Chunk-level precision, recall and F1 (exact type and boundary match)."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import NamedTuple, Sequence

from .data import ENTITY_TYPES


class ChunkSpan(NamedTuple):
    entity_type: str
    start: int
    end: int  # exclusive


def extract_chunks(tags: Sequence[str]) -> set[ChunkSpan]:
    """Spans from an IOB2 sequence; an ``I-X`` that cannot continue opens a new span."""
    spans = set()
    kind, start = None, 0
    for i, tag in enumerate(tags):
        if tag == "O" or tag.startswith("B-") or (tag.startswith("I-") and tag[2:] != kind):
            if kind is not None:
                spans.add(ChunkSpan(kind, start, i))
            kind, start = (None, i) if tag == "O" else (tag[2:], i)
    if kind is not None:
        spans.add(ChunkSpan(kind, start, len(tags)))
    return spans


def spans_to_tags(spans, length: int) -> list[str]:
    tags = ["O"] * length
    for s in spans:
        tags[s.start] = "B-" + s.entity_type
        for i in range(s.start + 1, s.end):
            tags[i] = "I-" + s.entity_type
    return tags


def _pct(x: float) -> str:
    return str(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 in percent; 0 wherever a denominator vanishes."""
    p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class MetricsReport:
    tp: Counter = field(default_factory=Counter)
    fp: Counter = field(default_factory=Counter)
    fn: Counter = field(default_factory=Counter)

    def types(self) -> list[str]:
        extra = sorted((set(self.tp) | set(self.fp) | set(self.fn)) - set(ENTITY_TYPES))
        return ["LOC", "PER", "ORG", "MISC"] + extra

    def row(self, entity_type: str) -> tuple[float, float, float]:
        return prf(self.tp[entity_type], self.fp[entity_type], self.fn[entity_type])

    def totals(self) -> tuple[int, int, int]:
        return sum(self.tp.values()), sum(self.fp.values()), sum(self.fn.values())

    def micro(self) -> tuple[float, float, float]:
        return prf(*self.totals())

    @property
    def f1(self) -> float:
        return self.micro()[2]

    def format(self) -> str:
        lines = [f"{'':<10}{'Precision':>10}{'Recall':>10}{'F1-Score':>10}"]
        for t in self.types():
            p, r, f = self.row(t)
            lines.append(f"{t:<10}{_pct(p):>10}{_pct(r):>10}{_pct(f):>10}")
        p, r, f = self.micro()
        lines.append(f"{'Avg/total':<10}{_pct(p):>10}{_pct(r):>10}{_pct(f):>10}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        rows = {}
        for t in self.types():
            p, r, f = self.row(t)
            rows[t] = {"tp": self.tp[t], "fp": self.fp[t], "fn": self.fn[t],
                       "precision": p, "recall": r, "f1": f}
        tp, fp, fn = self.totals()
        p, r, f = self.micro()
        rows["Avg/total"] = {"tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r, "f1": f}
        return rows

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def f1_report(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> MetricsReport:
    """Score predicted tag sequences against gold ones, sentence by sentence."""
    if hasattr(gold, "tags"):
        gold = gold.tags()
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    report = MetricsReport()
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sentence {i}: {len(g)} gold tags but {len(p)} predicted")
        gs, ps = extract_chunks(g), extract_chunks(p)
        for s in gs & ps:
            report.tp[s.entity_type] += 1
        for s in ps - gs:
            report.fp[s.entity_type] += 1
        for s in gs - ps:
            report.fn[s.entity_type] += 1
    return report
