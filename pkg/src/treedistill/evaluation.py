"""Classification accuracy and mean average precision over ranked candidates."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class RankedList:
    """One query's candidates, ordered by score descending (ties by id)."""

    query_id: str
    candidates: tuple[tuple[str, float, int], ...]  # (candidate id, score, relevant)

    @classmethod
    def make(cls, query_id: str, entries) -> "RankedList":
        ordered = sorted(entries, key=lambda e: (-e[1], e[0]))
        return cls(query_id=query_id,
                   candidates=tuple((cid, float(s), int(r)) for cid, s, r in ordered))

    def relevance(self) -> list[int]:
        return [r for _cid, _s, r in self.candidates]


def accuracy(predictions: Sequence[int], gold: Sequence[int]) -> float:
    """Fraction of exact matches between two equal-length binary sequences."""
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(gold)}")
    if not gold:
        raise ValueError("cannot score an empty prediction list")
    hits = sum(1 for p, g in zip(predictions, gold) if int(p) == int(g))
    return hits / len(gold)


def average_precision(relevance: Sequence[int]) -> float:
    """AP over one ranked relevance vector; None-like 0 queries are the caller's problem."""
    n_rel = sum(1 for r in relevance if r)
    if n_rel == 0:
        raise ValueError("average precision is undefined with no relevant candidates")
    total = 0.0
    seen = 0
    for k, rel in enumerate(relevance, start=1):
        if rel:
            seen += 1
            total += seen / k
    return total / n_rel


def mean_average_precision(lists: Sequence[RankedList]) -> float:
    """Mean AP over queries; queries without any relevant candidate are excluded."""
    if not lists:
        raise ValueError("no ranked lists")
    aps = []
    for rl in lists:
        if not rl.candidates:
            raise ValueError(f"query {rl.query_id!r} has no candidates")
        relevance = rl.relevance()
        if any(relevance):
            aps.append(average_precision(relevance))
    if not aps:
        raise ValueError("every query has zero relevant candidates")
    return sum(aps) / len(aps)


PREDICTION_COLUMNS = ("query_id", "candidate_id", "score", "gold")


def write_predictions_csv(path, rows) -> None:
    """rows: iterable of (query_id, candidate_id, score, gold)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_COLUMNS)
        for query_id, candidate_id, score, gold in rows:
            writer.writerow([query_id, candidate_id, repr(float(score)), int(gold)])


def read_predictions_csv(path) -> list[tuple[str, str, float, int]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(PREDICTION_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno} has {len(row)} columns")
            rows.append((row[0], row[1], float(row[2]), int(row[3])))
    return rows


def ranked_lists_from_predictions(rows) -> list[RankedList]:
    """Group prediction rows by query id (first-seen order) into ranked lists."""
    grouped: dict[str, list] = {}
    for query_id, candidate_id, score, gold in rows:
        grouped.setdefault(query_id, []).append((candidate_id, score, gold))
    return [RankedList.make(qid, entries) for qid, entries in grouped.items()]


def accuracy_from_predictions(rows, threshold: float = 0.5) -> float:
    preds = [1 if score >= threshold else 0 for _q, _c, score, _g in rows]
    gold = [g for _q, _c, _s, g in rows]
    return accuracy(preds, gold)
