"""Question-pair data model, tokenization, dataset IO, vocabulary, and BM25 retrieval.

A :class:`Question` is an id plus raw text; tokens are always re-derived from
the raw text so a dataset can never carry stale tokenization. Pairs carry an
optional binary label (or a relevance grade that implies one) and a ``source``
flag recording whether the label came from human annotation (``gold``) or from
a trained labeler (``automatic``).
"""

from __future__ import annotations

import hashlib
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

RELEVANT_GRADES = frozenset({"PerfectMatch", "Relevant"})
GRADES = ("PerfectMatch", "Relevant", "Irrelevant")
SPLITS = ("train", "dev", "test", "unlabeled")
SOURCES = ("gold", "automatic")

_ASCII_PUNCT = frozenset(string.punctuation)

_QUORA_COLUMNS = ("id", "qid1", "qid2", "question1", "question2", "is_duplicate")

# JSONL field names are a fixed external contract.
_JSONL_FIELDS = ("id1", "id2", "text1", "text2", "tree1", "tree2",
                 "label", "grade", "score", "source")

_stopword_cache: Optional[frozenset] = None


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and peel leading/trailing ASCII punctuation.

    Deterministic and idempotent on its own space-joined output; interior
    punctuation (e.g. apostrophes in contractions) is left in place.
    """
    out: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and chunk[0] in _ASCII_PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _ASCII_PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out


def stopwords() -> frozenset:
    """The fixed English stopword list shipped with the package."""
    global _stopword_cache
    if _stopword_cache is None:
        text = resources.files("treedistill.data").joinpath("stopwords.txt").read_text("utf-8")
        _stopword_cache = frozenset(line.strip() for line in text.splitlines() if line.strip())
    return _stopword_cache


def remove_stopwords(tokens: Sequence[str], stop: Optional[frozenset] = None) -> list[str]:
    """Drop stopwords, preserving the order of the surviving tokens."""
    if stop is None:
        stop = stopwords()
    return [t for t in tokens if t not in stop]


@dataclass(frozen=True)
class Question:
    """One question: unique id, raw text, derived tokens, optional parse."""

    id: str
    raw_text: str
    tokens: tuple[str, ...]
    tree_source: Optional[str] = None
    subject: Optional[str] = None
    body: Optional[str] = None

    @classmethod
    def make(cls, id: str, raw_text: Optional[str] = None, tree_source: Optional[str] = None,
             subject: Optional[str] = None, body: Optional[str] = None) -> "Question":
        if not id:
            raise ValueError("question id must be non-empty")
        if raw_text is None:
            if subject is None or body is None:
                raise ValueError("need raw_text or both subject and body")
            raw_text = subject + " " + body
        return cls(id=id, raw_text=raw_text, tokens=tuple(tokenize(raw_text)),
                   tree_source=tree_source, subject=subject, body=body)


def _label_from_grade(grade: str) -> int:
    if grade not in GRADES:
        raise ValueError(f"unknown grade {grade!r}")
    return 1 if grade in RELEVANT_GRADES else 0


@dataclass(frozen=True)
class QuestionPair:
    """Two questions plus an optional binary label and its provenance."""

    q1: Question
    q2: Question
    label: Optional[int] = None
    grade: Optional[str] = None
    source: str = "gold"
    score: Optional[float] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.grade is not None:
            implied = _label_from_grade(self.grade)
            if self.label is None:
                object.__setattr__(self, "label", implied)
            elif self.label != implied:
                raise ValueError(f"label {self.label} contradicts grade {self.grade!r}")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.source == "automatic" and self.score is None:
            raise ValueError("automatic pairs must carry a score")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of pairs belonging to one split."""

    name: str
    pairs: tuple[QuestionPair, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.split == "unlabeled" and any(p.label is not None for p in self.pairs):
            raise ValueError("unlabeled split must not carry labels")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class LoadReport:
    """Row-level ingestion outcome: what was read, kept, and skipped."""

    rows_read: int = 0
    pairs_loaded: int = 0
    skipped: int = 0
    messages: tuple[str, ...] = ()


def load_quora_tsv(path, name: str = "quora", split: str = "train") -> tuple[Dataset, LoadReport]:
    """Load a 6-column Quora-style TSV (header optional).

    Malformed rows are skipped and counted in the returned report; an
    unreadable file raises.
    """
    pairs: list[QuestionPair] = []
    rows_read = 0
    skipped = 0
    messages: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if lineno == 1 and tuple(f.strip().lower() for f in fields) == _QUORA_COLUMNS:
                continue
            rows_read += 1
            try:
                if len(fields) != 6:
                    raise ValueError(f"expected 6 columns, got {len(fields)}")
                _, qid1, qid2, text1, text2, dup = fields
                if dup not in ("0", "1"):
                    raise ValueError(f"is_duplicate must be 0 or 1, got {dup!r}")
                pair = QuestionPair(q1=Question.make(qid1, text1),
                                    q2=Question.make(qid2, text2),
                                    label=int(dup), source="gold")
            except ValueError as exc:
                skipped += 1
                if len(messages) < 20:
                    messages.append(f"line {lineno}: {exc}")
                continue
            pairs.append(pair)
    report = LoadReport(rows_read=rows_read, pairs_loaded=len(pairs),
                        skipped=skipped, messages=tuple(messages))
    return Dataset(name=name, pairs=tuple(pairs), split=split), report


def _pair_to_record(pair: QuestionPair) -> dict:
    rec = {
        "id1": pair.q1.id,
        "id2": pair.q2.id,
        "text1": pair.q1.raw_text,
        "text2": pair.q2.raw_text,
        "source": pair.source,
    }
    if pair.q1.tree_source is not None:
        rec["tree1"] = pair.q1.tree_source
    if pair.q2.tree_source is not None:
        rec["tree2"] = pair.q2.tree_source
    if pair.grade is not None:
        rec["grade"] = pair.grade
    elif pair.label is not None:
        rec["label"] = pair.label
    if pair.score is not None:
        rec["score"] = pair.score
    return rec


def pair_from_record(rec: Mapping) -> QuestionPair:
    """Build a pair from one JSONL record (fixed field names)."""
    unknown = set(rec) - set(_JSONL_FIELDS)
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    q1 = Question.make(rec["id1"], rec["text1"], tree_source=rec.get("tree1"))
    q2 = Question.make(rec["id2"], rec["text2"], tree_source=rec.get("tree2"))
    return QuestionPair(q1=q1, q2=q2,
                        label=rec.get("label"), grade=rec.get("grade"),
                        source=rec.get("source", "gold"), score=rec.get("score"))


def save_jsonl(dataset: Dataset, path) -> None:
    """Write one JSON object per pair; absent optional fields are omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in dataset.pairs:
            fh.write(json.dumps(_pair_to_record(pair), ensure_ascii=False) + "\n")


def load_jsonl(path, name: Optional[str] = None, split: str = "train") -> Dataset:
    """Load a JSONL pair file; an invalid line is fatal and names its number."""
    pairs: list[QuestionPair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pairs.append(pair_from_record(rec))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: invalid record on line {lineno}: {exc}") from exc
    if name is None:
        name = str(path)
    return Dataset(name=name, pairs=tuple(pairs), split=split)


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-index map with reserved PAD=0 and UNK=1 rows."""

    token_to_index: Mapping[str, int]

    def __len__(self) -> int:
        return len(self.token_to_index)

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_INDEX)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def content_hash(self) -> str:
        items = sorted(self.token_to_index.items(), key=lambda kv: kv[1])
        blob = "\n".join(f"{tok}\t{idx}" for tok, idx in items)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_vocabulary(dataset: Dataset, min_count: int = 1) -> Vocabulary:
    """Index every token with corpus frequency >= min_count.

    Ordering is (frequency desc, token asc) after the reserved PAD/UNK slots,
    so the mapping is deterministic. Build this from the training split only.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for pair in dataset.pairs:
        counts.update(pair.q1.tokens)
        counts.update(pair.q2.tokens)
    mapping = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    for token in kept:
        mapping[token] = len(mapping)
    return Vocabulary(token_to_index=mapping)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dict(vocab.token_to_index), fh, ensure_ascii=False, indent=0)


def load_vocabulary(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        return Vocabulary(token_to_index=json.load(fh))


class Bm25Index:
    """In-memory inverted index scoring with BM25 (k1=1.2, b=0.75).

    IDF is the natural log of (N - df + 0.5) / (df + 0.5), floored at zero so
    very common terms never score negatively.
    """

    K1 = 1.2
    B = 0.75

    def __init__(self, questions: Sequence[Question]):
        if not questions:
            raise ValueError("index must be non-empty")
        self.questions = list(questions)
        self.doc_len = [len(q.tokens) for q in self.questions]
        self.avg_len = sum(self.doc_len) / len(self.doc_len)
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for doc_id, q in enumerate(self.questions):
            for term, tf in sorted(Counter(q.tokens).items()):
                self.postings.setdefault(term, []).append((doc_id, tf))

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = len(self.questions)
        return max(0.0, math.log((n - df + 0.5) / (df + 0.5)))

    def score(self, query_tokens: Sequence[str], doc_id: int) -> float:
        tf_map = Counter(self.questions[doc_id].tokens)
        dl = self.doc_len[doc_id]
        total = 0.0
        for term in dict.fromkeys(query_tokens):
            tf = tf_map.get(term, 0)
            if tf == 0:
                continue
            idf = self.idf(term)
            denom = tf + self.K1 * (1.0 - self.B + self.B * dl / self.avg_len)
            total += idf * tf * (self.K1 + 1.0) / denom
        return total

    def query(self, query: Question, k: int) -> list[tuple[Question, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        scores: dict[int, float] = {}
        for term in dict.fromkeys(query.tokens):
            idf = self.idf(term)
            if idf == 0.0 and term not in self.postings:
                continue
            for doc_id, tf in self.postings.get(term, ()):
                dl = self.doc_len[doc_id]
                denom = tf + self.K1 * (1.0 - self.B + self.B * dl / self.avg_len)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.K1 + 1.0) / denom
        ranked = [(self.questions[d], s) for d, s in scores.items()
                  if self.questions[d].id != query.id]
        # docs never touched by a query term score 0 and are simply absent
        ranked.sort(key=lambda qs: (-qs[1], qs[0].id))
        return ranked[:k]


def retrieve_candidates(query: Question, index, k: int) -> list[tuple[Question, float]]:
    """Top-k BM25 candidates for a query, self excluded, ties by id ascending.

    ``index`` may be a prebuilt :class:`Bm25Index` or a question sequence.
    """
    if not isinstance(index, Bm25Index):
        index = Bm25Index(index)
    return index.query(query, k)


def generate_unlabeled_pairs(questions: Sequence[Question], k: int = 10,
                             name: str = "unlabeled") -> Dataset:
    """Pair every question with its top-k BM25 candidates, labels absent."""
    index = Bm25Index(questions)
    pairs = []
    for q in questions:
        for cand, _score in index.query(q, k):
            pairs.append(QuestionPair(q1=q, q2=cand, source="gold"))
    return Dataset(name=name, pairs=tuple(pairs), split="unlabeled")
