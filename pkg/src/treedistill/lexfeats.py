"""20-dimensional lexical similarity features over question pairs.

Five measures (Jaccard, containment, cosine over n-gram sets; longest common
subsequence and greedy string tiling over n-gram sequences) crossed with
n-gram orders 1..4, computed after stopword removal. Every value lies in
[0, 1]; orders longer than a question yield 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Dataset, QuestionPair, remove_stopwords

MEASURES = ("jaccard", "containment", "cosine", "lcs", "gst")
NGRAM_ORDERS = (1, 2, 3, 4)
FEATURE_NAMES = tuple(f"{m}_{n}" for m in MEASURES for n in NGRAM_ORDERS)


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values")
        if any(v < 0.0 or v > 1.0 for v in self.values):
            raise ValueError("feature values must lie in [0, 1]")

    names = FEATURE_NAMES


def ngrams(tokens: Sequence, n: int) -> list[tuple]:
    """Contiguous n-grams in order; empty when the input is shorter than n."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def containment(a: set, b: set) -> float:
    if not a:
        return 0.0
    return len(a & b) / len(a)


def cosine_sets(a: set, b: set) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / (len(a) * len(b)) ** 0.5


def lcs_sim(s1: Sequence, s2: Sequence) -> float:
    """Longest-common-subsequence length over max(|s1|, |s2|)."""
    if not s1 and not s2:
        return 0.0
    if not s1 or not s2:
        return 0.0
    prev = [0] * (len(s2) + 1)
    for x in s1:
        cur = [0]
        for j, y in enumerate(s2, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1] / max(len(s1), len(s2))


def gst_tiles(s1: Sequence, s2: Sequence, mml: int = 1) -> list[tuple[int, int, int]]:
    """Greedy string tiling: non-overlapping maximal matches of length >= mml.

    Each round finds the longest common unmarked substring length, then marks
    all matches of that length (leftmost in s1, then s2, skipping overlaps),
    until only matches shorter than mml remain. Returns (i, j, length) tiles.
    """
    marked1 = [False] * len(s1)
    marked2 = [False] * len(s2)
    tiles: list[tuple[int, int, int]] = []
    while True:
        max_len = 0
        matches: list[tuple[int, int, int]] = []
        for i in range(len(s1)):
            if marked1[i]:
                continue
            for j in range(len(s2)):
                if marked2[j]:
                    continue
                k = 0
                while (i + k < len(s1) and j + k < len(s2)
                       and not marked1[i + k] and not marked2[j + k]
                       and s1[i + k] == s2[j + k]):
                    k += 1
                if k > max_len:
                    max_len = k
                    matches = [(i, j, k)]
                elif k == max_len and k > 0:
                    matches.append((i, j, k))
        if max_len < mml:
            break
        for i, j, k in matches:
            if any(marked1[i:i + k]) or any(marked2[j:j + k]):
                continue
            for off in range(k):
                marked1[i + off] = True
                marked2[j + off] = True
            tiles.append((i, j, k))
    return tiles


def gst_sim(s1: Sequence, s2: Sequence, mml: int = 1) -> float:
    """2 * tiled length / (|s1| + |s2|); 0 when both sides are empty."""
    if not s1 and not s2:
        return 0.0
    tiled = sum(k for _i, _j, k in gst_tiles(s1, s2, mml))
    return 2.0 * tiled / (len(s1) + len(s2))


def feature_vector(pair: QuestionPair, stop: Optional[frozenset] = None) -> FeatureVector:
    """All 20 similarities for one pair, in the fixed FEATURE_NAMES order."""
    t1 = remove_stopwords(pair.q1.tokens, stop)
    t2 = remove_stopwords(pair.q2.tokens, stop)
    grams1 = {n: ngrams(t1, n) for n in NGRAM_ORDERS}
    grams2 = {n: ngrams(t2, n) for n in NGRAM_ORDERS}
    values: list[float] = []
    for measure in MEASURES:
        for n in NGRAM_ORDERS:
            g1, g2 = grams1[n], grams2[n]
            if measure == "jaccard":
                values.append(jaccard(set(g1), set(g2)))
            elif measure == "containment":
                values.append(containment(set(g1), set(g2)))
            elif measure == "cosine":
                values.append(cosine_sets(set(g1), set(g2)))
            elif measure == "lcs":
                values.append(lcs_sim(g1, g2))
            else:
                values.append(gst_sim(g1, g2))
    return FeatureVector(values=tuple(values))


def write_feature_csv(dataset: Dataset, path, stop: Optional[frozenset] = None) -> None:
    """Dump pair ids plus the 20 named features, one row per pair."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id1", "id2") + FEATURE_NAMES)
        for pair in dataset.pairs:
            fv = feature_vector(pair, stop)
            writer.writerow([pair.q1.id, pair.q2.id] + [f"{v:.10g}" for v in fv.values])
