"""Tree-kernel dynamic programs (SST, PTK), the pair kernel, and Gram matrices.

The SST (subset-tree) kernel counts shared grammar-production fragments with
decay ``lambda_`` per production. The PTK (partial-tree) kernel additionally
admits child subsequences, with gap decay ``lambda_`` (exponent = subsequence
span on each side) and per-node decay ``mu``. Both are computed over node
pairs with matching productions/labels only, which keeps the quadratic DP
cheap on dissimilar trees.

The pair kernel between question pairs p=(q1,q2) and p'=(q'1,q'2) is the sum
of one tree kernel over the forward macro-trees and one over the reversed
macro-trees, each summand normalized independently when configured, so values
range in [0, 2] and the Gram diagonal is exactly 2.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import QuestionPair
from .syntax import MacroTree, ParseTree, build_macro_tree, serialize_tree

KERNEL_KINDS = ("sst", "ptk")


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "sst"
    lambda_: float = 0.4
    mu: float = 0.4
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 < self.lambda_ <= 1.0:
            raise ValueError("lambda_ must be in (0, 1]")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must be in (0, 1]")

    def content_hash(self) -> str:
        blob = json.dumps({"kind": self.kind, "lambda": self.lambda_,
                           "mu": self.mu, "normalize": self.normalize},
                          sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class _TreeIndex:
    """Flat postorder arrays for one tree, with production/label lookup maps."""

    __slots__ = ("labels", "children", "is_leaf", "preterm", "prod_map", "label_map", "n")

    def __init__(self, root: ParseTree):
        labels: list[str] = []
        children: list[tuple[int, ...]] = []
        is_leaf: list[bool] = []

        def visit(node: ParseTree) -> int:
            child_ids = tuple(visit(c) for c in node.children)
            idx = len(labels)
            labels.append(node.label)
            children.append(child_ids)
            is_leaf.append(node.is_leaf)
            return idx

        visit(root)
        self.labels = labels
        self.children = children
        self.is_leaf = is_leaf
        self.n = len(labels)
        self.preterm = [bool(ch) and all(is_leaf[c] for c in ch) for ch in children]
        # production key: own label plus the ordered child labels
        self.prod_map: dict[str, list[int]] = {}
        self.label_map: dict[str, list[int]] = {}
        for i, ch in enumerate(children):
            self.label_map.setdefault(labels[i], []).append(i)
            if ch:
                key = labels[i] + "\x00" + "\x01".join(labels[c] for c in ch)
                self.prod_map.setdefault(key, []).append(i)


def _matching_pairs(map_a: dict, map_b: dict) -> list[tuple[int, int]]:
    if len(map_a) > len(map_b):
        pairs = [(i, j) for key, idx_b in map_b.items() if key in map_a
                 for j in idx_b for i in map_a[key]]
    else:
        pairs = [(i, j) for key, idx_a in map_a.items() if key in map_b
                 for i in idx_a for j in map_b[key]]
    # postorder indices put children before parents, so lexicographic order
    # is a valid bottom-up evaluation order
    pairs.sort()
    return pairs


def _sst_value(a: _TreeIndex, b: _TreeIndex, lam: float) -> float:
    pairs = _matching_pairs(a.prod_map, b.prod_map)
    if not pairs:
        return 0.0
    delta: dict[tuple[int, int], float] = {}
    get = delta.get
    total = 0.0
    for i, j in pairs:
        if a.preterm[i]:
            v = lam
        else:
            v = lam
            for ci, cj in zip(a.children[i], b.children[j]):
                v *= 1.0 + get((ci, cj), 0.0)
        delta[(i, j)] = v
        total += v
    return total


def _ptk_subseq_sum(cs_a: tuple, cs_b: tuple, delta: dict, lam: float) -> float:
    """Sum over matched child subsequences, weighted lambda^(span_a + span_b)."""
    m, n = len(cs_a), len(cs_b)
    lam2 = lam * lam
    get = delta.get
    dps = [[0.0] * (n + 1) for _ in range(m + 1)]
    total = 0.0
    for ia in range(1, m + 1):
        row = dps[ia]
        ca = cs_a[ia - 1]
        for jb in range(1, n + 1):
            v = lam2 * get((ca, cs_b[jb - 1]), 0.0)
            row[jb] = v
            total += v
    for _p in range(2, min(m, n) + 1):
        acc = [[0.0] * (n + 1) for _ in range(m + 1)]
        for ia in range(1, m + 1):
            acc_row = acc[ia]
            acc_prev = acc[ia - 1]
            dps_row = dps[ia]
            for jb in range(1, n + 1):
                acc_row[jb] = (dps_row[jb] + lam * acc_prev[jb]
                               + lam * acc_row[jb - 1] - lam2 * acc_prev[jb - 1])
        nxt = [[0.0] * (n + 1) for _ in range(m + 1)]
        any_nonzero = False
        for ia in range(1, m + 1):
            row = nxt[ia]
            ca = cs_a[ia - 1]
            for jb in range(1, n + 1):
                d = get((ca, cs_b[jb - 1]), 0.0)
                if d != 0.0:
                    v = d * lam2 * acc[ia - 1][jb - 1]
                    if v != 0.0:
                        row[jb] = v
                        total += v
                        any_nonzero = True
        if not any_nonzero:
            break
        dps = nxt
    return total


def _ptk_value(a: _TreeIndex, b: _TreeIndex, lam: float, mu: float) -> float:
    pairs = _matching_pairs(a.label_map, b.label_map)
    if not pairs:
        return 0.0
    lam2 = lam * lam
    delta: dict[tuple[int, int], float] = {}
    total = 0.0
    for i, j in pairs:
        cs_a, cs_b = a.children[i], b.children[j]
        if cs_a and cs_b:
            v = mu * (lam2 + _ptk_subseq_sum(cs_a, cs_b, delta, lam))
        else:
            v = mu * lam2
        delta[(i, j)] = v
        total += v
    return total


def sst_kernel(t1: ParseTree, t2: ParseTree, lambda_: float = 0.4) -> float:
    """Collins-Duffy subset-tree kernel over two trees."""
    if not 0.0 < lambda_ <= 1.0:
        raise ValueError("lambda_ must be in (0, 1]")
    return _sst_value(_TreeIndex(t1), _TreeIndex(t2), lambda_)


def ptk_kernel(t1: ParseTree, t2: ParseTree, lambda_: float = 0.4, mu: float = 0.4) -> float:
    """Partial-tree kernel over two trees (child subsequences with gaps)."""
    if not 0.0 < lambda_ <= 1.0:
        raise ValueError("lambda_ must be in (0, 1]")
    if not 0.0 < mu <= 1.0:
        raise ValueError("mu must be in (0, 1]")
    return _ptk_value(_TreeIndex(t1), _TreeIndex(t2), lambda_, mu)


def normalized_kernel(k_xy: float, k_xx: float, k_yy: float) -> float:
    """k_xy / sqrt(k_xx * k_yy), or 0 when either self-kernel is 0."""
    if k_xx < 0.0 or k_yy < 0.0:
        raise ValueError("self-kernels must be non-negative")
    if k_xx == 0.0 or k_yy == 0.0:
        return 0.0
    return k_xy / (k_xx * k_yy) ** 0.5


class PairKernel:
    """Pair-kernel evaluator with tree interning and self-kernel caching.

    Macro-trees are deduplicated by their canonical serialization, so
    repeated structures across a corpus are indexed and self-normalized once.
    Macro-tree construction is cached by question-id pair; ids must therefore
    be unique across the questions fed to one evaluator.
    """

    def __init__(self, cfg: KernelConfig, allow_flat_fallback: bool = True):
        self.cfg = cfg
        self.allow_flat_fallback = allow_flat_fallback
        self._index_by_canon: dict[str, int] = {}
        self._indexes: list[_TreeIndex] = []
        self._self_values: list[float] = []
        self._macro_cache: dict[tuple[str, str], int] = {}

    def _tk(self, a: _TreeIndex, b: _TreeIndex) -> float:
        if self.cfg.kind == "sst":
            return _sst_value(a, b, self.cfg.lambda_)
        return _ptk_value(a, b, self.cfg.lambda_, self.cfg.mu)

    def _intern(self, tree: MacroTree) -> int:
        canon = serialize_tree(tree.root)
        tid = self._index_by_canon.get(canon)
        if tid is None:
            tid = len(self._indexes)
            self._index_by_canon[canon] = tid
            idx = _TreeIndex(tree.root)
            self._indexes.append(idx)
            self._self_values.append(self._tk(idx, idx))
        return tid

    def macro_ids(self, pair: QuestionPair) -> tuple[int, int]:
        """Interned ids of t(q1,q2) and t(q2,q1) for one pair."""
        key = (pair.q1.id, pair.q2.id)
        fwd = self._macro_cache.get(key)
        if fwd is None:
            fwd = self._intern(build_macro_tree(pair.q1, pair.q2,
                                                allow_flat_fallback=self.allow_flat_fallback))
            self._macro_cache[key] = fwd
        rkey = (pair.q2.id, pair.q1.id)
        rev = self._macro_cache.get(rkey)
        if rev is None:
            rev = self._intern(build_macro_tree(pair.q2, pair.q1,
                                                allow_flat_fallback=self.allow_flat_fallback))
            self._macro_cache[rkey] = rev
        return fwd, rev

    def _tree_value(self, ta: int, tb: int) -> float:
        if ta == tb:
            raw = self._self_values[ta]
            if self.cfg.normalize:
                return 1.0 if raw > 0.0 else 0.0
            return raw
        raw = self._tk(self._indexes[ta], self._indexes[tb])
        if self.cfg.normalize:
            return normalized_kernel(raw, self._self_values[ta], self._self_values[tb])
        return raw

    def value(self, p: QuestionPair, q: QuestionPair) -> float:
        fa, ra = self.macro_ids(p)
        fb, rb = self.macro_ids(q)
        return self._tree_value(fa, fb) + self._tree_value(ra, rb)


def pair_kernel(p: QuestionPair, q: QuestionPair, cfg: Optional[KernelConfig] = None) -> float:
    """Kernel between two question pairs: forward summand plus reversed summand."""
    if cfg is None:
        cfg = KernelConfig()
    return PairKernel(cfg).value(p, q)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric matrix of pair-kernel values over one pair sequence."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.n, self.n):
            raise ValueError("gram values must be n x n")


def compute_gram(pairs: Sequence[QuestionPair], cfg: Optional[KernelConfig] = None,
                 evaluator: Optional[PairKernel] = None) -> GramMatrix:
    """Pairwise kernel over a pair list; upper triangle computed, then mirrored."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if evaluator is None:
        evaluator = PairKernel(cfg if cfg is not None else KernelConfig())
    ids = [evaluator.macro_ids(p) for p in pairs]
    n = len(pairs)
    values = np.zeros((n, n), dtype=np.float64)
    tree_cache: dict[tuple[int, int], float] = {}

    def tree_value(ta: int, tb: int) -> float:
        if tb < ta:
            ta, tb = tb, ta
        key = (ta, tb)
        v = tree_cache.get(key)
        if v is None:
            v = evaluator._tree_value(ta, tb)
            tree_cache[key] = v
        return v

    for i in range(n):
        fa, ra = ids[i]
        for j in range(i, n):
            fb, rb = ids[j]
            v = tree_value(fa, fb) + tree_value(ra, rb)
            values[i, j] = v
            values[j, i] = v
    return GramMatrix(n=n, values=values)


_GRAM_MAGIC = b"TDGRAM1\x00"


def save_gram(gram: GramMatrix, cfg: KernelConfig, path) -> None:
    """Binary cache: magic, n, config hash, then the upper triangle row-major."""
    digest = bytes.fromhex(cfg.content_hash())
    tri = gram.values[np.triu_indices(gram.n)]
    with open(path, "wb") as fh:
        fh.write(_GRAM_MAGIC)
        fh.write(struct.pack("<I", gram.n))
        fh.write(digest)
        fh.write(tri.astype("<f8").tobytes())


def load_gram(path, cfg: Optional[KernelConfig] = None) -> GramMatrix:
    """Load a Gram cache; if ``cfg`` is given its hash must match the header."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_GRAM_MAGIC))
        if magic != _GRAM_MAGIC:
            raise ValueError(f"{path}: not a gram cache file")
        (n,) = struct.unpack("<I", fh.read(4))
        digest = fh.read(32)
        if cfg is not None and digest != bytes.fromhex(cfg.content_hash()):
            raise ValueError(f"{path}: kernel config hash mismatch")
        tri = np.frombuffer(fh.read(), dtype="<f8")
    expected = n * (n + 1) // 2
    if tri.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {tri.size}")
    values = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n)
    values[iu] = tri
    values.T[iu] = tri
    return GramMatrix(n=n, values=values)
