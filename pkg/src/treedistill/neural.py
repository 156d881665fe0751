"""Minimal pair-classification networks with exact manual gradients.

Two sentence encoders (independent weights) map each question of a pair to a
100-dimensional vector: either a width-5 convolution with ReLU and masked
global max pooling, or a bidirectional LSTM with 50 hidden units per
direction. Word embeddings (50d) are concatenated with a 5d learned "overlap"
embedding indexed by whether the token appears in the paired question. The
concatenated encodings feed a one-hidden-layer MLP with a sigmoid output,
trained on binary cross-entropy with Adam.

Everything is float64 and hand-differentiated; ``gradient_check`` compares
every parameter tensor against central finite differences.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .corpus import (PAD_INDEX, Dataset, Question, QuestionPair, Vocabulary,
                     stopwords)

WORD_DIM = 50
OVERLAP_DIM = 5
INPUT_DIM = WORD_DIM + OVERLAP_DIM
CONV_WINDOW = 5
CONV_FILTERS = 100
LSTM_HIDDEN = 50
ENCODING_DIM = 100
MLP_HIDDEN = 100
ENCODER_KINDS = ("cnn", "lstm")

_INIT_SCALE = 0.05
_EMBED_SCALE = 0.25


@dataclass
class EmbeddingTable:
    """Word vectors (PAD row pinned to zero) plus the two overlap vectors."""

    word_vectors: np.ndarray
    overlap_vectors: np.ndarray

    def __post_init__(self):
        if self.word_vectors.ndim != 2 or self.word_vectors.shape[1] != WORD_DIM:
            raise ValueError(f"word vectors must be (V, {WORD_DIM})")
        if self.overlap_vectors.shape != (2, OVERLAP_DIM):
            raise ValueError(f"overlap vectors must be (2, {OVERLAP_DIM})")

    @classmethod
    def random(cls, vocab_size: int, seed: int = 0) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)
        word = rng.uniform(-_EMBED_SCALE, _EMBED_SCALE, size=(vocab_size, WORD_DIM))
        word[PAD_INDEX] = 0.0
        overlap = rng.uniform(-_EMBED_SCALE, _EMBED_SCALE, size=(2, OVERLAP_DIM))
        return cls(word_vectors=word, overlap_vectors=overlap)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.word_vectors.copy(), self.overlap_vectors.copy())


@dataclass
class CnnEncoderParams:
    filters: np.ndarray       # (CONV_FILTERS, CONV_WINDOW * INPUT_DIM)
    filter_bias: np.ndarray   # (CONV_FILTERS,)

    @classmethod
    def init(cls, rng: np.random.Generator) -> "CnnEncoderParams":
        filters = rng.uniform(-_INIT_SCALE, _INIT_SCALE,
                              size=(CONV_FILTERS, CONV_WINDOW * INPUT_DIM))
        return cls(filters=filters, filter_bias=np.zeros(CONV_FILTERS))

    def copy(self):
        return CnnEncoderParams(self.filters.copy(), self.filter_bias.copy())

    def named_arrays(self, prefix: str) -> dict:
        return {f"{prefix}.filters": self.filters, f"{prefix}.filter_bias": self.filter_bias}


@dataclass
class LstmDirectionParams:
    """Gate weights stacked [input, forget, output, candidate] along columns."""

    w: np.ndarray  # (INPUT_DIM, 4 * LSTM_HIDDEN)
    u: np.ndarray  # (LSTM_HIDDEN, 4 * LSTM_HIDDEN)
    b: np.ndarray  # (4 * LSTM_HIDDEN,)

    @classmethod
    def init(cls, rng: np.random.Generator) -> "LstmDirectionParams":
        h4 = 4 * LSTM_HIDDEN
        w = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(INPUT_DIM, h4))
        u = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(LSTM_HIDDEN, h4))
        b = np.zeros(h4)
        b[LSTM_HIDDEN:2 * LSTM_HIDDEN] = 1.0  # forget gate bias
        return cls(w=w, u=u, b=b)

    def copy(self):
        return LstmDirectionParams(self.w.copy(), self.u.copy(), self.b.copy())

    def named_arrays(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.u": self.u, f"{prefix}.b": self.b}


@dataclass
class LstmParams:
    fwd: LstmDirectionParams
    bwd: LstmDirectionParams

    @classmethod
    def init(cls, rng: np.random.Generator) -> "LstmParams":
        return cls(fwd=LstmDirectionParams.init(rng), bwd=LstmDirectionParams.init(rng))

    def copy(self):
        return LstmParams(self.fwd.copy(), self.bwd.copy())

    def named_arrays(self, prefix: str) -> dict:
        out = self.fwd.named_arrays(f"{prefix}.fwd")
        out.update(self.bwd.named_arrays(f"{prefix}.bwd"))
        return out


@dataclass
class MlpParams:
    hidden_w: np.ndarray  # (2 * ENCODING_DIM, MLP_HIDDEN)
    hidden_b: np.ndarray
    out_w: np.ndarray     # (MLP_HIDDEN, 1)
    out_b: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator) -> "MlpParams":
        hidden_w = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(2 * ENCODING_DIM, MLP_HIDDEN))
        out_w = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(MLP_HIDDEN, 1))
        return cls(hidden_w=hidden_w, hidden_b=np.zeros(MLP_HIDDEN),
                   out_w=out_w, out_b=np.zeros(1))

    def copy(self):
        return MlpParams(self.hidden_w.copy(), self.hidden_b.copy(),
                         self.out_w.copy(), self.out_b.copy())

    def named_arrays(self, prefix: str) -> dict:
        return {f"{prefix}.hidden_w": self.hidden_w, f"{prefix}.hidden_b": self.hidden_b,
                f"{prefix}.out_w": self.out_w, f"{prefix}.out_b": self.out_b}


@dataclass
class PairClassifierParams:
    """Two independent encoders plus the pair MLP; encoder kind is fixed."""

    encoder_kind: str
    max_len: int
    encoder_q1: object
    encoder_q2: object
    mlp: MlpParams

    def __post_init__(self):
        if self.encoder_kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")

    def copy(self):
        return PairClassifierParams(self.encoder_kind, self.max_len,
                                    self.encoder_q1.copy(), self.encoder_q2.copy(),
                                    self.mlp.copy())

    def named_arrays(self) -> dict:
        out = self.encoder_q1.named_arrays("enc1")
        out.update(self.encoder_q2.named_arrays("enc2"))
        out.update(self.mlp.named_arrays("mlp"))
        return out


def init_pair_classifier(encoder_kind: str, vocab_size: int, seed: int = 0,
                         max_len: int = 50) -> tuple[PairClassifierParams, EmbeddingTable]:
    """Fresh seeded parameters; the two encoders get independent draws."""
    table = EmbeddingTable.random(vocab_size, seed=seed)
    rng = np.random.default_rng(seed + 1)
    if encoder_kind == "cnn":
        enc1, enc2 = CnnEncoderParams.init(rng), CnnEncoderParams.init(rng)
    elif encoder_kind == "lstm":
        enc1, enc2 = LstmParams.init(rng), LstmParams.init(rng)
    else:
        raise ValueError(f"unknown encoder kind {encoder_kind!r}")
    mlp = MlpParams.init(rng)
    return PairClassifierParams(encoder_kind, max_len, enc1, enc2, mlp), table


def named_parameters(params: PairClassifierParams, table: EmbeddingTable) -> dict:
    """Flat name -> array registry, in the canonical checkpoint order."""
    out = {"embed.word": table.word_vectors, "embed.overlap": table.overlap_vectors}
    out.update(params.named_arrays())
    return out


# ---------------------------------------------------------------------------
# embedding


def _sequence_inputs(tokens_self: Sequence[str], tokens_other: Sequence[str],
                     vocab: Vocabulary, max_len: int, stop: frozenset):
    length = min(len(tokens_self), max_len)
    idx = np.zeros(max_len, dtype=np.int64)
    bits = np.zeros(max_len, dtype=np.int64)
    other = set(tokens_other)
    for t in range(length):
        tok = tokens_self[t]
        idx[t] = vocab.index(tok)
        bits[t] = 1 if tok not in stop and tok in other else 0
    return idx, bits, length


def embed_sequence(q_self: Question, q_other: Question, table: EmbeddingTable,
                   vocab: Vocabulary, max_len: int) -> np.ndarray:
    """(max_len, 55) matrix: word vector + overlap vector per token, PAD rows zero.

    The overlap flag is set when the (non-stopword) token occurs among the
    other question's tokens; out-of-vocabulary tokens map to the UNK row.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    idx, bits, length = _sequence_inputs(q_self.tokens, q_other.tokens,
                                         vocab, max_len, stopwords())
    out = np.zeros((max_len, INPUT_DIM))
    out[:length, :WORD_DIM] = table.word_vectors[idx[:length]]
    out[:length, WORD_DIM:] = table.overlap_vectors[bits[:length]]
    return out


def _embed_batch(sides, table, vocab, max_len, stop):
    """sides: list of (tokens_self, tokens_other). Returns S, lengths, idx, bits."""
    batch = len(sides)
    idx = np.zeros((batch, max_len), dtype=np.int64)
    bits = np.zeros((batch, max_len), dtype=np.int64)
    lengths = np.zeros(batch, dtype=np.int64)
    for b, (ts, to) in enumerate(sides):
        idx[b], bits[b], lengths[b] = _sequence_inputs(ts, to, vocab, max_len, stop)
    if np.any(lengths == 0):
        empty = int(np.flatnonzero(lengths == 0)[0])
        raise ValueError(f"cannot encode an empty token sequence (batch item {empty})")
    mask = np.arange(max_len)[None, :] < lengths[:, None]
    s = np.zeros((batch, max_len, INPUT_DIM))
    # padded positions stay exactly zero whatever the table holds
    s[:, :, :WORD_DIM] = table.word_vectors[idx] * mask[:, :, None]
    s[:, :, WORD_DIM:] = table.overlap_vectors[bits] * mask[:, :, None]
    return s, lengths, idx, bits, mask


def _embed_backward(d_s, idx, bits, mask, word_shape):
    d_word = np.zeros(word_shape)
    d_overlap = np.zeros((2, OVERLAP_DIM))
    np.add.at(d_word, idx[mask], d_s[:, :, :WORD_DIM][mask])
    np.add.at(d_overlap, bits[mask], d_s[:, :, WORD_DIM:][mask])
    d_word[PAD_INDEX] = 0.0
    return d_word, d_overlap


# ---------------------------------------------------------------------------
# CNN encoder


def _cnn_forward(s, lengths, p: CnnEncoderParams):
    batch, t_max, dim = s.shape
    pad = CONV_WINDOW // 2
    padded = np.zeros((batch, t_max + 2 * pad, dim))
    padded[:, pad:pad + t_max] = s
    windows = np.concatenate([padded[:, k:k + t_max, :] for k in range(CONV_WINDOW)], axis=2)
    z = windows @ p.filters.T + p.filter_bias
    r = np.maximum(z, 0.0)
    mask = np.arange(t_max)[None, :] < lengths[:, None]
    masked = np.where(mask[:, :, None], r, -np.inf)
    enc = masked.max(axis=1)
    argmax = masked.argmax(axis=1)
    return enc, (windows, z, argmax, s.shape)


def _cnn_backward(d_enc, cache, p: CnnEncoderParams):
    windows, z, argmax, (batch, t_max, dim) = cache
    d_r = np.zeros((batch, t_max, CONV_FILTERS))
    rows = np.arange(batch)[:, None]
    cols = np.arange(CONV_FILTERS)[None, :]
    d_r[rows, argmax, cols] = d_enc
    d_z = d_r * (z > 0.0)
    flat_dz = d_z.reshape(-1, CONV_FILTERS)
    flat_win = windows.reshape(-1, CONV_WINDOW * dim)
    grads = {"filters": flat_dz.T @ flat_win, "filter_bias": flat_dz.sum(axis=0)}
    d_windows = d_z @ p.filters
    pad = CONV_WINDOW // 2
    d_padded = np.zeros((batch, t_max + 2 * pad, dim))
    for k in range(CONV_WINDOW):
        d_padded[:, k:k + t_max, :] += d_windows[:, :, k * dim:(k + 1) * dim]
    d_s = d_padded[:, pad:pad + t_max, :]
    return d_s, grads


def conv_maxpool_encode(s: np.ndarray, params: CnnEncoderParams, length: int) -> np.ndarray:
    """Width-5 same-length convolution, ReLU, max over the first ``length`` rows."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    enc, _ = _cnn_forward(s[None, :, :], np.array([length]), params)
    return enc[0]


# ---------------------------------------------------------------------------
# BiLSTM encoder


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_dir_forward(s, lengths, p: LstmDirectionParams):
    batch, t_max, _ = s.shape
    h_dim = LSTM_HIDDEN
    h = np.zeros((batch, h_dim))
    c = np.zeros((batch, h_dim))
    mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)
    steps = []
    for t in range(t_max):
        x = s[:, t, :]
        m = mask[:, t][:, None]
        z = x @ p.w + h @ p.u + p.b
        gi = _sigmoid(z[:, :h_dim])
        gf = _sigmoid(z[:, h_dim:2 * h_dim])
        go = _sigmoid(z[:, 2 * h_dim:3 * h_dim])
        gc = np.tanh(z[:, 3 * h_dim:])
        c_new = gf * c + gi * gc
        tc = np.tanh(c_new)
        h_new = go * tc
        steps.append((x, h, c, gi, gf, go, gc, tc, m))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
    return h, steps


def _lstm_dir_backward(d_h_final, steps, p: LstmDirectionParams, d_s):
    h_dim = LSTM_HIDDEN
    d_w = np.zeros_like(p.w)
    d_u = np.zeros_like(p.u)
    d_b = np.zeros_like(p.b)
    d_h = d_h_final.copy()
    d_c = np.zeros_like(d_h_final)
    for t in range(len(steps) - 1, -1, -1):
        x, h_prev, c_prev, gi, gf, go, gc, tc, m = steps[t]
        d_h_new = m * d_h
        d_h_skip = (1.0 - m) * d_h
        d_c_new = m * d_c + d_h_new * go * (1.0 - tc * tc)
        d_go = d_h_new * tc
        d_gi = d_c_new * gc
        d_gc = d_c_new * gi
        d_gf = d_c_new * c_prev
        d_c = d_c_new * gf + (1.0 - m) * d_c
        d_z = np.concatenate([d_gi * gi * (1.0 - gi),
                              d_gf * gf * (1.0 - gf),
                              d_go * go * (1.0 - go),
                              d_gc * (1.0 - gc * gc)], axis=1)
        d_w += x.T @ d_z
        d_u += h_prev.T @ d_z
        d_b += d_z.sum(axis=0)
        d_s[:, t, :] += d_z @ p.w.T
        d_h = d_h_skip + d_z @ p.u.T
    return {"w": d_w, "u": d_u, "b": d_b}


def _reversal_indices(lengths, t_max):
    batch = len(lengths)
    idx = np.tile(np.arange(t_max), (batch, 1))
    for b, length in enumerate(lengths):
        idx[b, :length] = np.arange(length - 1, -1, -1)
    return idx


def _lstm_forward(s, lengths, p: LstmParams):
    h_fwd, steps_fwd = _lstm_dir_forward(s, lengths, p.fwd)
    rev_idx = _reversal_indices(lengths, s.shape[1])
    rows = np.arange(s.shape[0])[:, None]
    s_rev = s[rows, rev_idx]
    h_bwd, steps_bwd = _lstm_dir_forward(s_rev, lengths, p.bwd)
    enc = np.concatenate([h_fwd, h_bwd], axis=1)
    return enc, (steps_fwd, steps_bwd, rev_idx, s.shape)


def _lstm_backward(d_enc, cache, p: LstmParams):
    steps_fwd, steps_bwd, rev_idx, shape = cache
    d_s = np.zeros(shape)
    grads_fwd = _lstm_dir_backward(d_enc[:, :LSTM_HIDDEN], steps_fwd, p.fwd, d_s)
    d_s_rev = np.zeros(shape)
    grads_bwd = _lstm_dir_backward(d_enc[:, LSTM_HIDDEN:], steps_bwd, p.bwd, d_s_rev)
    rows = np.arange(shape[0])[:, None]
    d_s[rows, rev_idx] += d_s_rev
    grads = {f"fwd.{k}": v for k, v in grads_fwd.items()}
    grads.update({f"bwd.{k}": v for k, v in grads_bwd.items()})
    return d_s, grads


def bilstm_encode(s: np.ndarray, params: LstmParams, length: int) -> np.ndarray:
    """Concatenated final hidden states of the two directions over real tokens."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    enc, _ = _lstm_forward(s[None, :, :], np.array([length]), params)
    return enc[0]


# ---------------------------------------------------------------------------
# pair classifier


def _encoder_forward(kind, s, lengths, enc_params):
    if kind == "cnn":
        return _cnn_forward(s, lengths, enc_params)
    return _lstm_forward(s, lengths, enc_params)


def _encoder_backward(kind, d_enc, cache, enc_params):
    if kind == "cnn":
        return _cnn_backward(d_enc, cache, enc_params)
    return _lstm_backward(d_enc, cache, enc_params)


def _mlp_forward(e1, e2, p: MlpParams):
    x = np.concatenate([e1, e2], axis=1)
    h_pre = x @ p.hidden_w + p.hidden_b
    h = np.maximum(h_pre, 0.0)
    z = (h @ p.out_w)[:, 0] + p.out_b[0]
    return z, (x, h_pre, h)


def _mlp_backward(d_z, cache, p: MlpParams):
    x, h_pre, h = cache
    d_zc = d_z[:, None]
    grads = {"out_w": h.T @ d_zc, "out_b": d_zc.sum(axis=0)}
    d_h = d_zc @ p.out_w.T
    d_h_pre = d_h * (h_pre > 0.0)
    grads["hidden_w"] = x.T @ d_h_pre
    grads["hidden_b"] = d_h_pre.sum(axis=0)
    d_x = d_h_pre @ p.hidden_w.T
    return d_x[:, :ENCODING_DIM], d_x[:, ENCODING_DIM:], grads


def _batch_logits(pairs, params: PairClassifierParams, table, vocab, stop):
    sides1 = [(p.q1.tokens, p.q2.tokens) for p in pairs]
    sides2 = [(p.q2.tokens, p.q1.tokens) for p in pairs]
    s1, len1, idx1, bits1, mask1 = _embed_batch(sides1, table, vocab, params.max_len, stop)
    s2, len2, idx2, bits2, mask2 = _embed_batch(sides2, table, vocab, params.max_len, stop)
    e1, cache1 = _encoder_forward(params.encoder_kind, s1, len1, params.encoder_q1)
    e2, cache2 = _encoder_forward(params.encoder_kind, s2, len2, params.encoder_q2)
    z, mlp_cache = _mlp_forward(e1, e2, params.mlp)
    cache = (cache1, cache2, mlp_cache, (idx1, bits1, mask1), (idx2, bits2, mask2))
    return z, cache


def _batch_backward(d_z, cache, params: PairClassifierParams, table):
    cache1, cache2, mlp_cache, emb1, emb2 = cache
    d_e1, d_e2, mlp_grads = _mlp_backward(d_z, mlp_cache, params.mlp)
    d_s1, enc1_grads = _encoder_backward(params.encoder_kind, d_e1, cache1, params.encoder_q1)
    d_s2, enc2_grads = _encoder_backward(params.encoder_kind, d_e2, cache2, params.encoder_q2)
    word_shape = table.word_vectors.shape
    d_word1, d_over1 = _embed_backward(d_s1, *emb1, word_shape)
    d_word2, d_over2 = _embed_backward(d_s2, *emb2, word_shape)
    grads = {"embed.word": d_word1 + d_word2, "embed.overlap": d_over1 + d_over2}
    grads.update({f"enc1.{k}": v for k, v in enc1_grads.items()})
    grads.update({f"enc2.{k}": v for k, v in enc2_grads.items()})
    grads.update({f"mlp.{k}": v for k, v in mlp_grads.items()})
    return grads


def forward_pair(pair: QuestionPair, params: PairClassifierParams,
                 table: EmbeddingTable, vocab: Vocabulary) -> float:
    """Probability that the pair is a duplicate, in (0, 1)."""
    z, _ = _batch_logits([pair], params, table, vocab, stopwords())
    return float(_sigmoid(z)[0])


def predict_proba(pairs: Sequence[QuestionPair], params: PairClassifierParams,
                  table: EmbeddingTable, vocab: Vocabulary,
                  batch_size: int = 256) -> np.ndarray:
    stop = stopwords()
    out = np.empty(len(pairs))
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        z, _ = _batch_logits(chunk, params, table, vocab, stop)
        out[start:start + len(chunk)] = _sigmoid(z)
    return out


def bce_loss(p: float, y: int) -> float:
    """-(y ln p + (1-y) ln(1-p)) with p clamped to [1e-12, 1 - 1e-12]."""
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return float(-(y * np.log(p) + (1 - y) * np.log1p(-p)))


def bce_loss_batch(probs: Sequence[float], labels: Sequence[int]) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValueError("probabilities and labels must align")
    return float(np.mean([bce_loss(p, y) for p, y in zip(probs, labels)]))


def _mean_bce_from_logits(z, y):
    # softplus(z) - y*z == -(y ln p + (1-y) ln(1-p)) for p = sigmoid(z)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def backward(pairs: Sequence[QuestionPair], params: PairClassifierParams,
             table: EmbeddingTable, vocab: Vocabulary) -> tuple[float, dict]:
    """Mean BCE over the batch and its exact gradients for every parameter."""
    labels = _require_labels(pairs)
    z, cache = _batch_logits(pairs, params, table, vocab, stopwords())
    loss = _mean_bce_from_logits(z, labels)
    d_z = (_sigmoid(z) - labels) / len(pairs)
    grads = _batch_backward(d_z, cache, params, table)
    return loss, grads


def _require_labels(pairs) -> np.ndarray:
    labels = []
    for p in pairs:
        if p.label is None:
            raise ValueError(f"pair ({p.q1.id}, {p.q2.id}) has no label")
        labels.append(float(p.label))
    return np.asarray(labels)


# ---------------------------------------------------------------------------
# optimization


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def init(cls, arrays: dict, learning_rate: float) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        state.m = {k: np.zeros_like(a) for k, a in arrays.items()}
        state.v = {k: np.zeros_like(a) for k, a in arrays.items()}
        return state


def adam_step(arrays: dict, grads: dict, state: AdamState) -> None:
    """One Adam update with bias correction, applied in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arrays[name] -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    learning_rate: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("bad schedule")


def train(dataset: Dataset, params: PairClassifierParams, table: EmbeddingTable,
          vocab: Vocabulary, schedule: TrainSchedule
          ) -> tuple[PairClassifierParams, EmbeddingTable, list[float]]:
    """Mini-batch Adam training; returns updated copies and per-epoch mean loss.

    The inputs are left untouched, so fine-tuning is just another ``train``
    call starting from previously trained parameters. Deterministic under
    ``schedule.seed``.
    """
    params = params.copy()
    table = table.copy()
    pairs = list(dataset.pairs)
    _require_labels(pairs)
    arrays = named_parameters(params, table)
    state = AdamState.init(arrays, schedule.learning_rate)
    rng = np.random.default_rng(schedule.seed)
    order = np.arange(len(pairs))
    trace: list[float] = []
    for _epoch in range(schedule.epochs if pairs else 0):
        if schedule.shuffle:
            rng.shuffle(order)
        losses = []
        for start in range(0, len(pairs), schedule.batch_size):
            batch = [pairs[i] for i in order[start:start + schedule.batch_size]]
            loss, grads = backward(batch, params, table, vocab)
            adam_step(arrays, grads, state)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    return params, table, trace


# ---------------------------------------------------------------------------
# embeddings file IO


def load_embeddings(path, vocab: Vocabulary, seed: int = 0) -> EmbeddingTable:
    """Text format "token v1 .. v50" per line; uncovered tokens are random.

    Vectors with the wrong dimensionality are fatal. The PAD row is zeroed
    regardless of file content.
    """
    table = EmbeddingTable.random(len(vocab), seed=seed)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != WORD_DIM:
                raise ValueError(f"{path}: line {lineno} has {len(values)} values, "
                                 f"expected {WORD_DIM}")
            if token in vocab:
                table.word_vectors[vocab.index(token)] = [float(v) for v in values]
    table.word_vectors[PAD_INDEX] = 0.0
    return table


def save_embeddings(path, table: EmbeddingTable, vocab: Vocabulary) -> None:
    """Write every non-PAD vocab token's vector in the text format."""
    by_index = sorted(vocab.token_to_index.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        for token, index in by_index:
            if index == PAD_INDEX:
                continue
            vec = " ".join(repr(v) for v in table.word_vectors[index])
            fh.write(f"{token} {vec}\n")


# ---------------------------------------------------------------------------
# checkpoints


_CKPT_MAGIC = b"TDNN0001"
_CKPT_VERSION = 1


def save_checkpoint(path, params: PairClassifierParams, table: EmbeddingTable,
                    vocab: Vocabulary) -> None:
    """Binary checkpoint: json header (kind, dims, vocab hash) + flat float64 arrays."""
    arrays = named_parameters(params, table)
    header = {
        "version": _CKPT_VERSION,
        "encoder_kind": params.encoder_kind,
        "max_len": params.max_len,
        "vocab_size": len(vocab),
        "vocab_hash": vocab.content_hash(),
        "arrays": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path, vocab: Optional[Vocabulary] = None
                    ) -> tuple[PairClassifierParams, EmbeddingTable, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        if vocab is not None and header["vocab_hash"] != vocab.content_hash():
            raise ValueError(f"{path}: vocabulary hash mismatch")
        params, table = init_pair_classifier(header["encoder_kind"], header["vocab_size"],
                                             seed=0, max_len=header["max_len"])
        arrays = named_parameters(params, table)
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            target = arrays[spec["name"]]
            if target.shape != shape:
                raise ValueError(f"{path}: shape mismatch for {spec['name']}")
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            target[...] = data
    return params, table, header


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference_grad(arrays: dict, name: str, coords, loss_fn,
                           eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` wrt selected coordinates of one tensor."""
    a = arrays[name]
    out = np.empty(len(coords))
    flat = a.reshape(-1)
    for k, coord in enumerate(coords):
        orig = flat[coord]
        flat[coord] = orig + eps
        hi = loss_fn()
        flat[coord] = orig - eps
        lo = loss_fn()
        flat[coord] = orig
        out[k] = (hi - lo) / (2.0 * eps)
    return out


def gradient_check(params: PairClassifierParams, table: EmbeddingTable,
                   vocab: Vocabulary, pairs: Sequence[QuestionPair],
                   eps: float = 1e-5, max_coords: int = 512,
                   seed: int = 0) -> dict[str, float]:
    """Max relative error between analytic and finite-difference gradients.

    Every parameter tensor is checked; tensors larger than ``max_coords``
    entries are checked at a seeded coordinate sample (pass ``max_coords=0``
    to check every entry). The relative-error denominator is floored at 1e-6:
    with eps=1e-5 on an O(1) loss, central differences carry ~1e-11 of float64
    rounding noise, so gradients below that floor cannot be resolved (a wrong
    analytic value at or above the floor still fails loudly).
    """
    arrays = named_parameters(params, table)
    _loss, grads = backward(pairs, params, table, vocab)
    rng = np.random.default_rng(seed)

    def loss_fn():
        z, _ = _batch_logits(pairs, params, table, vocab, stopwords())
        return _mean_bce_from_logits(z, _require_labels(pairs))

    report: dict[str, float] = {}
    for name, a in arrays.items():
        size = a.size
        if max_coords and size > max_coords:
            coords = np.sort(rng.choice(size, size=max_coords, replace=False))
        else:
            coords = np.arange(size)
        numeric = finite_difference_grad(arrays, name, coords, loss_fn, eps)
        analytic = grads[name].reshape(-1)[coords]
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        rel = np.abs(analytic - numeric) / denom
        report[name] = float(rel.max()) if rel.size else 0.0
    return report


def make_gradcheck_fixture(encoder_kind: str, seed: int = 7,
                           batch: int = 4, max_len: int = 8):
    """Small seeded setup (vocab, params, pairs) for gradient checking."""
    rng = np.random.default_rng(seed)
    tokens = [f"w{i}" for i in range(10)]
    mapping = {"<pad>": 0, "<unk>": 1}
    for t in tokens:
        mapping[t] = len(mapping)
    vocab = Vocabulary(token_to_index=mapping)
    params, table = init_pair_classifier(encoder_kind, len(vocab), seed=seed,
                                         max_len=max_len)
    # redraw weights wider than the training init so gradient magnitudes sit
    # comfortably above the finite-difference noise floor
    for a in params.named_arrays().values():
        a[...] = rng.uniform(-0.4, 0.4, size=a.shape)
    pairs = []
    for i in range(batch):
        n1 = int(rng.integers(2, max_len))
        n2 = int(rng.integers(2, max_len))
        t1 = " ".join(rng.choice(tokens, size=n1))
        t2 = " ".join(rng.choice(tokens, size=n2))
        pairs.append(QuestionPair(q1=Question.make(f"a{i}", t1),
                                  q2=Question.make(f"b{i}", t2),
                                  label=int(rng.integers(0, 2))))
    return params, table, vocab, pairs


def run_gradient_check(encoder_kind: str = "cnn", seed: int = 7, eps: float = 1e-5,
                       max_coords: int = 512) -> dict[str, float]:
    params, table, vocab, pairs = make_gradcheck_fixture(encoder_kind, seed=seed)
    return gradient_check(params, table, vocab, pairs, eps=eps,
                          max_coords=max_coords, seed=seed)
