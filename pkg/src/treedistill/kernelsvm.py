"""Dual soft-margin SVM trained with SMO over a precomputed Gram matrix.

The same solver backs both the tree-kernel model (Gram from the pair kernel)
and the lexical-feature baseline (linear kernel over feature vectors). The
working-pair loop follows Platt: scan for a KKT violator, pick the second
index from a seeded random order, and fall back to the endpoint-objective
rule when the second derivative along the constraint line vanishes (which
happens whenever two training pairs have identical kernel rows).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import Dataset, QuestionPair
from .treekernel import GramMatrix

_STEP_EPS = 1e-7
_BOUND_EPS = 1e-8
_HARD_SWEEP_CAP = 2000


@dataclass(frozen=True)
class SvmTrainConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0 or self.tol <= 0 or self.max_passes <= 0:
            raise ValueError("C, tol and max_passes must be positive")


@dataclass
class SvmModel:
    """Dual solution: coefficients, bias, labels, and a kernel description."""

    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    support_indices: np.ndarray
    kernel_ref: dict = field(default_factory=dict)

    @property
    def support_coefficients(self) -> np.ndarray:
        """alpha_i * y_i restricted to the support set."""
        return self.alphas[self.support_indices] * self.labels[self.support_indices]


def _validate_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be +1/-1")
    if np.all(labels == labels[0]):
        raise ValueError("degenerate labels: both classes must be present")
    return labels


def dual_objective(kernel: np.ndarray, labels: np.ndarray, alphas: np.ndarray) -> float:
    ay = alphas * labels
    return float(alphas.sum() - 0.5 * ay @ kernel @ ay)


def train_smo(gram: GramMatrix, labels: Sequence[float], cfg: Optional[SvmTrainConfig] = None,
              kernel_ref: Optional[dict] = None,
              objective_trace: Optional[list] = None) -> SvmModel:
    """Solve the dual soft-margin problem on a precomputed Gram matrix.

    Deterministic under ``cfg.seed``; converges when ``max_passes`` full
    sweeps in a row find no violator that can make progress. When
    ``objective_trace`` is a list, the dual objective is appended after every
    accepted update (it is non-decreasing up to float rounding).
    """
    if cfg is None:
        cfg = SvmTrainConfig()
    y = _validate_labels(np.asarray(labels, dtype=np.float64))
    K = gram.values
    n = gram.n
    if len(y) != n:
        raise ValueError(f"gram is {n}x{n} but {len(y)} labels were given")

    C = cfg.C
    # work at half the requested tolerance so the final bias re-derivation
    # cannot push a borderline margin past cfg.tol
    tol = 0.5 * cfg.tol
    alphas = np.zeros(n, dtype=np.float64)
    bias = 0.0
    rng = np.random.default_rng(cfg.seed)

    def decision(i: int) -> float:
        return float((alphas * y) @ K[:, i] + bias)

    def take_step(i: int, j: int, e_i: float) -> bool:
        nonlocal bias
        if i == j:
            return False
        a_i, a_j = alphas[i], alphas[j]
        y_i, y_j = y[i], y[j]
        e_j = decision(j) - y_j
        s = y_i * y_j
        if s < 0:
            low, high = max(0.0, a_j - a_i), min(C, C + a_j - a_i)
        else:
            low, high = max(0.0, a_i + a_j - C), min(C, a_i + a_j)
        if high - low < _STEP_EPS:
            return False
        k_ii, k_jj, k_ij = K[i, i], K[j, j], K[i, j]
        eta = k_ii + k_jj - 2.0 * k_ij
        if eta > 0.0:
            a_j_new = a_j + y_j * (e_i - e_j) / eta
            a_j_new = min(max(a_j_new, low), high)
        else:
            # flat or concave along the constraint line: compare endpoints
            f_i = y_i * (e_i + bias) - a_i * k_ii - s * a_j * k_ij
            f_j = y_j * (e_j + bias) - s * a_i * k_ij - a_j * k_jj
            l_i = a_i + s * (a_j - low)
            h_i = a_i + s * (a_j - high)
            obj_low = (l_i * f_i + low * f_j + 0.5 * l_i * l_i * k_ii
                       + 0.5 * low * low * k_jj + s * low * l_i * k_ij)
            obj_high = (h_i * f_i + high * f_j + 0.5 * h_i * h_i * k_ii
                        + 0.5 * high * high * k_jj + s * high * h_i * k_ij)
            if obj_low < obj_high - _STEP_EPS:
                a_j_new = low
            elif obj_low > obj_high + _STEP_EPS:
                a_j_new = high
            else:
                return False
        if abs(a_j_new - a_j) < _STEP_EPS:
            return False
        a_i_new = a_i + s * (a_j - a_j_new)
        a_i_new = min(max(a_i_new, 0.0), C)

        b1 = bias - e_i - y_i * (a_i_new - a_i) * k_ii - y_j * (a_j_new - a_j) * k_ij
        b2 = bias - e_j - y_i * (a_i_new - a_i) * k_ij - y_j * (a_j_new - a_j) * k_jj
        if _BOUND_EPS < a_i_new < C - _BOUND_EPS:
            bias = b1
        elif _BOUND_EPS < a_j_new < C - _BOUND_EPS:
            bias = b2
        else:
            bias = 0.5 * (b1 + b2)
        alphas[i] = a_i_new
        alphas[j] = a_j_new
        if objective_trace is not None:
            objective_trace.append(dual_objective(K, y, alphas))
        return True

    quiet_passes = 0
    sweeps = 0
    while quiet_passes < cfg.max_passes and sweeps < _HARD_SWEEP_CAP:
        sweeps += 1
        changed = 0
        for i in range(n):
            e_i = decision(i) - y[i]
            r_i = y[i] * e_i
            if not ((r_i < -tol and alphas[i] < C - _BOUND_EPS)
                    or (r_i > tol and alphas[i] > _BOUND_EPS)):
                continue
            for j in rng.permutation(n):
                if take_step(i, int(j), e_i):
                    changed += 1
                    break
        quiet_passes = quiet_passes + 1 if changed == 0 else 0

    # Re-derive the bias from the final alphas. With free support vectors the
    # margin pins it exactly; otherwise any value inside the KKT interval
    # works and the midpoint is the conventional choice.
    f_nob = (alphas * y) @ K
    free = np.flatnonzero((alphas > _BOUND_EPS) & (alphas < C - _BOUND_EPS))
    if free.size:
        bias = float(np.mean(y[free] - f_nob[free]))
    else:
        lowers, uppers = [], []
        for i in range(n):
            edge = y[i] - f_nob[i]
            at_upper = alphas[i] > C - _BOUND_EPS
            if (y[i] > 0) == (not at_upper):
                lowers.append(edge)
            else:
                uppers.append(edge)
        lo = max(lowers) if lowers else min(uppers)
        hi = min(uppers) if uppers else max(lowers)
        bias = 0.5 * (lo + hi)

    support = np.flatnonzero(alphas > _BOUND_EPS)
    return SvmModel(alphas=alphas, bias=float(bias), labels=y,
                    support_indices=support, kernel_ref=dict(kernel_ref or {}))


def kkt_violation(kernel: np.ndarray, model: SvmModel, C: float) -> float:
    """Maximum violation of the KKT optimality conditions over all examples."""
    y = model.labels
    margins = y * ((model.alphas * y) @ kernel + model.bias)
    worst = 0.0
    for a, m in zip(model.alphas, margins):
        if a < _BOUND_EPS:
            v = max(0.0, 1.0 - m)
        elif a > C - _BOUND_EPS:
            v = max(0.0, m - 1.0)
        else:
            v = abs(m - 1.0)
        worst = max(worst, float(v))
    return worst


def decision_value(model: SvmModel, kernel_row: Sequence[float]) -> float:
    """sum_i alpha_i y_i K(x_i, x) + bias, with the row aligned to the support set."""
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != model.support_indices.shape:
        raise ValueError(f"kernel row has length {row.size}, "
                         f"expected {model.support_indices.size}")
    return float(model.support_coefficients @ row + model.bias)


def predict_label(model: SvmModel, kernel_row: Sequence[float]) -> int:
    """1 when the decision value is >= 0 (ties count as positive), else 0."""
    return 1 if decision_value(model, kernel_row) >= 0.0 else 0


def label_corpus(model: SvmModel, unlabeled: Dataset,
                 kernel_row_fn: Callable[[QuestionPair], Sequence[float]],
                 name: Optional[str] = None) -> tuple[Dataset, int]:
    """Label every pair of an unlabeled dataset with the model's decisions.

    ``kernel_row_fn`` maps a pair to its kernel values against the support
    pairs. Pairs whose kernel evaluation fails are skipped and counted; the
    input dataset is left untouched and order is preserved.
    """
    if unlabeled.split != "unlabeled":
        raise ValueError("label_corpus expects the unlabeled split")
    out: list[QuestionPair] = []
    failures = 0
    for pair in unlabeled.pairs:
        try:
            row = kernel_row_fn(pair)
            score = decision_value(model, row)
        except (ValueError, KeyError) as _exc:
            failures += 1
            continue
        out.append(QuestionPair(q1=pair.q1, q2=pair.q2,
                                label=1 if score >= 0.0 else 0,
                                source="automatic", score=score))
    labeled = Dataset(name=name or unlabeled.name + "-auto",
                      pairs=tuple(out), split="train")
    return labeled, failures


_MODEL_VERSION = 1


def save_svm_model(model: SvmModel, path, support_payload: Sequence[dict]) -> None:
    """Versioned JSON: dual coefficients plus whatever the kernel needs at
    prediction time (one payload dict per support vector, caller-defined)."""
    support = model.support_indices
    if len(support_payload) != len(support):
        raise ValueError("one payload per support vector required")
    doc = {
        "version": _MODEL_VERSION,
        "bias": model.bias,
        "kernel_ref": model.kernel_ref,
        "support": [
            {"alpha": float(model.alphas[i]), "label": int(model.labels[i]),
             "payload": payload}
            for i, payload in zip(support, support_payload)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=1)


def load_svm_model(path) -> tuple[SvmModel, list[dict]]:
    """Load a model JSON; returns the (support-only) model and the payloads."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')!r}")
    support = doc["support"]
    alphas = np.array([sv["alpha"] for sv in support], dtype=np.float64)
    labels = np.array([sv["label"] for sv in support], dtype=np.float64)
    model = SvmModel(alphas=alphas, bias=float(doc["bias"]), labels=labels,
                     support_indices=np.arange(len(support)),
                     kernel_ref=doc.get("kernel_ref", {}))
    return model, [sv["payload"] for sv in support]
