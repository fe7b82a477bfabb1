"""Evaluation: per-class errors, confusion matrices, PR curves, projections.

Error is the number of incorrectly identified images divided by the number
of images, reported per class. Summary lines carry both the count-weighted
overall error and the unweighted macro error, since either convention can
be meant by "average per-class error".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EvaluationError
from .rng import derive_rng


@dataclass
class EvalReport:
    classes: list[str]
    confusion: np.ndarray  # (K, K) int, rows = true, columns = predicted
    per_class_error: dict[str, float]
    overall_error: float
    macro_error: float
    counts: dict[str, int]
    pr_curves: dict[str, list[tuple[float, float, float]]] = field(default_factory=dict)

    def column_mass(self, cls: str) -> int:
        """Total predictions of ``cls`` over the whole test set."""
        return int(self.confusion[:, self.classes.index(cls)].sum())

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "confusion": self.confusion.tolist(),
            "per_class_error": self.per_class_error,
            "overall_error": self.overall_error,
            "macro_error": self.macro_error,
            "counts": self.counts,
            "pr_curves": {k: [list(p) for p in v] for k, v in self.pr_curves.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            classes=list(doc["classes"]),
            confusion=np.asarray(doc["confusion"], dtype=np.int64),
            per_class_error={k: float(v) for k, v in doc["per_class_error"].items()},
            overall_error=float(doc["overall_error"]),
            macro_error=float(doc["macro_error"]),
            counts={k: int(v) for k, v in doc["counts"].items()},
            pr_curves={
                k: [tuple(p) for p in v] for k, v in doc.get("pr_curves", {}).items()
            },
        )

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate(
    pred_labels: Sequence[str],
    truths: Sequence[str],
    classes: Sequence[str] | None = None,
    scores: np.ndarray | None = None,
) -> EvalReport:
    """Exact confusion counts and per-class errors.

    Classes absent from ``truths`` get no per-class error entry (undefined,
    not zero). When ``scores`` is given (one column per class in ``classes``
    order), one-vs-rest PR curves are attached for every class with at
    least one positive.
    """
    if len(pred_labels) != len(truths):
        raise EvaluationError(
            f"got {len(pred_labels)} predictions for {len(truths)} truths"
        )
    if classes is None:
        classes = sorted(set(truths) | set(pred_labels))
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    for label in list(pred_labels) + list(truths):
        if label not in index:
            raise EvaluationError(f"label {label!r} not in class list")

    k = len(classes)
    confusion = np.zeros((k, k), np.int64)
    for t, p in zip(truths, pred_labels):
        confusion[index[t], index[p]] += 1

    counts = {c: int(confusion[index[c]].sum()) for c in classes}
    per_class_error = {
        c: float(1.0 - confusion[index[c], index[c]] / counts[c])
        for c in classes
        if counts[c] > 0
    }
    total = int(confusion.sum())
    correct = int(np.trace(confusion))
    overall = 1.0 - correct / total if total else 0.0
    macro = float(np.mean(list(per_class_error.values()))) if per_class_error else 0.0

    curves: dict[str, list[tuple[float, float, float]]] = {}
    if scores is not None:
        scores = np.asarray(scores, float)
        if scores.shape != (len(truths), k):
            raise EvaluationError(
                f"scores shape {scores.shape} does not match ({len(truths)}, {k})"
            )
        truth_idx = np.array([index[t] for t in truths])
        for c in classes:
            positives = truth_idx == index[c]
            if positives.any():
                curves[c] = pr_curve(scores[:, index[c]], positives)

    return EvalReport(
        classes=classes,
        confusion=confusion,
        per_class_error=per_class_error,
        overall_error=overall,
        macro_error=macro,
        counts=counts,
        pr_curves=curves,
    )


def pr_curve(scores: np.ndarray, positives: np.ndarray) -> list[tuple[float, float, float]]:
    """One (precision, recall, threshold) point per distinct score, descending.

    At threshold t everything scoring >= t is predicted positive.
    """
    scores = np.asarray(scores, float)
    positives = np.asarray(positives, bool)
    if scores.ndim != 1 or scores.shape != positives.shape:
        raise EvaluationError("scores and positives must be equal-length vectors")
    if scores.min() < 0 or scores.max() > 1:
        raise EvaluationError("scores must lie in [0, 1]")
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise EvaluationError("no positive examples for PR curve")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    tp = np.cumsum(sorted_pos)
    predicted = np.arange(1, len(scores) + 1)
    # emit a point at the last occurrence of each distinct threshold
    last = np.ones(len(scores), bool)
    last[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    out = []
    for i in np.nonzero(last)[0]:
        out.append(
            (float(tp[i] / predicted[i]), float(tp[i] / n_pos), float(sorted_scores[i]))
        )
    return out


@dataclass
class BiasSummary:
    class_label: str
    column_mass_a: int
    column_mass_b: int
    column_mass_delta: int
    error_delta: dict[str, float]  # per-class error, b minus a

    def to_dict(self) -> dict:
        return {
            "class": self.class_label,
            "column_mass_a": self.column_mass_a,
            "column_mass_b": self.column_mass_b,
            "column_mass_delta": self.column_mass_delta,
            "error_delta": self.error_delta,
        }


def bias_report(report_a: EvalReport, report_b: EvalReport, class_label: str) -> BiasSummary:
    """Quantify a prediction-prior shift toward one class between two runs."""
    if report_a.counts != report_b.counts:
        raise EvaluationError("reports do not describe the same test set")
    if class_label not in report_a.classes or class_label not in report_b.classes:
        raise EvaluationError(f"class {class_label!r} missing from a report")
    mass_a = report_a.column_mass(class_label)
    mass_b = report_b.column_mass(class_label)
    deltas = {
        c: report_b.per_class_error[c] - report_a.per_class_error[c]
        for c in report_a.per_class_error
        if c in report_b.per_class_error
    }
    return BiasSummary(
        class_label=class_label,
        column_mass_a=mass_a,
        column_mass_b=mass_b,
        column_mass_delta=mass_b - mass_a,
        error_delta=deltas,
    )


# ---------------------------------------------------------------------------
# Embedding projection: PCA then exact tSNE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionConfig:
    pca_dims: int = 200
    perplexity: float = 30.0
    iterations: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pca_dims < 2:
            raise EvaluationError("pca_dims must be >= 2")
        if self.perplexity <= 0 or self.iterations < 1:
            raise EvaluationError("perplexity and iterations must be positive")


def pca(x: np.ndarray, dims: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and project onto the top eigenvectors of the covariance.

    Returns (projected, components (d, k), explained variances descending).
    """
    x = np.asarray(x, np.float64)
    n, d = x.shape
    k = min(dims, d, n - 1)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    components = eigvecs[:, order]
    # deterministic sign: largest-magnitude coefficient positive
    for j in range(components.shape[1]):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    return centered @ components, components, np.maximum(eigvals[order], 0.0)


def _perplexity_probabilities(d2: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-row Gaussian affinities calibrated to the target perplexity."""
    n = d2.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        beta_lo, beta_hi = 0.0, np.inf
        beta = 1.0
        row = d2[i].copy()
        row[i] = np.inf
        for _ in range(60):
            w = np.exp(-row * beta)
            s = w.sum()
            if s <= 0:
                h = 0.0
            else:
                q = w / s
                nz = q > 0
                h = -np.sum(q[nz] * np.log(q[nz]))
            if abs(h - target) < 1e-7:
                break
            if h > target:
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == np.inf else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
        w = np.exp(-row * beta)
        s = w.sum()
        p[i] = w / s if s > 0 else 0.0
        p[i, i] = 0.0
    return p


def _kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    num = 1.0 / (1.0 + _pairwise_sq(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _pairwise_sq(y: np.ndarray) -> np.ndarray:
    s = (y * y).sum(axis=1)
    d2 = s[:, None] + s[None, :] - 2.0 * (y @ y.T)
    return np.maximum(d2, 0.0)


def tsne(
    x: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
) -> tuple[np.ndarray, float, float]:
    """Exact O(n^2) tSNE to 2D.

    Returns (coords, initial KL, final KL), both KLs measured against the
    unexaggerated joint affinities.
    """
    x = np.asarray(x, np.float64)
    n = x.shape[0]
    d2 = _pairwise_sq(x)
    cond = _perplexity_probabilities(d2, perplexity)
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    rng = derive_rng(seed, "tsne-init")
    y = rng.normal(0.0, 1e-4, (n, 2))
    kl_initial = _kl_divergence(p, y)

    switch = min(250, max(1, iterations // 4))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(iterations):
        exaggeration = early_exaggeration if it < switch else 1.0
        momentum = 0.5 if it < switch else 0.8
        num = 1.0 / (1.0 + _pairwise_sq(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        pq = (exaggeration * p - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        sign_match = np.sign(grad) == np.sign(velocity)
        gains = np.where(sign_match, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)

    kl_final = _kl_divergence(p, y)
    return y, kl_initial, kl_final


def project_embeddings(
    embeddings: np.ndarray,
    cfg: ProjectionConfig | None = None,
) -> np.ndarray:
    """PCA (eigendecomposition) to at most cfg.pca_dims, then exact tSNE to 2D."""
    cfg = cfg or ProjectionConfig()
    x = np.asarray(embeddings, np.float64)
    if x.ndim != 2 or x.shape[0] < 5 or x.shape[1] < 2:
        raise EvaluationError(f"need an (n >= 5, d >= 2) embedding matrix, got {x.shape}")
    if np.allclose(x, x[0]):
        raise EvaluationError("all embeddings identical; nothing to project")
    if cfg.perplexity >= x.shape[0] / 3:
        raise EvaluationError(
            f"perplexity {cfg.perplexity} too large for n={x.shape[0]} (need < n/3)"
        )
    projected, _, _ = pca(x, cfg.pca_dims)
    coords, _, _ = tsne(projected, perplexity=cfg.perplexity,
                        iterations=cfg.iterations, seed=cfg.seed)
    if not np.isfinite(coords).all():
        raise EvaluationError("projection diverged to non-finite coordinates")
    return coords


# ---------------------------------------------------------------------------
# CSV outputs (plot-ready)
# ---------------------------------------------------------------------------


def pr_curve_csv(path: str | Path, curve: list[tuple[float, float, float]]) -> None:
    lines = ["threshold,precision,recall"]
    for precision, recall, threshold in curve:
        lines.append(f"{threshold:.9g},{precision:.9g},{recall:.9g}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def projection_csv(
    path: str | Path,
    coords: np.ndarray,
    groups: Sequence[str],
    correct: Sequence[bool] | None = None,
) -> None:
    if len(coords) != len(groups):
        raise EvaluationError("coords and groups length mismatch")
    flags = correct if correct is not None else [True] * len(groups)
    lines = ["x,y,group,correct"]
    for (x, y), group, ok in zip(coords, groups, flags):
        lines.append(f"{x:.9g},{y:.9g},{group},{int(bool(ok))}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
