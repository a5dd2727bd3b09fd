"""Frame metrics, collar-based event metrics, confusion matrices, and
Cohen's kappa."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import DONT_CARE, LabelTrack, NUM_CLASSES, ORNAMENT_CLASSES, OrnamentClass


@dataclass(frozen=True)
class CollarConfig:
    """Boundary tolerance for event matching; ``onset_only`` ignores offsets."""

    collar_seconds: float = 0.200
    onset_only: bool = False

    def __post_init__(self):
        if self.collar_seconds < 0:
            raise ValueError("collar must be >= 0")


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    @property
    def support(self) -> int:
        return self.tp + self.fp + self.fn

    def to_json(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }


@dataclass
class MetricSet:
    """Per-class counts plus unweighted macro averages over the classes that
    occur in either the reference or the prediction."""

    per_class: dict = field(
        default_factory=lambda: {c: ClassCounts() for c in ORNAMENT_CLASSES}
    )

    def scored_classes(self) -> list[OrnamentClass]:
        return [c for c in ORNAMENT_CLASSES if self.per_class[c].support > 0]

    def macro(self) -> dict:
        classes = self.scored_classes()
        if not classes:
            return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        return {
            "precision": float(np.mean([self.per_class[c].precision for c in classes])),
            "recall": float(np.mean([self.per_class[c].recall for c in classes])),
            "f1": float(np.mean([self.per_class[c].f1 for c in classes])),
        }

    def merge(self, other: "MetricSet") -> "MetricSet":
        for c in ORNAMENT_CLASSES:
            mine, theirs = self.per_class[c], other.per_class[c]
            mine.tp += theirs.tp
            mine.fp += theirs.fp
            mine.fn += theirs.fn
        return self

    def to_json(self) -> dict:
        return {
            "per_class": {c.name: self.per_class[c].to_json()
                          for c in ORNAMENT_CLASSES},
            "macro": self.macro(),
        }


def _frame_arrays(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = pred.symbols() if hasattr(pred, "symbols") else np.asarray(pred, dtype=np.int64)
    t = truth.symbols() if hasattr(truth, "symbols") else np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: pred {p.shape} vs truth {t.shape}")
    keep = t != DONT_CARE
    return p[keep], t[keep]


def frame_metrics(pred, truth) -> MetricSet:
    """Frame-wise per-class counts; frames with don't-care truth are dropped,
    background counts only as a negative."""
    p, t = _frame_arrays(pred, truth)
    ms = MetricSet()
    for c in ORNAMENT_CLASSES:
        cc = ms.per_class[c]
        cc.tp = int(np.sum((t == c) & (p == c)))
        cc.fp = int(np.sum((t != c) & (p == c)))
        cc.fn = int(np.sum((t == c) & (p != c)))
    return ms


def confusion_matrix(pred, truth) -> np.ndarray:
    """6x6 counts over ornament classes only: rows are truth, columns are
    prediction; frames whose truth or prediction is background are excluded."""
    p, t = _frame_arrays(pred, truth)
    keep = (t >= 1) & (p >= 1)
    mat = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(mat, (t[keep] - 1, p[keep] - 1), 1)
    return mat


def _boundary_match(a, b, collar: CollarConfig) -> bool:
    if abs(a.onset - b.onset) > collar.collar_seconds:
        return False
    if collar.onset_only:
        return True
    return abs(a.offset - b.offset) <= collar.collar_seconds


def match_events(
    truths: list, preds: list, collar: CollarConfig
) -> list[tuple[int, int]]:
    """Maximum one-to-one matching between same-class event lists under the
    collar rule.

    Pairs are first assigned greedily in truth-onset order, preferring the
    prediction with the nearest onset; an augmenting-path pass then repairs
    the rare configurations where plain greedy strands a matchable truth, so
    the matched count always equals the optimal bipartite matching.
    """
    eligible: list[list[int]] = []
    for tr in truths:
        cands = [j for j, pr in enumerate(preds) if _boundary_match(tr, pr, collar)]
        cands.sort(key=lambda j: (abs(preds[j].onset - tr.onset), preds[j].onset))
        eligible.append(cands)

    owner = [-1] * len(preds)  # prediction -> truth index

    def try_assign(i: int, banned: set[int]) -> bool:
        for j in eligible[i]:
            if j in banned:
                continue
            banned.add(j)
            if owner[j] == -1 or try_assign(owner[j], banned):
                owner[j] = i
                return True
        return False

    for i in range(len(truths)):
        try_assign(i, set())
    return sorted((ti, j) for j, ti in enumerate(owner) if ti != -1)


def event_metrics(
    pred: LabelTrack, truth: LabelTrack, collar: CollarConfig | None = None
) -> MetricSet:
    """Event-level counts: a prediction is a true positive iff it matches a
    same-class reference event within the collar on both boundaries."""
    collar = collar or CollarConfig()
    ms = MetricSet()
    for c in ORNAMENT_CLASSES:
        truths = [e for e in truth.events if e.label == c]
        preds = [e for e in pred.events if e.label == c]
        matched = match_events(truths, preds, collar)
        cc = ms.per_class[c]
        cc.tp = len(matched)
        cc.fp = len(preds) - len(matched)
        cc.fn = len(truths) - len(matched)
    return ms


def event_metrics_many(
    pairs: list[tuple[LabelTrack, LabelTrack]], collar: CollarConfig | None = None
) -> MetricSet:
    total = MetricSet()
    for pred, truth in pairs:
        total.merge(event_metrics(pred, truth, collar))
    return total


def frame_accuracy(pred, truth) -> float:
    p, t = _frame_arrays(pred, truth)
    if p.size == 0:
        raise ValueError("no valid frames to score")
    return float(np.mean(p == t))


def cohen_kappa(labels_a, labels_b) -> float:
    """Chance-corrected frame agreement between two annotators; frames either
    side marked don't-care are excluded."""
    a = labels_a.symbols() if hasattr(labels_a, "symbols") else np.asarray(labels_a)
    b = labels_b.symbols() if hasattr(labels_b, "symbols") else np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("label sequences must have equal length")
    keep = (a != DONT_CARE) & (b != DONT_CARE)
    a, b = a[keep], b[keep]
    n = a.size
    if n == 0:
        raise ValueError("no frames where both annotators gave a label")
    p_o = float(np.mean(a == b))
    counts_a = Counter(a.tolist())
    counts_b = Counter(b.tolist())
    p_e = sum(
        (counts_a[k] / n) * (counts_b[k] / n) for k in counts_a if k in counts_b
    )
    if p_e >= 1.0 - 1e-12:
        return 1.0 if p_o >= 1.0 - 1e-12 else 0.0
    return (p_o - p_e) / (1.0 - p_e)
