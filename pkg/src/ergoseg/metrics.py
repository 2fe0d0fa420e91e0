"""Frame accuracy, segmental edit score and F1 overlap for label sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadTau, LengthMismatch
from .labels import run_length_encode

DEFAULT_TAU = 0.10


def _check(pred: Sequence[int], truth: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    p, t = np.asarray(pred), np.asarray(truth)
    if p.shape != t.shape:
        raise LengthMismatch(f"prediction has {p.size} frames, ground truth has {t.size}")
    return p, t


def frame_accuracy(pred: Sequence[int], truth: Sequence[int]) -> float:
    p, t = _check(pred, truth)
    if p.size == 0:
        raise LengthMismatch("accuracy of an empty sequence is undefined")
    return 100.0 * float(np.mean(p == t))


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance, one DP row at a time."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def segments(frames: Sequence[int]) -> list[tuple[int, int, int]]:
    """Runs as (class id, start, end-exclusive)."""
    if len(frames) == 0:
        return []
    out, start = [], 0
    for cls, n in run_length_encode(frames):
        out.append((cls, start, start + n))
        start += n
    return out


def edit_score(pred: Sequence[int], truth: Sequence[int]) -> float:
    p, t = _check(pred, truth)
    pr = [s[0] for s in segments(p)]
    tr = [s[0] for s in segments(t)]
    longest = max(len(pr), len(tr))
    if longest == 0:
        return 100.0
    return 100.0 * (1.0 - levenshtein(pr, tr) / longest)


def f1_counts(pred: Sequence[int], truth: Sequence[int], tau: float = DEFAULT_TAU) -> tuple[int, int, int]:
    """(TP, FP, FN) with greedy temporal-order matching of same-class segments."""
    if not 0.0 < tau < 1.0:
        raise BadTau(f"tau must lie in (0, 1), got {tau}")
    p, t = _check(pred, truth)
    true_segs = segments(t)
    matched = [False] * len(true_segs)
    tp = fp = 0
    for cls, ps, pe in segments(p):
        best, best_iou = -1, -1.0
        for j, (tc, ts, te) in enumerate(true_segs):
            if tc != cls or matched[j]:
                continue
            inter = max(0, min(pe, te) - max(ps, ts))
            iou = inter / (max(pe, te) - min(ps, ts))
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= tau:
            matched[best] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, len(true_segs) - tp


def f1_overlap(pred: Sequence[int], truth: Sequence[int], tau: float = DEFAULT_TAU) -> float:
    tp, fp, fn = f1_counts(pred, truth, tau)
    denom = 2 * tp + fp + fn
    return 100.0 if denom == 0 else 200.0 * tp / denom


@dataclass
class EvalReport:
    accuracy: float
    edit_score: float
    f1_overlap: float
    tau: float
    n_frames: int
    n_segments_pred: int
    n_segments_true: int
    precision: dict[int, float] = field(default_factory=dict)  # frame-level, percent
    recall: dict[int, float] = field(default_factory=dict)
    name: str = ""

    def metrics(self) -> tuple[float, float, float]:
        return self.accuracy, self.edit_score, self.f1_overlap


def evaluate(pred: Sequence[int], truth: Sequence[int], tau: float = DEFAULT_TAU, name: str = "") -> EvalReport:
    p, t = _check(pred, truth)
    precision, recall = {}, {}
    for c in sorted(set(p.tolist()) | set(t.tolist())):
        hit = int(np.sum((p == c) & (t == c)))
        n_pred, n_true = int(np.sum(p == c)), int(np.sum(t == c))
        precision[c] = 100.0 * hit / n_pred if n_pred else 0.0
        recall[c] = 100.0 * hit / n_true if n_true else 0.0
    return EvalReport(
        accuracy=frame_accuracy(p, t),
        edit_score=edit_score(p, t),
        f1_overlap=f1_overlap(p, t, tau),
        tau=tau,
        n_frames=int(p.size),
        n_segments_pred=len(segments(p)),
        n_segments_true=len(segments(t)),
        precision=precision,
        recall=recall,
        name=name,
    )


def mean_std(values: Sequence[float]) -> str:
    """"mean±std" with two decimals; population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return f"{arr.mean():.2f}±{arr.std():.2f}"


REPORT_HEADER = "name,accuracy,edit,f1,tau,frames,segments_pred,segments_true"


def report_rows(reports: Sequence[EvalReport]) -> str:
    """One comma-separated row per report, then a "mean±std" aggregate row."""
    lines = [REPORT_HEADER]
    for r in reports:
        lines.append(
            f"{r.name},{r.accuracy:.2f},{r.edit_score:.2f},{r.f1_overlap:.2f},{r.tau:g},"
            f"{r.n_frames},{r.n_segments_pred},{r.n_segments_true}"
        )
    if reports:
        cols = [mean_std([getattr(r, k) for r in reports]) for k in ("accuracy", "edit_score", "f1_overlap")]
        lines.append(f"mean±std,{','.join(cols)},{reports[0].tau:g},,,")
    return "\n".join(lines) + "\n"


def mean_report(reports: Sequence[EvalReport], name: str = "") -> EvalReport:
    """Average the three metrics over videos; counts are summed."""
    if not reports:
        raise LengthMismatch("no reports to average")
    return EvalReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        edit_score=float(np.mean([r.edit_score for r in reports])),
        f1_overlap=float(np.mean([r.f1_overlap for r in reports])),
        tau=reports[0].tau,
        n_frames=sum(r.n_frames for r in reports),
        n_segments_pred=sum(r.n_segments_pred for r in reports),
        n_segments_true=sum(r.n_segments_true for r in reports),
        name=name,
    )
