"""Closed- and open-set evaluation: CCR, FPR, OSCR, FAR, TNR, and exports.

Samples carry the maximum softmax probability, the predicted identity, and
the true identity (or the OPEN marker for identities outside the registry).
All metrics are pure functions of the sample list; the threshold sweep
enumerates every distinct score, so the OSCR area is exact rather than a
discretized approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError

#: true_id marker for samples whose identity is not enrolled.
OPEN = -1


@dataclass(frozen=True)
class ScoredSample:
    """One evaluated segment: winning probability, prediction, ground truth."""

    max_prob: float
    predicted_id: int
    true_id: int

    def __post_init__(self):
        if not 0.0 < self.max_prob <= 1.0:
            raise ParameterError("max_prob must lie in (0, 1]")


@dataclass
class OpenSetCurve:
    """Aligned threshold sweep plus the area under CCR-vs-FPR."""

    thresholds: np.ndarray
    ccr: np.ndarray
    fpr: np.ndarray
    far: np.ndarray
    tnr: np.ndarray
    oscr_area: float


def _split(samples):
    known = [s for s in samples if s.true_id != OPEN]
    opens = [s for s in samples if s.true_id == OPEN]
    return known, opens


def ccr(samples, delta: float) -> float:
    """Fraction of known samples classified correctly with confidence >= delta."""
    known, _ = _split(samples)
    if not known:
        raise InputError("CCR needs at least one known-identity sample")
    hits = sum(
        1 for s in known if s.predicted_id == s.true_id and s.max_prob >= delta
    )
    return hits / len(known)


def fpr(samples, delta: float) -> float:
    """Fraction of open samples whose confidence clears delta."""
    _, opens = _split(samples)
    if not opens:
        raise InputError("FPR needs at least one open sample")
    return sum(1 for s in opens if s.max_prob >= delta) / len(opens)


def tnr(samples, delta: float) -> float:
    """Fraction of open samples rejected at delta; exactly 1 - fpr."""
    return 1.0 - fpr(samples, delta)


def far(samples, delta: float, conventional: bool = False) -> float:
    """Accepted open samples over the whole test population.

    The default denominator is |known| + |open| — the unusual convention is
    kept deliberately; pass conventional=True for the |open| denominator.
    """
    known, opens = _split(samples)
    if not known or not opens:
        raise InputError("FAR needs both known and open samples")
    accepted = sum(1 for s in opens if s.max_prob >= delta)
    denom = len(opens) if conventional else len(known) + len(opens)
    return accepted / denom


@dataclass(frozen=True)
class ClosedSetMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def closed_set_accuracy(samples) -> ClosedSetMetrics:
    """Threshold-free accuracy over known samples plus macro precision/recall/F1.

    Macro averages run over the classes present in the ground truth; a class
    never predicted contributes precision 0 (the usual zero-division rule).
    """
    known, _ = _split(samples)
    if not known:
        raise InputError("closed-set metrics need known samples")
    truth = np.array([s.true_id for s in known])
    pred = np.array([s.predicted_id for s in known])
    accuracy = float((truth == pred).mean())
    precisions, recalls, f1s = [], [], []
    for cls in np.unique(truth):
        tp = int(((truth == cls) & (pred == cls)).sum())
        fp = int(((truth != cls) & (pred == cls)).sum())
        fn = int(((truth == cls) & (pred != cls)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return ClosedSetMetrics(
        accuracy=accuracy,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
    )


def oscr(samples) -> OpenSetCurve:
    """Sweep every distinct score (plus 0 and 1) and integrate CCR over FPR.

    The area is the trapezoidal integral of the swept (FPR, CCR) points,
    extended to FPR=0 with CCR=0 (the all-rejected limit); the delta=0 point
    pins FPR=1, so the integral covers [0, 1] exactly.
    """
    known, opens = _split(samples)
    if not known or not opens:
        raise InputError("OSCR needs both known and open samples")
    scores = [s.max_prob for s in samples]
    thresholds = np.unique(np.concatenate([scores, [0.0, 1.0]]))
    ccr_v = np.array([ccr(samples, d) for d in thresholds])
    fpr_v = np.array([fpr(samples, d) for d in thresholds])
    far_v = np.array([far(samples, d) for d in thresholds])
    tnr_v = 1.0 - fpr_v

    points = sorted(zip(fpr_v, ccr_v)) + [(0.0, 0.0)]
    points.sort()
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return OpenSetCurve(
        thresholds=thresholds, ccr=ccr_v, fpr=fpr_v, far=far_v, tnr=tnr_v,
        oscr_area=float(area),
    )


# ----------------------------------------------------------------------
# exports

def write_curve_csv(curve: OpenSetCurve, path) -> None:
    """Curve rows as delta,ccr,fpr,far,tnr plus a final oscr= summary line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_curve(curve))


def format_curve(curve: OpenSetCurve) -> str:
    lines = ["delta,ccr,fpr,far,tnr"]
    for i in range(curve.thresholds.size):
        row = (curve.thresholds[i], curve.ccr[i], curve.fpr[i],
               curve.far[i], curve.tnr[i])
        lines.append(",".join(repr(float(v)) for v in row))
    lines.append(f"oscr={float(curve.oscr_area)!r}")
    return "\n".join(lines) + "\n"


def write_embeddings_csv(path, sample_ids, true_ids, embeddings) -> None:
    """Raw embedding matrix export: sample_id,true_id,dim_0..dim_{D-1}."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or len(sample_ids) != emb.shape[0] or len(true_ids) != emb.shape[0]:
        raise InputError("embedding export needs aligned ids and a 2-D matrix")
    header = "sample_id,true_id," + ",".join(f"dim_{j}" for j in range(emb.shape[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for sid, tid, row in zip(sample_ids, true_ids, emb):
            fh.write(f"{int(sid)},{int(tid)},"
                     + ",".join(repr(float(v)) for v in row) + "\n")
