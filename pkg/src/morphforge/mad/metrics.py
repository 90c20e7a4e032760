"""Detection error rates (APCER, BPCER, D-EER) with attack scores oriented high."""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import ValidationError

APCER_POINTS = (0.05, 0.10)


@dataclass(frozen=True)
class DetReport:
    d_eer: float
    bpcer_at_apcer: dict
    roc_points: list = field(default_factory=list)   # (tau, apcer, bpcer), tau ascending

    def to_json(self):
        return {
            "d_eer": self.d_eer,
            "bpcer_at_apcer": {f"{k:.2f}": v for k, v in sorted(self.bpcer_at_apcer.items())},
            "roc": [list(p) for p in self.roc_points],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(float(doc["d_eer"]), {float(k): float(v) for k, v in doc["bpcer_at_apcer"].items()},
                   [tuple(p) for p in doc["roc"]])


def error_counts(attack, bonafide, thresholds):
    """Counts of attacks scored below and bona fide scored at/above each threshold."""
    a = np.sort(np.asarray(attack, dtype=np.float64))
    b = np.sort(np.asarray(bonafide, dtype=np.float64))
    t = np.asarray(thresholds, dtype=np.float64)
    attacks_below = np.searchsorted(a, t, side="left")
    bonafide_at_or_above = b.size - np.searchsorted(b, t, side="left")
    return attacks_below, bonafide_at_or_above


def det_metrics(attack_scores, bonafide_scores, apcer_points=APCER_POINTS) -> DetReport:
    """Sweep thresholds over all observed scores.

    APCER(t) is the share of attacks scored below ``t`` and BPCER(t) the share
    of bona fide samples scored at or above ``t``. The sweep also includes one
    threshold just above the largest score. D-EER is read where the two
    curves cross, interpolating linearly between neighbouring thresholds.
    """
    attack = np.asarray(attack_scores, dtype=np.float64).ravel()
    bona = np.asarray(bonafide_scores, dtype=np.float64).ravel()
    if attack.size == 0 or bona.size == 0:
        raise ValidationError("det_metrics needs non-empty attack and bona fide score lists")
    if not (np.all(np.isfinite(attack)) and np.all(np.isfinite(bona))):
        raise ValidationError("scores must be finite")
    taus = np.unique(np.concatenate([attack, bona]))
    taus = np.append(taus, np.nextafter(taus[-1], np.inf))
    na, nb = attack.size, bona.size
    a_cnt, b_cnt = error_counts(attack, bona, taus)
    apcer = a_cnt / na
    bpcer = b_cnt / nb

    # exact rational arithmetic so results do not depend on summation order
    d_eer = None
    prev = None
    for i in range(len(taus)):
        ai, bi = Fraction(int(a_cnt[i]), na), Fraction(int(b_cnt[i]), nb)
        if ai >= bi:
            if ai == bi or prev is None:
                d_eer = max(ai, bi)
            else:
                a0, b0 = prev
                t = (b0 - a0) / ((ai - a0) - (bi - b0))
                d_eer = a0 + t * (ai - a0)
            break
        prev = (ai, bi)
    bpcer_at = {}
    for alpha in apcer_points:
        # APCER <= alpha compared exactly in counts, alpha read as its decimal
        ok = a_cnt <= math.floor(Fraction(repr(float(alpha))) * na)
        bpcer_at[float(alpha)] = float(bpcer[ok].min())
    roc = [(float(t), float(x), float(y)) for t, x, y in zip(taus, apcer, bpcer)]
    return DetReport(float(d_eer), bpcer_at, roc)
