"""Verification-trial scoring: EER and normalized minimum detection cost.

Conventions, fixed so every value is reproducible to the bit:

* a trial is accepted iff score >= threshold;
* thresholds sweep the distinct observed scores plus the two open ends
  (accept everything / reject everything);
* P_miss(th) is the fraction of same-speaker trials with score < th,
  P_fa(th) the fraction of different-speaker trials with score >= th;
* the equal error rate is read off the operating-point polyline,
  linearly interpolated between the two points bracketing
  P_miss = P_fa;
* the detection cost c_fr p_tgt P_miss + c_fa (1-p_tgt) P_fa is
  minimized over the same threshold set and normalized by the best
  trivial system, min(c_fr p_tgt, c_fa (1-p_tgt)).

Both metrics depend on the scores only through ranks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import FormatError

# operating point of the detection cost used throughout
P_TARGET = 1e-2
C_FA = 1.0
C_FR = 1.0


@dataclass(frozen=True)
class Trial:
    enroll_ref: str
    test_ref: str
    same: bool

    def __post_init__(self):
        if not self.enroll_ref or not self.test_ref:
            raise ValueError("trial references must be non-empty")


@dataclass(frozen=True)
class ScoreSet:
    """Parallel score and same-speaker label vectors."""

    scores: np.ndarray
    same: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "same", np.asarray(self.same, dtype=bool))
        if self.scores.shape != self.same.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be parallel 1-D vectors")

    def __len__(self) -> int:
        return len(self.scores)


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-norm embeddings, clipped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for v in (a, b):
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {n} is not 1 within 1e-6")
    return min(1.0, max(-1.0, float(a @ b)))


def _operating_points(s: ScoreSet):
    """(P_miss, P_fa) at each distinct threshold, with open ends prepended/appended."""
    if not s.same.any() or s.same.all():
        raise ValueError("score set needs at least one trial of each label")
    tar = np.sort(s.scores[s.same])
    non = np.sort(s.scores[~s.same])
    thr = np.unique(s.scores)
    p_miss = np.searchsorted(tar, thr, side="left") / len(tar)
    p_fa = (len(non) - np.searchsorted(non, thr, side="left")) / len(non)
    p_miss = np.concatenate(([0.0], p_miss, [1.0]))
    p_fa = np.concatenate(([1.0], p_fa, [0.0]))
    return p_miss, p_fa


def eer(s: ScoreSet) -> float:
    """Equal error rate on the interpolated operating-point polyline."""
    p_miss, p_fa = _operating_points(s)
    idx = int(np.argmax(p_miss >= p_fa))  # first crossing; the last point always qualifies
    if p_miss[idx] == p_fa[idx]:
        return float(p_miss[idx])
    m1, f1 = p_miss[idx - 1], p_fa[idx - 1]
    m2, f2 = p_miss[idx], p_fa[idx]
    lam = (f1 - m1) / ((m2 - m1) - (f2 - f1))
    return float(m1 + lam * (m2 - m1))


def min_dcf(s: ScoreSet, p_target: float = P_TARGET, c_fa: float = C_FA,
            c_fr: float = C_FR) -> float:
    """Minimum normalized detection cost over all thresholds."""
    if not 0.0 < p_target < 1.0:
        raise ValueError("p_target must lie in (0, 1)")
    if c_fa <= 0.0 or c_fr <= 0.0:
        raise ValueError("costs must be positive")
    p_miss, p_fa = _operating_points(s)
    costs = c_fr * p_target * p_miss + c_fa * (1.0 - p_target) * p_fa
    floor = min(c_fr * p_target, c_fa * (1.0 - p_target))
    return float(costs.min() / floor)


def load_trials(source: IO[str]) -> list[Trial]:
    """Parse lines of "<0|1> <enroll> <test>"; 1 means same speaker."""
    trials = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        label, enroll, test = parts
        if label not in ("0", "1"):
            raise FormatError(f"line {lineno}: label must be 0 or 1, got {label!r}")
        trials.append(Trial(enroll_ref=enroll, test_ref=test, same=label == "1"))
    return trials


def metric_lines(values: dict[str, float] | Iterable[tuple[str, float]]) -> str:
    """Render metrics as "metric=<name> value=<decimal>" lines."""
    items = values.items() if isinstance(values, dict) else values
    return "".join(f"metric={k} value={v:.6f}\n" for k, v in items)
