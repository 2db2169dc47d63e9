"""Discrete noise schedules for Gaussian diffusion.

For steps t = 1..T a schedule fixes the per-step noise fraction
beta_t in (0, 1), the signal fraction alpha_t = 1 - beta_t, and the
running product alpha_bar_t = prod_{i<=t} alpha_i.  alpha_bar drives the
closed-form jump marginal

    x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps.

Two families are built in: the linear beta ramp of Ho et al. (2020),
here spanning [1e-4, 2e-2] inclusive, and the squared-cosine schedule of
Nichol & Dhariwal (2021).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import FormatError

SCHEDULE_KINDS = ("linear", "cosine")
LINEAR_BETA_MIN = 1e-4
LINEAR_BETA_MAX = 2e-2
_COSINE_OFFSET = 0.008
_COSINE_BETA_CAP = 0.999

SCHEDULE_MAGIC = "voxtend-schedule v1"


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion coefficients, indexed 1..T via the *_at accessors.

    Constructing the dataclass directly performs no validation; that is
    deliberate, so tests can inject edge schedules (beta_t = 0,
    alpha_bar ~ 0) that ``build_schedule`` would refuse.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def total_steps(self) -> int:
        return len(self.beta)

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside 1..{self.total_steps}")

    def beta_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.alpha_bar[t - 1])

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        """Raw constructor: derive alpha and alpha_bar from a beta vector."""
        beta = np.asarray(betas, dtype=np.float64)
        alpha = 1.0 - beta
        return cls(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def build_schedule(kind: str, total_steps: int) -> NoiseSchedule:
    """Construct and validate a schedule of the given kind and length."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if kind == "linear":
        betas = np.linspace(LINEAR_BETA_MIN, LINEAR_BETA_MAX, total_steps)
    elif kind == "cosine":
        grid = np.arange(total_steps + 1) / total_steps
        f = np.cos((grid + _COSINE_OFFSET) / (1.0 + _COSINE_OFFSET) * np.pi / 2.0) ** 2
        bar = f / f[0]
        betas = np.minimum(1.0 - bar[1:] / bar[:-1], _COSINE_BETA_CAP)
    else:
        raise ValueError(f"unknown schedule kind {kind!r} (expected one of {SCHEDULE_KINDS})")
    sched = NoiseSchedule.from_betas(betas)
    validate_schedule(sched)
    return sched


def validate_schedule(sched: NoiseSchedule) -> None:
    """Raise ValueError if the schedule violates any structural invariant."""
    beta, alpha, bar = sched.beta, sched.alpha, sched.alpha_bar
    if len(beta) < 1:
        raise ValueError("schedule is empty")
    if not (len(beta) == len(alpha) == len(bar)):
        raise ValueError("beta/alpha/alpha_bar length mismatch")
    if not np.all((beta > 0.0) & (beta < 1.0)):
        raise ValueError("beta values must lie strictly in (0, 1)")
    if not np.array_equal(alpha, 1.0 - beta):
        raise ValueError("alpha must equal 1 - beta exactly")
    if bar[0] != alpha[0]:
        raise ValueError("alpha_bar must start at alpha_1")
    if len(bar) > 1:
        if not np.all(bar[1:] < bar[:-1]):
            raise ValueError("alpha_bar must be strictly decreasing")
        ratio_err = np.abs(bar[1:] / bar[:-1] - alpha[1:]) / alpha[1:]
        if ratio_err.max() > 1e-12:
            raise ValueError("alpha_bar is not the running product of alpha")
    if not (0.0 < bar[-1] <= bar[0] < 1.0):
        raise ValueError("alpha_bar must stay in (0, 1)")


def save_schedule(sched: NoiseSchedule, sink: IO[str]) -> None:
    """Write the self-describing text form: magic line, T, then one beta per step."""
    sink.write(SCHEDULE_MAGIC + "\n")
    sink.write(f"T={sched.total_steps}\n")
    for b in sched.beta:
        sink.write(f"beta={b:.17g}\n")


def load_schedule(source: IO[str]) -> NoiseSchedule:
    """Parse and validate the text form written by :func:`save_schedule`."""
    lines = [ln.rstrip("\n") for ln in source]
    if not lines or lines[0] != SCHEDULE_MAGIC:
        raise FormatError(f"missing magic line {SCHEDULE_MAGIC!r}")
    if len(lines) < 2 or not lines[1].startswith("T="):
        raise FormatError("missing T= line")
    try:
        total = int(lines[1][2:])
    except ValueError:
        raise FormatError(f"bad step count {lines[1]!r}") from None
    body = [ln for ln in lines[2:] if ln]
    if len(body) != total:
        raise FormatError(f"expected {total} beta lines, found {len(body)}")
    betas = []
    for i, ln in enumerate(body):
        if not ln.startswith("beta="):
            raise FormatError(f"line {i + 3}: expected beta=<value>, got {ln!r}")
        try:
            betas.append(float(ln[5:]))
        except ValueError:
            raise FormatError(f"line {i + 3}: bad decimal {ln[5:]!r}") from None
    sched = NoiseSchedule.from_betas(betas)
    validate_schedule(sched)
    return sched
