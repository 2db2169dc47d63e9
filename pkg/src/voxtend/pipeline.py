"""Clip / extend / score protocol over labeled trial sets.

One run clips every utterance to a short duration, optionally extends
it, embeds both sides of every trial, and reports EER and MinDCF per
condition.  Four condition kinds:

* baseline   — the clipped features alone;
* dm         — generated features alone, guided by the clip's embedding;
* dm_plus    — clipped features with generated features appended;
* duplicate  — clipped features with a copy of themselves appended
               (the information-free duration control).

All randomness is derived from one master seed: clip offsets are keyed
by (utterance, clip duration) so every condition of a run scores the
same clips, and generation draws are keyed by (utterance, condition).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from .diffusion import as_feature_map
from .errors import ConfigError, ShortUtteranceError, UtteranceFailure
from .estimators import MeanPoolEmbedder
from .guidance import GuidanceConfig, sample_builtin, sample_external
from .rng import SeedStream
from .schedule import NoiseSchedule
from .sveval import ScoreSet, Trial, cosine_score, eer, min_dcf

CONDITION_KINDS = ("baseline", "dm", "dm_plus", "duplicate")


@dataclass(frozen=True)
class Condition:
    kind: str
    clip_duration: float
    gen_duration: Optional[float] = None
    guidance: Optional[GuidanceConfig] = None

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.clip_duration <= 0.0:
            raise ValueError("clip_duration must be positive")
        if self.kind in ("dm", "dm_plus"):
            if self.gen_duration is None or self.gen_duration <= 0.0:
                raise ValueError(f"{self.kind} requires a positive gen_duration")
            if self.guidance is None:
                raise ValueError(f"{self.kind} requires a guidance config")

    @property
    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class ConditionResult:
    condition: Condition
    eer: float
    min_dcf: float
    n_trials: int


def random_clip(features: np.ndarray, duration: float, frame_shift: float,
                seed: SeedStream) -> np.ndarray:
    """Contiguous random slice of round(duration/frame_shift) frames.

    When the clip covers the whole map the offset is forced to 0 with no
    draw consumed.
    """
    features = as_feature_map(features)
    n = int(round(duration / frame_shift))
    if n < 1:
        raise ValueError(f"clip of {duration}s spans no frames at shift {frame_shift}s")
    total = features.shape[0]
    if n > total:
        raise ShortUtteranceError(f"utterance has {total} frames, clip needs {n}")
    offset = 0 if n == total else int(seed.integers(0, total - n + 1))
    return features[offset:offset + n]


def extend(features: np.ndarray, cond: Condition, embedder: MeanPoolEmbedder,
           estimator, sched: NoiseSchedule, seed: SeedStream,
           frame_shift: float = 1.0) -> np.ndarray:
    """Realize one condition on already-clipped features.

    For dm/dm_plus the guidance embedding is taken from the clipped
    features themselves; the estimator handle is the unconditional
    callable (x, t) for external mode and the conditional callable
    (x, t, emb|None) for built-in mode.
    """
    features = as_feature_map(features)
    if cond.kind == "baseline":
        return features
    if cond.kind == "duplicate":
        return np.vstack([features, features])

    gen_frames = int(round(cond.gen_duration / frame_shift))
    cfg = cond.guidance
    if cfg.target_frames != gen_frames:
        cfg = GuidanceConfig(mode=cfg.mode, scale=cfg.scale, target_frames=gen_frames)
    ref = embedder.embed(features)
    if cfg.mode == "external":
        generated = sample_external(ref, cfg, estimator, embedder, sched, seed)
    else:
        generated = sample_builtin(ref, cfg, estimator, embedder.bins, sched, seed)
    if cond.kind == "dm":
        return generated
    return np.vstack([features, generated])


def run_protocol(utterances: Mapping[str, np.ndarray], trials: Sequence[Trial],
                 conditions: Sequence[Condition], embedder: MeanPoolEmbedder,
                 estimator, sched: NoiseSchedule, master_seed: SeedStream,
                 frame_shift: float = 1.0, extend_test_only: bool = False,
                 embedding_sink: Optional[IO[str]] = None) -> list[ConditionResult]:
    """Score every condition on the same trial set.

    Per condition and utterance: clip, extend, embed, then cosine-score
    each trial and compute EER / MinDCF.  With extend_test_only, enroll
    sides are clipped but never extended.  Any per-utterance failure
    aborts the condition naming the utterance.  embedding_sink, when
    given, receives CSV rows "utterance,condition,e0,...,eD".
    """
    for trial in trials:
        if trial.enroll_ref not in utterances or trial.test_ref not in utterances:
            missing = trial.enroll_ref if trial.enroll_ref not in utterances else trial.test_ref
            raise ConfigError(f"trial references unknown utterance {missing!r}")

    results = []
    for cond in conditions:
        cache: dict[tuple[str, bool], np.ndarray] = {}

        def side_embedding(utt_id: str, extended: bool, cond=cond) -> np.ndarray:
            key = (utt_id, extended)
            if key not in cache:
                try:
                    base = master_seed.derive("utt", utt_id)
                    clip_seed = base.derive("clip", repr(cond.clip_duration))
                    clipped = random_clip(utterances[utt_id], cond.clip_duration,
                                          frame_shift, clip_seed)
                    if extended:
                        gen_seed = base.derive("gen", cond.label, repr(cond.gen_duration))
                        final = extend(clipped, cond, embedder, estimator, sched,
                                       gen_seed, frame_shift)
                    else:
                        final = clipped
                    cache[key] = embedder.embed(final)
                except Exception as exc:
                    raise UtteranceFailure(utt_id, cond.label, exc) from exc
            return cache[key]

        scores = np.empty(len(trials))
        same = np.empty(len(trials), dtype=bool)
        for i, trial in enumerate(trials):
            enroll = side_embedding(trial.enroll_ref, extended=not extend_test_only)
            test = side_embedding(trial.test_ref, extended=True)
            scores[i] = cosine_score(enroll, test)
            same[i] = trial.same
        score_set = ScoreSet(scores=scores, same=same)
        results.append(ConditionResult(
            condition=cond, eer=eer(score_set), min_dcf=min_dcf(score_set),
            n_trials=len(trials),
        ))
        if embedding_sink is not None:
            for (utt_id, _), emb in sorted(cache.items()):
                values = ",".join(f"{v:.9f}" for v in emb)
                embedding_sink.write(f"{utt_id},{cond.label},{values}\n")
    return results


def results_csv(results: Sequence[ConditionResult]) -> str:
    """Render results as "condition,clip_s,gen_s,eer,mindcf,n_trials" CSV."""
    lines = ["condition,clip_s,gen_s,eer,mindcf,n_trials"]
    for r in results:
        gen = "" if r.condition.gen_duration is None else f"{r.condition.gen_duration:g}"
        lines.append(
            f"{r.condition.label},{r.condition.clip_duration:g},{gen},"
            f"{r.eer:.6f},{r.min_dcf:.6f},{r.n_trials}"
        )
    return "\n".join(lines) + "\n"
