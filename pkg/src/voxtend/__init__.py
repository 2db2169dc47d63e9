"""voxtend: extend short utterances with embedding-guided diffusion.

Synthesizes log mel-filterbank feature maps with a DDPM whose sampling
is steered toward a target speaker embedding — either by gradient
guidance through a differentiable embedder or by classifier-free
mixing of conditional and unconditional noise predictions — and scores
the effect on speaker-verification EER / MinDCF.
"""

from .audio import FbankConfig, Waveform, fbank, read_wav, vad_filter
from .diffusion import (
    forward_jump,
    forward_step,
    mean_from_noise,
    mse,
    reverse_step,
    step_variance,
)
from .errors import (
    ConfigError,
    DegenerateEmbeddingError,
    FormatError,
    ShortUtteranceError,
    TrainingDivergence,
    UtteranceFailure,
    VoxtendError,
)
from .estimators import (
    AnalyticGaussianEstimator,
    MeanPoolEmbedder,
    SmallNetEstimator,
    TrainConfig,
    train_estimator,
)
from .guidance import (
    GuidanceConfig,
    cfg_mix,
    embedding_similarity,
    guided_mean,
    sample_builtin,
    sample_external,
    sample_unguided,
)
from .pipeline import Condition, ConditionResult, extend, random_clip, run_protocol
from .rng import SeedStream
from .schedule import NoiseSchedule, build_schedule, load_schedule, save_schedule
from .sveval import ScoreSet, Trial, cosine_score, eer, load_trials, min_dcf
from .toydata import ToyWorld

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianEstimator",
    "Condition",
    "ConditionResult",
    "ConfigError",
    "DegenerateEmbeddingError",
    "FbankConfig",
    "FormatError",
    "GuidanceConfig",
    "MeanPoolEmbedder",
    "NoiseSchedule",
    "ScoreSet",
    "SeedStream",
    "ShortUtteranceError",
    "SmallNetEstimator",
    "ToyWorld",
    "TrainConfig",
    "TrainingDivergence",
    "Trial",
    "UtteranceFailure",
    "VoxtendError",
    "Waveform",
    "build_schedule",
    "cfg_mix",
    "cosine_score",
    "eer",
    "embedding_similarity",
    "extend",
    "fbank",
    "forward_jump",
    "forward_step",
    "guided_mean",
    "load_schedule",
    "load_trials",
    "mean_from_noise",
    "min_dcf",
    "mse",
    "random_clip",
    "read_wav",
    "reverse_step",
    "run_protocol",
    "sample_builtin",
    "sample_external",
    "sample_unguided",
    "save_schedule",
    "step_variance",
    "train_estimator",
    "vad_filter",
]
