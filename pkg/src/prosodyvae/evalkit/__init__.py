from .metrics import (
    ProsodyStats,
    embedding_similarity,
    ffe,
    frame_log_energy,
    mcd,
    mel_cepstra,
    prosody_token_stddev,
    wer,
)
from .melpitch import MelPitchEstimator, TemplateMatcher, nearest_base, utterance_embedding
from .probe import leakage_probe
from .protocols import (
    EvalReport,
    SyntheticEvalContext,
    evaluate_posterior,
    evaluate_prior,
    pooled_posterior_means,
    sample_sentences,
)

__all__ = [
    "ProsodyStats",
    "embedding_similarity",
    "ffe",
    "frame_log_energy",
    "mcd",
    "mel_cepstra",
    "prosody_token_stddev",
    "wer",
    "MelPitchEstimator",
    "TemplateMatcher",
    "nearest_base",
    "utterance_embedding",
    "leakage_probe",
    "EvalReport",
    "SyntheticEvalContext",
    "evaluate_posterior",
    "evaluate_prior",
    "pooled_posterior_means",
    "sample_sentences",
]
