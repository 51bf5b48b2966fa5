"""Objective metrics: mel-cepstral distortion, F0 frame error, word error
rate, embedding cosine similarity and token-level prosody variance.

All functions are pure and operate on numpy arrays / plain sequences.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from ..errors import InvalidInput

MCD_SCALE = 10.0 / np.log(10.0)
FFE_PITCH_TOLERANCE = 0.2


def mel_cepstra(log_mel, n_coeffs=13):
    """DCT-II (orthonormal) of each log-mel frame, coefficients 1..n_coeffs.

    c0 carries overall energy and is excluded, matching the usual MCD
    convention.
    """
    frames = np.asarray(log_mel, dtype=np.float64)
    if frames.ndim != 2:
        raise InvalidInput(f"expected [T, n_mels] log-mel, got shape {frames.shape}")
    return dct(frames, type=2, norm="ortho", axis=1)[:, 1 : n_coeffs + 1]


def mcd(ref_cepstra, syn_cepstra):
    """Mean over frames of (10 / ln 10) * sqrt(2 * sum_k (c_k - c'_k)^2), in dB."""
    ref = np.asarray(ref_cepstra, dtype=np.float64)
    syn = np.asarray(syn_cepstra, dtype=np.float64)
    if ref.shape != syn.shape:
        raise InvalidInput(f"cepstra shapes differ: {ref.shape} vs {syn.shape}")
    if ref.ndim != 2 or ref.shape[0] < 1:
        raise InvalidInput("cepstra must be [T >= 1, K]")
    dist = np.sqrt(2.0 * ((ref - syn) ** 2).sum(axis=1))
    return float(MCD_SCALE * dist.mean())


def ffe(ref_pitch, syn_pitch):
    """Fraction of frames with a voicing decision error or >20% F0 deviation."""
    if ref_pitch.n_frames != syn_pitch.n_frames:
        raise InvalidInput(
            f"pitch track lengths differ: {ref_pitch.n_frames} vs {syn_pitch.n_frames}"
        )
    ref_v, syn_v = ref_pitch.voiced, syn_pitch.voiced
    voicing_error = ref_v != syn_v
    both = ref_v & syn_v
    pitch_error = np.zeros_like(voicing_error)
    ref_f0 = ref_pitch.f0_hz
    pitch_error[both] = (
        np.abs(ref_f0[both] - syn_pitch.f0_hz[both]) / ref_f0[both] > FFE_PITCH_TOLERANCE
    )
    return float(np.mean(voicing_error | pitch_error))


def wer(ref_transcript, hyp_transcript):
    """(S + D + I) / len(ref) over whitespace tokens, via edit distance."""
    ref = ref_transcript.split()
    hyp = hyp_transcript.split()
    if not ref:
        raise InvalidInput("reference transcript is empty")
    # standard Levenshtein DP over words
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,  # deletion
                cur[j - 1] + 1,  # insertion
                prev[j - 1] + (r != h),  # substitution / match
            )
        prev = cur
    return prev[-1] / len(ref)


def embedding_similarity(a, b):
    """Cosine similarity of two equal-length embedding vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInput(f"embeddings must be equal-length vectors, got {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InvalidInput("embedding with zero norm")
    return float(np.dot(a, b) / (na * nb))


def frame_log_energy(log_mel):
    """Per-frame log of summed mel power."""
    return np.log(np.exp(np.asarray(log_mel, dtype=np.float64)).sum(axis=1))


@dataclass
class ProsodyStats:
    """Sample stddevs across an utterance's tokens; None when < 2 tokens contribute."""

    f0_stddev: float | None
    energy_stddev: float | None
    duration_stddev: float | None

    def as_dict(self):
        return {
            "f0_stddev": self.f0_stddev,
            "energy_stddev": self.energy_stddev,
            "duration_stddev": self.duration_stddev,
        }


def _sample_std(values):
    if len(values) < 2:
        return None
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def prosody_token_stddev(mel_frames, pitch, durations) -> ProsodyStats:
    """Token-level prosody variance: per-token mean F0 (voiced frames only),
    per-token mean log-energy, per-token duration; sample stddev of each."""
    durations = np.asarray(durations, dtype=np.int64)
    mel_frames = np.asarray(mel_frames, dtype=np.float64)
    if int(durations.sum()) != mel_frames.shape[0]:
        raise InvalidInput(
            f"durations sum {int(durations.sum())} != frame count {mel_frames.shape[0]}"
        )
    energy = frame_log_energy(mel_frames)
    f0_means, energy_means = [], []
    start = 0
    for d in durations:
        stop = start + int(d)
        if d > 0:
            voiced = pitch.voiced[start:stop]
            if voiced.any():
                f0_means.append(float(pitch.f0_hz[start:stop][voiced].mean()))
            energy_means.append(float(energy[start:stop].mean()))
        start = stop
    return ProsodyStats(
        f0_stddev=_sample_std(f0_means),
        energy_stddev=_sample_std(energy_means),
        duration_stddev=_sample_std([float(d) for d in durations]),
    )
