"""Feature-domain analysis used when no waveform exists.

The pipeline synthesizes log-mel features, not audio, so F0 for metric
purposes is estimated directly from mel frames by matched filtering against
harmonic-comb patterns projected through the same filterbank. The same idea
drives a hermetic token recognizer (for WER on synthetic corpora) and a
small utterance embedding that stands in for an external d-vector model.
"""

import numpy as np

from ..config import EvalConfig, FeatureConfig, PitchConfig
from ..corpus.features import PitchTrack, fft_frequencies, mel_filterbank
from ..corpus.synthetic import harmonic_comb, template_bank
from .metrics import frame_log_energy

# fixed component scales for the stand-in utterance embedding
_EMBED_SCALE = np.array([1 / 100.0, 1 / 30.0, 1 / 3.0, 1.0])


def _whiten(power, width=7):
    """Divide out a boxcar-smoothed envelope so only comb structure remains."""
    kernel = np.ones(width) / width
    smooth = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 1, power)
    return power / (smooth + 1e-12)


class MelPitchEstimator:
    """Per-frame F0 by cosine matching of whitened mel power against harmonic
    combs, restricted to the band where mel filters resolve the harmonics."""

    MATCH_BAND_HZ = 1500.0

    def __init__(self, feat_cfg: FeatureConfig, pitch_cfg: PitchConfig | None = None,
                 eval_cfg: EvalConfig | None = None):
        pitch_cfg = pitch_cfg or PitchConfig()
        eval_cfg = eval_cfg or EvalConfig()
        self.log_floor = feat_cfg.log_floor
        self.threshold = eval_cfg.voicing_score_threshold
        from ..corpus.features import mel_center_frequencies

        self.band = mel_center_frequencies(feat_cfg) <= self.MATCH_BAND_HZ
        fb = mel_filterbank(feat_cfg)
        freqs = fft_frequencies(feat_cfg)
        self.candidates = np.arange(
            pitch_cfg.f0_min_hz, pitch_cfg.f0_max_hz + 1e-9, eval_cfg.f0_grid_step_hz
        )
        patterns = np.stack(
            [(fb @ harmonic_comb(freqs, f0, decay=0.0))[self.band] for f0 in self.candidates]
        )
        patterns = _whiten(patterns)
        self.patterns = patterns / np.linalg.norm(patterns, axis=1, keepdims=True)

    def estimate(self, log_mel) -> PitchTrack:
        power = np.maximum(np.exp(np.asarray(log_mel, dtype=np.float64)) - self.log_floor, 0.0)
        power = power[:, self.band]
        norms = np.linalg.norm(power, axis=1)
        white = _whiten(power)
        wnorms = np.linalg.norm(white, axis=1)
        safe = np.where(wnorms > 0, wnorms, 1.0)
        scores = (white / safe[:, None]) @ self.patterns.T  # [T, C]
        best = np.argmax(scores, axis=1)
        best_score = scores[np.arange(scores.shape[0]), best]
        voiced = (norms > 1e-8) & (best_score >= self.threshold)
        f0 = np.where(voiced, self.candidates[best], 0.0).astype(np.float32)
        return PitchTrack(f0_hz=f0, voiced=voiced)


def utterance_embedding(log_mel, pitch: PitchTrack):
    """4-dim prosody vector [f0 mean, f0 std, energy mean, energy std], scaled.

    Serves as the built-in embedder on synthetic corpora; external embedding
    vectors can be supplied instead via the evaluation interfaces.
    """
    energy = frame_log_energy(log_mel)
    if pitch.voiced.any():
        f0 = pitch.f0_hz[pitch.voiced]
        f0_mean, f0_std = float(f0.mean()), float(f0.std())
    else:
        f0_mean, f0_std = 0.0, 0.0
    vec = np.array([f0_mean, f0_std, float(energy.mean()), float(energy.std())])
    return vec * _EMBED_SCALE


def nearest_base(f0_value, bases):
    """Index of the coarse-factor F0 base closest to the measured value."""
    bases = np.asarray(bases, dtype=np.float64)
    return int(np.argmin(np.abs(bases - float(f0_value))))


class TemplateMatcher:
    """Hermetic token recognizer for synthetic corpora.

    Segments a synthesized utterance by its durations, estimates each
    segment's F0, then scores the segment's mean mel power against every
    token template rendered at that F0. Produces hypothesis transcripts so
    WER is computable without an external recognizer.
    """

    def __init__(self, vocab_size, feat_cfg: FeatureConfig,
                 pitch_cfg: PitchConfig | None = None, eval_cfg: EvalConfig | None = None):
        self.fb = mel_filterbank(feat_cfg)
        self.freqs = fft_frequencies(feat_cfg)
        self.bank = template_bank(vocab_size)
        self.estimator = MelPitchEstimator(feat_cfg, pitch_cfg, eval_cfg)
        self._cache = {}

    def _patterns_at(self, f0):
        key = round(float(f0), 1)
        if key not in self._cache:
            comb = harmonic_comb(self.freqs, max(key, 1.0))
            pats = np.stack([self.fb @ (tpl.envelope(self.freqs) * comb) for tpl in self.bank])
            self._cache[key] = pats / np.linalg.norm(pats, axis=1, keepdims=True)
        return self._cache[key]

    def recognize(self, log_mel, durations):
        """Token template index per duration segment."""
        power = np.maximum(
            np.exp(np.asarray(log_mel, dtype=np.float64)) - self.estimator.log_floor, 0.0
        )
        pitch = self.estimator.estimate(log_mel)
        tokens = []
        start = 0
        for d in np.asarray(durations, dtype=np.int64):
            stop = min(start + int(d), power.shape[0])
            if stop <= start:
                tokens.append(-1)
                continue
            seg = power[start:stop].mean(axis=0)
            norm = np.linalg.norm(seg)
            voiced = pitch.voiced[start:stop]
            f0 = float(pitch.f0_hz[start:stop][voiced].mean()) if voiced.any() else 150.0
            if norm == 0:
                tokens.append(-1)
            else:
                tokens.append(int(np.argmax(self._patterns_at(f0) @ (seg / norm))))
            start = stop
        return tokens

    def hypothesis_text(self, log_mel, durations):
        from ..corpus.synthetic import token_symbol

        return " ".join(
            token_symbol(k) if k >= 0 else "<gap>"
            for k in self.recognize(log_mel, durations)
        )
