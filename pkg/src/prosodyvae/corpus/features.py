"""Acoustic feature extraction: log-mel filterbank energies and F0 tracks.

Both extractors share the same framing (window + hop), so a waveform always
yields pitch and mel tracks of equal length. The pitch tracker is a plain
frame-wise autocorrelation with parabolic peak interpolation; corpora built
by the synthetic generator ship ground-truth F0, so this tracker only has to
be adequate for real audio and smoke tests.
"""

from dataclasses import dataclass

import numpy as np

from ..config import FeatureConfig, PitchConfig
from ..errors import InvalidInput


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # [T, n_mels] log-amplitude
    frame_shift_ms: float
    sample_rate_hz: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InvalidInput(f"mel frames must be [T>=1, n_mels], got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise InvalidInput("mel frames contain non-finite values")
        if self.frame_shift_ms <= 0 or self.sample_rate_hz <= 0:
            raise InvalidInput("frame_shift_ms and sample_rate_hz must be positive")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_mels(self):
        return self.frames.shape[1]


@dataclass
class PitchTrack:
    f0_hz: np.ndarray  # [T], 0 where unvoiced
    voiced: np.ndarray  # [T] bool

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float32)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_hz.shape != self.voiced.shape or self.f0_hz.ndim != 1:
            raise InvalidInput("f0_hz and voiced must be 1-D vectors of equal length")
        if not ((self.f0_hz > 0) == self.voiced).all():
            raise InvalidInput("f0_hz[t] > 0 must hold exactly where voiced[t]")

    @property
    def n_frames(self):
        return self.f0_hz.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: FeatureConfig):
    """Center frequency in Hz of each of the n_mels triangular filters."""
    pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax()), cfg.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def fft_frequencies(cfg: FeatureConfig):
    return np.fft.rfftfreq(cfg.frame_length, d=1.0 / cfg.sample_rate_hz)


def mel_filterbank(cfg: FeatureConfig):
    """Triangular mel filterbank [n_mels, n_fft//2 + 1], unnormalized peaks."""
    freqs = fft_frequencies(cfg)
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax()), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, freqs.shape[0]), dtype=np.float64)
    for i in range(cfg.n_mels):
        lo, center, hi = pts[i], pts[i + 1], pts[i + 2]
        rising = (freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - freqs) / max(hi - center, 1e-12)
        fb[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def _frame_signal(waveform, cfg: FeatureConfig):
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInput("waveform must be a non-empty 1-D sample vector")
    if cfg.center:
        pad = cfg.frame_length // 2
        x = np.pad(x, (pad, pad))
    if x.size < cfg.frame_length:
        raise InvalidInput(
            f"waveform of {x.size} samples is shorter than one frame ({cfg.frame_length})"
        )
    n_frames = (x.size - cfg.frame_length) // cfg.hop_length + 1
    idx = np.arange(cfg.frame_length)[None, :] + cfg.hop_length * np.arange(n_frames)[:, None]
    return x[idx]


def extract_mel(waveform, cfg: FeatureConfig) -> MelSpectrogram:
    """Log mel-filterbank energies, one row per frame.

    Entries are log(log_floor + mel energy) of the Hann-windowed power
    spectrum, so an all-zero signal maps to exactly log(log_floor).
    """
    frames = _frame_signal(waveform, cfg)
    window = np.hanning(cfg.frame_length)
    spectrum = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    mel = spectrum @ mel_filterbank(cfg).T
    return MelSpectrogram(
        frames=np.log(cfg.log_floor + mel).astype(np.float32),
        frame_shift_ms=cfg.frame_shift_ms,
        sample_rate_hz=cfg.sample_rate_hz,
    )


def extract_pitch(waveform, cfg: FeatureConfig, pitch: PitchConfig | None = None) -> PitchTrack:
    """Frame-wise autocorrelation pitch track aligned with extract_mel frames."""
    pitch = pitch or PitchConfig()
    if not (0 < pitch.f0_min_hz < pitch.f0_max_hz):
        raise InvalidInput("need 0 < f0_min_hz < f0_max_hz")
    frames = _frame_signal(waveform, cfg)
    sr = cfg.sample_rate_hz
    lag_min = max(2, int(np.floor(sr / pitch.f0_max_hz)))
    lag_max = min(frames.shape[1] - 2, int(np.ceil(sr / pitch.f0_min_hz)))
    if lag_max <= lag_min:
        raise InvalidInput("frame too short for the requested f0 search range")

    f0 = np.zeros(frames.shape[0], dtype=np.float32)
    voiced = np.zeros(frames.shape[0], dtype=bool)
    for t, frame in enumerate(frames):
        rms = np.sqrt(np.mean(frame**2))
        if rms < pitch.energy_floor:
            continue
        frame = frame - frame.mean()
        r = np.correlate(frame, frame, mode="full")[frame.size - 1 :]
        if r[0] <= 0:
            continue
        r = r / r[0]
        segment = r[lag_min : lag_max + 1]
        k = int(np.argmax(segment))
        peak = segment[k]
        if peak < pitch.voicing_threshold:
            continue
        lag = lag_min + k
        # parabolic refinement around the integer-lag peak
        if 0 < lag < r.size - 1:
            a, b, c = r[lag - 1], r[lag], r[lag + 1]
            denom = a - 2 * b + c
            if abs(denom) > 1e-12:
                lag = lag + 0.5 * (a - c) / denom
        candidate = sr / lag
        if pitch.f0_min_hz <= candidate <= pitch.f0_max_hz:
            f0[t] = candidate
            voiced[t] = True
    return PitchTrack(f0_hz=f0, voiced=voiced)
