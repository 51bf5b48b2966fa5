"""Synthetic corpus with controllable coarse and fine prosodic factors.

Utterances are rendered directly in the feature domain: every token id owns a
fixed spectral template (formant bumps + tilt), and a frame is the mel
projection of that template excited by a harmonic comb at the token's F0,
scaled by its energy. Coarse factors shift the F0 base and the speaking rate,
fine jitter perturbs per-token F0/energy/duration. Everything is a pure
function of the spec, so a seed reproduces the corpus byte for byte.
"""

from dataclasses import dataclass

import numpy as np

from ..config import FeatureConfig, SyntheticConfig
from ..errors import InvalidSpec
from .features import MelSpectrogram, PitchTrack, fft_frequencies, mel_filterbank
from .manifest import CorpusManifest, UtteranceRecord

# Reserved symbol-inventory ids; synthetic token ids start after them.
N_RESERVED_IDS = 3

# Template parameters depend only on the token id, never on the corpus seed.
_TEMPLATE_STREAM = 20250617

# Energy jitter (log units) and duration jitter (frames) per Hz of fine_jitter.
ENERGY_JITTER_PER_HZ = 0.04
DURATION_JITTER_PER_HZ = 0.1

HARMONIC_SIGMA_HZ = 12.0
MIN_F0_HZ = 60.0


@dataclass
class SyntheticCorpusSpec:
    n_utterances: int
    n_coarse_factors: int
    f0_base_per_factor: tuple
    rate_per_factor: tuple
    token_vocab_size: int
    tokens_per_utt_range: tuple  # inclusive (min, max)
    fine_jitter: float
    seed: int

    def validate(self):
        if self.n_utterances < 1:
            raise InvalidSpec("n_utterances must be >= 1")
        if self.n_coarse_factors < 1:
            raise InvalidSpec("n_coarse_factors must be >= 1")
        if len(self.f0_base_per_factor) != self.n_coarse_factors:
            raise InvalidSpec("f0_base_per_factor length must equal n_coarse_factors")
        if len(self.rate_per_factor) != self.n_coarse_factors:
            raise InvalidSpec("rate_per_factor length must equal n_coarse_factors")
        if self.token_vocab_size < 1:
            raise InvalidSpec("token_vocab_size must be >= 1")
        lo, hi = self.tokens_per_utt_range
        if not (1 <= lo <= hi):
            raise InvalidSpec("tokens_per_utt_range must satisfy 1 <= min <= max")
        if self.fine_jitter < 0:
            raise InvalidSpec("fine_jitter must be >= 0")
        if min(self.f0_base_per_factor) <= 0 or min(self.rate_per_factor) <= 0:
            raise InvalidSpec("factor bases must be positive")
        return self

    @classmethod
    def from_config(cls, cfg: SyntheticConfig):
        return cls(
            n_utterances=cfg.n_utterances,
            n_coarse_factors=cfg.n_coarse_factors,
            f0_base_per_factor=tuple(cfg.f0_base_per_factor),
            rate_per_factor=tuple(cfg.rate_per_factor),
            token_vocab_size=cfg.token_vocab_size,
            tokens_per_utt_range=(cfg.tokens_per_utt_min, cfg.tokens_per_utt_max),
            fine_jitter=cfg.fine_jitter,
            seed=cfg.seed,
        )


@dataclass
class TokenTemplate:
    formant_hz: np.ndarray  # [3]
    bandwidth_hz: np.ndarray  # [3]
    amp: np.ndarray  # [3]
    tilt_hz: float
    base_duration: int

    def envelope(self, freqs):
        env = np.full(freqs.shape, 0.02)
        for f, b, a in zip(self.formant_hz, self.bandwidth_hz, self.amp):
            env = env + a * np.exp(-0.5 * ((freqs - f) / b) ** 2)
        return env * np.exp(-freqs / self.tilt_hz)


def token_template(template_index: int) -> TokenTemplate:
    rng = np.random.default_rng([_TEMPLATE_STREAM, int(template_index)])
    formants = np.exp(rng.uniform(np.log(300.0), np.log(7000.0), size=3))
    return TokenTemplate(
        formant_hz=np.sort(formants),
        bandwidth_hz=rng.uniform(100.0, 400.0, size=3),
        amp=rng.uniform(0.4, 1.0, size=3),
        tilt_hz=rng.uniform(2500.0, 6000.0),
        base_duration=int(rng.integers(4, 9)),
    )


def template_bank(vocab_size: int):
    return [token_template(k) for k in range(vocab_size)]


def harmonic_comb(freqs, f0, fmax=None, sigma=HARMONIC_SIGMA_HZ, decay=0.5):
    """Sum of Gaussian bumps at harmonics of f0, amplitudes decaying as m^-decay."""
    fmax = fmax if fmax is not None else float(freqs[-1])
    n_harm = max(1, int(fmax / f0))
    m = np.arange(1, n_harm + 1)
    bumps = np.exp(-0.5 * ((freqs[:, None] - m[None, :] * f0) / sigma) ** 2)
    return bumps @ (1.0 / m**decay)


def render_token(template: TokenTemplate, f0, energy_log, duration, fb, freqs, log_floor):
    """Log-mel frames [duration x n_mels] for one token at a fixed F0/energy."""
    power = template.envelope(freqs) * harmonic_comb(freqs, f0)
    mel_power = fb @ power
    t = np.arange(duration)
    amp_env = 0.7 + 0.3 * np.sin(np.pi * (t + 0.5) / duration)
    scale = np.exp(2.0 * energy_log) * amp_env**2
    return np.log(log_floor + scale[:, None] * mel_power[None, :]).astype(np.float32)


def token_symbol(template_index: int) -> str:
    return f"p{template_index:03d}"


def generate_synthetic_corpus(
    spec: SyntheticCorpusSpec, feat_cfg: FeatureConfig | None = None
) -> CorpusManifest:
    spec.validate()
    feat_cfg = feat_cfg or FeatureConfig()
    rng = np.random.default_rng(spec.seed)
    fb = mel_filterbank(feat_cfg)
    freqs = fft_frequencies(feat_cfg)
    bank = template_bank(spec.token_vocab_size)
    lo, hi = spec.tokens_per_utt_range

    records = []
    width = len(str(spec.n_utterances - 1))
    for u in range(spec.n_utterances):
        factor = int(rng.integers(spec.n_coarse_factors))
        n_tokens = int(rng.integers(lo, hi + 1))
        if n_tokens <= spec.token_vocab_size:
            templates = rng.choice(spec.token_vocab_size, size=n_tokens, replace=False)
        else:
            templates = rng.integers(spec.token_vocab_size, size=n_tokens)

        durations = np.empty(n_tokens, dtype=np.int64)
        f0_targets = np.empty(n_tokens)
        energies = np.empty(n_tokens)
        for i, k in enumerate(templates):
            base = bank[k].base_duration * spec.rate_per_factor[factor]
            dur_jit = rng.normal(0.0, DURATION_JITTER_PER_HZ * spec.fine_jitter)
            durations[i] = max(1, int(round(base + dur_jit)))
            f0_targets[i] = max(
                MIN_F0_HZ, spec.f0_base_per_factor[factor] + rng.normal(0.0, spec.fine_jitter)
            )
            energies[i] = rng.normal(0.0, ENERGY_JITTER_PER_HZ * spec.fine_jitter)

        frames = np.concatenate(
            [
                render_token(bank[k], f0_targets[i], energies[i], durations[i], fb, freqs, feat_cfg.log_floor)
                for i, k in enumerate(templates)
            ]
        )
        f0_frames = np.repeat(f0_targets, durations).astype(np.float32)
        records.append(
            UtteranceRecord(
                utt_id=f"syn{u:0{width}d}",
                token_ids=templates.astype(np.int64) + N_RESERVED_IDS,
                durations_frames=durations,
                mel=MelSpectrogram(
                    frames=frames,
                    frame_shift_ms=feat_cfg.frame_shift_ms,
                    sample_rate_hz=feat_cfg.sample_rate_hz,
                ),
                pitch=PitchTrack(f0_hz=f0_frames, voiced=np.ones(f0_frames.size, dtype=bool)),
                transcript=" ".join(token_symbol(k) for k in templates),
                coarse_label=f"c{factor}",
            )
        )
    return CorpusManifest(
        records=records,
        sample_rate_hz=feat_cfg.sample_rate_hz,
        frame_shift_ms=feat_cfg.frame_shift_ms,
    )


def render_waveform(mel: MelSpectrogram, pitch: PitchTrack, feat_cfg: FeatureConfig):
    """Crude sinusoidal resynthesis for listenability; no metric depends on it."""
    centers = None
    from .features import mel_center_frequencies

    centers = mel_center_frequencies(feat_cfg)
    hop = feat_cfg.hop_length
    sr = feat_cfg.sample_rate_hz
    out = np.zeros(mel.n_frames * hop, dtype=np.float64)
    phase_per_harm = {}
    for t in range(mel.n_frames):
        if not pitch.voiced[t]:
            continue
        f0 = float(pitch.f0_hz[t])
        n_harm = max(1, int((sr / 2) / f0))
        samples = np.arange(hop)
        frame = np.zeros(hop)
        for m in range(1, min(n_harm, 40) + 1):
            f = m * f0
            bin_idx = int(np.argmin(np.abs(centers - f)))
            amp = np.sqrt(max(np.exp(mel.frames[t, bin_idx]) - feat_cfg.log_floor, 0.0))
            phase = phase_per_harm.get(m, 0.0)
            frame += amp * np.sin(2 * np.pi * f * samples / sr + phase)
            phase_per_harm[m] = (phase + 2 * np.pi * f * hop / sr) % (2 * np.pi)
        out[t * hop : (t + 1) * hop] = frame
    peak = np.abs(out).max()
    if peak > 0:
        out = 0.8 * out / peak
    return out.astype(np.float32)
