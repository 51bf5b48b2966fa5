"""Model bundles for every training stage behind one inference interface.

Stages:
  stage1         - FVAE acoustic model alone (ground-truth durations).
  stage2         - stage-1 acoustic model (frozen) + reference encoder + AR prior.
  joint_baseline - hierarchical baseline: posterior conditioned on g, acoustic
                   model, reference encoder and AR prior all trained jointly.
  nat_plain      - duration-informed baseline without reference or latents.
  nat_global     - nat_plain + decoder/duration predictor conditioned on g.

Checkpoints of every stage load into the same TTSSystem and drive the same
copy-synthesis / prior-synthesis code paths.
"""

import torch
from torch import nn

from ..config import ModelConfig
from .acoustic import AcousticModel, FrameDecoder, TextEncoder, reparameterize, upsample_batch
from .prior import GaussianARPrior, ReferenceEncoder, decode_duration

Z_STAGES = ("stage1", "stage2", "joint_baseline")
REF_STAGES = ("stage2", "joint_baseline", "nat_global")
PRIOR_STAGES = ("stage2", "joint_baseline")
NAT_STAGES = ("nat_plain", "nat_global")


class DurationPredictor(nn.Module):
    """Per-token regression head predicting durations in log(1+d) units."""

    def __init__(self, in_dim, cfg: ModelConfig):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, cfg.dur_pred_hidden),
            nn.ReLU(),
            nn.Linear(cfg.dur_pred_hidden, 1),
        )
        self.floor = cfg.duration_floor

    def forward(self, x):
        return self.net(x).squeeze(-1)

    def predict_durations(self, x):
        return decode_duration(self.forward(x)).clamp(min=self.floor)


class TTSSystem(nn.Module):
    def __init__(self, cfg: ModelConfig, stage: str):
        super().__init__()
        if stage not in Z_STAGES + NAT_STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.cfg = cfg
        self.stage = stage
        if stage in Z_STAGES:
            cond = cfg.d_g if stage == "joint_baseline" else 0
            self.acoustic = AcousticModel(cfg, posterior_condition_dim=cond)
        else:
            self.text_encoder = TextEncoder(cfg)
            u_dim = cfg.d_h + (cfg.d_g if stage == "nat_global" else 0)
            self.decoder = FrameDecoder(u_dim, cfg)
            self.dur_predictor = DurationPredictor(u_dim, cfg)
        if stage in REF_STAGES:
            self.ref_encoder = ReferenceEncoder(cfg)
        if stage in PRIOR_STAGES:
            self.prior = GaussianARPrior(cfg)

    # -- shared pieces -------------------------------------------------

    def encode_tokens(self, token_ids, token_mask):
        if self.stage in Z_STAGES:
            return self.acoustic.encode_tokens(token_ids, token_mask)
        return self.text_encoder(token_ids, token_mask)

    def frame_decoder(self):
        return self.acoustic.decoder if self.stage in Z_STAGES else self.decoder

    def reference_embedding(self, ref_mel, ref_mask=None):
        return self.ref_encoder(ref_mel, ref_mask)

    def _nat_features(self, h, g):
        if self.stage == "nat_global":
            return torch.cat([h, g.unsqueeze(1).expand(-1, h.shape[1], -1)], dim=-1)
        return h

    @staticmethod
    def _decode_upsampled(decoder, source, durations_list):
        totals = [int(d.sum()) for d in durations_list]
        u = upsample_batch(source, None, durations_list, max(totals))
        frames = decoder(u)
        return [frames[b, : totals[b]] for b in range(len(durations_list))]

    # -- inference paths ------------------------------------------------

    @torch.no_grad()
    def utterance_posterior(self, token_ids, token_mask, mel, frame_mask):
        """Token-level posterior of an utterance (joint baseline conditions on
        its own spectrogram through the reference encoder)."""
        if self.stage not in Z_STAGES:
            raise ValueError(f"stage {self.stage} has no latent posterior")
        h = self.encode_tokens(token_ids, token_mask)
        g = (
            self.reference_embedding(mel, frame_mask)
            if self.stage == "joint_baseline"
            else None
        )
        post, w = self.acoustic.infer_posterior(h, mel, frame_mask, g=g, token_mask=token_mask)
        return post, h

    @torch.no_grad()
    def copy_synthesize(
        self, token_ids, token_mask, mel, frame_mask, durations_list,
        sample_posterior=True, generator=None,
    ):
        """Posterior-sampling reconstruction with ground-truth durations."""
        h = self.encode_tokens(token_ids, token_mask)
        if self.stage in Z_STAGES:
            g = (
                self.reference_embedding(mel, frame_mask)
                if self.stage == "joint_baseline"
                else None
            )
            post, _ = self.acoustic.infer_posterior(
                h, mel, frame_mask, g=g, token_mask=token_mask
            )
            noise = (
                torch.randn(post.mu.shape, generator=generator, dtype=post.mu.dtype)
                if sample_posterior
                else torch.zeros_like(post.mu)
            )
            z = reparameterize(post, noise)
            source = torch.cat([h, z], dim=-1)
        else:
            g = self.reference_embedding(mel, frame_mask) if self.stage == "nat_global" else None
            source = self._nat_features(h, g)
        return self._decode_upsampled(self.frame_decoder(), source, durations_list)

    @torch.no_grad()
    def prior_synthesize(
        self, token_ids, token_mask, ref_mel=None, ref_mask=None,
        temperature=1.0, generator=None, durations_override=None,
    ):
        """Text + reference synthesis through the prior (or nat duration head).

        Returns (frames_per_utterance, durations [B, N]). durations_override
        replaces the sampled/predicted durations (e.g. ground truth when a
        frame-aligned comparison is wanted).
        """
        h = self.encode_tokens(token_ids, token_mask)
        if self.stage in PRIOR_STAGES:
            if ref_mel is None:
                raise ValueError(f"stage {self.stage} requires a reference spectrogram")
            g = self.reference_embedding(ref_mel, ref_mask)
            z, durations, _ = self.prior.sample(
                h, g, temperature=temperature, generator=generator
            )
            source = torch.cat([h, z], dim=-1)
        elif self.stage == "stage1":
            raise ValueError("a bare stage1 checkpoint cannot prior-sample; train stage2")
        else:
            g = None
            if self.stage == "nat_global":
                if ref_mel is None:
                    raise ValueError("nat_global requires a reference spectrogram")
                g = self.reference_embedding(ref_mel, ref_mask)
            source = self._nat_features(h, g)
            durations = self.dur_predictor.predict_durations(source)
        if durations_override is not None:
            durations = durations_override
        durations = durations * token_mask.long()
        durations_list = [
            durations[b, token_mask[b]] for b in range(token_ids.shape[0])
        ]
        frames = self._decode_upsampled(self.frame_decoder(), source, durations_list)
        return frames, durations


def build_system(cfg: ModelConfig, stage: str) -> TTSSystem:
    return TTSSystem(cfg, stage)
