"""Stage-2 prior network.

The reference encoder compresses a spectrogram into one utterance vector g
(3 stride-2 conv blocks with channel doubling, a bi-LSTM, mean pooling).
The autoregressive prior is a single-layer LSTM over extended latents
z'_n = {z_n, D_n}: step n consumes concat(z'_{n-1}, h_{n-1}, g) and emits a
diagonal Gaussian over z'_n, where the extra channel carries the per-token
duration in log(1+d) encoding. Training minimizes KL(posterior || prior)
against the frozen stage-1 posterior extended with a narrow duration
Gaussian.
"""

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..config import ModelConfig
from ..errors import ReferenceTooShort
from .acoustic import LatentPosterior


@dataclass
class PriorParams:
    mu: torch.Tensor  # [..., N, d_z + 1]
    log_sigma: torch.Tensor  # [..., N, d_z + 1]

    @property
    def sigma(self):
        return self.log_sigma.exp()


def encode_duration(d):
    """log(1 + d); invertible for non-negative integer durations."""
    if torch.is_tensor(d):
        return torch.log1p(d.double()).to(d.dtype if d.is_floating_point() else torch.float32)
    return math.log1p(float(d))


def decode_duration(v):
    """round(exp(v) - 1); the caller applies any duration floor."""
    if torch.is_tensor(v):
        return torch.round(torch.expm1(v.double())).long()
    return int(round(math.expm1(float(v))))


class ReferenceEncoder(nn.Module):
    """Spectrogram -> single utterance-level vector of fixed width d_g."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.ref_conv_channels
        channels = [cfg.n_mels, c, 2 * c, 4 * c]
        self.convs = nn.ModuleList(
            [
                nn.Conv1d(channels[i], channels[i + 1], kernel_size=3, stride=2, padding=1)
                for i in range(3)
            ]
        )
        self.lstm = nn.LSTM(
            4 * c, cfg.ref_lstm_dim // 2, batch_first=True, bidirectional=True
        )
        self.proj = nn.Linear(cfg.ref_lstm_dim, cfg.d_g)
        self.min_frames = cfg.ref_min_frames

    @staticmethod
    def _conv_out_length(length):
        return (length - 1) // 2 + 1

    def forward(self, mel, frame_mask=None):
        if frame_mask is None:
            frame_mask = torch.ones(
                mel.shape[0], mel.shape[1], dtype=torch.bool, device=mel.device
            )
        lengths = frame_mask.long().sum(dim=1)
        shortest = int(lengths.min())
        if shortest < self.min_frames:
            raise ReferenceTooShort(shortest, self.min_frames)
        x = (mel * frame_mask.unsqueeze(-1)).transpose(1, 2)
        for conv in self.convs:
            x = torch.relu(conv(x))
            lengths = self._conv_out_length(lengths)
        x = x.transpose(1, 2)  # [B, T', 4c]
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True)
        mask = (
            torch.arange(out.shape[1], device=out.device)[None, :] < lengths[:, None]
        ).to(out.dtype)
        pooled = (out * mask.unsqueeze(-1)).sum(dim=1) / lengths.unsqueeze(-1).to(out.dtype)
        return self.proj(pooled)


class GaussianARPrior(nn.Module):
    """Single-layer LSTM prior over z'_n = {z_n, D_n}, conditioned on g.

    The step-n input holds only strictly-previous information
    (z'_{n-1}, h_{n-1}, g, with learned start vectors at n=0); a config
    switch additionally concatenates the current token's encoding h_n.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.d_out = cfg.d_z + 1
        self.include_current = cfg.prior_include_current_token
        in_dim = self.d_out + cfg.d_h * (2 if self.include_current else 1) + cfg.d_g
        self.start_z = nn.Parameter(torch.zeros(self.d_out))
        self.start_h = nn.Parameter(torch.zeros(cfg.d_h))
        self.lstm = nn.LSTM(in_dim, cfg.prior_lstm_dim, batch_first=True)
        self.proj = nn.Linear(cfg.prior_lstm_dim, 2 * self.d_out)
        self.clamp = (cfg.log_sigma_min, cfg.log_sigma_max)
        self.duration_floor = cfg.duration_floor

    def _step_inputs(self, h, g, z_prev):
        batch, n_tokens, _ = h.shape
        h_prev = torch.cat([self.start_h.expand(batch, 1, -1), h[:, :-1]], dim=1)
        parts = [z_prev, h_prev]
        if self.include_current:
            parts.append(h)
        parts.append(g.unsqueeze(1).expand(-1, n_tokens, -1))
        return torch.cat(parts, dim=-1)

    def forward(self, h, g, z_ext_teacher) -> PriorParams:
        """Teacher-forced params for every step given ground-truth z' history."""
        batch = h.shape[0]
        z_prev = torch.cat(
            [self.start_z.expand(batch, 1, -1), z_ext_teacher[:, :-1]], dim=1
        )
        out, _ = self.lstm(self._step_inputs(h, g, z_prev))
        mu, log_sigma = self.proj(out).chunk(2, dim=-1)
        return PriorParams(mu=mu, log_sigma=log_sigma.clamp(*self.clamp))

    @torch.no_grad()
    def sample(self, h, g, temperature=1.0, generator=None):
        """Ancestral sampling of latents and durations, batched over utterances."""
        if temperature < 0:
            raise ValueError("temperature must be >= 0")
        batch, n_tokens, _ = h.shape
        z_prev = self.start_z.expand(batch, 1, -1)
        h_prev = self.start_h.expand(batch, 1, -1)
        g_step = g.unsqueeze(1)
        state = None
        samples = []
        for n in range(n_tokens):
            parts = [z_prev, h_prev]
            if self.include_current:
                parts.append(h[:, n : n + 1])
            parts.append(g_step)
            out, state = self.lstm(torch.cat(parts, dim=-1), state)
            mu, log_sigma = self.proj(out).chunk(2, dim=-1)
            log_sigma = log_sigma.clamp(*self.clamp)
            eps = torch.randn(
                mu.shape, generator=generator, dtype=mu.dtype, device=mu.device
            )
            z_n = mu + temperature * log_sigma.exp() * eps
            samples.append(z_n)
            z_prev = z_n
            h_prev = h[:, n : n + 1]
        z_ext = torch.cat(samples, dim=1)  # [B, N, d_z + 1]
        durations = decode_duration(z_ext[..., -1]).clamp(min=self.duration_floor)
        return z_ext[..., :-1], durations, z_ext


def gaussian_kl(mu_q, sigma_q, mu_p, sigma_p):
    """KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) elementwise for diagonals."""
    return (
        torch.log(sigma_p)
        - torch.log(sigma_q)
        + (sigma_q**2 + (mu_q - mu_p) ** 2) / (2.0 * sigma_p**2)
        - 0.5
    )


def extend_posterior(post: LatentPosterior, durations, sigma_duration, detach=True):
    """Append the near-delta duration Gaussian to the stage-1 posterior.

    detach=True freezes the posterior side (stage-2 training); the joint
    baseline passes detach=False so the KL also shapes the posterior.
    """
    mu_z = post.mu.detach() if detach else post.mu
    sigma_z = (post.log_sigma.detach() if detach else post.log_sigma).exp()
    dur_mu = torch.log1p(durations.to(post.mu.dtype))
    mu = torch.cat([mu_z, dur_mu.unsqueeze(-1)], dim=-1)
    sigma = torch.cat(
        [sigma_z, torch.full_like(dur_mu.unsqueeze(-1), sigma_duration)], dim=-1
    )
    return mu, sigma


def stage2_kl(
    post: LatentPosterior, durations, prior: PriorParams, sigma_duration,
    token_mask=None, detach_posterior=True,
):
    """Mean per-token KL(extended posterior || prior), closed form."""
    mu_q, sigma_q = extend_posterior(post, durations, sigma_duration, detach=detach_posterior)
    kl = gaussian_kl(mu_q, sigma_q, prior.mu, prior.log_sigma.exp()).sum(dim=-1)
    if token_mask is not None:
        return (kl * token_mask).sum() / token_mask.sum()
    return kl.mean()
