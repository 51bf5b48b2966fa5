"""Stage-1 acoustic model.

Token encodings query the target spectrogram through location-sensitive
attention (frames act as keys and values), the aligned token-level features
feed a diagonal-Gaussian posterior, latents are concatenated back onto the
token encodings, replicated per ground-truth duration, and decoded one frame
at a time by an autoregressive recurrent decoder with a pre-net on the
previous frame.

All modules take batched tensors [B, N, ...] / [B, T, ...] with boolean
masks; the functional helpers at the bottom also accept single utterances.
"""

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..config import ModelConfig
from ..errors import EmptyOutput


@dataclass
class LatentPosterior:
    mu: torch.Tensor  # [..., N, d_z]
    log_sigma: torch.Tensor  # [..., N, d_z]

    @property
    def sigma(self):
        return self.log_sigma.exp()


@dataclass
class LossBreakdown:
    reconstruction: torch.Tensor
    kl: torch.Tensor
    kl_weight: float

    @property
    def total(self):
        return self.reconstruction + self.kl_weight * self.kl

    def detached(self):
        return {
            "reconstruction": float(self.reconstruction.detach()),
            "kl": float(self.kl.detach()),
            "kl_weight": float(self.kl_weight),
            "total": float(self.total.detach()),
        }


def _lengths(mask):
    return mask.long().sum(dim=1)


class TextEncoder(nn.Module):
    """Embedding -> conv stack -> BiGRU, one encoding per input token."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.d_h % 2 != 0:
            raise ValueError("d_h must be even (bidirectional encoder)")
        self.embedding = nn.Embedding(cfg.vocab_size, cfg.d_emb, padding_idx=0)
        self.convs = nn.ModuleList(
            [nn.Conv1d(cfg.d_emb, cfg.d_emb, kernel_size=5, padding=2) for _ in range(2)]
        )
        self.gru = nn.GRU(cfg.d_emb, cfg.d_h // 2, batch_first=True, bidirectional=True)
        self.vocab_size = cfg.vocab_size

    def forward(self, token_ids, token_mask):
        if int(token_ids.max()) >= self.vocab_size or int(token_ids.min()) < 0:
            raise IndexError(
                f"token id out of range [0, {self.vocab_size}): max={int(token_ids.max())}"
            )
        x = self.embedding(token_ids)  # [B, N, d_emb]
        x = x * token_mask.unsqueeze(-1)
        y = x.transpose(1, 2)
        for conv in self.convs:
            y = torch.relu(conv(y))
        x = y.transpose(1, 2) * token_mask.unsqueeze(-1)
        packed = pack_padded_sequence(
            x, _lengths(token_mask).cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.gru(packed)
        h, _ = pad_packed_sequence(out, batch_first=True, total_length=token_ids.shape[1])
        return h * token_mask.unsqueeze(-1)


class FrameAligner(nn.Module):
    """Location-sensitive attention of token queries over spectrogram frames.

    The location features for token n come from token n-1's attention row
    (zeros for the first token); values are the raw frames, so each token
    becomes a weighted average of spectrogram frames. A learnable
    relative-position penalty biases rows toward the monotone diagonal,
    which content matching and location features then refine.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.key_net = nn.Sequential(
            nn.Linear(cfg.n_mels, cfg.d_att),
            nn.Tanh(),
            nn.Linear(cfg.d_att, cfg.d_att, bias=False),
        )
        self.query_proj = nn.Linear(cfg.d_h, cfg.d_att)
        self.loc_conv = nn.Conv1d(
            1,
            cfg.attn_location_filters,
            kernel_size=cfg.attn_location_kernel,
            padding=cfg.attn_location_kernel // 2,
            bias=False,
        )
        self.loc_proj = nn.Linear(cfg.attn_location_filters, cfg.d_att, bias=False)
        self.score = nn.Linear(cfg.d_att, 1, bias=False)
        # softplus(raw) ~= cfg.attn_diagonal_strength at init
        self.diag_strength = nn.Parameter(torch.tensor(float(cfg.attn_diagonal_strength)))

    @staticmethod
    def apply_alignment(w, frames):
        """aligned[n] = sum_t w[n, t] * frames[t]."""
        return torch.matmul(w, frames)

    def forward(self, h, mel, frame_mask, token_mask=None):
        batch, n_tokens, _ = h.shape
        total = mel.shape[1]
        keys = self.key_net(mel)  # [B, T, d_att]
        queries = self.query_proj(h)  # [B, N, d_att]

        frame_lengths = frame_mask.to(mel.dtype).sum(dim=1, keepdim=True)  # [B, 1]
        token_lengths = (
            token_mask.to(mel.dtype).sum(dim=1, keepdim=True)
            if token_mask is not None
            else torch.full((batch, 1), float(n_tokens), dtype=mel.dtype, device=mel.device)
        )
        t_rel = (torch.arange(total, dtype=mel.dtype, device=mel.device)[None, :] + 0.5) / frame_lengths
        strength = nn.functional.softplus(self.diag_strength)

        prev_row = torch.zeros(batch, total, dtype=mel.dtype, device=mel.device)
        rows = []
        for n in range(n_tokens):
            loc = self.loc_proj(self.loc_conv(prev_row.unsqueeze(1)).transpose(1, 2))
            energy = self.score(torch.tanh(keys + queries[:, n : n + 1] + loc)).squeeze(-1)
            n_rel = (n + 0.5) / token_lengths  # [B, 1]
            energy = energy - strength * (t_rel - n_rel) ** 2
            energy = energy.masked_fill(~frame_mask, float("-inf"))
            row = torch.softmax(energy, dim=1)
            rows.append(row)
            prev_row = row
        w = torch.stack(rows, dim=1)  # [B, N, T]
        return self.apply_alignment(w, mel), w


class PosteriorEncoder(nn.Module):
    """Aligned token features -> diagonal Gaussian posterior parameters."""

    def __init__(self, in_dim, cfg: ModelConfig):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, cfg.posterior_hidden),
            nn.ReLU(),
            nn.Linear(cfg.posterior_hidden, 2 * cfg.d_z),
        )
        self.d_z = cfg.d_z
        self.clamp = (cfg.log_sigma_min, cfg.log_sigma_max)

    def forward(self, aligned) -> LatentPosterior:
        mu, log_sigma = self.net(aligned).chunk(2, dim=-1)
        return LatentPosterior(mu=mu, log_sigma=log_sigma.clamp(*self.clamp))


def reparameterize(post: LatentPosterior, noise) -> torch.Tensor:
    """z = mu + exp(log_sigma) * noise; zero noise returns the mean exactly."""
    return post.mu + post.log_sigma.exp() * noise


def upsample(h, z, durations):
    """Replicate concat(h_i, z_i) for each of the d_i frames token i owns.

    Unbatched: h [N, d_h], z [N, d_z] or None, durations [N] non-negative ints.
    """
    durations = torch.as_tensor(durations, dtype=torch.long, device=h.device)
    if (durations < 0).any():
        raise ValueError("durations must be non-negative")
    if int(durations.sum()) == 0:
        raise EmptyOutput("all durations are zero, nothing to upsample")
    source = h if z is None else torch.cat([h, z], dim=-1)
    index = torch.repeat_interleave(
        torch.arange(source.shape[0], device=h.device), durations
    )
    return source[index]


def upsample_batch(h, z, durations_list, total_frames):
    """Batched replication into a zero-padded [B, total_frames, d] tensor.

    durations_list holds each sample's unpadded [N_b] durations; rows past a
    sample's token count are ignored.
    """
    batch = h.shape[0]
    rows = []
    for b in range(batch):
        n = len(durations_list[b])
        u = upsample(h[b, :n], None if z is None else z[b, :n], durations_list[b])
        if u.shape[0] < total_frames:
            pad = torch.zeros(
                total_frames - u.shape[0], u.shape[1], dtype=u.dtype, device=u.device
            )
            u = torch.cat([u, pad], dim=0)
        rows.append(u)
    return torch.stack(rows, dim=0)


class FrameDecoder(nn.Module):
    """Autoregressive frame decoder: pre-net on the previous frame + LSTM.

    Teacher forcing runs the whole sequence in one LSTM call (the inputs are
    known up front); free-running feeds back its own predictions. Frame -1 is
    a zero frame in both modes, so the two agree at t=0 in eval mode.
    """

    def __init__(self, u_dim, cfg: ModelConfig):
        super().__init__()
        self.n_mels = cfg.n_mels
        self.prenet = nn.Sequential(
            nn.Linear(cfg.n_mels, cfg.prenet_dim),
            nn.ReLU(),
            nn.Dropout(cfg.prenet_dropout),
            nn.Linear(cfg.prenet_dim, cfg.prenet_dim),
            nn.ReLU(),
            nn.Dropout(cfg.prenet_dropout),
        )
        self.lstm = nn.LSTM(cfg.prenet_dim + u_dim, cfg.decoder_lstm_dim, batch_first=True)
        self.proj = nn.Linear(cfg.decoder_lstm_dim + u_dim, cfg.n_mels)

    def forward(self, u, teacher=None):
        if teacher is not None:
            if teacher.shape[1] != u.shape[1]:
                raise ValueError(
                    f"teacher length {teacher.shape[1]} != upsampled length {u.shape[1]}"
                )
            prev = torch.cat(
                [torch.zeros_like(teacher[:, :1]), teacher[:, :-1]], dim=1
            )
            x = torch.cat([self.prenet(prev), u], dim=-1)
            out, _ = self.lstm(x)
            return self.proj(torch.cat([out, u], dim=-1))
        return self._free_run(u)

    def _free_run(self, u):
        batch, total, _ = u.shape
        prev = torch.zeros(batch, self.n_mels, dtype=u.dtype, device=u.device)
        state = None
        frames = []
        for t in range(total):
            x = torch.cat([self.prenet(prev), u[:, t]], dim=-1).unsqueeze(1)
            out, state = self.lstm(x, state)
            prev = self.proj(torch.cat([out[:, 0], u[:, t]], dim=-1))
            frames.append(prev)
        return torch.stack(frames, dim=1)


def gaussian_standard_kl(post: LatentPosterior):
    """Per-token KL(N(mu, sigma^2) || N(0, I)), summed over latent dims."""
    var = (2.0 * post.log_sigma).exp()
    return 0.5 * (post.mu**2 + var - 1.0 - 2.0 * post.log_sigma).sum(dim=-1)


def stage1_loss(y, y_pred, post: LatentPosterior, kl_weight, frame_mask=None, token_mask=None):
    """Masked mean L1 reconstruction + mean per-token KL to a standard normal."""
    if y.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {tuple(y.shape)} vs {tuple(y_pred.shape)}")
    err = (y - y_pred).abs()
    if frame_mask is not None:
        err = err * frame_mask.unsqueeze(-1)
        recon = err.sum() / (frame_mask.sum() * y.shape[-1])
    else:
        recon = err.mean()
    kl_tok = gaussian_standard_kl(post)
    if token_mask is not None:
        kl = (kl_tok * token_mask).sum() / token_mask.sum()
    else:
        kl = kl_tok.mean()
    return LossBreakdown(reconstruction=recon, kl=kl, kl_weight=float(kl_weight))


class AcousticModel(nn.Module):
    """Stage-1 bundle: text encoder, aligner, posterior, decoder."""

    def __init__(self, cfg: ModelConfig, posterior_condition_dim=0):
        super().__init__()
        self.cfg = cfg
        self.text_encoder = TextEncoder(cfg)
        self.aligner = FrameAligner(cfg)
        self.posterior_encoder = PosteriorEncoder(cfg.n_mels + posterior_condition_dim, cfg)
        self.decoder = FrameDecoder(cfg.d_h + cfg.d_z, cfg)
        self.posterior_condition_dim = posterior_condition_dim

    def encode_tokens(self, token_ids, token_mask=None):
        if token_mask is None:
            token_mask = torch.ones_like(token_ids, dtype=torch.bool)
        return self.text_encoder(token_ids, token_mask)

    def infer_posterior(self, h, mel, frame_mask, g=None, token_mask=None):
        aligned, w = self.aligner(h, mel, frame_mask, token_mask=token_mask)
        if self.posterior_condition_dim:
            if g is None:
                raise ValueError("this model's posterior requires a conditioning vector g")
            aligned = torch.cat([aligned, g.unsqueeze(1).expand(-1, aligned.shape[1], -1)], dim=-1)
        return self.posterior_encoder(aligned), w

    def forward(self, token_ids, token_mask, mel, frame_mask, durations_list, noise=None, g=None):
        h = self.encode_tokens(token_ids, token_mask)
        post, w = self.infer_posterior(h, mel, frame_mask, g=g, token_mask=token_mask)
        if noise is None:
            noise = torch.zeros_like(post.mu)
        z = reparameterize(post, noise)
        u = upsample_batch(h, z, durations_list, mel.shape[1])
        y_pred = self.decoder(u, teacher=mel)
        return y_pred, post, w, h, z
