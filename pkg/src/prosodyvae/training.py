"""Training orchestration for the two-stage pipeline and baseline variants.

One process trains one job. All randomness (init, batch order, latent noise)
derives from the run seed, so a fixed seed reproduces the loss trajectory
exactly. Stage 2 freezes every stage-1 tensor; the saved checkpoint carries
them bitwise unchanged.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint, state_hashes
from .config import Config
from .errors import DimMismatch, InvalidInput, MissingDurations
from .models.acoustic import reparameterize, stage1_loss, upsample_batch
from .models.prior import stage2_kl
from .models.system import NAT_STAGES, TTSSystem, build_system

# acoustic-side fields that must agree between a stage-1 checkpoint and a
# stage-2 run for the frozen weights to be loadable
ACOUSTIC_DIM_FIELDS = (
    "vocab_size", "n_mels", "d_emb", "d_h", "d_z", "d_att",
    "attn_location_filters", "attn_location_kernel", "attn_diagonal_strength", "posterior_hidden",
    "prenet_dim", "decoder_lstm_dim", "log_sigma_min", "log_sigma_max",
)


@dataclass
class Batch:
    token_ids: torch.Tensor  # [B, N] long
    token_mask: torch.Tensor  # [B, N] bool
    mel: torch.Tensor  # [B, T, n_mels]
    frame_mask: torch.Tensor  # [B, T] bool
    durations: torch.Tensor  # [B, N] long, zero-padded
    durations_list: list  # per-sample [N_b] long tensors

    @property
    def size(self):
        return self.token_ids.shape[0]


def collate(records) -> Batch:
    batch = len(records)
    max_n = max(r.n_tokens for r in records)
    max_t = max(r.n_frames for r in records)
    n_mels = records[0].mel.n_mels
    token_ids = torch.zeros(batch, max_n, dtype=torch.long)
    token_mask = torch.zeros(batch, max_n, dtype=torch.bool)
    mel = torch.zeros(batch, max_t, n_mels)
    frame_mask = torch.zeros(batch, max_t, dtype=torch.bool)
    durations = torch.zeros(batch, max_n, dtype=torch.long)
    durations_list = []
    for b, rec in enumerate(records):
        n, t = rec.n_tokens, rec.n_frames
        token_ids[b, :n] = torch.from_numpy(rec.token_ids)
        token_mask[b, :n] = True
        mel[b, :t] = torch.from_numpy(rec.mel.frames)
        frame_mask[b, :t] = True
        if rec.durations_frames is None:
            raise MissingDurations(f"record {rec.utt_id} has no durations")
        d = torch.from_numpy(rec.durations_frames)
        durations[b, :n] = d
        durations_list.append(d)
    return Batch(token_ids, token_mask, mel, frame_mask, durations, durations_list)


def split_corpus(manifest, holdout_fraction, seed):
    """Deterministic train/holdout split by seeded permutation."""
    records = list(manifest)
    if len(records) < 2 or holdout_fraction <= 0:
        return records, records[:1]
    rng = np.random.default_rng([int(seed), 0x5EED])
    order = rng.permutation(len(records))
    n_holdout = min(len(records) - 1, max(1, int(round(holdout_fraction * len(records)))))
    holdout_idx = set(order[:n_holdout].tolist())
    train = [records[i] for i in range(len(records)) if i not in holdout_idx]
    holdout = [records[i] for i in sorted(holdout_idx)]
    return train, holdout


def make_length_buckets(records, batch_size):
    """Group length-sorted records into batches; order is shuffled per epoch."""
    order = sorted(range(len(records)), key=lambda i: (records[i].n_frames, records[i].utt_id))
    return [
        [records[i] for i in order[start : start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]


def lr_schedule(cfg):
    train = cfg.train

    def factor(step):
        warm = min((step + 1) / max(1, train.warmup_steps), 1.0)
        decay = train.decay_rate ** (max(0, step + 1 - train.warmup_steps) / max(1, train.decay_steps))
        return warm * decay

    return factor


def kl_weight_at(cfg, step):
    warmup = max(1, cfg.train.kl_warmup_steps)
    return cfg.train.kl_weight * min(1.0, (step + 1) / warmup)


def _check_dims(base_model_cfg, model_cfg):
    bad = [
        name
        for name in ACOUSTIC_DIM_FIELDS
        if getattr(base_model_cfg, name) != getattr(model_cfg, name)
    ]
    if bad:
        detail = ", ".join(
            f"{n}: checkpoint={getattr(base_model_cfg, n)} config={getattr(model_cfg, n)}"
            for n in bad
        )
        raise DimMismatch(f"stage-1 checkpoint incompatible with config ({detail})")


def _duration_targets(durations, dtype):
    return torch.log1p(durations.to(dtype))


def _stage1_step(system: TTSSystem, batch: Batch, cfg, step, generator):
    noise = torch.randn(
        (batch.size, batch.token_ids.shape[1], cfg.model.d_z), generator=generator
    )
    y_pred, post, _, _, _ = system.acoustic(
        batch.token_ids, batch.token_mask, batch.mel, batch.frame_mask,
        batch.durations_list, noise=noise,
    )
    breakdown = stage1_loss(
        batch.mel, y_pred, post, kl_weight_at(cfg, step),
        frame_mask=batch.frame_mask, token_mask=batch.token_mask,
    )
    return breakdown.total, breakdown.detached()


def _stage2_step(system: TTSSystem, batch: Batch, cfg, step, generator):
    with torch.no_grad():
        h = system.acoustic.encode_tokens(batch.token_ids, batch.token_mask)
        post, _ = system.acoustic.infer_posterior(
            h, batch.mel, batch.frame_mask, token_mask=batch.token_mask
        )
        teacher_z = post.mu
        if cfg.train.teacher_force_prior_samples:
            noise = torch.randn(post.mu.shape, generator=generator)
            teacher_z = reparameterize(post, noise)
    z_ext = torch.cat(
        [teacher_z, _duration_targets(batch.durations, teacher_z.dtype).unsqueeze(-1)], dim=-1
    )
    g = system.ref_encoder(batch.mel, batch.frame_mask)
    prior = system.prior(h, g, z_ext)
    kl = stage2_kl(post, batch.durations, prior, cfg.model.sigma_duration, batch.token_mask)
    return kl, {"kl": float(kl.detach())}


def _joint_step(system: TTSSystem, batch: Batch, cfg, step, generator):
    h = system.acoustic.encode_tokens(batch.token_ids, batch.token_mask)
    g = system.ref_encoder(batch.mel, batch.frame_mask)
    post, _ = system.acoustic.infer_posterior(
        h, batch.mel, batch.frame_mask, g=g, token_mask=batch.token_mask
    )
    noise = torch.randn(post.mu.shape, generator=generator)
    z = reparameterize(post, noise)
    u = upsample_batch(h, z, batch.durations_list, batch.mel.shape[1])
    y_pred = system.acoustic.decoder(u, teacher=batch.mel)

    err = (batch.mel - y_pred).abs() * batch.frame_mask.unsqueeze(-1)
    recon = err.sum() / (batch.frame_mask.sum() * batch.mel.shape[-1])

    z_ext_teacher = torch.cat(
        [post.mu.detach(), _duration_targets(batch.durations, post.mu.dtype).unsqueeze(-1)],
        dim=-1,
    )
    prior = system.prior(h, g, z_ext_teacher)
    kl = stage2_kl(
        post, batch.durations, prior, cfg.model.sigma_duration, batch.token_mask,
        detach_posterior=False,
    )
    weight = kl_weight_at(cfg, step)
    total = recon + weight * kl
    return total, {"reconstruction": float(recon.detach()), "kl": float(kl.detach()),
                   "kl_weight": weight, "total": float(total.detach())}


def _nat_step(system: TTSSystem, batch: Batch, cfg, step, generator):
    h = system.encode_tokens(batch.token_ids, batch.token_mask)
    g = None
    if system.stage == "nat_global":
        g = system.ref_encoder(batch.mel, batch.frame_mask)
    feats = system._nat_features(h, g)
    u = upsample_batch(feats, None, batch.durations_list, batch.mel.shape[1])
    y_pred = system.decoder(u, teacher=batch.mel)
    err = (batch.mel - y_pred).abs() * batch.frame_mask.unsqueeze(-1)
    recon = err.sum() / (batch.frame_mask.sum() * batch.mel.shape[-1])

    v_hat = system.dur_predictor(feats)
    v_ref = _duration_targets(batch.durations, v_hat.dtype)
    mask = batch.token_mask.to(v_hat.dtype)
    dur_mse = (((v_hat - v_ref) ** 2) * mask).sum() / mask.sum()
    total = recon + cfg.train.duration_loss_weight * dur_mse
    return total, {"reconstruction": float(recon.detach()),
                   "duration_mse": float(dur_mse.detach()), "total": float(total.detach())}


_STEP_FNS = {
    "stage1": _stage1_step,
    "stage2": _stage2_step,
    "joint_baseline": _joint_step,
    "nat_plain": _nat_step,
    "nat_global": _nat_step,
}


@torch.no_grad()
def _holdout_metrics(system: TTSSystem, batches, cfg, step):
    """Deterministic held-out losses (zero latent noise, teacher forcing)."""
    was_training = system.training
    system.eval()
    totals = {}
    count = 0
    for batch in batches:
        if system.stage == "stage2":
            _, parts = _stage2_step(system, batch, cfg, step, generator=None)
        elif system.stage == "stage1":
            y_pred, post, _, _, _ = system.acoustic(
                batch.token_ids, batch.token_mask, batch.mel, batch.frame_mask,
                batch.durations_list, noise=None,
            )
            breakdown = stage1_loss(
                batch.mel, y_pred, post, kl_weight_at(cfg, step),
                frame_mask=batch.frame_mask, token_mask=batch.token_mask,
            )
            parts = breakdown.detached()
        elif system.stage == "joint_baseline":
            _, parts = _joint_step(system, batch, cfg, step, generator=torch.Generator().manual_seed(0))
        else:
            _, parts = _nat_step(system, batch, cfg, step, generator=None)
        weight = batch.size
        for key, value in parts.items():
            totals[key] = totals.get(key, 0.0) + weight * value
        count += weight
    if was_training:
        system.train()
    return {f"holdout_{k}": v / count for k, v in totals.items()}


@torch.no_grad()
def _quick_mcd(system: TTSSystem, records, cfg, generator):
    """Copy-synthesis MCD on a fixed mini split, for the eval cadence log."""
    from .evalkit.metrics import mcd, mel_cepstra

    if system.stage == "stage2":
        return None
    was_training = system.training
    system.eval()
    batch = collate(records)
    frames = system.copy_synthesize(
        batch.token_ids, batch.token_mask, batch.mel, batch.frame_mask,
        batch.durations_list, sample_posterior=False,
    )
    values = []
    for b, rec in enumerate(records):
        pred = frames[b].numpy()
        values.append(
            mcd(mel_cepstra(rec.mel.frames, cfg.eval.mcd_coeffs),
                mel_cepstra(pred, cfg.eval.mcd_coeffs))
        )
    if was_training:
        system.train()
    return float(np.mean(values))


def train(cfg: Config, manifest, stage1_checkpoint=None, out_dir=None):
    """Train one stage per the config; returns (system, history).

    When out_dir is given, the checkpoint is saved there.
    """
    if stage1_checkpoint is not None:
        cfg.train.stage1_checkpoint = str(stage1_checkpoint)
    cfg.validate()
    stage = cfg.train.stage
    records = list(manifest)
    if not records:
        raise InvalidInput("cannot train on an empty corpus")
    if any(r.durations_frames is None for r in records):
        raise MissingDurations("training requires ground-truth durations for every record")
    max_id = max(int(r.token_ids.max()) for r in records)
    if max_id >= cfg.model.vocab_size:
        raise InvalidInput(
            f"corpus token id {max_id} out of range for model.vocab_size={cfg.model.vocab_size}"
        )

    torch.manual_seed(cfg.seed)
    frozen_prefix = None
    if stage == "stage2":
        ckpt_path = stage1_checkpoint or cfg.train.stage1_checkpoint
        base_system, base_cfg, _ = load_checkpoint(ckpt_path, expect_stage="stage1")
        _check_dims(base_cfg.model, cfg.model)
        system = build_system(cfg.model, "stage2")
        system.acoustic.load_state_dict(base_system.acoustic.state_dict())
        system.acoustic.requires_grad_(False)
        frozen_prefix = "acoustic."
    else:
        system = build_system(cfg.model, stage)

    frozen_before = state_hashes(system, prefix=frozen_prefix) if frozen_prefix else None
    params = [p for p in system.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=cfg.train.learning_rate)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_schedule(cfg))
    generator = torch.Generator().manual_seed(cfg.seed + 1)
    shuffle_rng = np.random.default_rng([cfg.seed, 101])

    train_records, holdout_records = split_corpus(manifest, cfg.train.holdout_fraction, cfg.seed)
    buckets = make_length_buckets(train_records, cfg.train.batch_size)
    holdout_batches = [
        collate(holdout_records[i : i + cfg.train.batch_size])
        for i in range(0, len(holdout_records), cfg.train.batch_size)
    ]
    mcd_records = holdout_records[: cfg.train.eval_mcd_utterances]

    step_fn = _STEP_FNS[stage]
    system.train()
    history = []
    epoch_order = []
    for step in range(cfg.train.max_steps):
        if not epoch_order:
            epoch_order = list(shuffle_rng.permutation(len(buckets)))
        batch = collate(buckets[epoch_order.pop(0)])
        loss, parts = step_fn(system, batch, cfg, step, generator)
        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, 1.0)
        optimizer.step()
        scheduler.step()

        last = step + 1 == cfg.train.max_steps
        if step == 0 or (step + 1) % cfg.train.eval_every == 0 or last:
            record = {"step": step + 1, "train_loss": float(loss.detach())}
            record.update({f"train_{k}": v for k, v in parts.items()})
            record.update(_holdout_metrics(system, holdout_batches, cfg, step))
            quick = _quick_mcd(system, mcd_records, cfg, generator)
            if quick is not None:
                record["quick_mcd"] = quick
            history.append(record)

    system.eval()
    if frozen_before is not None:
        frozen_after = state_hashes(system, prefix=frozen_prefix)
        if frozen_before != frozen_after:
            raise RuntimeError("stage-1 tensors were mutated during stage-2 training")
    if out_dir is not None:
        save_checkpoint(system, cfg, out_dir, step=cfg.train.max_steps, history=history)
    return system, history


def train_stage1(cfg: Config, manifest, out_dir=None):
    if cfg.train.stage != "stage1":
        raise InvalidInput(f"config stage is {cfg.train.stage!r}, expected stage1")
    return train(cfg, manifest, out_dir=out_dir)


def train_stage2(cfg: Config, manifest, stage1_checkpoint, out_dir=None):
    if cfg.train.stage != "stage2":
        raise InvalidInput(f"config stage is {cfg.train.stage!r}, expected stage2")
    return train(cfg, manifest, stage1_checkpoint=stage1_checkpoint, out_dir=out_dir)


def train_joint_baseline(cfg: Config, manifest, out_dir=None):
    if cfg.train.stage != "joint_baseline":
        raise InvalidInput(f"config stage is {cfg.train.stage!r}, expected joint_baseline")
    return train(cfg, manifest, out_dir=out_dir)
