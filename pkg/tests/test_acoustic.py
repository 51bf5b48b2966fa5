import numpy as np
import pytest
import torch

from prosodyvae.errors import EmptyOutput
from prosodyvae.models.acoustic import (
    AcousticModel,
    FrameAligner,
    LatentPosterior,
    PosteriorEncoder,
    TextEncoder,
    gaussian_standard_kl,
    reparameterize,
    stage1_loss,
    upsample,
    upsample_batch,
)


@pytest.fixture()
def model(tiny_model_config):
    torch.manual_seed(3)
    m = AcousticModel(tiny_model_config.model)
    m.eval()
    return m


def _mel(batch, t, n_mels=80, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(batch, t, n_mels, generator=g)


class TestTextEncoder:
    def test_single_token_shape(self, model, tiny_model_config):
        ids = torch.tensor([[4]])
        h = model.encode_tokens(ids)
        assert h.shape == (1, 1, tiny_model_config.model.d_h)

    def test_batch_permutation_equivariance(self, model):
        g = torch.Generator().manual_seed(1)
        ids = torch.randint(3, 12, (4, 6), generator=g)
        mask = torch.ones_like(ids, dtype=torch.bool)
        h = model.encode_tokens(ids, mask)
        perm = torch.tensor([2, 0, 3, 1])
        h_perm = model.encode_tokens(ids[perm], mask[perm])
        assert torch.allclose(h[perm], h_perm, atol=1e-6)

    def test_deterministic_in_eval(self, model):
        ids = torch.tensor([[3, 4, 5]])
        assert torch.equal(model.encode_tokens(ids), model.encode_tokens(ids))

    def test_out_of_range_id(self, model):
        with pytest.raises(IndexError):
            model.encode_tokens(torch.tensor([[99]]))


class TestAligner:
    def test_single_frame_all_mass(self, model, tiny_model_config):
        h = torch.randn(2, 3, tiny_model_config.model.d_h)
        mel = _mel(2, 1)
        mask = torch.ones(2, 1, dtype=torch.bool)
        aligned, w = model.aligner(h, mel, mask)
        assert torch.allclose(w, torch.ones_like(w))
        assert torch.allclose(aligned, mel.expand(-1, 3, -1), atol=1e-6)

    def test_rows_sum_to_one(self, model, tiny_model_config):
        h = torch.randn(3, 5, tiny_model_config.model.d_h)
        mel = _mel(3, 17)
        mask = torch.ones(3, 17, dtype=torch.bool)
        _, w = model.aligner(h, mel, mask)
        assert torch.allclose(w.sum(dim=-1), torch.ones(3, 5), atol=1e-5)
        assert (w >= 0).all()

    def test_masked_frames_get_zero_weight(self, model, tiny_model_config):
        h = torch.randn(1, 4, tiny_model_config.model.d_h)
        mel = _mel(1, 10)
        mask = torch.zeros(1, 10, dtype=torch.bool)
        mask[0, :6] = True
        _, w = model.aligner(h, mel, mask)
        assert torch.allclose(w[0, :, 6:], torch.zeros(4, 4))
        assert torch.allclose(w.sum(-1), torch.ones(1, 4), atol=1e-5)

    def test_uniform_weights_give_frame_mean(self):
        mel = _mel(1, 8)
        w = torch.full((1, 3, 8), 1.0 / 8)
        aligned = FrameAligner.apply_alignment(w, mel)
        expected = mel.mean(dim=1, keepdim=True).expand(-1, 3, -1)
        assert torch.allclose(aligned, expected, atol=1e-6)


class TestPosterior:
    def test_shapes_and_clamp(self, tiny_model_config):
        enc = PosteriorEncoder(80, tiny_model_config.model)
        post = enc(torch.randn(1, 3, 80) * 1e6)
        assert post.mu.shape == (1, 3, tiny_model_config.model.d_z)
        assert post.log_sigma.shape == post.mu.shape
        assert (post.log_sigma >= tiny_model_config.model.log_sigma_min).all()
        assert (post.log_sigma <= tiny_model_config.model.log_sigma_max).all()

    def test_deterministic(self, tiny_model_config):
        enc = PosteriorEncoder(80, tiny_model_config.model)
        x = torch.randn(2, 4, 80)
        a, b = enc(x), enc(x)
        assert torch.equal(a.mu, b.mu) and torch.equal(a.log_sigma, b.log_sigma)


class TestReparameterize:
    def test_zero_noise_returns_mean(self):
        post = LatentPosterior(mu=torch.randn(4, 3), log_sigma=torch.randn(4, 3))
        assert torch.equal(reparameterize(post, torch.zeros(4, 3)), post.mu)

    def test_unit_posterior_passes_noise(self):
        eps = torch.randn(5, 2)
        post = LatentPosterior(mu=torch.zeros(5, 2), log_sigma=torch.zeros(5, 2))
        assert torch.allclose(reparameterize(post, eps), eps)

    def test_monte_carlo_stddev(self):
        # empirical stddev over 1e5 draws with sigma = 2 lands within 2%
        g = torch.Generator().manual_seed(7)
        post = LatentPosterior(
            mu=torch.zeros(100_000, 1),
            log_sigma=torch.full((100_000, 1), float(np.log(2.0))),
        )
        z = reparameterize(post, torch.randn(100_000, 1, generator=g))
        assert float(z.std()) == pytest.approx(2.0, rel=0.02)


class TestUpsample:
    def test_ownership_pattern(self):
        h = torch.arange(3, dtype=torch.float32).unsqueeze(-1)  # token index as value
        z = torch.zeros(3, 1)
        u = upsample(h, z, torch.tensor([2, 1, 3]))
        assert u.shape == (6, 2)
        assert u[:, 0].tolist() == [0.0, 0.0, 1.0, 2.0, 2.0, 2.0]

    def test_unit_durations_identity(self):
        h = torch.randn(4, 3)
        z = torch.randn(4, 2)
        u = upsample(h, z, torch.tensor([1, 1, 1, 1]))
        assert torch.equal(u, torch.cat([h, z], dim=-1))

    def test_zero_duration_token_skipped(self):
        h = torch.randn(2, 3)
        u = upsample(h, None, torch.tensor([0, 3]))
        assert u.shape == (3, 3)
        assert torch.equal(u, h[1].expand(3, -1))

    def test_all_zero_durations_rejected(self):
        with pytest.raises(EmptyOutput):
            upsample(torch.randn(2, 3), None, torch.tensor([0, 0]))

    def test_batch_padding(self):
        h = torch.randn(2, 3, 4)
        durations = [torch.tensor([1, 2, 1]), torch.tensor([2, 1])]
        u = upsample_batch(h, None, durations, total_frames=5)
        assert u.shape == (2, 5, 4)
        assert torch.equal(u[0, 4], torch.zeros(4))  # pad frame
        assert torch.equal(u[1, 3], torch.zeros(4))


class TestDecoder:
    def test_teacher_forced_shape(self, model):
        u = torch.randn(2, 7, model.cfg.d_h + model.cfg.d_z)
        teacher = _mel(2, 7)
        out = model.decoder(u, teacher=teacher)
        assert out.shape == teacher.shape

    def test_free_run_matches_teacher_at_t0(self, model):
        u = torch.randn(1, 5, model.cfg.d_h + model.cfg.d_z)
        teacher = _mel(1, 5)
        forced = model.decoder(u, teacher=teacher)
        free = model.decoder(u)
        assert torch.allclose(forced[:, 0], free[:, 0], atol=1e-6)

    def test_free_run_deterministic(self, model):
        u = torch.randn(1, 6, model.cfg.d_h + model.cfg.d_z)
        assert torch.equal(model.decoder(u), model.decoder(u))

    def test_teacher_length_mismatch(self, model):
        u = torch.randn(1, 5, model.cfg.d_h + model.cfg.d_z)
        with pytest.raises(ValueError):
            model.decoder(u, teacher=_mel(1, 4))


class TestStage1Loss:
    def test_perfect_reconstruction_and_unit_prior(self):
        y = _mel(1, 4)
        post = LatentPosterior(mu=torch.zeros(1, 3, 2), log_sigma=torch.zeros(1, 3, 2))
        breakdown = stage1_loss(y, y.clone(), post, kl_weight=0.5)
        assert float(breakdown.total) == 0.0

    def test_closed_form_kl_value(self):
        d_z = 8
        post = LatentPosterior(mu=torch.ones(1, 5, d_z), log_sigma=torch.zeros(1, 5, d_z))
        kl_tok = gaussian_standard_kl(post)
        assert torch.allclose(kl_tok, torch.full((1, 5), 0.5 * d_z))

    def test_zero_weight_drops_kl(self):
        y = _mel(1, 4)
        y_pred = _mel(1, 4, seed=1)
        post = LatentPosterior(mu=torch.randn(1, 3, 2), log_sigma=torch.randn(1, 3, 2))
        breakdown = stage1_loss(y, y_pred, post, kl_weight=0.0)
        assert float(breakdown.total) == pytest.approx(float(breakdown.reconstruction))
        assert float(breakdown.reconstruction) == pytest.approx(
            float((y - y_pred).abs().mean()), rel=1e-6
        )

    def test_total_identity(self):
        y, y_pred = _mel(1, 3), _mel(1, 3, seed=2)
        post = LatentPosterior(mu=torch.randn(1, 2, 2), log_sigma=torch.randn(1, 2, 2))
        b = stage1_loss(y, y_pred, post, kl_weight=0.3)
        assert float(b.total) == pytest.approx(
            float(b.reconstruction) + 0.3 * float(b.kl), rel=1e-6
        )
        assert float(b.kl) >= -1e-6

    def test_kl_matches_monte_carlo(self):
        # closed form vs 1e5-sample estimate of E_q[log q - log p]
        g = torch.Generator().manual_seed(9)
        mu = torch.randn(1, 1, 4, generator=g)
        log_sigma = 0.5 * torch.randn(1, 1, 4, generator=g)
        post = LatentPosterior(mu=mu, log_sigma=log_sigma)
        closed = float(gaussian_standard_kl(post).sum())

        n = 100_000
        eps = torch.randn(n, 4, generator=g)
        z = mu.view(1, 4) + log_sigma.exp().view(1, 4) * eps
        log_q = (
            -0.5 * ((z - mu.view(1, 4)) / log_sigma.exp().view(1, 4)) ** 2
            - log_sigma.view(1, 4)
            - 0.5 * np.log(2 * np.pi)
        ).sum(dim=1)
        log_p = (-0.5 * z**2 - 0.5 * np.log(2 * np.pi)).sum(dim=1)
        mc = float((log_q - log_p).mean())
        assert closed == pytest.approx(mc, rel=0.01)


def test_forward_pipeline_shapes(model, tiny_model_config):
    torch.manual_seed(0)
    ids = torch.randint(3, 12, (2, 4))
    mask = torch.ones_like(ids, dtype=torch.bool)
    durations = [torch.tensor([2, 1, 2, 1]), torch.tensor([1, 1, 1, 3])]
    mel = _mel(2, 6)
    frame_mask = torch.ones(2, 6, dtype=torch.bool)
    y_pred, post, w, h, z = model(ids, mask, mel, frame_mask, durations)
    assert y_pred.shape == mel.shape
    assert post.mu.shape == (2, 4, tiny_model_config.model.d_z)
    assert w.shape == (2, 4, 6)
    assert z.shape == post.mu.shape
