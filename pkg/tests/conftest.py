import copy

import numpy as np
import pytest
import torch

from prosodyvae.config import Config
from prosodyvae.corpus import SyntheticCorpusSpec, generate_synthetic_corpus

# collected acceptance-criterion outcomes, printed in the terminal summary
ACCEPTANCE_RESULTS = []


def record_criterion(number, name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))
    assert passed, f"criterion {number} ({name}) failed: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"[criterion {number}] {status} {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def base_config():
    return Config()


@pytest.fixture()
def tiny_model_config():
    cfg = Config()
    cfg.model.vocab_size = 12
    cfg.model.d_emb = 8
    cfg.model.d_h = 8
    cfg.model.d_z = 2
    cfg.model.d_g = 4
    cfg.model.d_att = 8
    cfg.model.attn_location_filters = 4
    cfg.model.attn_location_kernel = 5
    cfg.model.posterior_hidden = 8
    cfg.model.prenet_dim = 8
    cfg.model.decoder_lstm_dim = 8
    cfg.model.ref_conv_channels = 4
    cfg.model.ref_lstm_dim = 8
    cfg.model.ref_min_frames = 8
    cfg.model.prior_lstm_dim = 8
    cfg.model.dur_pred_hidden = 8
    return cfg


@pytest.fixture(scope="session")
def small_corpus():
    """24-utterance synthetic corpus shared by fast tests."""
    spec = SyntheticCorpusSpec(
        n_utterances=24,
        n_coarse_factors=4,
        f0_base_per_factor=(110.0, 150.0, 200.0, 260.0),
        rate_per_factor=(0.8, 1.0, 1.15, 1.3),
        token_vocab_size=12,
        tokens_per_utt_range=(4, 7),
        fine_jitter=5.0,
        seed=77,
    )
    return generate_synthetic_corpus(spec)


@pytest.fixture()
def toy_train_config(tiny_model_config):
    cfg = copy.deepcopy(tiny_model_config)
    cfg.seed = 5
    cfg.model.vocab_size = 15  # 12 synthetic tokens + 3 reserved
    cfg.train.max_steps = 50
    cfg.train.eval_every = 25
    cfg.train.batch_size = 8
    cfg.train.kl_warmup_steps = 20
    cfg.train.eval_mcd_utterances = 2
    return cfg


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
    np.random.seed(0)
