import torch
import pytest

from prosodyvae.checkpoint import load_checkpoint, save_checkpoint, state_hashes
from prosodyvae.errors import CorruptCheckpoint, StageMismatch
from prosodyvae.models import build_system


@pytest.fixture()
def system(tiny_model_config):
    torch.manual_seed(6)
    s = build_system(tiny_model_config.model, "stage1")
    s.eval()
    return s


def test_roundtrip_forward_equality(system, tiny_model_config, tmp_path):
    save_checkpoint(system, tiny_model_config, tmp_path / "ck", step=17,
                    history=[{"step": 1, "train_loss": 2.5}])
    reloaded, cfg, meta = load_checkpoint(tmp_path / "ck")
    assert meta["step"] == 17
    assert meta["history"] == [{"step": 1, "train_loss": 2.5}]
    assert cfg.model.d_z == tiny_model_config.model.d_z

    ids = torch.tensor([[3, 4, 5]])
    h1 = system.encode_tokens(ids, torch.ones_like(ids, dtype=torch.bool))
    h2 = reloaded.encode_tokens(ids, torch.ones_like(ids, dtype=torch.bool))
    assert torch.allclose(h1, h2, atol=1e-6)
    for name, tensor in system.state_dict().items():
        assert torch.equal(tensor, reloaded.state_dict()[name]), name


def test_truncated_blob(system, tiny_model_config, tmp_path):
    path = save_checkpoint(system, tiny_model_config, tmp_path / "ck")
    blob = path / "tensors.bin"
    blob.write_bytes(blob.read_bytes()[:-16])
    with pytest.raises(CorruptCheckpoint, match="truncated"):
        load_checkpoint(path)


def test_stage_mismatch(system, tiny_model_config, tmp_path):
    path = save_checkpoint(system, tiny_model_config, tmp_path / "ck")
    with pytest.raises(StageMismatch) as err:
        load_checkpoint(path, expect_stage="stage2")
    assert err.value.expected == "stage2"
    assert err.value.found == "stage1"


def test_version_check(system, tiny_model_config, tmp_path):
    path = save_checkpoint(system, tiny_model_config, tmp_path / "ck")
    meta = path / "checkpoint.meta"
    meta.write_text(meta.read_text().replace("format_version = 1", "format_version = 99"))
    with pytest.raises(CorruptCheckpoint, match="version"):
        load_checkpoint(path)


def test_wrong_architecture_names(system, tiny_model_config, tmp_path):
    path = save_checkpoint(system, tiny_model_config, tmp_path / "ck")
    index = path / "tensors.index"
    lines = index.read_text().splitlines()
    lines[0] = lines[0].replace(lines[0].split("\t")[0], "rogue.weight")
    index.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptCheckpoint, match="names"):
        load_checkpoint(path)


def test_missing_meta(tmp_path):
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(tmp_path)


def test_state_hashes_change_with_weights(system):
    before = state_hashes(system)
    with torch.no_grad():
        next(system.parameters()).add_(1.0)
    after = state_hashes(system)
    assert before != after
    assert set(before) == set(after)
