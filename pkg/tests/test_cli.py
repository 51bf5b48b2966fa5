import json
from pathlib import Path

import numpy as np
import pytest

from prosodyvae import featio
from prosodyvae.cli import main
from prosodyvae.corpus import load_manifest

FAST_TRAIN = [
    "--set", "train.max_steps=12",
    "--set", "train.eval_every=6",
    "--set", "train.batch_size=4",
    "--set", "synthetic.n_utterances=10",
    "--set", "synthetic.token_vocab_size=8",
    "--set", "synthetic.tokens_per_utt_min=3",
    "--set", "synthetic.tokens_per_utt_max=5",
    "--set", "model.vocab_size=11",
    "--set", "model.d_h=8",
    "--set", "model.d_emb=8",
    "--set", "model.d_z=2",
    "--set", "model.d_g=4",
    "--set", "model.d_att=8",
    "--set", "model.posterior_hidden=8",
    "--set", "model.prenet_dim=8",
    "--set", "model.decoder_lstm_dim=8",
    "--set", "model.ref_conv_channels=4",
    "--set", "model.ref_lstm_dim=8",
    "--set", "model.prior_lstm_dim=8",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-synthetic", "--out", str(root / "corpus"), *FAST_TRAIN]) == 0
    assert main([
        "train", "--corpus", str(root / "corpus" / "manifest.tsv"),
        "--out", str(root / "ckpt"), *FAST_TRAIN,
    ]) == 0
    return root


def test_gen_synthetic_deterministic(tmp_path):
    args = ["--set", "synthetic.n_utterances=6", "--set", "synthetic.seed=3"]
    assert main(["gen-synthetic", "--out", str(tmp_path / "a"), *args]) == 0
    assert main(["gen-synthetic", "--out", str(tmp_path / "b"), *args]) == 0
    a = (tmp_path / "a" / "manifest.tsv").read_text()
    b = (tmp_path / "b" / "manifest.tsv").read_text()
    assert a == b
    ma = load_manifest(tmp_path / "a" / "manifest.tsv")
    mb = load_manifest(tmp_path / "b" / "manifest.tsv")
    assert ma == mb


def test_config_snapshot_written(workspace):
    snap = workspace / "corpus" / "config.txt"
    assert snap.exists()
    assert "synthetic.n_utterances = 10" in snap.read_text()


def test_train_stage2_without_checkpoint_is_usage_error(workspace, capsys):
    code = main([
        "train", "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(workspace / "bad"), "--set", "train.stage=stage2", *FAST_TRAIN,
    ])
    assert code == 2
    assert "train.stage1_checkpoint" in capsys.readouterr().err


def test_unknown_config_key_rejected(workspace, capsys):
    code = main([
        "train", "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(workspace / "bad2"), "--set", "train.bogus=1",
    ])
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def test_copy_synth_and_evaluate(workspace):
    out = workspace / "cs"
    assert main([
        "copy-synth", "--checkpoint", str(workspace / "ckpt"),
        "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(out), "--limit", "3",
    ]) == 0
    listing = (out / "outputs.tsv").read_text().splitlines()
    assert len(listing) == 3
    utt, rel = listing[0].split("\t")
    mat = featio.read_matrix(out / rel)
    assert mat.shape[1] == 80

    out2 = workspace / "eval"
    assert main([
        "evaluate", "--checkpoint", str(workspace / "ckpt"),
        "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--protocol", "posterior", "--out", str(out2),
    ]) == 0
    lines = (out2 / "report_posterior.jsonl").read_text().splitlines()
    kinds = [json.loads(l)["type"] for l in lines]
    assert kinds[0] == "header" and kinds[-1] == "aggregate"


def test_probe_command(workspace):
    out = workspace / "probe"
    assert main([
        "probe", "--checkpoint", str(workspace / "ckpt"),
        "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(out),
    ]) == 0
    result = json.loads((out / "probe.json").read_text())
    assert 0.0 <= result["probe_accuracy"] <= 1.0


def test_synthesize_requires_reference_decision(workspace, capsys):
    code = main([
        "synthesize", "--checkpoint", str(workspace / "ckpt"),
        "--tokens", "3 4 5", "--out", str(workspace / "syn_bad"),
    ])
    assert code == 1  # stage1 checkpoint cannot prior-sample


def test_sweep_single_dim_usage_error(workspace, capsys):
    code = main([
        "sweep", "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(workspace / "sweep_bad"), "--dims", "4",
    ])
    assert code == 2
    assert "dims" in capsys.readouterr().err


def test_missing_corpus_runtime_error(workspace):
    code = main([
        "train", "--corpus", str(workspace / "nope.tsv"),
        "--out", str(workspace / "bad3"), *FAST_TRAIN,
    ])
    assert code == 1


def test_stage2_then_synthesize_with_reference(workspace, tmp_path):
    assert main([
        "train", "--corpus", str(workspace / "corpus" / "manifest.tsv"),
        "--out", str(workspace / "ckpt2"), *FAST_TRAIN,
        "--set", "train.stage=stage2",
        "--set", f"train.stage1_checkpoint={workspace / 'ckpt'}",
    ]) == 0
    manifest = load_manifest(workspace / "corpus" / "manifest.tsv")
    ref = tmp_path / "ref.plf"
    featio.write_matrix(ref, manifest.records[0].mel.frames)
    out = workspace / "syn"
    assert main([
        "synthesize", "--checkpoint", str(workspace / "ckpt2"),
        "--tokens", "3 4 5", "--reference", str(ref),
        "--out", str(out), "--wav",
    ]) == 0
    mel = featio.read_matrix(out / "synthesized.mel.plf")
    durations = [int(d) for d in (out / "durations.txt").read_text().split()]
    assert mel.shape[0] == sum(durations)
    assert (out / "synthesized.wav").exists()


def test_prepare_roundtrip(tmp_path):
    assert main(["gen-synthetic", "--out", str(tmp_path / "c"),
                 "--set", "synthetic.n_utterances=5"]) == 0
    assert main([
        "prepare", "--manifest", str(tmp_path / "c" / "manifest.tsv"),
        "--mode", "pseudo", "--out", str(tmp_path / "prep"),
    ]) == 0
    inv_lines = (tmp_path / "prep" / "inventory.txt").read_text().splitlines()
    assert inv_lines[0] == "<pad>\t0"
    prepared = load_manifest(tmp_path / "prep" / "manifest.tsv")
    original = load_manifest(tmp_path / "c" / "manifest.tsv")
    assert len(prepared) == len(original)
