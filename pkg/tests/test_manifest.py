import numpy as np
import pytest

from prosodyvae.corpus import load_manifest, save_manifest
from prosodyvae.corpus.features import MelSpectrogram, PitchTrack
from prosodyvae.corpus.manifest import CorpusManifest, UtteranceRecord
from prosodyvae.errors import ManifestError


def _record(utt_id="u0", durations=(2, 3), label="c1"):
    t = int(sum(durations)) if durations is not None else 5
    mel = MelSpectrogram(
        frames=np.random.default_rng(1).standard_normal((t, 8)).astype(np.float32),
        frame_shift_ms=11.6,
        sample_rate_hz=22050,
    )
    pitch = PitchTrack(
        f0_hz=np.full(t, 120.0, dtype=np.float32), voiced=np.ones(t, dtype=bool)
    )
    return UtteranceRecord(
        utt_id=utt_id,
        token_ids=np.array([3, 4]),
        durations_frames=np.asarray(durations) if durations is not None else None,
        mel=mel,
        pitch=pitch,
        transcript="p000 p001",
        coarse_label=label,
    )


def test_roundtrip_equality(tmp_path, small_corpus):
    path = tmp_path / "manifest.tsv"
    save_manifest(small_corpus, path)
    assert load_manifest(path) == small_corpus


def test_duration_sum_violation_names_utterance():
    with pytest.raises(ManifestError, match="u7") as err:
        UtteranceRecord(
            utt_id="u7",
            token_ids=np.array([3, 4]),
            durations_frames=np.array([2, 2]),  # sum 4 != 5 frames
            mel=MelSpectrogram(
                frames=np.zeros((5, 8), dtype=np.float32),
                frame_shift_ms=11.6,
                sample_rate_hz=22050,
            ),
            pitch=PitchTrack(f0_hz=np.zeros(5), voiced=np.zeros(5, dtype=bool)),
        )
    assert err.value.utt_id == "u7"


def test_missing_durations_sets_prior_only_flag(tmp_path):
    manifest = CorpusManifest(records=[_record(), _record("u1", durations=None)])
    path = tmp_path / "m.tsv"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert loaded.prior_sampling_only
    assert loaded.records[0].durations_frames is not None
    assert loaded.records[1].durations_frames is None


def test_missing_file():
    with pytest.raises(ManifestError, match="not found"):
        load_manifest("/nonexistent/manifest.tsv")


def test_schema_version_checked(tmp_path):
    path = tmp_path / "m.tsv"
    save_manifest(CorpusManifest(records=[_record()]), path)
    lines = path.read_text().splitlines()
    lines[0] = lines[0].replace("v1", "v9")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match="schema"):
        load_manifest(path)


def test_missing_feature_file(tmp_path):
    path = tmp_path / "m.tsv"
    save_manifest(CorpusManifest(records=[_record()]), path)
    (tmp_path / "m_feats" / "u0.mel.plf").unlink()
    with pytest.raises(ManifestError, match="u0"):
        load_manifest(path)


def test_corrupted_duration_sum_on_load(tmp_path):
    path = tmp_path / "m.tsv"
    save_manifest(CorpusManifest(records=[_record(durations=(2, 3))]), path)
    text = path.read_text().replace("2 3", "2 2")
    path.write_text(text)
    with pytest.raises(ManifestError, match="u0"):
        load_manifest(path)


def test_optional_coarse_label(tmp_path):
    manifest = CorpusManifest(records=[_record(label=None)])
    path = tmp_path / "m.tsv"
    save_manifest(manifest, path)
    assert load_manifest(path).records[0].coarse_label is None
