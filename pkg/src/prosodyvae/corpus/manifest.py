"""Corpus manifests: line-delimited utterance records plus sidecar feature files.

One record per line, tab-separated fields::

    utt_id  transcript  token_ids  durations  coarse_label  mel_path  pitch_path

token_ids and durations are space-separated integers; durations and
coarse_label may be "-". Feature paths are relative to the manifest's
directory and point at PLF1 matrices (pitch stored as [T x 2]: f0, voiced).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import featio
from ..errors import ManifestError
from .features import MelSpectrogram, PitchTrack

HEADER_PREFIX = "#prosodyvae-manifest"
SCHEMA_VERSION = 1


@dataclass(eq=False)
class UtteranceRecord:
    utt_id: str
    token_ids: np.ndarray  # [N] int
    durations_frames: np.ndarray | None  # [N] int, None when unaligned
    mel: MelSpectrogram
    pitch: PitchTrack
    transcript: str = ""
    coarse_label: str | None = None

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        if self.token_ids.ndim != 1 or self.token_ids.size < 1:
            raise ManifestError("token_ids must be a non-empty vector", self.utt_id)
        if self.durations_frames is not None:
            self.durations_frames = np.asarray(self.durations_frames, dtype=np.int64)
            if self.durations_frames.shape != self.token_ids.shape:
                raise ManifestError("durations must match token_ids length", self.utt_id)
            if (self.durations_frames < 0).any():
                raise ManifestError("durations must be non-negative", self.utt_id)
            if int(self.durations_frames.sum()) != self.mel.n_frames:
                raise ManifestError(
                    f"sum of durations {int(self.durations_frames.sum())} != mel frames {self.mel.n_frames}",
                    self.utt_id,
                )
        if self.pitch.n_frames != self.mel.n_frames:
            raise ManifestError("pitch and mel track lengths differ", self.utt_id)

    @property
    def n_tokens(self):
        return self.token_ids.size

    @property
    def n_frames(self):
        return self.mel.n_frames

    def __eq__(self, other):
        if not isinstance(other, UtteranceRecord):
            return NotImplemented
        same_durations = (
            (self.durations_frames is None and other.durations_frames is None)
            or (
                self.durations_frames is not None
                and other.durations_frames is not None
                and np.array_equal(self.durations_frames, other.durations_frames)
            )
        )
        return (
            self.utt_id == other.utt_id
            and self.transcript == other.transcript
            and self.coarse_label == other.coarse_label
            and np.array_equal(self.token_ids, other.token_ids)
            and same_durations
            and np.array_equal(self.mel.frames, other.mel.frames)
            and self.mel.sample_rate_hz == other.mel.sample_rate_hz
            and np.array_equal(self.pitch.f0_hz, other.pitch.f0_hz)
            and np.array_equal(self.pitch.voiced, other.pitch.voiced)
        )


@dataclass(eq=False)
class CorpusManifest:
    records: list = field(default_factory=list)
    sample_rate_hz: int = 22050
    frame_shift_ms: float = 1000.0 * 256 / 22050

    @property
    def prior_sampling_only(self):
        """True when some record lacks durations, so stage-1 training is impossible."""
        return any(r.durations_frames is None for r in self.records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, CorpusManifest):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and abs(self.frame_shift_ms - other.frame_shift_ms) < 1e-9
            and self.records == other.records
        )

    def coarse_labels(self):
        return sorted({r.coarse_label for r in self.records if r.coarse_label is not None})


def _no_tabs(value, what, utt_id):
    if "\t" in value or "\n" in value:
        raise ManifestError(f"{what} may not contain tabs or newlines", utt_id)
    return value


def save_manifest(manifest: CorpusManifest, path):
    """Write the manifest file and its sidecar feature directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    feat_dir = path.parent / (path.stem + "_feats")
    lines = [
        f"{HEADER_PREFIX} v{SCHEMA_VERSION}\t"
        f"sample_rate_hz={manifest.sample_rate_hz}\tframe_shift_ms={manifest.frame_shift_ms!r}"
    ]
    for rec in manifest.records:
        mel_rel = f"{feat_dir.name}/{rec.utt_id}.mel.plf"
        pitch_rel = f"{feat_dir.name}/{rec.utt_id}.pitch.plf"
        featio.write_matrix(path.parent / mel_rel, rec.mel.frames)
        pitch_mat = np.stack([rec.pitch.f0_hz, rec.pitch.voiced.astype(np.float32)], axis=1)
        featio.write_matrix(path.parent / pitch_rel, pitch_mat)
        durations = (
            " ".join(str(int(d)) for d in rec.durations_frames)
            if rec.durations_frames is not None
            else "-"
        )
        fields = [
            _no_tabs(rec.utt_id, "utt_id", rec.utt_id),
            _no_tabs(rec.transcript, "transcript", rec.utt_id),
            " ".join(str(int(t)) for t in rec.token_ids),
            durations,
            _no_tabs(rec.coarse_label, "coarse_label", rec.utt_id) if rec.coarse_label is not None else "-",
            mel_rel,
            pitch_rel,
        ]
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n")


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise ManifestError(f"{path} is not a manifest (missing header)")
    header = lines[0].split("\t")
    version = header[0].removeprefix(HEADER_PREFIX).strip()
    if version != f"v{SCHEMA_VERSION}":
        raise ManifestError(f"unsupported manifest schema {version!r}, expected v{SCHEMA_VERSION}")
    meta = dict(part.split("=", 1) for part in header[1:])
    sample_rate = int(meta["sample_rate_hz"])
    frame_shift = float(meta["frame_shift_ms"])

    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 7:
            raise ManifestError(f"expected 7 tab-separated fields, got {len(fields)}: {line[:80]!r}")
        utt_id, transcript, tokens_s, durations_s, label, mel_rel, pitch_rel = fields
        mel_path = path.parent / mel_rel
        pitch_path = path.parent / pitch_rel
        if not mel_path.exists() or not pitch_path.exists():
            raise ManifestError("feature file missing", utt_id)
        mel = MelSpectrogram(
            frames=featio.read_matrix(mel_path),
            frame_shift_ms=frame_shift,
            sample_rate_hz=sample_rate,
        )
        pitch_mat = featio.read_matrix(pitch_path)
        pitch = PitchTrack(f0_hz=pitch_mat[:, 0], voiced=pitch_mat[:, 1] > 0.5)
        token_ids = np.array([int(t) for t in tokens_s.split()], dtype=np.int64)
        durations = (
            None
            if durations_s == "-"
            else np.array([int(d) for d in durations_s.split()], dtype=np.int64)
        )
        records.append(
            UtteranceRecord(
                utt_id=utt_id,
                token_ids=token_ids,
                durations_frames=durations,
                mel=mel,
                pitch=pitch,
                transcript=transcript,
                coarse_label=None if label == "-" else label,
            )
        )
    return CorpusManifest(records=records, sample_rate_hz=sample_rate, frame_shift_ms=frame_shift)
