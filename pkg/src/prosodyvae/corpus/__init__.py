from .features import MelSpectrogram, PitchTrack, extract_mel, extract_pitch, mel_filterbank
from .manifest import CorpusManifest, UtteranceRecord, load_manifest, save_manifest
from .synthetic import SyntheticCorpusSpec, generate_synthetic_corpus

__all__ = [
    "MelSpectrogram",
    "PitchTrack",
    "extract_mel",
    "extract_pitch",
    "mel_filterbank",
    "CorpusManifest",
    "UtteranceRecord",
    "load_manifest",
    "save_manifest",
    "SyntheticCorpusSpec",
    "generate_synthetic_corpus",
]
