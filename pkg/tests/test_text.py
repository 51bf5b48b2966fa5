import numpy as np
import pytest

from prosodyvae import text
from prosodyvae.corpus.features import MelSpectrogram, PitchTrack
from prosodyvae.corpus.manifest import CorpusManifest, UtteranceRecord
from prosodyvae.errors import EmptyText, InvalidInput, UnknownSymbol


def _corpus(transcripts):
    records = []
    for i, tr in enumerate(transcripts):
        records.append(
            UtteranceRecord(
                utt_id=f"u{i}",
                token_ids=np.array([3]),
                durations_frames=np.array([2]),
                mel=MelSpectrogram(
                    frames=np.zeros((2, 4), dtype=np.float32),
                    frame_shift_ms=11.6,
                    sample_rate_hz=22050,
                ),
                pitch=PitchTrack(f0_hz=np.zeros(2), voiced=np.zeros(2, dtype=bool)),
                transcript=tr,
            )
        )
    return CorpusManifest(records=records)


def test_char_inventory_size():
    inv = text.build_inventory(_corpus(["ab", "ba"]), mode="char")
    assert len(inv) == 5  # a, b + pad/bos/eos
    assert inv.symbol_to_id["a"] == 3
    assert inv.symbol_to_id["b"] == 4


def test_inventory_deterministic():
    corpus = _corpus(["hello", "world"])
    a = text.build_inventory(corpus, mode="char")
    b = text.build_inventory(corpus, mode="char")
    assert a.symbol_to_id == b.symbol_to_id


def test_pseudo_mode():
    inv = text.build_inventory(_corpus(["AH B"]), mode="pseudo")
    assert len(inv) == 5
    assert text.encode_text("AH B", inv, mode="pseudo") == [3, 4]


def test_encode_examples():
    inv = text.SymbolInventory({"<pad>": 0, "<bos>": 1, "<eos>": 2, "a": 3, "b": 4})
    assert text.encode_text("ab", inv, mode="char") == [3, 4]
    assert text.encode_text("ab", inv, mode="char", add_bos_eos=True) == [1, 3, 4, 2]
    with pytest.raises(EmptyText):
        text.encode_text("", inv, mode="char")


def test_unknown_symbol_strict():
    inv = text.SymbolInventory({"a": 3})
    with pytest.raises(UnknownSymbol) as err:
        text.encode_text("ax", inv, mode="char")
    assert err.value.symbol == "x"
    assert err.value.position == 1


def test_unk_fallback():
    corpus = _corpus(["aa"])
    inv = text.build_inventory(corpus, mode="char", include_unk=True)
    ids = text.encode_text("ab", inv, mode="char")
    assert ids[0] == inv.symbol_to_id["a"]
    assert ids[1] == inv.symbol_to_id[text.UNK_SYMBOL]


def test_roundtrip_covered_text():
    inv = text.build_inventory(_corpus(["the cat", "sat down"]), mode="pseudo")
    for sample in ("the cat", "sat down", "cat sat"):
        assert text.decode_ids(text.encode_text(sample, inv, mode="pseudo"), inv, mode="pseudo") == sample
    inv_c = text.build_inventory(_corpus(["abcd"]), mode="char")
    assert text.decode_ids(text.encode_text("dcba", inv_c, mode="char"), inv_c, mode="char") == "dcba"


def test_inventory_file_roundtrip(tmp_path):
    inv = text.build_inventory(_corpus(["xyz"]), mode="char")
    path = tmp_path / "inventory.txt"
    inv.save(path)
    assert text.SymbolInventory.load(path).symbol_to_id == inv.symbol_to_id
    # file is sorted by id with tab separation
    first = path.read_text().splitlines()[0].split("\t")
    assert first == ["<pad>", "0"]


def test_empty_corpus_rejected():
    with pytest.raises(InvalidInput):
        text.build_inventory(CorpusManifest(records=[]), mode="char")


def test_reserved_ids_fixed():
    with pytest.raises(InvalidInput):
        text.SymbolInventory({"<pad>": 5})
