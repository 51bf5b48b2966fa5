import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosodyvae import featio


@given(
    rows=st.integers(min_value=1, max_value=40),
    cols=st.integers(min_value=1, max_value=40),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=40, deadline=None)
def test_roundtrip_bit_exact(tmp_path_factory, rows, cols, seed):
    path = tmp_path_factory.mktemp("plf") / "m.plf"
    m = np.random.default_rng(seed).standard_normal((rows, cols)).astype(np.float32)
    featio.write_matrix(path, m)
    back = featio.read_matrix(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, m)


def test_header_layout(tmp_path):
    path = tmp_path / "m.plf"
    featio.write_matrix(path, np.zeros((3, 2), dtype=np.float32))
    raw = path.read_bytes()
    assert raw[:4] == b"PLF1"
    assert int.from_bytes(raw[4:8], "little") == 3
    assert int.from_bytes(raw[8:12], "little") == 2
    assert len(raw) == 16 + 3 * 2 * 4


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "m.plf"
    featio.write_matrix(path, np.ones((4, 4), dtype=np.float32))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        featio.read_matrix(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.plf"
    featio.write_matrix(path, np.ones((2, 2), dtype=np.float32))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        featio.read_matrix(path)


def test_non_2d_rejected(tmp_path):
    with pytest.raises(ValueError):
        featio.write_matrix(tmp_path / "m.plf", np.zeros(5, dtype=np.float32))
