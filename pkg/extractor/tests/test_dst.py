"""Container writer: round-trips and interop with the main toolkit."""

import numpy as np
import pytest

from densestyle_extractor.dst import read_dst, write_dst


def test_f32_round_trip(tmp_path):
    arr = np.linspace(-2, 2, 24, dtype=np.float32).reshape(2, 3, 4)
    p = tmp_path / "t.dst"
    write_dst(arr, p)
    back = read_dst(p)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


def test_u16_round_trip(tmp_path):
    arr = np.array([[0, 1], [65535, 7]], dtype=np.uint16)
    p = tmp_path / "m.dst"
    write_dst(arr, p)
    np.testing.assert_array_equal(read_dst(p), arr)


def test_header_layout(tmp_path):
    p = tmp_path / "t.dst"
    write_dst(np.zeros(3, dtype=np.float32), p)
    raw = p.read_bytes()
    assert raw[:4] == b"DST1"
    assert raw[4] == 1 and raw[5] == 1 and raw[6:8] == b"\x00\x00"
    assert len(raw) == 8 + 8 + 12


def test_rejects_other_dtypes(tmp_path):
    with pytest.raises(ValueError):
        write_dst(np.zeros(3, dtype=np.float64), tmp_path / "t.dst")


def test_loads_in_primary_toolkit(tmp_path):
    densestyle = pytest.importorskip("densestyle")
    arr = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    p = tmp_path / "feat.dst"
    write_dst(arr, p)
    np.testing.assert_array_equal(densestyle.load_tensor(p), arr)
    np.testing.assert_array_equal(densestyle.load_feature_map(p), arr)
