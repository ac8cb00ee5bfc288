import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critns.errors import SnapshotFormatError
from critns.snapshot_io import (
    decode_fields,
    encode_fields,
    export_field,
    export_fields,
    ingest_field,
    ingest_fields,
    norms_csv,
    read_norms_csv,
    write_norms_csv,
)
from critns.spectral_field import GridSpec, SpectralField, random_band_limited


def test_round_trip_within_single_precision(tmp_path, random_field):
    export_field(tmp_path / "u.crns", random_field)
    back = ingest_field(tmp_path / "u.crns")
    assert back.grid == random_field.grid
    scale = np.max(np.abs(random_field.coeffs))
    assert np.max(np.abs(back.coeffs - random_field.coeffs)) <= 1e-7 * scale


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([10, 12, 16]))
def test_reencode_is_byte_identical(seed, n):
    f = random_band_limited(GridSpec(n), np.random.default_rng(seed), 3.0)
    once = encode_fields([f])
    assert encode_fields(decode_fields(once)) == once


def test_multi_field_file(tmp_path, grid16, rng):
    fs = [random_band_limited(grid16, rng, 3.0) for _ in range(3)]
    export_fields(tmp_path / "m.crns", fs)
    back = ingest_fields(tmp_path / "m.crns")
    assert len(back) == 3
    with pytest.raises(SnapshotFormatError):
        ingest_field(tmp_path / "m.crns")


def test_hand_built_little_endian_file(grid16):
    # one field with a single real cosine mode in x: u_y = cos x
    n = 16
    full = np.zeros((1, 3, n, n, n), "<c8")
    mid = n // 2
    full[0, 1, mid + 1, mid, mid] = 0.5
    full[0, 1, mid - 1, mid, mid] = 0.5
    data = struct.pack("<5sIdI", b"CRNS1", n, 2 * np.pi, 1) + full.tobytes()
    (f,) = decode_fields(data)
    v = np.fft.irfftn(f.coeffs[1], s=(n, n, n), axes=(0, 1, 2), norm="forward")
    x = np.arange(n) * 2 * np.pi / n
    np.testing.assert_allclose(v[:, 3, 5], np.cos(x), atol=1e-7)
    assert encode_fields([f]) == data


def test_truncated_and_corrupt(grid16, random_field):
    data = encode_fields([random_field])
    with pytest.raises(SnapshotFormatError):
        decode_fields(data[:-8])
    with pytest.raises(SnapshotFormatError):
        decode_fields(data[:10])
    with pytest.raises(SnapshotFormatError):
        decode_fields(b"XXXXX" + data[5:])
    bad = bytearray(data)
    bad[5:9] = struct.pack("<I", 7)
    with pytest.raises(SnapshotFormatError):
        decode_fields(bytes(bad))
    nan = bytearray(data)
    nan[-8:] = np.array([np.nan], "<c8").tobytes()
    with pytest.raises(SnapshotFormatError):
        decode_fields(bytes(nan))


def test_encode_rejects_mixed_grids(grid16, random_field):
    other = SpectralField.zeros(GridSpec(8))
    with pytest.raises(ValueError):
        encode_fields([random_field, other])
    with pytest.raises(ValueError):
        encode_fields([])


def test_norms_csv_round_trip(tmp_path, tg_short):
    text = norms_csv(tg_short)
    assert text == norms_csv(tg_short)
    write_norms_csv(tmp_path / "n.csv", tg_short)
    table = read_norms_csv(tmp_path / "n.csv")
    np.testing.assert_array_equal(table["t"], tg_short.times)
    np.testing.assert_array_equal(table["hdot_half"], tg_short.norm_series("hdot_half"))
