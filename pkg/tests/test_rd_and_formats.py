import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrdiff import mlp, tensorfile
from corrdiff.errors import FormatError
from corrdiff.rd import bd_rate, psnr, rd_curve

RATES = np.array([0.1, 0.2, 0.4, 0.8, 1.6])
QUAL = np.array([26.0, 28.0, 30.5, 33.0, 35.0])


def test_psnr():
    assert psnr(4.0) == 0.0
    assert psnr(0.04) == pytest.approx(20.0)
    assert psnr(0.0) == np.inf


def test_bd_rate_identity_and_doubling():
    assert bd_rate(RATES, QUAL, RATES, QUAL) == 0.0
    # exact: a constant log-rate offset integrates to ln 2
    assert bd_rate(RATES, QUAL, 2 * RATES, QUAL) == pytest.approx(100.0, abs=1e-9)
    assert bd_rate(RATES, QUAL, 0.5 * RATES, QUAL) == pytest.approx(-50.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(factor=st.floats(0.99, 1.01), seed=st.integers(0, 1000))
def test_bd_rate_antisymmetric_for_close_curves(factor, seed):
    rng = np.random.default_rng(seed)
    qb = QUAL + rng.uniform(-0.1, 0.1, 5)
    ab = bd_rate(RATES, QUAL, factor * RATES, qb)
    ba = bd_rate(factor * RATES, qb, RATES, QUAL)
    # exact in the log domain; in percent the gap grows like BD^2
    assert np.log1p(ab / 100) == pytest.approx(-np.log1p(ba / 100), abs=1e-12)
    assert abs(ab) <= 3.0
    assert abs(ab + ba) <= 0.1


@pytest.mark.parametrize("args", [
    (RATES[:3], QUAL[:3], RATES[:3], QUAL[:3]),
    (RATES, QUAL, RATES, QUAL + 20),
    (RATES, QUAL, -RATES, QUAL),
    (RATES, QUAL, RATES[:4], QUAL),
])
def test_bd_rate_input_errors(args):
    with pytest.raises(FormatError):
        bd_rate(*args)


def test_rd_curve_is_monotone_on_small_set():
    samples = np.random.default_rng(0).uniform(-1, 1, (2, 4, 4))
    pts = rd_curve(samples, keep_ratios=(1.0, 0.5, 0.25), T=4)
    assert [p.keep_ratio for p in pts] == [1.0, 0.5, 0.25]
    assert all(a.bpp > b.bpp for a, b in zip(pts, pts[1:]))
    assert all(p.bpp > 0 and p.distortion["psnr"] == psnr(p.distortion["mse"]) for p in pts)


def test_tensorfile_round_trip(tmp_path):
    x = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7
    data = tensorfile.to_bytes(x)
    assert data[:8] == b"CDTENSOR" and struct.unpack("<4I", data[8:24]) == (3, 2, 3, 4)
    np.testing.assert_array_equal(tensorfile.from_bytes(data), x)
    tensorfile.write_tensor(tmp_path / "t", x)
    np.testing.assert_array_equal(tensorfile.read_tensor(tmp_path / "t"), x)


@pytest.mark.parametrize("data", [
    b"",
    b"NOTATENSOR00",
    b"CDTENSOR" + struct.pack("<I", 0),
    b"CDTENSOR" + struct.pack("<II", 1, 0),
    b"CDTENSOR" + struct.pack("<II", 1, 3) + b"\0" * 8,
    b"CDTENSOR" + struct.pack("<II", 1, 1) + struct.pack("<f", float("nan")),
])
def test_tensorfile_rejects(data):
    with pytest.raises(FormatError):
        tensorfile.from_bytes(data)


def test_tensorfile_rejects_empty_shape():
    with pytest.raises(FormatError):
        tensorfile.to_bytes(np.zeros((0, 3)))


def test_param_file_layout(tmp_path):
    sizes = (3, 4, 2)
    params = mlp.init_params(sizes, np.random.default_rng(0))
    path = tmp_path / "p.bin"
    mlp.save_params(path, params, sizes)
    data = path.read_bytes()
    assert data[:4] == b"CDPM"
    version, offset, count = struct.unpack("<III", data[4:16])
    assert (offset, count) == (16 + 4 * params.size, 3)
    back, back_sizes = mlp.load_params(path)
    assert back_sizes == sizes
    np.testing.assert_array_equal(back, params.astype(np.float32))
    path.write_bytes(data[:-1])
    with pytest.raises(FormatError):
        mlp.load_params(path)
