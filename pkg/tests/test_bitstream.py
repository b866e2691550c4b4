import struct
import zlib

import numpy as np
import pytest

from corrdiff import bitstream
from corrdiff.bitstream import CorrDiffStream, bit_breakdown, bits_per_element, parse, serialize
from corrdiff.correction import GammaTrack
from corrdiff.errors import (
    BadMagicError, ChecksumError, ConfigurationError, ProtocolError, TruncationError, VersionError,
)
from corrdiff.latentcodec import LinearDCTAutoencoder
from corrdiff.pipeline import compress, gaussian_prior_model
from corrdiff.schedule import make_schedule


@pytest.fixture(scope="module")
def result():
    s = make_schedule("vp-cosine", 8)
    x = np.random.default_rng(0).uniform(-1, 1, (4, 4))
    ae = LinearDCTAutoencoder((4, 4), keep_ratio=0.5, step=0.05)
    return compress(x, gaussian_prior_model(s, (4, 4)), ae, seed=3)


def test_gamma_block_is_16_bytes_for_T8(result):
    data = result.data
    assert len(result.stream.gammas.to_bytes()) == 16
    assert data[-20:-4] == result.stream.gammas.to_bytes()
    assert bit_breakdown(result.stream).gamma_bits == 128


def test_round_trip(result):
    back = parse(result.data)
    assert back == result.stream
    assert serialize(back) == result.data


def test_header_layout(result):
    data = result.data
    assert data[:4] == b"CRDF" and data[4] == 1 and data[5] == 0
    T, seed, rng_id, rank = struct.unpack(">HQBB", data[6:18])
    assert (T, seed, rng_id, rank) == (8, 3, 1, 2)
    assert struct.unpack(">II", data[18:26]) == (4, 4)
    assert struct.unpack(">I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_accounting_identity(result):
    bb = bit_breakdown(result.stream)
    assert bb.total_bits == 8 * len(result.data)
    assert bb.header_bits > 0 and bb.latent_bits >= 64
    assert bits_per_element(result.data, 16) == 8 * len(result.data) / 16 == result.bpp


def test_every_single_byte_corruption_is_rejected(result):
    data = result.data
    rng = np.random.default_rng(1)
    for _ in range(1000):
        buf = bytearray(data)
        pos = int(rng.integers(len(buf)))
        buf[pos] ^= int(rng.integers(1, 256))
        with pytest.raises(ProtocolError):
            parse(bytes(buf))


@pytest.mark.parametrize("n", [0, 3, 4, 10, 20])
def test_truncation(result, n):
    with pytest.raises(TruncationError):
        parse(result.data[:n])


def test_truncated_tail_fails(result):
    with pytest.raises(ProtocolError):
        parse(result.data[:-1])


def test_version_and_magic(result):
    buf = bytearray(result.data)
    buf[4] = 0xFF
    with pytest.raises(VersionError):
        parse(bytes(buf))
    with pytest.raises(BadMagicError):
        parse(b"XXXX" + result.data[4:])


def test_checksum_error_type(result):
    buf = bytearray(result.data)
    buf[-10] ^= 1
    with pytest.raises(ChecksumError):
        parse(bytes(buf))


def test_inconsistent_body_with_valid_crc_is_rejected(result):
    # a well-checksummed stream whose declared T does not match the gamma block
    body = bytearray(result.data[:-4])
    body[6:8] = struct.pack(">H", 9)
    data = bytes(body) + struct.pack(">I", zlib.crc32(bytes(body)))
    with pytest.raises(ProtocolError):
        parse(data)


def test_serialize_rejects_bad_fields(result):
    s = result.stream
    bad = CorrDiffStream(s.schedule_kind, 7, s.seed, s.signal_shape, s.ae_id, s.ae_config,
                         s.entropy_params, s.coded_latent, s.gammas)
    with pytest.raises(ConfigurationError):
        serialize(bad)
    bad = CorrDiffStream("vp-sqrt", s.T, s.seed, s.signal_shape, s.ae_id, s.ae_config,
                         s.entropy_params, s.coded_latent, s.gammas)
    with pytest.raises(ConfigurationError):
        serialize(bad)


@pytest.mark.parametrize("T", [1, 4, 8, 32])
def test_gamma_bits_scale_with_T(T):
    s = make_schedule("vp-linear-beta", T)
    ae = LinearDCTAutoencoder((3, 3), keep_ratio=0.5)
    res = compress(np.full((3, 3), 0.2), gaussian_prior_model(s, (3, 3)), ae)
    assert bit_breakdown(res.stream).gamma_bits == 16 * T
    assert parse(res.data).gammas == res.stream.gammas
    assert isinstance(res.stream.gammas, GammaTrack)
    assert bitstream.parse(res.data).schedule_kind == "vp-linear-beta"
