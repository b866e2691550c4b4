"""``.crdf`` container: coded latent, gamma track and the metadata needed to replay the decode.

All multi-byte fields are big-endian::

    magic "CRDF" | version u8 | schedule kind u8 | T u16 | seed u64 | rng id u8
    | rank u8 | rank x dim u32 | ae id u8 | config length u16 | config bytes
    | entropy params (u16 count, count x (f16 mean, f16 scale))
    | latent length u32 | latent payload | latent CRC32
    | T x f16 gammas (t = T..1) | stream CRC32 over everything before it
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .correction import GammaTrack
from .errors import (
    BadMagicError, ChecksumError, ConfigurationError, ProtocolError, TruncationError, VersionError,
)
from .latentcodec import AE_IDS, AE_NAMES, EntropyParams
from .rng import RNG_ID
from .schedule import SCHEDULE_IDS, SCHEDULE_KINDS

MAGIC = b"CRDF"
VERSION = 1
_FIXED = struct.Struct(">4sBBHQB")  # magic, version, kind, T, seed, rng id
_MIN_SIZE = _FIXED.size + 1 + 1 + 2 + 2 + 4 + 4 + 4


@dataclass(eq=False)
class CorrDiffStream:
    schedule_kind: str
    T: int
    seed: int
    signal_shape: tuple
    ae_id: str
    ae_config: bytes
    entropy_params: EntropyParams
    coded_latent: bytes  # range-coder payload followed by its CRC32
    gammas: GammaTrack
    version: int = VERSION
    rng_id: int = RNG_ID

    def __eq__(self, other):
        if not isinstance(other, CorrDiffStream):
            return NotImplemented
        return all(getattr(self, f) == getattr(other, f) for f in (
            "schedule_kind", "T", "seed", "ae_id", "ae_config", "entropy_params",
            "coded_latent", "gammas", "version", "rng_id",
        )) and tuple(self.signal_shape) == tuple(other.signal_shape)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.signal_shape))


@dataclass(frozen=True)
class BitBreakdown:
    header_bits: int
    latent_bits: int
    gamma_bits: int

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.latent_bits + self.gamma_bits


def serialize(stream: CorrDiffStream) -> bytes:
    s = stream
    if s.schedule_kind not in SCHEDULE_IDS:
        raise ConfigurationError(f"unknown schedule kind {s.schedule_kind!r}")
    if s.ae_id not in AE_IDS:
        raise ConfigurationError(f"unknown autoencoder {s.ae_id!r}")
    if not 1 <= s.T <= 0xFFFF or len(s.gammas) != s.T:
        raise ConfigurationError(f"gamma track length {len(s.gammas)} does not match T={s.T}")
    if not 0 <= s.seed < 1 << 64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    shape = tuple(int(d) for d in s.signal_shape)
    if not 1 <= len(shape) <= 255 or min(shape) < 1 or max(shape) >= 1 << 32:
        raise ConfigurationError(f"invalid signal shape {shape}")
    if len(s.ae_config) > 0xFFFF or len(s.coded_latent) < 4:
        raise ConfigurationError("autoencoder config or coded latent block malformed")
    parts = [
        _FIXED.pack(MAGIC, s.version, SCHEDULE_IDS[s.schedule_kind], s.T, s.seed, s.rng_id),
        struct.pack(">B", len(shape)),
        struct.pack(f">{len(shape)}I", *shape),
        struct.pack(">BH", AE_IDS[s.ae_id], len(s.ae_config)),
        s.ae_config,
        s.entropy_params.to_bytes(),
        struct.pack(">I", len(s.coded_latent) - 4),
        s.coded_latent,
        s.gammas.to_bytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack(">I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.pos = 0
        self.end = end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncationError(f"stream truncated: needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size))


def parse(data: bytes) -> CorrDiffStream:
    data = bytes(data)
    if len(data) < 4:
        raise TruncationError(f"stream of {len(data)} bytes is too short")
    if data[:4] != MAGIC:
        raise BadMagicError("not a CRDF stream")
    if len(data) < 5:
        raise TruncationError("stream truncated before version byte")
    if data[4] != VERSION:
        raise VersionError(f"unsupported stream version {data[4]}")
    if len(data) < _MIN_SIZE:
        raise TruncationError(f"stream of {len(data)} bytes is shorter than the minimal header")
    body, crc = data[:-4], data[-4:]
    if zlib.crc32(body) != struct.unpack(">I", crc)[0]:
        raise ChecksumError("stream checksum mismatch")

    r = _Reader(data, len(body))
    _, version, kind_id, T, seed, rng_id = r.unpack(_FIXED.format)
    if kind_id not in SCHEDULE_KINDS:
        raise ProtocolError(f"unknown schedule id {kind_id}")
    if rng_id != RNG_ID:
        raise ProtocolError(f"unknown generator id {rng_id}")
    if T < 1:
        raise ProtocolError("stream declares zero diffusion steps")
    (rank,) = r.unpack(">B")
    shape = r.unpack(f">{rank}I")
    if rank < 1 or min(shape) < 1:
        raise ProtocolError(f"invalid signal shape {shape}")
    ae_num, cfg_len = r.unpack(">BH")
    if ae_num not in AE_NAMES:
        raise ProtocolError(f"unknown autoencoder id {ae_num}")
    ae_config = r.take(cfg_len)
    ep, used = EntropyParams.from_bytes(data[r.pos:r.end])
    r.take(used)
    (payload_len,) = r.unpack(">I")
    coded = r.take(payload_len + 4)
    gammas = GammaTrack.from_bytes(r.take(2 * T), T)
    if r.pos != r.end:
        raise ProtocolError(f"{r.end - r.pos} unexpected trailing bytes")
    return CorrDiffStream(
        schedule_kind=SCHEDULE_KINDS[kind_id], T=T, seed=seed, signal_shape=tuple(shape),
        ae_id=AE_NAMES[ae_num], ae_config=ae_config, entropy_params=ep, coded_latent=coded,
        gammas=gammas, version=version, rng_id=rng_id,
    )


def bit_breakdown(stream: CorrDiffStream) -> BitBreakdown:
    """Split 8 * len(serialize(stream)) into header, latent and gamma bits."""
    total = 8 * len(serialize(stream))
    latent = 8 * (4 + len(stream.coded_latent))
    gamma = 16 * stream.T
    return BitBreakdown(total - latent - gamma, latent, gamma)


def bits_per_element(data: bytes, n_elements: int) -> float:
    return 8.0 * len(data) / n_elements
