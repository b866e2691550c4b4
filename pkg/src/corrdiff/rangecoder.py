"""Range coder over Gaussian-bin frequency tables.

Each channel (mean, scale) gets a frozen 16-bit frequency table covering
``round(mean) +- radius`` plus an escape symbol; escaped values follow as 16
raw bits. ``low`` is kept in a 64-bit container so carries can be detected
before they are propagated into already-emitted bytes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .errors import ChecksumError, ProtocolError

PROB_BITS = 16
TOTAL = 1 << PROB_BITS
MAX_RADIUS = 4095
RAW_BITS = 16
VALUE_MIN = -(1 << 15)
VALUE_MAX = (1 << 15) - 1

_TOP = 1 << 32
_MASK32 = _TOP - 1
_RENORM = 1 << 24


def bin_probability(values, mean, scale):
    """P(v) = Phi((v + 1/2 - mean)/scale) - Phi((v - 1/2 - mean)/scale), evaluated on the short tail."""
    v = np.abs(np.asarray(values, dtype=np.float64) - mean)
    return ndtr((0.5 - v) / scale) - ndtr((-0.5 - v) / scale)


class FrequencyTable:
    __slots__ = ("lo", "n", "freqs", "cum")

    def __init__(self, lo, freqs):
        self.lo = lo
        self.n = len(freqs) - 1  # last entry is the escape symbol
        self.freqs = tuple(int(f) for f in freqs)
        cum = [0]
        for f in self.freqs:
            cum.append(cum[-1] + f)
        self.cum = tuple(cum)


@lru_cache(maxsize=4096)
def frequency_table(mean: float, scale: float) -> FrequencyTable:
    center = int(math.floor(mean + 0.5))
    radius = min(int(math.ceil(8.0 * scale)) + 1, MAX_RADIUS)
    symbols = np.arange(center - radius, center + radius + 1)
    p = bin_probability(symbols, mean, scale)
    p = np.append(p, max(0.0, 1.0 - float(p.sum())))
    freqs = np.floor(p * (TOTAL - p.size)).astype(np.int64) + 1
    freqs[int(np.argmax(freqs))] += TOTAL - int(freqs.sum())
    return FrequencyTable(center - radius, freqs)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.out = bytearray()

    def _carry(self):
        i = len(self.out) - 1
        while self.out[i] == 0xFF:
            self.out[i] = 0
            i -= 1
        self.out[i] += 1

    def encode(self, cum: int, freq: int, total_bits: int):
        r = self.range >> total_bits
        self.low += r * cum
        self.range = r * freq
        if self.low >= _TOP:
            self.low -= _TOP
            self._carry()
        while self.range < _RENORM:
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK32
            self.range <<= 8

    def finish(self) -> bytes:
        # shortest value in [low, low + range) with trailing zero bytes; the
        # decoder pads the stream with zeros
        for k in range(1, 5):
            unit = 1 << (32 - 8 * k)
            v = -(-self.low // unit) * unit
            if v < self.low + self.range:
                break
        if v >= _TOP:
            v -= _TOP
            self._carry()
        self.out.extend(v.to_bytes(4, "big")[:k])
        return bytes(self.out).rstrip(b"\x00")


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def decode(self, cum, total_bits: int) -> int:
        """Decode one symbol against cumulative table ``cum`` (len n+1)."""
        r = self.range >> total_bits
        cf = min(self.code // r, (1 << total_bits) - 1)
        s = bisect_right(cum, cf) - 1
        self.code -= r * cum[s]
        self.range = r * (cum[s + 1] - cum[s])
        while self.range < _RENORM:
            self.code = ((self.code << 8) | self._byte()) & _MASK32
            self.range <<= 8
        return s

    def decode_raw(self, bits: int) -> int:
        r = self.range >> bits
        v = min(self.code // r, (1 << bits) - 1)
        self.code -= r * v
        self.range = r
        while self.range < _RENORM:
            self.code = ((self.code << 8) | self._byte()) & _MASK32
            self.range <<= 8
        return v


def _checksum(payload: bytes) -> bytes:
    import zlib

    return zlib.crc32(payload).to_bytes(4, "big")


def encode_symbols(values, channel_params) -> bytes:
    """Code ``values`` (flat ints) given a (mean, scale) per value; returns payload + CRC32."""
    enc = RangeEncoder()
    for v, (mean, scale) in zip(values, channel_params):
        tab = frequency_table(mean, scale)
        k = int(v) - tab.lo
        if 0 <= k < tab.n:
            enc.encode(tab.cum[k], tab.freqs[k], PROB_BITS)
        else:
            enc.encode(tab.cum[tab.n], tab.freqs[tab.n], PROB_BITS)
            raw = int(v) - VALUE_MIN
            enc.encode(raw >> 8, 1, 8)
            enc.encode(raw & 0xFF, 1, 8)
    payload = enc.finish()
    return payload + _checksum(payload)


def decode_symbols(data: bytes, channel_params) -> list[int]:
    if len(data) < 4:
        raise ProtocolError("coded latent shorter than its checksum")
    payload, crc = data[:-4], data[-4:]
    if _checksum(payload) != crc:
        raise ChecksumError("coded latent checksum mismatch")
    dec = RangeDecoder(payload)
    out = []
    for mean, scale in channel_params:
        tab = frequency_table(mean, scale)
        k = dec.decode(tab.cum, PROB_BITS)
        if k < tab.n:
            out.append(tab.lo + k)
        else:
            hi = dec.decode_raw(8)
            lo = dec.decode_raw(8)
            out.append(((hi << 8) | lo) + VALUE_MIN)
    return out
