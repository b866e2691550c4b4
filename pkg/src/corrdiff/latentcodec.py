"""The privileged end-to-end path: encoder E, quantizer Q, decoder D and the entropy model."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from . import mlp
from . import rangecoder
from .errors import ConfigurationError, DimensionError, NumericError, ProtocolError

SCALE_FLOOR = 0.05
MAX_CHANNELS = 4
RATE_FLOOR = 2.0**-16

AE_IDS = {"linear-dct": 0, "tiny-mlp": 1}
AE_NAMES = {v: k for k, v in AE_IDS.items()}


@dataclass(frozen=True)
class EntropyParams:
    """Per-channel Gaussian (mean, scale), held as binary16."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float16).ravel()
        s = np.asarray(self.scales, dtype=np.float16).ravel()
        if m.shape != s.shape:
            raise ConfigurationError("need one scale per channel mean")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s)) and np.all(s > 0)):
            raise ConfigurationError("entropy scales must be finite and positive")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", s)

    @property
    def n_channels(self) -> int:
        return self.means.size

    def __eq__(self, other):
        return (
            isinstance(other, EntropyParams)
            and self.means.tobytes() == other.means.tobytes()
            and self.scales.tobytes() == other.scales.tobytes()
        )

    def to_bytes(self) -> bytes:
        pairs = np.stack([self.means, self.scales], axis=1).astype(">f2")
        return struct.pack(">H", self.n_channels) + pairs.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple["EntropyParams", int]:
        """Parse from the start of ``data``; returns (params, bytes consumed)."""
        if len(data) < 2:
            raise ProtocolError("entropy parameter block truncated")
        (c,) = struct.unpack(">H", data[:2])
        end = 2 + 4 * c
        if len(data) < end:
            raise ProtocolError("entropy parameter block truncated")
        pairs = np.frombuffer(data[2:end], dtype=">f2").reshape(c, 2).astype(np.float16)
        try:
            return cls(pairs[:, 0], pairs[:, 1]), end
        except ConfigurationError as exc:
            raise ProtocolError(f"malformed entropy parameters: {exc}") from None


def channel_slices(n_values: int, n_channels: int) -> list[slice]:
    """Channels are contiguous chunks of the flattened latent (np.array_split layout)."""
    bounds = np.cumsum([0] + [len(c) for c in np.array_split(np.arange(n_values), n_channels)])
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _per_value_params(values: np.ndarray, ep: EntropyParams):
    n = values.size
    out = []
    for c, sl in enumerate(channel_slices(n, ep.n_channels)):
        pair = (float(ep.means[c]), float(ep.scales[c]))
        out.extend([pair] * (sl.stop - sl.start))
    return out


@dataclass(frozen=True)
class LatentCode:
    values: np.ndarray
    entropy_params: EntropyParams

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size and not np.issubdtype(v.dtype, np.integer):
            raise ConfigurationError("latent values must be integers")
        v = v.astype(np.int64)
        if v.size and (v.min() < rangecoder.VALUE_MIN or v.max() > rangecoder.VALUE_MAX):
            raise ConfigurationError("latent value outside [-2^15, 2^15 - 1]; use a coarser quantization step")
        if self.entropy_params.n_channels < 1 and v.size:
            raise ConfigurationError("latent needs at least one entropy channel")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return (
            isinstance(other, LatentCode)
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.entropy_params == other.entropy_params
        )


def fit_entropy_params(values, n_channels: int) -> EntropyParams:
    """Per-channel empirical mean and scale = max(std, 0.05)."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    means, scales = [], []
    for sl in channel_slices(flat.size, n_channels):
        chunk = flat[sl]
        means.append(chunk.mean() if chunk.size else 0.0)
        scales.append(max(chunk.std() if chunk.size else 0.0, SCALE_FLOOR))
    return EntropyParams(np.array(means), np.array(scales))


def quantize(z) -> np.ndarray:
    """Round half to even."""
    return np.rint(np.asarray(z, dtype=np.float64)).astype(np.int64)


class AutoencoderPair:
    ae_id = "base"

    def __init__(self, signal_shape, n_channels: int):
        self.signal_shape = tuple(int(d) for d in signal_shape)
        if not self.signal_shape or min(self.signal_shape) < 1:
            raise ConfigurationError(f"invalid signal shape {signal_shape!r}")
        self.n_channels = n_channels

    @property
    def latent_shape(self) -> tuple:
        raise NotImplementedError

    def analysis(self, x) -> np.ndarray:
        """E: signal -> real-valued latent."""
        raise NotImplementedError

    def synthesis(self, y_float) -> np.ndarray:
        """D on (possibly non-integer) latent values."""
        raise NotImplementedError

    def dequantize(self, y) -> np.ndarray:
        """Latent as the float conditioning vector fed to the score model."""
        values = y.values if isinstance(y, LatentCode) else y
        return np.asarray(values, dtype=np.float64).ravel()

    def config_bytes(self) -> bytes:
        raise NotImplementedError

    def _check_signal(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.signal_shape:
            raise ConfigurationError(f"signal shape {x.shape} does not match autoencoder shape {self.signal_shape}")
        return x


def _low_frequency_order(shape) -> np.ndarray:
    """Flat DCT coefficient indices sorted by total frequency, ties by raster order."""
    idx = np.indices(shape).reshape(len(shape), -1)
    return np.argsort(idx.sum(axis=0), kind="stable")


class LinearDCTAutoencoder(AutoencoderPair):
    """Orthonormal DCT, keep the lowest-frequency coefficients, uniform quantization."""

    ae_id = "linear-dct"

    def __init__(self, signal_shape, keep_ratio: float = 0.25, step: float = 0.1, n_channels: int | None = None):
        if not 0 < keep_ratio <= 1:
            raise ConfigurationError("keep_ratio must lie in (0, 1]")
        if not step > 0:
            raise ConfigurationError("quantization step must be positive")
        shape = tuple(int(d) for d in signal_shape)
        n = int(np.prod(shape)) if shape else 0
        self.n_keep = max(1, int(round(keep_ratio * n)))
        super().__init__(shape, n_channels or min(MAX_CHANNELS, self.n_keep))
        self.keep_ratio = float(keep_ratio)
        self.step = float(np.float32(step))
        self._order = _low_frequency_order(self.signal_shape)[: self.n_keep]

    @property
    def latent_shape(self):
        return (self.n_keep,)

    def analysis(self, x):
        x = self._check_signal(x)
        coef = dctn(x, norm="ortho").ravel()
        return coef[self._order] / self.step

    def synthesis(self, y_float):
        y_float = np.asarray(y_float, dtype=np.float64).ravel()
        if y_float.size != self.n_keep:
            raise ProtocolError(f"latent has {y_float.size} values, decoder expects {self.n_keep}")
        coef = np.zeros(int(np.prod(self.signal_shape)))
        coef[self._order] = y_float * self.step
        return idctn(coef.reshape(self.signal_shape), norm="ortho")

    def dequantize(self, y):
        return super().dequantize(y) * self.step

    def config_bytes(self) -> bytes:
        return struct.pack(">IfB", self.n_keep, self.step, self.n_channels)

    @classmethod
    def from_config(cls, signal_shape, data: bytes) -> "LinearDCTAutoencoder":
        if len(data) != 9:
            raise ProtocolError("linear-dct config must be 9 bytes")
        n_keep, step, n_channels = struct.unpack(">IfB", data)
        n = int(np.prod(signal_shape))
        if not 1 <= n_keep <= n or not step > 0 or n_channels < 1:
            raise ProtocolError("linear-dct config out of range")
        ae = cls(signal_shape, n_keep / n, step, n_channels)
        ae.n_keep = n_keep
        ae._order = _low_frequency_order(ae.signal_shape)[:n_keep]
        return ae


class TinyMLPAutoencoder(AutoencoderPair):
    """Learned E/D pair (one tanh hidden layer each) plus a learned factorized prior.

    Parameter layout: E weights, D weights, then per-channel prior means and
    log-scales (used only by training; coded streams carry fitted params).
    """

    ae_id = "tiny-mlp"

    def __init__(self, signal_shape, latent_dim: int = 8, hidden: int = 32, params=None, seed: int = 0,
                 n_channels: int | None = None):
        super().__init__(signal_shape, n_channels or min(MAX_CHANNELS, latent_dim))
        self.x_dim = int(np.prod(self.signal_shape))
        self.latent_dim = int(latent_dim)
        self.hidden = int(hidden)
        self.enc_sizes = (self.x_dim, self.hidden, self.latent_dim)
        self.dec_sizes = (self.latent_dim, self.hidden, self.x_dim)
        self.n_enc = mlp.n_params(self.enc_sizes)
        self.n_dec = mlp.n_params(self.dec_sizes)
        self.n_total = self.n_enc + self.n_dec + 2 * self.n_channels
        if params is None:
            rng = np.random.default_rng(seed)
            params = np.concatenate([
                mlp.init_params(self.enc_sizes, rng, gain=2.0),
                mlp.init_params(self.dec_sizes, rng),
                np.zeros(self.n_channels),
                np.zeros(self.n_channels),
            ])
        params = np.array(params, dtype=np.float64)
        if params.shape != (self.n_total,):
            raise ConfigurationError(f"tiny-mlp autoencoder expects {self.n_total} parameters, got {params.size}")
        self.params = params

    def with_params(self, params) -> "TinyMLPAutoencoder":
        return TinyMLPAutoencoder(self.signal_shape, self.latent_dim, self.hidden, params,
                                  n_channels=self.n_channels)

    @property
    def enc_params(self):
        return self.params[: self.n_enc]

    @property
    def dec_params(self):
        return self.params[self.n_enc: self.n_enc + self.n_dec]

    @property
    def prior(self):
        tail = self.params[self.n_enc + self.n_dec:]
        return tail[: self.n_channels], tail[self.n_channels:]

    @property
    def latent_shape(self):
        return (self.latent_dim,)

    def analysis(self, x):
        x = self._check_signal(x)
        out, _ = mlp.forward(self.enc_params, self.enc_sizes, x.reshape(1, -1))
        return out[0]

    def synthesis(self, y_float):
        y_float = np.asarray(y_float, dtype=np.float64).ravel()
        if y_float.size != self.latent_dim:
            raise ProtocolError(f"latent has {y_float.size} values, decoder expects {self.latent_dim}")
        out, _ = mlp.forward(self.dec_params, self.dec_sizes, y_float.reshape(1, -1))
        return out[0].reshape(self.signal_shape)

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.params.astype("<f4").tobytes()).digest()[:8]

    def config_bytes(self) -> bytes:
        return struct.pack(">HHB", self.latent_dim, self.hidden, self.n_channels) + self.fingerprint()

    def save(self, path) -> None:
        # 0 separates the encoder and decoder size lists
        sizes = (*self.enc_sizes, 0, *self.dec_sizes, 0, self.n_channels)
        mlp.save_params(path, self.params, sizes)

    @classmethod
    def load(cls, path, signal_shape) -> "TinyMLPAutoencoder":
        params, sizes = mlp.load_params(path)
        if len(sizes) != 9 or sizes[3] != 0 or sizes[7] != 0:
            raise ConfigurationError(f"{path} is not a tiny-mlp autoencoder file")
        x_dim, hidden, latent_dim = sizes[:3]
        if x_dim != int(np.prod(signal_shape)):
            raise ConfigurationError(f"{path} was trained for {x_dim}-element signals")
        return cls(signal_shape, latent_dim, hidden, params, n_channels=sizes[8])


def encode_latent(ae: AutoencoderPair, x0) -> LatentCode:
    z = ae.analysis(x0)
    if not np.all(np.isfinite(z)):
        raise NumericError("encoder produced non-finite latents")
    values = quantize(z)
    return LatentCode(values, fit_entropy_params(values, ae.n_channels))


def decode_latent(ae: AutoencoderPair, y: LatentCode) -> np.ndarray:
    if not isinstance(y, LatentCode):
        raise ProtocolError("decode_latent needs a LatentCode")
    if y.values.shape != ae.latent_shape:
        raise ProtocolError(f"latent shape {y.values.shape} does not match decoder {ae.latent_shape}")
    return ae.synthesis(y.values.astype(np.float64))


def rate_bits(values, means, scales) -> np.ndarray:
    """Per-element -log2 P(v) under Gaussian bins, floored at 2^-16."""
    p = rangecoder.bin_probability(values, means, scales)
    return -np.log2(np.maximum(p, RATE_FLOOR))


def estimate_rate(y: LatentCode) -> float:
    flat = y.values.ravel()
    if flat.size == 0:
        return 0.0
    ep = y.entropy_params
    means = np.empty(flat.size)
    scales = np.empty(flat.size)
    for c, sl in enumerate(channel_slices(flat.size, ep.n_channels)):
        means[sl] = float(ep.means[c])
        scales[sl] = float(ep.scales[c])
    return float(rate_bits(flat, means, scales).sum())


def range_encode(y: LatentCode) -> bytes:
    """Payload followed by a big-endian CRC32 of the payload."""
    flat = y.values.ravel()
    return rangecoder.encode_symbols(flat.tolist(), _per_value_params(flat, y.entropy_params))


def range_decode(data: bytes, shape, entropy_params: EntropyParams) -> LatentCode:
    shape = tuple(int(d) for d in shape)
    n = int(math.prod(shape))
    params = _per_value_params(np.zeros(n), entropy_params)
    values = rangecoder.decode_symbols(data, params)
    return LatentCode(np.array(values, dtype=np.int64).reshape(shape), entropy_params)


def autoencoder_from_config(ae_name: str, signal_shape, config: bytes, provided: AutoencoderPair | None = None):
    """Rebuild the decoder named in a stream header.

    Learned pairs carry only a fingerprint, so their weights must be provided.
    """
    if ae_name == "linear-dct":
        return LinearDCTAutoencoder.from_config(signal_shape, config)
    if ae_name == "tiny-mlp":
        if not isinstance(provided, TinyMLPAutoencoder):
            raise ProtocolError("stream uses a tiny-mlp autoencoder; its weights must be supplied")
        if provided.config_bytes() != config or provided.signal_shape != tuple(signal_shape):
            raise ProtocolError("supplied tiny-mlp autoencoder does not match the stream")
        return provided
    raise ProtocolError(f"unknown autoencoder {ae_name!r}")
