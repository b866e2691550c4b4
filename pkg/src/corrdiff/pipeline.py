"""End-to-end compress / decompress of one signal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bitstream
from .bitstream import CorrDiffStream
from .correction import Metric, SearchConfig, get_metric
from .errors import ProtocolError
from .latentcodec import (
    AutoencoderPair, LatentCode, autoencoder_from_config, decode_latent, encode_latent, range_decode, range_encode,
)
from .sampler import RolloutTrace, decode_rollout, encode_rollout
from .schedule import make_schedule
from .score import GaussianMixtureOracle, ScoreModel


@dataclass
class CompressResult:
    stream: CorrDiffStream
    data: bytes
    latent: LatentCode
    e2e: np.ndarray
    reconstruction: np.ndarray
    trace: RolloutTrace

    @property
    def bpp(self) -> float:
        return bitstream.bits_per_element(self.data, self.stream.n_elements)


def gaussian_prior_model(schedule, signal_shape, prior_scale: float = 0.5) -> GaussianMixtureOracle:
    """The weight-free default score model: an isotropic Gaussian prior around zero."""
    shape = tuple(signal_shape)
    return GaussianMixtureOracle(schedule, [1.0], np.zeros((1,) + shape), [prior_scale**2])


def compress(x0, model: ScoreModel, ae: AutoencoderPair, seed: int = 0, metric: Metric | str = "mse",
             search: SearchConfig | None = None) -> CompressResult:
    x0 = np.asarray(x0, dtype=np.float64)
    if isinstance(metric, str):
        metric = get_metric(metric)
    s = model.schedule
    y = encode_latent(ae, x0)
    e2e = decode_latent(ae, y)
    gammas, trace = encode_rollout(s, model, e2e, x0, metric, seed, y=ae.dequantize(y), search=search)
    stream = CorrDiffStream(
        schedule_kind=s.kind, T=s.T, seed=int(seed), signal_shape=x0.shape, ae_id=ae.ae_id,
        ae_config=ae.config_bytes(), entropy_params=y.entropy_params, coded_latent=range_encode(y),
        gammas=gammas,
    )
    return CompressResult(stream, bitstream.serialize(stream), y, e2e, trace.final, trace)


def decompress(stream, model: ScoreModel, ae: AutoencoderPair | None = None) -> np.ndarray:
    """Reconstruct from a parsed stream or raw bytes.

    ``model`` must be built on the schedule named in the stream header.
    """
    if not isinstance(stream, CorrDiffStream):
        stream = bitstream.parse(stream)
    s = model.schedule
    if (s.kind, s.T) != (stream.schedule_kind, stream.T):
        raise ProtocolError(
            f"model schedule {s.kind}/T={s.T} does not match stream {stream.schedule_kind}/T={stream.T}"
        )
    ae = autoencoder_from_config(stream.ae_id, stream.signal_shape, stream.ae_config, ae)
    y = range_decode(stream.coded_latent, ae.latent_shape, stream.entropy_params)
    e2e = decode_latent(ae, y)
    return decode_rollout(s, model, e2e, stream.gammas, stream.seed, y=ae.dequantize(y))


def schedule_for(stream: CorrDiffStream):
    return make_schedule(stream.schedule_kind, stream.T)
