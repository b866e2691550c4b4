"""Diffusion decoding corrected by a privileged end-to-end decoder.

The encoder runs the DDIM reverse process with the original signal visible
and, at every step, picks a blend factor between the diffusion x0 estimate
and an end-to-end decode of the transmitted latent. The factors ride in the
stream as binary16 values; the decoder replays the same trajectory.
"""

from .bitstream import CorrDiffStream, bit_breakdown, parse, serialize
from .correction import (
    FeatureMSEMetric, GammaTrack, MSEMetric, SearchConfig, blend, corrected_score, get_metric, solve_gamma,
)
from .errors import (
    BadMagicError, ChecksumError, ConfigurationError, CorrDiffError, DimensionError, FormatError, NumericError,
    ProtocolError, TruncationError, VersionError,
)
from .latentcodec import (
    EntropyParams, LatentCode, LinearDCTAutoencoder, TinyMLPAutoencoder, decode_latent, encode_latent,
    estimate_rate, range_decode, range_encode,
)
from .pipeline import compress, decompress, gaussian_prior_model
from .rd import bd_rate
from .sampler import ddim_step, decode_rollout, encode_rollout, init_xT
from .schedule import NoiseSchedule, diffusion_coeff, drift_coeff, forward_sample, make_schedule
from .score import GaussianMixtureOracle, ScoreModel, TinyScoreMLP, epsilon_from_x0, predict_x0, score_from_x0

__version__ = "0.1.0"
