"""Deterministic DDIM loops: encoder side picks the blend factors, decoder side replays them."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .correction import GammaTrack, Metric, SearchConfig, blend, quantize_gamma, solve_gamma
from .errors import NumericError, ProtocolError
from .rng import init_xT
from .schedule import NoiseSchedule
from .score import ScoreModel, epsilon_from_x0, predict_x0

__all__ = ["StepRecord", "RolloutTrace", "ddim_step", "encode_rollout", "decode_rollout", "init_xT"]


@dataclass
class StepRecord:
    t: int
    x_t_hash: str
    x0_diff: np.ndarray
    x0_e2e: np.ndarray
    gamma: float
    x0_c: np.ndarray
    eps: np.ndarray


@dataclass
class RolloutTrace:
    records: list[StepRecord] = field(default_factory=list)
    final: np.ndarray | None = None


def _digest(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()[:16]


def ddim_step(s: NoiseSchedule, x_t, x0_c, t: int) -> np.ndarray:
    """x_{t-1} = alpha(t-1) * x0_c + sigma(t-1) * eps_hat."""
    i = s.index(t)
    if i < 1:
        raise NumericError("ddim_step needs t >= 1")
    eps = epsilon_from_x0(s, x_t, x0_c, i)
    return s.alpha[i - 1] * np.asarray(x0_c) + s.sigma[i - 1] * eps


def _check_finite(x, what: str, t: int):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what} at step t={t}")


def encode_rollout(
    s: NoiseSchedule,
    model: ScoreModel,
    e2e,
    x0_star,
    metric: Metric,
    seed: int,
    y=None,
    search: SearchConfig | None = None,
) -> tuple[GammaTrack, RolloutTrace]:
    """Run t = T..1 with the original signal visible; returns the gamma track and trace.

    Each gamma is rounded to binary16 before it steers the trajectory so the
    decoder, which only sees the rounded value, follows the same path.
    """
    e2e = np.asarray(e2e, dtype=np.float64)
    x0_star = np.asarray(x0_star, dtype=np.float64)
    x = init_xT(seed, x0_star.shape)
    trace = RolloutTrace()
    gammas = []
    for t in range(s.T, 0, -1):
        x0_diff = predict_x0(model, x, y, t)
        _check_finite(x0_diff, "x0 prediction", t)
        gamma = quantize_gamma(solve_gamma(metric, x0_star, x0_diff, e2e, search))
        x0_c = blend(x0_diff, e2e, gamma)
        eps = epsilon_from_x0(s, x, x0_c, t)
        trace.records.append(StepRecord(t, _digest(x), x0_diff, e2e, gamma, x0_c, eps))
        x = s.alpha[t - 1] * x0_c + s.sigma[t - 1] * eps
        _check_finite(x, "x_t", t - 1)
        gammas.append(gamma)
    trace.final = x
    return GammaTrack(gammas), trace


def decode_rollout(s: NoiseSchedule, model: ScoreModel, e2e, gammas, seed: int, y=None) -> np.ndarray:
    """Replay the encoder trajectory from the received gammas (ordered t = T..1)."""
    e2e = np.asarray(e2e, dtype=np.float64)
    gammas = gammas if isinstance(gammas, GammaTrack) else GammaTrack(gammas)
    if len(gammas) != s.T:
        raise ProtocolError(f"received {len(gammas)} gammas for a {s.T}-step schedule")
    x = init_xT(seed, e2e.shape)
    for k, t in enumerate(range(s.T, 0, -1)):
        x0_diff = predict_x0(model, x, y, t)
        _check_finite(x0_diff, "x0 prediction", t)
        x0_c = blend(x0_diff, e2e, gammas[k])
        eps = epsilon_from_x0(s, x, x0_c, t)
        x = s.alpha[t - 1] * x0_c + s.sigma[t - 1] * eps
        _check_finite(x, "x_t", t - 1)
    return x
