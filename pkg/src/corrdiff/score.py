"""Score models in the x0 parameterization.

A model maps ``(x_t, y, t)`` to the pseudo noise-free estimate
``x0_hat = E[x0 | x_t, y]``; the score and the noise estimate are derived
from it.
"""

from __future__ import annotations

import math

import numpy as np

from . import mlp
from .errors import ConfigurationError, DimensionError, NumericError
from .schedule import NoiseSchedule

T_EMBED_DIM = 16


class ScoreModel:
    """Base class. Subclasses implement :meth:`predict_x0`."""

    name = "base"

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    @property
    def params(self) -> np.ndarray:
        return np.zeros(0)

    def predict_x0(self, x_t, y, t: int) -> np.ndarray:
        raise NotImplementedError


def predict_x0(model: ScoreModel, x_t, y, t: int) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    if not np.all(np.isfinite(x_t)):
        raise NumericError(f"non-finite x_t passed to {model.name} at t={t}")
    out = np.asarray(model.predict_x0(x_t, y, t), dtype=np.float64)
    if out.shape != x_t.shape:
        raise DimensionError(f"{model.name} returned shape {out.shape} for input {x_t.shape}")
    return out


def _sigma_checked(s: NoiseSchedule, t: int) -> tuple[float, float]:
    i = s.index(t)
    a, sg = float(s.alpha[i]), float(s.sigma[i])
    if sg <= 0.0:
        raise NumericError(f"sigma({t}) = 0; score undefined at the noise-free endpoint")
    return a, sg


def score_from_x0(s: NoiseSchedule, x_t, x0_hat, t: int) -> np.ndarray:
    """grad log q_t(x_t) implied by an x0 estimate: (alpha*x0_hat - x_t) / sigma^2."""
    a, sg = _sigma_checked(s, t)
    return (a * np.asarray(x0_hat) - np.asarray(x_t)) / sg**2


def x0_from_score(s: NoiseSchedule, x_t, score, t: int) -> np.ndarray:
    """Tweedie: x0_hat = (x_t + sigma^2 * score) / alpha."""
    i = s.index(t)
    return (np.asarray(x_t) + s.sigma[i] ** 2 * np.asarray(score)) / s.alpha[i]


def epsilon_from_x0(s: NoiseSchedule, x_t, x0_hat, t: int) -> np.ndarray:
    a, sg = _sigma_checked(s, t)
    return (np.asarray(x_t) - a * np.asarray(x0_hat)) / sg


class GaussianMixtureOracle(ScoreModel):
    """Exact posterior mean for a prior sum_k w_k N(mean_k, var_k I).

    Conditioning ``y`` is ignored. ``x_t`` may carry leading batch axes in
    front of the signal shape.
    """

    name = "gmm-oracle"

    def __init__(self, schedule, weights, means, variances):
        super().__init__(schedule)
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0) or w.sum() <= 0:
            raise ConfigurationError("mixture weights must be a nonnegative 1-D array")
        self.weights = w / w.sum()
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.asarray(variances, dtype=np.float64)
        if self.means.shape[0] != len(w) or self.variances.shape != w.shape:
            raise ConfigurationError("need one mean and one variance per component")
        if np.any(self.variances <= 0):
            raise ConfigurationError("component variances must be positive")

    @property
    def signal_shape(self):
        return self.means.shape[1:]

    def predict_x0(self, x_t, y, t):
        i = self.schedule.index(t)
        a, sg = self.schedule.alpha[i], self.schedule.sigma[i]
        x_t = np.asarray(x_t, dtype=np.float64)
        nd = len(self.signal_shape)
        if x_t.shape[x_t.ndim - nd:] != self.signal_shape:
            raise DimensionError(f"x_t shape {x_t.shape} does not end with signal shape {self.signal_shape}")
        d = int(np.prod(self.signal_shape))
        sig_axes = tuple(range(x_t.ndim - nd, x_t.ndim))
        xs = np.expand_dims(x_t, x_t.ndim - nd)  # (..., 1, *signal)
        mk = self.means
        v = a**2 * self.variances + sg**2  # marginal variance per component
        vb = v.reshape((-1,) + (1,) * nd)
        sq = np.sum((xs - a * mk) ** 2, axis=tuple(ax + 1 for ax in sig_axes))
        logits = np.log(self.weights) - 0.5 * sq / v - 0.5 * d * np.log(v)
        logits -= logits.max(axis=-1, keepdims=True)
        r = np.exp(logits)
        r /= r.sum(axis=-1, keepdims=True)
        post = (a * self.variances.reshape(vb.shape) * xs + sg**2 * mk) / vb
        return np.sum(r.reshape(r.shape + (1,) * nd) * post, axis=x_t.ndim - nd)

    def log_marginal_grad(self, x_t, t):
        """Analytic grad log q_t(x_t) of the noised mixture."""
        i = self.schedule.index(t)
        a, sg = self.schedule.alpha[i], self.schedule.sigma[i]
        x0 = self.predict_x0(x_t, None, t)
        # per-component gradient -(x - a m_k)/v_k averaged by responsibilities
        # reduces to (a * E[x0|x_t] - x_t) / sigma^2
        return (a * x0 - np.asarray(x_t)) / sg**2


def timestep_embedding(tau, dim: int = T_EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding of continuous time(s) tau in [0, 1]."""
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(1000.0) * np.arange(half) / half)
    ang = 1000.0 * tau[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def score_layer_sizes(x_dim: int, y_dim: int, hidden=(64, 64)) -> tuple:
    return (x_dim + y_dim + T_EMBED_DIM, *hidden, x_dim)


def tiny_score_forward(params, x_t, y_embed, t_embed, hidden=(64, 64)) -> np.ndarray:
    """Two-hidden-layer perceptron over concatenated (x_t, y_embed, t_embed) rows."""
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    y_embed = np.asarray(y_embed, dtype=np.float64).reshape(x_t.shape[0], -1)
    t_embed = np.atleast_2d(np.asarray(t_embed, dtype=np.float64))
    if t_embed.shape[0] != x_t.shape[0]:
        raise ConfigurationError("t_embed rows must match x_t rows")
    sizes = score_layer_sizes(x_t.shape[1], y_embed.shape[1], hidden)
    out, _ = mlp.forward(params, sizes, np.concatenate([x_t, y_embed, t_embed], axis=1))
    return out


class TinyScoreMLP(ScoreModel):
    """Desk-scale learned x0 predictor conditioned on the dequantized latent."""

    name = "tiny-mlp"

    def __init__(self, schedule, signal_shape, y_dim: int, params=None, hidden=(64, 64), seed: int = 0):
        super().__init__(schedule)
        self.signal_shape = tuple(signal_shape)
        self.x_dim = int(np.prod(self.signal_shape))
        self.y_dim = int(y_dim)
        self.hidden = tuple(hidden)
        self.sizes = score_layer_sizes(self.x_dim, self.y_dim, self.hidden)
        if params is None:
            params = mlp.init_params(self.sizes, np.random.default_rng(seed), gain=0.5)
        mlp.unpack(params, self.sizes)
        self._params = np.array(params, dtype=np.float64)

    @property
    def params(self):
        return self._params

    def with_params(self, params) -> "TinyScoreMLP":
        return TinyScoreMLP(self.schedule, self.signal_shape, self.y_dim, params, self.hidden)

    def with_schedule(self, schedule) -> "TinyScoreMLP":
        return TinyScoreMLP(schedule, self.signal_shape, self.y_dim, self._params, self.hidden)

    def _y_rows(self, y, n):
        if self.y_dim == 0:
            return np.zeros((n, 0))
        if y is None:
            raise ConfigurationError("tiny-mlp score model needs the latent conditioning y")
        if hasattr(y, "values"):
            y = y.values
        return np.asarray(y, dtype=np.float64).reshape(n, self.y_dim)

    def forward_rows(self, x_rows, y_rows, t_idx):
        """Batched forward on (B, x_dim) rows with per-row timesteps; returns (out, cache)."""
        tau = self.schedule.grid[np.asarray(t_idx)]
        inp = np.concatenate([x_rows, y_rows, timestep_embedding(tau)], axis=1)
        return mlp.forward(self._params, self.sizes, inp)

    def predict_x0(self, x_t, y, t):
        i = self.schedule.index(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape != self.signal_shape:
            raise DimensionError(f"x_t shape {x_t.shape} != model signal shape {self.signal_shape}")
        out, _ = self.forward_rows(x_t.reshape(1, -1), self._y_rows(y, 1), np.array([i]))
        return out.reshape(self.signal_shape)

    def save(self, path) -> None:
        mlp.save_params(path, self._params, self.sizes)

    @classmethod
    def load(cls, path, schedule, signal_shape) -> "TinyScoreMLP":
        params, sizes = mlp.load_params(path)
        x_dim = int(np.prod(signal_shape))
        if len(sizes) < 3 or sizes[-1] != x_dim:
            raise ConfigurationError(f"weights in {path} do not fit signal shape {tuple(signal_shape)}")
        y_dim = sizes[0] - x_dim - T_EMBED_DIM
        if y_dim < 0:
            raise ConfigurationError(f"weights in {path} have an inconsistent input width")
        return cls(schedule, signal_shape, y_dim, params, hidden=sizes[1:-1])
