"""Two-phase training of the tiny score network and autoencoder on synthetic data.

Phase 1 trains only the x0 predictor; phase 2 adds the end-to-end
reconstruction, its perceptual term and the rate of the noise-relaxed latent.
Gradients are hand-derived and checked against central differences in the
test suite. Time weighting is uniform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import mlp
from .correction import Metric
from .errors import ConfigurationError, NumericError
from .latentcodec import RATE_FLOOR, AutoencoderPair, TinyMLPAutoencoder, channel_slices, quantize
from .schedule import NoiseSchedule
from .score import ScoreModel, TinyScoreMLP, predict_x0, timestep_embedding

LAMBDA_R_GRID = (0.5, 0.2, 0.1, 0.05, 0.02)
TERMS = ("diffusion_mse", "m_mu", "e2e_mse", "m_e", "rate")
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class TrainConfig:
    lambda_mu: float = 0.16
    lambda_e: float = 0.64
    lambda_r: float = 0.1
    batch: int = 16
    iters: int = 200
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.lambda_mu, self.lambda_e, self.lambda_r) < 0:
            raise ConfigurationError("loss weights must be nonnegative")
        if self.iters < 1 or self.batch < 1:
            raise ConfigurationError("iters and batch must be >= 1")
        if self.lr < 0:
            raise ConfigurationError("learning rate must be nonnegative")


@dataclass
class LossReport:
    diffusion_mse: float
    m_mu: float
    e2e_mse: float = 0.0
    m_e: float = 0.0
    rate: float = 0.0
    weights: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        w = self.weights
        return (
            self.diffusion_mse + w.get("lambda_mu", 0.0) * self.m_mu + self.e2e_mse
            + w.get("lambda_e", 0.0) * self.m_e + w.get("lambda_r", 0.0) * self.rate
        )

    def row(self) -> dict:
        return {**{k: getattr(self, k) for k in TERMS}, "total": self.total}


def _phase1_weights(cfg):
    return {"lambda_mu": cfg.lambda_mu}


def _phase2_weights(cfg):
    return {"lambda_mu": cfg.lambda_mu, "lambda_e": cfg.lambda_e, "lambda_r": cfg.lambda_r}


def _rows(batch) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim < 2 or batch.shape[0] == 0:
        raise ConfigurationError("batch must be a nonempty array of signals")
    return batch.reshape(batch.shape[0], -1)


def _draws(cfg: TrainConfig, it: int, n: int, d: int, T: int, k: int = 0):
    """(t, eps, u) for one step; the same (t, eps) feed both phases."""
    rng = np.random.default_rng([cfg.seed, it])
    t_idx = rng.integers(1, T + 1, size=n)
    eps = rng.standard_normal((n, d))
    u = rng.uniform(-0.5, 0.5, size=(n, k))
    return t_idx, eps, u


def _noised(schedule: NoiseSchedule, x0, t_idx, eps):
    return schedule.alpha[t_idx][:, None] * x0 + schedule.sigma[t_idx][:, None] * eps


def _score_inputs(x_t, y_rows, schedule, t_idx):
    return np.concatenate([x_t, y_rows, timestep_embedding(schedule.grid[t_idx])], axis=1)


def _predict_rows(model: ScoreModel, x_t, y_rows, t_idx, schedule):
    if isinstance(model, TinyScoreMLP):
        out, _ = mlp.forward(model.params, model.sizes, _score_inputs(x_t, y_rows, schedule, t_idx))
        return out
    shape = getattr(model, "signal_shape", (x_t.shape[1],))
    return np.stack([
        predict_x0(model, x.reshape(shape), y, int(t)).ravel()
        for x, y, t in zip(x_t, y_rows if y_rows.shape[1] else [None] * len(x_t), t_idx)
    ])


def _conditioning(ae: AutoencoderPair | None, x0_rows, signal_shape):
    if ae is None:
        return np.zeros((x0_rows.shape[0], 0))
    return np.stack([ae.dequantize(quantize(ae.analysis(x.reshape(signal_shape)))) for x in x0_rows])


def loss_phase1(model: ScoreModel, batch, schedule: NoiseSchedule, metric_mu: Metric, cfg: TrainConfig,
                ae: AutoencoderPair | None = None, it: int = 0) -> LossReport:
    """Mean over the batch of ||mu(x_t, y, t) - x0||^2 / d + lambda_mu * M_mu(mu, x0)."""
    report, _ = _phase1(model, batch, schedule, metric_mu, cfg, ae, it, need_grad=False)
    return report


def phase1_loss_and_grad(model: TinyScoreMLP, batch, schedule, metric_mu, cfg, ae=None, it: int = 0):
    return _phase1(model, batch, schedule, metric_mu, cfg, ae, it, need_grad=True)


def _phase1(model, batch, schedule, metric_mu, cfg, ae, it, need_grad):
    x0 = _rows(batch)
    n, d = x0.shape
    t_idx, eps, _ = _draws(cfg, it, n, d, schedule.T)
    x_t = _noised(schedule, x0, t_idx, eps)
    y_rows = _conditioning(ae, x0, np.asarray(batch).shape[1:])
    if need_grad:
        if not isinstance(model, TinyScoreMLP):
            raise ConfigurationError("gradients need a TinyScoreMLP")
        inp = _score_inputs(x_t, y_rows, schedule, t_idx)
        pred, acts = mlp.forward(model.params, model.sizes, inp)
    else:
        pred = _predict_rows(model, x_t, y_rows, t_idx, schedule)
    report = LossReport(
        float(np.mean((pred - x0) ** 2)), float(np.mean(metric_mu.rows(pred, x0))), weights=_phase1_weights(cfg)
    )
    if not need_grad:
        return report, None
    g_out = 2.0 * (pred - x0) / (n * d) + cfg.lambda_mu * metric_mu.grad_rows(pred, x0) / n
    grad, _ = mlp.backward(model.params, model.sizes, acts, g_out)
    return report, grad


def _rate_terms(y, means, log_scales, n_channels, need_grad):
    """Bits of noisy latents y (B, k) under per-channel Gaussian bins, with gradients."""
    k = y.shape[1]
    mu = np.empty(k)
    rho = np.empty(k)
    chan = np.empty(k, dtype=np.int64)
    for c, sl in enumerate(channel_slices(k, n_channels)):
        mu[sl], rho[sl], chan[sl] = means[c], log_scales[c], c
    s = np.exp(rho)
    diff = y - mu
    w = np.abs(diff)
    a = (0.5 - w) / s
    b = (-0.5 - w) / s
    p = ndtr(a) - ndtr(b)
    floored = p < RATE_FLOOR
    bits = -np.log2(np.maximum(p, RATE_FLOOR))
    if not need_grad:
        return bits, None
    phi_a = np.exp(-0.5 * a**2) / math.sqrt(2.0 * math.pi)
    phi_b = np.exp(-0.5 * b**2) / math.sqrt(2.0 * math.pi)
    dbits_dp = np.where(floored, 0.0, -1.0 / (np.maximum(p, RATE_FLOOR) * _LN2))
    dp_dw = (phi_b - phi_a) / s
    dp_ds = (-a * phi_a + b * phi_b) / s
    sign = np.sign(diff)
    g_y = dbits_dp * dp_dw * sign
    g_mu_el = -g_y
    g_rho_el = dbits_dp * dp_ds * s
    g_means = np.bincount(chan, weights=g_mu_el.sum(axis=0), minlength=n_channels)
    g_logs = np.bincount(chan, weights=g_rho_el.sum(axis=0), minlength=n_channels)
    return bits, (g_y, g_means, g_logs)


def loss_phase2(model: ScoreModel, ae: AutoencoderPair, batch, schedule: NoiseSchedule, metric_mu: Metric,
                metric_e: Metric, cfg: TrainConfig, it: int = 0) -> LossReport:
    """Phase-1 loss + ||D(y~) - x0||^2/d + lambda_e M_e + lambda_r * bits per element.

    y~ = E(x0) + U(-1/2, 1/2) stands in for the rounded latent.
    """
    report, _ = _phase2(model, ae, batch, schedule, metric_mu, metric_e, cfg, it, need_grad=False)
    return report


def phase2_loss_and_grad(model: TinyScoreMLP, ae: TinyMLPAutoencoder, batch, schedule, metric_mu, metric_e,
                         cfg, it: int = 0):
    """Returns (report, grad w.r.t. score params, grad w.r.t. autoencoder params)."""
    report, grads = _phase2(model, ae, batch, schedule, metric_mu, metric_e, cfg, it, need_grad=True)
    return report, grads[0], grads[1]


def _phase2(model, ae, batch, schedule, metric_mu, metric_e, cfg, it, need_grad):
    x0 = _rows(batch)
    signal_shape = np.asarray(batch).shape[1:]
    n, d = x0.shape
    k = int(np.prod(ae.latent_shape))
    t_idx, eps, u = _draws(cfg, it, n, d, schedule.T, k)
    x_t = _noised(schedule, x0, t_idx, eps)
    learned = isinstance(ae, TinyMLPAutoencoder)
    if need_grad and not (learned and isinstance(model, TinyScoreMLP)):
        raise ConfigurationError("phase-2 gradients need a TinyScoreMLP and a TinyMLPAutoencoder")

    if learned:
        z, enc_acts = mlp.forward(ae.enc_params, ae.enc_sizes, x0)
    else:
        z = np.stack([ae.analysis(x.reshape(signal_shape)) for x in x0])
    y = z + u
    y_rows = np.stack([ae.dequantize(v) for v in y])

    if learned:
        rec, dec_acts = mlp.forward(ae.dec_params, ae.dec_sizes, y)
        means, log_scales = ae.prior
    else:
        rec = np.stack([ae.synthesis(v).ravel() for v in y])
        means = np.array([y[:, sl].mean() for sl in channel_slices(k, ae.n_channels)])
        log_scales = np.log([max(y[:, sl].std(), 0.05) for sl in channel_slices(k, ae.n_channels)])
    bits, rate_grads = _rate_terms(y, means, log_scales, ae.n_channels, need_grad)

    if need_grad:
        pred, s_acts = mlp.forward(model.params, model.sizes, _score_inputs(x_t, y_rows, schedule, t_idx))
    else:
        pred = _predict_rows(model, x_t, y_rows, t_idx, schedule)

    report = LossReport(
        diffusion_mse=float(np.mean((pred - x0) ** 2)),
        m_mu=float(np.mean(metric_mu.rows(pred, x0))),
        e2e_mse=float(np.mean((rec - x0) ** 2)),
        m_e=float(np.mean(metric_e.rows(rec, x0))),
        rate=float(np.mean(bits.sum(axis=1)) / d),
        weights=_phase2_weights(cfg),
    )
    if not need_grad:
        return report, None

    g_pred = 2.0 * (pred - x0) / (n * d) + cfg.lambda_mu * metric_mu.grad_rows(pred, x0) / n
    g_score, g_inp = mlp.backward(model.params, model.sizes, s_acts, g_pred)
    g_y = g_inp[:, d:d + k].copy()

    g_rec = 2.0 * (rec - x0) / (n * d) + cfg.lambda_e * metric_e.grad_rows(rec, x0) / n
    g_dec, g_y_dec = mlp.backward(ae.dec_params, ae.dec_sizes, dec_acts, g_rec)
    g_y += g_y_dec

    g_bits_y, g_means, g_logs = rate_grads
    scale = cfg.lambda_r / (n * d)
    g_y += scale * g_bits_y
    g_enc, _ = mlp.backward(ae.enc_params, ae.enc_sizes, enc_acts, g_y)
    g_ae = np.concatenate([g_enc, g_dec, scale * g_means, scale * g_logs])
    return report, (g_score, g_ae)


def grad_step(params, loss_evaluator, lr: float):
    """One plain gradient-descent step; ``loss_evaluator(params) -> (loss, grad)``."""
    params = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        raise NumericError("parameters are not finite")
    loss, grad = loss_evaluator(params)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return params - lr * grad, loss


def _batch(data, cfg, it):
    rng = np.random.default_rng([cfg.seed, it, 1])
    return data[rng.integers(0, len(data), size=cfg.batch)]


def train_phase1(model: TinyScoreMLP, data, schedule, metric_mu, cfg: TrainConfig, ae=None):
    """Returns (trained model, list of per-iteration loss rows)."""
    data = np.asarray(data, dtype=np.float64)
    params = model.params
    log = []
    for it in range(cfg.iters):
        batch = _batch(data, cfg, it)

        def evaluate(p):
            rep, g = phase1_loss_and_grad(model.with_params(p), batch, schedule, metric_mu, cfg, ae, it)
            return rep, g

        params, rep = grad_step(params, evaluate, cfg.lr)
        log.append({"iter": it, **rep.row()})
    return model.with_params(params), log


def train_phase2(model: TinyScoreMLP, ae: TinyMLPAutoencoder, data, schedule, metric_mu, metric_e,
                 cfg: TrainConfig):
    """Joint training of score network, autoencoder and prior; returns (model, ae, log)."""
    data = np.asarray(data, dtype=np.float64)
    n_score = model.params.size
    params = np.concatenate([model.params, ae.params])
    log = []
    for it in range(cfg.iters):
        batch = _batch(data, cfg, it)

        def evaluate(p):
            rep, gs, ga = phase2_loss_and_grad(
                model.with_params(p[:n_score]), ae.with_params(p[n_score:]), batch, schedule,
                metric_mu, metric_e, cfg, it,
            )
            return rep, np.concatenate([gs, ga])

        params, rep = grad_step(params, evaluate, cfg.lr)
        log.append({"iter": it, **rep.row()})
    return model.with_params(params[:n_score]), ae.with_params(params[n_score:]), log


def write_loss_csv(path, log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=("iter", *TERMS, "total"))
        w.writeheader()
        w.writerows(log)


def surrogate_rates(ae: TinyMLPAutoencoder, data, seed: int = 0) -> tuple[float, float]:
    """Mean bits per element under the learned prior: (noisy latents, rounded latents)."""
    x0 = _rows(data)
    z, _ = mlp.forward(ae.enc_params, ae.enc_sizes, x0)
    u = np.random.default_rng(seed).uniform(-0.5, 0.5, z.shape)
    means, log_scales = ae.prior
    noisy, _ = _rate_terms(z + u, means, log_scales, ae.n_channels, False)
    rounded, _ = _rate_terms(quantize(z).astype(np.float64), means, log_scales, ae.n_channels, False)
    d = x0.shape[1]
    return float(noisy.sum(axis=1).mean() / d), float(rounded.sum(axis=1).mean() / d)
