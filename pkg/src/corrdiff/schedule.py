"""Variance-preserving noise schedules on a discrete timestep grid.

The forward process is ``x_t = alpha(t) * x0 + sigma(t) * eps``. Timesteps are
integer grid indices ``0..T``; index ``i`` sits at continuous time ``i / T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError

COSINE_OFFSET = 0.008
LINEAR_BETA_MIN = 0.1
LINEAR_BETA_MAX = 30.0

# wire ids (1 byte in the stream header)
SCHEDULE_IDS = {"vp-cosine": 0, "vp-linear-beta": 1}
SCHEDULE_KINDS = {v: k for k, v in SCHEDULE_IDS.items()}


def _cosine_log_alpha(tau):
    c = math.pi / (2.0 * (1.0 + COSINE_OFFSET))
    return np.log(np.cos(c * (tau + COSINE_OFFSET))) - math.log(math.cos(c * COSINE_OFFSET))


def _cosine_drift(tau):
    c = math.pi / (2.0 * (1.0 + COSINE_OFFSET))
    return -c * np.tan(c * (tau + COSINE_OFFSET))


def _linear_log_alpha(tau):
    tau = np.asarray(tau, dtype=np.float64)
    return -0.5 * (LINEAR_BETA_MIN * tau + 0.5 * (LINEAR_BETA_MAX - LINEAR_BETA_MIN) * tau**2)


def _linear_drift(tau):
    tau = np.asarray(tau, dtype=np.float64)
    return -0.5 * (LINEAR_BETA_MIN + (LINEAR_BETA_MAX - LINEAR_BETA_MIN) * tau)


# kind -> (log alpha(tau), d log alpha / d tau)
_CLOSED_FORMS: dict[str, tuple[Callable, Callable]] = {
    "vp-cosine": (_cosine_log_alpha, _cosine_drift),
    "vp-linear-beta": (_linear_log_alpha, _linear_drift),
}


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    grid: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    _closed_form: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def T(self) -> int:
        return len(self.grid) - 1

    @property
    def variance_preserving(self) -> bool:
        return self.kind in _CLOSED_FORMS

    def index(self, t) -> int:
        """Validate a grid index."""
        if isinstance(t, (bool, np.bool_)) or not isinstance(t, (int, np.integer)):
            raise ConfigurationError(f"timestep must be an integer grid index, got {t!r}")
        if not 0 <= t <= self.T:
            raise ConfigurationError(f"timestep {t} outside grid 0..{self.T}")
        return int(t)

    def time(self, t) -> float:
        return float(self.grid[self.index(t)])

    def alpha_at(self, tau):
        """alpha at continuous time tau in [0, 1] (closed-form kinds only)."""
        log_alpha, _ = self._require_closed_form()
        return np.exp(log_alpha(tau))

    def sigma_at(self, tau):
        log_alpha, _ = self._require_closed_form()
        return np.sqrt(-np.expm1(2.0 * log_alpha(tau)))

    def drift_at(self, tau):
        """f(tau) = d log alpha / d tau."""
        _, drift = self._require_closed_form()
        return drift(tau)

    def diffusion_sq_at(self, tau):
        """g^2(tau) = d sigma^2 / d tau - 2 f(tau) sigma^2(tau)."""
        log_alpha, drift = self._require_closed_form()
        f = drift(tau)
        alpha_sq = np.exp(2.0 * log_alpha(tau))
        sigma_sq = -np.expm1(2.0 * log_alpha(tau))
        # VP: sigma^2 = 1 - alpha^2, so d sigma^2/d tau = -2 alpha^2 f
        dsigma_sq = -2.0 * alpha_sq * f
        return dsigma_sq - 2.0 * f * sigma_sq

    def _require_closed_form(self):
        if self._closed_form is None:
            raise ConfigurationError(f"schedule kind {self.kind!r} has no closed form")
        return self._closed_form

    @classmethod
    def from_table(cls, alpha, sigma, kind: str = "tabulated", validate: bool = True) -> "NoiseSchedule":
        """Schedule given directly by per-grid-point values.

        Coefficients fall back to central differences on the grid.
        """
        alpha = np.array(alpha, dtype=np.float64)
        sigma = np.array(sigma, dtype=np.float64)
        if alpha.ndim != 1 or alpha.shape != sigma.shape or len(alpha) < 2:
            raise ConfigurationError("alpha and sigma must be equal-length 1-D tables with >= 2 points")
        T = len(alpha) - 1
        grid = np.arange(T + 1, dtype=np.float64) / T
        s = cls(kind, _frozen(grid), _frozen(alpha), _frozen(sigma))
        if validate:
            check_invariants(s)
        return s


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def make_schedule(kind: str = "vp-cosine", T: int = 8) -> NoiseSchedule:
    if kind not in _CLOSED_FORMS:
        raise ConfigurationError(f"unsupported schedule kind {kind!r}; choose from {sorted(_CLOSED_FORMS)}")
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T!r}")
    if T > 0xFFFF:
        raise ConfigurationError("T must fit in 16 bits")
    log_alpha, drift = _CLOSED_FORMS[kind]
    grid = np.arange(T + 1, dtype=np.float64) / T
    la = np.asarray(log_alpha(grid), dtype=np.float64)
    la[0] = 0.0
    alpha = np.exp(la)
    sigma = np.sqrt(-np.expm1(2.0 * la))
    s = NoiseSchedule(kind, _frozen(grid), _frozen(alpha), _frozen(sigma), (log_alpha, drift))
    check_invariants(s)
    return s


def check_invariants(s: NoiseSchedule) -> None:
    a, sg = s.alpha, s.sigma
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(sg))):
        raise ConfigurationError("schedule contains non-finite values")
    if np.any(np.diff(a) >= 0) or np.any(np.diff(sg) <= 0):
        raise ConfigurationError("alpha must strictly decrease and sigma strictly increase")
    if abs(a[0] - 1.0) > 1e-12 or abs(sg[0]) > 1e-12:
        raise ConfigurationError("schedule must start noise-free: alpha(0)=1, sigma(0)=0")
    if a[-1] > 1e-3 or abs(sg[-1] - 1.0) > 1e-3:
        raise ConfigurationError("schedule must end at pure noise: alpha(T)<=1e-3, sigma(T)~1")
    if s.variance_preserving and np.max(np.abs(a**2 + sg**2 - 1.0)) > 1e-9:
        raise ConfigurationError("variance-preserving schedule violates alpha^2 + sigma^2 = 1")


def _grid_derivatives(s: NoiseSchedule):
    h = 1.0 / s.T
    with np.errstate(divide="ignore"):
        log_alpha = np.log(s.alpha)
    f = np.gradient(log_alpha, h)
    dsigma_sq = np.gradient(s.sigma**2, h)
    return f, dsigma_sq


def drift_coeff(s: NoiseSchedule, t: int) -> float:
    """f(t) = d log alpha / dt at grid index t."""
    i = s.index(t)
    if s._closed_form is not None:
        return float(s.drift_at(s.grid[i]))
    f, _ = _grid_derivatives(s)
    return float(f[i])


def diffusion_coeff(s: NoiseSchedule, t: int) -> float:
    """g(t) >= 0 with g^2 = d sigma^2/dt - 2 f sigma^2."""
    i = s.index(t)
    if s._closed_form is not None:
        g_sq = float(s.diffusion_sq_at(s.grid[i]))
    else:
        f, dsigma_sq = _grid_derivatives(s)
        g_sq = float(dsigma_sq[i] - 2.0 * f[i] * s.sigma[i] ** 2)
    return math.sqrt(max(g_sq, 0.0))


def forward_sample(s: NoiseSchedule, x0, t: int, noise) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise DimensionError(f"noise shape {noise.shape} does not match x0 shape {x0.shape}")
    i = s.index(t)
    return s.alpha[i] * x0 + s.sigma[i] * noise
