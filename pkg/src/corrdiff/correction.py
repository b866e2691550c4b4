"""Per-step blend between the diffusion x0 estimate and the end-to-end decode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError, ProtocolError
from .schedule import NoiseSchedule

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GRID_POINTS = 33
FEATURE_SEED = 20240917
N_FEATURES = 64


class Metric:
    """Distance M(a, b) >= 0 between two signals.

    ``rows``/``grad_rows`` work on (B, d) arrays and are used by training.
    """

    name = "base"

    def __call__(self, a, b) -> float:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise DimensionError(f"metric arguments differ in shape: {a.shape} vs {b.shape}")
        return float(self.rows(a.reshape(1, -1), b.reshape(1, -1))[0])

    def rows(self, A, B) -> np.ndarray:
        raise NotImplementedError

    def grad_rows(self, A, B) -> np.ndarray:
        raise NotImplementedError


class MSEMetric(Metric):
    name = "mse"

    def rows(self, A, B):
        return np.mean((A - B) ** 2, axis=1)

    def grad_rows(self, A, B):
        return 2.0 * (A - B) / A.shape[1]


@lru_cache(maxsize=32)
def _feature_bank(d: int, n_features: int, seed: int) -> np.ndarray:
    W = np.random.default_rng([seed, d]).standard_normal((d, n_features)) / math.sqrt(d)
    W.setflags(write=False)
    return W


class FeatureMSEMetric(Metric):
    """MSE between tanh random-projection features; a cheap perceptual stand-in."""

    name = "feature-mse"

    def __init__(self, n_features: int = N_FEATURES, seed: int = FEATURE_SEED):
        self.n_features = n_features
        self.seed = seed

    def _features(self, A):
        W = _feature_bank(A.shape[1], self.n_features, self.seed)
        return np.tanh(3.0 * A @ W)

    def rows(self, A, B):
        return np.mean((self._features(A) - self._features(B)) ** 2, axis=1)

    def grad_rows(self, A, B):
        W = _feature_bank(A.shape[1], self.n_features, self.seed)
        fa = self._features(A)
        g = 2.0 * (fa - self._features(B)) / self.n_features
        return 3.0 * (g * (1.0 - fa**2)) @ W.T


METRICS = {"mse": MSEMetric, "feature-mse": FeatureMSEMetric}


def get_metric(name: str) -> Metric:
    try:
        return METRICS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None


def blend(x0_diff, x0_e2e, gamma: float) -> np.ndarray:
    x0_diff = np.asarray(x0_diff, dtype=np.float64)
    x0_e2e = np.asarray(x0_e2e, dtype=np.float64)
    if x0_diff.shape != x0_e2e.shape:
        raise DimensionError(f"cannot blend shapes {x0_diff.shape} and {x0_e2e.shape}")
    return gamma * x0_diff + (1.0 - gamma) * x0_e2e


@dataclass(frozen=True)
class SearchConfig:
    lo: float = -0.5
    hi: float = 1.5
    tol: float = 1e-4
    max_iters: int = 200

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise ConfigurationError("search bounds must be finite with lo < hi")
        if not self.tol > 0 or self.max_iters < 1:
            raise ConfigurationError("search tolerance must be positive and max_iters >= 1")


def golden_section(f, a: float, b: float, tol: float, max_iters: int):
    """Minimize a unimodal f on [a, b]; returns (x, f(x))."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iters:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    return x, f(x)


def solve_gamma(metric: Metric, x0_star, x0_diff, x0_e2e, search: SearchConfig | None = None) -> float:
    """argmin_gamma M(x0_star, gamma * x0_diff + (1 - gamma) * x0_e2e) over [lo, hi].

    Never returns a gamma whose blend is worse than the uncorrected gamma = 1.
    """
    search = search or SearchConfig()
    x0_star = np.asarray(x0_star, dtype=np.float64)
    x0_diff = np.asarray(x0_diff, dtype=np.float64)
    x0_e2e = np.asarray(x0_e2e, dtype=np.float64)
    if not (x0_star.shape == x0_diff.shape == x0_e2e.shape):
        raise DimensionError("x0_star, x0_diff and x0_e2e must share a shape")
    if np.array_equal(x0_diff, x0_e2e):
        return 1.0  # objective is constant along the line

    direction = x0_diff - x0_e2e

    def objective(g):
        return metric(x0_star, x0_e2e + g * direction)

    g_best, f_best = golden_section(objective, search.lo, search.hi, search.tol, search.max_iters)
    grid = np.linspace(search.lo, search.hi, GRID_POINTS)
    f_grid = np.array([objective(g) for g in grid])
    k = int(np.argmin(f_grid))
    if f_grid[k] < f_best:
        # not unimodal: refine around the best grid point
        h = grid[1] - grid[0]
        g_best, f_best = golden_section(
            objective, max(search.lo, grid[k] - h), min(search.hi, grid[k] + h), search.tol, search.max_iters
        )
        if f_grid[k] < f_best:
            g_best, f_best = float(grid[k]), float(f_grid[k])
    if not math.isfinite(f_best):
        raise NumericError("metric returned a non-finite value during the gamma search")
    if search.lo <= 1.0 <= search.hi and objective(1.0) <= f_best:
        return 1.0
    return float(g_best)


def quantize_gamma(gamma: float) -> float:
    """Round to the nearest binary16 value, as transmitted."""
    with np.errstate(over="ignore"):
        q = float(np.float16(gamma))
    if not math.isfinite(q):
        raise NumericError(f"gamma {gamma!r} is not representable as binary16")
    return q


def corrected_score(s: NoiseSchedule, x_t, x0_diff, x0_e2e, gamma: float, t: int) -> np.ndarray:
    """(alpha / sigma^2) * blend - x_t / sigma^2."""
    i = s.index(t)
    a, sg = float(s.alpha[i]), float(s.sigma[i])
    if sg <= 0.0:
        raise NumericError("corrected score is undefined at t = 0")
    return (a / sg**2) * blend(x0_diff, x0_e2e, gamma) - np.asarray(x_t, dtype=np.float64) / sg**2


class GammaTrack:
    """Blend factors for t = T..1, stored as binary16."""

    def __init__(self, gammas):
        g = np.asarray(gammas, dtype=np.float16).ravel()
        if g.size and not np.all(np.isfinite(g)):
            raise NumericError("gamma track contains non-finite values")
        g.setflags(write=False)
        self.gammas = g

    def __len__(self):
        return self.gammas.size

    def __iter__(self):
        return (float(v) for v in self.gammas)

    def __getitem__(self, k):
        return float(self.gammas[k])

    def __eq__(self, other):
        return isinstance(other, GammaTrack) and self.gammas.tobytes() == other.gammas.tobytes()

    def __repr__(self):
        return f"GammaTrack({[float(v) for v in self.gammas]})"

    def to_bytes(self) -> bytes:
        return self.gammas.astype(">f2").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, T: int) -> "GammaTrack":
        if len(data) != 2 * T:
            raise ProtocolError(f"gamma block has {len(data)} bytes, expected {2 * T}")
        return cls(np.frombuffer(data, dtype=">f2").astype(np.float16))
