"""Self-contained oracle checks behind ``corrdiff verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bitstream
from .correction import MSEMetric, SearchConfig, blend, corrected_score, solve_gamma
from .latentcodec import EntropyParams, LatentCode, LinearDCTAutoencoder, range_decode, range_encode
from .pipeline import compress, decompress, gaussian_prior_model
from .rd import bd_rate
from .schedule import diffusion_coeff, drift_coeff, make_schedule
from .score import TinyScoreMLP, score_from_x0
from . import toytrain


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_schedules(rng) -> CheckResult:
    worst = 0.0
    for kind in ("vp-cosine", "vp-linear-beta"):
        s = make_schedule(kind, 8)
        worst = max(worst, float(np.max(np.abs(s.alpha**2 + s.sigma**2 - 1))))
        h = 1e-5
        for t in range(1, 8):
            tau = s.grid[t]
            la = lambda x: np.log(s.alpha_at(x))
            s2 = lambda x: s.sigma_at(x) ** 2
            f_fd = (la(tau + h) - la(tau - h)) / (2 * h)
            g2_fd = (s2(tau + h) - s2(tau - h)) / (2 * h) - 2 * f_fd * s2(tau)
            worst = max(worst, abs(drift_coeff(s, t) - f_fd) / abs(f_fd))
            worst = max(worst, abs(diffusion_coeff(s, t) ** 2 - g2_fd) / abs(g2_fd))
    return CheckResult("schedule identities", worst < 1e-6, f"max deviation {worst:.2e}")


def check_corrected_score_algebra(rng, n: int = 200) -> CheckResult:
    s = make_schedule("vp-cosine", 8)
    worst = 0.0
    for _ in range(n):
        t = int(rng.integers(1, 9))
        x_t, xd, xe = rng.standard_normal((3, 16))
        g = float(rng.uniform(-0.5, 1.5))
        a, sg2 = s.alpha[t], s.sigma[t] ** 2
        chain = score_from_x0(s, x_t, xd, t) + (a / sg2) * ((g - 1) * xd + (1 - g) * xe)
        got = corrected_score(s, x_t, xd, xe, g, t)
        worst = max(worst, float(np.linalg.norm(got - chain) / np.linalg.norm(chain)))
    return CheckResult("corrected score algebra", worst <= 1e-12, f"max relative error {worst:.2e}")


def check_gamma_closed_form(rng, tol: float | None = None, n: int = 200) -> CheckResult:
    search = SearchConfig(tol=tol) if tol is not None else SearchConfig()
    metric = MSEMetric()
    worst = 0.0
    for _ in range(n):
        xd, xe, noise = rng.standard_normal((3, 32))
        g_true = rng.uniform(-0.3, 1.3)
        x_star = blend(xd, xe, g_true) + 0.3 * noise
        v = xd - xe
        closed = float(np.clip(np.dot(x_star - xe, v) / np.dot(v, v), search.lo, search.hi))
        worst = max(worst, abs(solve_gamma(metric, x_star, xd, xe, search) - closed))
    return CheckResult("gamma vs closed form", worst <= 1e-3, f"max |gamma - closed form| {worst:.2e}")


def check_codec_roundtrip(rng, n: int = 200) -> CheckResult:
    bad = 0
    for _ in range(n):
        c = int(rng.integers(1, 5))
        size = int(rng.integers(0, 40))
        means = rng.normal(0, 5, c)
        scales = np.exp(rng.uniform(np.log(0.05), np.log(50), c))
        ep = EntropyParams(means, scales)
        vals = np.rint(rng.normal(float(np.mean(means)), float(np.max(scales)), size)).astype(np.int64)
        y = LatentCode(vals, ep)
        if range_decode(range_encode(y), y.shape, ep) != y:
            bad += 1
    return CheckResult("range coder round trip", bad == 0, f"{bad}/{n} mismatches")


def check_protocol_roundtrip(rng) -> CheckResult:
    s = make_schedule("vp-cosine", 8)
    model = gaussian_prior_model(s, (4, 4))
    ae = LinearDCTAutoencoder((4, 4), keep_ratio=0.5, step=0.05)
    ok = True
    gamma_bits = None
    for k in range(5):
        x = rng.uniform(-1, 1, (4, 4))
        res = compress(x, model, ae, seed=k)
        ok &= bitstream.parse(res.data) == res.stream
        ok &= np.array_equal(decompress(res.data, model), res.reconstruction)
        gamma_bits = bitstream.bit_breakdown(res.stream).gamma_bits
    ok &= gamma_bits == 128
    return CheckResult("protocol round trip", bool(ok), f"bit-exact decode, gamma overhead {gamma_bits} bits")


def check_gradients(rng) -> CheckResult:
    s = make_schedule("vp-cosine", 8)
    model = TinyScoreMLP(s, (3,), 0, hidden=(5, 4), seed=int(rng.integers(1 << 31)))
    batch = rng.standard_normal((4, 3))
    cfg = toytrain.TrainConfig(seed=3)
    metric = MSEMetric()
    _, grad = toytrain.phase1_loss_and_grad(model, batch, s, metric, cfg)
    h = 1e-4
    worst = 0.0
    for i in range(model.params.size):
        e = np.zeros_like(model.params)
        e[i] = h
        lp = toytrain.loss_phase1(model.with_params(model.params + e), batch, s, metric, cfg).total
        lm = toytrain.loss_phase1(model.with_params(model.params - e), batch, s, metric, cfg).total
        fd = (lp - lm) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-12))
    return CheckResult("gradient check", worst < 1e-4, f"max relative error {worst:.2e}")


def check_bd_rate() -> CheckResult:
    rate = np.array([0.1, 0.2, 0.4, 0.8, 1.6])
    q = np.array([26.0, 28.0, 30.5, 33.0, 35.0])
    same = bd_rate(rate, q, rate, q)
    doubled = bd_rate(rate, q, 2 * rate, q)
    ok = abs(same) < 1e-9 and abs(doubled - 100.0) <= 1.0
    return CheckResult("bd-rate sanity", ok, f"identical {same:+.4f}%, doubled {doubled:+.4f}%")


def run_verification(seed: int = 0, gamma_tol: float | None = None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_schedules(rng),
        check_corrected_score_algebra(rng),
        check_gamma_closed_form(rng, gamma_tol),
        check_codec_roundtrip(rng),
        check_protocol_roundtrip(rng),
        check_gradients(rng),
        check_bd_rate(),
    ]
