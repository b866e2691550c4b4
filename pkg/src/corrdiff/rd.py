"""Rate-distortion points, sweeps and Bjontegaard delta rate."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .correction import FeatureMSEMetric
from .errors import FormatError
from .latentcodec import LinearDCTAutoencoder
from .pipeline import compress, decompress, gaussian_prior_model
from .schedule import make_schedule

DYNAMIC_RANGE = 2.0  # signals live in [-1, 1]
KEEP_RATIOS = (0.75, 0.5, 0.25, 0.125, 0.0625)
RD_COLUMNS = ("keep_ratio", "bpp", "mse", "psnr", "feature_mse", "wall_time")


def psnr(mse: float, peak: float = DYNAMIC_RANGE) -> float:
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


@dataclass
class RdPoint:
    bpp: float
    distortion: dict = field(default_factory=dict)  # mse, psnr
    perception: float = 0.0
    wall_time: float = 0.0
    keep_ratio: float | None = None

    def row(self) -> dict:
        return {
            "keep_ratio": self.keep_ratio, "bpp": self.bpp, "mse": self.distortion["mse"],
            "psnr": self.distortion["psnr"], "feature_mse": self.perception, "wall_time": self.wall_time,
        }


def evaluate_pair(reference, reconstruction) -> dict:
    ref = np.asarray(reference, dtype=np.float64)
    rec = np.asarray(reconstruction, dtype=np.float64)
    mse = float(np.mean((ref - rec) ** 2))
    return {"mse": mse, "psnr": psnr(mse), "feature_mse": FeatureMSEMetric()(ref, rec)}


def rd_curve(samples, keep_ratios=KEEP_RATIOS, T: int = 8, seed: int = 0, step: float = 0.1,
             metric: str = "mse", schedule_kind: str = "vp-cosine", prior_scale: float = 0.5) -> list[RdPoint]:
    """Compress and decompress every sample at each keep ratio; one averaged point per ratio."""
    samples = np.asarray(samples, dtype=np.float64)
    schedule = make_schedule(schedule_kind, T)
    model = gaussian_prior_model(schedule, samples.shape[1:], prior_scale)
    points = []
    for kr in keep_ratios:
        ae = LinearDCTAutoencoder(samples.shape[1:], keep_ratio=kr, step=step)
        bpps, mses, feats = [], [], []
        start = time.perf_counter()
        for k, x in enumerate(samples):
            res = compress(x, model, ae, seed=seed + k, metric=metric)
            rec = decompress(res.data, model)
            ev = evaluate_pair(x, rec)
            bpps.append(res.bpp)
            mses.append(ev["mse"])
            feats.append(ev["feature_mse"])
        mse = float(np.mean(mses))
        points.append(RdPoint(float(np.mean(bpps)), {"mse": mse, "psnr": psnr(mse)}, float(np.mean(feats)),
                              time.perf_counter() - start, kr))
    return points


def write_rd_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RD_COLUMNS)
        w.writeheader()
        for p in points:
            w.writerow(p.row())


def read_curve(path, quality: str = "psnr") -> tuple[np.ndarray, np.ndarray]:
    """Read (bpp, quality) columns from an RD CSV file."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    try:
        rate = np.array([float(r["bpp"]) for r in rows])
        qual = np.array([float(r[quality]) for r in rows])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: needs numeric 'bpp' and '{quality}' columns") from None
    return rate, qual


def bd_rate(rate_a, quality_a, rate_b, quality_b) -> float:
    """Average rate difference of curve B relative to curve A at equal quality, in percent.

    log-rate is fit as a cubic in quality for each curve and integrated over
    the overlapping quality interval.
    """
    ra, qa = np.asarray(rate_a, dtype=np.float64), np.asarray(quality_a, dtype=np.float64)
    rb, qb = np.asarray(rate_b, dtype=np.float64), np.asarray(quality_b, dtype=np.float64)
    for r, q in ((ra, qa), (rb, qb)):
        if r.ndim != 1 or r.shape != q.shape:
            raise FormatError("rate and quality must be 1-D arrays of equal length")
        if r.size < 4:
            raise FormatError("BD-rate needs at least 4 points per curve")
        if np.any(r <= 0) or not np.all(np.isfinite(q)):
            raise FormatError("rates must be positive and qualities finite")
    lo = max(qa.min(), qb.min())
    hi = min(qa.max(), qb.max())
    if not hi > lo:
        raise FormatError("curves have no overlapping quality range")
    pa = np.polyint(np.polyfit(qa, np.log(ra), 3))
    pb = np.polyint(np.polyfit(qb, np.log(rb), 3))
    avg = ((np.polyval(pb, hi) - np.polyval(pb, lo)) - (np.polyval(pa, hi) - np.polyval(pa, lo))) / (hi - lo)
    return float((math.exp(avg) - 1.0) * 100.0)
