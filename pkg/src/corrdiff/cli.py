"""Command-line interface.

Exit codes: 0 ok, 1 verification failure, 2 format/configuration, 3 protocol, 4 numeric.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bitstream, tensorfile
from .correction import METRICS, SearchConfig
from .data import bundled_sample_set
from .errors import ConfigurationError, CorrDiffError
from .latentcodec import LinearDCTAutoencoder, TinyMLPAutoencoder
from .pipeline import compress, decompress, gaussian_prior_model
from .rd import KEEP_RATIOS, bd_rate, evaluate_pair, rd_curve, read_curve, write_rd_csv
from .schedule import SCHEDULE_IDS, make_schedule
from .score import TinyScoreMLP
from .verify import run_verification


def _model_args(p):
    p.add_argument("--model", choices=("gaussian-prior", "tiny-mlp"), default="gaussian-prior")
    p.add_argument("--weights", help="score-model parameter file (tiny-mlp)")
    p.add_argument("--prior-scale", type=float, default=0.5, help="std of the gaussian-prior model")
    p.add_argument("--ae-weights", help="autoencoder parameter file (tiny-mlp autoencoder)")


def _build_model(args, schedule, shape):
    if args.model == "tiny-mlp":
        if not args.weights:
            raise ConfigurationError("--model tiny-mlp needs --weights")
        return TinyScoreMLP.load(args.weights, schedule, shape)
    return gaussian_prior_model(schedule, shape, args.prior_scale)


def _load_ae(args, shape):
    return TinyMLPAutoencoder.load(args.ae_weights, shape) if args.ae_weights else None


def cmd_compress(args) -> int:
    x = tensorfile.read_tensor(args.input).astype(np.float64)
    schedule = make_schedule(args.schedule, args.T)
    if args.ae == "tiny-mlp":
        if not args.ae_weights:
            raise ConfigurationError("--ae tiny-mlp needs --ae-weights")
        ae = _load_ae(args, x.shape)
    else:
        ae = LinearDCTAutoencoder(x.shape, keep_ratio=args.keep_ratio, step=args.step)
    model = _build_model(args, schedule, x.shape)
    search = SearchConfig(tol=args.gamma_tol)
    res = compress(x, model, ae, seed=args.seed, metric=args.metric, search=search)
    Path(args.output).write_bytes(res.data)
    bb = bitstream.bit_breakdown(res.stream)
    print(f"header_bits={bb.header_bits}")
    print(f"latent_bits={bb.latent_bits}")
    print(f"gamma_bits={bb.gamma_bits}")
    print(f"total_bits={bb.total_bits}")
    print(f"bpp={res.bpp:.6f}")
    return 0


def cmd_decompress(args) -> int:
    data = Path(args.input).read_bytes()
    stream = bitstream.parse(data)
    schedule = make_schedule(stream.schedule_kind, stream.T)
    model = _build_model(args, schedule, stream.signal_shape)
    x = decompress(stream, model, _load_ae(args, stream.signal_shape))
    tensorfile.write_tensor(args.output, x)
    return 0


def cmd_eval(args) -> int:
    ref = tensorfile.read_tensor(args.reference)
    rec = tensorfile.read_tensor(args.reconstruction)
    if ref.shape != rec.shape:
        raise ConfigurationError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    row = evaluate_pair(ref, rec)
    if args.stream:
        row["bpp"] = bitstream.bits_per_element(Path(args.stream).read_bytes(), ref.size)
    w = csv.DictWriter(sys.stdout, fieldnames=list(row))
    w.writeheader()
    w.writerow(row)
    return 0


def cmd_rd_curve(args) -> int:
    if args.inputs:
        samples = np.stack([tensorfile.read_tensor(p).astype(np.float64) for p in args.inputs])
    else:
        samples = bundled_sample_set()
    points = rd_curve(samples, args.keep_ratios, T=args.T, seed=args.seed, step=args.step, metric=args.metric,
                      schedule_kind=args.schedule, prior_scale=args.prior_scale)
    write_rd_csv(args.output, points)
    for p in points:
        print(f"keep_ratio={p.keep_ratio} bpp={p.bpp:.4f} psnr={p.distortion['psnr']:.3f}")
    return 0


def cmd_bd_rate(args) -> int:
    ra, qa = read_curve(args.curve_a, args.quality)
    rb, qb = read_curve(args.curve_b, args.quality)
    print(f"{bd_rate(ra, qa, rb, qb):.4f}")
    return 0


def cmd_verify(args) -> int:
    results = run_verification(seed=args.seed, gamma_tol=args.gamma_tol)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="encode a CDTENSOR file into a .crdf stream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--keep-ratio", type=float, default=0.25)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", choices=sorted(SCHEDULE_IDS), default="vp-cosine")
    p.add_argument("--ae", choices=("linear-dct", "tiny-mlp"), default="linear-dct")
    p.add_argument("--metric", choices=sorted(METRICS), default="mse")
    p.add_argument("--gamma-tol", type=float, default=1e-4)
    _model_args(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a .crdf stream into a CDTENSOR file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _model_args(p)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("eval", help="distortion and proxy-perception metrics between two tensors")
    p.add_argument("--reference", required=True)
    p.add_argument("--reconstruction", required=True)
    p.add_argument("--stream", help="stream file, to report bpp")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rd-curve", help="sweep the rate knob and write an RD CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--inputs", nargs="*", help="CDTENSOR files (default: bundled synthetic set)")
    p.add_argument("--keep-ratios", type=float, nargs="+", default=list(KEEP_RATIOS))
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", choices=sorted(SCHEDULE_IDS), default="vp-cosine")
    p.add_argument("--metric", choices=sorted(METRICS), default="mse")
    p.add_argument("--prior-scale", type=float, default=0.5)
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("bd-rate", help="Bjontegaard delta rate of curve B relative to curve A, in percent")
    p.add_argument("--curve-a", required=True)
    p.add_argument("--curve-b", required=True)
    p.add_argument("--quality", default="psnr", help="CSV column used as the quality axis")
    p.set_defaults(func=cmd_bd_rate)

    p = sub.add_parser("verify", help="run the oracle verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma-tol", type=float, default=None, help="override the gamma search tolerance (test hook)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorrDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
