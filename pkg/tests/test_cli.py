import csv
import subprocess
import sys

import numpy as np
import pytest

from corrdiff import bitstream, tensorfile
from corrdiff.cli import main
from corrdiff.correction import GammaTrack
from corrdiff.data import bundled_sample_set
from corrdiff.latentcodec import LinearDCTAutoencoder, decode_latent, range_decode
from corrdiff.pipeline import compress, decompress, gaussian_prior_model
from corrdiff.sampler import decode_rollout
from corrdiff.schedule import make_schedule


@pytest.fixture
def signal(tmp_path):
    x = bundled_sample_set()[0]
    path = tmp_path / "x.cdt"
    tensorfile.write_tensor(path, x)
    return path, x.astype(np.float32)


def _kv(out):
    return dict(line.split("=") for line in out.strip().splitlines())


def test_compress_reports_128_gamma_bits(signal, tmp_path, capsys):
    path, x = signal
    out = tmp_path / "x.crdf"
    assert main(["compress", "--input", str(path), "--output", str(out), "--T", "8"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["gamma_bits"] == "128"
    size = out.stat().st_size
    assert int(kv["total_bits"]) == 8 * size
    assert int(kv["header_bits"]) + int(kv["latent_bits"]) + 128 == 8 * size
    assert float(kv["bpp"]) == pytest.approx(8 * size / x.size, abs=1e-6)


def test_round_trip_matches_encoder(signal, tmp_path):
    path, x = signal
    stream, rec = tmp_path / "x.crdf", tmp_path / "rec.cdt"
    assert main(["compress", "--input", str(path), "--output", str(stream), "--seed", "5"]) == 0
    assert main(["decompress", "--input", str(stream), "--output", str(rec)]) == 0
    s = make_schedule("vp-cosine", 8)
    res = compress(x.astype(np.float64), gaussian_prior_model(s, x.shape),
                   LinearDCTAutoencoder(x.shape, 0.25, 0.1), seed=5)
    assert stream.read_bytes() == res.data
    np.testing.assert_array_equal(tensorfile.read_tensor(rec), res.reconstruction.astype(np.float32))
    first = rec.read_bytes()
    assert main(["decompress", "--input", str(stream), "--output", str(rec)]) == 0
    assert rec.read_bytes() == first


def test_corrected_pipeline_beats_uncorrected_on_bundled_set():
    s = make_schedule("vp-cosine", 8)
    samples = bundled_sample_set()
    model = gaussian_prior_model(s, samples.shape[1:])
    ae = LinearDCTAutoencoder(samples.shape[1:], 0.25, 0.1)
    corrected, plain = [], []
    for k, x in enumerate(samples):
        res = compress(x, model, ae, seed=k)
        rec = decompress(res.data, model)
        base = decode_rollout(s, model, res.e2e, np.ones(8), k, y=ae.dequantize(res.latent))
        corrected.append(np.mean((rec - x) ** 2))
        plain.append(np.mean((base - x) ** 2))
    assert np.mean(corrected) <= np.mean(plain)


def test_zero_length_input_is_format_error(tmp_path, capsys):
    empty = tmp_path / "empty.cdt"
    empty.write_bytes(b"")
    assert main(["compress", "--input", str(empty), "--output", str(tmp_path / "o.crdf")]) == 2
    assert "empty" in capsys.readouterr().err
    assert not (tmp_path / "o.crdf").exists()


def test_missing_input_is_format_error(tmp_path):
    assert main(["compress", "--input", str(tmp_path / "nope"), "--output", str(tmp_path / "o")]) == 2


def test_corrupted_stream_exit_3_without_output(signal, tmp_path):
    path, _ = signal
    stream, rec = tmp_path / "x.crdf", tmp_path / "rec.cdt"
    main(["compress", "--input", str(path), "--output", str(stream)])
    data = bytearray(stream.read_bytes())
    data[30] ^= 0x55
    stream.write_bytes(bytes(data))
    assert main(["decompress", "--input", str(stream), "--output", str(rec)]) == 3
    assert not rec.exists()


def test_gamma_zero_stream_decodes_to_end_to_end(signal, tmp_path):
    path, x = signal
    s = make_schedule("vp-cosine", 8)
    ae = LinearDCTAutoencoder(x.shape, 0.25, 0.1)
    res = compress(x.astype(np.float64), gaussian_prior_model(s, x.shape), ae)
    st = res.stream
    zero = bitstream.CorrDiffStream(st.schedule_kind, st.T, st.seed, st.signal_shape, st.ae_id, st.ae_config,
                                    st.entropy_params, st.coded_latent, GammaTrack(np.zeros(8)))
    stream, rec = tmp_path / "zero.crdf", tmp_path / "rec.cdt"
    stream.write_bytes(bitstream.serialize(zero))
    assert main(["decompress", "--input", str(stream), "--output", str(rec)]) == 0
    y = range_decode(st.coded_latent, ae.latent_shape, st.entropy_params)
    e2e = decode_latent(ae, y)
    full = decompress(zero, gaussian_prior_model(s, x.shape))
    np.testing.assert_allclose(full, e2e, atol=1e-9)
    # the tensor file stores float32
    np.testing.assert_array_equal(tensorfile.read_tensor(rec), full.astype(np.float32))


def _write_curve(path, rates, psnrs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bpp", "psnr"])
        w.writerows(zip(rates, psnrs))


def test_bd_rate_command(tmp_path, capsys):
    rates = [0.1, 0.2, 0.4, 0.8, 1.6]
    q = [26.0, 28.0, 30.5, 33.0, 35.0]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    _write_curve(a, rates, q)
    _write_curve(b, [2 * r for r in rates], q)
    _write_curve(c, rates, [50 + v for v in q])
    assert main(["bd-rate", "--curve-a", str(a), "--curve-b", str(a)]) == 0
    assert float(capsys.readouterr().out) == 0.0
    assert main(["bd-rate", "--curve-a", str(a), "--curve-b", str(b)]) == 0
    assert abs(float(capsys.readouterr().out) - 100) <= 1
    assert main(["bd-rate", "--curve-a", str(a), "--curve-b", str(c)]) == 2


def test_verify_passes_and_is_deterministic(capsys):
    assert main(["verify", "--seed", "0"]) == 0
    first = capsys.readouterr().out
    assert first.count("PASS") == 7 and "FAIL" not in first
    assert main(["verify", "--seed", "0"]) == 0
    assert capsys.readouterr().out == first


def test_verify_negative_control(capsys):
    assert main(["verify", "--gamma-tol", "10"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  gamma vs closed form" in out


def test_eval_command(signal, tmp_path, capsys):
    path, x = signal
    stream, rec = tmp_path / "x.crdf", tmp_path / "rec.cdt"
    main(["compress", "--input", str(path), "--output", str(stream)])
    main(["decompress", "--input", str(stream), "--output", str(rec)])
    capsys.readouterr()
    assert main(["eval", "--reference", str(path), "--reconstruction", str(rec), "--stream", str(stream)]) == 0
    row = next(csv.DictReader(capsys.readouterr().out.splitlines()))
    mse = float(np.mean((tensorfile.read_tensor(rec).astype(np.float64) - x.astype(np.float64)) ** 2))
    assert float(row["mse"]) == pytest.approx(mse, rel=1e-12)
    assert float(row["psnr"]) == pytest.approx(10 * np.log10(4 / mse), rel=1e-12)
    assert float(row["bpp"]) == 8 * stream.stat().st_size / x.size


def test_eval_shape_mismatch(tmp_path):
    a, b = tmp_path / "a.cdt", tmp_path / "b.cdt"
    tensorfile.write_tensor(a, np.zeros((2, 2)))
    tensorfile.write_tensor(b, np.zeros((2, 3)))
    assert main(["eval", "--reference", str(a), "--reconstruction", str(b)]) == 2


def test_rd_curve_command(tmp_path, capsys):
    out = tmp_path / "rd.csv"
    assert main(["rd-curve", "--output", str(out), "--keep-ratios", "0.5", "0.25", "0.125", "0.0625"]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [float(r["keep_ratio"]) for r in rows] == [0.5, 0.25, 0.125, 0.0625]
    assert list(rows[0]) == ["keep_ratio", "bpp", "mse", "psnr", "feature_mse", "wall_time"]
    bpp = [float(r["bpp"]) for r in rows]
    assert all(a > b for a, b in zip(bpp, bpp[1:]))
    assert main(["bd-rate", "--curve-a", str(out), "--curve-b", str(out)]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "corrdiff", "bd-rate", "--curve-a", str(tmp_path / "missing.csv"),
                           "--curve-b", str(tmp_path / "missing.csv")], capture_output=True, text=True)
    assert proc.returncode == 2 and "error:" in proc.stderr
