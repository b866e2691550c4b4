"""Tiny dense networks with hand-written backward passes.

Parameters live in one flat float64 vector; ``sizes`` lists layer widths
``(in, h1, ..., out)``. Hidden layers use tanh, the output layer is affine.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

PARAM_MAGIC = b"CDPM"
PARAM_VERSION = 1


def n_params(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def unpack(params, sizes):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != n_params(sizes):
        raise ConfigurationError(
            f"parameter vector has {params.size} entries, layer sizes {tuple(sizes)} need {n_params(sizes)}"
        )
    layers = []
    k = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = params[k:k + a * b].reshape(a, b)
        k += a * b
        bias = params[k:k + b]
        k += b
        layers.append((W, bias))
    return layers


def init_params(sizes, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    chunks = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        chunks.append(rng.normal(0.0, gain / np.sqrt(a), size=a * b))
        chunks.append(np.zeros(b))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def forward(params, sizes, x):
    """Run the network on rows of ``x``; returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != sizes[0]:
        raise ConfigurationError(f"input width {x.shape[-1]} != first layer size {sizes[0]}")
    layers = unpack(params, sizes)
    acts = [x]
    h = x
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def backward(params, sizes, acts, grad_out):
    """Gradients w.r.t. the flat params and the network input."""
    layers = unpack(params, sizes)
    grads = []
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        if i < len(layers) - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        inp = acts[i]
        gW = inp.reshape(-1, inp.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        grads.append((gW.ravel(), gb))
        g = g @ W.T
    flat = np.concatenate([c for pair in reversed(grads) for c in pair])
    return flat, g


def save_params(path, params, sizes) -> None:
    """Little-endian float32 parameter file.

    Layout: 16-byte header (magic, version, offset of the layer-size list,
    number of sizes), float32 payload, then the uint32 layer-size list.
    """
    params = np.asarray(params, dtype="<f4")
    offset = 16 + params.nbytes
    header = PARAM_MAGIC + struct.pack("<III", PARAM_VERSION, offset, len(sizes))
    body = params.tobytes() + np.asarray(sizes, dtype="<u4").tobytes()
    Path(path).write_bytes(header + body)


def load_params(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != PARAM_MAGIC:
        raise FormatError(f"{path}: not a parameter file")
    version, offset, count = struct.unpack("<III", data[4:16])
    if version != PARAM_VERSION:
        raise FormatError(f"{path}: unsupported parameter file version {version}")
    if offset < 16 or (offset - 16) % 4 or offset + 4 * count != len(data):
        raise FormatError(f"{path}: inconsistent parameter file layout")
    params = np.frombuffer(data[16:offset], dtype="<f4").astype(np.float64)
    sizes = tuple(int(v) for v in np.frombuffer(data[offset:], dtype="<u4"))
    return params, sizes
