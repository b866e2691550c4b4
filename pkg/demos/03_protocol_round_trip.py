# # One signal through the full protocol
#
# compress: DCT analysis and quantization, range-coded latent, encoder
# rollout choosing gammas, `.crdf` container. decompress: parse, decode
# latent, replay the rollout.

import numpy as np

from corrdiff import bitstream
from corrdiff.data import bundled_sample_set
from corrdiff.latentcodec import LinearDCTAutoencoder
from corrdiff.pipeline import compress, decompress, gaussian_prior_model
from corrdiff.schedule import make_schedule

x = bundled_sample_set()[3]
s = make_schedule("vp-cosine", 8)
model = gaussian_prior_model(s, x.shape)
ae = LinearDCTAutoencoder(x.shape, keep_ratio=0.25, step=0.1)

res = compress(x, model, ae, seed=1)
bb = bitstream.bit_breakdown(res.stream)
print(f"{len(res.data)} bytes: header {bb.header_bits} + latent {bb.latent_bits} + gamma {bb.gamma_bits} bits")
print(f"bpp {res.bpp:.3f}")

# +
rec = decompress(res.data, model)
print("bit-exact:", np.array_equal(rec, res.reconstruction))
print(f"mse e2e {np.mean((res.e2e - x) ** 2):.5f}   mse final {np.mean((rec - x) ** 2):.5f}")

# The first 32 bytes of the stream.
for off in range(0, 32, 16):
    print(f"{off:04x}  " + " ".join(f"{b:02x}" for b in res.data[off:off + 16]))
# -

# Flip one byte and the container checksum catches it.

bad = bytearray(res.data)
bad[20] ^= 0x01
try:
    decompress(bytes(bad), model)
except Exception as exc:
    print(type(exc).__name__, exc)
