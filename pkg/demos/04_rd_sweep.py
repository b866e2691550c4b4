# # Rate-distortion sweep and BD-rate
#
# The keep ratio of the DCT autoencoder is the rate knob. Five settings
# give one curve on the bundled set of eight texture patches.

import numpy as np

from corrdiff.data import bundled_sample_set
from corrdiff.rd import bd_rate, rd_curve

samples = bundled_sample_set()
fine = rd_curve(samples, step=0.05)
coarse = rd_curve(samples, step=0.1)
for name, pts in (("step 0.05", fine), ("step 0.10", coarse)):
    print(name)
    for p in pts:
        print(f"  keep {p.keep_ratio:<7} bpp {p.bpp:6.3f}  psnr {p.distortion['psnr']:6.2f}  feat {p.perception:.4f}")

# +
# BD-rate compares two curves at equal quality. Doubling every rate must
# read as +100%.
r = np.array([p.bpp for p in coarse])
q = np.array([p.distortion["psnr"] for p in coarse])
print(f"self      {bd_rate(r, q, r, q):+.2f}%")
print(f"doubled   {bd_rate(r, q, 2 * r, q):+.2f}%")
try:
    rf = np.array([p.bpp for p in fine])
    qf = np.array([p.distortion["psnr"] for p in fine])
    print(f"fine vs coarse {bd_rate(r, q, rf, qf):+.2f}%")
except Exception as exc:
    print("no overlap:", exc)
