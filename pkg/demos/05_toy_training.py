# # Two-phase training at desk scale
#
# Phase 1 fits the x0 predictor alone. Phase 2 trains predictor,
# autoencoder and prior jointly, with uniform noise standing in for
# rounding in the rate term. All gradients are hand-written.

import numpy as np

from corrdiff import toytrain
from corrdiff.correction import MSEMetric
from corrdiff.data import gaussian_mixture_draws, patch_textures
from corrdiff.latentcodec import TinyMLPAutoencoder, encode_latent, range_encode
from corrdiff.schedule import make_schedule
from corrdiff.score import TinyScoreMLP

s = make_schedule("vp-cosine", 8)
data = gaussian_mixture_draws(512, [1.0], [[0.5]], [0.04], seed=0)
model = TinyScoreMLP(s, (1,), 0, hidden=(16, 16), seed=0)
cfg = toytrain.TrainConfig(iters=200, lr=0.1, batch=32)
trained, log = toytrain.train_phase1(model, data, s, MSEMetric(), cfg)
for row in log[::40] + log[-1:]:
    print(f"iter {row['iter']:3d}  loss {row['total']:.4f}")

# +
# Sweep the rate weight. Larger weights should give shorter codes.
train, held = patch_textures(64, seed=1), patch_textures(16, seed=99)
for lam in toytrain.LAMBDA_R_GRID:
    cfg = toytrain.TrainConfig(lambda_r=lam, iters=600, lr=0.05)
    m = TinyScoreMLP(s, (8, 8), 8, hidden=(16, 16))
    ae = TinyMLPAutoencoder((8, 8), latent_dim=8, hidden=32)
    m, ae, log = toytrain.train_phase2(m, ae, train, s, MSEMetric(), MSEMetric(), cfg)
    bits = np.mean([8 * (len(range_encode(encode_latent(ae, x))) - 4) for x in held])
    noisy, rounded = toytrain.surrogate_rates(ae, held)
    print(f"lambda_r {lam:<5} coded {bits:5.2f} bits  e2e mse {log[-1]['e2e_mse']:.4f}  "
          f"rate noisy {noisy:.3f} rounded {rounded:.3f} bpe")
