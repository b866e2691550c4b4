# # Noise schedules and the mixture oracle
#
# The forward process mixes a clean signal with Gaussian noise,
# `x_t = alpha(t) x0 + sigma(t) eps`. Both schedules shipped here are
# variance preserving, so `alpha^2 + sigma^2 = 1` on the whole grid.

import numpy as np

from corrdiff.schedule import diffusion_coeff, drift_coeff, make_schedule
from corrdiff.score import GaussianMixtureOracle, score_from_x0

for kind in ("vp-cosine", "vp-linear-beta"):
    s = make_schedule(kind, 8)
    print(kind)
    print("  alpha:", np.round(s.alpha, 4))
    print("  sigma:", np.round(s.sigma, 4))
    print("  f(t):", [round(drift_coeff(s, t), 3) for t in range(1, 9)])
    print("  g(t):", [round(diffusion_coeff(s, t), 3) for t in range(1, 9)])

# +
# A two-component mixture has a closed-form posterior mean, which is
# the best possible x0 predictor. It stands in for a trained network.
s = make_schedule("vp-cosine", 8)
means = np.array([[1.0, 1.0], [-1.0, -1.0]])
oracle = GaussianMixtureOracle(s, [0.5, 0.5], means, [0.1, 0.1])

for x_t in ([0.0, 0.0], [0.3, 0.2], [1.0, 0.9]):
    x_t = np.array(x_t)
    print(x_t, "->", [np.round(oracle.predict_x0(x_t, None, t), 3).tolist() for t in (2, 5, 8)])
# -

# Near t = T the signal is almost gone and the prediction falls back to the
# prior mean. The implied score is the Tweedie rearrangement of the same
# prediction.

x_t = np.array([0.3, 0.2])
print("score at t=4:", score_from_x0(s, x_t, oracle.predict_x0(x_t, None, 4), 4))
print("analytic    :", oracle.log_marginal_grad(x_t, 4))
