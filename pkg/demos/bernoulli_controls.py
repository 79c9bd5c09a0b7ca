"""
Analytic controls: Bernoulli measures
=====================================

A Bernoulli measure puts weight ``p`` on digit 0 and ``1 - p`` on digit 1.
Its scaling function is known in closed form, so it is the first thing to
run any estimator against.
"""

import numpy as np

from mforge import bernoulli, diagonal_fixed_point, ld_spectrum, legendre, tau

# %%
# The moment sums of a Bernoulli measure are exactly geometric in j, so a
# least-squares slope over any window recovers tau(q) = -log2(p^q + (1-p)^q).
q = np.arange(-2, 4.001, 0.5)
mu = bernoulli(0.25)
est = tau(mu, q, (8, 16))
exact = -np.log2(0.25**q + 0.75**q)
for qi, t, e in zip(q, est.values, exact):
    print(f"q={qi:5.2f}  tau_hat={t:+.6f}  closed form={e:+.6f}")

# %%
# The Legendre transform touches the diagonal at the dimension of the
# measure, which for a Bernoulli measure is its entropy in bits.
leg = legendre(tau(mu, np.arange(-2, 4.001, 0.25), (8, 16)), np.arange(0, 2.0001, 0.001))
fp = diagonal_fixed_point(leg)
h = -(0.25 * np.log2(0.25) + 0.75 * np.log2(0.75))
print(f"fixed point {fp.alpha:.4f}  (contact set [{fp.lo:.3f}, {fp.hi:.3f}]), entropy {h:.6f}")

# %%
# Counting cylinders of mass near 2^(-j alpha) gives the large-deviations
# spectrum.  In the limit it equals the Legendre spectrum for this measure.
# At j <= 16 the window of half-width eps still holds few binomial classes,
# so agreement is only rough away from the dimension.
alphas = [0.6, 0.811, 1.2, 1.6]
ld = ld_spectrum(mu, alphas, 0.05, (8, 16))
for a, v in zip(alphas, ld.values):
    print(f"alpha={a:.3f}  LD_hat={v:.4f}  L_hat={leg[a]:.4f}")
