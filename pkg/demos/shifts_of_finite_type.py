"""
Shifts of finite type and their Parry measures
==============================================

A binary shift of finite type is given by a memory ``m`` and a set of
forbidden transitions between m-bit words.  Its entropy is the log of the
Perron eigenvalue of the transition matrix, and the Parry measure spreads
mass as evenly as the shift allows.
"""

import math

import numpy as np

from mforge import ParryMeasure, build_sft, burn_in, golden_mean, local_dim, parry_mass

# %%
# The golden-mean shift forbids "11".  Its entropy is log2 of the golden ratio.
g = golden_mean()
print(f"golden mean: h = {g.h:.6f}, log2(phi) = {math.log2((1 + 5**0.5) / 2):.6f}")
for w in ("0", "1", "0010", "0101"):
    print(f"  mu({w}) = 2^{parry_mass(g, w):.4f}")

# %%
# Forbidding "111" needs memory 2: the transition 11 -> 11 is removed.
t = build_sft(2, [("11", "11")])
print(f"no-111 shift: h = {t.h:.6f}, {2 ** t.word_count_log2(10):.0f} words of length 10")

# %%
# Every Parry cylinder has mass lambda^-j up to a bounded factor.  The
# certificate gives that factor, and the burn-in is the length from which the
# sandwich 2^(-(h +- delta) j) holds with the factor absorbed.
cert = g.certificate
print(f"distortion M = {cert.M:.3f}; burn-in for delta = 0.1, 0.05, 0.025:",
      [burn_in(g, d) for d in (0.1, 0.05, 0.025)])

# %%
# As a consequence the local dimension is the entropy at every point.
mu = ParryMeasure(g)
rng = np.random.default_rng(0)
for _ in range(3):
    x = mu.sample_point(2000, rng)
    print(f"  local dim over j in [100, 2000]: {local_dim(mu, x, (100, 2000)).value:.6f}")
