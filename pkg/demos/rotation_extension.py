"""
Copying a measure onto both halves of the interval
==================================================

A measure living on [0, 1/2) can be halved and copied onto [1/2, 1).  Local
dimensions are unchanged, since the constant factor drops out of every
slope.
"""

import numpy as np

from mforge import ConditionedMeasure, bernoulli, local_dim, rotation_extend

nu = ConditionedMeasure(bernoulli(0.25), "0")
mu = rotation_extend(nu)

for w in ("0", "001", "0110", "1", "101"):
    print(f"mu({w}) = 2^{mu.log2_mass(w):.4f}   nu({w}) = 2^{nu.log2_mass(w):.4f}")

rng = np.random.default_rng(1)
x = "0" + "".join(rng.choice(["0", "1"], size=999))
print("local dims:", local_dim(mu, x, (50, 1000)).value, local_dim(nu, x, (50, 1000)).value)
