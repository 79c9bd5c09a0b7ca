"""
A measure that fails the multifractal formalism
===============================================

Blocks of rapidly growing length are drawn from shifts whose entropies are
Cantor-coded by the labels collected so far.  The Legendre spectrum comes
out as the diagonal on [a, b], while the large-deviations spectrum is
minus infinity in the gaps of the Cantor set and each level set of the
local dimension carries a single entropy.
"""

import numpy as np

from mforge import (
    ConstructedMeasure,
    build_family,
    diagonal_fixed_point,
    h_limit,
    ld_spectrum,
    legendre,
    local_dim,
    plan,
    sample_point,
    tau,
)
from mforge.construction import local_dim_envelope

a, b = 0.2, 0.8

# %%
# The faithful block lengths are astronomically long, so a scaled plan with
# lengths growing by a factor 8 is used.  Its violated constraints are kept.
fam = build_family(a, b, J_max=4, seed=0)
p = plan(a, b, fam, "scaled", [8, 64, 512, 4096])
print("block lengths", p.L, "boundaries", p.boundaries)
print(len(p.violations), "constraint violations recorded, e.g.", p.violations[0])
mu = ConstructedMeasure(p)

# %%
# Moment sums factorise over the blocks, so tau can be evaluated exactly at
# generations of several thousand digits.  The slope is b below q = 1 and a
# above it.
q = np.arange(-2, 4.001, 0.25)
t = tau(mu, q, p.boundaries[-3:], backend="boundary_product")
for qi in (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0):
    print(f"tau({qi:+.1f}) = {t[qi]:+.4f}   expected {(b if qi <= 1 else a) * (qi - 1):+.4f}")

leg = legendre(t, np.arange(0.0, 1.0, 0.01))
fp = diagonal_fixed_point(leg)
print(f"Legendre spectrum equals alpha on [{fp.lo:.2f}, {fp.hi:.2f}]; degenerate={fp.degenerate}")

# %%
# The middle of [a, b] lies in the first Cantor gap: no cylinder has mass
# close to 2^(-j/2).  Near a and b the counts grow like 2^(j alpha).
js = p.boundaries[-2:]
for eps in (0.1, 0.05, 0.02):
    ld = ld_spectrum(mu, [a, 0.5, b], eps, js)
    print(f"eps={eps}: LD(a)={ld.values[0]:.4f}  LD(0.5)={ld.values[1]}  LD(b)={ld.values[2]:.4f}")

# %%
# Points carrying different labels have different local dimensions, in
# the order of their labels.
for k in range(16):
    y = format(k, "04b")
    x = sample_point(mu, y)
    d = local_dim(mu, x, (p.boundaries[-2] + 64, p.boundaries[-1])).value
    lo, hi = local_dim_envelope(p, y)
    print(f"{y}: h_limit={h_limit(p, x)[0]:.4f}  local dim={d:.4f}  envelope=({lo:.4f}, {hi:.4f})")
