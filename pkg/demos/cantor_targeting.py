"""
Cantor-coded entropies
======================

Each binary label ``y`` gets an open interval of entropies inside [a, b],
following the middle-thirds construction: a 0 keeps the left third and a 1
keeps the right third.  A mixing shift is then found whose entropy lands in
the interval.
"""

from mforge import build_family, label_interval

# %%
# The intervals nest and are ordered like the labels.
for y in ("0", "1", "00", "01", "10", "11"):
    iv = label_interval(y, 0.2, 0.8)
    print(f"{y:>3}: ({float(iv.lo):.4f}, {float(iv.hi):.4f})")

# %%
# The search starts from the full de Bruijn graph of a given memory and
# removes transitions in a seeded order until the entropy drops into the
# target.  Narrow intervals need more memory.
fam = build_family(0.2, 0.8, J_max=3, seed=0)
for y in fam.labels():
    s = fam[y]
    iv = fam.interval(y)
    print(f"{y:>3}: memory {s.memory:2d}, {s.n_states:4d} states, h = {s.h:.5f} in ({float(iv.lo):.4f}, {float(iv.hi):.4f})")
