# %% [markdown]
# # Currents on a grid
#
# The unit square sampled on a 4x4 grid carries two coordinate derivations
# `Dx` and `Dy`. Their wedge, weighted by the grid measure, is a 2-precurrent.
# We look at its mass bounds, its boundary and the normality check.

# %%
import numpy as np

from metcur.currents import Precurrent, is_normal, mass_estimate
from metcur.exterior import KVector
from metcur.fixtures import grid

G = grid(4)
T = Precurrent(KVector.simple([G.Dx, G.Dy], (0, 1)), G.mu)
print(T.space, "degree", T.k)

# %% [markdown]
# Lower bounds come from evaluating the current on candidate pairs of
# 1-Lipschitz functions. Upper bounds come from the stored k-vector and
# carry the factor k! = 2, so here they are twice the lower bounds.

# %%
me = mass_estimate(T, fdict=G.fdict())
print("lower total", round(me.lower_total, 4), "upper total", round(me.upper_total, 4))
w = me.witnesses[0]
print("best witness covers", int(w.mask.sum()), "points with value", round(w.value, 4))

# %% [markdown]
# The boundary is a 1-current. On the grid it circulates around the edge
# of the square, so its boundary in turn vanishes.

# %%
B = T.boundary()
f, pi = np.random.default_rng(0).normal(size=(2, G.space.n))
print("dT(f, pi) =", round(B.evaluate(f, pi), 6))
print("ddT density max", np.abs(B.boundary().density()).max())

# %%
rep = is_normal(T)
print("normal:", rep.normal, "mass bound", rep.mass_upper, "boundary bound", round(rep.boundary_upper, 4))
