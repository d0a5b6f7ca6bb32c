# %% [markdown]
# # Alberti representations of a current
#
# Starting from the grid 2-current we search for efficient pairs of
# functions, split the mass along coordinate cones by rainwater splitting,
# and then refine into a diagonal cone.

# %%
import math

import numpy as np

from metcur.alberti import current_to_alberti, validate
from metcur.currents import Precurrent
from metcur.exterior import KVector
from metcur.fixtures import grid

G = grid(4)
T = Precurrent(KVector.simple([G.Dx, G.Dy], (0, 1)), G.mu)
res = current_to_alberti(T, eta=0.9, fdict=G.fdict(), cone=np.array([1.0, 1.0]) / math.sqrt(2))
print("pieces", len(res.V), "uncovered mass", res.uncovered, "of", round(res.total, 4))

# %% [markdown]
# Each piece has one representation per coordinate cone. Their pushforward
# reproduces the upper mass density on the piece.

# %%
for j, (V, reps) in enumerate(zip(res.V, res.reps)):
    target = np.where(V, res.mass.upper, 0.0)
    print(j, [validate(r, target)["ok"] for r in reps], "direction fractions", res.direction_fractions[j])

# %%
for j, rf in enumerate(res.refined):
    if rf is not None:
        print(j, "diagonal cone: direction", rf.direction["fraction"], "speed", rf.speed["fraction"],
              "uncovered", rf.uncovered)

# %%
print([p["ok"] for p in res.peeling])
