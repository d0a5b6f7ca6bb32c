# %% [markdown]
# # Approximation by normal currents, and renorming
#
# A segment current whose density drops from 1 to 1/2 at the midpoint is
# approximated by normal currents with growing hat-function dictionaries.

# %%
import numpy as np

from metcur.approx import approximate_by_normal
from metcur.io import fixture

X, mu, T = fixture("jump")
x = X.coords[:, 0]
dicts = []
for j in range(3):
    h = 2.0 ** -(j + 4)
    centers = np.arange(0.0, 1.0 + h / 2, h)
    dicts.append(np.vstack([np.ones_like(x)] + [np.maximum(0.0, 1 - np.abs(x - c) / h) for c in centers]))
rep = approximate_by_normal(T, dicts)
print("e_n", [round(e, 5) for e in rep.errors], "normal", rep.normal)

# %% [markdown]
# Renorming adds `eps * Psi` to the distance. The new distance stays between
# `d` and `(1 + eps pi / sqrt 6) d`.

# %%
from metcur.renorm import GeneratingSet, renorm_distance, renormed_local_norm
from metcur.space import FnDict
from metcur.currents import der_of_current

Y, _, S = fixture("seg")
gen = GeneratingSet(FnDict.standard(Y))
R = renorm_distance(Y, gen, 0.1)
print("sandwich", R.sandwich_ok)
D, m = der_of_current(S, S.mass())
nr = renormed_local_norm(D, R, gen)
print("LP local norm", nr.value.round(6), "split form", nr.predicted.round(6))
