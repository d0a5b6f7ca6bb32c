"""Finite metric measure spaces, Lipschitz functions, cones and auxiliary distances."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "MetricSpace",
    "Measure",
    "LipFn",
    "ConeField",
    "FnDict",
    "MetricReport",
    "validate_metric",
    "lip_constant",
    "lip_constant_l2",
    "macshane_extend",
    "cone_contains",
    "orthonormal_complement",
    "dst_delta_alpha",
]


@dataclass(frozen=True)
class MetricReport:
    ok: bool
    axiom: Optional[str] = None
    indices: tuple = ()
    defect: float = 0.0

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "OK"
        return f"{self.axiom} violation at {self.indices} (defect {self.defect:.3g})"


def validate_metric(dist, pseudo=False, tol=1e-12):
    """Check the metric axioms on a distance matrix.

    Returns the first violated axiom, checked in the order symmetry, zero
    diagonal, positivity, triangle inequality. With ``pseudo=True`` distinct
    points are allowed to be at distance zero.

    The triangle violation is reported as ``(i, k, j)`` with
    ``d(i, j) > d(i, k) + d(k, j)``.
    """
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        return MetricReport(False, "shape", d.shape, np.inf)
    n = d.shape[0]
    if not np.all(np.isfinite(d)):
        i, j = np.argwhere(~np.isfinite(d))[0]
        return MetricReport(False, "finiteness", (int(i), int(j)), np.inf)
    asym = np.abs(d - d.T)
    if asym.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        return MetricReport(False, "symmetry", (int(i), int(j)), float(asym[i, j]))
    diag = np.abs(np.diag(d))
    if diag.max(initial=0.0) > tol:
        i = int(np.argmax(diag))
        return MetricReport(False, "zero diagonal", (i,), float(diag[i]))
    off = ~np.eye(n, dtype=bool)
    if pseudo:
        bad = off & (d < -tol)
    else:
        bad = off & (d <= tol)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return MetricReport(False, "positivity", (int(i), int(j)), float(-d[i, j]))
    # triangle: loop over the intermediate point, vectorized over pairs
    worst = (0.0, None)
    for k in range(n):
        excess = d - (d[:, k][:, None] + d[k, :][None, :])
        m = excess.max()
        if m > tol and m > worst[0]:
            i, j = np.unravel_index(np.argmax(excess), excess.shape)
            worst = (float(m), (int(i), k, int(j)))
    if worst[1] is not None:
        return MetricReport(False, "triangle", worst[1], worst[0])
    return MetricReport(True)


class MetricSpace:
    """A finite metric space given by a dense distance matrix.

    Args:
        dist: symmetric distance matrix.
        coords: optional Euclidean embedding, one row per point.
        points: optional point ids (defaults to ``0..n-1``).
        check: validate the metric axioms on construction.
    """

    def __init__(self, dist, coords=None, points=None, check=True, pseudo=False):
        d = np.array(dist, dtype=float)
        d.setflags(write=False)
        self.dist = d
        if coords is not None:
            c = np.array(coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != d.shape[0]:
                raise InputError("coords and dist disagree on the number of points")
            c.setflags(write=False)
            coords = c
        self.coords = coords
        self.points = list(points) if points is not None else list(range(d.shape[0]))
        if len(self.points) != d.shape[0]:
            raise InputError("points and dist disagree on the number of points")
        if check:
            rep = validate_metric(d, pseudo=pseudo)
            if not rep:
                raise InputError(f"not a metric: {rep}")
            if coords is not None:
                de = _euclid(coords)
                if np.abs(de - d).max(initial=0.0) > 1e-12 * max(1.0, d.max(initial=0.0)):
                    raise InputError("dist does not match the Euclidean distance of coords")

    @classmethod
    def from_coords(cls, coords, points=None, check=True):
        c = np.asarray(coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return cls(_euclid(c), coords=c, points=points, check=check)

    @property
    def n(self):
        return self.dist.shape[0]

    @property
    def dim(self):
        return None if self.coords is None else self.coords.shape[1]

    def index(self, pid):
        return self.points.index(pid)

    def extend(self, new_coords):
        """Return a larger space with the given coordinate rows appended.

        Original points keep their indices.
        """
        if self.coords is None:
            raise InputError("extension needs coordinates")
        c = np.vstack([self.coords, np.atleast_2d(new_coords)])
        pts = self.points + [f"v{len(self.points) + i}" for i in range(c.shape[0] - self.n)]
        return MetricSpace.from_coords(c, points=pts, check=False)

    def __repr__(self):
        return f"MetricSpace(n={self.n}, dim={self.dim})"


def _euclid(c):
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt((diff**2).sum(-1))


class Measure:
    """Nonnegative weights on the points of a finite space."""

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 1:
            raise InputError("measure weights must be a vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError("measure weights must be finite and nonnegative")
        w.setflags(write=False)
        self.weights = w

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)

    @property
    def total(self):
        return float(self.weights.sum())

    def restrict(self, mask):
        m = np.asarray(mask, dtype=bool)
        return Measure(np.where(m, self.weights, 0.0))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"Measure(n={len(self.weights)}, total={self.total:.6g})"


def _as_dist(X):
    return X.dist if isinstance(X, MetricSpace) else np.asarray(X, dtype=float)


def lip_constant(f, X):
    """Global Lipschitz constant of a function on a finite (pseudo)metric space.

    Pairs at distance zero with different values give ``inf``.
    """
    d = _as_dist(X)
    v = np.asarray(f, dtype=float)
    if v.shape != (d.shape[0],):
        raise InputError(f"expected {d.shape[0]} values, got shape {v.shape}")
    if v.size < 2:
        return 0.0
    diff = np.abs(v[:, None] - v[None, :])
    off = ~np.eye(v.size, dtype=bool)
    pos = off & (d > 0)
    q = np.zeros_like(diff)
    q[pos] = diff[pos] / d[pos]
    if np.any(off & (d <= 0) & (diff > 0)):
        return np.inf
    return float(q.max())


def lip_constant_l2(F, X):
    """Lipschitz constant of a vector valued map (rows of ``F`` are components) into l2."""
    d = _as_dist(X)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    diff = F[:, :, None] - F[:, None, :]
    num = np.sqrt((diff**2).sum(0))
    off = ~np.eye(d.shape[0], dtype=bool) & (d > 0)
    if not off.any():
        return 0.0
    return float((num[off] / d[off]).max())


@dataclass(eq=False)
class LipFn:
    """A real function on a finite metric space."""

    values: np.ndarray
    space: MetricSpace
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n,):
            raise InputError("LipFn needs one value per point")

    @cached_property
    def glip(self):
        return lip_constant(self.values, self.space)

    @cached_property
    def sup(self):
        return float(np.abs(self.values).max(initial=0.0))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def macshane_extend(values, S, X):
    """Extend a function from the subset ``S`` to all of ``X`` keeping glip and sup.

    Uses the inf-convolution ``min_s f(s) + L d(., s)`` followed by truncation
    to ``[-sup|f|, sup|f|]``.
    """
    S = np.atleast_1d(np.asarray(S, dtype=int))
    f = np.asarray(values, dtype=float)
    if S.size == 0:
        raise InputError("cannot extend from an empty set")
    if f.shape != S.shape:
        raise InputError("one value per point of S is required")
    d = _as_dist(X)
    L = lip_constant(f, d[np.ix_(S, S)])
    g = (f[None, :] + L * d[:, S]).min(axis=1)
    bound = np.abs(f).max()
    g = np.clip(g, -bound, bound)
    g[S] = f
    if isinstance(X, MetricSpace):
        return LipFn(g, X)
    return g


def cone_contains(w, alpha, u):
    """Membership of ``u`` in the open cone with axis ``w`` and opening ``alpha``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if w.size == 0 or u.size == 0:
        raise InputError("cone test needs at least one dimension")
    if w.shape != u.shape:
        raise InputError("cone axis and vector have different dimensions")
    s = float(w @ u)
    perp = u - s * w
    return bool(np.tan(alpha) * s > np.linalg.norm(perp))


def orthonormal_complement(w):
    """Orthonormal basis of the orthogonal complement of the unit vector ``w``.

    Gram-Schmidt on the standard basis with the coordinate of largest
    ``|w_j|`` dropped (ties broken by the lowest index).
    """
    w = np.asarray(w, dtype=float)
    k = w.size
    drop = int(np.argmax(np.abs(w)))
    basis = [w / np.linalg.norm(w)]
    out = []
    for j in range(k):
        if j == drop:
            continue
        v = np.zeros(k)
        v[j] = 1.0
        for b in basis:
            v = v - (b @ v) * b
        v = v / np.linalg.norm(v)
        basis.append(v)
        out.append(v)
    return np.array(out).reshape(k - 1, k)


def dst_delta_alpha(F, w, delta, alpha, X):
    """The pseudometric ``delta d + cot(alpha) sum_i |<u_i, F(x) - F(y)>|``.

    ``F`` has one row per component function. ``u_i`` runs over the
    orthonormal complement of ``w``.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    if not 0 < alpha < np.pi / 2:
        raise InputError("alpha must lie in (0, pi/2)")
    d = _as_dist(X)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    U = orthonormal_complement(np.asarray(w, dtype=float))
    out = delta * d
    if U.shape[0]:
        P = U @ F  # projections, one row per u_i
        out = out + (1.0 / np.tan(alpha)) * np.abs(P[:, :, None] - P[:, None, :]).sum(0)
    return out


class ConeField:
    """Per-point cones ``C(w(x), alpha(x))`` in ``R^k``."""

    def __init__(self, axes, alpha):
        a = np.atleast_2d(np.asarray(axes, dtype=float))
        norms = np.linalg.norm(a, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise InputError("cone axes must be unit vectors")
        al = np.broadcast_to(np.asarray(alpha, dtype=float), (a.shape[0],)).copy()
        if np.any(al <= 0) or np.any(al >= np.pi / 2):
            raise InputError("cone openings must lie in (0, pi/2)")
        self.axes = a
        self.alpha = al

    @classmethod
    def constant(cls, w, alpha, n):
        w = np.asarray(w, dtype=float)
        w = w / np.linalg.norm(w)
        return cls(np.tile(w, (n, 1)), alpha)

    @property
    def k(self):
        return self.axes.shape[1]

    def contains(self, x, u):
        return cone_contains(self.axes[x], self.alpha[x], u)


@dataclass(eq=False)
class FnDict:
    """A named list of functions used as a generating set of the Lipschitz algebra.

    The first entry is the constant 1. Every other entry is 1-Lipschitz and
    vanishes at ``basepoint``.
    """

    space: MetricSpace
    names: list
    values: np.ndarray
    basepoint: int = 0

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.names), self.space.n):
            raise InputError("FnDict values must have shape (len(names), n)")

    def __len__(self):
        return len(self.names)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def glips(self):
        return np.array([lip_constant(v, self.space) for v in self.values])

    def validate(self, tol=1e-12):
        """Return a list of problems (empty when the invariants hold)."""
        problems = []
        if not np.allclose(self.values[0], 1.0, atol=0, rtol=0):
            problems.append("first entry is not the constant 1")
        for name, v in zip(self.names[1:], self.values[1:]):
            if lip_constant(v, self.space) > 1 + tol:
                problems.append(f"{name} is not 1-Lipschitz")
            if abs(v[self.basepoint]) > tol:
                problems.append(f"{name} does not vanish at the basepoint")
        return problems

    def unit(self):
        """Nonconstant entries rescaled to Lipschitz constant exactly one."""
        out = []
        for v in self.values[1:]:
            L = lip_constant(v, self.space)
            if L > 0:
                out.append(v / L)
        return np.array(out).reshape(-1, self.space.n)

    @classmethod
    def standard(cls, X, basepoint=0, n_dist=None, extra=None, rng=None):
        """Constant, shifted coordinates (when present) and distance functions.

        Distance functions are ``d(., p) - d(basepoint, p)`` for ``n_dist``
        points ``p`` (all points by default, chosen in index order).
        """
        names = ["1"]
        vals = [np.ones(X.n)]
        if X.coords is not None:
            for j in range(X.coords.shape[1]):
                names.append(f"x{j}")
                vals.append(X.coords[:, j] - X.coords[basepoint, j])
        pts = range(X.n) if n_dist is None else range(min(n_dist, X.n))
        for p in pts:
            if p == basepoint:
                continue
            names.append(f"d{p}")
            vals.append(X.dist[:, p] - X.dist[basepoint, p])
        if extra is not None:
            for name, v in extra.items():
                v = np.asarray(v, dtype=float)
                L = lip_constant(v, X)
                v = v - v[basepoint]
                if L > 1:
                    v = v / L
                names.append(name)
                vals.append(v)
        return cls(X, names, np.array(vals), basepoint)
