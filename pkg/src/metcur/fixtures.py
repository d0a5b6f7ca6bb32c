"""Standard small spaces and random generators used by tests, demos and the CLI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivations import CarrierPiece, Derivation
from .fragments import Fragment
from .space import FnDict, MetricSpace

__all__ = [
    "seg",
    "Grid",
    "grid",
    "random_space",
    "random_fragment",
    "random_carrier",
    "random_path_fragment",
]


def seg():
    """Three collinear points 0, 0.5, 1 (ids a, b, c)."""
    return MetricSpace.from_coords([[0.0], [0.5], [1.0]], points=["a", "b", "c"])


@dataclass
class Grid:
    """A planar ``(m+1) x (m+1)`` grid with spacing ``h``.

    ``mu`` gives weight ``h^2`` to the lower-left corner of every cell; the
    last row and column carry no mass. ``Dx`` and ``Dy`` are the unit
    coordinate derivations carried by full rows and columns.
    """

    m: int
    h: float
    space: MetricSpace
    mu: np.ndarray
    rows: list
    cols: list

    def index(self, i, j):
        return j * (self.m + 1) + i

    @property
    def x(self):
        return self.space.coords[:, 0]

    @property
    def y(self):
        return self.space.coords[:, 1]

    def carrier(self, frags):
        return [CarrierPiece(f, 1.0, self.mu[f.left].copy()) for f in frags]

    @property
    def Dx(self):
        return Derivation(self.space, self.mu, self.carrier(self.rows))

    @property
    def Dy(self):
        return Derivation(self.space, self.mu, self.carrier(self.cols))

    def fdict(self, n_dist=0):
        return FnDict.standard(self.space, basepoint=0, n_dist=n_dist)

    @property
    def interior(self):
        return self.mu > 0


def grid(m=4, h=None):
    h = 1.0 / m if h is None else h
    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="xy")
    coords = np.c_[ii.ravel() * h, jj.ravel() * h]
    X = MetricSpace.from_coords(coords)
    mu = np.where((ii.ravel() < m) & (jj.ravel() < m), h * h, 0.0)
    idx = lambda i, j: j * (m + 1) + i  # noqa: E731
    t = np.arange(m + 1) * h
    rows = [Fragment(X, t, [idx(i, j) for i in range(m + 1)]) for j in range(m + 1)]
    cols = [Fragment(X, t, [idx(i, j) for j in range(m + 1)]) for i in range(m + 1)]
    return Grid(m, h, X, mu, rows, cols)


def random_space(rng, n, dim=2):
    """Random points in the unit cube (duplicates are pushed apart)."""
    while True:
        c = rng.random((n, dim))
        X = MetricSpace.from_coords(c, check=False)
        off = ~np.eye(n, dtype=bool)
        if n < 2 or X.dist[off].min() > 1e-3:
            return MetricSpace.from_coords(c)


def random_fragment(rng, X, length=None, gaps=True):
    """A random fragment visiting random points at increasing random times."""
    length = int(rng.integers(1, min(X.n, 6) + 1)) if length is None else length
    trace = rng.choice(X.n, size=length, replace=True)
    times = np.cumsum(rng.uniform(0.2, 1.0, size=length))
    h_max = np.inf
    if gaps and length > 2 and rng.random() < 0.3:
        h_max = float(np.median(np.diff(times)))
    return Fragment(X, times, trace, h_max)


def random_path_fragment(rng, X, length):
    """A random path with distinct consecutive points (no degenerate edges)."""
    trace = [int(rng.integers(X.n))]
    while len(trace) < length:
        nxt = int(rng.integers(X.n))
        if nxt != trace[-1]:
            trace.append(nxt)
    times = np.cumsum(rng.uniform(0.2, 1.0, size=length))
    return Fragment(X, times, trace)


def random_carrier(rng, X, n_frag, signed=False, max_len=5):
    pieces = []
    for _ in range(n_frag):
        L = int(rng.integers(2, max_len + 1))
        fr = random_path_fragment(rng, X, L)
        nu = rng.uniform(0.1, 1.0, size=L - 1)
        if signed:
            nu = nu * rng.choice([-1.0, 1.0], size=L - 1)
        pieces.append(CarrierPiece(fr, float(rng.uniform(0.2, 1.0)), nu))
    return pieces
