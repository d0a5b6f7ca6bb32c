"""Discrete fragments and curves.

A fragment is a partially defined path: a strictly increasing list of times
and the point visited at each time. Consecutive times closer than ``h_max``
form an *edge*; derivatives live on edges and their mass is assigned to the
left endpoint.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import InputError, PreconditionError
from .space import MetricSpace

__all__ = [
    "Fragment",
    "Curve",
    "default_nu",
    "metric_differential",
    "pullback_derivative",
    "fragment_distance",
    "restrict_to_set",
    "fill_fragment",
    "reparametrize_unit",
    "curve_current",
]


class Fragment:
    """A discrete Lipschitz path ``times[i] -> trace[i]`` in a finite space.

    Args:
        space: ambient metric space.
        times: strictly increasing domain times.
        trace: point index visited at each time.
        h_max: consecutive times further apart than this are not joined by an
            edge (the fragment is "broken" there). Defaults to ``inf``.
    """

    def __init__(self, space: MetricSpace, times, trace, h_max=np.inf, edges=None):
        t = np.array(times, dtype=float).ravel()
        tr = np.array(trace, dtype=int).ravel()
        if t.size == 0:
            raise InputError("a fragment needs a nonempty domain")
        if t.shape != tr.shape:
            raise InputError("times and trace must have equal length")
        if np.any(np.diff(t) <= 0):
            raise InputError("fragment times must be strictly increasing")
        if tr.min() < 0 or tr.max() >= space.n:
            raise InputError("trace index out of range")
        t.setflags(write=False)
        tr.setflags(write=False)
        self.space = space
        self.times = t
        self.trace = tr
        self.h_max = float(h_max)
        if edges is not None:
            edges = np.array(edges, dtype=bool).ravel()
            if edges.size != t.size - 1:
                raise InputError("edges needs one flag per consecutive pair")
            edges.setflags(write=False)
        self._edges = edges

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return f"{type(self).__name__}(len={len(self)}, t=[{self.times[0]:.3g}, {self.times[-1]:.3g}])"

    # consecutive pairs -------------------------------------------------
    @cached_property
    def dt(self):
        return np.diff(self.times)

    @property
    def left(self):
        return self.trace[:-1]

    @property
    def right(self):
        return self.trace[1:]

    @cached_property
    def is_edge(self):
        """Consecutive pairs that are joined (gap at most ``h_max``)."""
        if self._edges is not None:
            return self._edges
        return self.dt <= self.h_max * (1 + 1e-12)

    @cached_property
    def edge_length(self):
        return self.space.dist[self.left, self.right]

    @cached_property
    def edge_md(self):
        """Difference quotient ``d(left, right) / dt`` on each consecutive pair (0 off edges)."""
        return np.where(self.is_edge, self.edge_length / self.dt, 0.0)

    @cached_property
    def lip(self):
        d = self.space.dist[np.ix_(self.trace, self.trace)]
        gap = np.abs(self.times[:, None] - self.times[None, :])
        off = gap > 0
        if not off.any():
            return 0.0
        return float((d[off] / gap[off]).max())

    def runs(self):
        """Maximal chains of consecutive edges as ``(start, stop)`` index pairs."""
        out = []
        start = None
        for i, e in enumerate(self.is_edge):
            if e and start is None:
                start = i
            if not e and start is not None:
                out.append((start, i))
                start = None
        if start is not None:
            out.append((start, len(self.is_edge)))
        return out

    def sub(self, lo, hi):
        """The sub-fragment on domain indices ``lo..hi`` inclusive."""
        return Fragment(self.space, self.times[lo:hi + 1], self.trace[lo:hi + 1], self.h_max,
                        edges=self.is_edge[lo:hi])

    def with_space(self, space):
        """The same fragment viewed in a space that extends this one."""
        return Fragment(space, self.times, self.trace, self.h_max, edges=self.is_edge)

    def reversed(self):
        return Fragment(self.space, -self.times[::-1], self.trace[::-1], self.h_max,
                        edges=self.is_edge[::-1])


class Curve(Fragment):
    """A fragment defined on a full uniform grid."""

    def __init__(self, space, times, trace, h_max=None):
        t = np.asarray(times, dtype=float)
        if t.size > 1:
            h = np.diff(t)
            if np.abs(h - h[0]).max() > 1e-9 * max(1.0, abs(h[0])):
                raise InputError("curve times must form a uniform grid")
            h_max = h[0] * (1 + 1e-9) if h_max is None else h_max
        super().__init__(space, t, trace, np.inf if h_max is None else h_max)

    @property
    def step(self):
        return float(self.dt[0]) if len(self) > 1 else 0.0


def default_nu(frag: Fragment):
    """Edge lengths in time (``dt``); zero on non-edges and degenerate edges."""
    return np.where(frag.is_edge & (frag.left != frag.right), frag.dt, 0.0)


def _time_index(frag, t):
    i = np.flatnonzero(np.abs(frag.times - t) <= 1e-12 * max(1.0, abs(t)))
    if i.size == 0:
        raise InputError(f"time {t} is not in the fragment domain")
    return int(i[0])


def metric_differential(frag: Fragment, t):
    """Largest difference quotient to the joined domain neighbours of ``t``."""
    i = _time_index(frag, t)
    vals = [0.0]
    if i > 0 and frag.is_edge[i - 1]:
        vals.append(frag.edge_md[i - 1])
    if i < len(frag) - 1 and frag.is_edge[i]:
        vals.append(frag.edge_md[i])
    return float(max(vals))


def pullback_derivative(frag: Fragment, f, e):
    """Forward difference quotient of ``f`` along the domain edge ``e``.

    ``e`` is either the index of the consecutive pair or a pair of times.
    """
    f = np.asarray(f, dtype=float)
    if isinstance(e, (tuple, list)):
        i, j = _time_index(frag, e[0]), _time_index(frag, e[1])
        if j != i + 1:
            raise InputError("pullback_derivative needs consecutive domain times")
    else:
        i = int(e)
    return float((f[frag.trace[i + 1]] - f[frag.trace[i]]) / frag.dt[i])


def fragment_distance(g1: Fragment, g2: Fragment):
    """Hausdorff distance between graphs, with the max of time and space offsets."""
    dtm = np.abs(g1.times[:, None] - g2.times[None, :])
    dsp = g1.space.dist[np.ix_(g1.trace, g2.trace)]
    e = np.maximum(dtm, dsp)
    return float(max(e.min(axis=1).max(), e.min(axis=0).max()))


def restrict_to_set(frag: Fragment, S):
    """Restrict the domain to times whose image lies in ``S``.

    ``S`` is a boolean mask or an index collection. Two kept times are joined
    by an edge only if they were already joined in ``frag``.
    """
    S = np.asarray(S)
    if S.dtype == bool:
        mask = S
    else:
        mask = np.zeros(frag.space.n, dtype=bool)
        mask[S.astype(int)] = True
    keep = mask[frag.trace]
    if not keep.any():
        raise InputError("the fragment does not meet the set")
    if keep.all():
        return frag
    idx = np.flatnonzero(keep)
    # a new consecutive pair is joined only if it was an edge before
    was_edge = [j == i + 1 and bool(frag.is_edge[i]) for i, j in zip(idx[:-1], idx[1:])]
    return Fragment(frag.space, frag.times[idx], frag.trace[idx], frag.h_max, edges=was_edge)


def _grid(t0, t1, h):
    m = int(round((t1 - t0) / h))
    if abs(t0 + m * h - t1) > 1e-9 * max(1.0, abs(t1)):
        raise InputError("fragment domain does not lie on the requested grid")
    return t0 + h * np.arange(m + 1)


def fill_fragment(frag: Fragment, h, mode="virtual", tol=1e-12):
    """Fill the gaps of a fragment affinely and sample it on a uniform grid.

    The space needs coordinates. Filled positions are interpolated between
    the surrounding domain times. In ``mode="virtual"`` positions that are not
    already cloud points are appended to an extended space; in ``mode="snap"``
    they are replaced by the nearest cloud point.

    Returns a :class:`Curve` whose ``space`` is either the original space or
    an extension of it keeping the original indices.
    """
    X = frag.space
    if X.coords is None:
        raise PreconditionError("filling a fragment needs coordinates")
    if len(frag) == 1:
        return Curve(X, frag.times, frag.trace)
    grid = _grid(frag.times[0], frag.times[-1], h)
    pos = np.empty((grid.size, X.coords.shape[1]))
    trace = np.full(grid.size, -1, dtype=int)
    k = np.searchsorted(frag.times, grid - 1e-9 * h)
    for g, (t, j) in enumerate(zip(grid, k)):
        if j < len(frag) and abs(frag.times[j] - t) <= 1e-9 * h:
            trace[g] = frag.trace[j]
            pos[g] = X.coords[frag.trace[j]]
            continue
        u, v = frag.times[j - 1], frag.times[j]
        pu, pv = X.coords[frag.trace[j - 1]], X.coords[frag.trace[j]]
        pos[g] = (t - u) / (v - u) * pv + (v - t) / (v - u) * pu
    missing = np.flatnonzero(trace < 0)
    new_rows = []
    for g in missing:
        dd = np.linalg.norm(X.coords - pos[g], axis=1)
        j = int(np.argmin(dd))
        if dd[j] <= tol * max(1.0, np.abs(pos[g]).max()) or mode == "snap":
            trace[g] = j
        else:
            # reuse a virtual point created earlier at the same place
            for r, row in enumerate(new_rows):
                if np.linalg.norm(row - pos[g]) <= tol:
                    trace[g] = X.n + r
                    break
            else:
                new_rows.append(pos[g])
                trace[g] = X.n + len(new_rows) - 1
    space = X.extend(np.array(new_rows)) if new_rows else X
    return Curve(space, grid, trace)


def reparametrize_unit(frag: Fragment):
    """Dilate the domain by ``lip`` so that the fragment becomes 1-Lipschitz."""
    L = frag.lip
    if L <= 0:
        raise PreconditionError("cannot reparametrize a constant fragment")
    return Fragment(frag.space, frag.times * L, frag.trace, frag.h_max * L, edges=frag.is_edge)


def curve_current(frag: Fragment, nu=None, weight=1.0):
    """The 1-current ``f dpi -> sum_e f(left) (pi(right) - pi(left)) / dt * nu(e)``."""
    from .currents import FragmentCurrent

    if nu is None:
        nu = default_nu(frag)
    nu = np.asarray(nu, dtype=float)
    if nu.shape != frag.dt.shape:
        raise InputError("nu must have one entry per consecutive pair of the domain")
    return FragmentCurrent(frag.space, [(frag, weight, nu)])
