"""Edge flows and their decomposition into weighted paths and cycles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .derivations import CarrierPiece
from .errors import InputError, ToleranceError
from .fragments import Fragment, default_nu

__all__ = ["EdgeFlow", "FlowDecomposition", "flow_decompose"]


class EdgeFlow:
    """A net flow on the directed edges of a finite space.

    ``F`` is antisymmetric; ``F[p, q] > 0`` means flow from ``p`` to ``q``. The
    associated 1-current samples ``f`` at the tail of each positive edge:
    ``N(f, pi) = sum_{F[p,q] > 0} F[p,q] f(p) (pi(q) - pi(p))``. In particular
    opposite flows on the same edge cancel.
    """

    def __init__(self, space, F):
        F = np.array(F, dtype=float)
        if F.shape != (space.n, space.n):
            raise InputError("flow matrix has the wrong shape")
        if np.abs(F + F.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(F).max(initial=0.0)):
            raise InputError("edge flow must be antisymmetric")
        self.space = space
        self.F = 0.5 * (F - F.T)

    @classmethod
    def from_current(cls, N):
        """Net the flow matrix of a 1-current in flow form.

        Returns the edge flow and the mass of the part removed by netting (zero
        when no edge is used in both directions and all densities are
        nonnegative).
        """
        C = N.flow
        F = C - C.T
        ef = cls(N.space, F)
        from .currents import FlowCurrent

        diff = FlowCurrent(N.space, C - ef.positive)
        return ef, float(diff.mass().sum())

    @property
    def positive(self):
        return np.maximum(self.F, 0.0)

    @property
    def divergence(self):
        """Outflow minus inflow at every point."""
        P = self.positive
        return P.sum(1) - P.sum(0)

    def current(self):
        from .currents import FlowCurrent

        return FlowCurrent(self.space, self.positive)

    def fragment_current(self):
        """The same current as a sum of single-edge fragments."""
        from .currents import FragmentCurrent

        pieces = []
        P = self.positive
        for p, q in zip(*np.nonzero(P)):
            d = self.space.dist[p, q]
            fr = Fragment(self.space, [0.0, d], [p, q])
            pieces.append(CarrierPiece(fr, 1.0, np.array([P[p, q] * d])))
        return FragmentCurrent(self.space, pieces)

    @property
    def mass(self):
        return float((self.positive * self.space.dist).sum())


@dataclass
class FlowDecomposition:
    paths: List[Tuple[Fragment, float]]
    residual: float
    netting_defect: float = 0.0
    n_cycles: int = 0
    info: dict = field(default_factory=dict)

    def current(self, space):
        from .currents import FragmentCurrent

        return FragmentCurrent(space, [CarrierPiece(g, w, default_nu(g)) for g, w in self.paths])

    @property
    def mass(self):
        """``sum w * length(gamma)``."""
        return float(sum(w * g.edge_length.sum() for g, w in self.paths))

    def to_json(self):
        return {
            "paths": [{"trace": g.trace.tolist(), "domain": g.times.tolist(), "weight": w,
                       "closed": bool(g.trace[0] == g.trace[-1])} for g, w in self.paths],
            "residual": self.residual,
            "netting_defect": self.netting_defect,
            "cycles": self.n_cycles,
            "mass": self.mass,
        }


def _as_fragment(space, nodes):
    d = space.dist[nodes[:-1], nodes[1:]]
    t = np.r_[0.0, np.cumsum(d)]
    return Fragment(space, t, nodes)


def flow_decompose(N, tol=1e-12):
    """Greedy decomposition of an edge flow into weighted simple paths and cycles.

    Paths start at points of positive divergence and follow the largest
    outgoing flow until they reach a point without outflow; a revisited point
    closes a cycle. The weight is the bottleneck, capped by the remaining
    divergence at both ends. Each step zeroes an edge or an endpoint
    divergence, so the loop terminates with nothing left over.

    Args:
        N: an :class:`EdgeFlow` or a 1-current in flow form (netted first).
        tol: allowed residual mass.
    """
    from .currents import FlowCurrent

    if isinstance(N, FlowCurrent):
        ef, netting = EdgeFlow.from_current(N)
    elif isinstance(N, EdgeFlow):
        ef, netting = N, 0.0
    else:
        raise InputError("flow_decompose needs an EdgeFlow or a flow-form 1-current")
    X = ef.space
    P = ef.positive.copy()
    scale = max(1.0, P.max(initial=0.0))
    excess = P.sum(1) - P.sum(0)
    ex_tol = 1e-13 * scale
    paths = []
    cycles = 0
    guard = 4 * (np.count_nonzero(P) + X.n) + 10
    while np.any(P > 0):
        guard -= 1
        if guard < 0:
            break
        has_out = (P > 0).any(1)
        srcs = np.flatnonzero((excess > ex_tol) & has_out)
        s = int(srcs[np.argmax(excess[srcs])]) if srcs.size else int(np.flatnonzero(has_out)[0])
        nodes = [s]
        seen = {s: 0}
        cycle_at = None
        cur = s
        while True:
            row = P[cur]
            if not np.any(row > 0):
                break
            nxt = int(np.argmax(row))
            if nxt in seen:
                cycle_at = seen[nxt]
                nodes.append(nxt)
                break
            seen[nxt] = len(nodes)
            nodes.append(nxt)
            cur = nxt
        if cycle_at is not None:
            nodes = nodes[cycle_at:]
            ed = list(zip(nodes[:-1], nodes[1:]))
            caps = [P[p, q] for p, q in ed]
            w = min(caps)
            for (p, q), c in zip(ed, caps):
                P[p, q] = 0.0 if c == w else P[p, q] - w
            cycles += 1
        else:
            ed = list(zip(nodes[:-1], nodes[1:]))
            caps = [P[p, q] for p, q in ed]
            w = min(caps)
            t = nodes[-1]
            if excess[s] > ex_tol:
                w = min(w, excess[s])
            if excess[t] < -ex_tol:
                w = min(w, -excess[t])
            for (p, q), c in zip(ed, caps):
                P[p, q] = 0.0 if c == w else P[p, q] - w
            excess[s] = 0.0 if excess[s] == w else excess[s] - w
            excess[t] = 0.0 if -excess[t] == w else excess[t] + w
        paths.append((_as_fragment(X, nodes), float(w)))
    residual = float((P * X.dist).sum())
    if residual > tol:
        raise ToleranceError(f"flow decomposition left residual mass {residual:.3g}")
    return FlowDecomposition(paths, residual, netting, cycles)
