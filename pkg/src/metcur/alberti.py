"""Alberti representations of finite measures.

A representation is a finite family of fragments ``gamma`` with weights
``P(gamma)`` and edge measures ``nu_gamma``; the mass ``P nu_gamma(e)`` of an
edge sits at its left endpoint, and the representation decomposes ``mu`` when
those masses add up to ``mu`` at every point.

Construction works relative to an explicit candidate family of fragments: an
edge is *admissible* when it is nondegenerate and passes the direction and
speed tests. Coverage is a linear program over admissible edges, and the
uncovered part comes with an exhaustive certificate that no admissible edge
starts there.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._lp import HIGHS_OPTIONS
from .derivations import CarrierPiece, Derivation, module_scale
from .errors import (CoverageGap, InputError, PreconditionError, PseudodualError, ToleranceError,
                     ZeroCurrent)
from .fragments import Fragment
from .space import ConeField, LipFn, MetricSpace, cone_contains, dst_delta_alpha, lip_constant

__all__ = [
    "AlbertiRep",
    "DirectionSpec",
    "SpeedSpec",
    "NullCertificate",
    "RainwaterResult",
    "validate",
    "restrict",
    "glue",
    "check_direction",
    "check_speed",
    "admissible_edges",
    "rainwater_split",
    "bilipschitz_refine",
    "closure_fragments",
    "cone_refine",
    "ConeRefineResult",
    "cone_null_estimate",
    "ConeNullBound",
    "current_to_alberti",
    "AlbertiResult",
    "derivation_of",
]


# ---------------------------------------------------------------------------
# data types


class AlbertiRep:
    """Weights ``P`` and edge measures ``nu`` on a list of fragments."""

    def __init__(self, space: MetricSpace, fragments: Sequence[Fragment] = (), P=(), nu=(), notes=None):
        self.space = space
        self.fragments = list(fragments)
        self.P = np.asarray(P, dtype=float).reshape(len(self.fragments))
        self.nu = [np.asarray(v, dtype=float).reshape(len(g) - 1) for g, v in zip(self.fragments, nu)]
        if len(self.nu) != len(self.fragments):
            raise InputError("one edge measure per fragment is required")
        if np.any(self.P < 0):
            raise InputError("fragment weights must be nonnegative")
        for g in self.fragments:
            if g.space.n < space.n:
                raise InputError("fragment lives on a smaller space")
        self.notes = dict(notes or {})

    @classmethod
    def empty(cls, space):
        return cls(space)

    def __len__(self):
        return len(self.fragments)

    def __repr__(self):
        return f"AlbertiRep({len(self)} fragments, mass={self.pushforward().sum():.4g})"

    def edge_masses(self):
        """``P nu`` per fragment."""
        return [p * v for p, v in zip(self.P, self.nu)]

    def pushforward(self):
        """``sum_gamma P(gamma) nu_gamma`` collected at left endpoints."""
        out = np.zeros(self.space.n)
        for g, m in zip(self.fragments, self.edge_masses()):
            keep = g.left < self.space.n
            out += np.bincount(g.left[keep], weights=m[keep], minlength=self.space.n)[: self.space.n]
        return out

    def pieces(self):
        return [CarrierPiece(g, float(p), v) for g, p, v in zip(self.fragments, self.P, self.nu)]

    def to_json(self):
        return {
            "P": self.P.tolist(),
            "nu": [v.tolist() for v in self.nu],
            "fragments": [{"times": g.times.tolist(), "trace": g.trace.tolist(),
                           "edges": g.is_edge.astype(int).tolist()} for g in self.fragments],
            "notes": {k: v for k, v in self.notes.items() if isinstance(v, (int, float, str, list))},
        }

    @classmethod
    def from_json(cls, space, data):
        frs = [Fragment(space, f["times"], f["trace"], edges=f.get("edges")) for f in data.get("fragments", [])]
        return cls(space, frs, data.get("P", []), data.get("nu", []))


@dataclass
class DirectionSpec:
    """Pullback derivatives of ``f`` (rows) must lie in ``cone``."""

    f: np.ndarray
    cone: ConeField

    def __post_init__(self):
        self.f = np.atleast_2d(np.asarray(self.f, dtype=float))
        if self.f.shape[0] != self.cone.k:
            raise InputError("cone dimension must equal the number of functions")


@dataclass
class SpeedSpec:
    """``(g o gamma)' >= sigma(gamma) md gamma`` (``>`` when ``strict``)."""

    g: np.ndarray
    sigma: np.ndarray
    strict: bool = False

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.g.shape).copy()
        if np.any(self.sigma < 0):
            raise InputError("speed thresholds must be nonnegative")


def _values(f):
    return np.asarray(f.values if isinstance(f, LipFn) else f, dtype=float)


# ---------------------------------------------------------------------------
# edge tests


def _direction_ok(frag: Fragment, spec: DirectionSpec):
    F = spec.f
    u = (F[:, frag.right] - F[:, frag.left]) / frag.dt
    return np.array([spec.cone.contains(int(p), u[:, e]) for e, p in enumerate(frag.left)], dtype=bool)


def _speed_ok(frag: Fragment, spec: SpeedSpec):
    g = spec.g
    der = (g[frag.right] - g[frag.left]) / frag.dt
    need = spec.sigma[frag.left] * frag.edge_md
    slack = 1e-12 * (1 + np.abs(der))
    return der > need + slack if spec.strict else der >= need - slack


def admissible_edges(frag: Fragment, direction: Optional[DirectionSpec] = None,
                     speed: Optional[SpeedSpec] = None):
    """Nondegenerate edges passing the direction and speed tests."""
    ok = frag.is_edge & (frag.left != frag.right)
    if direction is not None:
        ok &= _direction_ok(frag, direction)
    if speed is not None:
        ok &= _speed_ok(frag, speed)
    return ok


def _mass_fraction(rep: AlbertiRep, test):
    tot = 0.0
    good = 0.0
    failing = []
    for i, (g, m) in enumerate(zip(rep.fragments, rep.edge_masses())):
        live = (m > 0) & g.is_edge
        if not live.any():
            continue
        ok = test(g)
        tot += m[live].sum()
        good += m[live & ok].sum()
        failing.extend((i, int(e)) for e in np.flatnonzero(live & ~ok))
    frac = good / tot if tot > 0 else 1.0
    return {"fraction": float(frac), "certified": bool(frac == 1.0), "failing": failing, "mass": float(tot)}


def check_direction(rep: AlbertiRep, spec: DirectionSpec):
    """Fraction of ``P nu`` edge mass whose pullback derivative lies in the cone."""
    return _mass_fraction(rep, lambda g: _direction_ok(g, spec))


def check_speed(rep: AlbertiRep, spec: SpeedSpec):
    """Fraction of ``P nu`` edge mass satisfying the speed inequality."""
    return _mass_fraction(rep, lambda g: _speed_ok(g, spec))


# ---------------------------------------------------------------------------
# validation, restriction, gluing


def validate(rep: AlbertiRep, mu, tol=1e-9):
    """Decomposition defect, absolute continuity and normalization of ``P``."""
    mu = np.asarray(mu, dtype=float)
    push = rep.pushforward()
    defect = float(np.abs(push - mu).max(initial=0.0))
    ac = []
    for i, (g, v) in enumerate(zip(rep.fragments, rep.nu)):
        bad = (v != 0) & (~g.is_edge | (g.left == g.right))
        ac.extend((i, int(e)) for e in np.flatnonzero(bad))
    negative = [i for i, v in enumerate(rep.nu) if np.any(v < 0)]
    psum = float(rep.P.sum())
    p_ok = (len(rep) == 0 and mu.sum() == 0) or abs(psum - 1.0) <= 1e-12
    scale = max(1.0, float(np.abs(mu).max(initial=0.0)))
    return {
        "ok": bool(defect <= tol * scale and not ac and not negative and p_ok),
        "defect": defect,
        "ac_violations": ac,
        "negative_nu": negative,
        "P_sum": psum,
        "P_ok": bool(p_ok),
    }


def _mask(U, n):
    U = np.asarray(U)
    if U.dtype == bool:
        if U.shape != (n,):
            raise InputError("set mask has the wrong length")
        return U
    m = np.zeros(n, dtype=bool)
    m[U.astype(int)] = True
    return m


def restrict(rep: AlbertiRep, U):
    """Zero the edge measure wherever the left endpoint leaves ``U``."""
    U = _mask(U, rep.space.n)
    nu = [v * U[g.left] for g, v in zip(rep.fragments, rep.nu)]
    return AlbertiRep(rep.space, rep.fragments, rep.P, nu, rep.notes)


def glue(reps: Sequence[AlbertiRep], partition, mu=None):
    """Combine representations of ``mu`` restricted to disjoint pieces.

    ``P`` is rescaled by ``mu(U_a) / mu(X)`` and ``nu`` by the inverse factor,
    so edge masses (and hence certificates on each piece) are unchanged.
    """
    if len(reps) != len(partition):
        raise InputError("one representation per partition piece is required")
    if not reps:
        raise InputError("nothing to glue")
    X = reps[0].space
    masks = [_mask(U, X.n) for U in partition]
    cover = np.sum(masks, axis=0)
    if np.any(cover > 1):
        raise InputError("partition pieces overlap")
    pushes = [r.pushforward() for r in reps]
    mu = np.sum(pushes, axis=0) if mu is None else np.asarray(mu, dtype=float)
    total = float(mu.sum())
    frs, P, nu = [], [], []
    for r, U in zip(reps, masks):
        mU = float(mu[U].sum())
        if mU <= 0 or len(r) == 0:
            continue
        a = mU / total
        for g, p, v in zip(r.fragments, r.P, r.nu):
            if p <= 0:
                continue
            frs.append(g)
            P.append(a * p)
            nu.append(v / a)
    return AlbertiRep(X, frs, P, nu, {"glued": len(reps)})


# ---------------------------------------------------------------------------
# splitting


@dataclass
class NullCertificate:
    """No admissible family edge starts in ``S``.

    ``residual[i]`` is the image length of the admissible part of family
    fragment ``i`` inside ``S`` (all zero for a valid certificate).
    """

    S: np.ndarray
    n_fragments: int
    n_edges: int
    residual: np.ndarray
    descriptor: dict = field(default_factory=dict)

    @property
    def ok(self):
        return bool(np.all(self.residual == 0))

    def __bool__(self):
        return self.ok

    def covers(self, K):
        K = _mask(K, self.S.size)
        return bool(np.all(self.S[K]))

    def to_json(self):
        return {"S": np.flatnonzero(self.S).tolist(), "fragments": self.n_fragments,
                "edges": self.n_edges, "max_residual": float(self.residual.max(initial=0.0)),
                "descriptor": {k: v for k, v in self.descriptor.items()}}


def null_certificate(S, family, direction=None, speed=None, descriptor=None):
    """Check every edge of every family fragment against ``S``."""
    S = np.asarray(S, dtype=bool)
    res = np.zeros(len(family))
    n_edges = 0
    for i, g in enumerate(family):
        ok = admissible_edges(g, direction, speed)
        n_edges += ok.size
        hit = ok & S[g.left]
        res[i] = g.edge_length[hit].sum() + np.count_nonzero(hit) * 0.0
        if hit.any() and res[i] == 0:
            res[i] = np.inf  # cannot happen for nondegenerate edges
    return NullCertificate(S, len(family), n_edges, res, dict(descriptor or {}))


@dataclass
class RainwaterResult:
    A: np.ndarray
    rep: AlbertiRep
    S: np.ndarray
    certificate: NullCertificate
    covered: np.ndarray
    lp_status: str = ""

    def to_json(self):
        return {"A": np.flatnonzero(self.A).tolist(), "S": np.flatnonzero(self.S).tolist(),
                "certificate": self.certificate.to_json(), "rep": self.rep.to_json()}


def rainwater_split(mu, B, family: Sequence[Fragment], direction: Optional[DirectionSpec] = None,
                    speed: Optional[SpeedSpec] = None, space: Optional[MetricSpace] = None, prior=None):
    """Split ``B`` into a represented part ``A`` and a family-null part ``S``.

    Edge masses are the unknowns of a linear program maximizing the covered
    mass subject to not exceeding ``mu`` at any left endpoint. Points that
    receive positive mass (or carry no mass but start an admissible edge)
    form ``A``; masses there are rescaled so that the representation
    decomposes ``mu`` restricted to ``A`` exactly.

    ``prior`` (one nonnegative array per family fragment, one entry per
    edge) selects among the optimal solutions: at every covered point the
    mass is spread over admissible edges in proportion to the prior when the
    prior does not vanish there.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.size
    if space is None:
        if not family:
            raise InputError("rainwater_split needs a space when the family is empty")
        space = family[0].space
    B = _mask(B, n)
    descriptor = {}
    if direction is not None:
        descriptor["direction_axes"] = direction.cone.axes[0].tolist()
        descriptor["alpha"] = float(direction.cone.alpha[0])
    if speed is not None:
        descriptor["sigma_min"] = float(speed.sigma.min(initial=0.0))
        descriptor["strict"] = bool(speed.strict)
    # admissible edges with left endpoint in B
    cols = []  # (fragment index, edge index, left point)
    adm = []
    for i, g in enumerate(family):
        ok = admissible_edges(g, direction, speed)
        adm.append(ok)
        for e in np.flatnonzero(ok & B[g.left]):
            cols.append((i, int(e), int(g.left[e])))
    x = np.zeros(len(cols))
    status = "empty"
    if cols:
        lefts = np.array([c[2] for c in cols])
        rows_pts = np.unique(lefts)
        row_of = {p: r for r, p in enumerate(rows_pts)}
        A_ub = sparse.csr_matrix((np.ones(len(cols)), ([row_of[p] for p in lefts], np.arange(len(cols)))),
                                 shape=(rows_pts.size, len(cols)))
        res = linprog(-np.ones(len(cols)), A_ub=A_ub, b_ub=mu[rows_pts], bounds=(0, None),
                      method="highs", options=HIGHS_OPTIONS)
        if res.status != 0:
            raise ToleranceError(f"coverage LP failed: {res.message}")
        x = np.maximum(res.x, 0.0)
        status = "optimal"
        covered = np.bincount(lefts, weights=x, minlength=n)
        starts = np.zeros(n, dtype=bool)
        starts[lefts] = True
    else:
        covered = np.zeros(n)
        starts = np.zeros(n, dtype=bool)
    A = B & ((covered > 0) | (starts & (mu <= 0)))
    if cols:
        scale = np.where(covered > 0, mu / np.where(covered > 0, covered, 1.0), 0.0)
        x = x * scale[lefts] * A[lefts]
        if prior is not None:
            pw = np.array([float(prior[i][e]) for i, e, _ in cols])
            if np.any(pw < 0):
                raise InputError("prior weights must be nonnegative")
            tot_p = np.bincount(lefts, weights=pw, minlength=n)
            use = (tot_p[lefts] > 0) & A[lefts]
            x = np.where(use, mu[lefts] * pw / np.where(tot_p[lefts] > 0, tot_p[lefts], 1.0), x)
    S = B & ~A
    cert = null_certificate(S, family, direction, speed, descriptor)
    # representation: maximal admissible runs carrying mass
    per_frag = {}
    for (i, e, _), xe in zip(cols, x):
        per_frag.setdefault(i, np.zeros(len(family[i]) - 1))[e] += xe
    frs, masses = [], []
    for i in sorted(per_frag):
        g = family[i]
        m = per_frag[i]
        ok = adm[i]
        e = 0
        while e < ok.size:
            if not ok[e]:
                e += 1
                continue
            lo = e
            while e < ok.size and ok[e]:
                e += 1
            run = m[lo:e]
            if run.sum() > 0:
                frs.append(g.sub(lo, e))
                masses.append(run)
    tot = float(sum(m.sum() for m in masses))
    if tot > 0:
        P = np.array([m.sum() / tot for m in masses])
        nu = [m / p for m, p in zip(masses, P)]
        rep = AlbertiRep(space, frs, P, nu, descriptor)
    else:
        rep = AlbertiRep.empty(space)
    return RainwaterResult(A, rep, S, cert, np.where(A, mu, 0.0), status)


# ---------------------------------------------------------------------------
# biLipschitz refinement


def bilipschitz_refine(rep: AlbertiRep, eps=0.1):
    """Arclength reparametrization and subdivision into ``(1, 1+eps)``-biLipschitz pieces.

    Each edge keeps its measure. Times are rescaled to ``length / (1+eps)``
    per edge; a run is cut whenever some pair would violate
    ``|t - s| <= d(gamma(t), gamma(s))``. Derivative directions and speed
    inequalities are unaffected (both sides scale with the same time factor).
    """
    if eps <= 0:
        raise InputError("eps must be positive")
    frs, P, nu = [], [], []
    dist = rep.space.dist
    for g, p, v in zip(rep.fragments, rep.P, rep.nu):
        live = g.is_edge & (g.left != g.right)
        e = 0
        while e < live.size:
            if not live[e]:
                e += 1
                continue
            start = e
            pts = [int(g.trace[e])]
            times = [0.0]
            ms = []
            while e < live.size and live[e]:
                q = int(g.trace[e + 1])
                t_new = times[-1] + dist[pts[-1], q] / (1 + eps)
                # earlier points of the current piece must stay far enough in time
                ok = all(dist[pts[j], q] >= t_new - times[j] - 1e-12 for j in range(len(pts) - 1))
                if not ok:
                    break
                pts.append(q)
                times.append(t_new)
                ms.append(v[e])
                e += 1
            if len(pts) < 2:
                # the next edge alone is always biLipschitz; cannot reach here
                e = max(e, start + 1)
                continue
            frs.append(Fragment(rep.space, times, pts))
            nu.append(np.array(ms))
            P.append(p)
    if not frs:
        return AlbertiRep.empty(rep.space)
    # split weights so that total P stays 1 and P * nu is unchanged
    P = np.array(P)
    tot = P.sum()
    scale = tot if tot > 0 else 1.0
    P = P / scale
    nu = [m * scale for m in nu]
    return AlbertiRep(rep.space, frs, P, nu, dict(rep.notes, bilipschitz=1 + eps))


def bilipschitz_constant(frag: Fragment):
    """Smallest ``C`` with ``|t-s|/C' <= d <= C |t-s|`` for ``C' = 1`` (lower bound checked)."""
    d = frag.space.dist[np.ix_(frag.trace, frag.trace)]
    gap = np.abs(frag.times[:, None] - frag.times[None, :])
    off = gap > 0
    if not off.any():
        return 1.0, True
    ratio = d[off] / gap[off]
    return float(ratio.max()), bool(ratio.min() >= 1 - 1e-9)


# ---------------------------------------------------------------------------
# cone refinement


def _step_pattern(w, max_steps):
    """Integer step counts whose direction best matches ``w``."""
    w = np.asarray(w, dtype=float)
    a = np.abs(w) / np.abs(w).max()
    best, best_ang = None, np.inf
    for s in range(1, max_steps + 1):
        n = np.rint(a * s).astype(int)
        if n.sum() == 0:
            continue
        v = n * np.sign(w)
        ang = math.acos(min(1.0, float(v @ w) / (np.linalg.norm(v) * np.linalg.norm(w))))
        # acos amplifies rounding near 0, so ties between multiples of one pattern need slack
        if ang < best_ang - 1e-6:
            best, best_ang = n, ang
    return best


def _out_edges(D: Derivation):
    """Forward edges of carrier fragments: point -> list of (target, dt, |weight|).

    Edges with zero density are kept; closure paths follow the geometry of
    the carrier fragments and may leave the support of ``mu``.
    """
    out = {}
    for pc in D.carrier:
        g = pc.fragment
        for e in np.flatnonzero(g.is_edge & (g.left != g.right)):
            out.setdefault(int(g.left[e]), []).append((int(g.right[e]), float(g.dt[e]), abs(pc.weight * pc.nu[e])))
    return out


def _classified_edges(family, G, k):
    """Edges of ``family`` whose ``g``-increment points along a coordinate axis."""
    out = [dict() for _ in range(k)]
    for frag in family:
        for e in np.flatnonzero(frag.is_edge & (frag.left != frag.right)):
            p, q = int(frag.left[e]), int(frag.right[e])
            dg = G[:, q] - G[:, p]
            i = int(np.argmax(np.abs(dg)))
            if dg[i] <= 0 or np.abs(np.delete(dg, i)).max(initial=0.0) > 1e-9 * dg[i]:
                continue
            out[i].setdefault(p, []).append((q, float(frag.dt[e]), 0.0))
    return out


def closure_fragments(Ds: Sequence[Derivation], w, points, max_steps=4, family=None, g=None):
    """Composite two-point fragments following the carriers in the proportions of ``w``.

    From each start point the path takes ``n_i`` carrier steps of ``D_i``
    (backwards when ``w_i < 0``), with ``n`` the best integer pattern for
    ``w``; the axis orders are tried in turn until one stays on the carriers.
    Edges of an optional ``family`` whose increment of ``g`` is a positive
    multiple of ``e_i`` serve as extra ``D_i`` steps (carrier edges win ties).
    The composite fragment joins the start and end points with the summed
    time.
    """
    n = _step_pattern(w, max_steps)
    if n is None or np.count_nonzero(n) < 2:
        return []
    fwd = [_out_edges(D) for D in Ds]
    if family and g is not None:
        G = np.atleast_2d(np.asarray([_values(gi) for gi in g], dtype=float))
        for f, extra in zip(fwd, _classified_edges(family, G, len(Ds))):
            for p, lst in extra.items():
                f.setdefault(p, []).extend(lst)
    bwd = []
    for f in fwd:
        b = {}
        for p, lst in f.items():
            for q, dt, c in lst:
                b.setdefault(q, []).append((p, dt, c))
        bwd.append(b)
    X = Ds[0].space
    out = []
    orders = list(itertools.permutations([i for i in range(len(n)) if n[i]]))
    for x in np.flatnonzero(points):
        for order in orders:
            cur, t, ok = int(x), 0.0, True
            for i in order:
                table = fwd[i] if w[i] >= 0 else bwd[i]
                for _ in range(int(n[i])):
                    lst = table.get(cur)
                    if not lst:
                        ok = False
                        break
                    q, dt, _ = max(lst, key=lambda r: r[2])
                    cur, t = q, t + dt
                if not ok:
                    break
            if ok and cur != x:
                out.append(Fragment(X, [0.0, t], [int(x), cur]))
                break
    return out


@dataclass
class ConeRefineResult:
    rep: AlbertiRep
    speed_bound: np.ndarray
    A: np.ndarray
    S: np.ndarray
    certificate: NullCertificate
    direction: dict
    speed: dict
    uncovered: float

    def to_json(self):
        return {"A": np.flatnonzero(self.A).tolist(), "S": np.flatnonzero(self.S).tolist(),
                "speed_bound_min": float(self.speed_bound[self.A].min(initial=np.inf)) if self.A.any() else None,
                "direction_fraction": self.direction["fraction"], "speed_fraction": self.speed["fraction"],
                "uncovered": self.uncovered, "rep": self.rep.to_json()}


def cone_refine(mu, V, Ds: Sequence[Derivation], g, w, alpha, sigma, family=None, closure=True,
                tol=1e-9, allow_gap=False, carrier_prior=True, closure_family=None):
    """Representation of ``mu`` on ``V`` in the ``g``-direction of ``C(w, alpha)``.

    ``Ds`` must be pseudodual to ``g`` on ``V``. The speed threshold for
    ``<w, g>`` is ``sigma / (|D_w|_loc + 1 - sigma)`` with
    ``D_w = sum w_i D_i``. Candidate fragments are the carrier fragments of
    the ``D_i`` (both orientations), composite closure edges for ``w``, and an
    optional user family; ``closure_family`` adds walkable edges for the
    closure paths. With ``carrier_prior`` the covered mass at each
    point follows the carrier densities of the ``D_i`` where they are
    admissible.

    Raises:
        PseudodualError: if ``D_i g_j`` differs from the identity on ``V``.
        CoverageGap: if the uncovered mass on ``V`` exceeds ``tol`` times
            ``mu(V)`` (unless ``allow_gap``).
    """
    mu = np.asarray(mu, dtype=float)
    X = Ds[0].space
    V = _mask(V, X.n)
    G = np.atleast_2d(np.asarray([_values(gi) for gi in g], dtype=float))
    k = len(Ds)
    w = np.asarray(w, dtype=float)
    if G.shape[0] != k or w.size != k:
        raise InputError("need k derivations, k functions and a k-vector w")
    if abs(np.linalg.norm(w) - 1) > 1e-9:
        raise InputError("w must be a unit vector")
    if not 0 < sigma < 1:
        raise InputError("sigma must lie in (0, 1)")
    live = V & (mu > 0)
    M = np.array([D.apply(G) for D in Ds])  # (k, k, n): D_i g_j
    err = np.abs(M[:, :, live] - np.eye(k)[:, :, None]).max(initial=0.0)
    if err > 1e-7:
        raise PseudodualError(f"derivations are not pseudodual to g on V (error {err:.3g})")
    Dw = None
    for wi, D in zip(w, Ds):
        if wi == 0:
            continue
        term = D * float(wi)
        Dw = term if Dw is None else Dw + term
    ln = Dw.local_norm if Dw is not None else np.zeros(X.n)
    bound = sigma / (ln + 1 - sigma)
    fam, prior = [], []
    for D in Ds:
        for pc in D.carrier:
            fam.append(pc.fragment)
            prior.append(np.abs(pc.weight * pc.nu))
            fam.append(pc.fragment.reversed())
            prior.append(np.zeros(len(pc.fragment) - 1))
    if closure:
        fam.extend(closure_fragments(Ds, w, live, family=closure_family, g=G))
    if family:
        fam.extend(family)
    prior.extend(np.zeros(len(g) - 1) for g in fam[len(prior):])
    cone = ConeField.constant(w, alpha, X.n)
    dspec = DirectionSpec(G, cone)
    sspec = SpeedSpec(w @ G, bound, strict=False)
    rw = rainwater_split(np.where(V, mu, 0.0), V, fam, dspec, sspec, space=X,
                         prior=prior if carrier_prior else None)
    unc = float(mu[rw.S & live].sum())
    total = float(mu[live].sum())
    if unc > tol * max(total, 1e-300) and not allow_gap:
        raise CoverageGap(f"uncovered mass {unc:.3g} of {total:.3g} on V", rw.S & live)
    rep = rw.rep
    rep.notes.update({"w": w.tolist(), "alpha": float(alpha), "sigma": float(sigma)})
    return ConeRefineResult(rep, bound, rw.A, rw.S, rw.certificate, check_direction(rep, dspec),
                            check_speed(rep, sspec), unc)


# ---------------------------------------------------------------------------
# the finite cone estimate


@dataclass
class ConeNullBound:
    direct: float  # |T(chi_K, pi)|
    bound: float  # measured chain
    mass_bound: float  # chain with delta * upper(K)
    delta_mass: float  # delta * upper(K)
    approx_slack: float
    locality_slack: float
    transverse: float
    alternation_residual: float
    net: np.ndarray

    @property
    def ok(self):
        return self.direct <= self.bound * (1 + 1e-9) + 1e-12 and self.bound <= self.mass_bound * (1 + 1e-9) + 1e-12

    @property
    def slack(self):
        return self.approx_slack + self.locality_slack + self.transverse

    def to_json(self):
        return {k: (float(v) if np.isscalar(v) else np.asarray(v).tolist()) for k, v in self.__dict__.items()} | {
            "ok": self.ok}


def _greedy_net(K, dist, r):
    idx = np.flatnonzero(K)
    net = []
    for p in idx:
        if not net or dist[p, net].min() > r:
            net.append(int(p))
    return np.array(net, dtype=int)


def cone_null_estimate(T, K, pis, delta, alpha, certificate: Optional[NullCertificate], net_radius=0.0,
                       upper=None):
    """Finite form of ``|T(chi_K, pi)| <= delta ||T||(K)`` for a family-null set ``K``.

    With a net ``{x_a}`` of ``K`` (radius ``net_radius``) the majorant
    ``F = max_a {pi_1(x_a) - d_{delta,alpha}(., x_a)}`` equals
    ``pi_1(x_a) - d_{delta,alpha}(., x_a)`` on the cell ``S_a`` of points where
    the ``a``-th cone is active. The returned chain splits
    ``T(chi_K, pi)`` into

    * the approximation term ``T(chi_K, pi_1 - F, ...)``;
    * locality terms ``T(chi_{S_a}, F - pi_1(x_a) + d_{delta,alpha}(., x_a), ...)``;
    * ``delta T(chi_{S_a}, d(., x_a), ...)``, bounded by ``delta ||T||(S_a)``;
    * transverse terms ``cot(alpha) T(chi_{S_a}, |pi_b - pi_b(x_a)|, ...)``.

    Every term is evaluated, so ``bound`` is a certified upper bound for the
    direct value; ``mass_bound`` replaces the third item by
    ``delta * upper(K)``.
    """
    if certificate is None:
        raise PreconditionError("cone_null_estimate needs a null certificate for K")
    X = T.space
    n = X.n
    K = _mask(K, n)
    if not certificate.covers(K) or not certificate.ok:
        raise PreconditionError("the certificate does not cover K")
    pis = np.atleast_2d(np.asarray([_values(p) for p in pis], dtype=float))
    k = T.k
    if pis.shape != (k, n):
        raise InputError("need k functions")
    for p in pis:
        if lip_constant(p, X) > 1 + 1e-9:
            raise InputError("the functions pi must be 1-Lipschitz")
    if upper is None:
        from .currents import mass_estimate

        upper = mass_estimate(T).upper
    upper = np.asarray(upper, dtype=float)
    if not K.any():
        z = 0.0
        return ConeNullBound(0.0, 0.0, 0.0, 0.0, z, z, z, z, np.zeros(0, dtype=int))
    rest = list(pis[1:])
    chiK = K.astype(float)
    direct = abs(T.evaluate(chiK, *pis))
    w = np.zeros(k)
    w[0] = 1.0
    dda = dst_delta_alpha(pis, w, delta, alpha, X)
    net = _greedy_net(K, X.dist, net_radius)
    cones = pis[0][net][:, None] - dda[net]  # (a, n)
    F = cones.max(0)
    cell = np.argmax(cones, axis=0)
    approx = abs(T.evaluate(chiK, pis[0] - F, *rest))
    loc = 0.0
    p1 = 0.0
    trans = 0.0
    alt = 0.0
    cot = 1.0 / math.tan(alpha)
    for a, x in enumerate(net):
        Sa = K & (cell == a)
        if not Sa.any():
            continue
        chi = Sa.astype(float)
        loc += abs(T.evaluate(chi, F - pis[0][x] + dda[x], *rest))
        p1 += abs(T.evaluate(chi, X.dist[:, x], *rest))
        for b in range(1, k):
            v = pis[b] - pis[b][x]
            trans += cot * abs(T.evaluate(chi, np.abs(v), *rest))
            # split by sign: both halves vanish by alternation
            for part in (v >= 0, v < 0):
                alt = max(alt, abs(T.evaluate((Sa & part).astype(float), pis[b], *rest)))
    bound = approx + loc + delta * p1 + trans
    dm = delta * float(upper[K].sum())
    mass_bound = approx + loc + dm + trans
    edge = _edgewise_bound(T, K, pis, dda)
    if edge is not None and edge < bound:
        # flow currents: every carrier edge from K obeys |d pi_1| <= d_{delta,alpha}
        bound = edge
        mass_bound = min(mass_bound, edge)
        approx, loc = 0.0, max(edge - dm, 0.0)
        trans = 0.0
    return ConeNullBound(direct, bound, mass_bound, dm, approx, loc, trans, alt, net)


def _edgewise_bound(T, K, pis, dda):
    """``sum_{p in K} |C[p,q]| d_{delta,alpha}(p,q)`` when every edge satisfies the cone bound."""
    from .currents import FlowCurrent

    if not isinstance(T, FlowCurrent):
        return None
    p, q, c = T._edges
    sel = K[p]
    p, q, c = p[sel], q[sel], c[sel]
    if np.any(np.abs(pis[0][q] - pis[0][p]) > dda[p, q] * (1 + 1e-12) + 1e-15):
        return None
    return float((np.abs(c) * dda[p, q]).sum())


# ---------------------------------------------------------------------------
# derivation of a representation


def derivation_of(rep: AlbertiRep, C=None, direction: Optional[DirectionSpec] = None, tol=1e-9):
    """The derivation ``g D f = sum P (f o gamma)' g o gamma nu`` with its checks.

    Returns ``(D, report)``; the report records the largest local norm (and
    whether it stays below ``C``) and, for a direction spec, whether
    ``D F(x)`` lies in the cone at every point of positive mass.
    """
    v = validate(rep, rep.pushforward())
    if v["ac_violations"] or v["negative_nu"]:
        raise InputError("invalid representation")
    mu = rep.pushforward()
    D = Derivation(rep.space, mu, rep.pieces())
    ln = D.local_norm
    report = {"max_local_norm": float(ln.max(initial=0.0))}
    if C is not None:
        report["norm_ok"] = bool(report["max_local_norm"] <= C + tol)
    if direction is not None:
        DF = D.apply(direction.f)
        pts = np.flatnonzero(mu > 0)
        inside = [direction.cone.contains(int(x), DF[:, x]) for x in pts]
        report["cone_ok"] = bool(all(inside))
        report["cone_fraction"] = float(np.mean(inside)) if inside else 1.0
    return D, report


# ---------------------------------------------------------------------------
# the current -> representation pipeline


@dataclass
class AlbertiResult:
    V: List[np.ndarray]
    pis: List[np.ndarray]
    reps: List[List[AlbertiRep]]  # per piece: one rep per coordinate cone
    refined: List[Optional[ConeRefineResult]]
    peeling: List[dict]
    uncovered: float
    total: float
    independence: List[float]
    mass: object = None
    direction_fractions: List[List[float]] = field(default_factory=list)

    @property
    def coverage_ok(self):
        return self.uncovered <= 1e-9 * max(self.total, 1e-300)

    def to_json(self):
        return {
            "pieces": [{"V": np.flatnonzero(V).tolist(), "pis": p.tolist(),
                        "reps": [r.to_json() for r in reps],
                        "refined": (rf.to_json() if rf is not None else None),
                        "peeling": pl, "independence": ind, "direction_fractions": df}
                       for V, p, reps, rf, pl, ind, df in zip(self.V, self.pis, self.reps, self.refined,
                                                              self.peeling, self.independence,
                                                              self.direction_fractions)],
            "uncovered": self.uncovered,
            "total": self.total,
        }


def _current_family(T):
    from .currents import FlowCurrent, FragmentCurrent, Precurrent

    fam = []
    if isinstance(T, FragmentCurrent):
        base = T.fragments()
    elif isinstance(T, Precurrent):
        base = [pc.fragment for D in T.xi.basis for pc in D.carrier]
    elif isinstance(T, FlowCurrent):
        X = T.space
        p, q, _ = T._edges
        base = [Fragment(X, [0.0, X.dist[a, b]], [a, b]) for a, b in zip(p, q) if a != b]
    else:
        base = []
    for g in base:
        fam.append(g)
        fam.append(g.reversed())
    return fam


def current_to_alberti(T, eta=0.9, delta=None, cone=None, fdict=None, family=None, candidates=None,
                       alpha=None, sigma=0.5, eps=None, max_rounds=3, tol=1e-9):
    """Alberti representations of ``||T||`` along efficient tuples of ``T``.

    Steps: witnesses ``(B_j, pi^j)`` from :func:`currents.mass_estimate`;
    for each coordinate direction ``e_i`` a :func:`rainwater_split` of ``B_j``
    in the ``pi^j``-direction of ``C(e_i, alpha)`` with ``pi^j_i``-speed at
    least ``delta``, nested so that all ``k`` directions hold on the final
    set ``V_j``; then, if a target ``cone`` (a unit vector) is given, the
    representation derivations are made pseudodual to ``pi^j`` and refined
    with :func:`cone_refine`. Uncovered points are retried for up to
    ``max_rounds`` rounds.

    The represented measure is the upper mass density; the peeling check uses
    lower bounds on both sides.

    Raises:
        ZeroCurrent: if no candidate tuple sees any mass.
    """
    from .currents import mass_estimate

    k = T.k
    if k < 1:
        raise InputError("current_to_alberti needs k >= 1")
    if delta is None:
        delta = eta / (2 * k)
    if not 0 < delta < eta / k:
        raise InputError("delta must lie in (0, eta/k)")
    if alpha is None:
        alpha = 0.99 * math.atan(1.0 / math.sqrt(k)) if k > 1 else 0.99 * math.pi / 4
    me = mass_estimate(T, eta=eta, fdict=fdict, candidates=candidates)
    if me.upper_total <= 0 or not me.witnesses:
        raise ZeroCurrent("the current vanishes on every candidate tuple")
    X = T.space
    mu_T = me.upper
    fam = _current_family(T) + list(family or [])
    c_peel = float(np.prod([eta - i * delta for i in range(1, k + 1)]))
    remaining = mu_T > 0
    Vs, pis_out, reps_out, refined, peel, indep, fracs = [], [], [], [], [], [], []
    for _round in range(max_rounds):
        progress = False
        for wt in sorted(me.witnesses, key=lambda w_: -w_.lower):
            if not (wt.mask & remaining).any():
                continue
            pis = np.array(wt.pis, dtype=float)
            if wt.sign < 0:
                pis[0] = -pis[0]
            # enlarge the witness set to every remaining point where the tuple is efficient
            dens = T.density(*pis)
            B = remaining & ((wt.mask) | (dens >= eta * mu_T * (1 + 1e-12)))
            efficiency = T.evaluate(B.astype(float), *pis) / max(float(mu_T[B].sum()), 1e-300)
            cur = B.copy()
            stages = []
            for i in range(k):
                e = np.zeros(k)
                e[i] = 1.0
                dspec = DirectionSpec(pis, ConeField.constant(e, alpha, X.n))
                sspec = SpeedSpec(pis[i], delta)
                rw = rainwater_split(np.where(cur, mu_T, 0.0), cur, fam, dspec, sspec, space=X)
                stages.append((rw, dspec))
                cur = rw.A & (mu_T > 0)
            if not cur.any():
                continue
            progress = True
            reps = [restrict(rw.rep, cur) for rw, _ in stages]
            # restricted reps still carry P summing to one only after renormalization
            reps = [_renormalize(r) for r in reps]
            lowB = float(me.lower[B].sum())
            lowA = [float(me.lower[rw.A & wt.mask].sum()) for rw, _ in stages]
            need = [float(np.prod([eta - l * delta for l in range(1, i + 2)])) * lowB for i in range(k)]
            peel.append({
                "efficiency": float(efficiency),
                "lower_A": lowA,
                "required": need,
                "c": c_peel,
                "ok": bool(all(a >= r * (1 - 1e-12) for a, r in zip(lowA, need))),
                "rigorous_ratio": float(me.lower[cur].sum() / max(float(mu_T[B].sum()), 1e-300)),
            })
            # independence of the representation derivations on V
            Dreps = []
            Mdet = np.inf
            if all(len(r) for r in reps):
                muV = np.where(cur, mu_T, 0.0)
                Dreps = [derivation_of(r)[0].with_measure(muV) for r in reps]
                Mx = np.array([D.apply(pis) for D in Dreps])  # (i, l, n)
                dets = np.array([np.linalg.det(Mx[:, :, x]) for x in np.flatnonzero(cur)])
                Mdet = float(np.abs(dets).min(initial=np.inf))
            fr = [check_direction(r, spec)["fraction"] for r, (_, spec) in zip(reps, stages)]
            rf = None
            if cone is not None and Dreps and Mdet > 0:
                rf = _refine_into_cone(Dreps, pis, cur, mu_T, cone, alpha, sigma, tol, family=fam)
            if eps is not None:
                reps = [bilipschitz_refine(r, eps) if len(r) else r for r in reps]
            Vs.append(cur)
            pis_out.append(pis)
            reps_out.append(reps)
            refined.append(rf)
            indep.append(Mdet)
            fracs.append(fr)
            remaining = remaining & ~cur
        if not progress or not remaining.any():
            break
    unc = float(mu_T[remaining].sum())
    return AlbertiResult(Vs, pis_out, reps_out, refined, peel, unc, me.upper_total, indep, me, fracs)


def _renormalize(rep: AlbertiRep):
    masses = rep.edge_masses()
    tot = float(sum(m.sum() for m in masses))
    if tot <= 0:
        return AlbertiRep.empty(rep.space)
    keep = [i for i, m in enumerate(masses) if m.sum() > 0]
    P = np.array([masses[i].sum() / tot for i in keep])
    return AlbertiRep(rep.space, [rep.fragments[i] for i in keep], P,
                      [masses[i] / p for i, p in zip(keep, P)], rep.notes)


def _refine_into_cone(Dreps, pis, V, mu, cone, alpha, sigma, tol, family=None):
    k = len(Dreps)
    X = Dreps[0].space
    Mx = np.array([D.apply(pis) for D in Dreps])  # M[i, l] = D_i pi_l
    Minv = np.zeros_like(Mx)
    for x in np.flatnonzero(V):
        Minv[:, :, x] = np.linalg.inv(Mx[:, :, x])
    # D'_l = sum_i Minv[l, i] D_i, so that D'_l pi_m = delta_lm
    duals = []
    for l in range(k):
        acc = None
        for i in range(k):
            coef = np.where(V, Minv[l, i], 0.0)
            if not np.any(coef):
                continue
            term = module_scale(coef, Dreps[i])
            acc = term if acc is None else acc + term
        duals.append(acc if acc is not None else Derivation.zero(X, Dreps[0].mu))
    if isinstance(cone, ConeField):
        w = cone.axes[int(np.flatnonzero(V)[0])]
        a = float(cone.alpha[int(np.flatnonzero(V)[0])])
    else:
        w = np.asarray(cone, dtype=float)
        w = w / np.linalg.norm(w)
        a = alpha
    return cone_refine(Dreps[0].mu, V, duals, pis, w, a, sigma, tol=tol, allow_gap=True,
                       closure_family=family)
