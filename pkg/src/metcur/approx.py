"""Normal forms of representations and approximation of 1-currents by normal currents.

The pipeline for a 1-current ``T`` in fragment form:

1. ``D_T`` and ``||T||`` (:func:`currents.der_of_current`);
2. pseudodual pieces of ``D_T`` with functions ``g`` (``D g = 1`` on each piece);
3. a representation of ``||T||`` on each piece in the ``g``-direction
   (:func:`alberti.cone_refine`, following the carrier of ``T``);
4. curves on ``[0, 1]`` with edge densities ``h`` (:func:`curves_normal_form`),
   so that ``T`` is approximately ``N`` restricted by ``h`` with ``N`` the
   (normal) sum of the curve currents;
5. a least-absolute-deviation fit ``g_n`` of ``h`` from a dictionary, giving
   the normal current ``N`` restricted by ``g_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._lp import HIGHS_OPTIONS
from .alberti import AlbertiRep, DirectionSpec, SpeedSpec, cone_refine, derivation_of
from .currents import FlowCurrent, FragmentCurrent, der_of_current, flow_decompose, is_normal
from .derivations import CarrierPiece, Derivation, pseudodual_basis
from .errors import (CoverageGap, DirectionFailure, DirectionLost, InputError, NotNormalType,
                     PreconditionError, ToleranceError)
from .fragments import Fragment, default_nu, fill_fragment, reparametrize_unit
from .space import FnDict, MetricSpace, cone_contains, lip_constant, macshane_extend

__all__ = [
    "curves_normal_form",
    "NormalDerivation",
    "normal_derivation_from_rep",
    "vectorfield_direction_rep",
    "NormalApproxReport",
    "approximate_by_normal",
    "fit_density",
]


# ---------------------------------------------------------------------------
# curves normal form


def _fill_gaps(frag: Fragment, space: MetricSpace, step):
    """Fill every non-edge pair of ``frag`` affinely; returns (times, trace, origin, space).

    ``origin[j]`` is the index of the original domain time at position ``j``
    (``-1`` for inserted points).
    """
    times = [float(frag.times[0])]
    trace = [int(frag.trace[0])]
    origin = [0]
    edge_kind = []  # True for original edges, False for filled ones
    for e in range(len(frag) - 1):
        u, v = float(frag.times[e]), float(frag.times[e + 1])
        if frag.is_edge[e]:
            times.append(v)
            trace.append(int(frag.trace[e + 1]))
            origin.append(e + 1)
            edge_kind.append(True)
            continue
        m = max(1, int(math.ceil((v - u) / step - 1e-9)))
        piece = Fragment(space, [u, v], [frag.trace[e], frag.trace[e + 1]], edges=[False])
        filled = fill_fragment(piece, (v - u) / m)
        space = filled.space
        for t, p in zip(filled.times[1:], filled.trace[1:]):
            times.append(float(t))
            trace.append(int(p))
            origin.append(-1)
            edge_kind.append(False)
        origin[-1] = e + 1
    return np.array(times), np.array(trace), np.array(origin), np.array(edge_kind, dtype=bool), space


def curves_normal_form(rep: AlbertiRep, direction: Optional[DirectionSpec] = None,
                       speed: Optional[SpeedSpec] = None, step=None):
    """Fill gaps affinely and reparametrize every fragment onto ``[0, 1]``.

    Original edges keep their measure; inserted edges get measure zero, so
    the pushforward on the original points is unchanged. The density ``h``
    of ``nu`` against the length measure of the curve (``nu = h dt md`` per
    edge) is stored per curve in ``notes["h"]``, and the original duration
    of every curve in ``notes["duration"]``. Direction and speed are rechecked on inserted edges;
    the functions in the specs are extended to new points linearly in the
    coordinates when they are coordinate functions, and by McShane extension
    otherwise.

    Raises:
        PreconditionError: if the space has no coordinates.
        DirectionLost: if an inserted edge leaves the cone or violates the
            speed bound (``gap = (curve index, edge index)``).
    """
    X = rep.space
    if X.coords is None:
        raise PreconditionError("curves_normal_form needs coordinates")
    space = X
    raw = []
    for g in rep.fragments:
        st = step
        if st is None:
            live = g.dt[g.is_edge]
            st = float(live.min()) if live.size else float(g.dt.min()) if g.dt.size else 1.0
        t, tr, orig, kind, space = _fill_gaps(g, space, st)
        raw.append((t, tr, orig, kind))
    frs, nus, hs, filled, durations = [], [], [], [], []
    for i, ((t, tr, orig, kind), g, v) in enumerate(zip(raw, rep.fragments, rep.nu)):
        L = t[-1] - t[0]
        tt = (t - t[0]) / L if L > 0 else np.zeros_like(t)
        fr = Fragment(space, tt, tr) if tt.size > 1 else Fragment(space, [0.0], tr)
        nu = np.zeros(max(tr.size - 1, 0))
        # original edge e starts at the position of original index e
        pos = {int(o): j for j, o in enumerate(orig) if o >= 0}
        for e in range(len(g) - 1):
            if g.is_edge[e]:
                nu[pos[e]] = v[e]
        frs.append(fr)
        nus.append(nu)
        ln = fr.dt * fr.edge_md
        hs.append(np.where(ln > 0, nu / np.where(ln > 0, ln, 1.0), 0.0))
        durations.append(float(L))
        filled.append(np.flatnonzero(~kind).tolist())
    out = AlbertiRep(space, frs, rep.P, nus, dict(rep.notes))
    out.notes["h"] = [h.tolist() for h in hs]
    out.notes["filled"] = filled
    out.notes["duration"] = durations
    if direction is not None or speed is not None:
        d_ext = _extend_spec_fn(direction.f, X, space) if direction is not None else None
        s_ext = _extend_spec_fn(speed.g[None, :], X, space)[0] if speed is not None else None
        for i, (fr, fl) in enumerate(zip(frs, filled)):
            for e in fl:
                if fr.left[e] == fr.right[e]:
                    continue
                if direction is not None:
                    u = (d_ext[:, fr.right[e]] - d_ext[:, fr.left[e]]) / fr.dt[e]
                    ax = direction.cone.axes[min(int(fr.left[e]), X.n - 1)]
                    al = direction.cone.alpha[min(int(fr.left[e]), X.n - 1)]
                    if not cone_contains(ax, al, u):
                        raise DirectionLost(f"filled edge {e} of curve {i} leaves the cone", gap=(i, e))
                if speed is not None:
                    der = (s_ext[fr.right[e]] - s_ext[fr.left[e]]) / fr.dt[e]
                    sig = speed.sigma[min(int(fr.left[e]), X.n - 1)]
                    if der < sig * fr.edge_md[e] - 1e-12:
                        raise DirectionLost(f"filled edge {e} of curve {i} is too slow", gap=(i, e))
    return out


def _extend_spec_fn(F, X: MetricSpace, Y: MetricSpace):
    """Values of the rows of ``F`` on the extension ``Y`` of ``X``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if Y.n == X.n:
        return F
    out = np.zeros((F.shape[0], Y.n))
    out[:, : X.n] = F
    # affine in the coordinates?
    A = np.c_[X.coords, np.ones(X.n)]
    for r, f in enumerate(F):
        coef, *_ = np.linalg.lstsq(A, f, rcond=None)
        if np.allclose(A @ coef, f, atol=1e-12 * max(1.0, np.abs(f).max())):
            out[r] = np.c_[Y.coords, np.ones(Y.n)] @ coef
        else:
            out[r] = macshane_extend(f, np.arange(X.n), Y.dist if hasattr(Y, "dist") else Y)
    return out


# ---------------------------------------------------------------------------
# normal derivations


@dataclass
class NormalDerivation:
    """``D = lam D_N`` with ``N`` the normal current of the curves."""

    D: Derivation
    N: FragmentCurrent
    lam: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def D_N(self):
        return Derivation(self.N.space, self.D.mu, self.N.pieces)


def normal_derivation_from_rep(rep: AlbertiRep, fdict: Optional[FnDict] = None, tol=1e-9):
    """Extract ``N = sum P [gamma]`` and the density ``lam`` with ``D_rep = lam D_N``.

    ``lam`` is the ratio of the actions of ``D_rep`` and ``D_N`` on the
    dictionary (coordinates and distance functions by default) and must be
    the same for every dictionary function at every point.

    Raises:
        NotNormalType: if the ratio depends on the function.
    """
    X = rep.space
    D, _ = derivation_of(rep)
    N = FragmentCurrent(X, [CarrierPiece(g, float(p), default_nu(g)) for g, p in zip(rep.fragments, rep.P)])
    DN = Derivation(X, D.mu, N.pieces)
    probes = (fdict if fdict is not None else FnDict.standard(X)).values[1:]
    a = D.apply(probes)
    b = DN.apply(probes)
    live = D.mu > 0
    lam = np.zeros(X.n)
    worst = 0.0
    for x in np.flatnonzero(live):
        bx, ax = b[:, x], a[:, x]
        scale = max(np.abs(bx).max(initial=0.0), np.abs(ax).max(initial=0.0), 1e-300)
        nz = np.abs(bx) > 1e-12 * scale
        if not nz.any():
            if np.abs(ax).max(initial=0.0) > tol * max(scale, 1.0):
                raise NotNormalType(f"D acts at point {x} where D_N vanishes")
            continue
        j = int(np.argmax(np.abs(bx)))
        r = ax[j] / bx[j]
        err = float(np.abs(ax - r * bx).max() / scale)
        worst = max(worst, err)
        if err > tol:
            raise NotNormalType(f"ratio D f / D_N f depends on f at point {x} (spread {err:.3g})")
        lam[x] = r
    if np.any(lam < -tol):
        raise NotNormalType("negative density")
    lam = np.maximum(lam, 0.0)
    dec = flow_decompose(FlowCurrent(X, N.flow))
    rep_n = is_normal(N, axiom_trials=5)
    bd = N.boundary().density()
    open_w = sum(2 * p for g, p in zip(rep.fragments, rep.P) if g.trace[0] != g.trace[-1])
    report = {
        "ratio_spread": worst,
        "decomposition_residual": dec.residual,
        "is_normal": bool(rep_n),
        "boundary_tv": float(np.abs(bd).sum()),
        "boundary_tv_expected": float(open_w),
    }
    return NormalDerivation(D, N, lam, report)


# ---------------------------------------------------------------------------
# vector-field direction


def vectorfield_direction_rep(ND: NormalDerivation, F, tol=1e-9, angle_tol=1e-6, strict=True):
    """Representation of ``mu`` off ``{DF = 0}`` along curves with ``(F o gamma)' = lam DF``.

    The normal current ``N`` is decomposed into weighted paths, which are
    restricted to ``{DF != 0}`` and reparametrized to be 1-Lipschitz. Each
    edge is tested for ``(F o gamma)'`` being a positive multiple of ``DF`` at
    its left endpoint (up to ``angle_tol`` in ``1 - cos``). The mass of ``mu``
    at each point is spread over the path edges starting there in
    proportion to ``weight * dt``.

    Returns ``(rep, report)``; the report lists failing edges with the
    coordinate test that separates the two directions.

    Raises:
        DirectionFailure: if ``strict`` and the failing mass exceeds ``tol``.
    """
    X = ND.N.space
    F = np.atleast_2d(np.asarray(F, dtype=float))
    mu = ND.D.mu
    DF = ND.D.apply(F)
    nz = np.linalg.norm(DF, axis=0) > 0
    dec = flow_decompose(FlowCurrent(X, ND.N.flow))
    if dec.residual > tol:
        raise PreconditionError("the normal current does not decompose")
    frs, ws = [], []
    for g, w in dec.paths:
        # restriction to {DF != 0}: an edge survives when its left endpoint does
        if not nz[g.left].any():
            continue
        r = reparametrize_unit(g)
        frs.append(Fragment(X, r.times, r.trace, edges=r.is_edge & nz[r.left]))
        ws.append(w)
    # distribute mu over path edges
    share = np.zeros(X.n)
    for g, w in zip(frs, ws):
        live = g.is_edge & (g.left != g.right)
        share += np.bincount(g.left[live], weights=w * g.dt[live], minlength=X.n)
    target = np.where(nz, mu, 0.0)
    masses = []
    for g, w in zip(frs, ws):
        live = g.is_edge & (g.left != g.right)
        m = np.where(live, w * g.dt * target[g.left] / np.where(share[g.left] > 0, share[g.left], 1.0), 0.0)
        masses.append(m)
    tot = float(sum(m.sum() for m in masses))
    fails, fail_mass, tests = [], 0.0, []
    for i, (g, m) in enumerate(zip(frs, masses)):
        for e in np.flatnonzero(m > 0):
            u = (F[:, g.right[e]] - F[:, g.left[e]]) / g.dt[e]
            v = DF[:, g.left[e]]
            nu_, nv = np.linalg.norm(u), np.linalg.norm(v)
            ok = nu_ > 0 and nv > 0 and (1 - float(u @ v) / (nu_ * nv)) <= angle_tol
            if not ok:
                fails.append((i, int(e)))
                fail_mass += float(m[e])
                if nu_ == 0:
                    tests.append({"edge": [i, int(e)], "w": "w0", "coord": None})
                else:
                    diff = np.sign(u) != np.sign(np.round(v, 15))
                    j = int(np.argmax(diff)) if diff.any() else int(np.argmax(np.abs(u / max(nu_, 1e-300) - v / max(nv, 1e-300))))
                    tests.append({"edge": [i, int(e)], "coord": j, "sign": float(np.sign(u[j]))})
    if tot > 0:
        P = np.array([m.sum() / tot for m in masses])
        keep = P > 0
        rep = AlbertiRep(X, [g for g, k in zip(frs, keep) if k], P[keep],
                         [m / p for m, p, k in zip(masses, P, keep) if k], {"vector_field": True})
    else:
        rep = AlbertiRep.empty(X)
    report = {"fail_mass": fail_mass, "failing_edges": fails, "tests": tests,
              "uncovered": float(target[share <= 0].sum()), "null_set": np.flatnonzero(~nz & (mu > 0)).tolist()}
    if strict and fail_mass > tol:
        raise DirectionFailure(f"{len(fails)} edges are not in the direction of DF (mass {fail_mass:.3g})",
                               edges=fails, fail_mass=fail_mass, tests=tests)
    return rep, report


# ---------------------------------------------------------------------------
# approximation by normal currents


def fit_density(targets, lefts, weights, Phi, lip_cap=None, glips=None):
    """Least absolute deviation fit ``min sum w |target - (Phi^T c)(left)|``.

    ``Phi`` has one dictionary function per row. With ``lip_cap`` the
    coefficients obey ``sum |c_j| glip_j <= lip_cap``.

    Returns ``(g, c, residual)``.
    """
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    m = Phi.shape[0]
    E = targets.size
    A = Phi[:, lefts].T  # (E, m)
    # variables: c+ (m), c- (m), t (E)
    cost = np.r_[np.zeros(2 * m), weights]
    I = sparse.identity(E, format="csr")
    As = sparse.csr_matrix(A)
    A_ub = sparse.vstack([sparse.hstack([As, -As, -I]), sparse.hstack([-As, As, -I])], format="csr")
    b_ub = np.r_[targets, -targets]
    if lip_cap is not None:
        gl = np.asarray(glips, dtype=float)
        row = sparse.csr_matrix(np.r_[gl, gl, np.zeros(E)][None, :])
        A_ub = sparse.vstack([A_ub, row], format="csr")
        b_ub = np.r_[b_ub, lip_cap]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs", options=HIGHS_OPTIONS)
    if res.status != 0:
        raise ToleranceError(f"density fit failed: {res.message}")
    c = res.x[:m] - res.x[m:2 * m]
    g = c @ Phi
    resid = float((weights * np.abs(targets - g[lefts])).sum())
    return g, c, resid


@dataclass
class NormalApproxReport:
    currents: List[FragmentCurrent]
    errors: List[float]
    fit_residuals: List[float]
    reconstruction: float
    lipschitz: float
    provenance: List[dict] = field(default_factory=list)
    normal: List[bool] = field(default_factory=list)
    curves: Optional[AlbertiRep] = None

    @property
    def final_error(self):
        return self.errors[-1] if self.errors else 0.0

    def to_json(self):
        return {"errors": self.errors, "fit_residuals": self.fit_residuals,
                "reconstruction": self.reconstruction, "lipschitz": self.lipschitz,
                "normal": self.normal, "provenance": self.provenance}


def _dict_rows(d, X: MetricSpace, Y: MetricSpace):
    vals = d.values if isinstance(d, FnDict) else np.atleast_2d(np.asarray(d, dtype=float))
    if vals.shape[1] == Y.n:
        return vals
    if vals.shape[1] != X.n:
        raise InputError("dictionary functions have the wrong length")
    return _extend_spec_fn(vals, X, Y)


def _pad_flow(C, n):
    out = np.zeros((n, n))
    out[: C.shape[0], : C.shape[1]] = C
    return out


def approximate_by_normal(T, dictionaries: Sequence, eps=1e-3, fdict: Optional[FnDict] = None,
                          sigma=0.5, lip_cap=None, check_normal=True):
    """Normal currents ``N_n`` approaching ``T``, one per dictionary.

    ``e_n`` bounds the mass of ``T - N_n`` by
    ``||T - N h|| + sum P |h - g_n| dt md``, where the first term is computed
    exactly by linear programming and the second is the weighted fit
    residual (at most the Lipschitz constant of the curves times the
    ``L^1`` distance). The emitted sequence keeps the best fit so far, so it
    never increases.

    Args:
        T: a 1-current (flow currents are decomposed into paths first).
        dictionaries: sequence of :class:`FnDict` or arrays of functions.
        eps: target for the final error (reported, not enforced).
        fdict: dictionary used for the pseudodual reduction (standard by default).
    """
    X = T.space
    if T.k != 1:
        raise InputError("approximate_by_normal needs a 1-current")
    if X.coords is None:
        raise PreconditionError("approximate_by_normal needs coordinates")
    if not isinstance(T, FragmentCurrent):
        T = flow_decompose(T).current(X)
    mass = T.mass()
    if mass.sum() <= 0:
        return NormalApproxReport([], [0.0], [0.0], 0.0, 0.0, [{"note": "zero current"}], [], None)
    D_T, m = der_of_current(T, mass)
    pd = pseudodual_basis([D_T], fdict if fdict is not None else FnDict.standard(X, n_dist=0), eps=0.5)
    # T's own edge measure at every point, to convert representation masses back to T
    S = np.zeros(X.n)
    for pc in T.pieces:
        g = pc.fragment
        S += np.bincount(g.left, weights=np.abs(pc.weight * pc.nu), minlength=X.n)
    rho = np.where(mass > 0, S / np.where(mass > 0, mass, 1.0), 0.0)
    frs, P, nus, prov = [], [], [], []
    for piece in pd.pieces:
        res = cone_refine(mass, piece.mask, [piece.derivations[0]], [piece.g[0]], np.array([1.0]),
                          math.pi / 4, sigma, closure=False, allow_gap=True)
        r = res.rep
        w = float(mass[piece.mask].sum())
        for g, p, v in zip(r.fragments, r.P, r.nu):
            frs.append(g)
            P.append(p * w)
            nus.append(v * rho[g.left] / w)
        prov.append({"piece_points": int(piece.mask.sum()), "uncovered": res.uncovered,
                     "fragments": len(r)})
    # P_final nu_final = p v rho, with P_final = p w / mass(X)
    totw = float(mass.sum())
    P = np.array(P) / totw
    nus = [v * totw for v in nus]
    rep_T = AlbertiRep(X, frs, P, nus)
    curves = curves_normal_form(rep_T)
    Y = curves.space
    N_pieces = [CarrierPiece(g, float(p), default_nu(g)) for g, p in zip(curves.fragments, curves.P)]
    # density of T against N: nu over the original time increments (rescaling onto [0, 1]
    # multiplies the speed by the duration)
    he = [np.asarray(v) / (g.dt * L) if L > 0 else np.zeros(len(g) - 1)
          for g, v, L in zip(curves.fragments, curves.nu, curves.notes["duration"])]
    # one value per point: average over the curve edges starting there, weighted by P * length
    num = np.zeros(Y.n)
    den = np.zeros(Y.n)
    for g, p, h in zip(curves.fragments, curves.P, he):
        ln = p * g.dt * g.edge_md
        num += np.bincount(g.left, weights=ln * h, minlength=Y.n)
        den += np.bincount(g.left, weights=ln, minlength=Y.n)
    lam = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    hs = [lam[g.left] for g in curves.fragments]
    Nh = FragmentCurrent(Y, [CarrierPiece(g, float(p), h * g.dt) for g, p, h in zip(curves.fragments, curves.P, hs)])
    recon = float(FlowCurrent(Y, _pad_flow(T.flow, Y.n) - Nh.flow).mass().sum())
    lefts = np.concatenate([g.left for g in curves.fragments])
    targets = np.concatenate(hs)
    wts = np.concatenate([p * g.dt * g.edge_md for g, p in zip(curves.fragments, curves.P)])
    C = max((float(g.edge_md.max(initial=0.0)) for g in curves.fragments), default=0.0)
    currents, errors, fits, normal = [], [], [], []
    best = None
    for idx, d in enumerate(dictionaries):
        Phi = _dict_rows(d, X, Y)
        gl = np.array([lip_constant(v, Y) for v in Phi]) if lip_cap is not None else None
        gvals, coef, resid = fit_density(targets, lefts, wts, Phi, lip_cap, gl)
        if best is not None and resid >= best[1]:
            gvals, resid = best
            prov.append({"dictionary": idx, "size": int(Phi.shape[0]), "kept_previous": True})
        else:
            prov.append({"dictionary": idx, "size": int(Phi.shape[0]), "kept_previous": False})
        best = (gvals, resid)
        Ng = FragmentCurrent(Y, [CarrierPiece(pc.fragment, pc.weight, pc.nu * gvals[pc.fragment.left])
                                 for pc in N_pieces])
        currents.append(Ng)
        errors.append(recon + resid)
        fits.append(resid)
        if check_normal:
            normal.append(bool(is_normal(Ng, axiom_trials=5)))
    rep = NormalApproxReport(currents, errors, fits, recon, C, prov, normal, curves)
    rep.provenance.append({"eps": eps, "reached": bool(errors and errors[-1] <= eps)})
    return rep
