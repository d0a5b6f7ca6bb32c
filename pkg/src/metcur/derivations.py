"""Carrier-based derivations on finite metric measure spaces.

A derivation is given by a *carrier*: a list of fragments ``gamma`` with a
weight ``P(gamma) >= 0`` and a signed density ``nu`` on the consecutive pairs
of the domain. It acts on functions by

    Df(x) = 1/mu(x) * sum_gamma P(gamma) sum_{edges e starting at x} nu(e) * (f(right) - f(left)) / dt(e).

All the information needed to act on functions is the *flow matrix*
``C[p, q] = sum P nu / dt`` over edges ``p -> q``. Local norms are computed
per point by a linear program over 1-Lipschitz functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence

import numpy as np

from ._lp import kr_sup
from .errors import (
    CarrierMeasureMismatch,
    DependentDerivations,
    InputError,
    NotLipschitz,
    PseudodualError,
)
from .fragments import Fragment, default_nu
from .space import FnDict, MetricSpace, lip_constant

__all__ = [
    "CarrierPiece",
    "Derivation",
    "carrier_flow",
    "apply",
    "apply_right_sampled",
    "local_norm",
    "derivation_norm",
    "normalize",
    "module_scale",
    "pushforward",
    "leibniz_defect",
    "leibniz_bound",
    "chain_rule",
    "chain_rule_bound",
    "PseudodualPiece",
    "PseudodualResult",
    "pseudodual_basis",
    "pseudodual_constant",
]


@dataclass(frozen=True)
class CarrierPiece:
    fragment: Fragment
    weight: float
    nu: np.ndarray

    def scaled_nu(self, factor):
        return CarrierPiece(self.fragment, self.weight, self.nu * factor)


def _as_pieces(carrier):
    out = []
    for item in carrier:
        if isinstance(item, CarrierPiece):
            piece = item
        else:
            frag, w, nu = item
            if nu is None:
                nu = default_nu(frag)
            piece = CarrierPiece(frag, float(w), np.asarray(nu, dtype=float))
        if piece.weight < 0:
            raise InputError("carrier weights must be nonnegative")
        if piece.nu.shape != piece.fragment.dt.shape:
            raise InputError("nu needs one value per consecutive pair of the fragment domain")
        out.append(piece)
    return out


def carrier_flow(n, pieces):
    """Dense flow matrix ``C[p, q]`` of a carrier (diagonal always zero)."""
    C = np.zeros((n, n))
    for pc in pieces:
        fr = pc.fragment
        use = fr.is_edge & (fr.left != fr.right) & (pc.nu != 0)
        if pc.weight == 0 or not use.any():
            continue
        np.add.at(C, (fr.left[use], fr.right[use]), pc.weight * pc.nu[use] / fr.dt[use])
    return C


class Derivation:
    """A derivation of the measure ``mu`` induced by a weighted fragment carrier.

    Args:
        space: the ambient :class:`MetricSpace`.
        mu: reference measure (weights per point).
        carrier: iterable of :class:`CarrierPiece` or ``(fragment, P, nu)``
            tuples; ``nu=None`` stands for the default density ``dt``.
    """

    def __init__(self, space: MetricSpace, mu, carrier=()):
        self.space = space
        m = np.array(mu, dtype=float)
        if m.shape != (space.n,) or np.any(m < 0):
            raise InputError("mu must be a nonnegative vector with one weight per point")
        m.setflags(write=False)
        self.mu = m
        self.carrier: List[CarrierPiece] = _as_pieces(carrier)
        for pc in self.carrier:
            if pc.fragment.space.n != space.n:
                raise InputError("carrier fragment lives in a different space")

    @classmethod
    def zero(cls, space, mu):
        return cls(space, mu, [])

    def __repr__(self):
        return f"Derivation(n={self.space.n}, pieces={len(self.carrier)})"

    # flow data ----------------------------------------------------------
    @cached_property
    def flow(self):
        C = carrier_flow(self.space.n, self.carrier)
        C.setflags(write=False)
        return C

    @cached_property
    def _edges(self):
        p, q = np.nonzero(self.flow)
        return p, q, self.flow[p, q]

    @cached_property
    def mismatch(self):
        """Points carrying flow while ``mu`` vanishes there."""
        return (self.mu <= 0) & (np.abs(self.flow).sum(1) > 0)

    def _check(self):
        if self.mismatch.any():
            raise CarrierMeasureMismatch(
                f"carrier mass lands on points with zero measure: {np.flatnonzero(self.mismatch).tolist()}"
            )

    @cached_property
    def _inv_mu(self):
        return np.where(self.mu > 0, 1.0 / np.where(self.mu > 0, self.mu, 1.0), 0.0)

    def apply(self, f):
        """Action on one function (shape ``(n,)``) or a stack (shape ``(m, n)``)."""
        self._check()
        F = np.asarray(f, dtype=float)
        p, q, c = self._edges
        n = self.space.n
        if F.ndim == 1:
            return np.bincount(p, weights=c * (F[q] - F[p]), minlength=n) * self._inv_mu
        out = np.empty(F.shape)
        for r in range(F.shape[0]):
            out[r] = np.bincount(p, weights=c * (F[r, q] - F[r, p]), minlength=n)
        return out * self._inv_mu

    def generator(self):
        """The matrix ``G`` with ``Df = G f``; rows sum to zero."""
        self._check()
        C = self.flow
        G = (C - np.diag(C.sum(1))) * self._inv_mu[:, None]
        return G

    # local norms ----------------------------------------------------------
    @cached_property
    def _norm_data(self):
        n = self.space.n
        vals = np.zeros(n)
        wit = np.zeros((n, n))
        C = self.flow
        for x in range(n):
            if self.mu[x] <= 0:
                continue
            row = C[x].copy()
            if not np.any(row):
                continue
            row[x] = -row.sum()
            v, f = kr_sup(row, self.space.dist)
            vals[x] = max(v, 0.0) / self.mu[x]
            wit[x] = f - f[x]
        vals.setflags(write=False)
        wit.setflags(write=False)
        return vals, wit

    @property
    def local_norm(self):
        """Per point local norm (the value of the Lipschitz LP divided by ``mu``)."""
        self._check()
        return self._norm_data[0]

    @property
    def witnesses(self):
        """Row ``x`` is a 1-Lipschitz function vanishing at ``x`` attaining the local norm there."""
        return self._norm_data[1]

    @property
    def norm(self):
        return float(self.local_norm.max(initial=0.0))

    @property
    def support(self):
        """Points where some carrier edge starts (and ``mu > 0``)."""
        return (np.abs(self.flow).sum(1) > 0) & (self.mu > 0)

    # module structure -----------------------------------------------------
    def _compatible(self, other):
        if not isinstance(other, Derivation):
            return NotImplemented
        if other.space is not self.space and other.space.n != self.space.n:
            raise InputError("derivations live on different spaces")
        if not np.allclose(other.mu, self.mu, rtol=1e-12, atol=0):
            raise InputError("derivations refer to different measures")
        return True

    def __add__(self, other):
        if self._compatible(other) is NotImplemented:
            return NotImplemented
        return Derivation(self.space, self.mu, self.carrier + other.carrier)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        c = float(c)
        return Derivation(self.space, self.mu, [pc.scaled_nu(c) for pc in self.carrier])

    __rmul__ = __mul__

    def scale(self, lam):
        return module_scale(lam, self)

    def restrict(self, mask):
        return module_scale(np.asarray(mask, dtype=float), self)

    def with_measure(self, mu):
        """Same carrier, new reference measure."""
        return Derivation(self.space, mu, self.carrier)


def apply(D: Derivation, f):
    return D.apply(f)


def apply_right_sampled(D: Derivation, f, g):
    """``1/mu(x) sum_e c_e f(right) (g(right) - g(left))``.

    With this sampling the product rule ``D(fg) = [f Dg]_right + g Df`` holds
    exactly.
    """
    D._check()
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    p, q, c = D._edges
    return np.bincount(p, weights=c * f[q] * (g[q] - g[p]), minlength=D.space.n) * D._inv_mu


def local_norm(D: Derivation):
    return D.local_norm


def derivation_norm(D: Derivation):
    return D.norm


def module_scale(lam, D: Derivation):
    """Multiply by a function: each edge density is scaled at its left endpoint."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (D.space.n,))
    pieces = []
    for pc in D.carrier:
        s = lam[pc.fragment.left]
        if np.any(s != 0):
            pieces.append(CarrierPiece(pc.fragment, pc.weight, pc.nu * s))
    return Derivation(D.space, D.mu, pieces)


def normalize(D: Derivation, tol=0.0):
    """Scale ``D`` pointwise by the reciprocal of its local norm (zero where it vanishes)."""
    ln = D.local_norm
    pos = ln > tol
    lam = np.where(pos, 1.0 / np.where(pos, ln, 1.0), 0.0)
    return module_scale(lam, D)


def leibniz_defect(D: Derivation, f, g):
    """``D(fg) - f Dg - g Df`` computed from its closed form ``1/mu sum c df dg``."""
    D._check()
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    p, q, c = D._edges
    return np.bincount(p, weights=c * (f[q] - f[p]) * (g[q] - g[p]), minlength=D.space.n) * D._inv_mu


def leibniz_bound(D: Derivation, f, g):
    """Pointwise bound ``lip(f) lip(g) / mu(x) sum_e |c_e| d(e)^2`` on the Leibniz defect."""
    D._check()
    p, q, c = D._edges
    d2 = D.space.dist[p, q] ** 2
    s = np.bincount(p, weights=np.abs(c) * d2, minlength=D.space.n) * D._inv_mu
    return lip_constant(f, D.space) * lip_constant(g, D.space) * s


def pushforward(F, D: Derivation, target: MetricSpace, lip_bound=None):
    """Push a derivation forward along a map between finite spaces.

    ``F`` maps point indices of ``D.space`` to point indices of ``target``.
    With ``lip_bound`` given, the map is checked to be ``lip_bound``-Lipschitz
    and :class:`NotLipschitz` names the first violating pair otherwise.
    """
    F = np.asarray(F, dtype=int)
    X = D.space
    if F.shape != (X.n,):
        raise InputError("the map needs one image per point")
    if F.min() < 0 or F.max() >= target.n:
        raise InputError("image index out of range")
    if lip_bound is not None:
        dy = target.dist[np.ix_(F, F)]
        bad = dy > lip_bound * X.dist * (1 + 1e-12) + 1e-15
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise NotLipschitz(f"map is not {lip_bound}-Lipschitz on the pair ({int(i)}, {int(j)})")
    mu_y = np.bincount(F, weights=D.mu, minlength=target.n)
    pieces = []
    for pc in D.carrier:
        fr = pc.fragment
        g = Fragment(target, fr.times, F[fr.trace], fr.h_max, edges=fr.is_edge)
        pieces.append(CarrierPiece(g, pc.weight, pc.nu))
    return Derivation(target, mu_y, pieces)


def chain_rule(D: Derivation, grad: Callable, psis):
    """``sum_l dg/dy_l(psi(x)) D psi_l(x)``.

    Args:
        grad: callable mapping an array of shape ``(k, n)`` of values of the
            ``psi_l`` to the gradient array of the same shape.
        psis: array ``(k, n)``.
    """
    psis = np.atleast_2d(np.asarray(psis, dtype=float))
    G = np.atleast_2d(np.asarray(grad(psis), dtype=float))
    return (G * D.apply(psis)).sum(0)


def chain_rule_bound(D: Derivation, hess_sup, psis):
    """Pointwise bound on ``|D(g o psi) - chain_rule|`` from a Hessian bound.

    Second order Taylor expansion along each edge gives
    ``hess_sup / 2 * 1/mu(x) sum_e |c_e| |psi(right) - psi(left)|^2``.
    """
    psis = np.atleast_2d(np.asarray(psis, dtype=float))
    D._check()
    p, q, c = D._edges
    dpsi2 = ((psis[:, q] - psis[:, p]) ** 2).sum(0)
    return 0.5 * hess_sup * np.bincount(p, weights=np.abs(c) * dpsi2, minlength=D.space.n) * D._inv_mu


# ---------------------------------------------------------------------------
# pseudodual functions


def pseudodual_constant(k, eps):
    """Bound ``k! (1 - eps)^-k`` on the norms of the pseudodual derivations."""
    return math.factorial(k) * (1.0 - eps) ** (-k)


@dataclass
class PseudodualPiece:
    mask: np.ndarray
    derivations: list  # D_{alpha, i}
    g: np.ndarray  # (k, n) 1-Lipschitz functions g_{alpha, j}
    M: np.ndarray  # (n, k, k) triangular matrix tilde D_i g_j (zero off the mask)
    tilde: list  # normalized Gram-Schmidt derivations restricted to the piece

    @property
    def det(self):
        d = np.zeros(self.mask.size)
        if self.M.shape[1]:
            d[self.mask] = np.prod(np.diagonal(self.M[self.mask], axis1=1, axis2=2), axis=1)
        return d


@dataclass
class PseudodualResult:
    pieces: List[PseudodualPiece]
    eps: float
    k: int
    source: list = field(default_factory=list)

    @property
    def constant(self):
        return pseudodual_constant(self.k, self.eps)

    def basis(self):
        """``D_i = sum_alpha D_{alpha, i}`` (each piece is supported on its own set)."""
        if not self.pieces:
            return []
        out = []
        for i in range(self.k):
            acc = self.pieces[0].derivations[i]
            for pc in self.pieces[1:]:
                acc = acc + pc.derivations[i]
            out.append(acc)
        return out

    def report(self, fdict: Optional[FnDict] = None):
        """Numerical certificates of the construction."""
        k = self.k
        duality = 0.0
        min_diag = np.inf
        det_lo, det_hi = np.inf, -np.inf
        max_entry = 0.0
        max_norm = 0.0
        recon = 0.0
        for pc in self.pieces:
            V = pc.mask
            if not V.any():
                continue
            for i, D in enumerate(pc.derivations):
                vals = D.apply(pc.g)[:, V]
                target = np.zeros_like(vals)
                target[i] = 1.0
                duality = max(duality, float(np.abs(vals - target).max()))
                max_norm = max(max_norm, float(D.local_norm[V].max()))
            diag = np.diagonal(pc.M[V], axis1=1, axis2=2)
            min_diag = min(min_diag, float(diag.min()))
            max_entry = max(max_entry, float(np.abs(pc.M[V]).max()))
            det = pc.det[V]
            det_lo, det_hi = min(det_lo, float(det.min())), max(det_hi, float(det.max()))
            if self.source and fdict is not None:
                probes = fdict.values
                for Di in self.source:
                    coef = Di.apply(pc.g)  # c_ij = D_i g_j
                    lhs = Di.apply(probes)[:, V]
                    rhs = sum(coef[j][None, :] * pc.derivations[j].apply(probes) for j in range(k))[:, V]
                    recon = max(recon, float(np.abs(lhs - rhs).max()))
        return {
            "pieces": len(self.pieces),
            "duality_error": duality,
            "min_diagonal": min_diag,
            "max_entry": max_entry,
            "det_range": [det_lo, det_hi],
            "max_local_norm": max_norm,
            "norm_bound": self.constant,
            "span_error": recon,
        }


def _candidates(fdict: Optional[FnDict], n):
    if fdict is None:
        return np.zeros((0, n))
    U = fdict.unit()
    return np.vstack([U, -U]) if U.size else U


def pseudodual_basis(Ds: Sequence[Derivation], fdict: Optional[FnDict] = None, eps=0.5,
                     support=None, vanish_tol=1e-9):
    """Partition the support and build pseudodual derivations and functions.

    Gram-Schmidt sweep: each new derivation has its components along the
    earlier normalized derivations removed (using the functions already
    chosen), is normalized, and the support is exhausted by sets where some
    1-Lipschitz function has derivative at least ``1 - eps``. Candidates come
    from ``fdict`` (and their negatives) in order; if none covers a remaining
    point, the local-norm witness of the lowest-index remaining point is used.

    Returns:
        :class:`PseudodualResult`.
    """
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0, 1)")
    Ds = list(Ds)
    if not Ds:
        raise InputError("need at least one derivation")
    X = Ds[0].space
    mu = Ds[0].mu
    n = X.n
    k = len(Ds)
    if support is None:
        support = mu > 0
    support = np.asarray(support, dtype=bool) & (mu > 0)
    cands = _candidates(fdict, n)
    pieces = [(support, [], [])]
    for step, D in enumerate(Ds):
        new = []
        base_ln = D.local_norm
        for V, tilde, gs in pieces:
            Dk = module_scale(V.astype(float), D)
            for Dt, g in zip(tilde, gs):
                num = Dk.apply(g)
                den = Dt.apply(g)
                coef = np.where(V, num / np.where(V, den, 1.0), 0.0)
                Dk = Dk - module_scale(coef, Dt)
            ln = Dk.local_norm
            vanish = V & (ln <= vanish_tol * np.maximum(base_ln, 1.0))
            if mu[vanish].sum() > 0:
                raise DependentDerivations(
                    f"derivation {step} depends on the previous ones on {np.flatnonzero(vanish).tolist()}",
                    mask=vanish,
                )
            Dn = normalize(Dk)
            vals = Dn.apply(cands) if len(cands) else np.zeros((0, n))
            remaining = V.copy()
            while remaining.any():
                best, W = None, None
                if len(cands):
                    hits = (vals >= 1 - eps) & remaining[None, :]
                    mass = (hits * mu[None, :]).sum(1)
                    j = int(np.argmax(mass))
                    if mass[j] > 0:
                        best, W = cands[j], hits[j]
                if best is None:
                    x = int(np.flatnonzero(remaining)[0])
                    best = Dn.witnesses[x]
                    W = remaining & (Dn.apply(best) >= 1 - eps)
                    W[x] = True
                Wf = W.astype(float)
                new.append((W, [module_scale(Wf, t) for t in tilde] + [module_scale(Wf, Dn)], gs + [best]))
                remaining &= ~W
        pieces = new
    out = []
    for V, tilde, gs in pieces:
        g = np.array(gs)
        M = np.zeros((n, k, k))
        for i, Dt in enumerate(tilde):
            M[:, i, :] = Dt.apply(g).T
        M[~V] = 0.0
        Minv = np.zeros_like(M)
        Minv[V] = np.linalg.inv(M[V])
        ders = []
        for i in range(k):
            acc = module_scale(Minv[:, i, 0], tilde[0])
            for j in range(1, k):
                acc = acc + module_scale(Minv[:, i, j], tilde[j])
            ders.append(acc)
        out.append(PseudodualPiece(V, ders, g, M, tilde))
    return PseudodualResult(out, eps, k, source=Ds)
