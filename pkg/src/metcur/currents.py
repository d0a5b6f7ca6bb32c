"""Metric functionals and currents on finite metric spaces.

Every current here is determined by its *density*: the vector
``x -> T(chi_x, pi_1, ..., pi_k)``, so that ``T(f, pi) = sum_x f(x) T(chi_x, pi)``.

Concrete forms:

* :class:`PointCurrent` -- 0-currents (signed point masses);
* :class:`FlowCurrent` -- 1-currents ``sum_{p,q} f(p) C[p,q] (pi(q) - pi(p))``;
* :class:`FragmentCurrent` -- flow currents built from weighted fragments;
* :class:`Precurrent` -- ``sum_x f mu <xi, dpi_1 ^ ... ^ dpi_k>`` for a k-vector field ``xi``;
* :class:`FunctionalCurrent` -- anything given by a density callback.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence

import numpy as np

from ._lp import kr_sup
from .derivations import CarrierPiece, Derivation, carrier_flow, module_scale
from .errors import InputError, PreconditionError
from .exterior import KVector, alt_det
from .fragments import Fragment, default_nu
from .space import FnDict, MetricSpace, lip_constant

__all__ = [
    "Current",
    "PointCurrent",
    "FlowCurrent",
    "FragmentCurrent",
    "Precurrent",
    "FunctionalCurrent",
    "SumCurrent",
    "evaluate",
    "boundary",
    "restrict",
    "MassEstimate",
    "Witness",
    "mass_estimate",
    "der_of_current",
    "curr_of_derivation",
    "normal_norm",
    "NormalityReport",
    "is_normal",
    "check_axioms",
    "EdgeFlow",
    "FlowDecomposition",
    "flow_decompose",
]


def _pis(pis, n):
    return [np.asarray(p, dtype=float).reshape(n) for p in pis]


class Current:
    """Base class. Subclasses implement :meth:`density`."""

    k: int
    space: MetricSpace

    def density(self, *pis):
        raise NotImplementedError

    def evaluate(self, f, *pis):
        if len(pis) != self.k:
            raise InputError(f"a {self.k}-current takes {self.k} functions after f, got {len(pis)}")
        f = np.broadcast_to(np.asarray(f, dtype=float), (self.space.n,))
        return float(np.dot(f, self.density(*pis)))

    def __call__(self, f, *pis):
        return self.evaluate(f, *pis)

    def boundary(self):
        if self.k == 0:
            return PointCurrent(self.space, np.zeros(self.space.n))
        parent = self
        return FunctionalCurrent(
            self.space, self.k - 1,
            lambda *pis: _boundary_density(parent, pis),
            neighborhood=self.neighborhood,
        )

    def neighborhood(self, mask):
        """Points where ``pi`` must be constant for locality at ``mask`` (default: all)."""
        return np.ones(self.space.n, dtype=bool)

    def mass_upper(self):
        return np.full(self.space.n, np.inf)

    def restrict(self, psi, *pis):
        return _generic_restrict(self, psi, pis)

    def __add__(self, other):
        return SumCurrent([self, other], [1.0, 1.0])

    def __sub__(self, other):
        return SumCurrent([self, other], [1.0, -1.0])

    def __mul__(self, c):
        return SumCurrent([self], [float(c)])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _boundary_density(T, pis):
    n = T.space.n
    one = np.ones(n)
    out = np.empty(n)
    for p in range(n):
        e = np.zeros(n)
        e[p] = 1.0
        out[p] = T.evaluate(one, e, *pis)
    return out


def _generic_restrict(T, psi, pis):
    l = len(pis)
    if l > T.k:
        raise InputError("cannot restrict by more functions than the dimension")
    n = T.space.n
    psi = np.broadcast_to(np.asarray(psi, dtype=float), (n,)).copy()
    pis = _pis(pis, n)

    def dens(*rest):
        return psi * T.density(*pis, *rest)

    def nb(mask):
        return T.neighborhood(mask)

    up = T.mass_upper() * np.abs(psi) * float(np.prod([lip_constant(p, T.space) for p in pis]))
    return FunctionalCurrent(T.space, T.k - l, dens, neighborhood=nb, upper=up)


class PointCurrent(Current):
    """The 0-current ``f -> sum_x f(x) m(x)``."""

    k = 0

    def __init__(self, space, m):
        self.space = space
        self.m = np.asarray(m, dtype=float).reshape(space.n)

    def density(self):
        return self.m.copy()

    def neighborhood(self, mask):
        return np.asarray(mask, dtype=bool)

    def mass_upper(self):
        return np.abs(self.m)

    def restrict(self, psi):
        return PointCurrent(self.space, self.m * np.asarray(psi, dtype=float))

    def __add__(self, other):
        if isinstance(other, PointCurrent):
            return PointCurrent(self.space, self.m + other.m)
        return super().__add__(other)

    def __mul__(self, c):
        return PointCurrent(self.space, float(c) * self.m)

    __rmul__ = __mul__


class FlowCurrent(Current):
    """The 1-current ``sum_{p != q} f(p) C[p, q] (pi(q) - pi(p))``."""

    k = 1

    def __init__(self, space, flow):
        self.space = space
        C = np.array(flow, dtype=float)
        np.fill_diagonal(C, 0.0)
        C.setflags(write=False)
        self._flow = C

    @property
    def flow(self):
        return self._flow

    @cached_property
    def _edges(self):
        p, q = np.nonzero(self.flow)
        return p, q, self.flow[p, q]

    def density(self, pi):
        pi = np.asarray(pi, dtype=float)
        p, q, c = self._edges
        return np.bincount(p, weights=c * (pi[q] - pi[p]), minlength=self.space.n)

    def matrix(self):
        C = self.flow
        return C - np.diag(C.sum(1))

    def boundary(self):
        C = self.flow
        return PointCurrent(self.space, C.sum(0) - C.sum(1))

    def neighborhood(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return mask | (np.abs(self.flow[mask]).sum(0) > 0)

    @cached_property
    def _mass_data(self):
        n = self.space.n
        vals = np.zeros(n)
        wit = np.zeros((n, n))
        for x in range(n):
            row = self.flow[x].copy()
            if not np.any(row):
                continue
            row[x] = -row.sum()
            v, f = kr_sup(row, self.space.dist)
            vals[x] = max(v, 0.0)
            wit[x] = f - f[x]
        return vals, wit

    def mass(self):
        """Exact mass per point (a Kantorovich-Rubinstein norm of the outgoing flow)."""
        return self._mass_data[0].copy()

    def mass_upper(self):
        return self.mass()

    def pushforward_bound(self):
        """``sum_q |C[p, q]| d(p, q)``, the mass bound from speeds."""
        return (np.abs(self.flow) * self.space.dist).sum(1)

    def restrict(self, psi, *pis):
        if len(pis) == 1:
            return PointCurrent(self.space, np.asarray(psi, dtype=float) * self.density(pis[0]))
        if pis:
            raise InputError("cannot restrict a 1-current by more than one function")
        psi = np.broadcast_to(np.asarray(psi, dtype=float), (self.space.n,))
        return FlowCurrent(self.space, psi[:, None] * self.flow)

    def __add__(self, other):
        if isinstance(other, FlowCurrent):
            return FlowCurrent(self.space, self.flow + other.flow)
        return super().__add__(other)

    def __mul__(self, c):
        return FlowCurrent(self.space, float(c) * self.flow)

    __rmul__ = __mul__


class FragmentCurrent(FlowCurrent):
    """Sum of weighted fragment currents ``P [gamma, nu]``.

    Each piece contributes ``P * sum_e f(left) (pi(right) - pi(left)) / dt * nu(e)``.
    """

    def __init__(self, space, pieces):
        from .derivations import _as_pieces

        self.pieces: List[CarrierPiece] = _as_pieces(pieces)
        super().__init__(space, carrier_flow(space.n, self.pieces))

    def restrict(self, psi, *pis):
        if pis:
            return super().restrict(psi, *pis)
        psi = np.broadcast_to(np.asarray(psi, dtype=float), (self.space.n,))
        return FragmentCurrent(self.space, [CarrierPiece(pc.fragment, pc.weight, pc.nu * psi[pc.fragment.left])
                                            for pc in self.pieces])

    def __add__(self, other):
        if isinstance(other, FragmentCurrent):
            return FragmentCurrent(self.space, self.pieces + other.pieces)
        return FlowCurrent.__add__(self, other)

    def __mul__(self, c):
        return FragmentCurrent(self.space, [pc.scaled_nu(float(c)) for pc in self.pieces])

    __rmul__ = __mul__

    def fragments(self):
        return [pc.fragment for pc in self.pieces]


class Precurrent(Current):
    """``T(f, pi) = sum_x f(x) mu(x) <xi, dpi_1 ^ ... ^ dpi_k>(x)``."""

    def __init__(self, xi: KVector, mu):
        self.xi = xi
        self.space = xi.space
        self.mu = np.asarray(mu, dtype=float).reshape(self.space.n)
        self.k = xi.k

    def density(self, *pis):
        if len(pis) != self.k:
            raise InputError(f"a {self.k}-current takes {self.k} functions, got {len(pis)}")
        if self.k == 0:
            return self.mu * self.xi.pairing(np.zeros((0, self.space.n)))
        return self.mu * self.xi.pairing(np.array(_pis(pis, self.space.n)))

    @cached_property
    def _generators(self):
        return [D.generator() for D in self.xi.basis]

    def neighborhood(self, mask):
        mask = np.asarray(mask, dtype=bool)
        out = mask.copy()
        for G in self._generators:
            out |= np.abs(G[mask]).sum(0) > 0
        return out

    def mass_upper(self):
        return math.factorial(self.k) * self.xi.upper() * self.mu

    def to_flow(self):
        """For k = 1: the equivalent :class:`FlowCurrent`."""
        if self.k != 1:
            raise InputError("only 1-precurrents are flow currents")
        C = np.zeros((self.space.n, self.space.n))
        for (i,), lam in self.xi.coeffs.items():
            D = self.xi.basis[i]
            # D.flow already carries D.mu (D pi = flow . dpi / D.mu)
            scale = np.where(D.mu > 0, self.mu / np.where(D.mu > 0, D.mu, 1.0), 0.0)
            C += (scale * lam)[:, None] * D.flow
        return FlowCurrent(self.space, C)

    def boundary(self):
        n = self.space.n
        if self.k == 0:
            return PointCurrent(self.space, np.zeros(n))
        if self.k == 1:
            m = np.zeros(n)
            for (i,), lam in self.xi.coeffs.items():
                m += (self.mu * lam) @ self._generators[i]
            return PointCurrent(self.space, m)
        if self.k == 2:
            A = np.zeros((n, n))
            for (i, j), lam in self.xi.coeffs.items():
                w = (self.mu * lam)[:, None]
                Gi, Gj = self._generators[i], self._generators[j]
                A += (w * Gi).T @ Gj - (w * Gj).T @ Gi
            return FlowCurrent(self.space, A)
        up = self._boundary_upper()
        parent = self
        return FunctionalCurrent(self.space, self.k - 1, lambda *pis: _boundary_density(parent, pis),
                                 neighborhood=self.neighborhood, upper=up)

    def _boundary_upper(self):
        """Per point bound on the boundary mass from a first-column expansion."""
        n = self.space.n
        k = self.k
        ln = np.array([D.local_norm for D in self.xi.basis])
        out = np.zeros(n)
        for a, lam in self.xi.coeffs.items():
            w = self.mu * np.abs(lam)
            for i in range(k):
                rest = [a[j] for j in range(k) if j != i]
                minor = math.factorial(k - 1) * np.prod(ln[rest], axis=0)
                out += (w * minor) @ np.abs(self._generators[a[i]])
        return out

    def restrict(self, psi, *pis):
        """Interior product by ``(psi, pi_1..pi_l)`` via a Laplace expansion."""
        l = len(pis)
        if l > self.k:
            raise InputError("cannot restrict by more functions than the dimension")
        n = self.space.n
        psi = np.broadcast_to(np.asarray(psi, dtype=float), (n,))
        if l == 0:
            return Precurrent(self.xi.scale(psi), self.mu)
        pis = np.array(_pis(pis, n))
        Dp = self.xi.derivatives(pis)  # (N, l, n)
        coeffs = {}
        for a, lam in self.xi.coeffs.items():
            for I in itertools.combinations(range(self.k), l):
                J = [j for j in range(self.k) if j not in I]
                sign = (-1) ** (sum(I) + sum(range(l)))
                M = np.moveaxis(Dp[[a[i] for i in I]], -1, 0)
                b = tuple(a[j] for j in J)
                v = sign * lam * psi * alt_det(M)
                coeffs[b] = coeffs[b] + v if b in coeffs else v
        return Precurrent(KVector(self.xi.basis, self.k - l, coeffs), self.mu)

    def __add__(self, other):
        if isinstance(other, Precurrent) and other.k == self.k and np.array_equal(other.mu, self.mu):
            try:
                return Precurrent(self.xi + other.xi, self.mu)
            except InputError:
                pass
        return super().__add__(other)

    def __mul__(self, c):
        return Precurrent(self.xi * c, self.mu)

    __rmul__ = __mul__


class FunctionalCurrent(Current):
    """A current given by a density callback."""

    def __init__(self, space, k, density, neighborhood=None, upper=None):
        self.space = space
        self.k = k
        self._density = density
        self._nb = neighborhood
        self._upper = upper

    def density(self, *pis):
        if len(pis) != self.k:
            raise InputError(f"a {self.k}-current takes {self.k} functions, got {len(pis)}")
        return np.asarray(self._density(*_pis(pis, self.space.n)), dtype=float)

    def neighborhood(self, mask):
        if self._nb is None:
            return super().neighborhood(mask)
        return self._nb(mask)

    def mass_upper(self):
        if self._upper is None:
            return super().mass_upper()
        return np.asarray(self._upper, dtype=float)


class SumCurrent(Current):
    def __init__(self, terms, coeffs):
        ks = {t.k for t in terms}
        if len(ks) != 1:
            raise InputError("cannot add currents of different dimensions")
        self.terms = list(terms)
        self.coeffs = [float(c) for c in coeffs]
        self.k = ks.pop()
        self.space = terms[0].space

    def density(self, *pis):
        out = np.zeros(self.space.n)
        for c, t in zip(self.coeffs, self.terms):
            out = out + c * t.density(*pis)
        return out

    def boundary(self):
        return SumCurrent([t.boundary() for t in self.terms], self.coeffs)

    def neighborhood(self, mask):
        out = np.zeros(self.space.n, dtype=bool)
        for t in self.terms:
            out |= t.neighborhood(mask)
        return out

    def mass_upper(self):
        return sum(abs(c) * t.mass_upper() for c, t in zip(self.coeffs, self.terms))


def evaluate(T: Current, f, *pis):
    return T.evaluate(f, *pis)


def boundary(T: Current):
    return T.boundary()


def restrict(T: Current, psi, *pis):
    return T.restrict(psi, *pis)


# ---------------------------------------------------------------------------
# mass


@dataclass
class Witness:
    mask: np.ndarray
    pis: np.ndarray
    sign: float
    value: float  # |T(chi_B, pi)|
    lower: float  # lower mass of B

    def to_json(self):
        return {"set": np.flatnonzero(self.mask).tolist(), "sign": self.sign,
                "value": self.value, "lower": self.lower, "pis": self.pis.tolist()}


@dataclass
class MassEstimate:
    lower: np.ndarray
    upper: np.ndarray
    witnesses: List[Witness] = field(default_factory=list)
    eta: float = 0.9
    gap: float = 0.0

    @property
    def lower_total(self):
        return float(self.lower.sum())

    @property
    def upper_total(self):
        return float(self.upper.sum())

    def to_json(self):
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "lower_total": self.lower_total,
            "upper_total": self.upper_total,
            "gap": self.gap,
            "eta": self.eta,
            "witnesses": [w.to_json() for w in self.witnesses],
        }


def _candidate_tuples(k, fdict, candidates, X):
    tuples = []
    if fdict is not None:
        U = fdict.unit()
        for c in itertools.combinations(range(len(U)), k):
            tuples.append(U[list(c)])
    for c in candidates or ():
        c = np.atleast_2d(np.asarray(c, dtype=float))
        if c.shape[0] == k:
            tuples.append(c)
    return tuples


def mass_estimate(T: Current, eta=0.9, fdict: Optional[FnDict] = None, candidates=None, tol=1e-9):
    """Certified mass interval with witness sets.

    The upper bound is exact for 0- and 1-currents in flow form (a per-point
    linear program) and ``k! |xi|_loc mu`` for precurrents. The lower bound is
    the best ``|T(chi_x, pi)| / prod glip(pi_j)`` over candidate tuples: all
    ``k``-subsets of the (rescaled) dictionary plus any explicit candidates,
    and, for 1-currents, the per-point linear program witnesses.

    Witness sets group points by their best candidate and its sign, so
    ``|T(chi_B, pi)| = lower(B) > eta * lower(B)`` on each of them.
    """
    if not 0 < eta < 1:
        raise InputError("eta must lie in (0, 1)")
    X = T.space
    n = X.n
    k = T.k
    if isinstance(T, Precurrent) and k == 1:
        T1 = T.to_flow()
    else:
        T1 = T
    tuples = _candidate_tuples(k, fdict, candidates, X) if k > 0 else [np.zeros((0, n))]
    best = np.zeros(n)
    arg = np.full(n, -1)
    sgn = np.ones(n)
    for j, pis in enumerate(tuples):
        c = float(np.prod([lip_constant(p, X) for p in pis])) if k else 1.0
        if c <= 0:
            continue
        dens = T.density(*pis) / c
        better = np.abs(dens) > best * (1 + 1e-12) + 1e-300
        best = np.where(better, np.abs(dens), best)
        arg = np.where(better, j, arg)
        sgn = np.where(better, np.sign(dens), sgn)
    if k == 0:
        upper = np.abs(T.density())
        lower = upper.copy()
    elif isinstance(T1, FlowCurrent):
        exact, wit = T1._mass_data
        upper = exact.copy()
        lower = exact.copy()
        # use the exact per-point witness where the dictionary falls short
        extra = {}
        for x in np.flatnonzero(exact > best * (1 + 1e-9) + 1e-15):
            extra[x] = len(tuples)
            tuples.append(wit[x][None, :])
            arg[x] = extra[x]
            sgn[x] = 1.0
            best[x] = exact[x]
    else:
        upper = T.mass_upper()
        lower = np.minimum(best, upper)
    upper = np.maximum(upper, lower)
    witnesses = []
    groups = {}
    for x in np.flatnonzero(lower > 0):
        if arg[x] >= 0:
            groups.setdefault((int(arg[x]), float(sgn[x])), []).append(x)
    for (j, s), pts in sorted(groups.items()):
        mask = np.zeros(n, dtype=bool)
        mask[pts] = True
        pis = tuples[j]
        c = float(np.prod([lip_constant(p, X) for p in pis])) if k else 1.0
        pis_n = pis / c ** (1.0 / k) if k and c > 0 else pis
        val = abs(T.evaluate(mask.astype(float), *pis_n)) if k else abs(T.evaluate(mask.astype(float)))
        witnesses.append(Witness(mask, np.asarray(pis_n), s, val, float(lower[mask].sum())))
    tot = upper.sum()
    uncovered = upper[lower <= 0].sum()
    gap = float(uncovered / tot) if tot > 0 else 0.0
    return MassEstimate(lower, upper, witnesses, eta, gap)


# ---------------------------------------------------------------------------
# derivations <-> 1-currents


def der_of_current(T: Current, mu_ref):
    """The derivation ``D_T`` and mass ``||T||`` with ``T(f, pi) = sum f D_T(pi) ||T||``.

    ``D_T`` has the carrier of ``T`` rescaled by ``mu_ref / ||T||``, so it is a
    derivation of ``mu_ref`` with local norm one on the support of ``||T||``.
    """
    if not isinstance(T, FragmentCurrent):
        raise InputError("der_of_current needs a fragment-sum 1-current (decompose flows first)")
    mu_ref = np.asarray(mu_ref, dtype=float)
    m = T.mass()
    pos = m > 0
    if np.any(pos & (mu_ref <= 0)):
        raise PreconditionError("the reference measure vanishes where the current has mass")
    lam = np.where(pos, mu_ref / np.where(pos, m, 1.0), 0.0)
    pieces = [CarrierPiece(pc.fragment, pc.weight, pc.nu * lam[pc.fragment.left]) for pc in T.pieces]
    pieces = [pc for pc in pieces if np.any(pc.nu)]
    return Derivation(T.space, mu_ref, pieces), m


def curr_of_derivation(D: Derivation, mu):
    """The 1-current ``f dpi -> sum_x f(x) D pi(x) mu(x)`` in fragment form."""
    mu = np.asarray(mu, dtype=float)
    pos = D.mu > 0
    lam = np.where(pos, mu / np.where(pos, D.mu, 1.0), 0.0)
    same = np.array_equal(mu, D.mu)
    pieces = [pc if same else CarrierPiece(pc.fragment, pc.weight, pc.nu * lam[pc.fragment.left])
              for pc in D.carrier]
    return FragmentCurrent(D.space, pieces)


# ---------------------------------------------------------------------------
# normality


def normal_norm(T: Current):
    """``||T||(X) + ||dT||(X)`` using upper mass bounds (exact for 1-currents in flow form)."""
    if T.k < 1:
        raise InputError("normal_norm needs k >= 1")
    up = T.to_flow().mass() if isinstance(T, Precurrent) and T.k == 1 else T.mass_upper()
    return float(up.sum() + T.boundary().mass_upper().sum())


@dataclass
class NormalityReport:
    normal: bool
    mass_upper: float
    boundary_upper: float
    exceeds_threshold: bool
    axioms: Optional[dict] = None
    reason: str = ""

    def __bool__(self):
        return self.normal

    def to_json(self):
        return {
            "normal": self.normal,
            "mass_upper": self.mass_upper,
            "boundary_upper": self.boundary_upper,
            "exceeds_threshold": self.exceeds_threshold,
            "reason": self.reason,
        }


def is_normal(T: Current, threshold=np.inf, fdict=None, axiom_trials=20, axiom_tol=1e-9, rng=None):
    """Finite-scale normality check.

    Runs :func:`check_axioms` first; a current failing it is reported as not
    normal. Otherwise the boundary mass bound is finite by construction and is
    returned together with a flag telling whether it exceeds ``threshold``.
    """
    ax = check_axioms(T, trials=axiom_trials, fdict=fdict, rng=rng)
    if ax["max_violation"] > axiom_tol:
        return NormalityReport(False, np.nan, np.nan, False, ax, "axiom check failed")
    mu = T.to_flow().mass() if isinstance(T, Precurrent) and T.k == 1 else T.mass_upper()
    if T.k == 0:
        b = 0.0
    else:
        b = float(T.boundary().mass_upper().sum())
    ok = np.isfinite(b)
    return NormalityReport(bool(ok), float(np.sum(mu)), b, bool(b > threshold), ax,
                           "" if ok else "boundary mass bound unavailable")


def check_axioms(T: Current, trials=20, fdict=None, rng=None):
    """Randomized check of multilinearity, alternation and locality.

    Locality is tested in its finite-scale form: ``pi`` constant on the
    neighbourhood of ``{f != 0}`` reachable by one carrier step (for currents
    without carrier information, on the whole space). The continuity axiom has
    no finite-space content and is not tested.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X = T.space
    n = X.n
    k = T.k
    pool = None
    if fdict is not None:
        pool = np.vstack([fdict.values, fdict.unit()])

    def rand_fn():
        if pool is not None and rng.random() < 0.5:
            return pool[rng.integers(len(pool))] * rng.normal()
        return rng.normal(size=n)

    lin = alt = loc = 0.0
    for _ in range(trials):
        f1, f2 = rand_fn(), rand_fn()
        pis = [rand_fn() for _ in range(k)]
        a, b = rng.normal(size=2)
        # linearity in f
        lhs = T.evaluate(a * f1 + b * f2, *pis)
        r1, r2 = T.evaluate(f1, *pis), T.evaluate(f2, *pis)
        lin = max(lin, abs(lhs - a * r1 - b * r2) / (1 + abs(a * r1) + abs(b * r2)))
        # linearity in each slot
        for j in range(k):
            q = rand_fn()
            mix = list(pis)
            mix[j] = a * pis[j] + b * q
            alt_q = list(pis)
            alt_q[j] = q
            v0, v1 = T.evaluate(f1, *pis), T.evaluate(f1, *alt_q)
            lhs = T.evaluate(f1, *mix)
            lin = max(lin, abs(lhs - a * v0 - b * v1) / (1 + abs(a * v0) + abs(b * v1)))
        # alternation under adjacent swaps
        for j in range(k - 1):
            sw = list(pis)
            sw[j], sw[j + 1] = sw[j + 1], sw[j]
            v, w = T.evaluate(f1, *pis), T.evaluate(f1, *sw)
            alt = max(alt, abs(v + w) / (1 + abs(v)))
        # locality
        if k > 0:
            S = rng.random(n) < rng.uniform(0.1, 0.6)
            if not S.any():
                S[rng.integers(n)] = True
            f = np.where(S, rng.normal(size=n), 0.0)
            nb = T.neighborhood(S)
            j = int(rng.integers(k))
            loc_pis = list(pis)
            loc_pis[j] = np.where(nb, rng.normal(), pis[j])
            v = T.evaluate(f, *loc_pis)
            scale = 1 + float(np.abs(f).sum() * max(1.0, *[np.abs(p).max() for p in loc_pis]))
            loc = max(loc, abs(v) / scale)
    return {
        "multilinearity": lin,
        "alternation": alt,
        "locality": loc,
        "max_violation": max(lin, alt, loc),
        "trials": trials,
        "continuity": "not represented on finite spaces",
    }


from .flows import EdgeFlow, FlowDecomposition, flow_decompose  # noqa: E402
