"""k-vectors of derivations, determinant pairings, norm bounds and the representation of k-currents.

A :class:`KVector` over a basis ``D_1..D_N`` stores one coefficient function
per increasing index tuple ``a = (a_1 < ... < a_k)``. Pairing it with the
k-form ``dpi_1 ^ ... ^ dpi_k`` gives, at each point,

    <xi, dpi>(x) = sum_a lambda_a(x) det(D_{a_i} pi_j (x)).

Determinants are evaluated with a Leibniz expansion whose positive and
negative products are summed separately after sorting. Exchanging two
columns exchanges the two multisets, so the pairing flips sign exactly in
floating point.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np

from .derivations import Derivation, PseudodualResult, module_scale
from .errors import InputError, PreconditionError, ToleranceError
from .space import lip_constant, lip_constant_l2

__all__ = [
    "alt_det",
    "KVector",
    "KForm",
    "NormInterval",
    "pairing",
    "banach_norm_upper",
    "local_norm_bounds",
    "wedge",
    "Representation",
    "represent_current",
]


@lru_cache(maxsize=None)
def _perms(k):
    out = []
    for p in itertools.permutations(range(k)):
        inv = sum(1 for i in range(k) for j in range(i + 1, k) if p[i] > p[j])
        out.append((p, 1 if inv % 2 == 0 else -1))
    return out


def alt_det(M):
    """Determinants of a stack ``(..., k, k)`` that are exactly alternating in the columns."""
    M = np.asarray(M, dtype=float)
    k = M.shape[-1]
    if k == 0:
        return np.ones(M.shape[:-2])
    if k == 1:
        return M[..., 0, 0].copy()
    if k == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    pos, neg = [], []
    for p, s in _perms(k):
        t = M[..., 0, p[0]]
        for i in range(1, k):
            t = t * M[..., i, p[i]]
        (pos if s > 0 else neg).append(t)
    P = np.sort(np.stack(pos, -1), axis=-1)
    N = np.sort(np.stack(neg, -1), axis=-1)
    sp = P[..., 0]
    sn = N[..., 0]
    for i in range(1, P.shape[-1]):
        sp = sp + P[..., i]
        sn = sn + N[..., i]
    return sp - sn


def _sort_sign(t):
    """Sort a tuple, returning (sorted tuple, sign) or (None, 0) if it repeats an index."""
    t = list(t)
    if len(set(t)) < len(t):
        return None, 0
    sign = 1
    for i in range(len(t)):
        for j in range(len(t) - 1 - i):
            if t[j] > t[j + 1]:
                t[j], t[j + 1] = t[j + 1], t[j]
                sign = -sign
    return tuple(t), sign


class KVector:
    """A field of k-vectors ``sum_a lambda_a D_{a_1} ^ ... ^ D_{a_k}``.

    Args:
        basis: list of ``N`` derivations sharing space and measure.
        k: degree.
        coeffs: mapping from index tuples (0-based, any order) to per-point
            coefficient arrays. Tuples are sorted with the matching sign and
            repeated tuples are added.
    """

    def __init__(self, basis: Sequence[Derivation], k: int, coeffs: Dict[tuple, np.ndarray]):
        self.basis = list(basis)
        self.k = int(k)
        if self.k < 0:
            raise InputError("degree must be nonnegative")
        # a degree above the basis size is allowed; every tuple then repeats an index and drops out
        n = self.basis[0].space.n if self.basis else 0
        table: Dict[tuple, np.ndarray] = {}
        for a, lam in coeffs.items():
            a = tuple(int(i) for i in a)
            if len(a) != self.k or any(i < 0 or i >= self.N for i in a):
                raise InputError(f"bad index tuple {a}")
            s, sign = _sort_sign(a)
            if s is None:
                continue
            lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
            table[s] = table[s] + sign * lam if s in table else sign * lam.copy()
        self.coeffs = dict(sorted(table.items()))

    @classmethod
    def simple(cls, basis, a, coeff=1.0):
        return cls(basis, len(a), {tuple(a): coeff})

    @classmethod
    def zero(cls, basis, k):
        return cls(basis, k, {})

    @property
    def N(self):
        return len(self.basis)

    @property
    def space(self):
        return self.basis[0].space

    @property
    def mu(self):
        return self.basis[0].mu

    @property
    def tuples(self):
        return list(self.coeffs)

    def coeff(self, a):
        s, sign = _sort_sign(a)
        n = self.space.n
        if s is None or s not in self.coeffs:
            return np.zeros(n)
        return sign * self.coeffs[s]

    def table(self):
        """Coefficients over all of ``Lambda_{k,N}`` in lexicographic order."""
        tups = list(itertools.combinations(range(self.N), self.k))
        return tups, np.array([self.coeff(a) for a in tups]).reshape(len(tups), self.space.n)

    def __add__(self, other):
        if not isinstance(other, KVector) or other.k != self.k or other.basis is not self.basis and \
                any(a is not b for a, b in zip(other.basis, self.basis)):
            raise InputError("k-vectors must share degree and basis")
        c = {a: v.copy() for a, v in self.coeffs.items()}
        for a, v in other.coeffs.items():
            c[a] = c[a] + v if a in c else v.copy()
        return KVector(self.basis, self.k, c)

    def __mul__(self, c):
        return KVector(self.basis, self.k, {a: float(c) * v for a, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def scale(self, lam):
        lam = np.asarray(lam, dtype=float)
        return KVector(self.basis, self.k, {a: lam * v for a, v in self.coeffs.items()})

    def restrict(self, mask):
        return self.scale(np.asarray(mask, dtype=float))

    # evaluation ---------------------------------------------------------------
    def derivatives(self, pis):
        """Array ``(N, k, n)`` of ``D_i pi_j``."""
        pis = np.atleast_2d(np.asarray(pis, dtype=float))
        return np.stack([D.apply(pis) for D in self.basis]) if self.basis else np.zeros((0,) + pis.shape)

    def pairing(self, pis):
        pis = np.atleast_2d(np.asarray(pis, dtype=float)) if self.k else np.zeros((0, self.space.n))
        if pis.shape[0] != self.k:
            raise InputError(f"pairing a {self.k}-vector needs {self.k} functions, got {pis.shape[0]}")
        n = self.space.n
        if self.k == 0:
            return self.coeffs.get((), np.zeros(n)).copy()
        Dp = self.derivatives(pis)
        out = np.zeros(n)
        for a, lam in self.coeffs.items():
            M = np.moveaxis(Dp[list(a)], -1, 0)  # (n, k rows = derivations, k cols = functions)
            out = out + lam * alt_det(M)
        return out

    def upper(self):
        """Per-point bound ``sum_a |lambda_a| prod_i |D_{a_i}|_loc``."""
        n = self.space.n
        if not self.basis:
            return np.zeros(n)
        ln = np.array([D.local_norm for D in self.basis])
        out = np.zeros(n)
        for a, lam in self.coeffs.items():
            out = out + np.abs(lam) * np.prod(ln[list(a)], axis=0)
        return out

    def to_json(self):
        return {
            "N": self.N,
            "k": self.k,
            "tuples": [list(a) for a in self.coeffs],
            "coeffs": [v.tolist() for v in self.coeffs.values()],
        }

    def __repr__(self):
        return f"KVector(N={self.N}, k={self.k}, terms={len(self.coeffs)})"


@dataclass
class KForm:
    """The simple k-form ``dpi_1 ^ ... ^ dpi_k`` given by its functions."""

    pis: np.ndarray

    def __post_init__(self):
        self.pis = np.atleast_2d(np.asarray(self.pis, dtype=float))

    @property
    def k(self):
        return self.pis.shape[0]

    def glip_product(self, X):
        return float(np.prod([lip_constant(p, X) for p in self.pis]))


@dataclass
class NormInterval:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)


def pairing(xi: KVector, omega):
    pis = omega.pis if isinstance(omega, KForm) else omega
    return xi.pairing(pis)


def _probe_bound(X, pis, k):
    """Constant ``c`` with ``|<xi, dpi>| <= c |xi|_loc`` for the probe tuple ``pis``.

    Two bounds are valid: the permutation-sum bound ``k! prod glip(pi_j)`` and
    a Hadamard bound ``Lip(pi)^k`` where ``Lip(pi)`` is the Lipschitz constant
    of ``pi`` as a map into Euclidean ``R^k``. Each row
    ``(m pi_1, ..., m pi_k)`` of a decomposition term has Euclidean length at
    most ``|m|_loc Lip(pi)``, since ``sum_j a_j pi_j`` is ``Lip(pi)``-Lipschitz
    for unit vectors ``a``. The smaller of the two is returned.
    """
    perm = math.factorial(k) * float(np.prod([lip_constant(p, X) for p in pis]))
    had = lip_constant_l2(pis, X) ** k
    return min(perm, had)


def local_norm_bounds(xi: KVector, probes=None, pseudodual: Optional[PseudodualResult] = None):
    """Per-point interval for the local norm of ``xi``.

    The upper bound comes from the stored decomposition. The lower bound is
    ``max |<xi, dpi>| / c(pi)`` over probe tuples, see :func:`_probe_bound`.
    Probes default to the increasing ``k``-subtuples of the pseudodual
    functions when ``pseudodual`` is given.
    """
    X = xi.space
    n = X.n
    up = xi.upper()
    lo = np.zeros(n)
    tuples = list(probes) if probes is not None else []
    if pseudodual is not None:
        for pc in pseudodual.pieces:
            for a in itertools.combinations(range(pseudodual.k), xi.k):
                tuples.append(pc.g[list(a)])
    for pis in tuples:
        pis = np.atleast_2d(np.asarray(pis, dtype=float))
        c = _probe_bound(X, pis, xi.k)
        if c <= 0:
            continue
        lo = np.maximum(lo, np.abs(xi.pairing(pis)) / c)
    lo = np.minimum(lo, up * (1 + 1e-9) + 1e-15)
    return NormInterval(lo, up)


def _decomp_pairing(decomposition, pis):
    pis = np.atleast_2d(np.asarray(pis, dtype=float))
    total = None
    for term in decomposition:
        M = np.moveaxis(np.stack([D.apply(pis) for D in term]), -1, 0)
        v = alt_det(M)
        total = v if total is None else total + v
    return total


def banach_norm_upper(decomposition, target: Optional[KVector] = None, probes=(), improve=True, tol=1e-9):
    """Upper bound ``sum_i prod_j ||D_ij||`` for a decomposition into simple terms.

    Args:
        decomposition: list of k-tuples of derivations.
        target: if given, the decomposition must pair like ``target`` with
            every probe tuple (else :class:`ToleranceError`).
        probes: k-tuples of functions used for the checks.
        improve: apply cancellation moves: drop terms that pair to zero with
            every probe, then drop pairs of terms whose pairings cancel.
    """
    terms = [tuple(t) for t in decomposition]
    probes = [np.atleast_2d(np.asarray(p, dtype=float)) for p in probes]
    if target is not None:
        for pis in probes:
            lhs = _decomp_pairing(terms, pis) if terms else np.zeros(target.space.n)
            if np.abs(lhs - target.pairing(pis)).max() > tol * (1 + np.abs(lhs).max()):
                raise ToleranceError("decomposition does not match the target on the probes")

    def cost(ts):
        return float(sum(np.prod([D.norm for D in t]) for t in ts))

    best = cost(terms)
    moves = []
    if improve and probes and terms:
        vals = [np.concatenate([_decomp_pairing([t], p) for p in probes]) for t in terms]
        scale = max(1.0, max(np.abs(v).max() for v in vals))
        keep = [i for i, v in enumerate(vals) if np.abs(v).max() > tol * scale]
        if len(keep) < len(terms):
            moves.append(("drop-null", len(terms) - len(keep)))
        changed = True
        while changed:
            changed = False
            for i, j in itertools.combinations(keep, 2):
                if np.abs(vals[i] + vals[j]).max() <= tol * scale:
                    keep = [t for t in keep if t not in (i, j)]
                    moves.append(("cancel-pair", (i, j)))
                    changed = True
                    break
        best = min(best, cost([terms[i] for i in keep]))
    return best, moves


def wedge(w1: KVector, w2: KVector):
    """Exterior product over a shared basis, with the bound check reported.

    Returns ``(product, report)``; the report compares ``sup upper(w1 ^ w2)``
    with ``sup upper(w1) * sup upper(w2)``.
    """
    if len(w1.basis) != len(w2.basis) or any(a is not b for a, b in zip(w1.basis, w2.basis)):
        raise InputError("wedge needs a shared basis")
    k = w1.k + w2.k
    if k > w1.N:
        return KVector.zero(w1.basis, k), {"note": "degree exceeds basis size; zero vector", "ok": True}
    coeffs: Dict[tuple, np.ndarray] = {}
    for a, la in w1.coeffs.items():
        for b, lb in w2.coeffs.items():
            s, sign = _sort_sign(a + b)
            if s is None:
                continue
            v = sign * la * lb
            coeffs[s] = coeffs[s] + v if s in coeffs else v
    out = KVector(w1.basis, k, coeffs)
    lhs = float(out.upper().max(initial=0.0))
    rhs = float(w1.upper().max(initial=0.0) * w2.upper().max(initial=0.0))
    return out, {"lhs": lhs, "rhs": rhs, "ok": lhs <= rhs * (1 + 1e-12) + 1e-15}


# ---------------------------------------------------------------------------
# representation of currents


@dataclass
class Representation:
    xi: KVector
    mass: np.ndarray
    piece_coeffs: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    def current(self):
        from .currents import Precurrent

        return Precurrent(self.xi, self.mass)


def represent_current(T, pdual: PseudodualResult, fdict=None, check=True, tol=1e-9):
    """Write a k-current as ``f dpi -> sum_x f m <omega, dpi>`` over a pseudodual basis.

    On each piece ``V`` with pseudodual functions ``g``, the coefficient of the
    tuple ``a`` at ``x`` is ``T(chi_x, g_{a_1}, ..., g_{a_k}) / m(x)`` where
    ``m`` is the certified lower mass bound (which includes the pseudodual
    tuples among its candidates, so ``|lambda_a| <= 1``).
    """
    from .currents import mass_estimate

    k = T.k
    if pdual.k < k:
        raise PreconditionError("the basis is smaller than the degree of the current")
    n = T.space.n
    extra = []
    for pc in pdual.pieces:
        for a in itertools.combinations(range(pdual.k), k):
            extra.append(pc.g[list(a)])
    est = mass_estimate(T, fdict=fdict, candidates=extra)
    m = est.lower
    basis = pdual.basis()
    coeffs: Dict[tuple, np.ndarray] = {}
    per_piece = []
    for pc in pdual.pieces:
        V = pc.mask & (m > 0)
        piece = {}
        for a in itertools.combinations(range(pdual.k), k):
            dens = T.density(*pc.g[list(a)])
            lam = np.where(V, dens / np.where(V, m, 1.0), 0.0)
            piece[a] = lam
            coeffs[a] = coeffs[a] + lam if a in coeffs else lam
        per_piece.append(piece)
    xi = KVector(basis, k, coeffs)
    covered = np.zeros(n, dtype=bool)
    for pc in pdual.pieces:
        covered |= pc.mask
    report = {
        "max_coeff": float(max((np.abs(v).max() for v in coeffs.values()), default=0.0)),
        "uncovered_mass": float(est.upper[~covered].sum()),
        "norm_bound": pdual.constant ** k * math.comb(pdual.k, k),
    }
    rep = Representation(xi, m, per_piece, report)
    if check and fdict is not None:
        R = rep.current()
        err = 0.0
        F = fdict.values
        for pis in itertools.combinations(range(len(F)), k):
            pis = F[list(pis)]
            a, b = T.density(*pis), R.density(*pis)
            err = max(err, float(np.abs(a - b).max()))
        report["reconstruction_error"] = err
        report["global_norm"] = float(xi.upper().max(initial=0.0))
    return rep
