"""The strictly convex renorming ``d_eps = d + eps * Psi``.

``Psi(x, y) = ( sum_n (psi_n(x) - psi_n(y))^2 / n^2 )^(1/2)`` for a generating
set ``psi_1 = 1, psi_2, ...`` of 1-Lipschitz functions vanishing at a
basepoint. Since ``sum 1/n^2 = pi^2/6`` one has
``d <= d_eps <= (1 + eps pi / sqrt 6) d``.

Local norms for ``d_eps`` split as ``|D| + eps ||D Phi||_2`` where
``D Phi = (D psi_n / n)_n``; the truncation at ``M`` terms leaves a tail of at
most ``eps (sum_{n > M} (2 ||D|| / n)^2)^(1/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .derivations import CarrierPiece, Derivation, module_scale
from .errors import InputError, ToleranceError
from .space import FnDict, MetricSpace, lip_constant, validate_metric

__all__ = [
    "GeneratingSet",
    "RenormedSpace",
    "psi_pseudometric",
    "renorm_distance",
    "dphi",
    "transfer",
    "truncation_slack",
    "RenormedNormReport",
    "renormed_local_norm",
    "NotAdditive",
    "ConvexityWitness",
    "strict_convexity_witness",
]

SANDWICH = math.pi / math.sqrt(6.0)


@dataclass
class GeneratingSet:
    """Functions ``psi_1 = 1, psi_2, ...`` (rows of ``fdict``) truncated at ``M``."""

    fdict: FnDict
    M: Optional[int] = None

    def __post_init__(self):
        if self.M is None:
            self.M = len(self.fdict)
        if self.M < 1:
            raise InputError("truncation level M must be at least 1")

    @property
    def space(self):
        return self.fdict.space

    @property
    def psi(self):
        """The first ``min(M, len)`` functions as rows."""
        return self.fdict.values[: self.M]

    def with_M(self, M):
        return GeneratingSet(self.fdict, M)


def psi_pseudometric(gen: GeneratingSet):
    P = gen.psi
    n_idx = np.arange(1, P.shape[0] + 1, dtype=float)
    diff = (P[:, :, None] - P[:, None, :]) / n_idx[:, None, None]
    return np.sqrt((diff**2).sum(0))


@dataclass
class RenormedSpace:
    original: MetricSpace
    eps: float
    M: int
    d_eps: np.ndarray
    Psi: np.ndarray
    sandwich_ok: bool
    space: MetricSpace = field(repr=False, default=None)

    def to_json(self):
        return {"eps": self.eps, "M": self.M, "sandwich_ok": self.sandwich_ok, "d_eps": self.d_eps.tolist()}


def renorm_distance(X: MetricSpace, gen: GeneratingSet, eps):
    """``d_eps = d + eps Psi_M`` with the sandwich inequality verified entrywise."""
    if eps < 0:
        raise InputError("eps must be nonnegative")
    P = gen.psi
    if not np.allclose(P[0], 1.0):
        raise InputError("the first generating function must be the constant 1")
    for i, v in enumerate(P[1:], start=2):
        if lip_constant(v, X) > 1 + 1e-12:
            raise InputError(f"psi_{i} is not 1-Lipschitz; the sandwich inequality is not guaranteed")
    Psi = psi_pseudometric(gen)
    d = X.dist
    de = d + eps * Psi
    ok = bool(np.all(d <= de) and np.all(de <= (1 + eps * SANDWICH) * d))
    if not ok:
        raise InputError("sandwich inequality violated")
    rep = validate_metric(de)
    if not rep:
        raise InputError(f"renormed distance is not a metric: {rep}")
    Xe = MetricSpace(de, points=X.points, check=False)
    return RenormedSpace(X, float(eps), int(gen.M), de, Psi, ok, Xe)


def dphi(D: Derivation, gen: GeneratingSet):
    """Components ``D psi_n / n`` (shape ``(M, n)``) and their l2 norm per point."""
    P = gen.psi
    comps = D.apply(P) / np.arange(1, P.shape[0] + 1, dtype=float)[:, None]
    return comps, np.sqrt((comps**2).sum(0))


def transfer(D: Derivation, space: MetricSpace):
    """The same carrier viewed in another metric on the same points."""
    pieces = [CarrierPiece(pc.fragment.with_space(space), pc.weight, pc.nu) for pc in D.carrier]
    return Derivation(space, D.mu, pieces)


def truncation_slack(D: Derivation, eps, M):
    """``eps (sum_{n > M} (2 ||D|| / n)^2)^(1/2)``."""
    tail = max(math.pi**2 / 6 - sum(1.0 / n**2 for n in range(1, M + 1)), 0.0)
    return eps * 2 * D.norm * math.sqrt(tail)


@dataclass
class RenormedNormReport:
    value: np.ndarray  # LP local norm in d_eps
    predicted: np.ndarray  # |D|_loc + eps ||D Phi_M||
    gap: float
    slack: float

    @property
    def ok(self):
        return self.gap <= self.slack + 1e-9


def renormed_local_norm(D: Derivation, Xe: RenormedSpace, gen: GeneratingSet):
    """LP local norm in ``d_eps`` compared with ``|D|_loc + eps ||D Phi_M||``.

    The two agree exactly when every point has outgoing carrier edges towards
    a single target; with several targets the LP value may exceed the
    prediction (discrete derivations at one point then behave like a sum of
    independent directions).
    """
    De = transfer(D, Xe.space)
    lhs = De.local_norm
    _, nrm = dphi(D, gen.with_M(Xe.M))
    rhs = D.local_norm + Xe.eps * nrm
    gap = float(np.abs(lhs - rhs).max(initial=0.0))
    return RenormedNormReport(lhs, rhs, gap, truncation_slack(D, Xe.eps, Xe.M))


@dataclass
class NotAdditive:
    mask: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    def __bool__(self):
        return False


@dataclass
class ConvexityWitness:
    V1: np.ndarray
    V2: np.ndarray
    lam1: np.ndarray  # chi_V1 D1 = lam1 D2
    lam2: np.ndarray  # chi_V2 D2 = lam2 D1
    probe_error: float

    def __bool__(self):
        return True


def _eps_norm(D, Xe, gen):
    _, nrm = dphi(D, gen.with_M(Xe.M))
    return D.local_norm + Xe.eps * nrm


def strict_convexity_witness(D1: Derivation, D2: Derivation, U, Xe: RenormedSpace, gen: GeneratingSet,
                             tol=1e-9):
    """Test additivity of the renormed local norm on ``U`` and extract parallelism witnesses.

    The renormed local norm is evaluated in its split form
    ``|D| + eps ||D Phi_M||``. Where it is additive the vectors ``D1 Phi`` and
    ``D2 Phi`` are positively parallel; ``V1`` collects the points with
    ``|D1 Phi| <= |D2 Phi|`` (ties included, with ``lam1 = 0`` when both
    vanish) and ``V2`` the rest.

    Returns:
        :class:`ConvexityWitness`, or :class:`NotAdditive` listing the points
        of ``U`` where additivity fails.

    Raises:
        ToleranceError: if the extracted ratios do not reproduce the
            derivations on the generating functions (truncation too small).
    """
    U = np.asarray(U, dtype=bool) & (D1.mu > 0)
    n1, n2 = _eps_norm(D1, Xe, gen), _eps_norm(D2, Xe, gen)
    n12 = _eps_norm(D1 + D2, Xe, gen)
    bad = U & (np.abs(n12 - n1 - n2) > tol * (1 + n1 + n2))
    if bad.any():
        return NotAdditive(bad, n12, n1 + n2)
    v1, _ = dphi(D1, gen.with_M(Xe.M))
    v2, _ = dphi(D2, gen.with_M(Xe.M))
    a1 = np.sqrt((v1**2).sum(0))
    a2 = np.sqrt((v2**2).sum(0))
    dot = (v1 * v2).sum(0)
    V1 = U & (a1 <= a2)
    V2 = U & ~V1
    lam1 = np.where(V1 & (a2 > 0), dot / np.where(a2 > 0, a2**2, 1.0), 0.0)
    lam2 = np.where(V2, dot / np.where(a1 > 0, a1**2, 1.0), 0.0)
    lam1 = np.maximum(lam1, 0.0)
    lam2 = np.maximum(lam2, 0.0)
    P = gen.psi
    r1 = module_scale(V1.astype(float), D1).apply(P) - lam1 * D2.apply(P)
    r2 = module_scale(V2.astype(float), D2).apply(P) - lam2 * D1.apply(P)
    err = float(max(np.abs(r1[:, U]).max(initial=0.0), np.abs(r2[:, U]).max(initial=0.0)))
    scale = 1 + max(D1.norm, D2.norm)
    if err > 1e-7 * scale:
        raise ToleranceError(f"ratio extraction fails on the generating functions (error {err:.3g}); "
                             "increase the truncation level")
    return ConvexityWitness(V1, V2, lam1, lam2, err)
