"""The eleven acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N PASS|FAIL`` line; the lines are repeated
in the terminal summary.
"""
import itertools
import math
import time

import numpy as np
import pytest

from metcur.alberti import current_to_alberti
from metcur.approx import approximate_by_normal
from metcur.currents import (EdgeFlow, FragmentCurrent, Precurrent, curr_of_derivation, der_of_current,
                             flow_decompose, is_normal)
from metcur.derivations import (Derivation, apply_right_sampled, normalize, pseudodual_basis,
                                pseudodual_constant)
from metcur.exterior import KVector, represent_current
from metcur.fixtures import grid, random_carrier, random_path_fragment, random_space, seg
from metcur.fragments import Fragment, curve_current, default_nu
from metcur.renorm import (SANDWICH, ConvexityWitness, GeneratingSet, NotAdditive, renorm_distance,
                           renormed_local_norm, strict_convexity_witness)
from metcur.space import FnDict, MetricSpace, lip_constant

from oracles import lip, local_norm_oracle, pairing_oracle, path_flow, shortest_path_metric

SEED = 20240611


def dict_pairs_error(T1, T2, F):
    """Largest ``|T1(f, pi) - T2(f, pi)|`` over dictionary pairs."""
    err = 0.0
    for pi in F:
        a, b = T1.density(pi), T2.density(pi)
        err = max(err, float(np.abs(F @ (a - b)).max()))
    return err


# 1 ---------------------------------------------------------------------------
def test_c01_der_cur_round_trips(verdict):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    err_cur = err_der = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 21))
        X = random_space(rng, n)
        mu = rng.uniform(0.2, 1.0, n)
        F = FnDict.standard(X).values
        T = FragmentCurrent(X, random_carrier(rng, X, int(rng.integers(1, 11)), signed=True))
        D, m = der_of_current(T, mu)
        back = curr_of_derivation(D, mu).restrict(m / mu)
        err_cur = max(err_cur, dict_pairs_error(back, T, F))
        D0 = Derivation(X, mu, random_carrier(rng, X, int(rng.integers(1, 11)), signed=True))
        D1, _ = der_of_current(curr_of_derivation(D0, mu), mu)
        err_der = max(err_der, float(np.abs(D1.apply(F) - normalize(D0).apply(F)).max()))
    dt = time.perf_counter() - t0
    ok = err_cur <= 1e-9 and err_der <= 1e-9 and dt < 10
    verdict(1, "Der/Cur round trips", ok, f"cur {err_cur:.1e}, der {err_der:.1e}, {dt:.2f}s")


# 2 ---------------------------------------------------------------------------
def test_c02_local_norm_vs_vertex_oracle(verdict):
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    count = 0
    for n in range(2, 6):
        for trial in range(30):
            if trial % 2:
                X = MetricSpace(shortest_path_metric(rng, n))
            else:
                X = random_space(rng, n)
            mu = rng.uniform(0.1, 1.0, n)
            D = Derivation(X, mu, random_carrier(rng, X, int(rng.integers(1, 4)), signed=True, max_len=n + 1))
            worst = max(worst, float(np.abs(D.local_norm - local_norm_oracle(D)).max()))
            count += 1
    verdict(2, "local_norm matches vertex enumeration", worst <= 1e-6, f"{count} spaces, max diff {worst:.1e}")


# 3 ---------------------------------------------------------------------------
def _leibniz_fixtures():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    out = [("seg", Derivation(X, [0.5, 0.5, 0.0], [(g, 1.0, default_nu(g))]))]
    G = grid(4)
    out += [("grid Dx", G.Dx), ("grid Dy", G.Dy)]
    return out


def test_c03_leibniz(verdict):
    worst_ratio = 0.0
    worst_right = 0.0
    for name, D in _leibniz_fixtures():
        X = D.space
        F = FnDict.standard(X).values
        md = max(float(pc.fragment.edge_md.max()) for pc in D.carrier)
        h = max(float(pc.fragment.dt[pc.fragment.is_edge].max()) for pc in D.carrier)
        live = D.mu > 0
        for f, g in itertools.product(F, F):
            defect = D.apply(f * g) - f * D.apply(g) - g * D.apply(f)
            bound = lip(f, X.dist) * md * h
            excess = np.abs(defect[live]) - bound
            worst_ratio = max(worst_ratio, float(excess.max()))
            right = D.apply(f * g) - apply_right_sampled(D, f, g) - g * D.apply(f)
            worst_right = max(worst_right, float(np.abs(right).max()))
    ok = worst_ratio <= 1e-12 and worst_right <= 1e-12
    verdict(3, "Leibniz defect bound and right-sampled identity", ok,
            f"bound excess {worst_ratio:.1e}, right-sampled {worst_right:.1e}")


# 4 ---------------------------------------------------------------------------
def test_c04_pseudodual_grid(verdict):
    G = grid(4)
    k = 2
    fd = G.fdict()
    details = []
    ok = True
    for eps in (0.1, 0.3, 0.5):
        pd = pseudodual_basis([G.Dx, G.Dy], fd, eps=eps)
        duality = 0.0
        diag_min, det_lo, det_hi, norm_max = np.inf, np.inf, -np.inf, 0.0
        for pc in pd.pieces:
            V = pc.mask
            vals = np.array([D.apply(pc.g) for D in pc.derivations])  # (i, j, n)
            duality = max(duality, float(np.abs(vals[:, :, V] - np.eye(k)[:, :, None]).max()))
            M = pc.M[V]
            diag_min = min(diag_min, float(np.diagonal(M, axis1=1, axis2=2).min()))
            dets = np.linalg.det(M)
            det_lo, det_hi = min(det_lo, dets.min()), max(det_hi, dets.max())
            norm_max = max(norm_max, max(float(D.local_norm[V].max()) for D in pc.derivations))
        bound = math.factorial(k) * (1 - eps) ** (-k)
        good = (duality <= 1e-9 and diag_min >= 1 - eps and (1 - eps) ** k <= det_lo and det_hi <= 1 + 1e-9
                and norm_max <= bound and abs(pseudodual_constant(k, eps) - bound) < 1e-12)
        ok &= good
        details.append(f"eps={eps}: dual {duality:.1e} diag {diag_min:.3f} det [{det_lo:.3f},{det_hi:.3f}] "
                       f"norm {norm_max:.3f}<= {bound:.3f}")
    verdict(4, "pseudodual functions on the grid", ok, "; ".join(details))


# 5 ---------------------------------------------------------------------------
def test_c05_pairing_bounds(verdict):
    rng = np.random.default_rng(SEED + 5)
    violations = 0
    swap_fail = 0
    oracle_err = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 8))
        X = random_space(rng, n)
        mu = rng.uniform(0.2, 1.0, n)
        N = int(rng.integers(1, 5))
        k = int(rng.integers(1, min(3, N) + 1))
        basis = [Derivation(X, mu, random_carrier(rng, X, 2, signed=True)) for _ in range(N)]
        coeffs = {a: rng.normal(size=n) for a in itertools.combinations(range(N), k) if rng.random() < 0.7}
        xi = KVector(basis, k, coeffs)
        pis = rng.normal(size=(k, n))
        val = xi.pairing(pis)
        glip = float(np.prod([lip_constant(p, X) for p in pis]))
        bound = math.factorial(k) * xi.upper() * glip
        violations += int(np.sum(np.abs(val) > bound * (1 + 1e-12) + 1e-15))
        oracle_err = max(oracle_err, float(np.abs(val - pairing_oracle(xi, pis)).max()))
        for j in range(k - 1):
            sw = pis.copy()
            sw[[j, j + 1]] = sw[[j + 1, j]]
            swap_fail += int(not np.array_equal(xi.pairing(sw), -val))
    ok = violations == 0 and swap_fail == 0 and oracle_err <= 1e-9
    verdict(5, "pairing bound and alternation", ok,
            f"violations {violations}, swap failures {swap_fail}, oracle diff {oracle_err:.1e}")


# 6 ---------------------------------------------------------------------------
def test_c06_representation_formula(verdict):
    rng = np.random.default_rng(SEED + 6)
    recon = 0.0
    coeff = 0.0
    for _ in range(20):
        G = grid(int(rng.integers(2, 5)))
        basis = [G.Dx, G.Dy]
        k = int(rng.integers(1, 3))
        n = G.space.n
        coeffs = {a: rng.normal(size=n) * (rng.random(n) < 0.8) for a in itertools.combinations(range(2), k)}
        T = Precurrent(KVector(basis, k, coeffs), G.mu)
        fd = G.fdict(n_dist=3)
        pd = pseudodual_basis(basis, fd, eps=float(rng.uniform(0.1, 0.6)))
        rep = represent_current(T, pd, fdict=fd)
        R = rep.current()
        F = fd.values
        for pis in itertools.combinations(range(len(F)), k):
            a, b = T.density(*F[list(pis)]), R.density(*F[list(pis)])
            recon = max(recon, float(np.abs(a - b).max()))
        coeff = max(coeff, max(float(np.abs(v).max()) for v in rep.xi.coeffs.values()))
    ok = recon <= 1e-9 and coeff <= 1 + 1e-9
    verdict(6, "representation over pseudodual bases", ok, f"reconstruction {recon:.1e}, max |lambda| {coeff:.6f}")


# 7 ---------------------------------------------------------------------------
def test_c07_cone_decomposition(verdict):
    G = grid(4)
    T = Precurrent(KVector.simple([G.Dx, G.Dy], (0, 1)), G.mu)
    fd = G.fdict()
    eta, delta = 0.9, 0.2
    cones = {"e1": np.array([1.0, 0.0]), "e2": np.array([0.0, 1.0]),
             "rotated": np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])}
    ok = True
    parts = []
    c = float(np.prod([eta - i * delta for i in range(1, T.k + 1)]))
    for name, w in cones.items():
        res = current_to_alberti(T, eta=eta, delta=delta, cone=w, fdict=fd)
        defect = res.uncovered
        fr = min(min(df) for df in res.direction_fractions)
        rf = min(r.direction["fraction"] for r in res.refined)
        refined_unc = sum(r.uncovered for r in res.refined)
        peel = all(p["ok"] for p in res.peeling) and all(abs(p["c"] - c) < 1e-12 for p in res.peeling)
        # the final set keeps at least c times the lower mass of its witness set
        lowV = sum(float(res.mass.lower[V].sum()) for V in res.V)
        peel &= lowV >= c * res.mass.lower_total * (1 - 1e-12)
        good = defect <= 1e-9 and refined_unc <= 1e-9 and fr == 1.0 and rf == 1.0 and peel
        ok &= good
        parts.append(f"{name}: defect {defect:.1e}/{refined_unc:.1e} fraction {fr:.2f}/{rf:.2f} peel {peel}")
    verdict(7, "cone decomposition of the grid square", ok, "; ".join(parts))


# 8 ---------------------------------------------------------------------------
def _grid_edges(m):
    idx = lambda i, j: j * (m + 1) + i  # noqa: E731
    out = []
    for j in range(m + 1):
        for i in range(m + 1):
            if i < m:
                out.append((idx(i, j), idx(i + 1, j)))
            if j < m:
                out.append((idx(i, j), idx(i, j + 1)))
    return out


def test_c08_flow_decomposition(verdict):
    rng = np.random.default_rng(SEED + 8)
    recon = resid = additivity = 0.0
    n_acyclic = 0
    for trial in range(100):
        m = int(rng.integers(1, 6))
        X = grid(m).space
        n = X.n
        F = np.zeros((n, n))
        acyclic = trial % 2 == 0
        pot = rng.permutation(n)
        for p, q in _grid_edges(m):
            if rng.random() < 0.25:
                continue
            v = rng.uniform(0.05, 1.0)
            if acyclic:
                a, b = (p, q) if pot[p] < pot[q] else (q, p)
            else:
                a, b = (p, q) if rng.random() < 0.5 else (q, p)
            F[a, b] += v
            F[b, a] -= v
        ef = EdgeFlow(X, F)
        assert np.abs(ef.divergence).max() <= 4.0  # divergence bounded by the grid degree
        dec = flow_decompose(ef)
        got = path_flow([(g.trace, w) for g, w in dec.paths], n)
        recon = max(recon, float(np.abs(got - ef.positive).max()))
        resid = max(resid, dec.residual)
        if acyclic:
            n_acyclic += 1
            additivity = max(additivity, abs(dec.mass - ef.mass))
    ok = recon <= 1e-10 and additivity <= 1e-9 and resid <= 1e-12
    verdict(8, "flow decomposition", ok,
            f"reconstruction {recon:.1e}, additivity {additivity:.1e} ({n_acyclic} acyclic), residual {resid:.1e}")


# 9 ---------------------------------------------------------------------------
def _hat_dictionary(x, s):
    rows = [np.ones_like(x)]
    for c in np.arange(0.0, 1.0 + 1e-12, s):
        rows.append(np.maximum(0.0, 1.0 - np.abs(x - c) / s))
    return np.array(rows)


def test_c09_normal_approximation(verdict):
    n = 65
    t = np.linspace(0.0, 1.0, n)
    X = MetricSpace.from_coords(t[:, None])
    g = Fragment(X, t, np.arange(n))
    lam = np.where(t[:-1] < 0.5, 1.0, 0.5)
    T = FragmentCurrent(X, [(g, 1.0, lam * np.diff(t))])
    dicts = [_hat_dictionary(t, s) for s in (1 / 16, 1 / 32, 1 / 64)]
    rep = approximate_by_normal(T, dicts, eps=1e-3)
    e = rep.errors
    decreasing = all(b < a for a, b in zip(e, e[1:]))
    normal = [bool(is_normal(N)) for N in rep.currents]
    ok = len(e) == 3 and decreasing and e[-1] <= 1e-3 and all(normal)
    verdict(9, "approximation by normal currents", ok, f"e_n {[round(v, 6) for v in e]}, normal {normal}")


# 10 --------------------------------------------------------------------------
def generating_set(X, rng, size=64):
    """Constant 1, coordinates, distance functions and random 1-Lipschitz infima, vanishing at 0."""
    rows = [np.ones(X.n)]
    base = FnDict.standard(X).values[1:]
    rows.extend(base)
    while len(rows) < size:
        c = rng.uniform(0.0, 1.0, X.n)
        f = (c[None, :] + X.dist).min(1)
        rows.append(f - f[0])
    return GeneratingSet(FnDict(X, [f"psi{i}" for i in range(size)], np.array(rows[:size])))


def _single_path_derivation(rng, X, mu):
    """A derivation whose carrier leaves every point towards at most one target."""
    L = int(rng.integers(3, X.n + 1))
    trace = rng.permutation(X.n)[:L]
    times = np.cumsum(rng.uniform(0.2, 1.0, L))
    fr = Fragment(X, times, trace)
    return Derivation(X, mu, [(fr, float(rng.uniform(0.3, 1.0)), rng.uniform(0.2, 1.0, L - 1))])


def test_c10_renorming(verdict):
    rng = np.random.default_rng(SEED + 10)
    sandwich = True
    gaps = []
    for trial in range(10):
        X = random_space(rng, int(rng.integers(4, 9)))
        mu = rng.uniform(0.2, 1.0, X.n)
        gen = generating_set(X, rng)
        D = _single_path_derivation(rng, X, mu)
        for M in (4, 16, 64):
            eps = float(rng.uniform(0.05, 0.5))
            Xe = renorm_distance(X, gen.with_M(M), eps)
            d, de = X.dist, Xe.d_eps
            sandwich &= Xe.sandwich_ok and bool(np.all(d <= de) and np.all(de <= (1 + eps * SANDWICH) * d))
            r = renormed_local_norm(D, Xe, gen)
            gaps.append((r.gap, r.slack))
    gap_ok = all(g <= s for g, s in gaps)

    # parallel witnesses for D2 = c D1
    X = random_space(rng, 6)
    mu = rng.uniform(0.2, 1.0, X.n)
    gen = generating_set(X, rng, 32)
    Xe = renorm_distance(X, gen, 0.2)
    D1 = _single_path_derivation(rng, X, mu)
    U = D1.support
    parallel = True
    for c in (0.5, 2.0, 5.0):
        w = strict_convexity_witness(D1, D1 * c, U, Xe, gen)
        if not isinstance(w, ConvexityWitness):
            parallel = False
            continue
        expect1, expect2 = 1.0 / c, c
        parallel &= bool(np.all((w.V1 | w.V2)[U]))
        parallel &= bool(np.allclose(w.lam1[w.V1], expect1) and np.allclose(w.lam2[w.V2], expect2))
        parallel &= w.probe_error <= 1e-9

    # orthogonal carriers are not additive
    G = grid(3)
    gG = generating_set(G.space, rng, 16)
    XeG = renorm_distance(G.space, gG, 0.2)
    na = strict_convexity_witness(G.Dx, G.Dy, G.interior, XeG, gG)
    not_add = isinstance(na, NotAdditive) and bool(na.mask[G.interior].all())

    ok = sandwich and gap_ok and parallel and not_add
    worst = max(g - s for g, s in gaps)
    verdict(10, "strictly convex renorming", ok,
            f"sandwich {sandwich}, max gap-slack {worst:.1e}, parallel {parallel}, orthogonal NotAdditive {not_add}")


# 11 --------------------------------------------------------------------------
def test_c11_boundary(verdict):
    rng = np.random.default_rng(SEED + 11)
    dd = 0.0
    for _ in range(20):
        X = random_space(rng, int(rng.integers(3, 10)))
        mu = rng.uniform(0.2, 1.0, X.n)
        N = int(rng.integers(2, 4))
        basis = [Derivation(X, mu, random_carrier(rng, X, 3, signed=True)) for _ in range(N)]
        coeffs = {a: rng.normal(size=X.n) for a in itertools.combinations(range(N), 2)}
        T = Precurrent(KVector(basis, 2, coeffs), mu)
        dd = max(dd, float(np.abs(T.boundary().boundary().density()).max()))
    exact = True
    for _ in range(50):
        X = random_space(rng, int(rng.integers(2, 8)))
        fr = random_path_fragment(rng, X, int(rng.integers(2, 8)))
        b = curve_current(fr).boundary().density()
        e = np.zeros(X.n)
        e[fr.trace[-1]] += 1.0
        e[fr.trace[0]] -= 1.0
        exact &= bool(np.array_equal(b, e))
    ok = dd <= 1e-10 and exact
    verdict(11, "boundary algebra", ok, f"max |dd T| {dd:.1e}, fragment boundaries exact {exact}")
