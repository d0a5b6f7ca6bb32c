import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metcur.alberti import (AlbertiRep, DirectionSpec, SpeedSpec, admissible_edges, bilipschitz_constant,
                            bilipschitz_refine, check_direction, check_speed, cone_null_estimate, cone_refine,
                            current_to_alberti, derivation_of, glue, null_certificate, rainwater_split,
                            restrict, validate)
from metcur.currents import FlowCurrent, FragmentCurrent, PointCurrent
from metcur.errors import InputError, PreconditionError, PseudodualError, ZeroCurrent
from metcur.fixtures import grid, random_path_fragment, random_space, seg
from metcur.fragments import Fragment, default_nu
from metcur.space import ConeField, FnDict, MetricSpace

seeds = st.integers(0, 2**31 - 1)


def seg_rep():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    return AlbertiRep(X, [g], [1.0], [default_nu(g)])


def test_segment_representation_is_valid():
    rep = seg_rep()
    v = validate(rep, [0.5, 0.5, 0.0])
    assert v["ok"] and v["defect"] == 0.0
    assert not validate(rep, [0.5, 0.5, 0.5])["ok"]
    D, r = derivation_of(rep, C=1.0)
    np.testing.assert_allclose(D.apply(seg().coords[:, 0])[:2], 1.0)
    assert r["norm_ok"]


def test_validate_flags_mass_on_gaps():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 2.0], [0, 1, 2], h_max=0.6)
    rep = AlbertiRep(X, [g], [1.0], [[0.5, 0.5]])
    v = validate(rep, rep.pushforward())
    assert v["ac_violations"] == [(0, 1)]
    assert not v["ok"]
    with pytest.raises(InputError):
        AlbertiRep(X, [g], [-1.0], [[0.5, 0.0]])


def test_restrict_and_glue():
    rep = seg_rep()
    a = restrict(rep, [0])
    b = restrict(rep, [1])
    np.testing.assert_allclose(a.pushforward(), [0.5, 0, 0])
    G = glue([a, b], [[0], [1, 2]], mu=[0.5, 0.5, 0.0])
    np.testing.assert_allclose(G.pushforward(), [0.5, 0.5, 0.0])
    assert G.P.sum() == pytest.approx(1.0)
    with pytest.raises(InputError):
        glue([a, b], [[0, 1], [1, 2]])


def test_json_round_trip():
    rep = seg_rep()
    back = AlbertiRep.from_json(rep.space, rep.to_json())
    np.testing.assert_allclose(back.pushforward(), rep.pushforward())


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_rainwater_split_covers_exactly_the_points_with_admissible_edges(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, int(rng.integers(3, 9)), dim=2)
    fam = [random_path_fragment(rng, X, int(rng.integers(2, 5))) for _ in range(int(rng.integers(1, 5)))]
    mu = rng.uniform(0.1, 1.0, X.n)
    B = rng.random(X.n) < 0.7
    f = X.coords.T
    dspec = DirectionSpec(f, ConeField.constant([1.0, 0.0], 0.9, X.n))
    sspec = SpeedSpec(f[0], 0.2)
    rw = rainwater_split(mu, B, fam, dspec, sspec)
    # brute force: a point of B is representable iff some admissible edge starts there
    starts = np.zeros(X.n, dtype=bool)
    for g in fam:
        ok = admissible_edges(g, dspec, sspec)
        starts[g.left[ok]] = True
    np.testing.assert_array_equal(rw.A, B & starts)
    np.testing.assert_array_equal(rw.S, B & ~starts)
    assert rw.certificate.ok and rw.certificate.covers(rw.S)
    if len(rw.rep):
        assert validate(rw.rep, np.where(rw.A, mu, 0.0))["ok"]
        assert check_direction(rw.rep, dspec)["certified"]
        assert check_speed(rw.rep, sspec)["certified"]


def test_null_certificate_detects_admissible_edges():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    cert = null_certificate(np.array([True, False, False]), [g])
    assert not cert.ok
    assert cert.residual[0] == pytest.approx(0.5)
    assert null_certificate(np.array([False, False, True]), [g]).ok


def test_rainwater_prior_selects_edges():
    X = seg()
    a = Fragment(X, [0.0, 0.5], [0, 1])
    b = Fragment(X, [0.0, 1.0], [0, 2])
    rw = rainwater_split([1.0, 0.0, 0.0], [True, False, False], [a, b], prior=[[1.0], [3.0]])
    masses = sorted(float(m.sum()) for m in rw.rep.edge_masses())
    assert masses == pytest.approx([0.25, 0.75])


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.01, 1.0))
def test_bilipschitz_refine_keeps_mass(seed, eps):
    rng = np.random.default_rng(seed)
    X = random_space(rng, 7)
    fam = [random_path_fragment(rng, X, int(rng.integers(2, 6))) for _ in range(3)]
    P = rng.uniform(0.1, 1, 3)
    P /= P.sum()
    rep = AlbertiRep(X, fam, P, [rng.uniform(0, 1, len(g) - 1) for g in fam])
    out = bilipschitz_refine(rep, eps)
    np.testing.assert_allclose(out.pushforward(), rep.pushforward(), atol=1e-12)
    assert out.P.sum() == pytest.approx(1.0)
    for g in out.fragments:
        C, lower_ok = bilipschitz_constant(g)
        assert lower_ok and C <= 1 + eps + 1e-9


def test_cone_refine_on_grid():
    G = grid(3)
    res = cone_refine(G.mu, G.interior, [G.Dx, G.Dy], G.space.coords.T, [1.0, 0.0], 0.7, 0.5)
    assert res.uncovered == 0.0
    assert res.direction["certified"] and res.speed["certified"]
    assert validate(res.rep, np.where(G.interior, G.mu, 0.0))["ok"]
    w = np.array([1.0, 1.0]) / math.sqrt(2)
    res = cone_refine(G.mu, G.interior, [G.Dx, G.Dy], G.space.coords.T, w, 0.3, 0.5,
                      closure_family=None, allow_gap=True)
    assert res.direction["certified"]
    with pytest.raises(PseudodualError):
        cone_refine(G.mu, G.interior, [G.Dy, G.Dx], G.space.coords.T, [1.0, 0.0], 0.7, 0.5)
    with pytest.raises(InputError):
        cone_refine(G.mu, G.interior, [G.Dx, G.Dy], G.space.coords.T, [1.0, 1.0], 0.7, 0.5)


@pytest.mark.parametrize("delta", [0.05, 0.2, 0.5])
def test_cone_null_estimate_on_vertical_segment(delta):
    X = MetricSpace.from_coords([[0.0, 0.25 * i] for i in range(5)])
    C = np.zeros((5, 5))
    for i in range(4):
        C[i, i + 1] = 1.0
    T = FlowCurrent(X, C)
    pi = X.coords[:, 0]  # the horizontal coordinate does not change along T
    fam = [Fragment(X, [0.0, 0.25], [i, i + 1]) for i in range(4)]
    spec = DirectionSpec([pi], ConeField.constant([1.0], 0.7, X.n))
    K = np.ones(5, dtype=bool)
    cert = null_certificate(K, fam, spec)
    assert cert.ok
    est = cone_null_estimate(T, K, [pi], delta, 0.7, cert)
    assert est.direct == 0.0
    assert est.ok
    assert est.mass_bound <= delta * T.mass()[K].sum() * (1 + 1e-12)
    with pytest.raises(PreconditionError):
        cone_null_estimate(T, K, [pi], delta, 0.7, None)


def test_current_to_alberti_on_segment():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    T = FragmentCurrent(X, [(g, 1.0, default_nu(g))])
    res = current_to_alberti(T, fdict=FnDict.standard(X))
    assert res.coverage_ok
    assert all(p["ok"] for p in res.peeling)
    rep = res.reps[0][0]
    assert validate(rep, np.where(res.V[0], res.mass.upper, 0.0))["ok"]
    with pytest.raises(ZeroCurrent):
        current_to_alberti(FlowCurrent(X, np.zeros((3, 3))), fdict=FnDict.standard(X))
    with pytest.raises(InputError):
        current_to_alberti(PointCurrent(X, [1.0, 0, 0]))
