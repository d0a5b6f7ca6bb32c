import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metcur.alberti import AlbertiRep, DirectionSpec
from metcur.approx import (approximate_by_normal, curves_normal_form, fit_density, normal_derivation_from_rep,
                           vectorfield_direction_rep)
from metcur.currents import FlowCurrent, FragmentCurrent, Precurrent
from metcur.errors import DirectionFailure, DirectionLost, InputError, NotNormalType
from metcur.exterior import KVector
from metcur.fixtures import grid, seg
from metcur.fragments import Fragment, default_nu
from metcur.space import ConeField, MetricSpace

seeds = st.integers(0, 2**31 - 1)


def seg_rep(c=1.0):
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    return AlbertiRep(X, [g], [1.0], [c * default_nu(g)])


def fork():
    """Two edges leaving the origin, to the right and upwards."""
    X = MetricSpace.from_coords([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a = Fragment(X, [0.0, 1.0], [0, 1])
    b = Fragment(X, [0.0, 1.0], [0, 2])
    return X, a, b


def test_curves_normal_form_fills_gaps():
    X = MetricSpace.from_coords([[0.0], [0.5], [1.0], [2.0]])
    g = Fragment(X, [0.0, 0.5, 2.0, 2.5], [0, 1, 3, 2], h_max=0.6)
    rep = AlbertiRep(X, [g], [1.0], [[0.5, 0.0, 0.25]])
    out = curves_normal_form(rep, step=0.5)
    f = out.fragments[0]
    assert f.times[0] == 0.0 and f.times[-1] == 1.0
    assert f.is_edge.all()
    assert out.space.n > X.n
    np.testing.assert_allclose(out.pushforward()[: X.n], rep.pushforward(), atol=1e-12)
    assert out.pushforward()[X.n:].sum() == 0.0


def test_curves_normal_form_reports_lost_direction():
    X = MetricSpace.from_coords([[0.0], [1.0], [0.5]])
    # the gap runs backwards, against the cone around +1
    g = Fragment(X, [0.0, 0.5, 1.5], [0, 2, 1], edges=[True, False])
    g2 = Fragment(X, [0.0, 0.5, 1.5], [2, 1, 0], edges=[True, False])
    rep = AlbertiRep(X, [g2], [1.0], [[0.5, 0.0]])
    spec = DirectionSpec(X.coords.T, ConeField.constant([1.0], 0.5, X.n))
    curves_normal_form(AlbertiRep(X, [g], [1.0], [[0.5, 0.0]]), direction=spec, step=0.5)
    with pytest.raises(DirectionLost) as exc:
        curves_normal_form(rep, direction=spec, step=0.5)
    assert exc.value.gap[0] == 0


@pytest.mark.parametrize("c", [1.0, 2.0, 0.25])
def test_normal_derivation_density(c):
    nd = normal_derivation_from_rep(seg_rep(c))
    np.testing.assert_allclose(nd.lam[:2], c)
    assert nd.report["is_normal"]
    assert nd.report["boundary_tv"] == pytest.approx(nd.report["boundary_tv_expected"])
    f = seg().coords[:, 0]
    np.testing.assert_allclose(nd.D.apply(f), nd.lam * nd.D_N.apply(f), atol=1e-12)


def test_non_normal_type_is_rejected():
    X, a, b = fork()
    rep = AlbertiRep(X, [a, b], [0.5, 0.5], [[1.0], [3.0]])
    with pytest.raises(NotNormalType):
        normal_derivation_from_rep(rep)


def test_vectorfield_direction_on_segment():
    nd = normal_derivation_from_rep(seg_rep())
    rep, report = vectorfield_direction_rep(nd, seg().coords.T)
    assert report["fail_mass"] == 0.0
    np.testing.assert_allclose(rep.pushforward(), nd.D.mu, atol=1e-12)


def test_vectorfield_direction_failure_names_a_test():
    X, a, b = fork()
    nd = normal_derivation_from_rep(AlbertiRep(X, [a, b], [0.5, 0.5], [[1.0], [1.0]]))
    with pytest.raises(DirectionFailure) as exc:
        vectorfield_direction_rep(nd, X.coords.T)
    assert exc.value.fail_mass > 0
    _, report = vectorfield_direction_rep(nd, X.coords.T, strict=False)
    assert len(report["tests"]) == len(report["failing_edges"]) == 2


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_constant_fit_is_weighted_median(seed):
    rng = np.random.default_rng(seed)
    E = int(rng.integers(1, 12))
    t = rng.normal(size=E)
    w = rng.uniform(0.1, 1.0, E)
    lefts = np.arange(E)
    g, c, resid = fit_density(t, lefts, w, np.ones((1, E)))
    # the optimum of a weighted L1 fit by a constant is attained at a data point
    want = min(float((w * np.abs(t - v)).sum()) for v in t)
    assert resid == pytest.approx(want, rel=1e-7, abs=1e-9)


def test_fit_respects_lipschitz_cap():
    t = np.array([0.0, 1.0])
    Phi = np.array([[0.0, 1.0]])
    _, c, resid = fit_density(t, [0, 1], [1.0, 1.0], Phi, lip_cap=0.5, glips=[1.0])
    assert abs(c[0]) <= 0.5 + 1e-9
    assert resid == pytest.approx(0.5)


def test_approximation_errors_do_not_increase():
    X = MetricSpace.from_coords([[i / 8] for i in range(9)])
    C = np.zeros((9, 9))
    for i in range(8):
        C[i, i + 1] = 1.0 + (i >= 4)  # density jumps half way
    T = FlowCurrent(X, C)
    x = X.coords[:, 0]
    dicts = [np.ones((1, 9)), np.vstack([np.ones(9), (x >= 0.5) * 1.0])]
    rep = approximate_by_normal(T, dicts)
    assert rep.errors[1] <= rep.errors[0]
    assert rep.reconstruction <= 1e-12
    assert rep.errors[0] > 0.1
    assert rep.final_error <= 1e-9
    assert all(rep.normal)


def test_approximation_needs_one_currents():
    G = grid(2)
    T = Precurrent(KVector.simple([G.Dx, G.Dy], (0, 1)), G.mu)
    with pytest.raises(InputError):
        approximate_by_normal(T, [np.ones((1, G.space.n))])
    Z = FlowCurrent(seg(), np.zeros((3, 3)))
    assert approximate_by_normal(Z, []).final_error == 0.0
