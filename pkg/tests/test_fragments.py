import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metcur.errors import InputError
from metcur.fixtures import random_fragment, random_path_fragment, random_space, seg
from metcur.fragments import (Curve, Fragment, curve_current, default_nu, fill_fragment, fragment_distance,
                              metric_differential, pullback_derivative, reparametrize_unit, restrict_to_set)
from metcur.space import MetricSpace

seeds = st.integers(0, 2**31 - 1)


def test_seg_fragment_basics():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    np.testing.assert_array_equal(g.left, [0, 1])
    np.testing.assert_array_equal(g.right, [1, 2])
    np.testing.assert_allclose(g.edge_md, [1.0, 1.0])
    assert g.lip == pytest.approx(1.0)
    assert metric_differential(g, 0.5) == pytest.approx(1.0)
    assert pullback_derivative(g, [0.0, 0.5, 1.0], 0) == pytest.approx(1.0)
    assert pullback_derivative(g, [0.0, 0.5, 1.0], (0.5, 1.0)) == pytest.approx(1.0)


def test_fragment_rejects_bad_input():
    X = seg()
    with pytest.raises(InputError):
        Fragment(X, [0.0, 0.0], [0, 1])
    with pytest.raises(InputError):
        Fragment(X, [0.0, 1.0], [0, 3])
    with pytest.raises(InputError):
        Fragment(X, [], [])
    with pytest.raises(InputError):
        Fragment(X, [0.0, 1.0], [0])


def test_gaps_break_edges():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 2.0], [0, 1, 2], h_max=0.6)
    np.testing.assert_array_equal(g.is_edge, [True, False])
    assert g.runs() == [(0, 1)]
    np.testing.assert_allclose(default_nu(g), [0.5, 0.0])
    # the isolated last point has metric differential zero
    assert metric_differential(g, 2.0) == 0.0


def test_restrict_to_set_does_not_join_new_pairs():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    r = restrict_to_set(g, [0, 2])
    np.testing.assert_array_equal(r.trace, [0, 2])
    np.testing.assert_array_equal(r.is_edge, [False])
    with pytest.raises(InputError):
        restrict_to_set(Fragment(X, [0.0], [1]), [0])


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_reparametrize_unit_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, 6)
    g = random_path_fragment(rng, X, int(rng.integers(2, 7)))
    r = reparametrize_unit(g)
    assert r.lip == pytest.approx(1.0)
    assert np.all(r.edge_md <= 1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_fragment_distance_is_symmetric_and_zero_on_self(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, 6)
    a, b = random_fragment(rng, X), random_fragment(rng, X)
    assert fragment_distance(a, a) == 0.0
    assert fragment_distance(a, b) == pytest.approx(fragment_distance(b, a))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_reversed_fragment_has_opposite_current(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, 6)
    g = random_path_fragment(rng, X, int(rng.integers(2, 6)))
    pi = rng.normal(size=X.n)
    T, R = curve_current(g), curve_current(g.reversed())
    # T(1, pi) only sees the endpoints, so reversal flips its sign
    assert T.evaluate(np.ones(X.n), pi) == pytest.approx(-R.evaluate(np.ones(X.n), pi), abs=1e-12)


def test_fill_fragment_virtual_and_snap():
    X = MetricSpace.from_coords([[0.0], [1.0]])
    g = Fragment(X, [0.0, 1.0], [0, 1], h_max=0.3)
    v = fill_fragment(g, 0.25)
    assert isinstance(v, Curve)
    assert v.space.n == 5
    np.testing.assert_allclose(v.space.coords[v.trace, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert v.step == pytest.approx(0.25)
    s = fill_fragment(g, 0.25, mode="snap")
    assert s.space is X
    np.testing.assert_array_equal(s.trace, [0, 0, 0, 1, 1])  # the tie at 0.5 goes to the lower index
    with pytest.raises(InputError):
        fill_fragment(g, 0.3)


def test_curve_requires_uniform_grid():
    X = seg()
    with pytest.raises(InputError):
        Curve(X, [0.0, 0.5, 2.0], [0, 1, 2])


def test_curve_current_rejects_wrong_nu():
    X = seg()
    g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
    with pytest.raises(InputError):
        curve_current(g, nu=[1.0])
