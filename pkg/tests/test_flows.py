import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metcur.currents import FlowCurrent
from metcur.errors import InputError
from metcur.fixtures import random_space
from metcur.flows import EdgeFlow, flow_decompose

from oracles import path_flow

seeds = st.integers(0, 2**31 - 1)


def random_paths(rng, n, count):
    out = []
    for _ in range(count):
        L = int(rng.integers(2, min(n, 5) + 1))
        trace = [int(v) for v in rng.choice(n, size=L, replace=False)]
        if rng.random() < 0.3:
            trace.append(trace[0])  # closed loop
        out.append((trace, float(rng.uniform(0.1, 2.0))))
    return out


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_decomposition_reproduces_the_flow(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, int(rng.integers(3, 8)))
    F = path_flow(random_paths(rng, X.n, int(rng.integers(1, 5))), X.n)
    ef = EdgeFlow(X, F - F.T)
    dec = flow_decompose(ef)
    assert dec.residual == 0.0
    back = np.zeros((X.n, X.n))
    for g, w in dec.paths:
        assert w > 0
        back += path_flow([(g.trace.tolist(), w)], X.n)
    np.testing.assert_allclose(back - back.T, ef.F, atol=1e-12)
    # no cancellation along the decomposition, so the masses agree
    assert dec.mass == pytest.approx(ef.mass, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_divergence_is_boundary(seed):
    rng = np.random.default_rng(seed)
    X = random_space(rng, 6)
    F = path_flow(random_paths(rng, X.n, 3), X.n)
    ef = EdgeFlow(X, F - F.T)
    # boundary density is inflow minus outflow
    np.testing.assert_allclose(ef.current().boundary().density(), -ef.divergence, atol=1e-12)
    f, pi = rng.normal(size=(2, X.n))
    assert ef.fragment_current().evaluate(f, pi) == pytest.approx(ef.current().evaluate(f, pi), abs=1e-10)


def test_netting_reports_removed_mass():
    X = random_space(np.random.default_rng(2), 3)
    C = np.zeros((3, 3))
    C[0, 1], C[1, 0] = 2.0, 0.5
    ef, defect = EdgeFlow.from_current(FlowCurrent(X, C))
    assert ef.F[0, 1] == pytest.approx(1.5)
    assert defect > 0
    dec = flow_decompose(FlowCurrent(X, C))
    assert dec.netting_defect == pytest.approx(defect)
    assert len(dec.paths) == 1 and dec.paths[0][1] == pytest.approx(1.5)


def test_pure_cycle():
    X = random_space(np.random.default_rng(5), 3)
    F = path_flow([([0, 1, 2, 0], 1.0)], 3)
    dec = flow_decompose(EdgeFlow(X, F - F.T))
    assert dec.n_cycles == 1
    g, w = dec.paths[0]
    assert g.trace[0] == g.trace[-1] and w == 1.0
    assert dec.to_json()["paths"][0]["closed"]


def test_bad_input():
    X = random_space(np.random.default_rng(0), 3)
    with pytest.raises(InputError):
        EdgeFlow(X, np.ones((3, 3)))
    with pytest.raises(InputError):
        EdgeFlow(X, np.zeros((2, 2)))
    with pytest.raises(InputError):
        flow_decompose(np.zeros((3, 3)))
