import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_state
from oracles import expectation
from tirs.examples import cost_tables, random_model, tabulated_model
from tirs.operators import (
    LIMIT,
    argmin_from_values,
    bellman_argmin,
    hamiltonian,
    lambda_eps,
    lambda_limit,
    lambda_table,
    lse_rows,
    trace_ops,
    varadhan_check,
)

finite = st.floats(-5, 5, allow_nan=False)
epsilons = st.sampled_from([1.0, 0.5, 0.1, 0.01, 1e-3])


@st.composite
def row_and_h(draw):
    n = draw(st.integers(1, 5))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    h = np.array(draw(st.lists(finite, min_size=n, max_size=n)))
    return w / w.sum(), h


def _single(q):
    n = len(q)
    states = tuple(range(n))
    acts = {x: (0,) for x in states}
    costs = cost_tables(states, acts, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    return tabulated_model({(x, 0): tuple(q) for x in states}, 1, costs, states, acts)


def test_lambda_eps_two_point():
    m = two_state()
    assert lambda_eps(m, 1.0, 1, 0, 0, [0.0, 1.0]) == pytest.approx(
        0.6201145069582775, abs=1e-15)
    assert math.log((1 + math.e) / 2) == pytest.approx(0.6201145069582775, abs=1e-16)


def test_lambda_eps_stable_for_large_h_over_eps():
    m = two_state()
    v = lambda_eps(m, 1e-4, 1, 0, 0, [0.0, 50.0])
    assert math.isfinite(v)
    assert v == pytest.approx(50.0 + 1e-4 * math.log(0.5), abs=1e-12)


def test_limit_excludes_infinite_rate(ex2):
    # from x=1, u=0 the jump to state 3 has rate +inf: huge h(3) is ignored
    v = lambda_limit(ex2, 1, 1, 0, {1: 0.0, 2: 0.5, 3: 1e6})
    assert v == 0.5
    v = lambda_limit(ex2, 1, 1, 1, {1: 0.0, 2: 0.5, 3: 3.0})
    assert v == 2.0


@settings(max_examples=150, deadline=None)
@given(row_and_h(), finite, epsilons)
def test_translation(rh, c, eps):
    q, h = rh
    m = _single(q)
    assert abs(lambda_eps(m, eps, 1, 0, 0, h + c) - lambda_eps(m, eps, 1, 0, 0, h) - c) <= 1e-10


@settings(max_examples=150, deadline=None)
@given(row_and_h(), st.lists(st.floats(0, 3), min_size=5, max_size=5), epsilons)
def test_monotone(rh, bump, eps):
    q, h = rh
    m = _single(q)
    h2 = h + np.array(bump[: len(h)])
    assert lambda_eps(m, eps, 1, 0, 0, h) <= lambda_eps(m, eps, 1, 0, 0, h2)


@settings(max_examples=150, deadline=None)
@given(row_and_h(), epsilons)
def test_between_mean_and_max(rh, eps):
    q, h = rh
    m = _single(q)
    v = lambda_eps(m, eps, 1, 0, 0, h)
    assert float(q @ h) - 1e-12 <= v <= float(h.max()) + 1e-12


@settings(max_examples=100, deadline=None)
@given(row_and_h(), epsilons)
def test_matches_scipy_oracle(rh, eps):
    q, h = rh
    m = _single(q)
    assert lambda_eps(m, eps, 1, 0, 0, h) == pytest.approx(expectation(m, eps, 1, 0, 0, h),
                                                           abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(row_and_h(), epsilons)
def test_varadhan_identity(rh, eps):
    q, h = rh
    assert varadhan_check(_single(q), eps, 1, 0, 0, h) <= 1e-8


def test_varadhan_on_examples(ex1, ex2, rng):
    for m in (ex1, ex2):
        for eps in (0.5, 0.1, 0.01):
            for x in m.states:
                for u in m.actions[x]:
                    h = rng.uniform(-3, 3, m.n_states)
                    assert varadhan_check(m, eps, 1, x, u, h) <= 1e-8


def test_lambda_table_matches_scalar(ex2, rng):
    h = rng.normal(size=3)
    for eps in (0.3, LIMIT):
        tab = lambda_table(ex2, eps, 1, h)
        for xi, x in enumerate(ex2.states):
            for ui, u in enumerate(ex2.actions[x]):
                scalar = (lambda_limit(ex2, 1, x, u, h) if eps == LIMIT
                          else lambda_eps(ex2, eps, 1, x, u, h))
                assert tab[xi, ui] == scalar


def test_lambda_table_ragged_padding(rng):
    m = random_model(rng, 4, 3, ragged=True)
    tab = lambda_table(m, 0.2, 1, rng.normal(size=4))
    assert np.array_equal(np.isnan(tab), ~m.action_mask())


def test_lse_rows_rejects_empty_support():
    with pytest.raises(ValueError):
        lse_rows(np.array([-np.inf, -np.inf]), np.zeros(2), 0.1)


def test_argmin_tie_rule():
    am = argmin_from_values(("a", "b", "c"), [1.0, 1.0 + 1e-10, 2.0])
    assert am.minimizers == ("a", "b") and am.chosen == "a"
    assert am.gap == pytest.approx(1.0)
    am = argmin_from_values(("a", "b"), [2.0, 1.0])
    assert am.is_singleton and am.chosen == "b"
    assert argmin_from_values(("a",), [0.0]).gap == math.inf


def test_bellman_argmin_example2(ex2):
    h = {1: 0.0, 2: 1.0, 3: 3.0}
    value, am = bellman_argmin(ex2, LIMIT, 2, 3, h)
    vals = [hamiltonian(ex2, LIMIT, 2, 2, 3, u, h) for u in (0, 1)]
    assert value == min(vals)
    assert am.chosen == (0, 1)[int(np.argmin(vals))]


def test_trace_collects_records():
    m = two_state()
    recs = []
    with trace_ops(recs.append):
        lambda_eps(m, 0.5, 1, 0, 0, [0.0, 1.0])
        lambda_limit(m, 1, 0, 0, [0.0, 1.0])
    lambda_eps(m, 0.5, 1, 0, 0, [0.0, 1.0])
    assert [r["op"] for r in recs] == ["lambda_eps", "lambda_limit"]
