import math

import numpy as np
import pytest

from tirs.convergence import default_grid, geometric_grid
from tirs.examples import Example2Config, build_example2, cost_tables, tabulated_model
from tirs.io import dumps
from tirs.model import (
    INF,
    RATE,
    ActionSets,
    KernelError,
    KernelFamily,
    ModelError,
    ModelSpec,
    RateRow,
    StateSpace,
    kernel_at,
    rate_row,
    validate_assumptions,
    validity_threshold,
)


def _rate_model(terms, remainder=None):
    states = (0, 1, 2)
    acts = {x: (0,) for x in states}
    costs = cost_tables(states, acts, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    entries = {(None, x, 0): RateRow(tuple(terms), remainder) for x in states}
    return ModelSpec(1, StateSpace(states, (1.0, 1.0, 1.0)), ActionSets(acts),
                     KernelFamily(RATE, entries), costs)


def test_example2_row_at_half():
    m = build_example2(Example2Config())
    q = kernel_at(m, 0.5, 1, 1, 1)
    e2 = math.exp(-2.0)
    assert q[2] == pytest.approx(2 * e2, rel=1e-15)
    assert q[2] == pytest.approx(0.2706705664732254, rel=1e-15)
    assert q[0] == pytest.approx(1 - 0.3 - e2, rel=1e-14)
    assert q[1] == pytest.approx(0.3 - e2, rel=1e-14)
    assert abs(q.sum() - 1) < 1e-12


def test_tabulated_row_verbatim():
    row = (0.25, 0.75)
    costs = cost_tables((0, 1), {0: (0,), 1: (0,)}, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    m = tabulated_model({(0, 0): row, (1, 0): (1.0, 0.0)}, 1, costs)
    assert kernel_at(m, 0.3, 1, 0, 0).tolist() == list(row)
    assert kernel_at(m, 7.0, 1, 1, 0).tolist() == [1.0, 0.0]


def test_large_eps_negative_mass_is_hard_error(ex2):
    with pytest.raises(KernelError, match="x=1"):
        kernel_at(ex2, 5.0, 1, 1, 1)


def test_kernel_at_rejects_bad_arguments(ex2):
    with pytest.raises(ValueError):
        kernel_at(ex2, 0.0, 1, 1, 1)
    with pytest.raises(ModelError):
        kernel_at(ex2, 0.1, 3, 1, 1)
    with pytest.raises(ModelError):
        kernel_at(ex2, 0.1, 1, 7, 1)
    with pytest.raises(ModelError):
        kernel_at(ex2, 0.1, 1, 1, 2)


def test_validate_example2_passes(ex2):
    rep = validate_assumptions(ex2, [0.1])
    assert rep.passed
    names = [c.name for c in rep.checks]
    assert {"kernel_normalization", "rate_nonnegative", "rate_inf_zero",
            "lyapunov_positive"} <= set(names)
    growth = rep.check("growth_conditions")
    assert "vacuous" in growth.detail


def test_validate_flags_unnormalized_row():
    costs = cost_tables((0, 1), {0: (0,), 1: (0,)}, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    m = tabulated_model({(0, 0): (0.5, 0.6), (1, 0): (0.5, 0.5)}, 1, costs)
    rep = validate_assumptions(m, [0.1, 0.01])
    norm = rep.check("kernel_normalization")
    assert not norm.passed
    assert {(f["x"], f["eps"]) for f in norm.failures} == {(0, 0.1), (0, 0.01)}
    assert not rep.passed


def test_validate_flags_positive_min_rate():
    m = _rate_model([(1, 0.5, 0.3), (2, 0.5, 0.3)])
    rep = validate_assumptions(m, [0.1])
    c = rep.check("rate_inf_zero")
    assert not c.passed
    assert c.failures[0]["min_rate"] == 0.3


def test_validate_reports_negative_mass_instead_of_raising(ex2):
    rep = validate_assumptions(ex2, [5.0])
    assert not rep.check("kernel_normalization").passed
    assert "negative" in rep.check("kernel_normalization").failures[0]["error"]


def test_validate_flags_nonpositive_lyapunov():
    costs = cost_tables((0, 1), {0: (0,), 1: (0,)}, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    m = tabulated_model({(0, 0): (1.0, 0.0), (1, 0): (0.0, 1.0)}, 1, costs, lyapunov=(1.0, 0.0))
    rep = validate_assumptions(m, [0.1])
    assert rep.check("lyapunov_positive").failures == [1]


def test_validate_is_deterministic(ex1, ex2):
    for m in (ex1, ex2):
        grid = default_grid(m)
        a = dumps(validate_assumptions(m, grid).to_dict())
        b = dumps(validate_assumptions(m, grid).to_dict())
        assert a == b


def test_structural_errors():
    with pytest.raises(ModelError):
        StateSpace((), ())
    with pytest.raises(ModelError):
        StateSpace((1, 1), (1.0, 1.0))
    costs = cost_tables((0, 1), {0: (0,), 1: (0,)}, 1, lambda *a: 0.0, lambda tau, x: 0.0)
    with pytest.raises(ModelError):
        tabulated_model({(0, 0): (1.0, 0.0)}, 1, costs, states=(0, 1), actions={0: (0,), 1: ()})
    with pytest.raises(ModelError):
        tabulated_model({(0, 0): (1.0, 0.0), (1, 0): (1.0, 0.0)}, 1, costs,
                        states=(0, 1), actions={0: (0, 0), 1: (0,)})


@pytest.mark.parametrize("name", ["ex1", "ex2", "fixed"])
def test_rows_stochastic_on_grid(name, request):
    m = request.getfixturevalue(name)
    for eps in default_grid(m):
        Q = m.kernel_tensor(eps)
        mask = m.action_mask()
        assert np.all(Q >= 0)
        sums = Q.sum(axis=-1)[:, mask]
        assert np.max(np.abs(sums - 1)) <= 1e-12


def test_rate_matches_terms_single_term():
    m = _rate_model([(1, 0.2, 0.7), (2, 0.1, 2.0)], remainder=0)
    I = rate_row(m, 1, 0, 0)
    assert I.tolist() == [0.0, 0.7, 2.0]
    m2 = _rate_model([(1, 0.2, 0.7)], remainder=0)
    assert rate_row(m2, 1, 0, 0).tolist() == [0.0, 0.7, INF]


def test_log_rates_converge_on_grid(ex1):
    """-eps log q(z) approaches I(z) for listed states, with the prefactor error
    eps * |log a| as the bound at the finest point."""
    grid = geometric_grid(1.0, 12)
    kappa = 0.1
    R = ex1.rate_tensor()
    for eps_list in [grid]:
        errs = []
        for eps in eps_list:
            L = ex1.log_kernel_tensor(eps)
            finite = np.isfinite(R)
            errs.append(np.max(np.abs(-eps * L[finite] - R[finite])))
        errs = np.array(errs)
        assert np.all(np.diff(errs[4:]) <= 0)
        assert errs[-1] < 10 * grid[-1] * abs(math.log(kappa)) + 1e-9


def test_validity_threshold(ex2):
    assert validity_threshold(ex2) == 0.5
    # p - exp(-1/eps) > 0 iff eps < 1/log(1/0.3)
    assert 0.5 < 1 / math.log(1 / 0.3) < 1.0
