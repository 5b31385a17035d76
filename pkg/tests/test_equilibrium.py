import numpy as np
import pytest

from oracles import brute_force_equilibrium, classical_value_iteration, policy_cost
from tirs.convergence import default_grid
from tirs.equilibrium import (
    Policy,
    evaluate_policy,
    policy_values,
    precommitment_gap,
    solve_eps,
    solve_limit,
    verify_step_optimality,
)
from tirs.examples import Example2Config, build_example2, builtin, random_model
from tirs.model import ModelError
from tirs.operators import LIMIT


def test_theta_terminal_row_and_shape(ex2):
    sol = solve_eps(ex2, 0.2)
    T = ex2.horizon
    assert sol.theta.shape == (T, T + 1, 3)
    assert np.array_equal(sol.theta[:, T], ex2.costs.terminal)
    assert not sol.theta.flags.writeable


def test_example2_limit_policy(ex2):
    sol = solve_limit(ex2)
    assert sol.tie_count == 0
    assert all(u == 1 for row in sol.policy.table(ex2).values() for u in row.values())


def test_theta_is_policy_value(ex2, rng):
    for m in (build_example2(Example2Config(horizon=3)), random_model(rng, 4, 3, horizon=3)):
        for eps in (0.3, 0.05, LIMIT):
            sol = solve_eps(m, eps) if eps != LIMIT else solve_limit(m)
            for tau in range(1, m.horizon + 1):
                for t in range(1, m.horizon + 1):
                    J = evaluate_policy(m, eps, sol.policy, tau, t)
                    assert np.max(np.abs(J - sol.theta_at(m, tau, t))) <= 1e-10


def test_policy_values_match_oracle(rng):
    m = random_model(rng, 3, 2, horizon=3, sparse=True)
    pol = Policy(rng.integers(0, 2, size=(3, 3)))
    W = policy_values(m, 0.25, pol)
    table = pol.table(m)
    for tau in (1, 2, 3):
        for t in (1, 2, 3):
            ref = policy_cost(m, 0.25, table, tau, t)
            assert np.allclose(W[tau - 1, t - 1], ref, atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_brute_force_agreement(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, int(rng.integers(2, 4)), int(rng.integers(1, 4)),
                     horizon=int(rng.integers(1, 4)), sparse=bool(seed % 2), ragged=bool(seed % 3))
    for eps in (0.4, LIMIT):
        sol = solve_eps(m, eps) if eps != LIMIT else solve_limit(m)
        diag, _ = brute_force_equilibrium(m, eps)
        for t, vals in diag.items():
            assert np.max(np.abs(sol.theta[t - 1, t - 1] - vals)) <= 1e-9


def test_anchor_free_model_reduces_to_value_iteration(rng):
    m = random_model(rng, 3, 3, horizon=3, anchored=False)
    sol = solve_eps(m, 0.2)
    for t in range(1, 4):
        rows = sol.theta[:, t - 1]
        assert np.max(np.abs(rows - rows[0])) <= 1e-12
    vi = classical_value_iteration(m, 0.2)
    for t in range(1, 4):
        assert np.allclose(sol.theta[0, t - 1], vi[t], atol=1e-10)


def test_verify_passes_on_solutions(ex1, ex2):
    for m in (ex1, ex2):
        for eps in default_grid(m)[::3] + [LIMIT]:
            sol = solve_eps(m, eps) if eps != LIMIT else solve_limit(m)
            rep = verify_step_optimality(m, eps, sol)
            assert rep.passed, rep.violations
            assert rep.theta_mismatch <= 1e-10


def test_verify_flags_perturbation(ex2):
    sol = solve_eps(ex2, 0.2)
    # pick the cell with the largest strictly positive deviation slack
    rep = verify_step_optimality(ex2, 0.2, sol)
    t, x, u = max(((r["t"], r["x"], r["u"], r["slack"]) for r in rep.rows
                   if r["t"] == 1 and not r["chosen"]), key=lambda r: r[3])[:3]
    bad = sol.__class__(sol.policy.with_action(ex2, t, x, u), sol.theta, sol.ties, sol.eps)
    rep2 = verify_step_optimality(ex2, 0.2, bad)
    assert rep2.violations == [(t, x)]
    assert rep2.theta_mismatch > 0


def test_deviation_report_serializes(ex2):
    rep = verify_step_optimality(ex2, LIMIT, solve_limit(ex2))
    d = rep.to_dict()
    assert d["passed"] and d["eps"] == LIMIT
    assert d["deviation_slack"]["count"] == len([r for r in rep.rows if not r["chosen"]])


def test_policy_errors(ex2):
    with pytest.raises(ModelError):
        Policy(np.zeros((1, 3), dtype=int)).validate(ex2)
    with pytest.raises(ModelError):
        Policy(np.full((2, 3), 5)).validate(ex2)
    with pytest.raises(ValueError):
        solve_eps(ex2, -1.0)
    with pytest.raises(ValueError):
        solve_eps(ex2, LIMIT)


def test_from_table_roundtrip(ex2):
    sol = solve_limit(ex2)
    again = Policy.from_table(ex2, sol.policy.table(ex2))
    assert np.array_equal(again.choice, sol.policy.choice)
    const = Policy.from_table(ex2, lambda t, x: 0)
    assert not const.choice.any()


def test_precommitment_gap_discounted_walk():
    m = builtin("example1-discounted")
    rep = precommitment_gap(m, LIMIT, initial_state=-2)
    assert rep.value_gap > 0
    assert rep.policies_differ
    assert rep.precommit_value <= rep.equilibrium_value
    assert all(g >= -1e-12 for g in rep.gap_vector)


def test_precommitment_gap_zero_without_anchor_dependence(rng):
    m = random_model(rng, 3, 2, horizon=2, anchored=False)
    rep = precommitment_gap(m, 0.3)
    assert abs(rep.value_gap) <= 1e-12
    assert max(abs(g) for g in rep.gap_vector) <= 1e-12


def test_precommitment_cap(ex2):
    with pytest.raises(ValueError, match="cap"):
        precommitment_gap(ex2, LIMIT, cap=10)
