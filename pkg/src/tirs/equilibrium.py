"""Backward construction of time-inconsistent risk-sensitive equilibria.

At each step ``t = T, ..., 1`` the step-``t`` self picks, state by state, an
action minimizing its own Hamiltonian ``f_{t,t} + Λ_t(.; Θ_{t,t+1})`` given the
later selves' choices; every anchor ``tau`` then rolls its continuation value
``Θ_{tau,t}`` back through the chosen action.  ``Θ`` is kept for the full
``tau x t`` rectangle.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, ModelSpec
from .operators import (
    LIMIT,
    TIE_TOL,
    _emit,
    argmin_from_values,
    is_limit,
    lambda_selected,
    lambda_table,
    lse_rows,
    maxplus_rows,
)

VIOLATION_TOL = 1e-9
DEFAULT_ENUM_CAP = 10**6


def _check_eps(eps):
    if is_limit(eps):
        return LIMIT
    eps = float(eps)
    if not eps > 0:
        raise ValueError("eps must be positive or 'limit'")
    return eps


@dataclass(frozen=True)
class Policy:
    """Deterministic Markov policy stored as action slots ``choice[t-1, x_index]``."""

    choice: np.ndarray

    def action(self, model: ModelSpec, t: int, x):
        return model.actions[x][int(self.choice[t - 1, model.state_index(x)])]

    def table(self, model: ModelSpec) -> dict:
        return {t: {x: self.action(model, t, x) for x in model.states}
                for t in range(1, model.horizon + 1)}

    @classmethod
    def from_table(cls, model: ModelSpec, table) -> "Policy":
        """Build from a nested mapping ``{t: {x: action}}`` (or a callable ``(t, x) -> u``)."""
        T, n = model.horizon, model.n_states
        slots = np.zeros((T, n), dtype=int)
        for t in range(1, T + 1):
            for xi, x in enumerate(model.states):
                u = table(t, x) if callable(table) else table[t][x]
                slots[t - 1, xi] = model.action_index(x, u)
        return cls(slots)

    def with_action(self, model: ModelSpec, t: int, x, u) -> "Policy":
        c = self.choice.copy()
        c[t - 1, model.state_index(x)] = model.action_index(x, u)
        return Policy(c)

    def validate(self, model: ModelSpec):
        if self.choice.shape != (model.horizon, model.n_states):
            raise ModelError("policy shape does not match model")
        if np.any(self.choice < 0) or np.any(self.choice >= model.n_actions[None, :]):
            raise ModelError("policy selects an unavailable action")


@dataclass
class EquilibriumSolution:
    """Policy, Θ tensor ``theta[tau-1, t-1, x]`` (``t = T+1`` is the terminal
    row) and the tie ledger ``ties[(t, x)]``."""

    policy: Policy
    theta: np.ndarray
    ties: dict
    eps: object
    diagnostics: dict = field(default_factory=dict)

    def theta_at(self, model: ModelSpec, tau: int, t: int) -> np.ndarray:
        return self.theta[tau - 1, t - 1]

    @property
    def tie_count(self) -> int:
        return sum(not a.is_singleton for a in self.ties.values())


def _solve(model: ModelSpec, eps, tie_tol: float) -> EquilibriumSolution:
    eps = _check_eps(eps)
    T, n = model.horizon, model.n_states
    f = model.costs.running
    theta = np.empty((T, T + 1, n))
    theta[:, T, :] = model.costs.terminal
    choice = np.zeros((T, n), dtype=int)
    ties = {}
    timing = {}
    for t in range(T, 0, -1):
        t0 = time.perf_counter()
        # diagonal Hamiltonian for every (x, action slot)
        H = f[t - 1, t - 1] + lambda_table(model, eps, t, theta[t - 1, t])
        for xi, x in enumerate(model.states):
            k = model.n_actions[xi]
            am = argmin_from_values(model.actions[x], H[xi, :k], tie_tol)
            ties[(t, x)] = am
            choice[t - 1, xi] = model.actions[x].index(am.chosen)
            _emit(op="bellman_argmin", eps=eps, t=t, x=x, values=H[xi, :k].tolist(),
                  chosen=am.chosen)
        xs = np.arange(n)
        theta[:, t - 1, :] = f[:, t - 1, xs, choice[t - 1]] + lambda_selected(
            model, eps, t, choice[t - 1], theta[:, t, :])
        timing[t] = time.perf_counter() - t0
    theta.setflags(write=False)
    diag = {
        "step_seconds": {str(t): timing[t] for t in sorted(timing)},
        "tie_count": sum(not a.is_singleton for a in ties.values()),
        "tie_tol": tie_tol,
    }
    return EquilibriumSolution(Policy(choice), theta, ties, eps, diag)


def solve_eps(model: ModelSpec, eps: float, tie_tol: float = TIE_TOL) -> EquilibriumSolution:
    """ε-risk-sensitive equilibrium by backward Hamiltonian recursion."""
    if is_limit(eps):
        raise ValueError("use solve_limit for the limit problem")
    return _solve(model, eps, tie_tol)


def solve_limit(model: ModelSpec, tie_tol: float = TIE_TOL) -> EquilibriumSolution:
    """Equilibrium of the ε → 0 (max-plus) problem."""
    return _solve(model, LIMIT, tie_tol)


def policy_values(model: ModelSpec, eps, policy: Policy) -> np.ndarray:
    """Exact costs ``J_{tau,t}(x; policy)`` for every anchor and start step.

    Returns an array shaped like the Θ tensor, ``(T, T+1, n)``.  No optimization
    takes place; this is the tower-property backward pass.
    """
    eps = _check_eps(eps)
    policy.validate(model)
    T, n = model.horizon, model.n_states
    f = model.costs.running
    W = np.empty((T, T + 1, n))
    W[:, T, :] = model.costs.terminal
    xs = np.arange(n)
    for s in range(T, 0, -1):
        a = policy.choice[s - 1]
        W[:, s - 1, :] = f[:, s - 1, xs, a] + lambda_selected(model, eps, s, a, W[:, s, :])
    return W


def evaluate_policy(model: ModelSpec, eps, pi: Policy, tau: int, t: int) -> np.ndarray:
    """``J_{tau,t}(.; pi)`` as a vector over states."""
    if not (1 <= tau <= model.horizon and 1 <= t <= model.horizon + 1):
        raise ModelError("tau or t out of range")
    return policy_values(model, eps, pi)[tau - 1, t - 1]


# -- step optimality -----------------------------------------------------------

@dataclass
class DeviationReport:
    eps: object
    rows: list          # one dict per (t, x, u)
    worst_violation: float
    violations: list    # (t, x) pairs with a violation above tolerance
    theta_mismatch: float
    tol: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def slack_summary(self) -> dict:
        s = np.array([r["slack"] for r in self.rows if not r["chosen"]])
        if s.size == 0:
            return {"count": 0}
        return {"count": int(s.size), "min": float(s.min()), "median": float(np.median(s)),
                "max": float(s.max())}

    def to_dict(self):
        return {
            "eps": self.eps,
            "passed": self.passed,
            "tol": self.tol,
            "worst_violation": self.worst_violation,
            "violations": [{"t": t, "x": x} for t, x in self.violations],
            "theta_mismatch": self.theta_mismatch,
            "deviation_slack": self.slack_summary(),
            "rows": self.rows,
        }


def verify_step_optimality(model: ModelSpec, eps, sol: EquilibriumSolution,
                           tol: float = VIOLATION_TOL) -> DeviationReport:
    """Check that no single-step deviation improves any self's own cost.

    Continuation values are re-derived from ``sol.policy`` by policy
    evaluation, so a perturbed policy is judged on its actual costs.  The
    mismatch between those and ``sol.theta`` is reported separately.
    """
    eps = _check_eps(eps)
    J = policy_values(model, eps, sol.policy)
    mismatch = float(np.max(np.abs(J - sol.theta))) if sol.theta is not None else float("nan")
    f = model.costs.running
    rows, violations = [], []
    worst = -np.inf
    for t in range(1, model.horizon + 1):
        H = f[t - 1, t - 1] + lambda_table(model, eps, t, J[t - 1, t])
        for xi, x in enumerate(model.states):
            own = J[t - 1, t - 1, xi]
            chosen = sol.policy.choice[t - 1, xi]
            bad = False
            for ai, u in enumerate(model.actions[x]):
                excess = own - H[xi, ai]
                worst = max(worst, excess)
                rows.append({"t": t, "x": x, "u": u, "theta_tt": float(own),
                             "j_dev": float(H[xi, ai]), "slack": float(H[xi, ai] - own),
                             "chosen": bool(ai == chosen)})
                bad |= excess > tol
            if bad:
                violations.append((t, x))
    return DeviationReport(eps, rows, float(max(worst, 0.0)), violations, mismatch, tol)


# -- precommitment comparison ------------------------------------------------

@dataclass
class GapReport:
    eps: object
    initial_state: object
    precommit_value: float
    equilibrium_value: float
    value_gap: float
    precommit_values: list       # pointwise min over policies of J_{1,1}(x)
    equilibrium_values: list     # J_{1,1}(x; equilibrium)
    gap_vector: list
    differing_cells: list        # (t, x) where the two policies pick different actions
    precommit_policy: dict
    equilibrium_policy: dict
    n_policies: int

    @property
    def policies_differ(self) -> bool:
        return bool(self.differing_cells)

    def to_dict(self):
        return {
            "eps": self.eps,
            "initial_state": self.initial_state,
            "precommit_value": self.precommit_value,
            "equilibrium_value": self.equilibrium_value,
            "value_gap": self.value_gap,
            "policies_differ": self.policies_differ,
            "differing_cells": [{"t": t, "x": x} for t, x in self.differing_cells],
            "precommit_values": self.precommit_values,
            "equilibrium_values": self.equilibrium_values,
            "gap_vector": self.gap_vector,
            "precommit_policy": {str(t): {str(x): u for x, u in row.items()}
                                 for t, row in self.precommit_policy.items()},
            "equilibrium_policy": {str(t): {str(x): u for x, u in row.items()}
                                   for t, row in self.equilibrium_policy.items()},
            "n_policies": self.n_policies,
        }


def _anchor1_values(model: ModelSpec, eps, choices: np.ndarray) -> np.ndarray:
    """``J_{1,1}`` for a batch of policies ``choices[p, t-1, x]`` -> ``(P, n)``."""
    T, n = model.horizon, model.n_states
    f = model.costs.running
    xs = np.arange(n)
    W = np.broadcast_to(model.costs.terminal[0], (choices.shape[0], n)).copy()
    if is_limit(eps):
        R = model.rate_tensor()
    else:
        L = model.log_kernel_tensor(eps)
    for s in range(T, 0, -1):
        a = choices[:, s - 1, :]                                   # (P, n)
        cost = f[0, s - 1][xs[None, :], a]
        if is_limit(eps):
            W = cost + maxplus_rows(R[s - 1][xs[None, :], a], W[:, None, :])
        else:
            W = cost + lse_rows(L[s - 1][xs[None, :], a], W[:, None, :], eps)
    return W


def precommitment_gap(model: ModelSpec, eps, initial_state=None,
                      cap: int = DEFAULT_ENUM_CAP, tie_tol: float = TIE_TOL,
                      batch: int = 1 << 14) -> GapReport:
    """Compare the equilibrium against the best precommitted policy.

    Enumerates every deterministic Markov policy and minimizes the time-1 cost
    ``J_{1,1}(x0; pi)``.  The equilibrium's value is computed by the same
    batched evaluator so the two numbers are directly comparable.
    """
    eps = _check_eps(eps)
    T, n = model.horizon, model.n_states
    x0 = model.states[0] if initial_state is None else initial_state
    i0 = model.state_index(x0)
    count = int(np.prod([float(model.n_actions[xi]) for _ in range(T) for xi in range(n)]))
    if count > cap:
        raise ValueError(
            f"{count} policies exceeds the enumeration cap {cap}; shrink the instance")
    sol = _solve(model, eps, tie_tol)
    eq_vals = _anchor1_values(model, eps, sol.policy.choice[None])[0]

    ranges = [range(int(model.n_actions[xi])) for _ in range(T) for xi in range(n)]
    best_vec = np.full(n, np.inf)
    best_x0, best_pol = np.inf, None
    it = itertools.product(*ranges)
    while True:
        chunk = list(itertools.islice(it, batch))
        if not chunk:
            break
        C = np.array(chunk, dtype=int).reshape(len(chunk), T, n)
        V = _anchor1_values(model, eps, C)
        best_vec = np.minimum(best_vec, V.min(axis=0))
        j = int(np.argmin(V[:, i0]))
        if V[j, i0] < best_x0 - tie_tol:
            best_x0, best_pol = float(V[j, i0]), C[j].copy()
    pre = Policy(best_pol)
    eq = sol.policy
    differ = [(t, x) for t in range(1, T + 1) for xi, x in enumerate(model.states)
              if pre.choice[t - 1, xi] != eq.choice[t - 1, xi]]
    gap_vec = eq_vals - best_vec
    return GapReport(
        eps=eps,
        initial_state=x0,
        precommit_value=best_x0,
        equilibrium_value=float(eq_vals[i0]),
        value_gap=float(eq_vals[i0] - best_x0),
        precommit_values=best_vec.tolist(),
        equilibrium_values=eq_vals.tolist(),
        gap_vector=gap_vec.tolist(),
        differing_cells=differ,
        precommit_policy=pre.table(model),
        equilibrium_policy=eq.table(model),
        n_policies=count,
    )
