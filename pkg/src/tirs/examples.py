"""Ready-made models: the integer random walk, the regime-switching market,
exponentially discounted cost families and random small instances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .model import (
    INF,
    RATE,
    TABULATED,
    ActionSets,
    CostSpec,
    KernelError,
    KernelFamily,
    ModelError,
    ModelSpec,
    RateRow,
    StateSpace,
    TableRow,
)


def cost_tables(states, actions: Mapping, horizon: int,
                running: Callable, terminal: Callable) -> CostSpec:
    """Tabulate ``running(tau, t, x, u)`` and ``terminal(tau, x)`` into a CostSpec."""
    T, n = horizon, len(states)
    A = max(len(actions[x]) for x in states)
    f = np.full((T, T, n, A), np.nan)
    g = np.empty((T, n))
    for tau in range(1, T + 1):
        for xi, x in enumerate(states):
            g[tau - 1, xi] = terminal(tau, x)
            for t in range(1, T + 1):
                for ai, u in enumerate(actions[x]):
                    f[tau - 1, t - 1, xi, ai] = running(tau, t, x, u)
    return CostSpec(f, g, T)


def build_discounted_costs(base: Callable, terminal: Callable, lam: float, T: int,
                           states, actions: Mapping) -> CostSpec:
    """Exponential discounting anchored at ``tau``.

    ``f_{tau,t}(x,u) = lam**(t - tau) * base(t, x, u)`` and
    ``g_tau(x) = lam**(T + 1 - tau) * terminal(x)``.
    """
    if not 0 < lam < 1:
        raise ValueError("discount factor must lie in (0, 1)")
    return cost_tables(
        states, actions, T,
        lambda tau, t, x, u: lam ** (t - tau) * base(t, x, u),
        lambda tau, x: lam ** (T + 1 - tau) * terminal(x),
    )


# -- integer random walk ---------------------------------------------------

@dataclass
class Example1Config:
    """Walk ``X_{t+1} = X_t + u + noise`` on the window ``-W..W``.

    The noise puts mass ``kappa * exp(-k**2 / eps)`` on every jump ``k != 0``.
    Without ``discount`` the costs are ``base``/``terminal`` for every anchor;
    with it they are exponentially discounted.  ``costs`` overrides both.
    """

    window: int = 5
    kappa: float = 0.1
    horizon: int = 3
    eps_max: float | None = 1.0
    base: Callable = lambda t, x, u: abs(x)
    terminal: Callable = lambda x: abs(x)
    discount: float | None = None
    costs: CostSpec | None = None
    tolerance: float | None = None


def _noise_mass(kappa: float, eps: float) -> float:
    """``kappa * sum_{k != 0} exp(-k^2 / eps)`` summed until the terms vanish."""
    total, k = 0.0, 1
    while True:
        term = math.exp(-k * k / eps)
        if term == 0.0 or term < 1e-300:
            break
        total += 2 * term
        k += 1
    return kappa * total


def folded_rate(z: int, x: int, u: int, W: int) -> float:
    """Rate of landing on ``z`` once out-of-window integers fold onto the boundary."""
    c = x + u
    if -W < z < W:
        return float((z - c) ** 2)
    if z == W:
        return float(max(0, W - c) ** 2)
    return float(max(0, c + W) ** 2)


def build_example1(cfg: Example1Config = Example1Config()) -> ModelSpec:
    W = cfg.window
    if W < 2:
        raise ValueError("window half-width must be at least 2")
    if not cfg.kappa > 0:
        raise ValueError("kappa must be positive")
    if cfg.eps_max is not None and _noise_mass(cfg.kappa, cfg.eps_max) >= 1:
        raise KernelError(
            f"kappa={cfg.kappa} too large: jump mass reaches 1 at eps={cfg.eps_max}")
    states = tuple(range(-W, W + 1))
    acts = {x: (-1, 1) for x in states}
    # jumps whose probability underflows at eps_max are dropped (they fall into the remainder)
    reach = 745.0 * (cfg.eps_max if cfg.eps_max is not None else 1.0)
    kmax = max(int(math.isqrt(int(reach))) + 1, 2 * W + 2)

    entries = {}
    for x in states:
        for u in acts[x]:
            c = x + u
            rem = min(max(c, -W), W)
            terms = []
            for y in range(c - kmax, c + kmax + 1):
                d = (y - c) ** 2
                if y == c or d > reach:
                    continue
                z = min(max(y, -W), W)
                if z == rem:
                    continue
                terms.append((z, cfg.kappa, float(d)))
            entries[(None, x, u)] = RateRow(tuple(terms), rem)

    if cfg.costs is not None:
        costs = cfg.costs
    elif cfg.discount is not None:
        costs = build_discounted_costs(cfg.base, cfg.terminal, cfg.discount, cfg.horizon,
                                       states, acts)
    else:
        costs = cost_tables(states, acts, cfg.horizon,
                            lambda tau, t, x, u: cfg.base(t, x, u),
                            lambda tau, x: cfg.terminal(x))
    return ModelSpec(
        horizon=cfg.horizon,
        space=StateSpace(states, tuple(float(x * x + 1) for x in states)),
        actions=ActionSets(acts),
        kernel=KernelFamily(RATE, entries),
        costs=costs,
        name=f"example1_W{W}_T{cfg.horizon}",
        truncation={"policy": "fold",
                    "detail": f"jumps leaving [-{W}, {W}] land on the nearest boundary state"},
        convergence_tolerance=cfg.tolerance,
    )


# -- regime switching --------------------------------------------------------

def _default_p():
    return {x: {0: 0.3, 1: 0.3} for x in (1, 2, 3)}


def _default_rates():
    return {(1, 0): INF, (1, 1): 1.0, (2, 0): INF, (2, 1): 1.0, (3, 0): 1.0, (3, 1): 1.0}


@dataclass
class Example2Config:
    """Three-state market (1 bull, 2 bear, 3 crisis) with actions 0 (hold) and 1
    (intervene).  ``p[x][u]`` are the base switching probabilities and
    ``rates[(x, u)]`` the crisis exponents; ``inf`` makes the crisis unreachable.

    Default costs: holding costs ``state_cost[x]`` less ``intervention_gain`` when
    intervening, discounted with factor ``discount`` (``None`` for anchor-free
    costs).
    """

    p: Mapping = field(default_factory=_default_p)
    rates: Mapping = field(default_factory=_default_rates)
    horizon: int = 2
    eps_max: float | None = 0.5
    state_cost: Mapping = field(default_factory=lambda: {1: 0.0, 2: 1.0, 3: 4.0})
    terminal_cost: Mapping = field(default_factory=lambda: {1: 0.0, 2: 1.0, 3: 3.0})
    intervention_gain: float = 1.5
    discount: float | None = 0.8
    costs: CostSpec | None = None
    tolerance: float | None = 0.05


def build_example2(cfg: Example2Config = Example2Config()) -> ModelSpec:
    states = (1, 2, 3)
    acts = {x: (0, 1) for x in states}
    entries = {}
    for x in states:
        for u in acts[x]:
            p = cfg.p[x][u]
            lam = cfg.rates[(x, u)]
            if not 0 < p < 1:
                raise ValueError(f"p[{x}][{u}] must lie in (0, 1)")
            if not lam >= 0:
                raise ValueError(f"rate ({x}, {u}) must be non-negative")
            # state 2 is the remainder from state 2, state 1 otherwise
            other, rem = (1, 2) if x == 2 else (2, 1)
            terms = ((other, p, 0.0), (other, -1.0, lam), (3, 2.0, lam))
            entries[(None, x, u)] = RateRow(terms, rem, rate=(0.0, 0.0, lam))

    if cfg.costs is not None:
        costs = cfg.costs
    else:
        base = lambda t, x, u: cfg.state_cost[x] - cfg.intervention_gain * u
        term = lambda x: cfg.terminal_cost[x]
        if cfg.discount is None:
            costs = cost_tables(states, acts, cfg.horizon,
                                lambda tau, t, x, u: base(t, x, u), lambda tau, x: term(x))
        else:
            costs = build_discounted_costs(base, term, cfg.discount, cfg.horizon, states, acts)
    model = ModelSpec(
        horizon=cfg.horizon,
        space=StateSpace(states, (1.0, 1.0, 1.0)),
        actions=ActionSets(acts),
        kernel=KernelFamily(RATE, entries),
        costs=costs,
        name=f"example2_T{cfg.horizon}",
        truncation={"policy": "none", "detail": "state space is finite"},
        convergence_tolerance=cfg.tolerance,
    )
    if cfg.eps_max is not None:
        try:
            model.kernel_tensor(cfg.eps_max)
        except KernelError as e:
            raise KernelError(f"example 2 kernel not stochastic at eps={cfg.eps_max}: {e}") from None
    return model


# -- small tabulated instances ------------------------------------------------

def tabulated_model(rows: Mapping, horizon: int, costs: CostSpec, states=None,
                    actions=None, lyapunov=None, name: str = "tabulated",
                    tolerance: float | None = None) -> ModelSpec:
    """ε-independent tabulated model; ``rows[(x, u)]`` are stochastic vectors."""
    if states is None:
        states = tuple(sorted({x for x, _ in rows}))
    if actions is None:
        actions = {x: tuple(u for xx, u in rows if xx == x) for x in states}
    entries = {(None, x, u): TableRow({None: tuple(map(float, r))}) for (x, u), r in rows.items()}
    V = tuple(lyapunov) if lyapunov is not None else (1.0,) * len(states)
    return ModelSpec(horizon, StateSpace(tuple(states), V), ActionSets(dict(actions)),
                     KernelFamily(TABULATED, entries), costs, name=name,
                     truncation={"policy": "none", "detail": "state space is finite"},
                     convergence_tolerance=tolerance)


def fixed_kernel_model(horizon: int = 2, tolerance: float = 0.01) -> ModelSpec:
    """Two-state, two-action model with an ε-independent kernel and anchor-free costs."""
    states = (0, 1)
    acts = {0: (0, 1), 1: (0, 1)}
    rows = {(0, 0): (0.9, 0.1), (0, 1): (0.4, 0.6), (1, 0): (0.3, 0.7), (1, 1): (0.8, 0.2)}
    run = {(0, 0): 0.0, (0, 1): 0.3, (1, 0): 1.0, (1, 1): 1.2}
    term = {0: 0.0, 1: 1.0}
    costs = cost_tables(states, acts, horizon, lambda tau, t, x, u: run[(x, u)],
                        lambda tau, x: term[x])
    return tabulated_model(rows, horizon, costs, states, acts, name=f"fixed_kernel_T{horizon}",
                           tolerance=tolerance)


def random_model(rng: np.random.Generator, n_states: int = 3, n_actions: int = 2,
                 horizon: int = 2, anchored: bool = True, sparse: bool = False,
                 ragged: bool = False) -> ModelSpec:
    """Random ε-independent tabulated model.

    ``anchored`` makes the costs depend on the anchor ``tau``; ``sparse`` zeroes
    some transition entries; ``ragged`` gives states different action counts.
    """
    states = tuple(range(n_states))
    acts = {}
    for x in states:
        k = int(rng.integers(1, n_actions + 1)) if ragged else n_actions
        acts[x] = tuple(range(k))
    rows = {}
    for x in states:
        for u in acts[x]:
            w = rng.random(n_states)
            if sparse:
                w[rng.random(n_states) < 0.4] = 0.0
                if w.sum() == 0:
                    w[rng.integers(n_states)] = 1.0
            rows[(x, u)] = w / w.sum()
    T = horizon
    A = max(len(a) for a in acts.values())
    if anchored:
        f = rng.normal(size=(T, T, n_states, A))
        g = rng.normal(size=(T, n_states))
    else:
        f = np.broadcast_to(rng.normal(size=(1, T, n_states, A)), (T, T, n_states, A)).copy()
        g = np.broadcast_to(rng.normal(size=(1, n_states)), (T, n_states)).copy()
    for xi, x in enumerate(states):
        f[:, :, xi, len(acts[x]):] = np.nan
    return tabulated_model(rows, T, CostSpec(f, g, T), states, acts,
                           lyapunov=1.0 + rng.random(n_states), name="random")


def moving_cost(t, x, u):
    """``2|x|`` plus a unit charge for stepping right; used by the discounted walk."""
    return 2.0 * abs(x) + (1.0 if u == 1 else 0.0)


def builtin(name: str, **overrides) -> ModelSpec:
    """Named builtin models used by the CLI."""
    if name == "example1":
        return build_example1(Example1Config(**overrides))
    if name == "example1-discounted":
        kw = {"window": 2, "horizon": 3, "discount": 0.5,
              "base": moving_cost, "terminal": lambda x: 2.0 * abs(x)}
        kw.update(overrides)
        return build_example1(Example1Config(**kw))
    if name == "example2":
        return build_example2(Example2Config(**overrides))
    if name == "fixed-kernel":
        return fixed_kernel_model(**overrides)
    raise ModelError(f"unknown example {name!r}")


BUILTINS = ("example1", "example1-discounted", "example2", "fixed-kernel")
