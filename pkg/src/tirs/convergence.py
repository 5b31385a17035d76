"""Weighted sup-metric and the ε → 0 sweep of equilibria."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .equilibrium import solve_eps, solve_limit
from .model import KernelError, ModelSpec, validity_threshold
from .operators import TIE_TOL

DEFAULT_POINTS = 12


def w_metric(h1, h2, lyapunov) -> float:
    """``max_x |h1(x) - h2(x)| / V(x)``."""
    h1, h2, V = (np.asarray(a, dtype=float) for a in (h1, h2, lyapunov))
    if np.any(V <= 0):
        raise ValueError("lyapunov weight must be positive")
    return float(np.max(np.abs(h1 - h2) / V))


def geometric_grid(eps_max: float, points: int = DEFAULT_POINTS) -> list[float]:
    """``eps_max * 2**-k`` for ``k = 0..points-1``."""
    if not eps_max > 0 or points < 1:
        raise ValueError("need eps_max > 0 and at least one point")
    return [eps_max * 2.0 ** -k for k in range(points)]


def default_grid(model: ModelSpec, points: int = DEFAULT_POINTS) -> list[float]:
    """Geometric grid starting at the largest valid power-of-two ε not above 1."""
    return geometric_grid(validity_threshold(model), points)


def moving_min(seq, width: int = 3) -> np.ndarray:
    """Trailing moving minimum over ``width`` points."""
    a = np.asarray(seq, dtype=float)
    return np.array([a[max(0, i - width + 1): i + 1].min() for i in range(a.size)])


def eventually_nonincreasing(seq, width: int = 3, skip_fraction: float = 1 / 3,
                             tol: float = 0.0) -> bool:
    """True when the trailing moving minimum never rises after the first
    ``skip_fraction`` of the sequence."""
    mm = moving_min(seq, width)
    start = int(np.floor(len(mm) * skip_fraction))
    tail = mm[start:]
    return bool(np.all(np.diff(tail) <= tol))


def _workers() -> int | None:
    raw = os.environ.get("TIRS_THREADS", "0")
    try:
        k = int(raw)
    except ValueError:
        return None
    return None if k <= 0 else k


@dataclass
class SweepResult:
    grid: list[float]
    distances: np.ndarray          # (len(grid), T, T): w(Θ^eps_{tau,t}, Θ_{tau,t})
    policy_agreement: np.ndarray   # (len(grid),)
    tie_flags: np.ndarray          # (len(grid),) non-singleton argmin sets at that eps
    limit_tie_count: int
    tolerance: float | None = None

    @property
    def horizon(self) -> int:
        return self.distances.shape[1]

    def final_distance(self) -> float:
        return float(self.distances[-1].max())

    def trend_ok(self) -> bool:
        T = self.horizon
        return all(eventually_nonincreasing(self.distances[:, i, j])
                   for i in range(T) for j in range(T))

    def checks(self, tolerance: float | None = None) -> dict:
        tol = self.tolerance if tolerance is None else tolerance
        out = {
            "eventually_nonincreasing": self.trend_ok(),
            "final_distance": self.final_distance(),
        }
        if tol is not None:
            out["tolerance"] = tol
            out["final_below_tolerance"] = self.final_distance() < tol
        if self.limit_tie_count == 0:
            out["policy_agreement_final"] = float(self.policy_agreement[-1])
            out["policy_agreement_ok"] = bool(self.policy_agreement[-1] == 1.0)
        return out

    @property
    def passed(self) -> bool:
        c = self.checks()
        return (c["eventually_nonincreasing"] and c.get("final_below_tolerance", True)
                and c.get("policy_agreement_ok", True))

    def rows(self):
        """Flat records, one per (eps, tau, t)."""
        T = self.horizon
        for k, eps in enumerate(self.grid):
            for tau in range(1, T + 1):
                for t in range(1, T + 1):
                    yield {"eps": eps, "tau": tau, "t": t,
                           "w_distance": float(self.distances[k, tau - 1, t - 1]),
                           "policy_agreement": float(self.policy_agreement[k]),
                           "tie_count": int(self.tie_flags[k])}

    def to_dict(self):
        return {
            "grid": list(self.grid),
            "distances": self.distances.tolist(),
            "policy_agreement": self.policy_agreement.tolist(),
            "tie_flags": self.tie_flags.tolist(),
            "limit_tie_count": self.limit_tie_count,
            "checks": self.checks(),
            "passed": self.passed,
        }


def sweep(model: ModelSpec, grid=None, tie_tol: float = TIE_TOL) -> SweepResult:
    """Solve the limit problem once and the ε-problem at every grid point."""
    grid = default_grid(model) if grid is None else [float(e) for e in grid]
    if any(not e > 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be positive and strictly decreasing")
    try:
        model.kernel_tensor(grid[0])
    except KernelError as e:
        try:
            thr = validity_threshold(model, hi=grid[0])
            hint = f"; largest valid power-of-two eps below it is {thr:g}"
        except KernelError:
            hint = ""
        raise KernelError(f"kernel invalid at the largest grid eps {grid[0]:g}{hint}: {e}") from None

    lim = solve_limit(model, tie_tol)
    T, n = model.horizon, model.n_states
    V = model.lyapunov

    def one(eps):
        sol = solve_eps(model, eps, tie_tol)
        d = np.max(np.abs(sol.theta[:, :T, :] - lim.theta[:, :T, :]) / V, axis=-1)
        agree = sum(
            model.actions[x][sol.policy.choice[t - 1, xi]] in lim.ties[(t, x)].minimizers
            for t in range(1, T + 1) for xi, x in enumerate(model.states))
        return d, agree / (T * n), sol.tie_count

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(one, grid))
    return SweepResult(
        grid=grid,
        distances=np.stack([r[0] for r in results]),
        policy_agreement=np.array([r[1] for r in results]),
        tie_flags=np.array([r[2] for r in results]),
        limit_tie_count=lim.tie_count,
        tolerance=model.convergence_tolerance,
    )
