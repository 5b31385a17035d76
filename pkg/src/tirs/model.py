"""MDP data model: states, actions, the ε-kernel family, rate function and costs.

A :class:`ModelSpec` is a finite truncation of a countable-state, finite-horizon
MDP whose transition law depends on a small parameter ε.  Steps are numbered
``1..T`` and the terminal index is ``T + 1``; arrays are 0-based, so step ``t``
lives at index ``t - 1`` everywhere.

Two kernel modes are supported:

``rate``
    Each row is an exponential polynomial,
    ``q(z) = sum_k a_k * exp(-r_k / eps)`` for every listed state ``z``, and an
    optional designated remainder state takes ``1 - sum`` of everything else.
    The rate function is derived from the leading exponent of every entry
    unless the model supplies one explicitly.

``tabulated``
    Each row is stored verbatim, either once (ε-independent) or once per ε.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

INF = math.inf

RATE = "rate"
TABULATED = "tabulated"

ROW_TOL = 1e-12


class ModelError(ValueError):
    """Malformed model input (structural, not a failed assumption)."""


class KernelError(ValueError):
    """A transition row cannot be assembled at the requested ε."""


@dataclass(frozen=True)
class StateSpace:
    states: tuple[int, ...]
    lyapunov: tuple[float, ...]

    def __post_init__(self):
        if not self.states:
            raise ModelError("state space is empty")
        if len(set(self.states)) != len(self.states):
            raise ModelError("state labels are not unique")
        if len(self.lyapunov) != len(self.states):
            raise ModelError("lyapunov weight must be given for every state")

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class ActionSets:
    actions: Mapping[int, tuple[Any, ...]]
    payloads: Mapping[tuple[int, Any], tuple[float, ...]] = field(default_factory=dict)

    def __getitem__(self, x):
        return self.actions[x]


@dataclass(frozen=True)
class RateRow:
    """One rate-parameterized row: ``(z, a, r)`` terms plus a remainder state."""

    terms: tuple[tuple[int, float, float], ...]
    remainder: int | None = None
    rate: tuple[float, ...] | None = None  # explicit I over the state order


@dataclass(frozen=True)
class TableRow:
    """A tabulated row; ``rows`` maps ε to a row, key ``None`` means any ε."""

    rows: Mapping[float | None, tuple[float, ...]]
    rate: tuple[float, ...] | None = None


@dataclass(frozen=True)
class KernelFamily:
    mode: str
    # keyed by (t or None, x, u); t=None applies to every step
    entries: Mapping[tuple[int | None, int, Any], RateRow | TableRow]

    def lookup(self, t, x, u):
        row = self.entries.get((t, x, u))
        if row is None:
            row = self.entries.get((None, x, u))
        if row is None:
            raise ModelError(f"no kernel entry for t={t}, x={x}, u={u!r}")
        return row


@dataclass(frozen=True)
class CostSpec:
    """Running costs ``f[tau-1, t-1, x, a]`` and terminal costs ``g[tau-1, x]``.

    The action axis is padded to the largest action set with NaN.
    """

    running: np.ndarray
    terminal: np.ndarray
    horizon: int

    def __post_init__(self):
        T = self.horizon
        if T < 1:
            raise ModelError("horizon must be a positive integer")
        if self.running.ndim != 4 or self.running.shape[:2] != (T, T):
            raise ModelError(f"running costs must have shape (T, T, n, A); got {self.running.shape}")
        if self.terminal.shape != (T, self.running.shape[2]):
            raise ModelError(f"terminal costs must have shape (T, n); got {self.terminal.shape}")
        if not np.all(np.isfinite(self.terminal)):
            raise ModelError("terminal costs must be finite")
        self.running.setflags(write=False)
        self.terminal.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    horizon: int
    space: StateSpace
    actions: ActionSets
    kernel: KernelFamily
    costs: CostSpec
    name: str = "model"
    truncation: Mapping[str, Any] = field(default_factory=lambda: {"policy": "none"})
    convergence_tolerance: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.costs.horizon != self.horizon:
            raise ModelError("cost horizon does not match model horizon")
        for x in self.space.states:
            acts = self.actions.actions.get(x)
            if not acts:
                raise ModelError(f"state {x} has no actions")
            if len(set(acts)) != len(acts):
                raise ModelError(f"duplicate actions at state {x}")
        n, A = len(self.space), self.n_actions.max()
        if self.costs.running.shape[2:] != (n, A):
            raise ModelError("running cost table does not match states/actions")
        for xi, k in enumerate(self.n_actions):
            if not np.all(np.isfinite(self.costs.running[:, :, xi, :k])):
                raise ModelError(f"running cost not finite at state {self.space.states[xi]}")
        # every (t, x, u) must resolve to a kernel entry
        for t in range(1, self.horizon + 1):
            for x in self.space.states:
                for u in self.actions[x]:
                    self.kernel.lookup(t, x, u)

    # -- indexing helpers -------------------------------------------------
    @property
    def states(self) -> tuple[int, ...]:
        return self.space.states

    @property
    def n_states(self) -> int:
        return len(self.space)

    @property
    def n_actions(self) -> np.ndarray:
        if "n_actions" not in self._cache:
            self._cache["n_actions"] = np.array([len(self.actions[x]) for x in self.states])
        return self._cache["n_actions"]

    @property
    def lyapunov(self) -> np.ndarray:
        return np.asarray(self.space.lyapunov, dtype=float)

    def state_index(self, x) -> int:
        if "sidx" not in self._cache:
            self._cache["sidx"] = {s: i for i, s in enumerate(self.states)}
        try:
            return self._cache["sidx"][x]
        except KeyError:
            raise ModelError(f"unknown state {x!r}") from None

    def action_index(self, x, u) -> int:
        try:
            return self.actions[x].index(u)
        except ValueError:
            raise ModelError(f"action {u!r} not available at state {x}") from None

    def as_vector(self, h) -> np.ndarray:
        """Coerce a function on states (mapping or sequence in state order) to an array."""
        if isinstance(h, Mapping):
            try:
                v = np.array([h[x] for x in self.states], dtype=float)
            except KeyError as e:
                raise ModelError(f"function undefined at state {e.args[0]}") from None
        else:
            v = np.asarray(h, dtype=float)
            if v.shape != (self.n_states,):
                raise ModelError(f"expected {self.n_states} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ModelError("function values must be finite")
        return v

    def action_mask(self) -> np.ndarray:
        """Boolean (n, A) mask of valid (state, action-slot) pairs."""
        A = self.n_actions.max()
        return np.arange(A)[None, :] < self.n_actions[:, None]

    # -- kernel and rate tensors -----------------------------------------
    def log_kernel_tensor(self, eps: float) -> np.ndarray:
        """``log q`` for every row at ``eps`` as an array ``(T, n, A, n)``.

        Rate-mode rows are assembled in the log domain so exponentially rare
        transitions stay representable when ``exp(-r/eps)`` underflows.
        Padded action slots hold ``-inf``.  Raises :class:`KernelError` when a
        row has negative mass.
        """
        key = ("logq", float(eps))
        if key not in self._cache:
            T, n, A = self.horizon, self.n_states, self.n_actions.max()
            L = np.full((T, n, A, n), -INF)
            for t in range(1, T + 1):
                for xi, x in enumerate(self.states):
                    for ai, u in enumerate(self.actions[x]):
                        L[t - 1, xi, ai] = _assemble_logrow(self, float(eps), t, x, u)
            L.setflags(write=False)
            self._cache[key] = L
        return self._cache[key]

    def kernel_tensor(self, eps: float) -> np.ndarray:
        """All rows at ``eps`` as an array ``(T, n, A, n)``; padded slots are zero."""
        key = ("q", float(eps))
        if key not in self._cache:
            Q = np.exp(self.log_kernel_tensor(eps))
            Q.setflags(write=False)
            self._cache[key] = Q
        return self._cache[key]

    def rate_tensor(self) -> np.ndarray:
        """Rate function ``I[t-1, x, a, z]`` with ``inf`` for limit-unreachable states."""
        if "rate" not in self._cache:
            T, n, A = self.horizon, self.n_states, self.n_actions.max()
            R = np.full((T, n, A, n), INF)
            for t in range(1, T + 1):
                for xi, x in enumerate(self.states):
                    for ai, u in enumerate(self.actions[x]):
                        R[t - 1, xi, ai] = rate_row(self, t, x, u)
            R.setflags(write=False)
            self._cache["rate"] = R
        return self._cache["rate"]


def _match_eps(rows: Mapping, eps: float):
    if None in rows:
        return rows[None]
    for key, row in rows.items():
        if math.isclose(key, eps, rel_tol=1e-12, abs_tol=0.0):
            return row
    raise KernelError(f"no tabulated row for eps={eps!r}")


def _grouped(model: ModelSpec, entry: RateRow) -> list[dict[float, float]]:
    """Per-state coefficients of ``exp(-r/eps)`` grouped by exponent ``r``.

    The remainder state gets ``1 - (everything else)`` in the same form.
    """
    key = ("grouped", entry)
    cache = model._cache
    if key in cache:
        return cache[key]
    n = model.n_states
    per_state: list[dict[float, float]] = [dict() for _ in range(n)]
    for z, a, r in entry.terms:
        if r == INF:
            continue
        d = per_state[model.state_index(z)]
        d[r] = d.get(r, 0.0) + a
    if entry.remainder is not None:
        ri = model.state_index(entry.remainder)
        if per_state[ri]:
            raise ModelError(f"terms listed at the remainder state {entry.remainder}")
        rem = {0.0: 1.0}
        for zi, d in enumerate(per_state):
            if zi == ri:
                continue
            for r, a in d.items():
                rem[r] = rem.get(r, 0.0) - a
        per_state[ri] = rem
    cache[key] = per_state
    return per_state


def _log_expsum(coefs: Mapping[float, float], eps: float) -> float:
    """``log sum_r c_r exp(-r/eps)``; ``nan`` when the sum is negative."""
    items = [(r, c) for r, c in coefs.items() if abs(c) > 1e-15]
    if not items:
        return -INF
    r0 = min(r for r, _ in items)
    s = sum(c * math.exp(-(r - r0) / eps) for r, c in sorted(items))
    if s < 0:
        return math.nan
    if s == 0:
        return -INF
    return -r0 / eps + math.log(s)


def _assemble_logrow(model: ModelSpec, eps: float, t: int, x, u) -> np.ndarray:
    entry = model.kernel.lookup(t, x, u)
    n = model.n_states
    if isinstance(entry, TableRow):
        row = np.array(_match_eps(entry.rows, eps), dtype=float)
        if row.shape != (n,):
            raise ModelError(f"kernel row for t={t}, x={x}, u={u!r} has wrong length")
        if np.any(row < 0):
            raise KernelError(f"negative probability at t={t}, x={x}, u={u!r}, eps={eps!r}")
        with np.errstate(divide="ignore"):
            return np.log(row)
    logrow = np.array([_log_expsum(d, eps) for d in _grouped(model, entry)])
    if np.any(np.isnan(logrow)):
        bad = [model.states[i] for i in np.flatnonzero(np.isnan(logrow))]
        raise KernelError(
            f"negative transition mass at t={t}, x={x}, u={u!r}, eps={eps!r} (states {bad}); "
            "eps is above the model's validity threshold"
        )
    return logrow


def _assemble_row(model: ModelSpec, eps: float, t: int, x, u) -> np.ndarray:
    entry = model.kernel.lookup(t, x, u)
    if isinstance(entry, TableRow):
        row = np.array(_match_eps(entry.rows, eps), dtype=float)
        _assemble_logrow(model, eps, t, x, u)  # shape and sign checks
        return row
    return np.exp(_assemble_logrow(model, eps, t, x, u))


def kernel_at(model: ModelSpec, eps: float, t: int, x, u) -> np.ndarray:
    """Transition row ``q^eps_t(.; x, u)`` over the model's state order."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 1 <= t <= model.horizon:
        raise ModelError(f"step {t} outside 1..{model.horizon}")
    model.state_index(x)
    model.action_index(x, u)
    return _assemble_row(model, float(eps), t, x, u).copy()


def log_kernel_at(model: ModelSpec, eps: float, t: int, x, u) -> np.ndarray:
    """``log q^eps_t(.; x, u)``; exact even where ``q`` itself underflows."""
    kernel_at(model, eps, t, x, u)
    return _assemble_logrow(model, float(eps), t, x, u)


def _leading_rate(coefs: Mapping[float, float]) -> tuple[float, float]:
    """Smallest exponent with a non-negligible coefficient, and that coefficient."""
    for r in sorted(coefs):
        c = coefs[r]
        if abs(c) > 1e-15:
            return r, c
    return INF, 0.0


def _derived_rate(model: ModelSpec, entry: RateRow) -> tuple[np.ndarray, list[int]]:
    """Rate row from the exponential-polynomial terms; also the states whose
    leading coefficient is negative (those rows fail for small eps)."""
    rate = np.full(model.n_states, INF)
    bad = []
    for zi, d in enumerate(_grouped(model, entry)):
        r, c = _leading_rate(d)
        rate[zi] = r
        if c < 0:
            bad.append(model.states[zi])
    return rate, bad


def rate_row(model: ModelSpec, t: int, x, u) -> np.ndarray:
    """Rate function ``I_t(.; x, u)`` over the state order."""
    entry = model.kernel.lookup(t, x, u)
    if entry.rate is not None:
        return np.array(entry.rate, dtype=float)
    if isinstance(entry, TableRow):
        if None not in entry.rows:
            raise ModelError(
                f"no rate function for ε-dependent tabulated row t={t}, x={x}, u={u!r}"
            )
        q = np.asarray(entry.rows[None], dtype=float)
        return np.where(q > 0, 0.0, INF)
    return _derived_rate(model, entry)[0]


# -- validation --------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "failures": self.failures}


@dataclass
class ValidationReport:
    model: str
    eps_grid: list[float]
    checks: list[Check]
    truncation: Mapping[str, Any]
    notes: list[str]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "model": self.model,
            "eps_grid": list(self.eps_grid),
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "truncation": dict(self.truncation),
            "notes": list(self.notes),
        }


def validate_assumptions(model: ModelSpec, eps_grid: Sequence[float]) -> ValidationReport:
    """Check the standing assumptions in their finite-truncation forms.

    Failures are collected into the report; nothing here raises for a
    defective kernel or rate.
    """
    if model.n_states == 0:
        raise ModelError("state space is empty")
    grid = [float(e) for e in eps_grid]
    if any(not e > 0 for e in grid):
        raise ValueError("eps grid must be positive")
    T = model.horizon
    triples = [(t, x, u) for t in range(1, T + 1) for x in model.states for u in model.actions[x]]

    V = model.lyapunov
    lyap = Check("lyapunov_positive", bool(np.all(V > 0) and np.all(np.isfinite(V))),
                 "V(x) > 0 on every state of the truncation")
    lyap.failures = [x for x, v in zip(model.states, V) if not (v > 0 and math.isfinite(v))]

    norm = Check("kernel_normalization", True,
                 f"rows non-negative and summing to 1 within {ROW_TOL:g} at every grid eps")
    for eps in grid:
        for t, x, u in triples:
            try:
                row = _assemble_row(model, eps, t, x, u)
            except KernelError as e:
                norm.failures.append({"eps": eps, "t": t, "x": x, "u": u, "error": str(e)})
                continue
            s = float(row.sum())
            if abs(s - 1.0) > ROW_TOL:
                norm.failures.append({"eps": eps, "t": t, "x": x, "u": u, "row_sum": s})
    norm.passed = not norm.failures

    nonneg = Check("rate_nonnegative", True, "I_t(z;x,u) >= 0")
    inf_zero = Check("rate_inf_zero", True, "inf_z I_t(z;x,u) = 0 for every (t,x,u)")
    leading = Check("rate_leading_coefficient", True,
                    "every rate-mode entry has a positive leading coefficient")
    for t, x, u in triples:
        try:
            I = rate_row(model, t, x, u)
        except ModelError as e:
            inf_zero.failures.append({"t": t, "x": x, "u": u, "error": str(e)})
            continue
        if np.any(I < 0):
            nonneg.failures.append({"t": t, "x": x, "u": u})
        if not np.min(I) == 0.0:
            inf_zero.failures.append({"t": t, "x": x, "u": u, "min_rate": float(np.min(I))})
        entry = model.kernel.lookup(t, x, u)
        if isinstance(entry, RateRow):
            _, bad = _derived_rate(model, entry)
            if bad:
                leading.failures.append({"t": t, "x": x, "u": u, "states": bad})
    for c in (nonneg, inf_zero, leading):
        c.passed = not c.failures

    growth = Check(
        "growth_conditions", True,
        "vacuous on a finite truncation: the growth bounds on V and the costs hold "
        "trivially because every table is finite; not computed",
    )
    costs = Check("costs_bounded_below", bool(
        np.all(np.isfinite(model.costs.terminal))
        and all(np.all(np.isfinite(model.costs.running[:, :, i, :k]))
                for i, k in enumerate(model.n_actions))),
        "running and terminal costs finite on the truncation")

    checks = [lyap, norm, nonneg, inf_zero, leading, costs, growth]
    notes = [
        "state space is a finite truncation; see 'truncation' for how escaping mass is handled",
    ]
    return ValidationReport(model.name, grid, checks, dict(model.truncation), notes)


def validity_threshold(model: ModelSpec, hi: float = 1.0, min_eps: float = 2.0 ** -40) -> float:
    """Largest power of two ``<= hi`` at which every row assembles without error."""
    eps = hi
    while eps >= min_eps:
        try:
            model.kernel_tensor(eps)
            return eps
        except KernelError:
            eps /= 2
    raise KernelError(f"kernel invalid at every eps down to {min_eps:g}")
