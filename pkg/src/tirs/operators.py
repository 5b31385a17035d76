"""Risk-sensitive expectation operators and their max-plus limit.

``lambda_eps`` is the one-step certainty equivalent
``eps * log sum_z exp(h(z)/eps) q(z)``; ``lambda_limit`` is its ε → 0 limit
``max_z [h(z) - I(z)]``.  The Hamiltonians add a running cost, and
``bellman_argmin`` minimizes the diagonal Hamiltonian over the action grid.

The scalar functions here share their arithmetic with the vectorized
helpers used by the solvers, so both paths agree bit for bit.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np

from .model import INF, ModelSpec, log_kernel_at, rate_row

LIMIT = "limit"
TIE_TOL = 1e-9

_trace: contextvars.ContextVar = contextvars.ContextVar("tirs_trace", default=None)


@contextlib.contextmanager
def trace_ops(sink):
    """Collect operator evaluations as dicts by calling ``sink(record)``."""
    token = _trace.set(sink)
    try:
        yield
    finally:
        _trace.reset(token)


def _emit(**record):
    sink = _trace.get()
    if sink is not None:
        sink(record)


def is_limit(eps) -> bool:
    return isinstance(eps, str) and eps == LIMIT


# -- vectorized kernels ---------------------------------------------------

def lse_rows(logq: np.ndarray, h: np.ndarray, eps: float) -> np.ndarray:
    """``eps * log sum_z exp(h/eps) q`` along the last axis, in shifted form.

    Takes ``log q``; entries with ``q == 0`` (``-inf``) drop out of the sum.
    """
    s = h + eps * logq
    m = np.max(s, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise ValueError("empty transition support")
    out = m + eps * np.log(np.sum(np.exp((s - m) / eps), axis=-1, keepdims=True))
    return out[..., 0]


def maxplus_rows(rate: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``max_z [h(z) - I(z)]`` along the last axis; ``inf`` rates never win."""
    out = np.max(h - rate, axis=-1)
    if np.any(np.isneginf(out)):
        raise ValueError("rate function is +inf everywhere for some (t, x, u)")
    return out


def lambda_table(model: ModelSpec, eps, t: int, h: np.ndarray) -> np.ndarray:
    """Λ at step ``t`` for every (state, action slot); padded slots are NaN."""
    if is_limit(eps):
        out = maxplus_rows(np.where(model.action_mask()[..., None], model.rate_tensor()[t - 1], 0.0), h)
    else:
        L = model.log_kernel_tensor(eps)[t - 1]
        out = lse_rows(np.where(model.action_mask()[..., None], L, 0.0), h, eps)
    return np.where(model.action_mask(), out, np.nan)


def lambda_selected(model: ModelSpec, eps, t: int, choice: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Λ at step ``t`` with action slot ``choice[x]`` at each state, for a stack
    of functions ``H`` of shape ``(..., n)``; returns shape ``(..., n)``."""
    xs = np.arange(model.n_states)
    if is_limit(eps):
        rows = model.rate_tensor()[t - 1, xs, choice]          # (n, n)
        return maxplus_rows(rows, H[..., None, :])
    rows = model.log_kernel_tensor(eps)[t - 1, xs, choice]
    return lse_rows(rows, H[..., None, :], eps)


# -- scalar operators --------------------------------------------------------

def lambda_eps(model: ModelSpec, eps: float, t: int, x, u, h) -> float:
    """Risk-sensitive expectation of ``h`` after one step from ``(x, u)``.

    Examples
    --------
    With ``q = (0.5, 0.5)``, ``h = (0, 1)`` and ``eps = 1`` the value is
    ``log((1 + e) / 2)``.
    """
    v = float(lse_rows(log_kernel_at(model, eps, t, x, u), model.as_vector(h), float(eps)))
    _emit(op="lambda_eps", eps=float(eps), t=t, x=x, u=u, value=v)
    return v


def lambda_limit(model: ModelSpec, t: int, x, u, h) -> float:
    """Max-plus limit ``max_z [h(z) - I_t(z; x, u)]``; exact on a finite window."""
    model.action_index(x, u)
    v = float(maxplus_rows(rate_row(model, t, x, u), model.as_vector(h)))
    _emit(op="lambda_limit", t=t, x=x, u=u, value=v)
    return v


def running_cost(model: ModelSpec, tau: int, t: int, x, u) -> float:
    return float(model.costs.running[tau - 1, t - 1, model.state_index(x), model.action_index(x, u)])


def hamiltonian_eps(model: ModelSpec, eps: float, tau: int, t: int, x, u, h) -> float:
    """``f_{tau,t}(x,u) + Λ^eps_t(x,u;h)``."""
    return running_cost(model, tau, t, x, u) + lambda_eps(model, eps, t, x, u, h)


def hamiltonian_limit(model: ModelSpec, tau: int, t: int, x, u, h) -> float:
    """``f_{tau,t}(x,u) + Λ_t(x,u;h)``."""
    return running_cost(model, tau, t, x, u) + lambda_limit(model, t, x, u, h)


def hamiltonian(model: ModelSpec, eps, tau: int, t: int, x, u, h) -> float:
    if is_limit(eps):
        return hamiltonian_limit(model, tau, t, x, u, h)
    return hamiltonian_eps(model, eps, tau, t, x, u, h)


@dataclass(frozen=True)
class ArgminSet:
    minimizers: tuple
    chosen: object
    gap: float
    value: float

    @property
    def is_singleton(self) -> bool:
        return len(self.minimizers) == 1

    def to_dict(self):
        return {"minimizers": list(self.minimizers), "chosen": self.chosen,
                "gap": self.gap, "value": self.value}


def argmin_from_values(actions, values, tie_tol: float = TIE_TOL) -> ArgminSet:
    """Argmin set over a finite action list; the chosen action is the first
    minimizer in declared order."""
    values = np.asarray(values, dtype=float)
    best = float(np.min(values))
    members = [i for i, v in enumerate(values) if v <= best + tie_tol]
    rest = values[values > best + tie_tol]
    gap = float(np.min(rest) - best) if rest.size else INF
    mins = tuple(actions[i] for i in members)
    return ArgminSet(mins, mins[0], gap, best)


def bellman_argmin(model: ModelSpec, eps, t: int, x, h, tie_tol: float = TIE_TOL):
    """Minimize ``f_{t,t}(x,u) + Λ_t(x,u;h)`` over the actions at ``x``.

    ``eps`` is a positive float or :data:`LIMIT`.  Returns ``(value, ArgminSet)``.
    """
    h = model.as_vector(h)
    acts = model.actions[x]
    vals = [hamiltonian(model, eps, t, t, x, u, h) for u in acts]
    am = argmin_from_values(acts, vals, tie_tol)
    return am.value, am


def gibbs_measure(logq: np.ndarray, h: np.ndarray, eps: float) -> np.ndarray:
    """Tilted measure ``nu(z) ∝ exp(h(z)/eps) q(z)`` from ``log q``; zero off the support."""
    nu = np.zeros_like(logq)
    sup = np.isfinite(logq)
    s = h[sup] / eps + logq[sup]
    w = np.exp(s - s.max())
    nu[sup] = w / w.sum()
    return nu


def varadhan_check(model: ModelSpec, eps: float, t: int, x, u, h) -> float:
    """Discrepancy between Λ^eps and the entropy-penalized value at its Gibbs maximizer.

    The right-hand side is ``sum nu h - eps * KL(nu || q)`` with ``nu`` the
    Gibbs tilt of ``q``; the two agree exactly in exact arithmetic.
    """
    hv = model.as_vector(h)
    logq = log_kernel_at(model, eps, t, x, u)
    lhs = float(lse_rows(logq, hv, float(eps)))
    nu = gibbs_measure(logq, hv, float(eps))
    sup = nu > 0
    kl = float(np.sum(nu[sup] * (np.log(nu[sup]) - logq[sup])))
    rhs = float(np.sum(nu[sup] * hv[sup])) - eps * kl
    return abs(lhs - rhs)
