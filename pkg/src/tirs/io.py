"""Model files, report serialization and atomic output.

Floats are written with 17 significant digits so every double round-trips
exactly; infinities are spelled ``"inf"`` / ``"-inf"``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .equilibrium import EquilibriumSolution, Policy
from .model import (
    INF,
    RATE,
    TABULATED,
    ActionSets,
    CostSpec,
    KernelFamily,
    ModelError,
    ModelSpec,
    RateRow,
    StateSpace,
    TableRow,
)
from .operators import ArgminSet


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    text = format(v, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _encode(obj, out: list, indent: int, level: int):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out, indent, level)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(sep)
            out.append(pad + json.dumps(str(k)) + ": ")
            _encode(v, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(sep)
            out.append(pad)
            _encode(v, out, indent, level + 1)
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON text with fixed key order (insertion order) and 17-digit floats."""
    out: list[str] = []
    _encode(obj, out, indent, 0)
    return "".join(out) + "\n"


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


# -- model files -------------------------------------------------------------

def _real(v, what: str) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        raise ModelError(f"{what}: expected a number or 'inf', got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelError(f"{what}: expected a number, got {v!r}")
    return float(v)


def _label(v):
    if isinstance(v, list):
        return tuple(v)
    return v


def _out_real(v: float):
    return "inf" if v == INF else float(v)


def model_from_dict(doc: dict) -> ModelSpec:
    """Build a ModelSpec from a parsed model document."""
    try:
        T = doc["horizon"]
        state_docs = doc["states"]
        action_doc = doc["actions"]
        kernel_doc = doc["kernel"]
    except (KeyError, TypeError) as e:
        raise ModelError(f"model document missing key {e}") from None
    if not isinstance(T, int) or T < 1:
        raise ModelError("horizon must be a positive integer")
    if not state_docs:
        raise ModelError("state space is empty")
    states = tuple(int(s["label"]) for s in state_docs)
    V = tuple(_real(s.get("lyapunov", 1.0), "lyapunov") for s in state_docs)
    space = StateSpace(states, V)
    acts = {}
    for key, lst in action_doc.items():
        acts[int(key)] = tuple(_label(a) for a in lst)
    for x in states:
        if x not in acts:
            raise ModelError(f"state {x} has no action set")
    actions = ActionSets(acts)
    sidx = {x: i for i, x in enumerate(states)}

    mode = kernel_doc.get("mode")
    if mode not in (RATE, TABULATED):
        raise ModelError(f"unknown kernel mode {mode!r}")
    entries = {}
    for e in kernel_doc.get("entries", []):
        key = (e.get("t"), int(e["x"]), _label(e["u"]))
        rate = None
        if e.get("rate") is not None:
            rate = tuple(_real(r, "rate") for r in e["rate"])
            if len(rate) != len(states):
                raise ModelError("rate row has the wrong length")
        if mode == RATE:
            terms = tuple((int(z), _real(a, "term coefficient"), _real(r, "term rate"))
                          for z, a, r in e.get("terms", []))
            rem = e.get("remainder")
            entries[key] = RateRow(terms, None if rem is None else int(rem), rate)
        else:
            if "row" in e:
                rows = {None: tuple(_real(v, "probability") for v in e["row"])}
            else:
                rows = {_real(r["eps"], "eps"): tuple(_real(v, "probability") for v in r["row"])
                        for r in e["rows"]}
            entries[key] = TableRow(rows, rate)
    kernel = KernelFamily(mode, entries)

    n, A = len(states), max(len(a) for a in acts.values())
    f = np.full((T, T, n, A), np.nan)
    g = np.full((T, n), np.nan)
    disc = doc.get("discounting")
    if disc is not None:
        if disc.get("form") != "exponential":
            raise ModelError("only exponential discounting is supported")
        lam = _real(disc["lambda"], "lambda")
        if not 0 < lam < 1:
            raise ModelError("discount factor must lie in (0, 1)")
        base = np.full((T, n, A), np.nan)
        for c in disc.get("base_cost", []):
            ts = [c["t"]] if c.get("t") is not None else range(1, T + 1)
            for t in ts:
                base[t - 1, sidx[int(c["x"])], acts[int(c["x"])].index(_label(c["u"]))] = _real(c["value"], "cost")
        bterm = np.full(n, np.nan)
        for c in disc.get("base_terminal", []):
            bterm[sidx[int(c["x"])]] = _real(c["value"], "cost")
        for tau in range(1, T + 1):
            g[tau - 1] = lam ** (T + 1 - tau) * bterm
            for t in range(1, T + 1):
                f[tau - 1, t - 1] = lam ** (t - tau) * base[t - 1]
    costs_doc = doc.get("costs", {})
    for c in costs_doc.get("running", []):
        taus = [c["tau"]] if c.get("tau") is not None else range(1, T + 1)
        ts = [c["t"]] if c.get("t") is not None else range(1, T + 1)
        x, u = int(c["x"]), _label(c["u"])
        if x not in sidx or u not in acts[x]:
            raise ModelError(f"running cost for unknown (x, u) = ({x}, {u!r})")
        for tau in taus:
            for t in ts:
                f[tau - 1, t - 1, sidx[x], acts[x].index(u)] = _real(c["value"], "cost")
    for c in costs_doc.get("terminal", []):
        taus = [c["tau"]] if c.get("tau") is not None else range(1, T + 1)
        for tau in taus:
            g[tau - 1, sidx[int(c["x"])]] = _real(c["value"], "cost")
    if np.any(np.isnan(g)):
        raise ModelError("terminal cost missing for some (tau, x)")
    for xi, x in enumerate(states):
        if np.any(np.isnan(f[:, :, xi, :len(acts[x])])):
            raise ModelError(f"running cost missing at state {x}")
    costs = CostSpec(f, g, T)
    tol = doc.get("convergence_tolerance")
    return ModelSpec(
        horizon=T, space=space, actions=actions, kernel=kernel, costs=costs,
        name=doc.get("name", "model"),
        truncation=doc.get("truncation", {"policy": "none"}),
        convergence_tolerance=None if tol is None else _real(tol, "convergence_tolerance"),
    )


def model_to_dict(model: ModelSpec) -> dict:
    """Serialize with fully expanded cost tables."""
    T = model.horizon
    doc = {
        "name": model.name,
        "horizon": T,
        "states": [{"label": x, "lyapunov": v} for x, v in zip(model.states, model.space.lyapunov)],
        "actions": {str(x): list(model.actions[x]) for x in model.states},
    }
    entries = []
    for (t, x, u), e in model.kernel.entries.items():
        d = {} if t is None else {"t": t}
        d.update({"x": x, "u": u})
        if isinstance(e, RateRow):
            d["terms"] = [[z, a, _out_real(r)] for z, a, r in e.terms]
            d["remainder"] = e.remainder
        elif None in e.rows:
            d["row"] = list(e.rows[None])
        else:
            d["rows"] = [{"eps": k, "row": list(r)} for k, r in e.rows.items()]
        if e.rate is not None:
            d["rate"] = [_out_real(r) for r in e.rate]
        entries.append(d)
    doc["kernel"] = {"mode": model.kernel.mode, "entries": entries}
    running = []
    f = model.costs.running
    for tau in range(1, T + 1):
        for t in range(1, T + 1):
            for xi, x in enumerate(model.states):
                for ai, u in enumerate(model.actions[x]):
                    running.append({"tau": tau, "t": t, "x": x, "u": u,
                                    "value": float(f[tau - 1, t - 1, xi, ai])})
    terminal = [{"tau": tau, "x": x, "value": float(model.costs.terminal[tau - 1, xi])}
                for tau in range(1, T + 1) for xi, x in enumerate(model.states)]
    doc["costs"] = {"running": running, "terminal": terminal}
    doc["truncation"] = dict(model.truncation)
    doc["convergence_tolerance"] = model.convergence_tolerance
    return doc


def load_model(path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: invalid JSON ({e})") from None
    return model_from_dict(doc)


def save_model(model: ModelSpec, path):
    write_atomic(path, dumps(model_to_dict(model)))


# -- solutions ---------------------------------------------------------------

def solution_to_dict(model: ModelSpec, sol) -> dict:
    T = model.horizon
    return {
        "model": model.name,
        "eps": sol.eps,
        "states": list(model.states),
        "policy": {str(t): {str(x): sol.policy.action(model, t, x) for x in model.states}
                   for t in range(1, T + 1)},
        "theta_shape": [T, T + 1, model.n_states],
        "theta": sol.theta.tolist(),
        "ties": [{"t": t, "x": x, **a.to_dict()} for (t, x), a in sorted(sol.ties.items())],
        "diagnostics": sol.diagnostics,
    }


def solution_from_dict(model: ModelSpec, doc: dict):
    T = model.horizon
    table = {t: {x: _label(doc["policy"][str(t)][str(x)]) for x in model.states}
             for t in range(1, T + 1)}
    policy = Policy.from_table(model, table)
    theta = np.array([[[_real(v, "theta") for v in row] for row in mat] for mat in doc["theta"]])
    if theta.shape != (T, T + 1, model.n_states):
        raise ModelError(f"theta has shape {theta.shape}, expected {(T, T + 1, model.n_states)}")
    ties = {}
    for d in doc.get("ties", []):
        ties[(d["t"], d["x"])] = ArgminSet(tuple(_label(m) for m in d["minimizers"]),
                                           _label(d["chosen"]), _real(d["gap"], "gap"),
                                           _real(d["value"], "value"))
    eps = doc["eps"] if doc["eps"] == "limit" else _real(doc["eps"], "eps")
    return EquilibriumSolution(policy, theta, ties, eps, doc.get("diagnostics", {}))


def theta_csv(model: ModelSpec, sol) -> str:
    T = model.horizon
    rows = [{"tau": tau, "t": t, "x": x, "theta": float(sol.theta[tau - 1, t - 1, xi])}
            for tau in range(1, T + 1) for t in range(1, T + 2)
            for xi, x in enumerate(model.states)]
    return csv_text(rows, ["tau", "t", "x", "theta"])
