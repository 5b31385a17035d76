"""Equilibrium of the three-regime market and a check that no self deviates."""
from tirs import build_example2, solve_eps, solve_limit, verify_step_optimality

m = build_example2()
names = {1: "bull", 2: "bear", 3: "crisis"}
acts = {0: "hold", 1: "intervene"}

for eps in (0.5, 0.1, "limit"):
    sol = solve_limit(m) if eps == "limit" else solve_eps(m, eps)
    rep = verify_step_optimality(m, eps, sol)
    print(f"eps={eps}")
    for t, row in sol.policy.table(m).items():
        print(f"  t={t}: " + ", ".join(f"{names[x]}->{acts[u]}" for x, u in row.items()))
    print(f"  Theta_11 = {sol.theta_at(m, 1, 1).round(4).tolist()}")
    print(f"  step-optimality: {len(rep.violations)} violations, ties: {sol.tie_count}")
