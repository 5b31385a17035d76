"""Equilibria along ε = 2^-k approach the max-plus equilibrium."""
from tirs import build_example2, sweep

m = build_example2()
res = sweep(m)
print(f"{'eps':>10}  {'max w-distance':>15}  agreement")
for eps, d, a in zip(res.grid, res.distances.max(axis=(1, 2)), res.policy_agreement):
    print(f"{eps:>10.6f}  {d:>15.6f}  {a:.2f}")
print(res.checks())
