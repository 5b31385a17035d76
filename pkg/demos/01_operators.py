"""One-step risk-sensitive expectation and its small-ε limit.

A two-point coin with payoffs 0 and 1: the certainty equivalent sits between
the mean and the worst case, and slides toward the worst case as ε shrinks.
"""
import numpy as np

from tirs import build_example2, lambda_eps, lambda_limit, varadhan_check
from tirs.examples import cost_tables, tabulated_model

states, acts = (0, 1), {0: (0,), 1: (0,)}
costs = cost_tables(states, acts, 1, lambda *a: 0.0, lambda tau, x: 0.0)
coin = tabulated_model({(0, 0): (0.5, 0.5), (1, 0): (0.5, 0.5)}, 1, costs, states, acts)
h = [0.0, 1.0]

print("fair coin, h = (0, 1)")
print(f"  mean 0.5, worst case {lambda_limit(coin, 1, 0, 0, h)}")
for eps in (10.0, 1.0, 0.1, 0.01):
    print(f"  eps={eps:<5} Lambda={lambda_eps(coin, eps, 1, 0, 0, h):.6f}")

# with rare transitions the limit charges for their rarity through the rate
m = build_example2()
h = {1: 0.0, 2: 1.0, 3: 3.0}
print("\nregime model from bull under intervention, h = (0, 1, 3)")
print(f"  limit: {lambda_limit(m, 1, 1, 1, h)}  (crisis worth 3 but costs rate 1)")
for eps in (0.5, 0.1, 0.01, 0.001):
    v = lambda_eps(m, eps, 1, 1, 1, h)
    gap = varadhan_check(m, eps, 1, 1, 1, np.array([0.0, 1.0, 3.0]))
    print(f"  eps={eps:<6} Lambda={v:.6f}  duality gap {gap:.1e}")
