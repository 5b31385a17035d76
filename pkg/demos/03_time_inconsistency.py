"""Why the equilibrium is not the planner's optimum.

A walk on -2..2 with discounted costs: the self at time 1 would like to
commit future selves to a plan, but each later self re-optimizes with its own
discounting.  Enumerating every Markov policy exposes the cost of that.
"""
from tirs import precommitment_gap
from tirs.examples import Example1Config, build_example1, builtin, moving_cost

anchored = builtin("example1-discounted")
rep = precommitment_gap(anchored, "limit", initial_state=-2)
print(f"discounted walk from x=-2, over {rep.n_policies} policies")
print(f"  best precommitted cost {rep.precommit_value:.4f}")
print(f"  equilibrium cost       {rep.equilibrium_value:.4f}")
print(f"  gap                    {rep.value_gap:.4f}")
print(f"  cells where the plans differ: {rep.differing_cells}")

flat = build_example1(Example1Config(window=2, horizon=3, base=moving_cost,
                                     terminal=lambda x: 2.0 * abs(x)))
rep = precommitment_gap(flat, "limit", initial_state=-2)
print(f"\nsame walk, no discounting: gap {rep.value_gap}")
