"""A confounder makes the naive regression slope overstate a causal effect.

Z drives both X and Y, and X drives Y with coefficient 2. Regressing Y on X
alone picks up the back-door path through Z; adjusting for Z removes it.
"""
from causalmi.causal import estimate_ate, identify_backdoor, naive_conditional_effect
from causalmi.simulator import analytical_ate, make_sem, sample

sem = make_sem("ZXY", {("Z", "X"): 1.0, ("Z", "Y"): 1.0, ("X", "Y"): 2.0}, 1.0)
d = sample(sem, 10_000, seed=0)

estimand = identify_backdoor(sem.dag, "X", "Y")
print("adjustment set:", estimand.adjustment_set)
print("estimand:", estimand.expression)
print(f"true effect      {analytical_ate(sem, 'X', 'Y'):.3f}")
print(f"naive slope      {naive_conditional_effect(d, 'X', 'Y'):.3f}  (expected about 2.5)")
print(f"adjusted effect  {estimate_ate(d, estimand, 1.0, 0.0).value:.3f}")
