"""
Proper scoring rules as losses
==============================

A forecast q is scored on the outcome that actually happened.  Lower is
better.  A rule is *proper* when, if outcomes really come from f, no
forecast has a lower expected loss than f itself.

    python demos/01_scoring_rules.py
"""

import numpy as np

from propscore import scoring

# Scoring one forecast --------------------------------------------------------
q = np.array([0.7, 0.2, 0.1])
for rule in (scoring.LOG, scoring.QUADRATIC, scoring.SPHERICAL):
    print(f"{rule.name:>10}: loss if outcome 0 happens = {rule.loss(q, 0):+.6f}, "
          f"if outcome 2 happens = {rule.loss(q, 2):+.6f}")

# A batch of forecasts is scored in one call
Q = np.array([[0.5, 0.5], [0.9, 0.1], [0.25, 0.75]])
print("\nlog losses of three forecasts on outcomes (0, 1, 1):", scoring.LOG.loss(Q, np.array([0, 1, 1])))

# Expected loss splits into divergence + entropy --------------------------------
# The entropy part depends only on f, so comparing models by mean loss is
# the same as comparing their divergence from the truth.
f = np.array([0.5, 0.5])
q = np.array([0.25, 0.75])
for rule in (scoring.LOG, scoring.QUADRATIC):
    el = scoring.expected_loss(rule, f, q)
    d = rule.divergence(f, q)
    h = scoring.generalized_entropy(rule, f)
    print(f"\n{rule.name}: expected loss {el:.6f} = divergence {d:.6f} + entropy {h:.6f}")

# Propriety in action -----------------------------------------------------------
# Sweep a two-outcome forecast and find where the expected loss bottoms out.
f = np.array([0.3, 0.7])
grid = np.linspace(0.001, 0.999, 999)
Q = np.column_stack([grid, 1 - grid])
for rule in (scoring.LOG, scoring.QUADRATIC, scoring.SPHERICAL):
    best = grid[np.argmin(scoring.expected_loss(rule, f, Q))]
    print(f"{rule.name:>10}: best forecast for outcome 0 is {best:.3f} (truth 0.3)")
naive = -(f * Q).sum(axis=1)
print(f"{'naive':>10}: best forecast for outcome 0 is {grid[np.argmin(naive)]:.3f} (not proper)")

# Building a rule from any strictly convex generator ------------------------------
gen = scoring.polynomial_generator([[0.0, 0.0, 1.0, 0.5], [0.0, 0.0, 2.0, 0.0]], name="cubic")
rule = scoring.bregman_rule(gen)
print(f"\n{rule.name}: divergence of (0.25, 0.75) from (0.5, 0.5) = {rule.divergence(f, q):.6f}")
