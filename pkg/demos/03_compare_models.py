"""
Comparing models on held-out data
=================================

The bundled file holds 1,000 three-outcome observations with forecasts
from two models: one that hedges slightly and one that is overconfident.

    python demos/03_compare_models.py

The same comparison from the shell::

    propscore compare src/propscore/data/demo_two_models.jsonl
"""

from importlib import resources

import numpy as np

from propscore import compare_all, load_dataset, score_model
from propscore.dataset import align_models

path = resources.files("propscore") / "data" / "demo_two_models.jsonl"
ds = load_dataset(path)
print(f"{ds.n} observations, labels {ds.labels}, models {ds.models}\n")

for rule in ("log", "quadratic"):
    for m in ds.models:
        s = score_model(ds, m, rule)
        extra = f", perplexity {s.perplexity:.4f}" if s.perplexity is not None else ""
        print(f"{rule:>9} {m:<14} mean loss {s.mean_loss:.5f}{extra}")
print()

# Lower mean loss is better, but is the gap more than noise?
report = compare_all(ds, rule="log", test="t")
print(report.to_text())

# The t-test asks whether the *mean* loss differs, which is what propriety
# is about.  The signed-rank test asks whether differences tend to be
# positive or negative.  Here they disagree: the overconfident model wins on
# most days but loses badly when it is wrong, so it has the lower median and
# the higher mean.
for rule in ("log", "quadratic"):
    for test in ("t", "wilcoxon"):
        p = compare_all(ds, rule=rule, test=test).pairs[0]
        print(f"{rule:>9} + {test:<8}: p = {p.result.p_two_sided:.3g}, verdict {p.verdict}")

la, lb = align_models(ds, "calibrated", "overconfident").losses("log")
d = la - lb
print(f"\nlog-loss differences: mean {d.mean():+.4f}, median {np.median(d):+.4f}, "
      f"calibrated better on {np.mean(d < 0):.0%} of days")
