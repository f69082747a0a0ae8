"""Regenerate the bundled two-model demo file.

Three-outcome weather-style data: the true distribution for each day is a
Dirichlet(2, 2, 2) draw.  ``calibrated`` hedges slightly towards uniform,
``overconfident`` sharpens the truth with temperature 0.6.

    python demos/make_demo_data.py
"""

from pathlib import Path

from propscore.simulator import DirichletFamily, Perturbation, simulate_dataset

OUT = Path(__file__).resolve().parents[1] / "src" / "propscore" / "data" / "demo_two_models.jsonl"

ds, _ = simulate_dataset(
    DirichletFamily((2.0, 2.0, 2.0)),
    {"calibrated": Perturbation.uniform_mixture(0.05), "overconfident": Perturbation.temperature(0.6)},
    n=1000,
    seed=7,
    labels=["rain", "cloud", "sun"],
)
OUT.write_text(ds.to_jsonl(), encoding="utf-8")
print(f"wrote {ds.n} observations to {OUT}")
