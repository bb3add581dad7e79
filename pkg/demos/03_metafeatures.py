"""Meta-features of a small tabular dataset and the 24-dim predictor input.

Run with ``python3 demos/03_metafeatures.py``.
"""

from __future__ import annotations

import csv
import tempfile
from pathlib import Path

import numpy as np

from curvecast.dataset_io import load_dataset
from curvecast.metafeatures import INPUT_NAMES, assemble_input, extract

rng = np.random.default_rng(2)

# %% Write a toy CSV: two numerical columns, one categorical, a binary label.
n = 200
x1 = rng.normal(size=n)
x2 = rng.exponential(size=n)
colour = rng.choice(["red", "green", "blue"], size=n)
y = (x1 + 0.5 * (colour == "red") + rng.normal(0, 0.5, n) > 0.3).astype(int)

path = Path(tempfile.mkdtemp()) / "toy.csv"
with path.open("w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["x1", "x2", "colour", "label"])
    for row in zip(x1, x2, colour, y):
        w.writerow(row)
    w.writerow(["0.1", "", "red", "1"])  # a row with a missing value gets dropped

summary = load_dataset(path, {"x1": "numerical", "x2": "numerical", "colour": "categorical"},
                       "label")
print(f"{summary.n_instances} rows kept, {summary.dropped_rows} dropped, task={summary.task}")

# %% The meta-feature vector.
mfv = extract(summary)
for name in ("nr_inst", "inst_to_attr", "gravity", "class_conc.mean", "attr_ent.mean",
             "mut_inf.mean", "ns_ratio", "imbalance_ratio"):
    print(f"  {name:<16} {mfv[name]:.4f}")

# %% Predictor input: five observed epochs followed by 19 meta-feature slots.
x = assemble_input(mfv, [0.61, 0.66, 0.69, 0.7, 0.72])
for name, value in zip(INPUT_NAMES[:8], x[:8]):
    print(f"  {name:<16} {value:.4f}")
print(f"  ... {len(x)} values in total")
