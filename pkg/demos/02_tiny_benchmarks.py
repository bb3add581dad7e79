"""Distilling a large results table into small, representative benchmarks.

Run with ``python3 demos/02_tiny_benchmarks.py``.
"""

from __future__ import annotations

import numpy as np

from curvecast.benchmark_distill import (
    distill, group_and_pick, pairwise_significance, rank, rank_mae, tree_dnn_score,
)
from curvecast.dataset_io import ResultsTable

rng = np.random.default_rng(1)

# %% A made-up benchmark: 120 datasets, 8 methods, 15 seeds per cell.
methods = ("XGBoost", "CatBoost", "RandomForest", "MLP", "ResNet", "FTT", "kNN", "Linear")
skill = np.array([0.84, 0.85, 0.82, 0.81, 0.83, 0.84, 0.76, 0.74])
n = 120
difficulty = rng.normal(0, 0.05, size=(n, 1))
preference = rng.normal(0, 0.02, size=(n, 1)) * np.array([1, 1, 1, -1, -1, -1, 0, 0])
seeds = (skill + difficulty + preference)[:, :, None] + rng.normal(0, 0.01, (n, 8, 15))
datasets = tuple(f"ds{i:03d}" for i in range(n))
table = ResultsTable(methods, datasets, seeds.mean(axis=2), [True] * n, seeds)

full = rank(table)
print("average ranks:", {m: round(float(r), 2) for m, r in zip(methods, full.average())})

# %% Rank-consistent subsets of 15% of the datasets.
for strategy in ("greedy", "random", "kmeans"):
    sel = distill(table, strategy, eta=0.15, trials=5000, seed=0)
    print(f"{strategy:>7}: {len(sel.chosen)} datasets, rank-MAE {sel.rank_mae:.4f}")

random_pick = list(rng.choice(datasets, size=18, replace=False))
print(f"uniform pick: rank-MAE {rank_mae(full, random_pick):.4f}")

# %% Tree-vs-DNN friendliness and a diverse pick per size group.
scores = tree_dnn_score(table, methods[:3], methods[3:6], tau=0.05)
labels = [s.label for s in scores]
print({lab: labels.count(lab) for lab in ("TF", "DF", "Tie")})

tasks = {d: ("binclass" if i < 60 else "regression") for i, d in enumerate(datasets)}
sizes = {d: float(rng.integers(10**3, 10**6)) for d in datasets}
picks = group_and_pick(scores, sizes, tasks, groups={"binclass": 3, "regression": 3})
print(f"picked {len(picks.chosen)}:", picks.roles)

# %% How often is CatBoost significantly better than each opponent?
for opponent, r in pairwise_significance(table, "CatBoost").items():
    print(f"CatBoost vs {opponent:<12} win {r['win']:.2f}  tie {r['tie']:.2f}  "
          f"lose {r['lose']:.2f}")
