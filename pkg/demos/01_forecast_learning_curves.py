"""Forecasting validation curves from five epochs plus dataset meta-features.

Run with ``python3 demos/01_forecast_learning_curves.py``. Everything is
synthetic and seeded, so the numbers printed are reproducible.
"""

from __future__ import annotations

import numpy as np

from curvecast.curve_models import curve_points, extrapolate, fit_baseline, fit_law
from curvecast.dynamics_predictor import (
    TrainConfig, advise_early_stop, build_corpus, compare_with_support_fit, train_predictor,
)
from curvecast.synth import SynthConfig, synth_corpus

# %% A corpus of noisy accuracy curves whose shape depends on meta-features.
curves, metas, thetas = synth_corpus(SynthConfig(n_curves=300, noise_sd=0.01, seed=0))
first = curves[0]
print(f"{len(curves)} curves of {len(first)} epochs; first curve starts at "
      f"{first.values[:3].round(3)} and ends at {first.values[-1]:.3f}")

# %% With all 200 epochs the four-term law fits almost perfectly...
full = fit_law(curve_points(first.values))
print(f"full-curve fit: rmse={full.rmse:.4f}, theta={full.params}")

# ...but five noisy points are not enough to pin it down.
five = fit_law(curve_points(first.values[:5]))
err = np.mean(np.abs(extrapolate(five.params, 200) - first.values))
print(f"5-point fit extrapolates with MAE {err:.3f}")

# The power-law baselines behave similarly when fitted on the same support.
for family in ("M1", "M2", "M3", "M4"):
    fit = fit_baseline(family, curve_points(first.values[:5]), seed=0)
    mae = np.mean(np.abs(extrapolate(fit.params, 200) - first.values))
    print(f"  {family}: support rmse {fit.rmse:.2e}, extrapolation MAE {mae:.3f}")

# %% Meta-learning: map (meta-features, first five values) -> theta with an MLP.
corpus = build_corpus(curves, metas, k=5, seed=0)
model = train_predictor(corpus, TrainConfig(seed=0, epochs=300))
print(f"training loss {model.history[0]:.4f} -> {model.history[-1]:.4f}")

top = sorted(model.importance.items(), key=lambda kv: -kv[1]["importance"])[:4]
print("most informative inputs:", ", ".join(f"{k} ({v['importance']:.2f})" for k, v in top))

scores = compare_with_support_fit(model, corpus.test)
for name, s in scores.items():
    print(f"{name:>12}: MAE {s['mae']:.4f}  OVD {s['ovd']:.4f}")

# %% Using the forecast to decide whether a run is worth continuing.
record = corpus.test[0]
for best in (0.5, float(record.values.max()) + 0.05):
    decision = advise_early_stop(model, record.inputs, best, patience_horizon=100,
                                 task=record.task)
    print(f"best so far {best:.3f}: {decision}")
