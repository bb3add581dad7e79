"""Seeded synthetic corpora: meta-feature vectors, planted law parameters, curves.

Every meta-feature is drawn uniformly from a fixed range (``nr_inst`` and
``nr_attr`` log-uniformly). Law parameters are a fixed linear map of four of
them::

    A = 0.01    + 0.06   * class_conc.mean        class_conc.mean in [0, 0.5]
    B = -0.0025 - 0.0003 * (range.mean - 1)       range.mean      in [1, 11]
    C = 0.5     + 0.1    * attr_ent.mean          attr_ent.mean   in [0, ln 10]
    D = -0.05   - 0.1    * gravity                gravity         in [0, 3]

which keeps noiseless accuracy curves inside [0.14, 0.91] for t <= 200.
Regression corpora report ``1 - accuracy`` as normalized RMSE, i.e. the
negated law with ``C`` replaced by ``1 - C``. Noisy values are clipped to the
metric's domain; noiseless curves never need clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .curve_models import CurveParams, extrapolate
from .dataset_io import ValidationCurve
from .metafeatures import FIELDS, MetaFeatureVector

RANGES = {
    "nr_outliers": (0.0, 1.0),  # fraction of nr_attr, rounded
    "gravity": (0.0, 3.0),
    "imbalance_ratio": (0.05, 1.0),
    "ns_ratio": (0.0, 20.0),
    "class_conc.mean": (0.0, 0.5), "class_conc.sd": (0.0, 0.2),
    "mean.mean": (-1.0, 50.0), "mean.sd": (0.0, 30.0),
    "range.mean": (1.0, 11.0), "range.sd": (0.0, 5.0),
    "iq_range.mean": (0.1, 5.0), "iq_range.sd": (0.0, 3.0),
    "sparsity.mean": (0.0, 1.0), "sparsity.sd": (0.0, 0.4),
    "joint_ent.mean": (0.5, 3.0), "joint_ent.sd": (0.0, 0.6),
    "attr_ent.mean": (0.0, math.log(10)), "attr_ent.sd": (0.0, 0.6),
    "cov.mean": (0.0, 2.0), "cov.sd": (0.0, 1.0),
    "max.mean": (1.0, 100.0), "max.sd": (0.0, 40.0),
    "mut_inf.mean": (0.0, 0.5), "mut_inf.sd": (0.0, 0.2),
}


@dataclass(frozen=True)
class SynthConfig:
    n_curves: int = 100
    horizon: int = 200
    noise_sd: float = 0.0
    seed: int = 0
    task: str = "binclass"

    def __post_init__(self) -> None:
        if self.n_curves < 1:
            raise ValueError("n_curves must be >= 1")
        if self.horizon < 6:
            raise ValueError("horizon must be >= 6 so that a query set exists")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be >= 0")
        if self.task not in ("binclass", "multiclass", "regression"):
            raise ValueError(f"unknown task {self.task!r}")


def planted_theta(mfv: MetaFeatureVector, task: str = "binclass") -> CurveParams:
    A = 0.01 + 0.06 * mfv["class_conc.mean"]
    B = -0.0025 - 0.0003 * (mfv["range.mean"] - 1.0)
    C = 0.5 + 0.1 * mfv["attr_ent.mean"]
    D = -0.05 - 0.1 * mfv["gravity"]
    if task == "regression":
        return CurveParams(-A, -B, 1.0 - C, -D)
    return CurveParams(A, B, C, D)


def random_meta(rng: np.random.Generator, dataset_id: str) -> MetaFeatureVector:
    nr_inst = float(round(10 ** rng.uniform(3, 7)))
    nr_attr = float(round(10 ** rng.uniform(0.3, 2.5)))
    values = {"nr_inst": nr_inst, "nr_attr": nr_attr, "inst_to_attr": nr_inst / nr_attr}
    for name in FIELDS:
        if name in values:
            continue
        lo, hi = RANGES[name]
        values[name] = rng.uniform(lo, hi)
    values["nr_outliers"] = float(round(values["nr_outliers"] * nr_attr))
    return MetaFeatureVector(values, dataset_id)


def synth_corpus(config: SynthConfig) -> tuple[list[ValidationCurve], dict[str, MetaFeatureVector],
                                               dict[str, CurveParams]]:
    """Return curves, meta-feature vectors and the planted parameters, keyed by dataset ID."""
    meta_rng = rng_for(config.seed, "synth-meta")
    noise_rng = rng_for(config.seed, "synth-noise")
    metric = "normalized_rmse" if config.task == "regression" else "accuracy"
    width = len(str(config.n_curves - 1))
    curves, metas, thetas = [], {}, {}
    for i in range(config.n_curves):
        did = f"synth-{i:0{width}d}"
        mfv = random_meta(meta_rng, did)
        theta = planted_theta(mfv, config.task)
        values = extrapolate(theta, config.horizon)
        if config.noise_sd > 0:
            values = values + noise_rng.normal(0.0, config.noise_sd, size=config.horizon)
            values = np.clip(values, 0.0, 1.0 if metric == "accuracy" else np.inf)
        curves.append(ValidationCurve(did, config.task, metric, values))
        metas[did] = mfv
        thetas[did] = theta
    return curves, metas, thetas
