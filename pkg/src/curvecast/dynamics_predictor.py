"""Meta-learned curve predictor: {meta-features, first K points} -> law parameters.

Two-step pipeline:

1. fit the four-term law to every full training curve (``fit_theta_targets``)
   and rank the input dimensions with one CART tree per parameter
   (``select_meta_features``);
2. train an MLP whose 4 outputs are the law parameters, minimising the mean
   absolute error between the implied curve and the observed query points.
   Gradients flow through the law: d a(t) / d theta = [ln t, sqrt t, 1, 1/t].
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._seeding import rng_for
from .cart import RegressionTree
from .curve_models import CurveParams, curve_points, extrapolate, fit_law, law_basis
from .dataset_io import TASKS, ValidationCurve
from .metafeatures import INPUT_DIM, INPUT_NAMES, LAYOUT_VERSION, MetaFeatureVector, assemble_input

HIDDEN = (64, 64, 64)
N_THETA = 4
IMPORTANCE_THRESHOLD = 0.005
OVD_HORIZON = 200
EARLY_STOP_MARGIN = 1e-4


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveRecord:
    dataset_id: str
    inputs: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    task: str
    metric: str = "accuracy"


@dataclass(frozen=True)
class TrainingCorpus:
    records: tuple[CurveRecord, ...]
    train_ids: frozenset[str]
    k: int = 5

    def __post_init__(self) -> None:
        ids = {r.dataset_id for r in self.records}
        if not self.train_ids <= ids:
            raise ValueError("train split names unknown dataset IDs")

    @property
    def train(self) -> list[CurveRecord]:
        return [r for r in self.records if r.dataset_id in self.train_ids]

    @property
    def test(self) -> list[CurveRecord]:
        return [r for r in self.records if r.dataset_id not in self.train_ids]


def split_ids(ids: Iterable[str], train_fraction: float = 0.8, seed: int = 0) -> frozenset[str]:
    """Seeded split of distinct dataset IDs; returns the training IDs."""
    unique = sorted(set(ids))
    order = rng_for(seed, "corpus-split").permutation(len(unique))
    n_train = int(round(train_fraction * len(unique)))
    return frozenset(unique[i] for i in order[:n_train])


def build_corpus(
    curves: Sequence[ValidationCurve],
    meta: Mapping[str, MetaFeatureVector],
    k: int = 5,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> TrainingCorpus:
    """Pair each curve with its dataset's meta-features and split 80/20 by dataset ID."""
    records = []
    for c in curves:
        if c.dataset_id not in meta:
            raise KeyError(f"no meta-features for dataset {c.dataset_id!r}")
        if len(c) <= k:
            raise ValueError(f"curve {c.dataset_id!r} has no query points for k={k}")
        x = assemble_input(meta[c.dataset_id], c.values[:k])
        records.append(CurveRecord(c.dataset_id, x, np.asarray(c.values), c.task, c.metric))
    train_ids = split_ids((r.dataset_id for r in records), train_fraction, seed)
    return TrainingCorpus(tuple(records), train_ids, k)


# ---------------------------------------------------------------------------
# step 1: law targets and feature importance
# ---------------------------------------------------------------------------


def curve_keys(curves: Sequence) -> list[str]:
    """``dataset_id`` per curve, suffixed ``#n`` for repeated IDs."""
    seen: dict[str, int] = {}
    keys = []
    for c in curves:
        n = seen.get(c.dataset_id, 0)
        seen[c.dataset_id] = n + 1
        keys.append(c.dataset_id if n == 0 else f"{c.dataset_id}#{n}")
    return keys


def fit_theta_targets(curves: Sequence) -> dict[str, CurveParams]:
    out = {}
    for key, c in zip(curve_keys(curves), curves):
        if len(c.values) < 4:
            raise ValueError(f"curve {key!r} has {len(c.values)} points; the law needs 4")
        out[key] = fit_law(curve_points(c.values)).params
    return out


@dataclass(frozen=True)
class FeatureImportanceReport:
    names: tuple[str, ...]
    importances: np.ndarray
    selected: np.ndarray
    threshold: float = IMPORTANCE_THRESHOLD

    def as_dict(self) -> dict:
        return {n: {"importance": float(v), "selected": bool(s)}
                for n, v, s in zip(self.names, self.importances, self.selected)}

    def ranked(self) -> list[tuple[str, float]]:
        order = np.argsort(-self.importances, kind="stable")
        return [(self.names[i], float(self.importances[i])) for i in order]


def select_meta_features(
    inputs,
    targets,
    names: Sequence[str] = INPUT_NAMES,
    max_depth: int = 8,
    min_samples_leaf: int = 5,
    threshold: float = IMPORTANCE_THRESHOLD,
) -> FeatureImportanceReport:
    """Average CART importances over one tree per law parameter.

    ``targets`` holds one row of law parameters per input row (CurveParams
    are accepted). Trees without any split contribute nothing; when no tree
    splits, every importance is zero and nothing is selected.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.array([t.as_array() if isinstance(t, CurveParams) else t for t in targets], dtype=float)
    if len(X) < 20:
        raise ValueError(f"feature selection needs at least 20 records, got {len(X)}")
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(names) != X.shape[1]:
        raise ValueError("one name per input dimension required")
    per_tree = []
    for j in range(Y.shape[1]):
        tree = RegressionTree(max_depth, min_samples_leaf).fit(X, Y[:, j])
        imp = tree.feature_importances_
        if imp.sum() > 0:
            per_tree.append(imp)
    importances = np.mean(per_tree, axis=0) if per_tree else np.zeros(X.shape[1])
    return FeatureImportanceReport(tuple(names), importances, importances > threshold, threshold)


# ---------------------------------------------------------------------------
# the predictor network
# ---------------------------------------------------------------------------


@dataclass
class PredictorModel:
    """ReLU MLP ``24 -> 64 -> 64 -> 64 -> 4`` with frozen input/output scaling.

    ``theta = theta_mean + theta_scale * net((x - input_mean) / input_sd * feature_mask)``
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_sd: np.ndarray
    theta_mean: np.ndarray
    theta_scale: np.ndarray
    feature_mask: np.ndarray
    layout_version: str = LAYOUT_VERSION
    importance: dict | None = None
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        sizes = self.layer_sizes
        if sizes[0] != INPUT_DIM or sizes[-1] != N_THETA:
            raise ValueError(f"layer sizes {sizes} must start at {INPUT_DIM} and end at {N_THETA}")
        if np.any(self.input_sd <= 0):
            raise ValueError("normalisation sd entries must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def normalize(self, X) -> np.ndarray:
        return (np.atleast_2d(X) - self.input_mean) / self.input_sd * self.feature_mask

    def forward(self, X) -> tuple[np.ndarray, list[np.ndarray]]:
        """Return law parameters and the per-layer activations (input first)."""
        h = self.normalize(X)
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return self.theta_mean + self.theta_scale * h, acts

    def theta(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def to_dict(self) -> dict:
        return {
            "layout_version": self.layout_version,
            "layer_sizes": self.layer_sizes,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "input_mean": self.input_mean.tolist(),
            "input_sd": self.input_sd.tolist(),
            "theta_mean": self.theta_mean.tolist(),
            "theta_scale": self.theta_scale.tolist(),
            "feature_mask": self.feature_mask.tolist(),
            "importance": self.importance,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PredictorModel":
        arr = np.asarray
        return cls(
            weights=[arr(W, dtype=float) for W in doc["weights"]],
            biases=[arr(b, dtype=float) for b in doc["biases"]],
            input_mean=arr(doc["input_mean"], dtype=float),
            input_sd=arr(doc["input_sd"], dtype=float),
            theta_mean=arr(doc["theta_mean"], dtype=float),
            theta_scale=arr(doc["theta_scale"], dtype=float),
            feature_mask=arr(doc["feature_mask"], dtype=float),
            layout_version=doc["layout_version"],
            importance=doc.get("importance"),
            history=list(doc.get("history", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_model(
    seed: int,
    input_mean=None,
    input_sd=None,
    theta_mean=None,
    theta_scale=None,
    feature_mask=None,
    hidden: Sequence[int] = HIDDEN,
) -> PredictorModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = rng_for(seed, "mlp-init")
    sizes = [INPUT_DIM, *hidden, N_THETA]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    def vec(v, default):
        return np.full(default[0], default[1]) if v is None else np.asarray(v, dtype=float)

    return PredictorModel(
        weights, biases,
        input_mean=vec(input_mean, (INPUT_DIM, 0.0)),
        input_sd=vec(input_sd, (INPUT_DIM, 1.0)),
        theta_mean=vec(theta_mean, (N_THETA, 0.0)),
        theta_scale=vec(theta_scale, (N_THETA, 1.0)),
        feature_mask=vec(feature_mask, (INPUT_DIM, 1.0)),
    )


@dataclass(frozen=True)
class QueryBatch:
    """Padded query epochs for a batch: basis (B, T, 4), targets and weights (B, T).

    Each record's weights sum to one over its query points (zero on padding).
    """

    inputs: np.ndarray
    basis: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def take(self, idx) -> "QueryBatch":
        return QueryBatch(self.inputs[idx], self.basis[idx], self.targets[idx], self.weights[idx])


def make_batch(records: Sequence[CurveRecord], k: int = 5, query_only: bool = True) -> QueryBatch:
    start = k if query_only else 0
    lengths = [len(r.values) - start for r in records]
    T = max(lengths)
    B = len(records)
    basis = np.zeros((B, T, N_THETA))
    targets = np.zeros((B, T))
    weights = np.zeros((B, T))
    for i, (r, n) in enumerate(zip(records, lengths)):
        t = np.arange(start + 1, start + n + 1)
        basis[i, :n] = law_basis(t)
        targets[i, :n] = r.values[start:]
        weights[i, :n] = 1.0 / n
    return QueryBatch(np.array([r.inputs for r in records]), basis, targets, weights)


def curve_loss(model: PredictorModel, batch: QueryBatch) -> float:
    """Mean over records of the per-record query MAE."""
    theta, _ = model.forward(batch.inputs)
    pred = np.einsum("btk,bk->bt", batch.basis, theta)
    return float((batch.weights * np.abs(pred - batch.targets)).sum() / len(theta))


def loss_and_grads(model: PredictorModel, batch: QueryBatch):
    """Loss and its gradients w.r.t. every weight matrix and bias vector."""
    theta, acts = model.forward(batch.inputs)
    B = len(theta)
    pred = np.einsum("btk,bk->bt", batch.basis, theta)
    resid = pred - batch.targets
    loss = float((batch.weights * np.abs(resid)).sum() / B)
    # d loss / d theta, then through the fixed output affine map
    g = np.einsum("bt,btk->bk", batch.weights * np.sign(resid), batch.basis) / B
    g = g * model.theta_scale
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ model.weights[i].T) * (acts[i] > 0)
    return loss, gW, gb


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-2
    epochs: int = 500
    batch: int = 32
    seed: int = 0
    momentum: float = 0.9
    select_features: bool = True


def _input_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    return mean, np.where(sd > 0, sd, 1.0)


def train_predictor(corpus: TrainingCorpus, config: TrainConfig | None = None) -> PredictorModel:
    """Run the two-step pipeline on the corpus' training split.

    Unselected meta-feature dimensions (importance <= 0.005) are masked to
    zero after normalisation; the 5 support dimensions are always kept.
    ``model.history`` holds the full-training-set loss before training and
    after every epoch.
    """
    config = config or TrainConfig()
    train = corpus.train
    if not train:
        raise TrainingError("empty training split")
    X = np.array([r.inputs for r in train])
    mean, sd = _input_stats(X)

    targets = np.array([p.as_array() for p in fit_theta_targets(train).values()])
    theta_mean = targets.mean(axis=0)
    theta_scale = targets.std(axis=0)
    theta_scale = np.where(theta_scale > 0, theta_scale, 1.0)

    mask = np.ones(INPUT_DIM)
    importance = None
    if config.select_features and len(train) >= 20:
        report = select_meta_features(X, targets)
        importance = report.as_dict()
        mask[corpus.k:] = report.selected[corpus.k:]

    model = init_model(config.seed, mean, sd, theta_mean, theta_scale, mask)
    model.importance = importance
    full = make_batch(train, corpus.k)
    model.history.append(curve_loss(model, full))

    rng = rng_for(config.seed, "mlp-shuffle")
    vel_W = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        for bi, start in enumerate(range(0, len(order), config.batch)):
            batch = full.take(order[start:start + config.batch])
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gW, gb = loss_and_grads(model, batch)
                for i in range(len(model.weights)):
                    vel_W[i] = config.momentum * vel_W[i] + gW[i]
                    vel_b[i] = config.momentum * vel_b[i] + gb[i]
                    model.weights[i] -= config.lr * vel_W[i]
                    model.biases[i] -= config.lr * vel_b[i]
            if not (np.isfinite(loss) and all(np.isfinite(W).all() for W in model.weights)):
                raise TrainingError(f"non-finite loss or weights (lr={config.lr}, "
                                    f"epoch={epoch}, batch index={bi})")
        with np.errstate(over="ignore", invalid="ignore"):
            epoch_loss = curve_loss(model, full)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss (lr={config.lr}, epoch={epoch})")
        model.history.append(epoch_loss)
    return model


# ---------------------------------------------------------------------------
# inference and evaluation
# ---------------------------------------------------------------------------


def predict_curve(model: PredictorModel, inputs, horizon: int,
                  layout_version: str = LAYOUT_VERSION) -> tuple[CurveParams, np.ndarray]:
    if layout_version != model.layout_version:
        raise ValueError(f"input layout {layout_version!r} does not match model "
                         f"layout {model.layout_version!r}")
    x = np.asarray(inputs, dtype=float)
    if x.shape != (INPUT_DIM,):
        raise ValueError(f"expected a {INPUT_DIM}-dim input, got shape {x.shape}")
    theta = CurveParams.from_array(model.theta(x)[0])
    return theta, extrapolate(theta, horizon)


def _is_classification(task: str) -> bool:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    return task != "regression"


def evaluate(predicted, truth, task: str) -> dict[str, float]:
    """MAE over the overlapping epochs and optimal-value difference.

    The predicted optimum is taken over ``t <= 200``, the true optimum over
    every observed epoch; max for classification, min for regression.
    """
    pred = np.asarray(predicted, dtype=float)
    true = np.asarray(truth.values if isinstance(truth, ValidationCurve) else truth, dtype=float)
    n = min(len(pred), len(true))
    if n == 0:
        raise ValueError("predicted and true curves do not overlap")
    mae = float(np.mean(np.abs(pred[:n] - true[:n])))
    head = pred[:OVD_HORIZON]
    if _is_classification(task):
        ovd = abs(float(head.max()) - float(true.max()))
    else:
        ovd = abs(float(head.min()) - float(true.min()))
    return {"mae": mae, "ovd": ovd}


def advise_early_stop(model: PredictorModel, inputs, best_so_far: float, patience_horizon: int,
                      task: str, margin: float = EARLY_STOP_MARGIN) -> str:
    """``"continue"`` iff the predicted optimum within ``t <= patience_horizon``
    improves on ``best_so_far`` by at least ``margin``; otherwise ``"stop"``."""
    _, values = predict_curve(model, inputs, patience_horizon)
    if _is_classification(task):
        gain = float(values.max()) - best_so_far
    else:
        gain = best_so_far - float(values.min())
    return "continue" if gain >= margin else "stop"


def compare_with_support_fit(model: PredictorModel, records: Sequence[CurveRecord], k: int = 5,
                             horizon: int = OVD_HORIZON) -> dict[str, dict[str, float]]:
    """Mean MAE/OVD of the trained predictor vs. the law fitted to the K support points."""
    scores = {"mlp": [], "support_fit": []}
    for r in records:
        _, mlp_curve = predict_curve(model, r.inputs, horizon)
        fit = fit_law(curve_points(r.values[:k])).params
        scores["mlp"].append(evaluate(mlp_curve, r.values, r.task))
        scores["support_fit"].append(evaluate(extrapolate(fit, horizon), r.values, r.task))
    return {name: {m: float(np.mean([s[m] for s in rows])) for m in ("mae", "ovd")}
            for name, rows in scores.items()}


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
