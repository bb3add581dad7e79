"""Dataset meta-features and the fixed-width predictor input vector.

Conventions used throughout:

* quantiles use linear interpolation between order statistics;
* entropies are Shannon entropies in nats over a 10-bin equal-frequency
  discretization (categorical attributes keep their own codes);
* per-attribute features are summarized by their mean and population sd
  across attributes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset_io import DataError, DatasetSummary

LAYOUT_VERSION = "mf24-v1"
N_BINS = 10
EPS = 1e-12
SUPPORT_SIZE = 5

#: per-attribute features, reported as ``<name>.mean`` and ``<name>.sd``
PER_ATTRIBUTE = (
    "class_conc", "mean", "range", "iq_range", "sparsity",
    "joint_ent", "attr_ent", "cov", "max", "mut_inf",
)
SCALAR = (
    "nr_inst", "nr_attr", "inst_to_attr", "nr_outliers",
    "gravity", "imbalance_ratio", "ns_ratio",
)
FIELDS = SCALAR + tuple(f"{n}.{agg}" for n in PER_ATTRIBUTE for agg in ("mean", "sd"))

#: the 19 meta-feature slots of the predictor input, in frozen order
PREDICTOR_LAYOUT = (
    "class_conc.mean", "inst_to_attr", "mean.mean", "mean.sd",
    "range.mean", "range.sd", "iq_range.mean", "iq_range.sd",
    "nr_attr", "sparsity.mean", "gravity", "joint_ent.mean",
    "attr_ent.mean", "cov.mean", "max.mean", "max.sd",
    "mut_inf.mean", "nr_inst", "ns_ratio",
)
LOG10_SLOTS = frozenset({"nr_inst", "inst_to_attr"})
INPUT_NAMES = tuple(f"support_{i + 1}" for i in range(SUPPORT_SIZE)) + PREDICTOR_LAYOUT
INPUT_DIM = len(INPUT_NAMES)


@dataclass(frozen=True)
class MetaFeatureVector:
    """Named meta-feature values in :data:`FIELDS` order."""

    values: Mapping[str, float]
    dataset_id: str = ""
    layout_version: str = LAYOUT_VERSION

    def __post_init__(self) -> None:
        missing = [f for f in FIELDS if f not in self.values]
        if missing:
            raise ValueError(f"meta-feature vector lacks {missing}")
        ordered = {f: float(self.values[f]) for f in FIELDS}
        bad = [f for f, v in ordered.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite meta-features: {bad}")
        object.__setattr__(self, "values", ordered)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def predictor_slice(self) -> np.ndarray:
        out = np.empty(len(PREDICTOR_LAYOUT))
        for i, name in enumerate(PREDICTOR_LAYOUT):
            v = self.values[name]
            out[i] = np.log10(v) if name in LOG10_SLOTS else v
        return out

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "layout_version": self.layout_version,
            "features": dict(self.values),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MetaFeatureVector":
        return cls(doc["features"], doc.get("dataset_id", ""),
                   doc.get("layout_version", LAYOUT_VERSION))


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def equal_frequency_bins(x: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Bin index ``floor(n_bins * r / n)`` where ``r`` counts values strictly below.

    Tied values share a bin and the coding depends only on the ordering of
    ``x``, so any strictly increasing transform leaves it unchanged.
    """
    x = np.asarray(x, dtype=float)
    below = np.searchsorted(np.sort(x), x, side="left")
    return np.minimum(n_bins * below // len(x), n_bins - 1)


def entropy(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def joint_entropy(a: np.ndarray, b: np.ndarray) -> float:
    _, counts = np.unique(np.column_stack([a, b]), axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def concentration(a: np.ndarray, b: np.ndarray) -> float:
    """Concentration coefficient (Goodman-Kruskal tau) of ``a`` towards ``b``.

    ``(sum_ij p_ij^2 / p_i. - sum_j p_.j^2) / (1 - sum_j p_.j^2)``; zero when
    ``b`` takes a single value.
    """
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia.ravel(), ib.ravel()), 1.0)
    p = table / table.sum()
    row = p.sum(axis=1)
    col_sq = (p.sum(axis=0) ** 2).sum()
    denom = 1.0 - col_sq
    if denom <= EPS:
        return 0.0
    return float(((p**2).sum(axis=1) / row).sum() - col_sq) / denom


def iqr(x: np.ndarray) -> float:
    q1, q3 = np.quantile(x, [0.25, 0.75])
    return float(q3 - q1)


def _mean_sd(v: np.ndarray) -> tuple[float, float]:
    if len(v) == 0:
        return 0.0, 0.0
    return float(np.mean(v)), float(np.std(v))


def target_codes(summary: DatasetSummary) -> np.ndarray:
    """Class codes, or 10-bin equal-frequency codes of a regression label."""
    if summary.task == "regression":
        return equal_frequency_bins(summary.label)
    return np.asarray(summary.label).astype(int)


def attribute_codes(summary: DatasetSummary) -> list[np.ndarray]:
    return [c.values.astype(int) if c.kind == "categorical" else equal_frequency_bins(c.values)
            for c in summary.columns]


def gravity(X: np.ndarray, y: np.ndarray) -> float:
    """Distance between minority- and majority-class centres of z-scored ``X``.

    The majority class is the most frequent one and the minority class the
    least frequent of the others; ties go to the smaller class code, so a
    balanced binary label compares class 0 against class 1.
    """
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or X.shape[1] == 0:
        return 0.0
    sd = X.std(axis=0)
    Z = np.where(sd > 0, (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)
    major = int(np.argmax(counts))
    rest = np.delete(np.arange(len(classes)), major)
    majority = classes[major]
    minority = classes[rest[np.argmin(counts[rest])]]
    return float(np.linalg.norm(Z[y == minority].mean(axis=0) - Z[y == majority].mean(axis=0)))


def abs_covariances(X: np.ndarray) -> np.ndarray:
    """|cov| for every distinct attribute pair (sample covariance, ddof=1)."""
    n, d = X.shape
    if d < 2 or n < 2:
        return np.zeros(0)
    C = np.cov(X, rowvar=False)
    return np.abs(C[np.triu_indices(d, k=1)])


def count_outlier_attributes(X: np.ndarray) -> int:
    q1, q3 = np.quantile(X, [0.25, 0.75], axis=0)
    spread = 1.5 * (q3 - q1)
    outside = (X < q1 - spread) | (X > q3 + spread)
    return int(outside.any(axis=0).sum())


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def extract(summary: DatasetSummary) -> MetaFeatureVector:
    """Compute every meta-feature in :data:`FIELDS` for ``summary``.

    Classification-oriented features (gravity, class_conc, joint_ent,
    mut_inf, imbalance_ratio) use the class codes, or an equal-frequency
    discretization of the label for regression tasks. Degenerate inputs map
    to defined values: single-class labels give gravity 0, mutual
    information 0 and imbalance ratio 1.
    """
    X = summary.matrix
    n, d = X.shape
    y = target_codes(summary)
    codes = attribute_codes(summary)
    h_y = entropy(y)

    per_attr = {
        "mean": X.mean(axis=0),
        "max": X.max(axis=0),
        "range": X.max(axis=0) - X.min(axis=0),
        "iq_range": np.array([iqr(X[:, j]) for j in range(d)]),
        "sparsity": np.array([len(np.unique(X[:, j])) / n for j in range(d)]),
        "attr_ent": np.array([entropy(c) for c in codes]),
        "joint_ent": np.array([joint_entropy(c, y) for c in codes]),
        "class_conc": np.array([concentration(c, y) for c in codes]),
        "cov": abs_covariances(X),
    }
    # mutual information is clipped at 0 against round-off
    per_attr["mut_inf"] = np.maximum(per_attr["attr_ent"] + h_y - per_attr["joint_ent"], 0.0)

    values: dict[str, float] = {
        "nr_inst": float(n),
        "nr_attr": float(d),
        "inst_to_attr": n / d if d else float(n),
        "nr_outliers": float(count_outlier_attributes(X)) if d else 0.0,
    }
    numerical = [j for j, k in enumerate(summary.kinds) if k == "numerical"]
    values["gravity"] = gravity(X[:, numerical], y)
    _, counts = np.unique(y, return_counts=True)
    values["imbalance_ratio"] = float(counts.min() / counts.max())

    for name in PER_ATTRIBUTE:
        m, s = _mean_sd(per_attr[name])
        values[f"{name}.mean"] = m
        values[f"{name}.sd"] = s

    mi = values["mut_inf.mean"]
    values["ns_ratio"] = 0.0 if mi <= EPS else max((values["attr_ent.mean"] - mi) / mi, 0.0)
    return MetaFeatureVector({f: values[f] for f in FIELDS}, summary.id)


def assemble_input(mfv: MetaFeatureVector, support: Sequence[float]) -> np.ndarray:
    """``[support_1..support_5, 19 meta-feature slots]`` as a length-24 vector."""
    support = np.asarray(support, dtype=float)
    if support.shape != (SUPPORT_SIZE,):
        raise ValueError(f"support must hold exactly {SUPPORT_SIZE} values, got {support.shape}")
    if mfv.layout_version != LAYOUT_VERSION:
        raise ValueError(f"layout {mfv.layout_version!r} != {LAYOUT_VERSION!r}")
    return np.concatenate([support, mfv.predictor_slice()])


def load_meta(path) -> dict[str, MetaFeatureVector]:
    """Read meta-feature JSON: one document, a list of them, or a directory of ``*.json``."""
    path = Path(path)
    if path.is_dir():
        docs = []
        for p in sorted(path.glob("*.json")):
            doc = json.loads(p.read_text(encoding="utf-8"))
            docs.extend(doc if isinstance(doc, list) else [doc])
    elif path.is_file():
        doc = json.loads(path.read_text(encoding="utf-8"))
        docs = doc if isinstance(doc, list) else [doc]
    else:
        raise DataError(f"no such file or directory: {path}", path)
    out = {}
    for doc in docs:
        mfv = MetaFeatureVector.from_dict(doc)
        if mfv.dataset_id in out:
            raise ValueError(f"duplicate meta-features for dataset {mfv.dataset_id!r}")
        out[mfv.dataset_id] = mfv
    return out
