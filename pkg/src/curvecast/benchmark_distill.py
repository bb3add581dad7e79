"""Rank analytics and tiny-benchmark selection over result tables.

Two kinds of subsets are supported:

* rank-consistent subsets whose average method ranks match the full
  benchmark (greedy, best-of-random and k-means selection);
* Tree/DNN subsets picking, within size groups, the most tree-friendly,
  most DNN-friendly and most neutral datasets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from ._seeding import rng_for
from .dataset_io import ResultsTable

DEFAULT_ETA = 0.15
DEFAULT_TRIALS = 10_000
DEFAULT_TAU = 0.05
DEFAULT_GROUPS = {"binclass": 5, "multiclass": 4, "regression": 6}
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray  # (D, L), rank 1 = best
    methods: tuple[str, ...]
    datasets: tuple[str, ...]

    def __post_init__(self) -> None:
        D, L = len(self.datasets), len(self.methods)
        if self.ranks.shape != (D, L):
            raise ValueError(f"rank array shape {self.ranks.shape} != ({D}, {L})")

    def rows(self, ids: Iterable[str]) -> np.ndarray:
        index = {d: i for i, d in enumerate(self.datasets)}
        try:
            return np.array([index[d] for d in ids], dtype=int)
        except KeyError as exc:
            raise ValueError(f"unknown dataset {exc.args[0]!r}") from None

    def restrict(self, ids: Sequence[str]) -> "RankMatrix":
        return RankMatrix(self.ranks[self.rows(ids)], self.methods, tuple(ids))

    def average(self) -> np.ndarray:
        return self.ranks.mean(axis=0)


@dataclass(frozen=True)
class SubsetSelection:
    strategy: str
    chosen: tuple[str, ...]
    rank_mae: float | None
    eta: float | None = None
    seed: int | None = None
    trials: int | None = None
    roles: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "chosen": list(self.chosen),
            "rank_mae": self.rank_mae,
            "eta": self.eta,
            "seed": self.seed,
            "trials": self.trials,
            "roles": dict(self.roles),
        }


# ---------------------------------------------------------------------------
# ranks
# ---------------------------------------------------------------------------


def rank(results: ResultsTable) -> RankMatrix:
    """Per-dataset ranks (1 = best); tied methods share their average position."""
    oriented = np.where(results.higher_is_better[:, None], -results.values, results.values)
    ranks = stats.rankdata(oriented, method="average", axis=1)
    return RankMatrix(ranks, results.methods, results.datasets)


def _mae_rows(full_avg: np.ndarray, ranks: np.ndarray, rows: np.ndarray) -> float:
    return float(np.mean(np.abs(full_avg - ranks[rows].mean(axis=0))))


def rank_mae(full: RankMatrix, subset_ids: Iterable[str]) -> float:
    """Mean over methods of |average rank on the subset - average rank overall|."""
    ids = list(dict.fromkeys(subset_ids))
    if not ids:
        raise ValueError("subset must be non-empty")
    return _mae_rows(full.average(), full.ranks, full.rows(ids))


def quota_for(n_datasets: int, eta: float) -> int:
    """``round(eta * D)`` with halves rounded up, at least 1."""
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    return max(1, min(n_datasets, int(math.floor(eta * n_datasets + 0.5))))


def _check_quota(full: RankMatrix, quota: int) -> None:
    if not 1 <= quota <= len(full.datasets):
        raise ValueError(f"quota {quota} outside [1, {len(full.datasets)}]")


def _task_groups(full: RankMatrix, tasks: Mapping[str, str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for d in full.datasets:
        if d not in tasks:
            raise ValueError(f"no task type for dataset {d!r}")
        groups.setdefault(tasks[d], []).append(d)
    return groups


def _per_task(select, full: RankMatrix, quotas: Mapping[str, int], tasks: Mapping[str, str],
              strategy: str, **kw) -> SubsetSelection:
    groups = _task_groups(full, tasks)
    chosen: list[str] = []
    for task, q in quotas.items():
        ids = groups.get(task, [])
        if q > len(ids):
            raise ValueError(f"quota {q} exceeds the {len(ids)} {task} datasets")
        if q > 0:
            chosen.extend(select(full.restrict(ids), q, **kw).chosen)
    return SubsetSelection(strategy, tuple(chosen), rank_mae(full, chosen),
                           seed=kw.get("seed"), trials=kw.get("trials"))


# ---------------------------------------------------------------------------
# rank-consistent strategies
# ---------------------------------------------------------------------------


def select_greedy(full: RankMatrix, quota: int, quotas: Mapping[str, int] | None = None,
                  tasks: Mapping[str, str] | None = None) -> SubsetSelection:
    """Repeatedly add the dataset that minimises the subset's rank-MAE.

    With ``quotas`` and ``tasks`` the selection runs separately per task type
    (each against its own task's average ranks) and ``quota`` is ignored.
    """
    if quotas is not None:
        return _per_task(select_greedy, full, quotas, tasks or {}, "greedy")
    _check_quota(full, quota)
    target = full.average()
    R = full.ranks
    chosen: list[int] = []
    total = np.zeros(R.shape[1])
    remaining = np.ones(len(R), dtype=bool)
    for size in range(1, quota + 1):
        cand = np.flatnonzero(remaining)
        means = (total + R[cand]) / size
        scores = np.abs(means - target).mean(axis=1)
        best = cand[int(np.argmin(scores))]  # argmin: first in dataset order on ties
        chosen.append(best)
        total += R[best]
        remaining[best] = False
    ids = tuple(full.datasets[i] for i in chosen)
    return SubsetSelection("greedy", ids, rank_mae(full, ids))


def _random_chunk(R, target, quota, seed, start, stop):
    best_score, best_rows, best_trial = np.inf, None, -1
    for i in range(start, stop):
        rows = rng_for(seed, "random-subset", i).choice(len(R), size=quota, replace=False)
        score = _mae_rows(target, R, rows)
        if score < best_score:
            best_score, best_rows, best_trial = score, rows, i
    return best_score, best_trial, best_rows


def select_random(full: RankMatrix, quota: int, trials: int = DEFAULT_TRIALS, seed: int = 0,
                  quotas: Mapping[str, int] | None = None,
                  tasks: Mapping[str, str] | None = None,
                  workers: int = 1) -> SubsetSelection:
    """Best of ``trials`` uniformly random subsets.

    Trial ``i`` draws from its own stream derived from ``(seed, i)``, so the
    result does not depend on ``workers``. Ties keep the earliest trial.
    """
    if quotas is not None:
        return _per_task(select_random, full, quotas, tasks or {}, "random",
                         trials=trials, seed=seed, workers=workers)
    _check_quota(full, quota)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    R, target = full.ranks, full.average()
    workers = max(1, min(workers, trials))
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    spans = list(zip(bounds[:-1], bounds[1:]))
    if workers == 1:
        parts = [_random_chunk(R, target, quota, seed, *spans[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda s: _random_chunk(R, target, quota, seed, *s), spans))
    _, _, rows = min(parts, key=lambda p: (p[0], p[1]))
    ids = tuple(full.datasets[i] for i in sorted(rows))
    return SubsetSelection("random", ids, rank_mae(full, ids), seed=seed, trials=trials)


def kmeans(X: np.ndarray, k: int, seed: int = 0,
           max_iter: int = KMEANS_MAX_ITER) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments no longer change or after ``max_iter`` rounds. A
    cluster that empties takes the point farthest from its own centre among
    clusters holding more than one point.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    rng = rng_for(seed, "kmeans")
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[c] = X[i]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))

    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        for c in range(k):
            counts = np.bincount(new_labels, minlength=k)
            if counts[c] == 0:
                # take the worst-fitting point from a cluster that can spare one
                own = dist[np.arange(n), new_labels]
                far = int(np.where(counts[new_labels] > 1, own, -1.0).argmax())
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.array([X[labels == c].mean(axis=0) for c in range(k)])
    return centers, labels


def select_kmeans(full: RankMatrix, quota: int, seed: int = 0,
                  quotas: Mapping[str, int] | None = None,
                  tasks: Mapping[str, str] | None = None) -> SubsetSelection:
    """Cluster per-dataset rank vectors into ``quota`` groups; keep the dataset
    nearest each centre (the next nearest unused one if already taken)."""
    if quotas is not None:
        return _per_task(select_kmeans, full, quotas, tasks or {}, "kmeans", seed=seed)
    _check_quota(full, quota)
    R = full.ranks
    centers, _ = kmeans(R, quota, seed)
    taken: list[int] = []
    for c in centers:
        order = np.argsort(((R - c) ** 2).sum(axis=1), kind="stable")
        taken.append(next(int(i) for i in order if i not in taken))
    ids = tuple(full.datasets[i] for i in sorted(taken))
    return SubsetSelection("kmeans", ids, rank_mae(full, ids), seed=seed)


STRATEGIES = {"greedy": select_greedy, "random": select_random, "kmeans": select_kmeans}


def distill(results: ResultsTable, strategy: str, eta: float = DEFAULT_ETA,
            trials: int = DEFAULT_TRIALS, seed: int = 0,
            tasks: Mapping[str, str] | None = None, workers: int = 1) -> SubsetSelection:
    """Select ``round(eta * D)`` datasets (per task type when ``tasks`` is given)."""
    full = rank(results)
    quotas = None
    if tasks is not None:
        groups = _task_groups(full, tasks)
        quotas = {t: quota_for(len(ids), eta) for t, ids in groups.items()}
    quota = quota_for(len(full.datasets), eta)
    if strategy == "greedy":
        sel = select_greedy(full, quota, quotas, tasks)
    elif strategy == "random":
        sel = select_random(full, quota, trials, seed, quotas, tasks, workers)
    elif strategy == "kmeans":
        sel = select_kmeans(full, quota, seed, quotas, tasks)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return SubsetSelection(sel.strategy, sel.chosen, sel.rank_mae, eta, sel.seed, sel.trials)


def leave_group_out(results: ResultsTable, method_groups: Sequence[Sequence[str]],
                    strategy: str, eta: float = DEFAULT_ETA, trials: int = DEFAULT_TRIALS,
                    seed: int = 0, tasks: Mapping[str, str] | None = None) -> list[dict]:
    """Seen/unseen evaluation of a selection strategy.

    For each group, the subset is selected from the ranks of the remaining
    (seen) methods only. Quality is the rank-MAE of the seen and of the
    held-out (unseen) methods, both ranked jointly with all methods.
    """
    all_ranks = rank(results)
    rows = []
    for held_out in method_groups:
        held = set(held_out)
        unknown = held - set(results.methods)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        seen = [m for m in results.methods if m not in held]
        sel = distill(results.subset_methods(seen), strategy, eta, trials, seed, tasks)
        rows.append({
            "unseen": list(held_out),
            "chosen": list(sel.chosen),
            "seen_mae": _columns_mae(all_ranks, sel.chosen, seen),
            "unseen_mae": _columns_mae(all_ranks, sel.chosen, list(held_out)),
        })
    return rows


def _columns_mae(full: RankMatrix, ids: Sequence[str], methods: Sequence[str]) -> float:
    cols = [full.methods.index(m) for m in methods]
    sub = RankMatrix(full.ranks[:, cols], tuple(methods), full.datasets)
    return rank_mae(sub, ids)


# ---------------------------------------------------------------------------
# Tree/DNN tiny benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeDnnScore:
    dataset_id: str
    score: float
    label: str


def label_for(score: float, tau: float = DEFAULT_TAU) -> str:
    if score > tau:
        return "TF"
    if score < -tau:
        return "DF"
    return "Tie"


def tree_dnn_score(results: ResultsTable, tree_methods: Sequence[str], dnn_methods: Sequence[str],
                   tau: float = DEFAULT_TAU) -> list[TreeDnnScore]:
    """Best min-max-normalised tree result minus best normalised DNN result.

    Normalisation runs per dataset over the selected methods only, after
    negating lower-is-better metrics. A dataset where all selected values are
    equal scores 0.
    """
    tree, dnn = list(tree_methods), list(dnn_methods)
    if not tree or not dnn:
        raise ValueError("both method sets must be non-empty")
    if set(tree) & set(dnn):
        raise ValueError("tree and DNN method sets overlap")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    cols = [results.method_index(m) for m in tree + dnn]
    V = results.values[:, cols]
    V = np.where(results.higher_is_better[:, None], V, -V)
    lo, hi = V.min(axis=1, keepdims=True), V.max(axis=1, keepdims=True)
    span = hi - lo
    N = np.where(span > 0, (V - lo) / np.where(span > 0, span, 1.0), 0.5)
    s = N[:, :len(tree)].max(axis=1) - N[:, len(tree):].max(axis=1)
    return [TreeDnnScore(d, float(v), label_for(v, tau)) for d, v in zip(results.datasets, s)]


def _equal_count_groups(items: Sequence[str], n_groups: int) -> list[list[str]]:
    base, extra = divmod(len(items), n_groups)
    out, start = [], 0
    for g in range(n_groups):
        size = base + (1 if g < extra else 0)
        out.append(list(items[start:start + size]))
        start += size
    return out


def group_and_pick(
    scores: Sequence[TreeDnnScore],
    sizes: Mapping[str, float],
    tasks: Mapping[str, str],
    groups: Mapping[str, int] | None = None,
    has_categorical: Mapping[str, bool] | None = None,
) -> SubsetSelection:
    """Pick a TF, DF and Tie dataset from each size group of each task type.

    Datasets of one task type are sorted by size (N x d; dataset order breaks
    ties) and cut into contiguous groups of near-equal count, the remainder
    going to the earliest groups. In each group the highest score is the TF
    pick, the lowest the DF pick and the smallest |score| the Tie pick; a
    dataset is never picked twice and equal keys resolve to dataset order.

    With ``has_categorical``, a pick that would push the gap between
    datasets with and without categorical features above 1 is replaced by the
    second-ranked candidate for that role when the swap keeps the gap <= 1.
    """
    groups = dict(DEFAULT_GROUPS if groups is None else groups)
    order = {s.dataset_id: i for i, s in enumerate(scores)}
    by_id = {s.dataset_id: s for s in scores}
    missing = [d for d in by_id if d not in sizes or d not in tasks]
    if missing:
        raise ValueError(f"no size/task for datasets {missing[:5]}")

    chosen: list[str] = []
    roles: dict[str, str] = {}
    n_cat = 0

    def gap_after(did: str) -> int:
        c = n_cat + int(bool(has_categorical[did]))
        return abs(2 * c - (len(chosen) + 1))

    for task, n_groups in groups.items():
        ids = [s.dataset_id for s in scores if tasks[s.dataset_id] == task]
        ids.sort(key=lambda d: (sizes[d], order[d]))
        if n_groups < 1:
            continue
        for members in _equal_count_groups(ids, n_groups):
            if len(members) < 3:
                raise ValueError(f"a {task} group has {len(members)} datasets; need >= 3")
            keys = {
                "TF": lambda d: (-by_id[d].score, order[d]),
                "DF": lambda d: (by_id[d].score, order[d]),
                "Tie": lambda d: (abs(by_id[d].score), order[d]),
            }
            for role, key in keys.items():
                ranked = [d for d in sorted(members, key=key) if d not in roles]
                pick = ranked[0]
                if has_categorical is not None and gap_after(pick) > 1 and len(ranked) > 1 \
                        and gap_after(ranked[1]) <= 1:
                    pick = ranked[1]
                chosen.append(pick)
                roles[pick] = role
                if has_categorical is not None:
                    n_cat += int(bool(has_categorical[pick]))
    return SubsetSelection("tree_dnn", tuple(chosen), None, roles=roles)


# ---------------------------------------------------------------------------
# pairwise significance
# ---------------------------------------------------------------------------


def welch_outcome(a: np.ndarray, b: np.ndarray, higher_is_better: bool, alpha: float) -> str:
    """``win``/``tie``/``lose`` of sample ``a`` against ``b``."""
    ma, mb = float(np.mean(a)), float(np.mean(b))
    if ma == mb:
        return "tie"
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        p = 0.0
    else:
        p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
    if p > alpha:
        return "tie"
    better = ma > mb if higher_is_better else ma < mb
    return "win" if better else "lose"


def pairwise_significance(results: ResultsTable, anchor: str, alpha: float = 0.05,
                          opponents: Sequence[str] | None = None,
                          workers: int = 1) -> dict[str, dict[str, float]]:
    """Per-opponent win/tie/lose rates of ``anchor`` from per-dataset Welch t-tests."""
    if results.seeds is None:
        raise ValueError("seed-level results are required")
    if results.seeds.shape[2] < 2:
        raise ValueError("at least 2 seeds per cell are required")
    a = results.method_index(anchor)
    opponents = [m for m in (opponents or results.methods) if m != anchor]

    def rates(name: str) -> tuple[str, dict[str, float]]:
        j = results.method_index(name)
        outcomes = [welch_outcome(results.seeds[d, a], results.seeds[d, j],
                                  bool(results.higher_is_better[d]), alpha)
                    for d in range(len(results.datasets))]
        n = len(outcomes)
        return name, {k: outcomes.count(k) / n for k in ("win", "tie", "lose")}

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return dict(pool.map(rates, opponents))
    return dict(map(rates, opponents))
