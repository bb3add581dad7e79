from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvecast.dataset_io import Column, DatasetSummary
from curvecast.metafeatures import (
    FIELDS, INPUT_DIM, LAYOUT_VERSION, PREDICTOR_LAYOUT, MetaFeatureVector, assemble_input,
    concentration, entropy, equal_frequency_bins, extract, gravity, iqr, load_meta,
)
from mf_oracle import oracle


def summary(columns, label, task="binclass", kinds=None, did="fx"):
    kinds = kinds or ["numerical"] * len(columns)
    cols = tuple(Column(f"a{j}", k, np.asarray(c, dtype=float))
                 for j, (c, k) in enumerate(zip(columns, kinds)))
    n_classes = None if task == "regression" else len(set(label))
    return DatasetSummary(did, task, len(label), len(cols), n_classes, cols,
                          np.asarray(label, dtype=float))


# ten hand-sized fixtures (at most five rows each)
FIXTURES = [
    ([[1, 2, 3, 4], [5, 3, 3, 8]], [0, 1, 0, 1], "binclass", None),
    ([[1, 2, 3, 4, 10]], [0, 0, 0, 1, 1], "binclass", None),
    ([[0, 1, 0, 2, 1], [2.5, -1, 3, 3, 0]], [0, 1, 2, 2, 1], "multiclass",
     ["categorical", "numerical"]),
    ([[7, 7, 7, 7], [1, 2, 1, 2]], [1, 0, 0, 1], "binclass", None),
    ([[0.1, 0.4, 0.2], [3, 1, 2], [9, 9, 1]], [0, 1, 1], "binclass", None),
    ([[1, 5, 2, 8, 3]], [0.5, 1.5, 2.5, 3.5, 9.0], "regression", None),
    ([[2, 4, 6, 8], [1, 0, 1, 0]], [1.0, 1.0, 2.0, 2.0], "regression",
     ["numerical", "categorical"]),
    ([[1, 2, 3, 4, 100], [-3, -2, -1, 0, 1], [5, 5, 6, 6, 6]], [0, 1, 1, 1, 0], "binclass", None),
    ([[0, 0, 1, 1], [0, 1, 0, 1]], [0, 0, 1, 1], "binclass", ["categorical", "categorical"]),
    ([[3.5, 1.25, 2.0, 8.0, 1.25]], [0, 1, 2, 0, 1], "multiclass", None),
]


@pytest.mark.parametrize("idx", range(len(FIXTURES)))
def test_every_feature_matches_oracle(idx):
    cols, label, task, kinds = FIXTURES[idx]
    kinds = kinds or ["numerical"] * len(cols)
    got = extract(summary(cols, label, task, kinds)).values
    want = oracle([list(map(float, c)) for c in cols], kinds, label, task)
    assert set(want) == set(FIELDS)
    for name in FIELDS:
        assert got[name] == pytest.approx(want[name], abs=1e-9), name


def test_ratio_and_quartiles():
    mfv = extract(summary([[1, 2, 3, 4], [0, 1, 0, 1]], [0, 1, 0, 1]))
    assert mfv["inst_to_attr"] == 2.0
    assert iqr(np.array([1.0, 2, 3, 4])) == 1.5
    mfv = extract(summary([[1, 2, 3, 4]], [0, 1, 0, 1]))
    assert mfv["range.mean"] == 3.0
    assert mfv["iq_range.mean"] == 1.5


def test_identical_class_centres_give_zero_gravity():
    X = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0], [3.0, 0.0]])
    y = np.array([0, 1, 0, 1])
    assert gravity(X, y) == 0.0


def test_balanced_classes_have_nonzero_gravity():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    assert gravity(X, np.array([0, 0, 1, 1])) == pytest.approx(2.0)


def test_degenerate_regression_label():
    mfv = extract(summary([[1, 2, 3, 4]], [2.0, 2.0, 2.0, 2.0], "regression"))
    assert mfv["gravity"] == 0.0
    assert mfv["mut_inf.mean"] == 0.0
    assert mfv["imbalance_ratio"] == 1.0
    assert mfv["ns_ratio"] == 0.0


def test_zero_variance_attribute():
    mfv = extract(summary([[5, 5, 5, 5]], [0, 1, 0, 1]))
    assert mfv["sparsity.mean"] == 0.25
    assert mfv["mean.sd"] == 0.0 and mfv["range.mean"] == 0.0


def test_concentration_bounds():
    a = np.array([0, 0, 1, 1])
    assert concentration(a, a) == pytest.approx(1.0)
    assert concentration(np.array([0, 1, 0, 1]), np.array([0, 0, 1, 1])) == pytest.approx(0.0)


def test_bins_are_equal_frequency():
    codes = equal_frequency_bins(np.arange(100.0))
    assert np.all(np.bincount(codes) == 10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=2, max_size=40))
def test_bins_invariant_under_increasing_maps(xs):
    # integer inputs keep the transformed values distinct in floating point
    x = np.array(xs, dtype=float)
    base = equal_frequency_bins(x)
    np.testing.assert_array_equal(base, equal_frequency_bins(np.exp(x / 10)))
    np.testing.assert_array_equal(base, equal_frequency_bins(x**3 * 2.5 - 4))


def _random_summary(rng, n=40, d=4, task="binclass"):
    cols = [rng.normal(size=n) * (j + 1) for j in range(d)]
    label = rng.permutation(np.arange(n) % 2) if task == "binclass" else rng.normal(size=n)
    return cols, label


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50.0))
def test_scaling_one_attribute(seed, c):
    rng = np.random.default_rng(seed)
    cols, label = _random_summary(rng)
    base = extract(summary(cols, label)).values
    scaled = [cols[0] * c] + cols[1:]
    new = extract(summary(scaled, label)).values
    for name in ("nr_inst", "nr_attr", "inst_to_attr", "attr_ent.mean", "attr_ent.sd",
                 "joint_ent.mean", "mut_inf.mean", "class_conc.mean", "gravity"):
        assert new[name] == pytest.approx(base[name], rel=1e-9, abs=1e-12), name
    # the scaled attribute's own contribution changes by c
    from curvecast.metafeatures import iqr as _iqr
    assert _iqr(scaled[0]) == pytest.approx(c * _iqr(cols[0]), rel=1e-9)
    d = len(cols)
    assert new["range.mean"] * d - base["range.mean"] * d == pytest.approx(
        (c - 1) * np.ptp(cols[0]), rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["binclass", "regression"]))
def test_permutation_invariance(seed, task):
    rng = np.random.default_rng(seed)
    cols, label = _random_summary(rng, task=task)
    base = extract(summary(cols, label, task)).values
    rows = rng.permutation(len(label))
    order = rng.permutation(len(cols))
    moved = extract(summary([cols[j][rows] for j in order], label[rows], task)).values
    for name in FIELDS:
        assert moved[name] == pytest.approx(base[name], rel=1e-9, abs=1e-12), name


def test_assemble_input_layout():
    mfv = extract(summary(*FIXTURES[0][:3]))
    x = assemble_input(mfv, [0.1, 0.2, 0.3, 0.4, 0.5])
    assert x.shape == (INPUT_DIM,) == (24,)
    np.testing.assert_array_equal(x[:5], [0.1, 0.2, 0.3, 0.4, 0.5])
    assert len(PREDICTOR_LAYOUT) == 19
    assert x[5 + PREDICTOR_LAYOUT.index("nr_inst")] == np.log10(mfv["nr_inst"])
    assert x[5 + PREDICTOR_LAYOUT.index("gravity")] == mfv["gravity"]


def test_assemble_input_is_deterministic():
    a = assemble_input(extract(summary(*FIXTURES[2][:3], kinds=FIXTURES[2][3])), [0.5] * 5)
    b = assemble_input(extract(summary(*FIXTURES[2][:3], kinds=FIXTURES[2][3])), [0.5] * 5)
    assert a.tobytes() == b.tobytes()


def test_assemble_input_rejects_bad_support():
    mfv = extract(summary(*FIXTURES[0][:3]))
    with pytest.raises(ValueError):
        assemble_input(mfv, [0.1, 0.2, 0.3])


def test_layout_version_guard():
    mfv = extract(summary(*FIXTURES[0][:3]))
    old = MetaFeatureVector(mfv.values, mfv.dataset_id, "mf24-v0")
    with pytest.raises(ValueError, match="layout"):
        assemble_input(old, [0.1] * 5)


def test_entropies_nonnegative_and_finite(rng):
    for _ in range(20):
        cols, label = _random_summary(rng, n=int(rng.integers(3, 30)))
        v = extract(summary(cols, label)).values
        assert all(np.isfinite(list(v.values())))
        assert v["attr_ent.mean"] >= 0 and v["joint_ent.mean"] >= 0
        assert 0 < v["imbalance_ratio"] <= 1
    assert entropy(np.zeros(5)) == 0.0


def test_json_round_trip(tmp_path):
    mfv = extract(summary(*FIXTURES[4][:3], did="abc"))
    (tmp_path / "one.json").write_text(json.dumps(mfv.to_dict()))
    back = load_meta(tmp_path / "one.json")["abc"]
    assert back.values == mfv.values and back.layout_version == LAYOUT_VERSION
    (tmp_path / "dir").mkdir()
    (tmp_path / "dir" / "a.json").write_text(json.dumps(mfv.to_dict()))
    assert list(load_meta(tmp_path / "dir")) == ["abc"]
