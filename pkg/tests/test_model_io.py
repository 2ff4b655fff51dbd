"""Tests for model serialization, digests, and prediction plumbing."""

import numpy as np
import pytest

from waterscreen.errors import SchemaError
from waterscreen.records import FeatureMatrix
from waterscreen.trees import (
    Tree,
    TreeEnsembleModel,
    bin_features,
    fit_forest,
    fit_gbdt,
    fit_logistic,
    forest_preset,
    from_json,
    gbdt_leafwise_preset,
    model_digest,
    predict_proba,
    to_json,
)
from waterscreen.trees.model import sigmoid


def make_matrix(values, names=None):
    values = np.asarray(values, dtype=float)
    if names is None:
        names = [f"x{j}" for j in range(values.shape[1])]
    return FeatureMatrix(
        values=values,
        missing_mask=np.isnan(values),
        columns=[(n, "physicochemical") for n in names],
        row_ids=[f"r{i}" for i in range(values.shape[0])],
    )


def fitted_gbdt(seed=0):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(200, 3))
    values[rng.random(size=(200, 3)) < 0.1] = np.nan
    y = (np.nan_to_num(values[:, 0]) > 0).astype(int)
    matrix = make_matrix(values)
    binned = bin_features(matrix, 32)
    config = gbdt_leafwise_preset(
        iteration_cap=8,
        early_stopping_rounds=0,
        row_subsample=0.8,
        learning_rate=0.3,
        max_bins=32,
        seed=seed,
    )
    return fit_gbdt(binned, y, config), matrix


def constant_tree(value, n=10):
    return Tree(
        feature=np.array([-1], dtype=np.int32),
        split_bin=np.array([-1], dtype=np.int32),
        threshold=np.array([np.nan]),
        missing_left=np.array([False]),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        value=np.array([value], dtype=float),
        cover=np.array([float(n)]),
        count=np.array([n], dtype=np.int64),
        gain=np.array([np.nan]),
    )


class TestRoundTrip:
    def test_gbdt_json_round_trip_is_bitwise(self):
        model, matrix = fitted_gbdt()
        text = to_json(model)
        loaded = from_json(text)
        assert to_json(loaded) == text
        assert model_digest(loaded) == model_digest(model)
        assert np.array_equal(predict_proba(loaded, matrix), predict_proba(model, matrix))

    def test_forest_round_trip(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=(120, 2))
        y = (values[:, 0] > 0).astype(int)
        matrix = make_matrix(values)
        model = fit_forest(matrix, y, forest_preset(iteration_cap=5, seed=2))
        loaded = from_json(to_json(model))
        assert to_json(loaded) == to_json(model)
        assert np.array_equal(predict_proba(loaded, matrix), predict_proba(model, matrix))

    def test_logistic_round_trip(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(150, 2))
        y = (values[:, 0] - values[:, 1] + rng.normal(size=150) > 0).astype(int)
        matrix = make_matrix(values)
        model = fit_logistic(matrix, y, l2=0.8)
        loaded = from_json(to_json(model))
        assert to_json(loaded) == to_json(model)
        assert np.array_equal(predict_proba(loaded, matrix), predict_proba(model, matrix))

    def test_digest_sensitive_to_leaf_values(self):
        model, _ = fitted_gbdt()
        baseline = model_digest(model)
        leaf = int(np.flatnonzero(model.trees[0].feature < 0)[0])
        model.trees[0].value[leaf] += 1e-9
        assert model_digest(model) != baseline


class TestPredictEdgeCases:
    def test_empty_ensemble_predicts_sigmoid_of_base(self):
        matrix = make_matrix(np.zeros((4, 1)))
        model = TreeEnsembleModel(
            family="hist_gbdt",
            trees=[],
            base_score=0.4,
            best_iteration=0,
            bin_edges=[np.empty(0)],
            feature_names=["x0"],
            config=gbdt_leafwise_preset(early_stopping_rounds=0),
        )
        probs = predict_proba(model, matrix)
        assert probs == pytest.approx(np.full(4, float(sigmoid(np.array(0.4)))))

    def test_forest_of_identical_constant_trees(self):
        matrix = make_matrix(np.zeros((6, 1)))
        model = TreeEnsembleModel(
            family="random_forest",
            trees=[constant_tree(0.3), constant_tree(0.3)],
            base_score=0.3,
            best_iteration=2,
            bin_edges=[np.empty(0)],
            feature_names=["x0"],
            config=forest_preset(iteration_cap=2),
        )
        assert predict_proba(model, matrix) == pytest.approx(np.full(6, 0.3))

    def test_prediction_uses_only_best_iteration_prefix(self):
        model, matrix = fitted_gbdt()
        full = predict_proba(model, matrix)
        model.best_iteration = 2
        truncated = predict_proba(model, matrix)
        assert not np.array_equal(full, truncated)
        manual = np.full(matrix.n_rows, model.base_score)
        for tree in model.trees[:2]:
            manual += tree.margins(matrix.values, matrix.missing_mask)
        assert np.array_equal(truncated, sigmoid(manual))

    def test_schema_mismatch_raises(self):
        model, matrix = fitted_gbdt()
        renamed = make_matrix(matrix.values, names=["a", "b", "c"])
        with pytest.raises(SchemaError):
            predict_proba(model, renamed)
