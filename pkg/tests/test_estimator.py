"""Tests for the scikit-learn estimator facade."""

import numpy as np
import pytest
from sklearn.base import clone

from rankprune import TRPClassifier, generate_synthetic


def small_data(seed=0, classes=3, per_class=20):
    ds = generate_synthetic(seed=seed, classes=classes, per_class=per_class, noise=0.5)
    return ds.images, ds.labels


FAST = dict(epochs=2, batch_size=16, lr_schedule=((0, 0.05),), period_m=10, seed=0)


def test_fit_predict_shapes_and_range():
    x, y = small_data()
    clf = TRPClassifier(**FAST).fit(x, y)
    proba = clf.predict_proba(x)
    assert proba.shape == (60, 3)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    preds = clf.predict(x)
    assert preds.shape == (60,)
    assert set(np.unique(preds)) <= set(np.unique(y))
    assert clf.n_features_in_ == 64
    assert clf.score(x, y) > 1 / 3


def test_learns_easy_task():
    ds = generate_synthetic(seed=1, classes=4, per_class=30, noise=0.2)
    clf = TRPClassifier(
        epochs=8, batch_size=16, lr_schedule=((0, 0.05),), period_m=None,
        nuclear_lambda=0.0, seed=1,
    )
    clf.fit(ds.images, ds.labels)
    assert clf.score(ds.images[ds.test_idx], ds.labels[ds.test_idx]) >= 0.75


def test_get_set_params_round_trip_and_clone():
    clf = TRPClassifier(period_m=7, energy_e=0.1, seed=5)
    params = clf.get_params()
    assert params["period_m"] == 7 and params["energy_e"] == 0.1
    other = TRPClassifier().set_params(**params)
    assert other.get_params() == params
    cloned = clone(clf)
    assert cloned.get_params() == params


def test_flattened_input_square_inference():
    x, y = small_data()
    flat = x.reshape(x.shape[0], -1)
    clf = TRPClassifier(**FAST).fit(flat, y)
    assert clf.n_features_in_ == 64
    assert clf.predict(flat).shape == (60,)
    # a fit on the 4d tensor with the same seed gives the same predictions
    ref = TRPClassifier(**FAST).fit(x, y)
    assert np.array_equal(ref.predict(x), clf.predict(flat))


def test_image_shape_override():
    x, y = small_data()
    flat = x.reshape(x.shape[0], -1)
    clf = TRPClassifier(image_shape=(1, 8, 8), **FAST).fit(flat, y)
    assert clf.predict_proba(flat).shape == (60, 3)
    with pytest.raises(ValueError):
        TRPClassifier(image_shape=(1, 5, 13), **FAST).fit(flat, y)


def test_non_contiguous_labels_map_back():
    x, y = small_data()
    remapped = np.array([3, 11, 42])[y]
    clf = TRPClassifier(**FAST).fit(x, remapped)
    assert np.array_equal(clf.classes_, [3, 11, 42])
    assert set(np.unique(clf.predict(x))) <= {3, 11, 42}
    # same training problem, so predictions agree through the mapping
    ref = TRPClassifier(**FAST).fit(x, y)
    assert np.array_equal(np.array([3, 11, 42])[ref.predict(x)], clf.predict(x))


def test_unfitted_predict_raises():
    x, _ = small_data()
    with pytest.raises(ValueError, match="not fitted"):
        TRPClassifier().predict(x)


def test_trajectory_populated_only_with_period():
    x, y = small_data()
    with_events = TRPClassifier(**FAST).fit(x, y)
    assert len(with_events.trajectory_.events) > 0
    assert len(with_events.metrics_) == FAST["epochs"]
    no_events = TRPClassifier(**{**FAST, "period_m": None}).fit(x, y)
    assert len(no_events.trajectory_.events) == 0


def test_validation_errors():
    x, y = small_data()
    with pytest.raises(ValueError):
        TRPClassifier(validation_fraction=1.0, **FAST).fit(x, y)
    with pytest.raises(ValueError):
        TRPClassifier(**FAST).fit(x, np.zeros(len(y), dtype=int))
    with pytest.raises(ValueError):
        TRPClassifier(**FAST).fit(np.zeros((4, 1, 6, 6)), np.array([0, 1, 0, 1]))
