"""Scikit-learn estimator facade over the rank-pruning trainer.

TRPClassifier trains the small built-in conv net on image data under the
periodic low-rank projection scheme and predicts with the trained model.
It follows the scikit-learn contract: constructor stores hyperparameters
verbatim, ``fit`` learns attributes with trailing underscores, and
``get_params``/``set_params`` come from BaseEstimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_images, check_labels
from .data import Dataset, _stratified_split
from .net import predict_proba, tiny_conv_net
from .trp import TrpConfig, train


class TRPClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier trained with periodic low-rank weight projection.

    Accepts images as (n, channels, height, width), (n, height, width),
    or flattened (n, features) rows (reshaped via ``image_shape``, or to a
    square single-channel image when the feature count is a perfect
    square).  Spatial dims must be divisible by 4.

    After ``fit``: ``model_`` is the trained network, ``trajectory_`` the
    projection-event log, ``metrics_`` per-epoch loss/accuracy (accuracy
    from an internal stratified holdout of ``validation_fraction``),
    ``classes_`` the sorted class labels.
    """

    def __init__(
        self,
        period_m: int | None = 20,
        energy_e: float = 0.02,
        nuclear_lambda: float = 0.0003,
        scheme: str = "channel",
        lr_schedule: tuple = ((0, 0.1), (8, 0.01), (11, 0.001)),
        momentum: float = 0.9,
        weight_decay: float = 1e-4,
        epochs: int = 12,
        batch_size: int = 32,
        seed: int = 0,
        validation_fraction: float = 0.1,
        image_shape: tuple | None = None,
        conv1_filters: int = 8,
        conv2_filters: int = 16,
    ):
        self.period_m = period_m
        self.energy_e = energy_e
        self.nuclear_lambda = nuclear_lambda
        self.scheme = scheme
        self.lr_schedule = lr_schedule
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.image_shape = image_shape
        self.conv1_filters = conv1_filters
        self.conv2_filters = conv2_filters

    def _config(self) -> TrpConfig:
        return TrpConfig(
            period_m=self.period_m,
            energy_e=self.energy_e,
            nuclear_lambda=self.nuclear_lambda,
            scheme=self.scheme,
            lr_schedule=tuple(tuple(pair) for pair in self.lr_schedule),
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def _as_images(self, x) -> np.ndarray:
        return check_images(x, image_shape=self.image_shape)

    def fit(self, X, y) -> "TRPClassifier":
        images = self._as_images(X)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        self.classes_ = np.unique(np.asarray(y))
        labels = check_labels(np.searchsorted(self.classes_, np.asarray(y)), images.shape[0])
        if self.classes_.size < 2:
            raise ValueError("fit needs at least two classes")
        _, ch, h, w = images.shape
        if h % 4 or w % 4:
            raise ValueError(f"image dims must be divisible by 4, got {h}x{w}")
        train_idx, test_idx = _stratified_split(labels, 1.0 - self.validation_fraction)
        dataset = Dataset(
            images=images,
            labels=labels,
            class_count=int(self.classes_.size),
            train_idx=train_idx,
            test_idx=test_idx,
        )
        model = tiny_conv_net(
            ch,
            int(self.classes_.size),
            (h, w),
            self.seed,
            conv1_filters=self.conv1_filters,
            conv2_filters=self.conv2_filters,
        )
        result = train(model, dataset, self._config())
        self.model_ = result.model
        self.trajectory_ = result.trajectory
        self.metrics_ = result.metrics
        self.n_features_in_ = int(np.prod(images.shape[1:]))
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise ValueError("this TRPClassifier instance is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return predict_proba(self.model_, self._as_images(X))

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
