"""MLP classifier with epoch-end snapshot hooks.

``MlpClassifier`` follows the scikit-learn estimator protocol (params in
``__init__``, ``fit`` returns self, learned attributes carry a trailing
underscore) but the numerics are implemented here: softmax cross-entropy,
exact backprop, SGD with classical momentum, a step learning-rate
schedule, and optional inverted dropout. All arithmetic is float64 and a
single seeded generator drives init, shuffling and dropout masks, so a
``(params, seed, data)`` triple determines the fitted model bit-exactly.

The snapshot hook is the bridge to the training-dynamics tracker: when
``fit`` is given ``track_X`` and ``snapshot_hook``, the hook is invoked
once at the end of every epoch with ``(epoch_index, predictions)`` where
predictions are eval-mode argmax class ids for the tracked rows.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import nn
from .exceptions import ConfigurationError, TrainingDivergedError
from .validation import as_rng, check_feature_matrix, check_label_vector

SnapshotHook = Callable[[int, np.ndarray], None]

DEFAULT_HIDDEN = 64


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward softmax classifier trained with momentum SGD.

    Parameters
    ----------
    layer_sizes : list of int or None
        Full layer widths ``[n_features, hidden..., n_classes]``. ``None``
        infers ``[n_features, 64, n_classes]`` at fit time.
    learning_rate : float
        Initial step size.
    momentum : float
        Classical momentum coefficient in ``[0, 1)``.
    epochs : int
        Number of passes over the training data.
    lr_milestones : list of int or None
        Epoch indices at which the learning rate is multiplied by
        ``lr_decay_factor``. ``None`` places milestones at 60% and 80% of
        ``epochs``.
    lr_decay_factor : float
        Multiplier applied at each milestone (0.2 divides the rate by 5).
    dropout_rate : float
        Hidden-unit drop probability in ``[0, 1)``; 0 disables dropout.
        Must be positive to use :meth:`mc_predict_proba`.
    batch_size : int
        Mini-batch size.
    weight_init_scale : float
        Weights start uniform in ``+/- scale/sqrt(fan_in)``.
    seed : int
        Seed for the generator driving init, shuffles and dropout masks.
    """

    def __init__(
        self,
        layer_sizes=None,
        learning_rate=0.02,
        momentum=0.9,
        epochs=100,
        lr_milestones=None,
        lr_decay_factor=0.2,
        dropout_rate=0.0,
        batch_size=32,
        weight_init_scale=1.0,
        seed=0,
    ):
        self.layer_sizes = layer_sizes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.lr_milestones = lr_milestones
        self.lr_decay_factor = lr_decay_factor
        self.dropout_rate = dropout_rate
        self.batch_size = batch_size
        self.weight_init_scale = weight_init_scale
        self.seed = seed

    # ------------------------------------------------------------------
    # configuration resolution

    def _resolved_layer_sizes(self, n_features: int, n_classes: int) -> list[int]:
        if self.layer_sizes is None:
            return [n_features, DEFAULT_HIDDEN, n_classes]
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output widths")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer_sizes must be positive")
        if sizes[0] != n_features:
            raise ValueError(
                f"layer_sizes[0]={sizes[0]} does not match n_features={n_features}"
            )
        if sizes[-1] != n_classes:
            raise ValueError(
                f"layer_sizes[-1]={sizes[-1]} does not match n_classes={n_classes}"
            )
        return sizes

    def _resolved_milestones(self) -> list[int]:
        if self.lr_milestones is None:
            return [int(self.epochs * 0.6), int(self.epochs * 0.8)]
        milestones = [int(m) for m in self.lr_milestones]
        if milestones != sorted(milestones):
            raise ValueError("lr_milestones must be sorted")
        if any(m >= self.epochs for m in milestones):
            raise ValueError("lr_milestones must all be smaller than epochs")
        return milestones

    def _check_hyperparams(self) -> None:
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be a positive finite real")
        if not (np.isfinite(self.momentum) and 0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if not (np.isfinite(self.dropout_rate) and 0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if int(self.epochs) < 1:
            raise ValueError("epochs must be a positive integer")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be a positive integer")
        if not (np.isfinite(self.weight_init_scale) and self.weight_init_scale > 0):
            raise ValueError("weight_init_scale must be a positive finite real")
        if not (np.isfinite(self.lr_decay_factor) and self.lr_decay_factor > 0):
            raise ValueError("lr_decay_factor must be a positive finite real")

    # ------------------------------------------------------------------
    # training

    def fit(self, X, y, *, n_classes=None, track_X=None, snapshot_hook=None):
        """Train on ``(X, y)``; optionally snapshot tracked predictions.

        ``n_classes`` overrides the class count inferred from ``y`` (needed
        when the training subset happens to miss a class). ``track_X`` and
        ``snapshot_hook`` must be given together: the hook receives
        ``(epoch, eval_mode_predictions_on_track_X)`` exactly ``epochs``
        times, epoch indices counting up from 0.
        """
        X = check_feature_matrix(X, name="X")
        if len(X) == 0:
            raise ValueError("training data is empty")
        y = check_label_vector(y, n_samples=len(X))
        inferred = int(y.max()) + 1
        n_cls = inferred if n_classes is None else int(n_classes)
        if n_cls < inferred:
            raise ValueError(f"n_classes={n_cls} smaller than observed label {inferred - 1}")
        if (track_X is None) != (snapshot_hook is None):
            raise ValueError("track_X and snapshot_hook must be supplied together")
        if track_X is not None:
            track_X = check_feature_matrix(track_X, n_features=X.shape[1], name="track_X")

        self._check_hyperparams()
        sizes = self._resolved_layer_sizes(X.shape[1], n_cls)
        milestones = self._resolved_milestones()
        epochs = int(self.epochs)
        batch_size = int(self.batch_size)

        rng = np.random.default_rng(self.seed)
        weights, biases = nn.init_params(sizes, self.weight_init_scale, rng)
        vel_w = [np.zeros_like(w) for w in weights]
        vel_b = [np.zeros_like(b) for b in biases]

        n = len(X)
        loss_curve = []
        for epoch in range(epochs):
            lr = nn.lr_at_epoch(self.learning_rate, milestones, self.lr_decay_factor, epoch)
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                logits, cache = nn.forward(
                    weights, biases, X[idx],
                    dropout_rate=self.dropout_rate, train=True, rng=rng,
                )
                probs = nn.softmax(logits)
                loss = nn.batch_cross_entropy(probs, y[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
                grads_w, grads_b = nn.backward(weights, cache, probs, y[idx])
                nn.sgd_momentum_step(
                    weights, biases, vel_w, vel_b, grads_w, grads_b, lr, self.momentum
                )
                epoch_loss += loss * len(idx)
            loss_curve.append(epoch_loss / n)
            if track_X is not None:
                logits, _ = nn.forward(weights, biases, track_X)
                snapshot_hook(epoch, np.argmax(logits, axis=1))

        self.weights_ = weights
        self.biases_ = biases
        self.classes_ = np.arange(n_cls)
        self.n_features_in_ = X.shape[1]
        self.layer_sizes_ = sizes
        self.lr_milestones_ = milestones
        self.loss_curve_ = loss_curve
        return self

    # ------------------------------------------------------------------
    # inference

    def _eval_forward(self, X) -> tuple[np.ndarray, nn.ForwardCache]:
        check_is_fitted(self, "weights_")
        X = check_feature_matrix(X, n_features=self.n_features_in_, name="X")
        return nn.forward(self.weights_, self.biases_, X)

    def predict_proba(self, X) -> np.ndarray:
        """Eval-mode class probabilities, one row per sample."""
        logits, _ = self._eval_forward(X)
        return nn.softmax(logits)

    def predict(self, X) -> np.ndarray:
        """Argmax class ids; ties break toward the lowest class id."""
        logits, _ = self._eval_forward(X)
        return np.argmax(logits, axis=1)

    def embed(self, X) -> np.ndarray:
        """Penultimate-layer representation (post-rectifier activations of
        the last hidden layer; the raw features if there is none)."""
        _, cache = self._eval_forward(X)
        return cache.inputs[-1].copy()

    def mc_predict_proba(self, X, passes: int = 25, seed=0) -> np.ndarray:
        """Stochastic forward passes with dropout active.

        Returns an array of shape ``(passes, n_samples, n_classes)`` (the
        leading sample axis is dropped when ``X`` is a single vector).
        Masks come from a generator seeded with ``seed``, so a fixed seed
        reproduces the matrix exactly.
        """
        check_is_fitted(self, "weights_")
        if self.dropout_rate <= 0.0:
            raise ConfigurationError(
                "mc_predict_proba needs dropout_rate > 0; the posterior is "
                "degenerate without dropout"
            )
        if int(passes) < 1:
            raise ValueError("passes must be a positive integer")
        single = np.asarray(X).ndim == 1
        X = check_feature_matrix(X, n_features=self.n_features_in_, name="X")
        rng = as_rng(seed)
        out = np.empty((int(passes), len(X), len(self.classes_)))
        for t in range(int(passes)):
            logits, _ = nn.forward(
                self.weights_, self.biases_, X,
                dropout_rate=self.dropout_rate, train=True, rng=rng,
            )
            out[t] = nn.softmax(logits)
        return out[:, 0, :] if single else out


# ----------------------------------------------------------------------
# checkpoint serialization


def save_model(model: MlpClassifier, path) -> None:
    """Write a fitted model as a single JSON checkpoint.

    Arrays are stored row-major as nested lists; floats use Python's
    shortest round-trip decimal form (at most 17 significant digits), so
    ``load_model(save_model(m))`` restores parameters bit-exactly.
    """
    check_is_fitted(model, "weights_")
    doc = {
        "config": model.get_params(),
        "seed": model.seed,
        "classes": [int(c) for c in model.classes_],
        "weights": [w.tolist() for w in model.weights_],
        "biases": [b.tolist() for b in model.biases_],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> MlpClassifier:
    """Restore a checkpoint written by :func:`save_model`."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    model = MlpClassifier(**doc["config"])
    model.weights_ = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    model.biases_ = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    model.classes_ = np.asarray(doc["classes"], dtype=np.int64)
    model.layer_sizes_ = [model.weights_[0].shape[0]] + [w.shape[1] for w in model.weights_]
    model.n_features_in_ = model.layer_sizes_[0]
    model.lr_milestones_ = model._resolved_milestones()
    return model
