"""Feed-forward network primitives on plain numpy arrays.

A network with layer sizes ``[d, h1, ..., hk, C]`` is represented as a
list of float64 weight matrices with shape ``(fan_in, fan_out)`` and a
parallel list of bias vectors. Hidden layers apply an affine map, a
rectifier, and (in train mode) inverted dropout; the output layer is
affine only. Everything here is a pure function of its arguments; the
training loop in :mod:`al_lab.learner` owns parameter state and the RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolationError, TrainingDivergedError

# Floor applied to probabilities before taking logs, so a confidently
# wrong prediction yields a large finite loss instead of infinity.
PROB_FLOOR = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis.

    Subtracts the row max before exponentiating, which preserves the
    argmax and avoids overflow for large logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log-probability of ``label`` with the probability clamped
    below at ``PROB_FLOOR``."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("cross_entropy expects a single probability vector")
    label = int(label)
    if not 0 <= label < len(p):
        raise ValueError(f"label {label} out of range for {len(p)} classes")
    return float(-np.log(max(p[label], PROB_FLOOR)))


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean clamped cross-entropy of a batch of probability rows."""
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, PROB_FLOOR)).mean())


@dataclass
class ForwardCache:
    """Intermediate state retained by :func:`forward` for :func:`backward`.

    ``inputs[l]`` is the batch fed to affine layer ``l`` (so ``inputs[0]``
    is the network input and ``inputs[-1]`` the last hidden activation).
    Masks are per hidden layer; a dropout mask already carries the
    ``1/(1-rate)`` survivor scaling.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    relu_masks: list[np.ndarray] = field(default_factory=list)
    dropout_masks: list[np.ndarray | None] = field(default_factory=list)
    layer_shapes: list[tuple[int, int]] = field(default_factory=list)


def forward(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    *,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch, returning logits and the cache.

    In train mode with ``dropout_rate > 0`` each hidden activation is
    zeroed independently with that probability and survivors scaled by
    ``1/(1-dropout_rate)`` (inverted dropout), drawing masks from ``rng``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != weights[0].shape[0]:
        raise ValueError(
            f"input has {X.shape[1]} features, network expects {weights[0].shape[0]}"
        )
    use_dropout = train and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout in train mode requires an rng")

    cache = ForwardCache(layer_shapes=[w.shape for w in weights])
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        cache.inputs.append(a)
        z = a @ W + b
        relu_mask = z > 0.0
        h = np.where(relu_mask, z, 0.0)
        if use_dropout:
            keep = rng.random(h.shape) >= dropout_rate
            dmask = keep / (1.0 - dropout_rate)
            h = h * dmask
            cache.dropout_masks.append(dmask)
        else:
            cache.dropout_masks.append(None)
        cache.relu_masks.append(relu_mask)
        a = h
    cache.inputs.append(a)
    logits = a @ weights[-1] + biases[-1]
    return logits, cache


def backward(
    weights: list[np.ndarray],
    cache: ForwardCache,
    probs: np.ndarray,
    labels: np.ndarray,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of mean cross-entropy(softmax) w.r.t. all parameters.

    ``probs`` must come from the matching :func:`forward` call; the
    output-layer error term is ``(probs - one_hot(labels)) / batch``.
    """
    if cache is None or len(cache.inputs) != len(weights):
        raise ContractViolationError("backward requires the cache from a matching forward call")
    for W, shape in zip(weights, cache.layer_shapes):
        if W.shape != shape:
            raise ContractViolationError("forward cache is stale for these parameters")

    n = probs.shape[0]
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads_w: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = cache.inputs[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ weights[layer].T
            dmask = cache.dropout_masks[layer - 1]
            if dmask is not None:
                delta = delta * dmask
            delta = delta * cache.relu_masks[layer - 1]
    return grads_w, grads_b


def sgd_momentum_step(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    vel_w: list[np.ndarray],
    vel_b: list[np.ndarray],
    grads_w: list[np.ndarray],
    grads_b: list[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """Classical momentum update, in place: ``v <- m*v + g; theta <- theta - lr*v``."""
    for g in grads_w + grads_b:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    for theta, v, g in zip(weights + biases, vel_w + vel_b, grads_w + grads_b):
        v *= momentum
        v += g
        theta -= lr * v


def lr_at_epoch(
    learning_rate: float,
    milestones: list[int],
    decay_factor: float,
    epoch: int,
) -> float:
    """Step schedule: the rate is multiplied by ``decay_factor`` at each
    milestone, i.e. ``learning_rate * decay_factor**k`` with ``k`` the
    number of milestones at or before ``epoch``."""
    k = sum(1 for m in milestones if m <= epoch)
    return learning_rate * decay_factor**k


def init_params(
    layer_sizes: list[int],
    scale: float,
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Seeded init: weights uniform in ``+/- scale/sqrt(fan_in)``, biases zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases
