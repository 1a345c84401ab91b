"""Query strategies: which unlabeled samples are worth labeling next.

All strategies share one convention: higher score = more valuable to
label, and every strategy returns exactly ``b`` distinct unlabeled sample
ids. Score-based strategies take the top-``b`` with ties broken toward
the lower sample id, so selection is deterministic given the context.

Strategy names (the strings accepted by :func:`select` and the CLI):
``dispersion``, ``margin``, ``bald``, ``kcenter``, ``random``, ``oracle``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, OracleToken
from .dynamics import PredictionHistory, dispersion_scores
from .exceptions import ConfigurationError, ContractViolationError
from .learner import MlpClassifier

STRATEGIES = ("dispersion", "margin", "bald", "kcenter", "random", "oracle")

SCORES_CSV_HEADER = ["sample_id", "score", "strategy", "cycle"]


@dataclass
class AcquisitionContext:
    """Everything a strategy may look at.

    ``oracle_token`` is populated only when the ground-truth oracle
    strategy runs; every other strategy gets ``None`` and cannot read
    hidden labels. ``history`` must cover exactly the unlabeled pool for
    the dispersion strategy.
    """

    model: MlpClassifier
    pool: "PoolState"  # noqa: F821 - imported lazily to avoid a cycle
    features: np.ndarray
    dataset: Dataset | None = None
    history: PredictionHistory | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    mc_passes: int = 25
    oracle_token: OracleToken | None = None


@dataclass
class SelectionResult:
    """Chosen sample ids plus the per-sample score table, when one exists.

    ``sample_ids``/``scores`` are parallel arrays over the unlabeled pool
    (``None`` for the random strategy, which scores nothing).
    """

    chosen: np.ndarray
    sample_ids: np.ndarray | None = None
    scores: np.ndarray | None = None


def top_b(sample_ids: np.ndarray, scores: np.ndarray, b: int) -> np.ndarray:
    """Indices of the ``b`` best scores; equal scores prefer lower ids."""
    order = np.lexsort((sample_ids, -scores))
    return sample_ids[order[:b]]


def _check_budget(ctx: AcquisitionContext, b: int) -> int:
    b = int(b)
    n_unlabeled = len(ctx.pool.unlabeled)
    if not 1 <= b <= n_unlabeled:
        raise ValueError(f"budget {b} out of range for {n_unlabeled} unlabeled samples")
    return b


def select(strategy: str, ctx: AcquisitionContext, b: int) -> SelectionResult:
    """Dispatch to the named strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    b = _check_budget(ctx, b)
    if strategy == "dispersion":
        return dispersion_select(ctx, b)
    if strategy == "margin":
        return _select_by_scores(ctx, margin_scores(ctx), b)
    if strategy == "bald":
        return _select_by_scores(ctx, bald_scores(ctx), b)
    if strategy == "kcenter":
        embeddings = ctx.model.embed(ctx.features)
        return kcenter_greedy(embeddings, ctx.pool.labeled, ctx.pool.unlabeled, b)
    if strategy == "random":
        return random_select(ctx, b)
    return oracle_select(ctx, b)


def _select_by_scores(ctx: AcquisitionContext, scores: np.ndarray, b: int) -> SelectionResult:
    unlabeled = ctx.pool.unlabeled
    return SelectionResult(chosen=top_b(unlabeled, scores, b),
                           sample_ids=unlabeled.copy(), scores=scores)


def dispersion_select(ctx: AcquisitionContext, b: int) -> SelectionResult:
    """Top-``b`` samples by label dispersion over the recorded history."""
    history = ctx.history
    if history is None or history.epochs_recorded == 0:
        raise ContractViolationError("dispersion strategy needs a nonempty history")
    if not np.array_equal(history.sample_ids, ctx.pool.unlabeled):
        raise ContractViolationError(
            "history sample_ids are not aligned to the unlabeled pool"
        )
    scores = np.array([s.dispersion for s in dispersion_scores(history)])
    return _select_by_scores(ctx, scores, _check_budget(ctx, b))


def margin_scores(ctx: AcquisitionContext) -> np.ndarray:
    """Closeness to the decision boundary: ``1 - (p1 - p2)`` with p1, p2
    the two largest predicted probabilities."""
    probs = ctx.model.predict_proba(ctx.features[ctx.pool.unlabeled])
    if probs.shape[1] < 2:
        raise ConfigurationError("margin scoring needs at least two classes")
    part = np.partition(probs, probs.shape[1] - 2, axis=1)
    p1 = part[:, -1]
    p2 = part[:, -2]
    return 1.0 - (p1 - p2)


def _entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats over the last axis, with 0*log(0) = 0."""
    plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -plogp.sum(axis=-1)


def bald_scores(ctx: AcquisitionContext) -> np.ndarray:
    """Mutual information between the prediction and the dropout posterior.

    ``H(mean_t p_t) - mean_t H(p_t)`` over ``mc_passes`` stochastic
    forward passes; nonnegative by concavity of the entropy.
    """
    if int(ctx.mc_passes) < 2:
        raise ConfigurationError("bald needs mc_passes >= 2")
    # (passes, n, C); raises ConfigurationError when dropout is disabled
    mc = ctx.model.mc_predict_proba(
        ctx.features[ctx.pool.unlabeled], passes=ctx.mc_passes, seed=ctx.rng
    )
    mean_probs = mc.mean(axis=0)
    return _entropy(mean_probs) - _entropy(mc).mean(axis=0)


def kcenter_greedy(embeddings: np.ndarray, labeled, unlabeled, b: int) -> SelectionResult:
    """Greedy min-max facility location in embedding space.

    Repeatedly picks the unlabeled sample farthest from its nearest
    center (labeled plus already chosen) and updates the distance table
    incrementally, touching each remaining candidate once per iteration.
    With an empty labeled set the first center falls back to the lowest
    unlabeled id. Reported scores are each sample's initial distance to
    the nearest labeled center.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.size and not np.all(np.isfinite(embeddings)):
        raise ValueError("embeddings must be finite")
    labeled = np.asarray(labeled, dtype=np.int64)
    candidates = np.sort(np.asarray(unlabeled, dtype=np.int64))
    b = int(b)
    if not 1 <= b <= len(candidates):
        raise ValueError(f"budget {b} out of range for {len(candidates)} candidates")

    cand_emb = embeddings[candidates]
    if len(labeled):
        diffs = cand_emb[:, None, :] - embeddings[labeled][None, :, :]
        min_dist = np.sqrt((diffs**2).sum(axis=2)).min(axis=1)
    else:
        min_dist = np.full(len(candidates), np.inf)
    initial_dist = np.where(np.isfinite(min_dist), min_dist, 0.0)

    chosen_pos: list[int] = []
    active = np.ones(len(candidates), dtype=bool)
    for _ in range(b):
        masked = np.where(active, min_dist, -np.inf)
        pick = int(np.argmax(masked))  # first max = lowest id (candidates sorted)
        chosen_pos.append(pick)
        active[pick] = False
        dist_to_new = np.sqrt(((cand_emb - cand_emb[pick]) ** 2).sum(axis=1))
        min_dist = np.minimum(min_dist, dist_to_new)

    return SelectionResult(chosen=candidates[chosen_pos],
                           sample_ids=candidates.copy(), scores=initial_dist)


def random_select(ctx: AcquisitionContext, b: int) -> SelectionResult:
    """Seeded uniform sample without replacement from the unlabeled pool."""
    b = _check_budget(ctx, b)
    chosen = ctx.rng.choice(ctx.pool.unlabeled, size=b, replace=False)
    return SelectionResult(chosen=np.sort(chosen))


def oracle_select(ctx: AcquisitionContext, b: int) -> SelectionResult:
    """Ground-truth cheat: pick samples the current model misclassifies.

    Needs the oracle token. If fewer than ``b`` samples are misclassified
    the remainder is filled by a seeded random draw from the correctly
    classified ones. Scores are 1 for misclassified, 0 otherwise.
    """
    b = _check_budget(ctx, b)
    if ctx.dataset is None or ctx.oracle_token is None:
        raise ConfigurationError("oracle strategy requires dataset access with a token")
    unlabeled = ctx.pool.unlabeled
    preds = ctx.model.predict(ctx.features[unlabeled])
    truth = ctx.dataset.hidden_labels(unlabeled, ctx.oracle_token)
    wrong = preds != truth
    scores = wrong.astype(np.float64)
    misclassified = unlabeled[wrong]
    if len(misclassified) >= b:
        chosen = misclassified[:b]  # unlabeled is sorted, so lowest ids first
    else:
        correct = unlabeled[~wrong]
        fill = ctx.rng.choice(correct, size=b - len(misclassified), replace=False)
        chosen = np.sort(np.concatenate([misclassified, fill]))
    return SelectionResult(chosen=chosen, sample_ids=unlabeled.copy(), scores=scores)


def strategy_scores(strategy: str, ctx: AcquisitionContext) -> np.ndarray:
    """Per-sample scores over the unlabeled pool for any strategy.

    Used by the informativeness analysis and score dumps. The random
    strategy scores samples with seeded uniforms (its top-``b`` is then a
    uniform subset); kcenter scores with the distance to the nearest
    labeled center.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "dispersion":
        history = ctx.history
        if history is None or history.epochs_recorded == 0:
            raise ContractViolationError("dispersion scores need a nonempty history")
        if not np.array_equal(history.sample_ids, ctx.pool.unlabeled):
            raise ContractViolationError(
                "history sample_ids are not aligned to the unlabeled pool"
            )
        return np.array([s.dispersion for s in dispersion_scores(history)])
    if strategy == "margin":
        return margin_scores(ctx)
    if strategy == "bald":
        return bald_scores(ctx)
    if strategy == "kcenter":
        embeddings = ctx.model.embed(ctx.features)
        result = kcenter_greedy(embeddings, ctx.pool.labeled, ctx.pool.unlabeled,
                                b=len(ctx.pool.unlabeled))
        return result.scores
    if strategy == "random":
        return ctx.rng.random(len(ctx.pool.unlabeled))
    preds = ctx.model.predict(ctx.features[ctx.pool.unlabeled])
    if ctx.dataset is None or ctx.oracle_token is None:
        raise ConfigurationError("oracle scores require dataset access with a token")
    truth = ctx.dataset.hidden_labels(ctx.pool.unlabeled, ctx.oracle_token)
    return (preds != truth).astype(np.float64)


def write_scores_csv(path, sample_ids, scores, strategy: str, cycle: int,
                     append: bool = False) -> None:
    """Dump a score table as ``sample_id,score,strategy,cycle`` rows."""
    mode = "a" if append else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append or fh.tell() == 0:
            writer.writerow(SCORES_CSV_HEADER)
        for sample_id, score in zip(sample_ids, scores):
            writer.writerow([int(sample_id), repr(float(score)), strategy, int(cycle)])
