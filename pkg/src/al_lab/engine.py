"""Budgeted active-learning cycles and experiment orchestration.

One cycle: train a fresh model on the labeled pool (recording epoch
snapshots on the unlabeled pool), score and select a batch with the
configured strategy, obtain labels from the oracle, grow the labeled
pool, evaluate on the held-out test split, and emit a report. After the
final cycle a terminal model is trained on the full labeled budget and
evaluated, so the report stream carries the whole labeled-count
trajectory (e.g. 10/15/20/25/30% with the defaults).

Every random decision derives from the experiment seed: the initial pool
depends only on (pool size, fraction, seed) so all strategies compared
under one seed share it bitwise, and per-cycle training seeds are hashed
from (seed, cycle, strategy) so cycles do not repeat weight trajectories.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .acquisition import (
    STRATEGIES,
    AcquisitionContext,
    SelectionResult,
    select,
    strategy_scores,
)
from .data import Dataset, OracleToken
from .dynamics import PredictionHistory, dispersion_scores
from .exceptions import ConfigurationError
from .learner import MlpClassifier
from .validation import check_fraction

AGGREGATE_CSV_HEADER = ["strategy", "cycle", "labeled_count", "mean_acc", "std_acc"]
INFORMATIVENESS_CSV_HEADER = ["strategy", "fraction", "accuracy"]


@dataclass
class PoolState:
    """Disjoint labeled/unlabeled partition of the training pool."""

    labeled: np.ndarray
    unlabeled: np.ndarray
    total: int

    def __post_init__(self):
        self.labeled = np.sort(np.asarray(self.labeled, dtype=np.int64))
        self.unlabeled = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        self.total = int(self.total)
        if len(self.labeled) + len(self.unlabeled) != self.total:
            raise ValueError("labeled and unlabeled sizes must sum to total")
        union = np.union1d(self.labeled, self.unlabeled)
        if len(union) != self.total or not np.array_equal(union, np.arange(self.total)):
            raise ValueError("pool must partition indices 0..total-1")

    def move_to_labeled(self, ids) -> "PoolState":
        ids = np.asarray(ids, dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate ids in labeling batch")
        if not np.all(np.isin(ids, self.unlabeled)):
            raise ValueError("can only move unlabeled samples to the labeled pool")
        return PoolState(
            labeled=np.concatenate([self.labeled, ids]),
            unlabeled=np.setdiff1d(self.unlabeled, ids),
            total=self.total,
        )


@dataclass
class ALConfig:
    """Experiment configuration; ``learner`` holds MlpClassifier params."""

    initial_fraction: float = 0.10
    budget_per_cycle_fraction: float = 0.05
    cycles: int = 4
    strategy: str = "dispersion"
    learner: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    oracle_mode: str = "simulated"

    _FIELDS = (
        "initial_fraction", "budget_per_cycle_fraction", "cycles",
        "strategy", "learner", "seeds", "oracle_mode",
    )

    def validate(self) -> "ALConfig":
        try:
            check_fraction(self.initial_fraction, "initial_fraction")
            check_fraction(self.budget_per_cycle_fraction, "budget_per_cycle_fraction")
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if int(self.cycles) < 1:
            raise ConfigurationError("cycles: must be a positive integer")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"strategy: unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if self.oracle_mode not in ("simulated", "interactive"):
            raise ConfigurationError(
                f"oracle_mode: must be 'simulated' or 'interactive', got {self.oracle_mode!r}"
            )
        if not self.seeds:
            raise ConfigurationError("seeds: must be a nonempty list of integers")
        budget_total = self.initial_fraction + self.cycles * self.budget_per_cycle_fraction
        if budget_total > 1.0 + 1e-12:
            raise ConfigurationError(
                f"initial_fraction + cycles * budget_per_cycle_fraction = "
                f"{budget_total:.3f} exceeds the pool"
            )
        if not isinstance(self.learner, dict):
            raise ConfigurationError("learner: must be a mapping of learner parameters")
        valid_learner = set(MlpClassifier().get_params())
        for key in self.learner:
            if key not in valid_learner:
                raise ConfigurationError(f"learner.{key}: unknown learner parameter")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "ALConfig":
        unknown = set(doc) - set(cls._FIELDS)
        if unknown:
            raise ConfigurationError(f"{sorted(unknown)[0]}: unknown config key")
        kwargs = {k: doc[k] for k in cls._FIELDS if k in doc}
        if "seeds" in kwargs:
            kwargs["seeds"] = [int(s) for s in kwargs["seeds"]]
        return cls(**kwargs).validate()

    def to_dict(self) -> dict:
        return {
            "initial_fraction": self.initial_fraction,
            "budget_per_cycle_fraction": self.budget_per_cycle_fraction,
            "cycles": int(self.cycles),
            "strategy": self.strategy,
            "learner": dict(self.learner),
            "seeds": [int(s) for s in self.seeds],
            "oracle_mode": self.oracle_mode,
        }

    def with_strategy(self, strategy: str) -> "ALConfig":
        return replace(self, strategy=strategy, learner=dict(self.learner),
                       seeds=list(self.seeds))


@dataclass
class CycleReport:
    """Outcome of one cycle: the model trained on ``labeled_count``
    samples, its test accuracy, and the batch it queried."""

    strategy: str
    seed: int
    cycle: int
    labeled_count: int
    test_accuracy: float
    queried: list[int]
    query_scores: list[float] | None
    wall_time_seconds: float

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": int(self.seed),
            "cycle": int(self.cycle),
            "labeled_count": int(self.labeled_count),
            "test_accuracy": float(self.test_accuracy),
            "queried": [int(q) for q in self.queried],
            "query_scores": None if self.query_scores is None
            else [float(s) for s in self.query_scores],
            "wall_time_seconds": float(self.wall_time_seconds),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CycleReport":
        return cls(**doc)

    def equivalent_to(self, other: "CycleReport") -> bool:
        """Equality on everything deterministic (wall time excluded)."""
        return (
            self.strategy == other.strategy
            and self.seed == other.seed
            and self.cycle == other.cycle
            and self.labeled_count == other.labeled_count
            and self.test_accuracy == other.test_accuracy
            and list(self.queried) == list(other.queried)
            and (
                self.query_scores is None and other.query_scores is None
                or list(self.query_scores or []) == list(other.query_scores or [])
            )
        )


def derive_seed(*parts) -> int:
    """Deterministic 64-bit seed from a tuple of hashable parts."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def budget_count(n_pool: int, fraction: float) -> int:
    """Per-cycle budget: floor of the fraction with a minimum of 1."""
    return max(1, math.floor(fraction * n_pool))


def init_pool(n: int, initial_fraction: float, seed) -> PoolState:
    """Seeded uniform choice of the initial labeled set.

    Depends only on ``(n, initial_fraction, seed)``, which is what makes
    the initial pool identical across strategies compared under one seed.
    """
    check_fraction(initial_fraction, "initial_fraction")
    if n < 2:
        raise ConfigurationError("pool needs at least 2 samples")
    count = math.floor(initial_fraction * n)
    if count == 0:
        raise ConfigurationError(
            f"initial_fraction {initial_fraction} yields 0 labeled samples for n={n}"
        )
    if count >= n:
        raise ConfigurationError("initial pool would consume the entire dataset")
    rng = np.random.default_rng(seed)
    labeled = np.sort(rng.choice(n, size=count, replace=False))
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    return PoolState(labeled=labeled, unlabeled=unlabeled, total=n)


# ----------------------------------------------------------------------
# oracles and persistence hooks


class SimulatedOracle:
    """Labels queries instantly from the dataset's hidden ground truth."""

    def __init__(self, dataset: Dataset, token: OracleToken):
        self._dataset = dataset
        self._token = token

    def request_labels(self, cycle: int, items: list[dict]) -> dict[int, int]:
        ids = [int(item["sample_id"]) for item in items]
        labels = self._dataset.hidden_labels(ids, self._token)
        return {i: int(lab) for i, lab in zip(ids, labels)}


class RunRecorder:
    """No-op persistence hooks invoked by :func:`run_seed`."""

    def on_cycle_trained(self, cycle: int, model: MlpClassifier,
                         history: PredictionHistory) -> None:
        pass

    def on_scores(self, cycle: int, sample_ids, scores) -> None:
        pass

    def on_pending(self, cycle: int, model: MlpClassifier,
                   history: PredictionHistory, selection: SelectionResult,
                   items: list[dict]) -> None:
        pass

    def on_report(self, report: CycleReport) -> None:
        pass


@dataclass
class ResumeState:
    """Mid-run snapshot used to continue an interrupted interactive run."""

    pool: PoolState
    known_labels: np.ndarray
    next_cycle: int
    pending_model: MlpClassifier | None = None
    pending_history: PredictionHistory | None = None
    pending_selection: SelectionResult | None = None
    pending_items: list[dict] | None = None


# ----------------------------------------------------------------------
# cycle machinery


def train_cycle_model(dataset: Dataset, pool: PoolState, learner_params: dict,
                      seed: int, known_labels: np.ndarray
                      ) -> tuple[MlpClassifier, PredictionHistory | None]:
    """Fresh model on the labeled pool, snapshotting the unlabeled pool.

    With an exhausted pool (terminal training at a full budget) there is
    nothing to track and the history is ``None``.
    """
    params = dict(learner_params)
    params["seed"] = seed
    model = MlpClassifier(**params)
    if len(pool.unlabeled) == 0:
        model.fit(
            dataset.features[pool.labeled],
            known_labels[pool.labeled],
            n_classes=dataset.class_count,
        )
        return model, None
    history = PredictionHistory(pool.unlabeled, dataset.class_count)
    model.fit(
        dataset.features[pool.labeled],
        known_labels[pool.labeled],
        n_classes=dataset.class_count,
        track_X=dataset.features[pool.unlabeled],
        snapshot_hook=history.record_snapshot,
    )
    return model, history


def evaluate_accuracy(model: MlpClassifier, dataset: Dataset, indices,
                      token: OracleToken) -> float:
    preds = model.predict(dataset.features[indices])
    truth = dataset.hidden_labels(indices, token)
    return float(np.mean(preds == truth))


def build_query_items(model: MlpClassifier, history: PredictionHistory,
                      dataset: Dataset, chosen) -> list[dict]:
    """Displayable descriptions of a query batch for the oracle/UI."""
    chosen = np.asarray(chosen, dtype=np.int64)
    X = dataset.features[chosen]
    preds = model.predict(X)
    disp = {s.sample_id: s.dispersion for s in dispersion_scores(history)}
    if dataset.n_features == 2:
        proj = X
    else:
        emb = model.embed(X)
        if emb.shape[1] >= 2:
            proj = emb[:, :2]
        else:
            proj = np.column_stack([emb[:, 0], np.zeros(len(emb))])
    return [
        {
            "sample_id": int(s),
            "features": [float(v) for v in X[i]],
            "projection": [float(proj[i, 0]), float(proj[i, 1])],
            "predicted_class": int(preds[i]),
            "dispersion_score": float(disp[int(s)]),
        }
        for i, s in enumerate(chosen)
    ]


def _check_label_reply(labels: dict, chosen, class_count: int) -> dict[int, int]:
    reply = {int(k): int(v) for k, v in labels.items()}
    expected = {int(s) for s in chosen}
    if set(reply) != expected:
        missing = sorted(expected - set(reply))
        extra = sorted(set(reply) - expected)
        raise ValueError(
            f"label reply must cover exactly the queried batch "
            f"(missing {missing}, unexpected {extra})"
        )
    for sid, lab in reply.items():
        if not 0 <= lab < class_count:
            raise ValueError(f"label {lab} for sample {sid} out of range")
    return reply


def _query_score_list(selection: SelectionResult) -> list[float] | None:
    if selection.scores is None or selection.sample_ids is None:
        return None
    table = {int(s): float(v) for s, v in zip(selection.sample_ids, selection.scores)}
    return [table[int(c)] for c in selection.chosen]


def run_seed(dataset: Dataset, config: ALConfig, seed: int, *,
             oracle=None, recorder: RunRecorder | None = None,
             mc_passes: int = 25, resume: ResumeState | None = None
             ) -> list[CycleReport]:
    """Run the full cycle loop for one experiment seed.

    Emits ``cycles`` acquisition reports plus one terminal report for the
    model retrained on the final labeled budget (empty query batch), so
    the stream covers every labeled count the protocol touches.
    """
    config.validate()
    token = OracleToken()
    recorder = recorder or RunRecorder()
    n_pool = len(dataset.train_indices)
    if not np.array_equal(dataset.train_indices, np.arange(n_pool)):
        raise ConfigurationError(
            "the engine requires the train split to occupy rows 0..n_train-1 "
            "(datasets from gen_blobs/save_csv are laid out this way)"
        )
    b = budget_count(n_pool, config.budget_per_cycle_fraction)
    if oracle is None:
        oracle = SimulatedOracle(dataset, token)

    if resume is None:
        pool = init_pool(n_pool, config.initial_fraction, seed)
        known = np.full(dataset.n_samples, -1, dtype=np.int64)
        # The initial pool arrives pre-labeled in this protocol, so its
        # labels come from ground truth even in interactive mode.
        known[pool.labeled] = dataset.hidden_labels(pool.labeled, token)
        start_cycle = 0
    else:
        pool = resume.pool
        known = resume.known_labels.copy()
        start_cycle = resume.next_cycle

    reports: list[CycleReport] = []
    for cycle in range(start_cycle, config.cycles):
        t0 = time.perf_counter()
        if len(pool.unlabeled) < b:
            raise ConfigurationError(
                f"cycle {cycle}: budget {b} exceeds {len(pool.unlabeled)} unlabeled samples"
            )
        trained_count = len(pool.labeled)
        resumed_pending = (
            resume is not None
            and cycle == resume.next_cycle
            and resume.pending_model is not None
        )
        if resumed_pending:
            model = resume.pending_model
            history = resume.pending_history
            selection = resume.pending_selection
            items = resume.pending_items
        else:
            model, history = train_cycle_model(
                dataset, pool, config.learner,
                derive_seed(seed, cycle, config.strategy), known,
            )
            recorder.on_cycle_trained(cycle, model, history)
            ctx = AcquisitionContext(
                model=model,
                pool=pool,
                features=dataset.features,
                dataset=dataset,
                history=history,
                rng=np.random.default_rng(derive_seed(seed, cycle, config.strategy, "select")),
                mc_passes=mc_passes,
                oracle_token=token if config.strategy == "oracle" else None,
            )
            selection = select(config.strategy, ctx, b)
            if selection.scores is not None:
                recorder.on_scores(cycle, selection.sample_ids, selection.scores)
            items = build_query_items(model, history, dataset, selection.chosen)
            recorder.on_pending(cycle, model, history, selection, items)

        labels = _check_label_reply(
            oracle.request_labels(cycle, items), selection.chosen, dataset.class_count
        )
        for sid, lab in labels.items():
            known[sid] = lab
        pool = pool.move_to_labeled(selection.chosen)

        report = CycleReport(
            strategy=config.strategy,
            seed=int(seed),
            cycle=cycle,
            labeled_count=trained_count,
            test_accuracy=evaluate_accuracy(model, dataset, dataset.test_indices, token),
            queried=[int(s) for s in selection.chosen],
            query_scores=_query_score_list(selection),
            wall_time_seconds=time.perf_counter() - t0,
        )
        reports.append(report)
        recorder.on_report(report)

    # terminal model on the exhausted budget
    t0 = time.perf_counter()
    model, history = train_cycle_model(
        dataset, pool, config.learner,
        derive_seed(seed, config.cycles, config.strategy), known,
    )
    recorder.on_cycle_trained(config.cycles, model, history)
    report = CycleReport(
        strategy=config.strategy,
        seed=int(seed),
        cycle=int(config.cycles),
        labeled_count=len(pool.labeled),
        test_accuracy=evaluate_accuracy(model, dataset, dataset.test_indices, token),
        queried=[],
        query_scores=None,
        wall_time_seconds=time.perf_counter() - t0,
    )
    reports.append(report)
    recorder.on_report(report)
    return reports


def run_experiment(dataset: Dataset, config: ALConfig, *,
                   recorder_factory=None, mc_passes: int = 25
                   ) -> dict[int, list[CycleReport]]:
    """Run every seed; a failing seed never aborts its siblings.

    Errors are collected and re-raised together after the remaining seeds
    finish, so partial results are persisted by the recorders.
    """
    config.validate()
    results: dict[int, list[CycleReport]] = {}
    errors: dict[int, Exception] = {}
    for seed in config.seeds:
        recorder = recorder_factory(config.strategy, seed) if recorder_factory else None
        try:
            results[seed] = run_seed(
                dataset, config, seed, recorder=recorder, mc_passes=mc_passes
            )
        except Exception as exc:  # noqa: BLE001 - isolate sibling seeds
            errors[seed] = exc
    if errors:
        detail = "; ".join(f"seed {s}: {e}" for s, e in errors.items())
        raise RuntimeError(
            f"{len(errors)} seed(s) failed ({detail}); sibling seeds completed"
        ) from next(iter(errors.values()))
    return results


# ----------------------------------------------------------------------
# aggregation and persistence


def aggregate_reports(reports: Iterable[CycleReport]) -> list[dict]:
    """Per (strategy, cycle): labeled count, mean and sample std of accuracy."""
    groups: dict[tuple[str, int], list[CycleReport]] = {}
    for rep in reports:
        groups.setdefault((rep.strategy, rep.cycle), []).append(rep)
    rows = []
    for (strategy, cycle) in sorted(groups):
        members = groups[(strategy, cycle)]
        counts = {m.labeled_count for m in members}
        if len(counts) != 1:
            raise ValueError(
                f"inconsistent labeled counts for {strategy} cycle {cycle}: {sorted(counts)}"
            )
        accs = np.array([m.test_accuracy for m in members])
        std = 0.0 if len(accs) == 1 else float(np.std(accs, ddof=1))
        rows.append(
            {
                "strategy": strategy,
                "cycle": int(cycle),
                "labeled_count": int(counts.pop()),
                "mean_acc": float(accs.mean()),
                "std_acc": std,
            }
        )
    return rows


def write_reports_jsonl(reports: Iterable[CycleReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_dict()) + "\n")


def read_reports_jsonl(path) -> list[CycleReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(CycleReport.from_dict(json.loads(line)))
    return reports


def write_aggregate_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["strategy"],
                    row["cycle"],
                    row["labeled_count"],
                    repr(row["mean_acc"]),
                    repr(row["std_acc"]),
                ]
            )


# ----------------------------------------------------------------------
# informativeness analysis


def informativeness_analysis(sample_ids, scores, model: MlpClassifier,
                             dataset: Dataset, fractions, token: OracleToken
                             ) -> list[tuple[float, float]]:
    """Current-model accuracy on the top-scored slices of the pool.

    Samples are sorted by score descending (ties toward the lower id);
    for each fraction ``p`` the model's accuracy against ground truth is
    computed on the top ``floor(p * n)`` samples (at least one). Lower
    accuracy means the slice carries more information to label.
    """
    fractions = [check_fraction(f, "fraction", inclusive_top=True) for f in fractions]
    if not fractions:
        raise ValueError("fractions must be nonempty")
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if sample_ids.shape != scores.shape:
        raise ValueError("sample_ids and scores must be parallel arrays")
    order = np.lexsort((sample_ids, -scores))
    ranked = sample_ids[order]
    preds = model.predict(dataset.features[ranked])
    truth = dataset.hidden_labels(ranked, token)
    correct = preds == truth
    out = []
    for frac in fractions:
        k = max(1, math.floor(frac * len(ranked)))
        out.append((float(frac), float(correct[:k].mean())))
    return out


def initial_model_scores(dataset: Dataset, config: ALConfig, seed: int,
                         strategies: list[str], mc_passes: int = 25):
    """Train on the initial pool and score it under several strategies.

    Returns ``(pool, model, history, {strategy: scores})`` where scores
    align with ``pool.unlabeled``. All strategies see the same model (the
    one trained on this seed's initial pool).
    """
    token = OracleToken()
    n_pool = len(dataset.train_indices)
    pool = init_pool(n_pool, config.initial_fraction, seed)
    known = np.full(dataset.n_samples, -1, dtype=np.int64)
    known[pool.labeled] = dataset.hidden_labels(pool.labeled, token)
    model, history = train_cycle_model(
        dataset, pool, config.learner, derive_seed(seed, 0, "analysis"), known
    )
    scores = {}
    for strategy in strategies:
        ctx = AcquisitionContext(
            model=model,
            pool=pool,
            features=dataset.features,
            dataset=dataset,
            history=history,
            rng=np.random.default_rng(derive_seed(seed, 0, strategy, "analysis")),
            mc_passes=mc_passes,
            oracle_token=token if strategy == "oracle" else None,
        )
        scores[strategy] = strategy_scores(strategy, ctx)
    return pool, model, history, scores


def write_informativeness_csv(rows: list[dict], path) -> None:
    """Rows of ``{strategy, fraction, accuracy}`` to the analysis CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INFORMATIVENESS_CSV_HEADER)
        for row in rows:
            writer.writerow([row["strategy"], repr(float(row["fraction"])),
                             repr(float(row["accuracy"]))])
