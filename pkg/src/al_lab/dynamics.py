"""Prediction tracking across training epochs and label dispersion.

A sample whose predicted class keeps changing while the network trains is
one the model is unsure about, even when its final confidence is high.
``PredictionHistory`` records the per-epoch argmax predictions for a
tracked set of samples; ``dispersion_scores`` reduces each sample's
sequence to ``1 - modal_count / epochs``: the fraction of epochs whose
prediction falls outside the sample's most frequent class. A constant
sequence scores 0; the score is bounded above by ``1 - 1/T``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ContractViolationError, EmptyHistoryError

HISTORY_CSV_HEADER = ["sample_id", "epoch", "predicted_class"]


@dataclass(frozen=True)
class DispersionScore:
    """Dispersion summary for one tracked sample.

    ``modal_class`` is the most frequently predicted class id (lowest id
    on ties), ``modal_count`` its number of occurrences, and
    ``dispersion == 1 - modal_count / epochs`` exactly.
    """

    sample_id: int
    modal_class: int
    modal_count: int
    dispersion: float


class PredictionHistory:
    """Epoch-by-epoch predicted class ids for a fixed set of samples.

    Rows are appended strictly in epoch order by one trainer; afterwards
    the history is read-only and safe to share.
    """

    def __init__(self, sample_ids, class_count: int):
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        if sample_ids.ndim != 1 or len(sample_ids) == 0:
            raise ValueError("sample_ids must be a nonempty 1-D index list")
        if len(np.unique(sample_ids)) != len(sample_ids):
            raise ValueError("sample_ids contains duplicates")
        if int(class_count) < 1:
            raise ValueError("class_count must be positive")
        self.sample_ids = sample_ids.copy()
        self.class_count = int(class_count)
        self._rows: list[np.ndarray] = []

    @property
    def epochs_recorded(self) -> int:
        return len(self._rows)

    @property
    def predictions(self) -> np.ndarray:
        """Matrix of shape (epochs_recorded, n_tracked)."""
        if not self._rows:
            return np.empty((0, len(self.sample_ids)), dtype=np.int64)
        return np.vstack(self._rows)

    def record_snapshot(self, epoch: int, preds) -> None:
        """Append one epoch of predictions; epochs must arrive in order."""
        preds = np.asarray(preds, dtype=np.int64)
        if preds.shape != self.sample_ids.shape:
            raise ContractViolationError(
                f"snapshot width {preds.shape} does not match "
                f"{len(self.sample_ids)} tracked samples"
            )
        if int(epoch) != len(self._rows):
            raise ContractViolationError(
                f"snapshot for epoch {epoch} arrived out of order; expected "
                f"epoch {len(self._rows)}"
            )
        if preds.min() < 0 or preds.max() >= self.class_count:
            raise ContractViolationError(
                f"predicted class out of range for {self.class_count} classes"
            )
        self._rows.append(preds.copy())

    def write_csv(self, path_or_file) -> None:
        """Export as ``sample_id,epoch,predicted_class`` rows, sample-major."""
        if hasattr(path_or_file, "write"):
            self._write_csv(path_or_file)
        else:
            with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_CSV_HEADER)
        matrix = self.predictions
        for col, sample_id in enumerate(self.sample_ids):
            for epoch in range(len(matrix)):
                writer.writerow([int(sample_id), epoch, int(matrix[epoch, col])])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self._write_csv(buf)
        return buf.getvalue()


def modal_class(class_sequence, class_count: int) -> tuple[int, int]:
    """Most frequent class id in the sequence and its count.

    Ties break toward the lowest class id.
    """
    seq = np.asarray(class_sequence, dtype=np.int64)
    if seq.ndim != 1 or len(seq) == 0:
        raise ValueError("class_sequence must be a nonempty 1-D sequence")
    if seq.min() < 0 or seq.max() >= int(class_count):
        raise ValueError(f"class id out of range for {class_count} classes")
    counts = np.bincount(seq, minlength=int(class_count))
    c_star = int(np.argmax(counts))
    return c_star, int(counts[c_star])


def dispersion_scores(history: PredictionHistory) -> list[DispersionScore]:
    """Per-sample dispersion, in ``history.sample_ids`` order."""
    epochs = history.epochs_recorded
    if epochs == 0:
        raise EmptyHistoryError("cannot compute dispersion from an empty history")
    matrix = history.predictions
    scores = []
    for col, sample_id in enumerate(history.sample_ids):
        c_star, count = modal_class(matrix[:, col], history.class_count)
        scores.append(
            DispersionScore(
                sample_id=int(sample_id),
                modal_class=c_star,
                modal_count=count,
                dispersion=1.0 - count / epochs,
            )
        )
    return scores


def load_history_csv(path) -> PredictionHistory:
    """Rebuild a history from a :meth:`PredictionHistory.write_csv` file."""
    rows: dict[int, dict[int, int]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HISTORY_CSV_HEADER:
            raise ValueError(f"unexpected history header: {header}")
        for sample_id, epoch, pred in reader:
            rows.setdefault(int(sample_id), {})[int(epoch)] = int(pred)
    sample_ids = sorted(rows)
    epochs = sorted(rows[sample_ids[0]]) if sample_ids else []
    class_count = 1 + max(p for per in rows.values() for p in per.values())
    history = PredictionHistory(sample_ids, class_count)
    for epoch in epochs:
        history.record_snapshot(epoch, [rows[s][epoch] for s in sample_ids])
    return history
