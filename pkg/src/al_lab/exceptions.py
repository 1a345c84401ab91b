"""Exception types shared across the package.

Plain ``ValueError`` is used for malformed user input (bad shapes, out of
range ids, unknown names); the classes below mark failure modes that
callers may want to catch specifically.
"""


class ActiveLearningError(Exception):
    """Base class for al-lab specific errors."""


class ConfigurationError(ActiveLearningError):
    """A configuration is internally inconsistent or unusable.

    Examples: a fraction that yields an empty pool, BALD requested on a
    model trained without dropout, margin scoring with fewer than two
    classes.
    """


class ContractViolationError(ActiveLearningError):
    """An API was driven outside its protocol.

    Examples: recording epoch snapshots out of order, running backward
    with a stale forward cache, selecting by dispersion with a history
    that is not aligned to the unlabeled pool.
    """


class EmptyHistoryError(ContractViolationError):
    """Dispersion was requested on a history with no recorded epochs."""


class TrainingDivergedError(ActiveLearningError):
    """Loss or gradients became non-finite during training."""


class CycleAbortedError(ActiveLearningError):
    """An interactive labeling cycle timed out.

    The run state is persisted before the engine blocks on the oracle,
    so an aborted run can be resumed from disk.
    """


class CsvFormatError(ActiveLearningError):
    """A CSV dataset file failed validation; the message names the line."""
