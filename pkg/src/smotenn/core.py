"""Core domain types: labels, samples, datasets, imbalance bookkeeping,
resampling configuration, and the seeded random-stream contract shared by
every other module."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


class SmotennError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(SmotennError):
    """Structural problem with a dataset (degenerate classes, bad shapes)."""


class ParseError(SmotennError):
    """Malformed input file; message carries the offending line/row."""


class ConfigError(SmotennError):
    """Invalid or contradictory configuration."""


class PreconditionError(SmotennError):
    """An algorithm's precondition does not hold for the given inputs."""


class Label(Enum):
    MINORITY = "minority"
    MAJORITY = "majority"


class Method(Enum):
    """Resampling methods. NONE is the pass-through baseline."""

    NONE = "none"
    RUS = "rus"
    ENN = "enn"
    SMOTE = "smote"
    RUS_SMOTE = "rus_smote"
    ENN_SMOTE = "enn_smote"
    SMOTENN = "smotenn"


class EngineKind(Enum):
    EXACT = "exact"
    SPILL_TREE = "spilltree"


#: Methods whose oversampling stage requires ``n_oversample < k``.
_SMOTE_METHODS = frozenset(
    {Method.SMOTE, Method.RUS_SMOTE, Method.ENN_SMOTE, Method.SMOTENN}
)


@dataclass(frozen=True)
class Sample:
    """One labeled feature vector. ``id`` is stable across resampling for
    original (non-synthetic) samples."""

    id: int
    features: np.ndarray
    label: Label

    @property
    def is_minority(self) -> bool:
        return self.label is Label.MINORITY


class Dataset:
    """Immutable table of feature vectors with binary labels.

    Stored column-major friendly as numpy arrays; ``samples`` materializes
    `Sample` views on demand. Feature matrices are marked read-only so a
    dataset can be shared freely across worker threads.
    """

    def __init__(
        self,
        features: np.ndarray,
        minority_mask: np.ndarray,
        ids: np.ndarray | None = None,
        name: str = "",
    ):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError("feature matrix must be 2-D")
        m = features.shape[0]
        if m < 1:
            raise DatasetError("dataset is empty")
        if not np.isfinite(features).all():
            raise DatasetError("features contain NaN or Inf")
        minority_mask = np.asarray(minority_mask, dtype=bool)
        if minority_mask.shape != (m,):
            raise DatasetError("label mask length does not match sample count")
        if ids is None:
            ids = np.arange(m, dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape != (m,):
                raise DatasetError("id vector length does not match sample count")
            if len(np.unique(ids)) != m:
                raise DatasetError("sample ids are not unique")
        features.flags.writeable = False
        minority_mask.flags.writeable = False
        ids.flags.writeable = False
        self.features = features
        self.minority_mask = minority_mask
        self.ids = ids
        self.name = name

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], name: str = "") -> "Dataset":
        samples = list(samples)
        feats = np.array([s.features for s in samples], dtype=np.float64)
        mask = np.array([s.is_minority for s in samples], dtype=bool)
        ids = np.array([s.id for s in samples], dtype=np.int64)
        return cls(feats, mask, ids, name=name)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def minority_count(self) -> int:
        return int(self.minority_mask.sum())

    @property
    def majority_count(self) -> int:
        return self.m - self.minority_count

    @property
    def samples(self) -> tuple[Sample, ...]:
        labels = np.where(self.minority_mask, Label.MINORITY, Label.MAJORITY)
        return tuple(
            Sample(int(i), f, lab)
            for i, f, lab in zip(self.ids, self.features, labels)
        )

    def sample_at(self, row: int) -> Sample:
        label = Label.MINORITY if self.minority_mask[row] else Label.MAJORITY
        return Sample(int(self.ids[row]), self.features[row], label)

    def subset(self, rows: np.ndarray, name: str | None = None) -> "Dataset":
        """New dataset containing the given rows (ids preserved)."""
        rows = np.asarray(rows)
        return Dataset(
            self.features[rows].copy(),
            self.minority_mask[rows].copy(),
            self.ids[rows].copy(),
            name=self.name if name is None else name,
        )

    def row_of(self, sample_id: int) -> int:
        rows = np.flatnonzero(self.ids == sample_id)
        if len(rows) == 0:
            raise KeyError(f"no sample with id {sample_id}")
        return int(rows[0])

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return (
            f"Dataset(name={self.name!r}, m={self.m}, n={self.n}, "
            f"minority={self.minority_count}, majority={self.majority_count})"
        )


def validate_two_class(dataset: Dataset) -> None:
    """Ingestion-level invariants: at least two samples and both classes."""
    if dataset.m < 2:
        raise DatasetError("degenerate dataset: fewer than two samples")
    if dataset.minority_count == 0 or dataset.majority_count == 0:
        raise DatasetError("degenerate dataset: one class absent")


@dataclass(frozen=True)
class ImbalanceStats:
    minority_count: int
    majority_count: int
    ir: float


def compute_imbalance(dataset: Dataset) -> ImbalanceStats:
    """Class counts and imbalance ratio (majority size / minority size).

    Raises DatasetError when one class is absent. Resampled outputs may
    legitimately have ir < 1 (oversampling); ingestion enforces ir >= 1.
    """
    mi = dataset.minority_count
    ma = dataset.majority_count
    if mi == 0 or ma == 0:
        raise DatasetError("degenerate dataset: one class absent")
    return ImbalanceStats(minority_count=mi, majority_count=ma, ir=ma / mi)


def split_by_class(dataset: Dataset) -> tuple[list[Sample], list[Sample]]:
    """Partition into (minority, majority) sample lists, dataset order kept."""
    minority: list[Sample] = []
    majority: list[Sample] = []
    for row in range(dataset.m):
        s = dataset.sample_at(row)
        (minority if s.is_minority else majority).append(s)
    return minority, majority


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based, splittable random stream.

    A stream is a pure value: ``generator()`` always yields the same
    sequence for equal ``(seed, stream_id)``, and ``derive()`` produces
    statistically independent child streams, so partitioned runs are
    deterministic regardless of worker scheduling.
    """

    seed: int
    stream_id: int = 0

    def derive(self, *path: int) -> "RngStream":
        """Child stream keyed by a path of integer labels."""
        sid = self.stream_id & _MASK64
        for label in path:
            sid = _splitmix64(sid ^ _splitmix64(label & _MASK64))
        return RngStream(self.seed, sid)

    def generator(self) -> np.random.Generator:
        key = [self.seed & _MASK64, self.stream_id & _MASK64]
        return np.random.Generator(np.random.Philox(key=key))


# Stream derivation labels. These are part of the reproducibility contract:
# a resampling run with a given seed always routes draws through the same
# labeled child streams, independent of execution order.
STREAM_BLOCK = 1  # per partition block: derive(STREAM_BLOCK, block_index)
STREAM_RUS = 2  # the majority-permutation draw of random undersampling
STREAM_INDEX = 3  # spill-tree pivot selection during index builds
STREAM_DRAW = 4  # per-minority-sample synthesis: derive(STREAM_DRAW, sample_id)
STREAM_PLAN = 5  # partition planning shuffles
STREAM_STAGE = 6  # composed methods: derive(STREAM_STAGE, stage_number)
STREAM_FOLDS = 7  # cross-validation fold assignment
STREAM_EVAL = 8  # per-fold resampling inside cross-validation


@dataclass(frozen=True)
class ResampleSpec:
    """Full configuration of a resampling run.

    ``p_ratio`` is the post-undersampling majority:minority ratio (p=3
    keeps three majority samples per minority sample). ``target_ir`` is
    the stopping ratio for the iterated-cleaning stage; None runs it to
    fixpoint. ``fixed_u`` pins the interpolation factor instead of drawing
    it per synthetic, for reproducing hand examples.
    """

    method: Method
    k: int = 5
    n_oversample: int = 1
    p_ratio: float = 1.0
    seed: int = 0
    engine: EngineKind = EngineKind.EXACT
    partitions: int = 1
    target_ir: float | None = None
    fixed_u: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n_oversample < 0:
            raise ConfigError("n_oversample must be >= 0")
        if self.method in _SMOTE_METHODS and self.n_oversample >= self.k:
            raise ConfigError(
                f"oversampling amount must stay below the neighborhood size "
                f"(n={self.n_oversample}, k={self.k})"
            )
        if self.p_ratio <= 0:
            raise ConfigError("p_ratio must be > 0")
        if self.partitions < 1:
            raise ConfigError("partitions must be >= 1")
        if self.target_ir is not None and self.target_ir < 1:
            raise ConfigError("target_ir must be >= 1")
        if self.fixed_u is not None and not (0.0 <= self.fixed_u <= 1.0):
            raise ConfigError("fixed_u must lie in [0, 1]")
