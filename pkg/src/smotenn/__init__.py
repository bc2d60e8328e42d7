"""Resampling toolkit for imbalanced binary tabular data.

Combines random undersampling, edited-nearest-neighbor cleaning, and
SMOTE-style interpolation, including a single-pass hybrid that drives
both cleaning and synthesis from one shared neighborhood per minority
sample. Neighborhoods come from either an exact scan or a hybrid
metric/spill tree, runs can be partitioned map/reduce-style across
blocks, and an evaluation harness reproduces rank-based method
comparisons (Friedman + Iman-Davenport, Holm post-hoc).
"""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    Dataset,
    DatasetError,
    EngineKind,
    ImbalanceStats,
    Label,
    Method,
    ParseError,
    PreconditionError,
    ResampleSpec,
    RngStream,
    Sample,
    SmotennError,
    compute_imbalance,
    split_by_class,
)
from .ingest import ColumnSpec, normalize_minmax, parse_csv, parse_keel
from .knn import (
    IndexConfig,
    NeighborSet,
    SpillTreeIndex,
    brute_force_knn,
    build_index,
    query_index,
    recall_at_k,
)
from .partition import PartitionPlan, plan_partitions, run_partitioned
from .resample import (
    ResampleResult,
    SyntheticOrigin,
    apply_resample,
    compose,
    enn,
    rus,
    smote,
    smotenn,
)
from .evaluate import (
    ConfusionMatrix,
    RankReport,
    build_rank_report,
    cross_validate,
    friedman_iman_davenport,
    g_mean,
    holm_posthoc,
    knn_classify,
    wins_ties_losses,
)
