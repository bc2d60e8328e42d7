"""Evaluation harness: k-NN classification, the g-mean metric, stratified
cross-validation with leak-free per-fold preprocessing, and the
rank-based statistical comparison pipeline (Friedman test with the
Iman-Davenport correction, Holm step-down post-hoc, win/tie/loss counts
against the best-ranked method)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as st

from .core import (
    ConfigError,
    Dataset,
    EngineKind,
    Label,
    PreconditionError,
    ResampleSpec,
    RngStream,
    STREAM_EVAL,
    STREAM_FOLDS,
)
from .ingest import apply_minmax, normalize_minmax
from .knn import IndexConfig, make_engine
from .resample import apply_resample


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with the minority class as positive."""

    tp: int
    fn: int
    tn: int
    fp: int


def confusion(
    truth: list[Label] | np.ndarray, predicted: list[Label] | np.ndarray
) -> ConfusionMatrix:
    t = np.array([lab is Label.MINORITY for lab in truth])
    p = np.array([lab is Label.MINORITY for lab in predicted])
    return ConfusionMatrix(
        tp=int((t & p).sum()),
        fn=int((t & ~p).sum()),
        tn=int((~t & ~p).sum()),
        fp=int((~t & p).sum()),
    )


def g_mean(cm: ConfusionMatrix) -> float:
    """sqrt(sensitivity * specificity); undefined when a class is missing
    from the test side."""
    if cm.tp + cm.fn == 0 or cm.tn + cm.fp == 0:
        raise PreconditionError(
            "g-mean undefined: a class is absent from the test set"
        )
    sensitivity = cm.tp / (cm.tp + cm.fn)
    specificity = cm.tn / (cm.tn + cm.fp)
    return math.sqrt(sensitivity * specificity)


def knn_classify(
    train: Dataset,
    test_features: np.ndarray,
    k: int,
    engine=None,
    rng: RngStream | None = None,
) -> list[Label]:
    """Majority vote among the k nearest training samples; a tied vote
    (possible only for even k) goes to the minority class."""
    if train.m == 0:
        raise PreconditionError("empty training set")
    if k >= train.m:
        raise PreconditionError(f"k={k} must be < |train|={train.m}")
    if engine is None:
        engine = make_engine(EngineKind.EXACT)
    index = engine.build(train.features, train.ids, rng or RngStream(0))
    is_minority = {
        int(i): bool(b) for i, b in zip(train.ids, train.minority_mask)
    }
    out = []
    for q in np.asarray(test_features, dtype=np.float64):
        nbr_ids, _ = index.knn(q, k, exclude_id=-1)
        votes = sum(1 for i in nbr_ids if is_minority[int(i)])
        out.append(Label.MINORITY if 2 * votes >= k else Label.MAJORITY)
    return out


@dataclass
class CVResult:
    fold_gmeans: list[float]
    mean_gmean: float


def stratified_folds(dataset: Dataset, folds: int, rng: RngStream) -> np.ndarray:
    """Fold index per row: each class shuffled independently and dealt
    round-robin, so every fold keeps the global class balance. Depends on
    labels and the stream only, never on feature values."""
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if dataset.minority_count < folds:
        raise ConfigError(
            f"{folds}-fold stratification impossible with "
            f"{dataset.minority_count} minority samples"
        )
    fold_of = np.empty(dataset.m, dtype=np.int64)
    for cls, label in enumerate((True, False)):
        rows = np.flatnonzero(dataset.minority_mask == label)
        gen = rng.derive(STREAM_FOLDS, cls).generator()
        perm = gen.permutation(len(rows))
        fold_of[rows[perm]] = np.arange(len(rows)) % folds
    return fold_of


def cross_validate(
    dataset: Dataset,
    spec: ResampleSpec,
    folds: int,
    classify_k: int = 5,
    engine=None,
    index_config: IndexConfig | None = None,
    rng: RngStream | None = None,
) -> CVResult:
    """Stratified k-fold evaluation of a resampling spec.

    Per fold: min-max normalization is fitted on the training side only,
    the training side alone is resampled, and a k-NN classifier scores the
    untouched test fold with the g-mean.
    """
    rng = rng or RngStream(spec.seed)
    if engine is None:
        engine = make_engine(spec.engine, index_config)
    fold_of = stratified_folds(dataset, folds, rng)

    gmeans = []
    for f in range(folds):
        test_rows = np.flatnonzero(fold_of == f)
        train_rows = np.flatnonzero(fold_of != f)
        train = dataset.subset(train_rows)
        train_norm, specs = normalize_minmax(train)
        test_feats = apply_minmax(dataset.features[test_rows], specs)
        resampled = apply_resample(
            train_norm, spec, engine=engine, rng=rng.derive(STREAM_EVAL, f)
        )
        predicted = knn_classify(
            resampled.output, test_feats, classify_k, engine=engine,
            rng=rng.derive(STREAM_EVAL, f, 1),
        )
        truth = [
            Label.MINORITY if dataset.minority_mask[r] else Label.MAJORITY
            for r in test_rows
        ]
        gmeans.append(g_mean(confusion(truth, predicted)))
    return CVResult(fold_gmeans=gmeans, mean_gmean=float(np.mean(gmeans)))


# -- rank statistics ---------------------------------------------------------


@dataclass
class FriedmanResult:
    avg_ranks: np.ndarray
    chi2: float
    iman_davenport_f: float
    p_value: float


def friedman_iman_davenport(gmeans: np.ndarray) -> FriedmanResult:
    """Friedman rank test over a rows-by-methods score matrix (larger
    score = better = lower rank; ties get average ranks), with the
    Iman-Davenport F correction.

    chi2 = 12N/(k(k+1)) * (sum R_j^2 - k(k+1)^2/4)
    F    = (N-1) chi2 / (N(k-1) - chi2),  F ~ F(k-1, (k-1)(N-1))
    """
    gmeans = np.asarray(gmeans, dtype=np.float64)
    if gmeans.ndim != 2 or gmeans.shape[0] < 2 or gmeans.shape[1] < 2:
        raise PreconditionError("need at least 2 rows and 2 methods")
    n_rows, k = gmeans.shape
    ranks = np.vstack([st.rankdata(-row) for row in gmeans])
    avg_ranks = ranks.mean(axis=0)
    chi2 = (12.0 * n_rows / (k * (k + 1))) * (
        float((avg_ranks ** 2).sum()) - k * (k + 1) ** 2 / 4.0
    )
    # ties can push the raw statistic a hair below zero
    chi2 = max(chi2, 0.0)
    denom = n_rows * (k - 1) - chi2
    if denom <= 0:
        f_stat = math.inf
        p = 0.0
    else:
        f_stat = (n_rows - 1) * chi2 / denom
        p = float(st.f.sf(f_stat, k - 1, (k - 1) * (n_rows - 1)))
    return FriedmanResult(
        avg_ranks=avg_ranks, chi2=chi2, iman_davenport_f=f_stat, p_value=p
    )


@dataclass(frozen=True)
class HolmComparison:
    method: str
    rank: float
    z: float
    p_value: float
    threshold: float
    reject: bool


def holm_posthoc(
    method_names: list[str],
    avg_ranks: np.ndarray,
    n_rows: int,
    alpha: float = 0.05,
) -> tuple[str, list[HolmComparison]]:
    """Step-down Holm comparisons of every method against the best-ranked
    control.

    z_j = (R_j - R_control) / sqrt(k(k+1)/(6N)), one-sided normal tail;
    the i-th smallest p faces alpha/(m-i+1) and rejection stops at the
    first non-rejected hypothesis. Returned in ascending-rank order (the
    usual table layout: best competitor first, against alpha/1).
    """
    avg_ranks = np.asarray(avg_ranks, dtype=np.float64)
    k = len(method_names)
    if k != len(avg_ranks):
        raise PreconditionError("method names and ranks differ in length")
    control_idx = int(np.argmin(avg_ranks))
    control = method_names[control_idx]
    se = math.sqrt(k * (k + 1) / (6.0 * n_rows))

    comps = []
    for j, name in enumerate(method_names):
        if j == control_idx:
            continue
        z = (avg_ranks[j] - avg_ranks[control_idx]) / se
        comps.append((name, float(avg_ranks[j]), float(z), float(st.norm.sf(z))))
    # p is strictly decreasing in rank, so the conventional table layout
    # (ascending rank, thresholds alpha/1 .. alpha/m) lists the step-down
    # sequence in reverse: walking it bottom-up visits p ascending against
    # its matching threshold.
    comps.sort(key=lambda c: (c[1], c[0]))
    m = len(comps)
    thresholds = [alpha / (j + 1) for j in range(m)]

    reject_flags = [False] * m
    for i in range(m - 1, -1, -1):
        if comps[i][3] < thresholds[i]:
            reject_flags[i] = True
        else:
            break  # first failure: everything with larger p stays unrejected

    result = [
        HolmComparison(
            method=name,
            rank=rank,
            z=z,
            p_value=p,
            threshold=thresholds[i],
            reject=reject_flags[i],
        )
        for i, (name, rank, z, p) in enumerate(comps)
    ]
    return control, result


def wins_ties_losses(
    gmeans: np.ndarray, control_col: int
) -> list[tuple[int, int, int]]:
    """Per method: rows won / tied / lost against the control column."""
    gmeans = np.asarray(gmeans, dtype=np.float64)
    control = gmeans[:, control_col]
    out = []
    for j in range(gmeans.shape[1]):
        col = gmeans[:, j]
        wins = int((col > control).sum())
        ties = int((col == control).sum())
        losses = int((col < control).sum())
        out.append((wins, ties, losses))
    return out


@dataclass
class RankReport:
    method_names: list[str]
    avg_ranks: list[float]
    n_rows: int
    alpha: float
    friedman_chi2: float
    iman_davenport_f: float
    friedman_p: float
    control: str
    holm: list[HolmComparison]
    wtl: list[tuple[int, int, int]]

    def rank_of(self, method: str) -> float:
        return self.avg_ranks[self.method_names.index(method)]

    def wtl_of(self, method: str) -> tuple[int, int, int]:
        return self.wtl[self.method_names.index(method)]


def build_rank_report(
    gmeans: np.ndarray, method_names: list[str], alpha: float = 0.05
) -> RankReport:
    fr = friedman_iman_davenport(gmeans)
    control, holm = holm_posthoc(method_names, fr.avg_ranks, len(gmeans), alpha)
    control_col = method_names.index(control)
    return RankReport(
        method_names=list(method_names),
        avg_ranks=[float(r) for r in fr.avg_ranks],
        n_rows=len(gmeans),
        alpha=alpha,
        friedman_chi2=fr.chi2,
        iman_davenport_f=fr.iman_davenport_f,
        friedman_p=fr.p_value,
        control=control,
        holm=holm,
        wtl=wins_ties_losses(gmeans, control_col),
    )


# -- fixture matrices --------------------------------------------------------


def load_gmean_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """One score matrix: first column is the row label, remaining columns
    are method scores. Returns (row_labels, method_names, matrix)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        methods = [h.strip() for h in header[1:]]
        labels, rows = [], []
        for record in reader:
            if not record:
                continue
            labels.append(record[0].strip())
            rows.append([float(v) for v in record[1:]])
    return labels, methods, np.array(rows, dtype=np.float64)


def load_gmean_dir(directory: str | Path):
    """Concatenate every CSV matrix in a directory (sorted by filename);
    all files must share one method set, which is reordered to the first
    file's column order."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise ConfigError(f"no fixture CSVs found in {directory}")
    all_labels: list[str] = []
    methods: list[str] | None = None
    blocks = []
    for f in files:
        labels, file_methods, matrix = load_gmean_csv(f)
        if methods is None:
            methods = file_methods
        else:
            if set(file_methods) != set(methods):
                raise ConfigError(
                    f"{f}: method columns {file_methods} do not match {methods}"
                )
            matrix = matrix[:, [file_methods.index(m) for m in methods]]
        blocks.append(matrix)
        all_labels.extend(f"{f.stem}:{lab}" for lab in labels)
    return all_labels, methods, np.vstack(blocks)


# -- rendering ---------------------------------------------------------------


def report_to_dict(report: RankReport) -> dict:
    return {
        "n_rows": report.n_rows,
        "alpha": report.alpha,
        "friedman_chi2": report.friedman_chi2,
        "iman_davenport_f": report.iman_davenport_f,
        "friedman_p": report.friedman_p,
        "control": report.control,
        "methods": [
            {
                "method": m,
                "avg_rank": report.avg_ranks[i],
                "wins_ties_losses": list(report.wtl[i]),
            }
            for i, m in enumerate(report.method_names)
        ],
        "holm": [
            {
                "method": c.method,
                "rank": c.rank,
                "z": c.z,
                "p_value": c.p_value,
                "threshold": c.threshold,
                "decision": "reject" if c.reject else "not reject",
            }
            for c in report.holm
        ],
    }


def report_to_json(report: RankReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


def report_to_markdown(report: RankReport) -> str:
    lines = [
        f"# Rank comparison over {report.n_rows} experiments",
        "",
        f"Friedman chi2 = {report.friedman_chi2:.4g}, "
        f"Iman-Davenport F = {report.iman_davenport_f:.4g}, "
        f"p = {report.friedman_p:.3g}",
        "",
        f"Control (best rank): **{report.control}**",
        "",
        "| Method | Rank | Holm p | alpha/(j-1) | outcome | W/T/L |",
        "|--------|------|--------|-------------|---------|-------|",
    ]
    ctl = report.method_names.index(report.control)
    lines.append(
        f"| {report.control} | {report.avg_ranks[ctl]:.2f} | - | - | - | - |"
    )
    for c in report.holm:
        w, t, l = report.wtl_of(c.method)
        outcome = "reject" if c.reject else "not reject"
        lines.append(
            f"| {c.method} | {c.rank:.2f} | {c.p_value:.3g} | "
            f"{c.threshold:.3f} | {outcome} | {w}/{t}/{l} |"
        )
    return "\n".join(lines) + "\n"
