"""Resampling operations for imbalanced binary data.

Provides random undersampling (RUS), iterated edited-nearest-neighbor
cleaning (ENN), synthetic minority oversampling (SMOTE), their two-stage
compositions, and the single-pass hybrid that shares one mixed-class
neighborhood per minority sample between the cleaning and synthesis steps.

Randomness discipline: every operation takes an RngStream and routes each
class of draw through a labeled child stream (STREAM_RUS for the majority
permutation, STREAM_DRAW keyed by sample id for per-sample synthesis,
STREAM_INDEX for tree pivots). Results are therefore a pure function of
(dataset, parameters, stream), independent of execution order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    Dataset,
    Label,
    Method,
    PreconditionError,
    ResampleSpec,
    RngStream,
    STREAM_BLOCK,
    STREAM_DRAW,
    STREAM_RUS,
    STREAM_STAGE,
)
from .knn import IndexConfig, make_engine


@dataclass(frozen=True)
class SyntheticOrigin:
    """How one synthetic sample was produced: parent + u * (neighbor - parent)."""

    parent_id: int
    neighbor_id: int
    u: float


@dataclass
class ResampleResult:
    """Outcome of a resampling run.

    removed_ids covers every dropped original sample (random undersampling
    and neighborhood cleaning alike); provenance maps each synthetic id to
    its construction recipe, from which its coordinates are re-derivable.
    """

    output: Dataset
    removed_ids: frozenset[int]
    synthetic_count: int
    provenance: dict[int, SyntheticOrigin]

    def synthetic_ids(self) -> list[int]:
        return sorted(self.provenance)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _rus_survivor_rows(dataset: Dataset, p_ratio: float, rng: RngStream):
    """Rows surviving random undersampling of the majority class.

    Keeps round(p_ratio * minority_count) majority samples (at least one,
    at most all of them), chosen uniformly without replacement; returns
    (survivor_rows, removed_ids) with survivors in dataset order.
    """
    maj_rows = np.flatnonzero(~dataset.minority_mask)
    minority_count = dataset.minority_count
    keep = _round_half_up(p_ratio * minority_count)
    keep = max(1, min(keep, len(maj_rows)))
    gen = rng.derive(STREAM_RUS).generator()
    perm = gen.permutation(len(maj_rows))
    kept = set(maj_rows[perm[:keep]].tolist())
    survivors = np.array(
        [r for r in range(dataset.m) if dataset.minority_mask[r] or r in kept],
        dtype=np.int64,
    )
    removed = frozenset(
        int(dataset.ids[r]) for r in maj_rows if r not in kept
    )
    return survivors, removed


def rus(dataset: Dataset, p_ratio: float, rng: RngStream) -> ResampleResult:
    """Random undersampling of the majority class to a p_ratio : 1
    majority:minority target. The cap at the existing majority count makes
    the operation total; removal cannot upsample."""
    if p_ratio <= 0:
        raise PreconditionError("p_ratio must be > 0")
    survivors, removed = _rus_survivor_rows(dataset, p_ratio, rng)
    return ResampleResult(
        output=dataset.subset(survivors),
        removed_ids=removed,
        synthetic_count=0,
        provenance={},
    )


def enn(
    dataset: Dataset,
    k: int,
    target_ir: float | None,
    engine,
    rng: RngStream,
) -> ResampleResult:
    """Iterated edited-nearest-neighbor undersampling.

    Each pass marks every remaining majority sample whose k-NN vote (over
    the remaining data, self excluded) is strictly minority (an even-k tie
    keeps the sample), then removes all marks at once, so the result does
    not depend on scan order. Stops at the target imbalance ratio, at a
    fixpoint, or before a pass would push the majority class below the
    minority count.
    """
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if target_ir is not None and target_ir < 1:
        raise PreconditionError("target_ir must be >= 1")

    remaining = np.arange(dataset.m)
    removed: list[int] = []
    minority_count = dataset.minority_count

    while True:
        maj_local = np.flatnonzero(~dataset.minority_mask[remaining])
        if len(maj_local) == 0 or len(remaining) <= k:
            break
        ir = len(maj_local) / minority_count
        if target_ir is not None and ir <= target_ir:
            break

        pts = dataset.features[remaining]
        ids = dataset.ids[remaining]
        mask = dataset.minority_mask[remaining]
        index = engine.build(pts, ids, rng)
        is_minority = {int(i): bool(b) for i, b in zip(ids, mask)}

        marked = []
        for local in maj_local:
            nbr_ids, _ = index.knn(pts[local], k, exclude_id=int(ids[local]))
            votes = sum(1 for i in nbr_ids if is_minority[int(i)])
            if votes > k / 2:
                marked.append(local)
        if not marked:
            break
        if len(maj_local) - len(marked) < minority_count:
            break
        removed.extend(int(ids[i]) for i in marked)
        keep = np.ones(len(remaining), dtype=bool)
        keep[marked] = False
        remaining = remaining[keep]

    return ResampleResult(
        output=dataset.subset(remaining),
        removed_ids=frozenset(removed),
        synthetic_count=0,
        provenance={},
    )


def _draw_synthetics(
    parent_id: int,
    parent: np.ndarray,
    neighbor_ids: list[int],
    neighbor_feats: dict[int, np.ndarray],
    n_draws: int,
    rng: RngStream,
    fixed_u: float | None,
):
    """The interpolation loop: pick a neighbor uniformly, draw u, emit
    parent + u * (neighbor - parent), remove the neighbor, repeat.

    One labeled stream per parent sample keeps the draws independent of
    which worker handles the sample.
    """
    gen = rng.derive(STREAM_DRAW, parent_id).generator()
    pool = list(neighbor_ids)
    out = []
    for _ in range(min(n_draws, len(pool))):
        pick = int(gen.integers(len(pool)))
        u = float(gen.random()) if fixed_u is None else fixed_u
        nbr_id = pool.pop(pick)
        nbr = neighbor_feats[nbr_id]
        feats = parent + u * (nbr - parent)
        out.append((feats, SyntheticOrigin(parent_id, nbr_id, u)))
    return out


def _append_synthetics(dataset: Dataset, survivors: np.ndarray, synths):
    """Assemble the output dataset: surviving originals in dataset order,
    then synthetic minority samples with fresh ids above the input's max."""
    next_id = int(dataset.ids.max()) + 1
    feats = [dataset.features[survivors]]
    masks = [dataset.minority_mask[survivors]]
    ids = [dataset.ids[survivors]]
    provenance: dict[int, SyntheticOrigin] = {}
    if synths:
        feats.append(np.array([f for f, _ in synths], dtype=np.float64))
        masks.append(np.ones(len(synths), dtype=bool))
        new_ids = np.arange(next_id, next_id + len(synths), dtype=np.int64)
        ids.append(new_ids)
        for i, (_, origin) in zip(new_ids, synths):
            provenance[int(i)] = origin
    out = Dataset(
        np.concatenate(feats),
        np.concatenate(masks),
        np.concatenate(ids),
        name=dataset.name,
    )
    return out, provenance


def smote(
    dataset: Dataset,
    k: int,
    n_oversample: int,
    engine,
    rng: RngStream,
    fixed_u: float | None = None,
) -> ResampleResult:
    """Classic minority oversampling: for each minority sample, draw
    n_oversample of its k nearest minority neighbors without replacement
    and emit one interpolated synthetic per draw. Grows the minority class
    to minority_count * (n_oversample + 1); the majority is untouched."""
    if n_oversample >= k:
        raise PreconditionError(
            f"oversampling amount must stay below the neighborhood size "
            f"(n={n_oversample}, k={k})"
        )
    min_rows = np.flatnonzero(dataset.minority_mask)
    if len(min_rows) <= k:
        raise PreconditionError(
            f"SMOTE needs more than k={k} minority samples; found {len(min_rows)}"
        )
    min_pts = dataset.features[min_rows]
    min_ids = dataset.ids[min_rows]
    index = engine.build(min_pts, min_ids, rng)
    feats_by_id = {int(i): dataset.features[r] for i, r in zip(min_ids, min_rows)}

    synths = []
    for local, row in enumerate(min_rows):
        pid = int(min_ids[local])
        nbr_ids, _ = index.knn(min_pts[local], k, exclude_id=pid)
        synths.extend(
            _draw_synthetics(
                pid,
                dataset.features[row],
                [int(i) for i in nbr_ids],
                feats_by_id,
                n_oversample,
                rng,
                fixed_u,
            )
        )
    output, provenance = _append_synthetics(
        dataset, np.arange(dataset.m), synths
    )
    return ResampleResult(
        output=output,
        removed_ids=frozenset(),
        synthetic_count=len(synths),
        provenance=provenance,
    )


def smotenn(
    dataset: Dataset,
    spec: ResampleSpec,
    engine,
    rng: RngStream,
) -> ResampleResult:
    """Single-pass hybrid undersampling/oversampling.

    After randomly undersampling the majority class to spec.p_ratio, one
    mixed-class K-neighborhood is computed per minority sample against the
    post-undersampling snapshot. Where strictly more than K/2 neighbors
    are minority, the majority neighbors enter the removal set and up to
    spec.n_oversample synthetics are interpolated toward the remaining
    minority neighbors. All removals are applied at the end, so every
    neighborhood sees the same snapshot and the per-sample work can be
    distributed freely.
    """
    if spec.method is not Method.SMOTENN:
        raise PreconditionError("spec.method must be SMOTENN")
    if dataset.minority_count < 2:
        raise PreconditionError(
            "hybrid resampling needs at least two minority samples"
        )

    survivors, rus_removed = _rus_survivor_rows(dataset, spec.p_ratio, rng)
    if len(survivors) <= spec.k:
        raise PreconditionError(
            f"k={spec.k} must be below the post-undersampling sample count "
            f"{len(survivors)}"
        )

    pts = dataset.features[survivors]
    ids = dataset.ids[survivors]
    mask = dataset.minority_mask[survivors]
    index = engine.build(pts, ids, rng)
    minority_id_set = {int(i) for i, b in zip(ids, mask) if b}
    feats_by_id = {
        int(i): dataset.features[r] for i, r in zip(ids, survivors)
    }

    cleanup: set[int] = set()
    synths = []
    for local in np.flatnonzero(mask):
        pid = int(ids[local])
        nbr_ids, _ = index.knn(pts[local], spec.k, exclude_id=pid)
        nbr_ids = [int(i) for i in nbr_ids]
        minority_votes = sum(1 for i in nbr_ids if i in minority_id_set)
        if minority_votes <= spec.k / 2:
            continue
        cleanup.update(i for i in nbr_ids if i not in minority_id_set)
        pool = [i for i in nbr_ids if i in minority_id_set]
        synths.extend(
            _draw_synthetics(
                pid,
                feats_by_id[pid],
                pool,
                feats_by_id,
                spec.n_oversample,
                rng,
                spec.fixed_u,
            )
        )

    final_rows = np.array(
        [r for r in survivors if int(dataset.ids[r]) not in cleanup],
        dtype=np.int64,
    )
    output, provenance = _append_synthetics(dataset, final_rows, synths)
    return ResampleResult(
        output=output,
        removed_ids=rus_removed | frozenset(cleanup),
        synthetic_count=len(synths),
        provenance=provenance,
    )


def compose(
    dataset: Dataset,
    spec: ResampleSpec,
    engine,
    rng: RngStream,
) -> ResampleResult:
    """Two-stage pipelines: undersample (RUS or ENN) on one child stream,
    then SMOTE the survivors on another; removals and provenance merge."""
    if spec.method is Method.RUS_SMOTE:
        first = rus(dataset, spec.p_ratio, rng.derive(STREAM_STAGE, 1))
    elif spec.method is Method.ENN_SMOTE:
        first = enn(
            dataset, spec.k, spec.target_ir, engine, rng.derive(STREAM_STAGE, 1)
        )
    else:
        raise PreconditionError(
            "compose handles RUS_SMOTE and ENN_SMOTE only"
        )
    second = smote(
        first.output,
        spec.k,
        spec.n_oversample,
        engine,
        rng.derive(STREAM_STAGE, 2),
        spec.fixed_u,
    )
    return ResampleResult(
        output=second.output,
        removed_ids=first.removed_ids | second.removed_ids,
        synthetic_count=second.synthetic_count,
        provenance=second.provenance,
    )


def apply_resample(
    dataset: Dataset,
    spec: ResampleSpec,
    engine=None,
    rng: RngStream | None = None,
    index_config: IndexConfig | None = None,
) -> ResampleResult:
    """Dispatch a spec to its method. The default stream is the one a
    single-block partitioned run would use, so a one-block run and a direct
    call are interchangeable."""
    if engine is None:
        engine = make_engine(spec.engine, index_config)
    if rng is None:
        rng = RngStream(spec.seed).derive(STREAM_BLOCK, 0)

    if spec.method is Method.NONE:
        return ResampleResult(
            output=dataset.subset(np.arange(dataset.m)),
            removed_ids=frozenset(),
            synthetic_count=0,
            provenance={},
        )
    if spec.method is Method.RUS:
        return rus(dataset, spec.p_ratio, rng)
    if spec.method is Method.ENN:
        return enn(dataset, spec.k, spec.target_ir, engine, rng)
    if spec.method is Method.SMOTE:
        return smote(
            dataset, spec.k, spec.n_oversample, engine, rng, spec.fixed_u
        )
    if spec.method in (Method.RUS_SMOTE, Method.ENN_SMOTE):
        return compose(dataset, spec, engine, rng)
    if spec.method is Method.SMOTENN:
        return smotenn(dataset, spec, engine, rng)
    raise PreconditionError(f"unhandled method {spec.method!r}")


# -- audit serialization -----------------------------------------------------


def write_result_csv(result: ResampleResult, path: str | Path) -> None:
    """Resampled dataset as CSV with stable ids and a synthetic flag, so
    rows can be joined against the provenance sidecar."""
    ds = result.output
    synthetic = set(result.provenance)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id"]
            + [f"f{i}" for i in range(ds.n)]
            + ["class", "synthetic"]
        )
        for row in range(ds.m):
            label = (
                Label.MINORITY if ds.minority_mask[row] else Label.MAJORITY
            )
            writer.writerow(
                [int(ds.ids[row])]
                + [repr(float(v)) for v in ds.features[row]]
                + [label.value, int(int(ds.ids[row]) in synthetic)]
            )


def sidecar_dict(result: ResampleResult, spec: ResampleSpec) -> dict:
    return {
        "spec": spec_dict(spec),
        "removed_ids": sorted(result.removed_ids),
        "synthetic_count": result.synthetic_count,
        "provenance": {
            str(sid): {
                "parent_id": o.parent_id,
                "neighbor_id": o.neighbor_id,
                "u": o.u,
            }
            for sid, o in sorted(result.provenance.items())
        },
    }


def spec_dict(spec: ResampleSpec) -> dict:
    return {
        "method": spec.method.value,
        "k": spec.k,
        "n_oversample": spec.n_oversample,
        "p_ratio": spec.p_ratio,
        "seed": spec.seed,
        "engine": spec.engine.value,
        "partitions": spec.partitions,
        "target_ir": spec.target_ir,
        "fixed_u": spec.fixed_u,
    }


def write_sidecar(result: ResampleResult, spec: ResampleSpec,
                  path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(sidecar_dict(result, spec), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
