"""Partitioned (map/reduce-style) execution of resampling runs on one
machine: stratified block assignment, independent per-block resampling,
and an order-insensitive union of the block results."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    PreconditionError,
    ResampleSpec,
    RngStream,
    STREAM_BLOCK,
    STREAM_PLAN,
)
from .knn import IndexConfig, make_engine
from .resample import ResampleResult, SyntheticOrigin, apply_resample


@dataclass(frozen=True)
class PartitionPlan:
    """Assignment of every sample id to exactly one block."""

    block_count: int
    assignment: dict[int, int]
    stratified: bool = True

    def block_ids(self, block: int) -> list[int]:
        return [i for i, b in self.assignment.items() if b == block]


def plan_partitions(
    dataset: Dataset, block_count: int, rng: RngStream
) -> PartitionPlan:
    """Stratified random assignment: each class is shuffled and dealt
    round-robin, which keeps every block's imbalance ratio close to the
    global one."""
    if block_count < 1:
        raise PreconditionError("block_count must be >= 1")
    if dataset.minority_count < block_count:
        raise PreconditionError(
            f"cannot spread {dataset.minority_count} minority samples over "
            f"{block_count} blocks; use block_count <= {dataset.minority_count}"
        )
    assignment: dict[int, int] = {}
    for cls, label in enumerate((True, False)):
        rows = np.flatnonzero(dataset.minority_mask == label)
        gen = rng.derive(STREAM_PLAN, cls).generator()
        perm = gen.permutation(len(rows))
        for i, r in enumerate(rows[perm]):
            assignment[int(dataset.ids[r])] = i % block_count
    return PartitionPlan(block_count=block_count, assignment=assignment)


def run_partitioned(
    dataset: Dataset,
    spec: ResampleSpec,
    plan: PartitionPlan,
    engine=None,
    index_config: IndexConfig | None = None,
    threads: int | None = None,
    stats_out: list | None = None,
) -> ResampleResult:
    """Map phase: resample each block independently on its own stream;
    reduce phase: union the outputs, re-keying synthetic ids globally.

    The result is a pure function of (dataset, spec, plan): block order
    and worker scheduling cannot change it.
    """
    if set(plan.assignment) != {int(i) for i in dataset.ids}:
        raise PreconditionError("plan does not cover exactly the dataset ids")

    id_to_row = {int(i): r for r, i in enumerate(dataset.ids)}
    grouped: list[list[int]] = [[] for _ in range(plan.block_count)]
    for sample_id, b in plan.assignment.items():
        grouped[b].append(sample_id)
    block_rows = []
    for b in range(plan.block_count):
        rows = np.array(
            [id_to_row[i] for i in sorted(grouped[b])], dtype=np.int64
        )
        if len(rows) == 0:
            raise PreconditionError(f"block {b} is empty")
        if not dataset.minority_mask[rows].any():
            raise PreconditionError(f"block {b} contains no minority samples")
        if len(rows) < spec.k + 1:
            raise PreconditionError(
                f"block {b} holds {len(rows)} samples; k={spec.k} needs at "
                f"least {spec.k + 1}"
            )
        block_rows.append(rows)

    base = RngStream(spec.seed)
    if engine is None:
        engine = make_engine(spec.engine, index_config)

    def run_block(b: int) -> ResampleResult:
        sub = dataset.subset(block_rows[b])
        t0 = time.perf_counter()
        try:
            res = apply_resample(
                sub, spec, engine=engine, rng=base.derive(STREAM_BLOCK, b)
            )
        except Exception as exc:
            raise PreconditionError(f"block {b}: {exc}") from exc
        if stats_out is not None:
            stats_out.append(
                {
                    "block": b,
                    "input_samples": int(len(block_rows[b])),
                    "removed": len(res.removed_ids),
                    "synthetic": res.synthetic_count,
                    "elapsed_ms": (time.perf_counter() - t0) * 1000.0,
                }
            )
        return res

    if plan.block_count == 1:
        results = [run_block(0)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, range(plan.block_count)))
    if stats_out is not None:
        stats_out.sort(key=lambda s: s["block"])

    # reduce: canonical union. Original survivors sorted by id, then
    # synthetics renumbered above the input's max id, block by block.
    removed = frozenset().union(*(r.removed_ids for r in results))
    survivor_rows = np.array(
        [r for r in range(dataset.m) if int(dataset.ids[r]) not in removed],
        dtype=np.int64,
    )
    survivor_rows = survivor_rows[np.argsort(dataset.ids[survivor_rows])]

    next_id = int(dataset.ids.max()) + 1
    synth_feats = []
    provenance: dict[int, SyntheticOrigin] = {}
    for res in results:
        out = res.output
        rows_by_id = {int(i): r for r, i in enumerate(out.ids)}
        for old_id in sorted(res.provenance):
            synth_feats.append(out.features[rows_by_id[old_id]])
            provenance[next_id] = res.provenance[old_id]
            next_id += 1

    feats = [dataset.features[survivor_rows]]
    masks = [dataset.minority_mask[survivor_rows]]
    ids = [dataset.ids[survivor_rows]]
    if synth_feats:
        feats.append(np.array(synth_feats, dtype=np.float64))
        masks.append(np.ones(len(synth_feats), dtype=bool))
        ids.append(
            np.arange(
                int(dataset.ids.max()) + 1, next_id, dtype=np.int64
            )
        )
    output = Dataset(
        np.concatenate(feats),
        np.concatenate(masks),
        np.concatenate(ids),
        name=dataset.name,
    )
    return ResampleResult(
        output=output,
        removed_ids=removed,
        synthetic_count=len(synth_feats),
        provenance=provenance,
    )
