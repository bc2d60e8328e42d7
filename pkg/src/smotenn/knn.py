"""k-nearest-neighbor search with two engines: an exact brute-force scan
and a hybrid metric/spill tree.

The tree mixes two split types. A metric split sends each point to exactly
one child and supports backtracking with the usual boundary prune test. A
spill split lets the children overlap in a band of half-width tau around
the median boundary and is searched defeatist-style (no backtracking), so
wide overlaps buy recall instead of revisits. A node falls back to a
metric split whenever either overlapping child would exceed rho times the
node's population, which also bounds the tree depth.

Neighbor ordering is always by (distance, sample id): equal distances
resolve to the smaller id, which makes exact/approximate equivalence
testable bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    PreconditionError,
    RngStream,
    Sample,
    STREAM_INDEX,
)


@dataclass(frozen=True)
class NeighborSet:
    """k nearest neighbors of one query: (sample id, Euclidean distance)
    pairs, ascending by distance, self-match excluded."""

    query_id: int
    neighbors: tuple[tuple[int, float], ...]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.neighbors)


@dataclass(frozen=True)
class IndexConfig:
    """Spill-tree construction parameters.

    tau is the overlap half-width as a fraction of each node's projected
    spread (0 disables overlap entirely); rho is the balance factor that
    forces a metric split when an overlapping child would hold more than
    rho * |node| points. defeatist_search=True disables backtracking at
    metric nodes too, making every query a single root-to-leaf descent.
    """

    tau: float = 0.1
    rho: float = 0.7
    leaf_size: int = 32
    defeatist_search: bool = False

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError("rho must lie in [0, 1)")
        if self.leaf_size < 1:
            raise ConfigError("leaf_size must be >= 1")


class _Node:
    __slots__ = ("axis", "boundary", "overlap", "left", "right", "rows",
                 "pts", "ids")

    def __init__(self, axis=None, boundary=0.0, overlap=False,
                 left=None, right=None, rows=None, pts=None, ids=None):
        self.axis = axis
        self.boundary = boundary
        self.overlap = overlap
        self.left = left
        self.right = right
        self.rows = rows  # leaf row indices, None for internal nodes
        self.pts = pts  # leaf points, contiguous copy for fast scans
        self.ids = ids

    @property
    def is_leaf(self) -> bool:
        return self.rows is not None


def _dist2(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = points - q
    return np.einsum("ij,ij->i", diff, diff)


class ExactIndex:
    """Brute-force scan; the oracle the spill tree is measured against."""

    def __init__(self, points: np.ndarray, ids: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.point_count = len(self.ids)

    def knn(self, q: np.ndarray, k: int, exclude_id: int = -1):
        """Indices and squared distances of the exact k nearest neighbors."""
        keep = self.ids != exclude_id
        avail = int(keep.sum())
        if k > avail:
            raise PreconditionError(
                f"k={k} exceeds the {avail} available neighbors"
            )
        d2 = _dist2(self.points[keep], q)
        ids = self.ids[keep]
        order = np.lexsort((ids, d2))[:k]
        return ids[order], d2[order]


class SpillTreeIndex:
    """Hybrid metric/spill tree over one dataset partition."""

    def __init__(
        self,
        points: np.ndarray,
        ids: np.ndarray,
        config: IndexConfig | None = None,
        rng: RngStream | None = None,
    ):
        points = np.asarray(points, dtype=np.float64)
        ids = np.asarray(ids, dtype=np.int64)
        if len(points) == 0:
            raise PreconditionError("cannot build an index over an empty partition")
        self.points = points
        self.ids = ids
        self.config = config or IndexConfig()
        self.point_count = len(ids)
        rng = rng or RngStream(0)
        self.root = self._build(np.arange(self.point_count), rng)

    # -- construction ------------------------------------------------------

    def _leaf(self, rows: np.ndarray) -> _Node:
        return _Node(rows=rows, pts=self.points[rows].copy(),
                     ids=self.ids[rows].copy())

    def _build(self, rows: np.ndarray, stream: RngStream) -> _Node:
        cfg = self.config
        if len(rows) <= cfg.leaf_size:
            return self._leaf(rows)
        pts = self.points[rows]
        gen = stream.derive(0).generator()
        seed_pt = pts[int(gen.integers(len(rows)))]
        p_l = pts[int(np.argmax(_dist2(pts, seed_pt)))]
        p_r = pts[int(np.argmax(_dist2(pts, p_l)))]
        direction = p_r - p_l
        norm = math.sqrt(float(direction @ direction))
        if norm == 0.0:  # all points identical: nothing to split on
            return self._leaf(rows)
        axis = direction / norm
        proj = pts @ axis
        boundary = float(np.median(proj))
        spread = float(proj.max() - proj.min())
        tau_abs = cfg.tau * spread

        if tau_abs > 0.0:
            left_mask = proj <= boundary + tau_abs
            right_mask = proj >= boundary - tau_abs
            largest = max(int(left_mask.sum()), int(right_mask.sum()))
            if largest <= cfg.rho * len(rows):
                return _Node(
                    axis=axis,
                    boundary=boundary,
                    overlap=True,
                    left=self._build(rows[left_mask], stream.derive(1)),
                    right=self._build(rows[right_mask], stream.derive(2)),
                )

        left_mask = proj <= boundary
        if left_mask.all():
            # every projection ties at or below the median; fall back to a
            # strict split, which is non-trivial because p_l != p_r
            left_mask = proj < boundary
        return _Node(
            axis=axis,
            boundary=boundary,
            overlap=False,
            left=self._build(rows[left_mask], stream.derive(1)),
            right=self._build(rows[~left_mask], stream.derive(2)),
        )

    # -- search ------------------------------------------------------------

    def knn(self, q: np.ndarray, k: int, exclude_id: int = -1):
        """Approximate k-NN: defeatist descent through overlap nodes,
        prune-tested backtracking through metric nodes (unless the whole
        search is configured defeatist).

        The candidate set is kept as a pair of sorted arrays and a leaf
        contributes nothing unless it beats the current k-th best, which
        keeps the warm-phase cost of a leaf visit at a few array ops.
        """
        keep = self.ids != exclude_id
        if k > int(keep.sum()):
            raise PreconditionError(
                f"k={k} exceeds the {int(keep.sum())} available neighbors"
            )
        best_d2 = np.empty(0, dtype=np.float64)  # ascending by (d2, id)
        best_id = np.empty(0, dtype=np.int64)
        worst = math.inf
        backtrack = not self.config.defeatist_search

        def merge(d2: np.ndarray, ids: np.ndarray) -> None:
            nonlocal best_d2, best_id, worst
            cd2 = np.concatenate([best_d2, d2])
            cid = np.concatenate([best_id, ids])
            order = np.lexsort((cid, cd2))
            picked_d2, picked_id, seen = [], [], set()
            for j in order:
                i = int(cid[j])
                if i in seen:  # same point reachable through two leaves
                    continue
                seen.add(i)
                picked_d2.append(cd2[j])
                picked_id.append(i)
                if len(picked_id) == k:
                    break
            best_d2 = np.array(picked_d2, dtype=np.float64)
            best_id = np.array(picked_id, dtype=np.int64)
            if len(best_id) == k:
                worst = float(best_d2[-1])

        def scan(node: _Node) -> None:
            d2 = _dist2(node.pts, q)
            if worst < math.inf:
                hit = d2 <= worst
                if not hit.any():
                    return
                cand_d2, cand_id = d2[hit], node.ids[hit]
            else:
                cand_d2, cand_id = d2, node.ids
            if exclude_id != -1:
                ok = cand_id != exclude_id
                cand_d2, cand_id = cand_d2[ok], cand_id[ok]
            if len(cand_id):
                merge(cand_d2, cand_id)

        def visit(node: _Node) -> None:
            if node.is_leaf:
                scan(node)
                return
            t_q = float(q @ node.axis)
            near, far = (
                (node.left, node.right)
                if t_q <= node.boundary
                else (node.right, node.left)
            )
            visit(near)
            if node.overlap or not backtrack:
                return
            gap2 = (t_q - node.boundary) ** 2
            if gap2 <= worst:
                visit(far)

        visit(self.root)
        return best_id, best_d2

    # -- statistics --------------------------------------------------------

    def stats(self) -> dict:
        """Depth histogram, overlap fraction, and leaf occupancy."""
        depth_hist: dict[int, int] = {}
        leaf_sizes: list[int] = []
        overlap_nodes = 0
        internal_nodes = 0

        def walk(node: _Node, depth: int) -> None:
            nonlocal overlap_nodes, internal_nodes
            if node.is_leaf:
                depth_hist[depth] = depth_hist.get(depth, 0) + 1
                leaf_sizes.append(len(node.rows))
                return
            internal_nodes += 1
            if node.overlap:
                overlap_nodes += 1
            walk(node.left, depth + 1)
            walk(node.right, depth + 1)

        walk(self.root, 0)
        return {
            "point_count": self.point_count,
            "leaf_count": len(leaf_sizes),
            "max_depth": max(depth_hist),
            "depth_histogram": dict(sorted(depth_hist.items())),
            "overlap_node_fraction": (
                overlap_nodes / internal_nodes if internal_nodes else 0.0
            ),
            "leaf_occupancy": {
                "min": min(leaf_sizes),
                "mean": sum(leaf_sizes) / len(leaf_sizes),
                "max": max(leaf_sizes),
            },
        }


# -- engines (index factories handed to the resampling operations) ----------


class ExactEngine:
    """Builds brute-force indexes; ignores the random stream."""

    def build(self, points: np.ndarray, ids: np.ndarray,
              rng: RngStream | None = None) -> ExactIndex:
        return ExactIndex(points, ids)


class SpillTreeEngine:
    def __init__(self, config: IndexConfig | None = None):
        self.config = config or IndexConfig()

    def build(self, points: np.ndarray, ids: np.ndarray,
              rng: RngStream | None = None) -> SpillTreeIndex:
        rng = rng or RngStream(0)
        return SpillTreeIndex(points, ids, self.config, rng.derive(STREAM_INDEX))


# -- public operations on domain types ---------------------------------------


def _as_arrays(data: Dataset | Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Dataset):
        return data.features, data.ids
    samples = list(data)
    pts = np.array([s.features for s in samples], dtype=np.float64)
    ids = np.array([s.id for s in samples], dtype=np.int64)
    return pts, ids


def _neighbor_set(query_id: int, ids: np.ndarray, d2: np.ndarray) -> NeighborSet:
    return NeighborSet(
        query_id=query_id,
        neighbors=tuple(
            (int(i), float(math.sqrt(d))) for i, d in zip(ids, d2)
        ),
    )


def brute_force_knn(dataset: Dataset, query: Sample, k: int) -> NeighborSet:
    """Exact k nearest neighbors of ``query`` within ``dataset`` by
    Euclidean distance; ties broken toward the smaller sample id; the
    query's own id is excluded."""
    if k >= dataset.m:
        raise PreconditionError(f"k={k} must be < m={dataset.m}")
    index = ExactIndex(dataset.features, dataset.ids)
    ids, d2 = index.knn(np.asarray(query.features, dtype=np.float64), k,
                        exclude_id=query.id)
    return _neighbor_set(query.id, ids, d2)


def build_index(
    partition: Dataset | Sequence[Sample],
    config: IndexConfig | None = None,
    rng: RngStream | None = None,
) -> SpillTreeIndex:
    points, ids = _as_arrays(partition)
    return SpillTreeIndex(points, ids, config, (rng or RngStream(0)))


def query_index(index: SpillTreeIndex, query: Sample, k: int) -> NeighborSet:
    if index.point_count == 0:
        raise PreconditionError("index is empty")
    if k >= index.point_count:
        raise PreconditionError(f"k={k} must be < point_count={index.point_count}")
    ids, d2 = index.knn(np.asarray(query.features, dtype=np.float64), k,
                        exclude_id=query.id)
    return _neighbor_set(query.id, ids, d2)


def exact_knn_batch(
    points: np.ndarray,
    ids: np.ndarray,
    queries: np.ndarray,
    k: int,
    exclude_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Exact neighbor ids for many queries at once.

    Returns an array of shape (len(queries), k). ``exclude_ids[i]`` is
    removed from query i's candidates (pass -1 for no exclusion). Distances
    are computed per row with the same formula as the engines, so ordering
    (including id tie-breaks) matches them exactly.
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    out = np.empty((len(queries), k), dtype=np.int64)
    for i in range(len(queries)):
        row_d2 = _dist2(points, queries[i])
        if exclude_ids is not None and exclude_ids[i] != -1:
            keep = ids != exclude_ids[i]
            order = np.lexsort((ids[keep], row_d2[keep]))[:k]
            out[i] = ids[keep][order]
        else:
            order = np.lexsort((ids, row_d2))[:k]
            out[i] = ids[order]
    return out


def recall_at_k(index: SpillTreeIndex, dataset: Dataset, k: int) -> float:
    """Mean fraction of true k nearest neighbors the index returns,
    measured over every sample in the dataset (self excluded)."""
    if k >= dataset.m:
        raise PreconditionError(f"k={k} must be < m={dataset.m}")
    exact = ExactIndex(dataset.features, dataset.ids)
    hits = 0
    for row in range(dataset.m):
        q = dataset.features[row]
        qid = int(dataset.ids[row])
        true_ids, _ = exact.knn(q, k, exclude_id=qid)
        approx_ids, _ = index.knn(q, k, exclude_id=qid)
        hits += len(set(true_ids.tolist()) & set(approx_ids.tolist()))
    return hits / (k * dataset.m)


def make_engine(kind, config: IndexConfig | None = None):
    """Engine factory from an EngineKind value."""
    from .core import EngineKind

    if kind is EngineKind.EXACT:
        return ExactEngine()
    if kind is EngineKind.SPILL_TREE:
        return SpillTreeEngine(config)
    raise ConfigError(f"unknown engine kind: {kind!r}")
