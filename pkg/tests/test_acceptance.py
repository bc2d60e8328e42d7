"""Acceptance suite: one test per release criterion, each asserting its
stated tolerance and printing a PASS line (run with ``pytest -v -s`` to
see them). Criteria cover: published-rank reproduction from the fixture
matrices (1-3), oracle and engine equivalence of the resampler (4-5),
approximate-search recall (6), the resampling invariant battery (7),
end-to-end quality and scale (8), and the statistics oracle (9).
"""

import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from smotenn import (
    Dataset,
    EngineKind,
    IndexConfig,
    Method,
    ResampleSpec,
    SpillTreeIndex,
    apply_resample,
    build_rank_report,
    cross_validate,
    friedman_iman_davenport,
    holm_posthoc,
    plan_partitions,
    recall_at_k,
    run_partitioned,
)
from smotenn.core import RngStream, STREAM_BLOCK, STREAM_RUS
from smotenn.evaluate import load_gmean_dir
from smotenn.knn import ExactEngine, SpillTreeEngine
from smotenn.resample import enn, smote, smotenn

from conftest import FIXTURES, gaussian_pair
from oracles import reference_hybrid, reference_knn, reference_rank_stats

EXACT = ExactEngine()
TAU0_TREE = SpillTreeEngine(IndexConfig(tau=0.0, leaf_size=8))


def _report_for(path):
    _, methods, matrix = load_gmean_dir(path)
    return build_rank_report(matrix, methods), matrix.shape


# -- criteria 1-3: published-rank reproduction -------------------------------


def test_criterion_1_small_fixture_ranks():
    t0 = time.perf_counter()
    report, shape = _report_for(FIXTURES / "appendix" / "small")
    elapsed = time.perf_counter() - t0
    assert shape == (66, 9)
    assert report.control == "SMOTENN"
    assert min(report.avg_ranks) == report.rank_of("SMOTENN")
    assert abs(report.rank_of("SMOTENN") - 1.77) <= 0.3
    assert len(report.holm) == 8
    assert all(c.reject for c in report.holm)
    assert report.wtl_of("SMOTE") == (8, 1, 57)
    assert elapsed < 1.0
    print(f"\nACCEPTANCE 1 small-fixture ranks: PASS "
          f"(SMOTENN rank {report.rank_of('SMOTENN'):.3f}, {elapsed*1e3:.0f} ms)")


def test_criterion_2_medium_fixture_ranks():
    t0 = time.perf_counter()
    report, shape = _report_for(FIXTURES / "appendix" / "medium")
    elapsed = time.perf_counter() - t0
    assert shape == (24, 9)
    assert report.control == "SMOTENN"
    assert abs(report.rank_of("SMOTENN") - 1.54) <= 0.3
    assert all(c.reject for c in report.holm)
    assert report.wtl_of("SMOTE") == (2, 1, 21)
    assert elapsed < 1.0
    print(f"\nACCEPTANCE 2 medium-fixture ranks: PASS "
          f"(SMOTENN rank {report.rank_of('SMOTENN'):.3f}, {elapsed*1e3:.0f} ms)")


def test_criterion_3_large_fixture_ranks_and_decisions():
    report, shape = _report_for(FIXTURES / "large")
    assert shape == (10, 6)
    smote_r = report.rank_of("SMOTE")
    smotenn_r = report.rank_of("SMOTENN")
    rus_r = report.rank_of("RUS")
    assert smote_r < smotenn_r < rus_r
    assert abs(smote_r - 2.10) <= 0.3
    assert abs(smotenn_r - 2.75) <= 0.3
    assert abs(rus_r - 3.00) <= 0.3
    decision = {c.method: c.reject for c in report.holm}
    assert decision["ENN"] and decision["ENN+SMO"]
    assert not decision["SMOTENN"] and not decision["RUS"]
    assert not decision["RUS+SMO"]
    print(f"\nACCEPTANCE 3 large-fixture ranks/decisions: PASS "
          f"({smote_r:.2f} < {smotenn_r:.2f} < {rus_r:.2f})")


# -- criteria 4-5: oracle and engine equivalence -----------------------------


def _equivalence_case(idx):
    gen = np.random.default_rng(777 + idx)
    n = int(gen.integers(2, 9))
    n_min = int(gen.integers(8, 46))
    n_maj = int(gen.integers(40, 255 - n_min))
    minority = gen.normal(0.0, 1.0, size=(n_min, n))
    majority = gen.normal(gen.uniform(0.3, 2.0), 1.2, size=(n_maj, n))
    feats = np.vstack([minority, majority])
    for _ in range(int(gen.integers(0, 5))):  # exact duplicates stress ties
        src, dst = gen.integers(len(feats), size=2)
        feats[dst] = feats[src]
    mask = np.zeros(len(feats), dtype=bool)
    mask[:n_min] = True
    spec = ResampleSpec(
        method=Method.SMOTENN,
        k=5,
        n_oversample=1 + idx % 2,
        p_ratio=float((2, 3, 4)[idx % 3]),
        seed=idx,
    )
    return Dataset(feats, mask, name=f"case{idx}"), spec


def test_criterion_4_oracle_equivalence_over_50_datasets():
    mismatches = 0
    for idx in range(50):
        ds, spec = _equivalence_case(idx)
        rng = RngStream(spec.seed).derive(STREAM_BLOCK, 0)
        res = smotenn(ds, spec, EXACT, rng)
        ref_removed, ref_prov, ref_coords = reference_hybrid(
            ds, spec.k, spec.n_oversample, spec.p_ratio, rng
        )
        got_prov = {
            sid: (o.parent_id, o.neighbor_id, o.u)
            for sid, o in res.provenance.items()
        }
        rows = {int(i): r for r, i in enumerate(res.output.ids)}
        coords_ok = all(
            np.array_equal(res.output.features[rows[sid]], ref_coords[sid])
            for sid in ref_prov
        )
        if (res.removed_ids != frozenset(ref_removed)
                or got_prov != ref_prov or not coords_ok):
            mismatches += 1
    assert mismatches == 0
    print("\nACCEPTANCE 4 oracle equivalence (50 datasets): PASS (0 mismatches)")


def test_criterion_5_engine_equivalence_over_50_datasets():
    mismatches = 0
    for idx in range(50):
        ds, spec = _equivalence_case(idx)
        rng = RngStream(spec.seed).derive(STREAM_BLOCK, 0)
        runs = [
            lambda engine: smote(ds, spec.k, spec.n_oversample, engine, rng),
            lambda engine: enn(ds, spec.k, None, engine, rng),
            lambda engine: smotenn(ds, spec, engine, rng),
        ]
        for run in runs:
            a = run(EXACT)
            b = run(TAU0_TREE)
            same = (
                np.array_equal(a.output.features, b.output.features)
                and np.array_equal(a.output.ids, b.output.ids)
                and np.array_equal(a.output.minority_mask,
                                   b.output.minority_mask)
                and a.removed_ids == b.removed_ids
                and a.provenance == b.provenance
            )
            if not same:
                mismatches += 1
    assert mismatches == 0
    print("\nACCEPTANCE 5 engine equivalence (50 datasets x 3 methods): "
          "PASS (bit-for-bit)")


# -- criterion 6: approximate recall -----------------------------------------


def test_criterion_6_spill_tree_recall_at_defaults():
    recalls = []
    for seed in range(10):
        ds = gaussian_pair(seed, 2000, ir=1.0, separation=2.0, n_features=5)
        index = SpillTreeIndex(
            ds.features, ds.ids,
            IndexConfig(tau=0.1, rho=0.7, leaf_size=32),
            RngStream(seed),
        )
        recalls.append(recall_at_k(index, ds, 5))
    mean = float(np.mean(recalls))
    assert mean >= 0.90
    print(f"\nACCEPTANCE 6 recall@5 with defaults: PASS (mean {mean:.3f})")


# -- criterion 7: resampling invariants (>= 1000 generated cases) ------------


@st.composite
def small_imbalanced(draw, min_minority=4, max_minority=10, max_majority=28):
    n = draw(st.integers(1, 3))
    n_min = draw(st.integers(min_minority, max_minority))
    n_maj = draw(st.integers(n_min, max_majority))
    feats = draw(
        hnp.arrays(np.int64, (n_min + n_maj, n), elements=st.integers(-8, 8))
    ).astype(np.float64)
    mask = np.zeros(len(feats), dtype=bool)
    mask[:n_min] = True
    return Dataset(feats, mask)


SUPPRESS = [HealthCheck.too_slow]


@given(small_imbalanced(), st.integers(0, 999), st.integers(1, 2))
@settings(max_examples=250, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7a_convex_hull_of_every_synthetic(ds, seed, n_over):
    spec = ResampleSpec(method=Method.SMOTENN, k=3, n_oversample=n_over,
                        p_ratio=2.0, seed=seed)
    results = [apply_resample(ds, spec)]
    if ds.minority_count > 3:
        results.append(
            apply_resample(
                ds,
                ResampleSpec(method=Method.SMOTE, k=3, n_oversample=n_over,
                             seed=seed),
            )
        )
    feats_by_id = {int(i): ds.features[r] for r, i in enumerate(ds.ids)}
    for res in results:
        rows = {int(i): r for r, i in enumerate(res.output.ids)}
        for sid, origin in res.provenance.items():
            parent = feats_by_id[origin.parent_id]
            neighbor = feats_by_id[origin.neighbor_id]
            got = res.output.features[rows[sid]]
            assert 0.0 <= origin.u < 1.0
            expect = parent + origin.u * (neighbor - parent)
            assert np.allclose(got, expect, atol=1e-12)
            lo = np.minimum(parent, neighbor) - 1e-12
            hi = np.maximum(parent, neighbor) + 1e-12
            assert ((lo <= got) & (got <= hi)).all()


@given(small_imbalanced(min_minority=5), st.integers(0, 999),
       st.integers(1, 3))
@settings(max_examples=200, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7b_smote_count_law(ds, seed, n_over):
    spec = ResampleSpec(method=Method.SMOTE, k=4, n_oversample=n_over,
                        seed=seed)
    res = apply_resample(ds, spec)
    assert res.output.minority_count == ds.minority_count * (n_over + 1)
    assert res.output.majority_count == ds.majority_count
    assert res.removed_ids == frozenset()


@given(small_imbalanced(), st.integers(0, 999),
       st.floats(0.25, 6.0, allow_nan=False))
@settings(max_examples=200, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7c_rus_target_ratio_with_cap(ds, seed, p_ratio):
    spec = ResampleSpec(method=Method.RUS, p_ratio=p_ratio, seed=seed)
    res = apply_resample(ds, spec)
    expected = int(math.floor(p_ratio * ds.minority_count + 0.5))
    expected = max(1, min(expected, ds.majority_count))
    assert res.output.majority_count == expected
    assert res.output.minority_count == ds.minority_count
    minority_ids = set(ds.ids[ds.minority_mask].tolist())
    assert not (res.removed_ids & minority_ids)


@given(small_imbalanced(), st.integers(0, 999))
@settings(max_examples=150, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7d_smotenn_removal_soundness(ds, seed):
    spec = ResampleSpec(method=Method.SMOTENN, k=3, n_oversample=1,
                        p_ratio=2.0, seed=seed)
    rng = RngStream(spec.seed).derive(STREAM_BLOCK, 0)
    res = apply_resample(ds, spec)

    # recompute the undersampling survivors from the stream contract
    majority_ids = [int(i) for i in ds.ids[~ds.minority_mask]]
    keep = max(1, min(int(math.floor(spec.p_ratio * ds.minority_count + 0.5)),
                      len(majority_ids)))
    perm = rng.derive(STREAM_RUS).generator().permutation(len(majority_ids))
    kept = {majority_ids[int(j)] for j in perm[:keep]}
    rus_removed = set(majority_ids) - kept
    cleanup = set(res.removed_ids) - rus_removed

    minority_ids = set(ds.ids[ds.minority_mask].tolist())
    assert not (set(res.removed_ids) & minority_ids)
    assert cleanup <= kept  # only post-undersampling majority survivors

    # every cleaned id is a neighbor of some gated minority sample
    feats = {int(i): ds.features[r] for r, i in enumerate(ds.ids)}
    pool = sorted(minority_ids | kept)
    pool_pts = [feats[i] for i in pool]
    justified = set()
    for i in sorted(minority_ids):
        nbrs, _ = reference_knn(pool_pts, pool, feats[i], spec.k,
                                exclude_id=i)
        votes = sum(1 for j in nbrs if j in minority_ids)
        if votes > spec.k / 2:
            justified.update(j for j in nbrs if j not in minority_ids)
    assert cleanup <= justified
    assert res.synthetic_count <= spec.n_oversample * ds.minority_count


@given(small_imbalanced(min_minority=6, max_minority=12, max_majority=30),
       st.integers(0, 999), st.integers(1, 3))
@settings(max_examples=100, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7e_partitioned_conservation(ds, seed, blocks):
    blocks = min(blocks, ds.minority_count // 3)
    blocks = max(blocks, 1)
    spec = ResampleSpec(method=Method.SMOTENN, k=3, n_oversample=1,
                        p_ratio=2.0, seed=seed, partitions=blocks)
    plan = plan_partitions(ds, blocks, RngStream(seed))
    res = run_partitioned(ds, spec, plan)
    assert res.output.m == ds.m - len(res.removed_ids) + res.synthetic_count
    assert len(np.unique(res.output.ids)) == res.output.m


@given(small_imbalanced(), st.integers(0, 999),
       st.sampled_from([Method.RUS, Method.SMOTENN]))
@settings(max_examples=100, deadline=None, suppress_health_check=SUPPRESS)
def test_criterion_7f_seed_determinism(ds, seed, method):
    spec = ResampleSpec(method=method, k=3, n_oversample=1, p_ratio=2.0,
                        seed=seed)
    a = apply_resample(ds, spec)
    b = apply_resample(ds, spec)
    assert np.array_equal(a.output.features, b.output.features)
    assert np.array_equal(a.output.ids, b.output.ids)
    assert a.removed_ids == b.removed_ids
    assert a.provenance == b.provenance


def test_criterion_7_case_budget():
    # the six property tests above together run >= 1000 generated cases
    budget = 250 + 200 + 200 + 150 + 100 + 100
    assert budget >= 1000
    print(f"\nACCEPTANCE 7 invariant battery: PASS ({budget} generated cases)")


# -- criterion 8: end-to-end quality and scale -------------------------------


def test_criterion_8_quality_on_overlapping_gaussians():
    def mean_cv(spec_of):
        scores = []
        for s in range(5):
            ds = gaussian_pair(100 + s, 2000, ir=10.0, separation=1.4,
                               n_features=2)
            cv = cross_validate(ds, spec_of(s), folds=5, classify_k=5)
            scores.append(cv.mean_gmean)
        return float(np.mean(scores))

    baseline = mean_cv(lambda s: ResampleSpec(method=Method.NONE, seed=s))
    rus_to_1 = mean_cv(
        lambda s: ResampleSpec(method=Method.RUS, p_ratio=1.0, seed=s)
    )
    hybrid = mean_cv(
        lambda s: ResampleSpec(method=Method.SMOTENN, k=5, n_oversample=1,
                               p_ratio=3.0, seed=s)
    )
    assert 0.5 <= baseline <= 0.85  # overlap tuned so there is headroom
    assert hybrid >= baseline
    assert hybrid >= rus_to_1 - 0.02
    print(f"\nACCEPTANCE 8a end-to-end quality: PASS "
          f"(baseline {baseline:.3f}, rus {rus_to_1:.3f}, hybrid {hybrid:.3f})")


@pytest.mark.slow
def test_criterion_8_partitioned_run_at_half_a_million_rows():
    gen = np.random.default_rng(42)
    m, n, ir = 500_000, 10, 10.0
    n_min = round(m / (1 + ir))
    feats = np.vstack([
        gen.normal(0.0, 1.0, size=(n_min, n)),
        gen.normal(1.2, 1.0, size=(m - n_min, n)),
    ])
    mask = np.zeros(m, dtype=bool)
    mask[:n_min] = True
    ds = Dataset(feats, mask, name="big")

    spec = ResampleSpec(method=Method.SMOTENN, k=5, n_oversample=1,
                        p_ratio=3.0, seed=9,
                        engine=EngineKind.SPILL_TREE, partitions=10)
    t0 = time.perf_counter()
    plan = plan_partitions(ds, spec.partitions, RngStream(spec.seed))
    res = run_partitioned(ds, spec, plan, index_config=IndexConfig(),
                          threads=2)
    elapsed = time.perf_counter() - t0
    assert res.output.m == ds.m - len(res.removed_ids) + res.synthetic_count
    assert res.synthetic_count > 0
    assert elapsed < 300.0
    print(f"\nACCEPTANCE 8b 500k-row partitioned run: PASS ({elapsed:.0f} s)")


# -- criterion 9: statistics oracle ------------------------------------------


@pytest.mark.parametrize("matrix", [
    # k=3 methods, N=4 rows (with a tie)
    np.array([
        [90.0, 80.0, 70.0],
        [85.0, 85.0, 60.0],
        [70.0, 70.5, 71.0],
        [92.0, 91.0, 90.0],
    ]),
    # k=3 methods, N=10 rows
    np.array([
        [90.0, 80.0, 70.0],
        [88.0, 78.0, 68.0],
        [86.0, 85.0, 84.0],
        [70.0, 75.0, 72.0],
        [91.0, 90.0, 89.5],
        [60.0, 61.0, 59.0],
        [82.0, 82.0, 82.0],
        [77.0, 76.0, 75.0],
        [93.0, 92.0, 91.0],
        [66.0, 64.0, 65.0],
    ]),
])
def test_criterion_9_statistics_match_scripted_oracle(matrix):
    fr = friedman_iman_davenport(matrix)
    names = ["m1", "m2", "m3"]
    control, comps = holm_posthoc(names, fr.avg_ranks, len(matrix))

    avg, chi2, f_stat, p, holm_ref, decisions = reference_rank_stats(matrix)
    assert np.allclose(fr.avg_ranks, avg, atol=1e-9)
    assert fr.chi2 == pytest.approx(chi2, abs=1e-9)
    assert fr.iman_davenport_f == pytest.approx(f_stat, abs=1e-9)
    assert fr.p_value == pytest.approx(p, abs=1e-9)
    control_idx = names.index(control)
    assert control_idx == min(range(3), key=lambda j: avg[j])
    for comp in comps:
        j = names.index(comp.method)
        z_ref, p_ref = holm_ref[j]
        assert comp.z == pytest.approx(z_ref, abs=1e-9)
        assert comp.p_value == pytest.approx(p_ref, abs=1e-9)
        assert comp.reject == decisions[j]
    print(f"\nACCEPTANCE 9 statistics oracle (N={len(matrix)}): PASS")
