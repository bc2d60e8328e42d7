import sys
from pathlib import Path

import numpy as np
import pytest

from smotenn import Dataset

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

FIXTURES = Path(__file__).parent.parent / "fixtures"


def make_dataset(minority_pts, majority_pts, name="toy") -> Dataset:
    """Dataset from explicit coordinate lists, minority rows first."""
    minority_pts = np.asarray(minority_pts, dtype=np.float64)
    majority_pts = np.asarray(majority_pts, dtype=np.float64)
    feats = np.vstack([minority_pts, majority_pts])
    mask = np.zeros(len(feats), dtype=bool)
    mask[: len(minority_pts)] = True
    return Dataset(feats, mask, name=name)


def random_imbalanced(seed, n_minority, n_majority, n_features,
                      duplicates=0) -> Dataset:
    """Mixed-cluster random dataset; optional exact-duplicate rows to
    exercise distance tie-breaking."""
    gen = np.random.default_rng(seed)
    minority = gen.normal(loc=0.0, scale=1.0,
                          size=(n_minority, n_features))
    majority = gen.normal(loc=gen.uniform(0.5, 2.5), scale=1.3,
                          size=(n_majority, n_features))
    feats = np.vstack([minority, majority])
    for _ in range(duplicates):
        src, dst = gen.integers(len(feats), size=2)
        feats[dst] = feats[src]
    mask = np.zeros(len(feats), dtype=bool)
    mask[:n_minority] = True
    return Dataset(feats, mask, name=f"rand{seed}")


def gaussian_pair(seed, m, ir, separation, n_features=2,
                  scale=1.0) -> Dataset:
    """Two overlapping Gaussian blobs with the requested imbalance."""
    gen = np.random.default_rng(seed)
    n_minority = max(2, round(m / (1 + ir)))
    n_majority = m - n_minority
    minority = gen.normal(loc=0.0, scale=scale, size=(n_minority, n_features))
    majority = gen.normal(loc=separation, scale=scale,
                          size=(n_majority, n_features))
    feats = np.vstack([minority, majority])
    mask = np.zeros(m, dtype=bool)
    mask[:n_minority] = True
    return Dataset(feats, mask, name=f"gauss{seed}")


@pytest.fixture
def clustered_ds() -> Dataset:
    return random_imbalanced(11, 30, 120, 2)
