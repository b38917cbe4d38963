import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_pareto(means):
    """Independent O(n^2) scan used as the reference Pareto oracle in tests."""
    means = np.asarray(means, dtype=float)
    keep = []
    for i, u in enumerate(means):
        dominated = any(np.all(u <= v) and np.any(u < v) for j, v in enumerate(means) if j != i)
        if not dominated:
            keep.append(i)
    return tuple(keep)
