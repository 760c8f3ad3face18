import numpy as np
import pytest

from hmvar.panel import balanced_panel, build_panel


def random_panel(rng, max_g=8, max_t=8, max_n=60):
    G = int(rng.integers(1, max_g + 1))
    T = int(rng.integers(1, max_t + 1))
    n = int(rng.integers(1, max_n + 1))
    recs = np.column_stack([rng.integers(1, G + 1, n), rng.integers(1, T + 1, n)])
    return build_panel(recs.tolist())


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def panel_2x2():
    return balanced_panel(2, 2)


@pytest.fixture
def scores_1234():
    return np.array([1.0, 2.0, 3.0, 4.0])
