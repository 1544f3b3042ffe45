import numpy as np
import pytest

from estimation import SAMPLE, MomentEstimate
from randgen import SeededSource, mvn_series, synthetic_market_moments


def make_moments(mean, cov, sample_size: int = 100) -> MomentEstimate:
    return MomentEstimate(
        mean=np.asarray(mean, dtype=float),
        covariance=np.asarray(cov, dtype=float),
        estimator=SAMPLE,
        sample_size=sample_size,
    )


@pytest.fixture
def four_assets() -> MomentEstimate:
    sd = np.array([0.10, 0.15, 0.20, 0.25])
    corr = np.full((4, 4), 0.3)
    np.fill_diagonal(corr, 1.0)
    return make_moments([0.01, 0.02, 0.03, 0.04], np.outer(sd, sd) * corr)


@pytest.fixture
def identity_four() -> MomentEstimate:
    return make_moments([0.1, 0.2, 0.3, 0.4], np.eye(4), sample_size=52)


@pytest.fixture
def small_panel():
    mean, cov = synthetic_market_moments(5, SeededSource(7, 0))
    return mvn_series(mean, cov, 50, SeededSource(7, 1))
