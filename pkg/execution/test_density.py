import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import chi2

from density import (
    EWMA,
    STANDARD,
    BerkowitzOutcome,
    PitSeries,
    SampleSummary,
    berkowitz,
    berkowitz_ewma,
    berkowitz_many,
    berkowitz_pvalue,
    empirical_cdf,
    empirical_cdf_many,
    ewma_weights,
    pit_to_normal,
    score,
)
from errors import DegenerateSampleError, PreconditionError
from randgen import SeededSource, standard_normals

NINE = SampleSummary.from_returns(np.arange(1.0, 10.0))


def test_interior_hand_case():
    assert empirical_cdf(NINE, 5.5) == pytest.approx(0.6, abs=1e-12)


def test_first_order_statistic():
    assert empirical_cdf(NINE, 1.0) == pytest.approx(0.05, abs=1e-12)


def test_interior_at_order_statistics_is_rank_based():
    for j in range(2, 10):
        assert empirical_cdf(NINE, float(j)) == pytest.approx((j + 0.5) / 10, abs=1e-12)


def test_tails_stay_inside_unit_interval():
    low = empirical_cdf(NINE, -1e6)
    high = empirical_cdf(NINE, 1e6)
    assert 0.0 < low < 1e-12
    assert 1.0 - 1e-12 < high < 1.0


def test_monotone_over_whole_domain():
    grid = np.linspace(-10.0, 20.0, 3001)
    values = empirical_cdf_many(
        np.broadcast_to(NINE.sorted, (grid.size, 9)), NINE.mean, NINE.stdev, grid
    )
    assert np.all(np.diff(values) >= -1e-15)


def test_lower_tail_formula():
    r = 0.0
    z_r = (r - NINE.mean) / NINE.stdev
    z_1 = (1.0 - NINE.mean) / NINE.stdev
    expected = 0.05 * ndtr(z_r) / ndtr(z_1)
    assert empirical_cdf(NINE, r) == pytest.approx(expected, rel=1e-12)


def test_zero_spread_in_tail_is_degenerate():
    flat = SampleSummary.from_returns(np.full(5, 0.01))
    with pytest.raises(DegenerateSampleError):
        empirical_cdf(flat, 0.02)


def test_cdf_needs_two_points():
    with pytest.raises(PreconditionError):
        empirical_cdf_many(np.array([1.0]), 1.0, 0.0, 0.5)


def test_pit_to_normal_values():
    assert pit_to_normal(0.5) == 0.0
    assert pit_to_normal(0.975) == pytest.approx(1.959963984540054, abs=1e-9)
    p = np.linspace(1e-6, 1 - 1e-6, 101)
    assert np.allclose(ndtr(pit_to_normal(p)), p, atol=1e-9)
    with pytest.raises(PreconditionError):
        pit_to_normal(0.0)
    with pytest.raises(PreconditionError):
        pit_to_normal(np.array([0.5, 1.0]))


def test_berkowitz_hand_cases():
    stat, mean, var = berkowitz_many(np.array([[-1.0, 1.0], [0.0, 2.0]]))
    assert stat[0] == pytest.approx(0.0, abs=1e-12)
    assert stat[1] == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(mean, [0.0, 1.0])
    assert np.allclose(var, [1.0, 1.0])


def test_berkowitz_from_pit_series():
    y = PitSeries.from_probabilities(ndtr(np.array([0.0, 2.0])))
    outcome = berkowitz(y)
    assert outcome.variant == STANDARD
    assert outcome.k == 2
    assert outcome.statistic == pytest.approx(2.0, abs=1e-9)


def test_berkowitz_rejects_short_or_flat_series():
    with pytest.raises(PreconditionError):
        berkowitz_many(np.array([0.3]))
    with pytest.raises(DegenerateSampleError):
        berkowitz_many(np.array([0.3, 0.3, 0.3]))


def test_ewma_at_one_is_normalized_standard():
    y = PitSeries.from_probabilities(ndtr(standard_normals(40, SeededSource(9))))
    standard = berkowitz(y)
    weighted = berkowitz_ewma(y, 1.0)
    assert weighted.variant == EWMA
    assert weighted.statistic == pytest.approx(standard.statistic / 40, rel=1e-10, abs=1e-14)


def test_ewma_weighted_mean_matches_brute_force():
    rng = np.random.default_rng(1)
    y = PitSeries.from_probabilities(rng.uniform(0.05, 0.95, size=10))
    outcome = berkowitz_ewma(y, 0.5)
    raw = [0.5 ** (10 - k) for k in range(1, 11)]
    brute = sum(w * v for w, v in zip(raw, y.normals)) / sum(raw)
    assert outcome.mean == pytest.approx(brute, abs=1e-6)


def test_ewma_weights_sum_to_one():
    w = ewma_weights(39, 0.94)
    assert w.sum() == pytest.approx(1.0)
    assert w[-1] > w[0]
    with pytest.raises(PreconditionError):
        ewma_weights(5, 0.0)


def test_ewma_reacts_to_recent_variance_break():
    z = standard_normals(40, SeededSource(21))
    z[20:] *= 3.0
    y = PitSeries.from_probabilities(ndtr(z))
    assert berkowitz_ewma(y, 0.94).statistic > berkowitz(y).statistic / 40


def test_score_dispatch():
    y = PitSeries.from_probabilities(ndtr(np.array([-1.0, 0.5, 1.2])))
    assert score(y).variant == STANDARD
    assert score(y, 0.9).variant == EWMA


def test_pvalue_only_for_standard():
    assert berkowitz_pvalue(BerkowitzOutcome(0.0, STANDARD, 0.0, 1.0, 10)) == pytest.approx(1.0)
    assert berkowitz_pvalue(BerkowitzOutcome(3.2189, STANDARD, 0.0, 1.0, 10)) == pytest.approx(0.2, abs=1e-4)
    with pytest.raises(PreconditionError):
        berkowitz_pvalue(BerkowitzOutcome(1.0, EWMA, 0.0, 1.0, 10, gamma=0.9))


@pytest.mark.slow
def test_null_exceedance_rate_near_chi2_level():
    critical = chi2.ppf(0.80, 2)
    hits = 0
    for r in range(2000):
        y = standard_normals(5000, SeededSource(77, r))
        stat, _, _ = berkowitz_many(y[None, :])
        hits += stat[0] > critical
    assert hits / 2000 == pytest.approx(0.20, abs=0.03)
