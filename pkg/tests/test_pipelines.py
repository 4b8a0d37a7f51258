"""Aggregate-then-shrink pipelines and the plug-in optimal-alpha estimate."""

import numpy as np
import pytest

from ebtruth import (
    CRH,
    Constant,
    HeuristicH,
    InsufficientReplicatesError,
    InsufficientSignalError,
    Mean,
    OracleReduced,
    SampleScaled,
    blue_aggregate,
    eb_blue,
    eb_wrap,
    eb_wrap_alpha,
    ebe,
    estimate_alpha_star,
    run_td,
    validate_matrix,
)

TABLE = [[20.0, 2.0, 3.0, 4.0], [10.0, 11.0, 18.0, 14.0],
         [8.0, 11.0, 23.0, 19.0], [6.0, 13.0, 7.0, 3.0]]
VARIANCES = [93.5, 11.0, 34.5, 56.5]
# Frozen from exact rational arithmetic.
EB_ROW = [10.499588093319227, 11.055775007256534, 15.580221206206177,
          12.832636551546269]


class TestKnownCompetence:
    def test_worked_example_golden(self):
        X = validate_matrix(TABLE)
        np.testing.assert_allclose(eb_blue(X, VARIANCES), EB_ROW, rtol=1e-12)

    def test_composition(self):
        X = validate_matrix(TABLE)
        answers, agg_var = blue_aggregate(X, VARIANCES)
        np.testing.assert_array_equal(eb_blue(X, VARIANCES),
                                      ebe(answers, agg_var).estimate)


class TestEstimatedCompetence:
    def test_oracle_guesses_reproduce_known_competence_pipeline(self):
        X = validate_matrix(TABLE)
        from ebtruth import Blue
        wrapped = eb_wrap(X, Blue(VARIANCES), OracleReduced(VARIANCES))
        np.testing.assert_array_equal(wrapped, eb_blue(X, VARIANCES))

    def test_unanimous_data_returns_base_output(self):
        X = validate_matrix(np.tile([1.0, 2.0, 3.0, 4.0], (3, 1)))
        out = eb_wrap(X, Mean(), SampleScaled(0.0))  # scale 0 -> sigma-hat 0
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0, 4.0])

    def test_alpha_zero_returns_base_output(self):
        X = validate_matrix(TABLE)
        out = eb_wrap_alpha(X, CRH(), HeuristicH(), alpha=0.0)
        np.testing.assert_array_equal(out, run_td(CRH(), X))

    def test_default_alpha_equals_m_minus_3(self):
        rng = np.random.default_rng(1)
        X = validate_matrix(rng.normal(size=(4, 9)))
        a = eb_wrap(X, Mean(), HeuristicH())
        b = eb_wrap_alpha(X, Mean(), HeuristicH(), alpha=9 - 3)
        np.testing.assert_array_equal(a, b)

    def test_positive_part_propagates(self):
        X = validate_matrix(TABLE)
        clipped = eb_wrap(X, Mean(), Constant(1e6), positive_part=True)
        mean_row = run_td(Mean(), X)
        np.testing.assert_allclose(clipped, np.full(4, mean_row.mean()))


class TestAlphaStar:
    def test_needs_enough_replicates(self):
        with pytest.raises(InsufficientReplicatesError):
            estimate_alpha_star(np.zeros((10, 5)), np.zeros(10), np.zeros(5))

    def test_shape_mismatch(self):
        with pytest.raises(InsufficientReplicatesError):
            estimate_alpha_star(np.zeros((40, 5)), np.zeros(40), np.zeros(4))

    def test_zero_signal(self):
        with pytest.raises(InsufficientSignalError):
            estimate_alpha_star(np.ones((40, 5)), np.ones(40), np.ones(5))
        rng = np.random.default_rng(0)
        aggregates = rng.normal(size=(40, 5))
        with pytest.raises(InsufficientSignalError):
            estimate_alpha_star(aggregates, np.zeros(40), np.zeros(5))

    def test_recovers_default_multiplier_with_true_variance(self):
        # With the exact variance plugged in as a constant, the optimal
        # multiplier converges to m - 3.
        rng = np.random.default_rng(123)
        m, sigma2, reps = 20, 1.5, 40_000
        mu = np.zeros(m)
        aggregates = rng.normal(0.0, np.sqrt(sigma2), size=(reps, m))
        alpha = estimate_alpha_star(aggregates, np.full(reps, sigma2), mu)
        assert alpha == pytest.approx(m - 3, rel=0.05)
