import math
import warnings

import numpy as np
import pytest

from weakmeas import (
    ApparatusConfig,
    average_distribution,
    density_from_pure,
    disturbance,
    disturbance_curve,
    disturbance_strong_limit,
    ensemble_mean,
    expected_reduced_density_after_M,
    make_state,
    outcome_variance,
    overlap_trace,
    required_weak_repetitions,
    saturation_ratio,
    single_step_reduced_density,
    spectral_spread,
    statistical_error,
)

# Frozen reference values (mpmath, 30 digits).
SAT_HALF = 0.08110858834532414   # erf(1/2) - (1/sqrt(pi)) e^{-1/4}
SAT_ONE = 0.4275932955291202     # erf(1) - (2/sqrt(pi)) e^{-1}
SAT_TWO = 0.9539882943107686     # erf(2) - (4/sqrt(pi)) e^{-4}
DAMP_100 = 0.14715177646857694   # 0.4 / e, reference qubit after 100 steps


class TestMoments:
    def test_reference_mean(self, ref_state):
        assert ensemble_mean(ref_state) == pytest.approx(0.6, abs=1e-14)

    def test_reference_spread(self, ref_state):
        # E[s^2] = 1, mean 0.6, so spread = sqrt(0.64)
        assert spectral_spread(ref_state) == pytest.approx(0.8, abs=1e-14)

    def test_eigenstate_spread_is_zero(self):
        st = make_state([3.0, 7.0], [0.0, 1.0])
        assert spectral_spread(st) == 0.0

    def test_reference_variance(self, ref_state, ref_app):
        assert outcome_variance(ref_state, ref_app) == pytest.approx(
            50.64, abs=1e-12)

    def test_statistical_error(self, ref_app):
        assert statistical_error(ref_app, 1000) == pytest.approx(
            math.sqrt(0.05), rel=1e-15)
        with pytest.raises(ValueError):
            statistical_error(ref_app, 0)


class TestResourceComparison:
    def test_reference_count(self):
        # (delta_p / spread)^2 / 2 = (10 / 0.8)^2 / 2 per projective reading
        assert required_weak_repetitions(10.0, 0.8, 1) == pytest.approx(
            78.125, rel=1e-15)
        assert required_weak_repetitions(10.0, 0.8, 40) == pytest.approx(
            3125.0, rel=1e-15)

    def test_eigenstate_rejected(self):
        with pytest.raises(ValueError, match="spread"):
            required_weak_repetitions(10.0, 0.0, 5)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            required_weak_repetitions(-1.0, 0.8, 5)
        with pytest.raises(ValueError):
            required_weak_repetitions(10.0, 0.8, 0)


class TestSaturationRatio:
    def test_frozen_values(self):
        assert saturation_ratio(0.5) == pytest.approx(SAT_HALF, rel=1e-14)
        assert saturation_ratio(1.0) == pytest.approx(SAT_ONE, rel=1e-14)
        assert saturation_ratio(2.0) == pytest.approx(SAT_TWO, rel=1e-14)

    def test_limits(self):
        assert saturation_ratio(0.0) == 0.0
        assert saturation_ratio(8.0) == pytest.approx(1.0, abs=1e-12)

    def test_monotone(self):
        grid = np.linspace(0.0, 5.0, 400)
        vals = [saturation_ratio(f) for f in grid]
        assert np.all(np.diff(vals) > 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            saturation_ratio(-0.1)


class TestReducedDensity:
    def test_single_step_damping(self, ref_state, ref_app):
        rho = single_step_reduced_density(ref_state, ref_app)
        # off-diagonal shrinks by (s_i - s_j)^2 / (4 delta_p^2) = 0.01
        assert abs(rho.entries[0, 1]) == pytest.approx(0.4 * 0.99, rel=1e-13)
        assert rho.entries[1, 1].real == pytest.approx(0.8, rel=1e-14)

    def test_single_step_warns_when_strong(self, ref_state):
        with pytest.warns(RuntimeWarning, match="indefinite"):
            single_step_reduced_density(ref_state, ApparatusConfig(0.3))

    def test_after_m_frozen_value(self, ref_state, ref_app):
        rho = expected_reduced_density_after_M(ref_state, ref_app, 100)
        assert abs(rho.entries[0, 1]) == pytest.approx(DAMP_100, rel=1e-13)

    def test_zero_steps_is_input_state(self, ref_state, ref_app):
        rho = expected_reduced_density_after_M(ref_state, ref_app, 0)
        assert np.allclose(rho.entries, density_from_pure(ref_state).entries,
                           atol=1e-15)

    def test_diagonals_never_decay(self, random_state, ref_app):
        rng = np.random.default_rng(7)
        st = random_state(rng, 4)
        rho = expected_reduced_density_after_M(st, ref_app, 10_000)
        assert np.allclose(np.diag(rho.entries).real, st.probabilities,
                           atol=1e-14)

    def test_exponential_composition(self, ref_state, ref_app):
        # damping after a + b steps is the product of the separate dampings
        a = expected_reduced_density_after_M(ref_state, ref_app, 30)
        b = expected_reduced_density_after_M(ref_state, ref_app, 70)
        c = expected_reduced_density_after_M(ref_state, ref_app, 100)
        assert abs(c.entries[0, 1]) == pytest.approx(
            abs(a.entries[0, 1]) * abs(b.entries[0, 1]) / 0.4, rel=1e-12)


class TestDisturbance:
    def test_eigenstate_is_undisturbed(self):
        st = make_state([1.0, -1.0], [0.0, 1.0])
        assert disturbance(st, 0.3) == 0.0
        assert disturbance_strong_limit(st) == 0.0

    def test_vanishes_for_weak_runs(self, ref_state):
        assert disturbance(ref_state, 1e6) == pytest.approx(0.0, abs=1e-10)

    def test_strong_limit_value(self, ref_state):
        # sum w (1 - w) = 0.8*0.2*2
        assert disturbance_strong_limit(ref_state) == pytest.approx(
            0.32, abs=1e-14)
        assert disturbance(ref_state, 1e-9) == pytest.approx(0.32, abs=1e-14)

    def test_matches_decoherence_overlap(self, random_state):
        # 1 - tr(rho rho_after_M) equals the closed form at the matched error
        rng = np.random.default_rng(19)
        for _ in range(25):
            st = random_state(rng, int(rng.integers(2, 5)))
            app = ApparatusConfig(float(rng.uniform(1.0, 40.0)))
            steps = int(rng.integers(1, 2000))
            eps = app.delta_p / math.sqrt(2.0 * steps)
            rho0 = density_from_pure(st)
            rho_m = expected_reduced_density_after_M(st, app, steps)
            lhs = 1.0 - overlap_trace(rho0, rho_m)
            assert lhs == pytest.approx(disturbance(st, eps), abs=1e-12)

    def test_monotone_in_accuracy(self, ref_state):
        eps = np.geomspace(1e-3, 1e3, 50)
        vals = [d.disturbance for d in disturbance_curve(ref_state, eps)]
        assert np.all(np.diff(vals) <= 1e-15)

    def test_invalid_epsilon(self, ref_state):
        with pytest.raises(ValueError):
            disturbance(ref_state, 0.0)


class TestAverageDistribution:
    def test_mixture_parameters(self, ref_state, ref_app):
        dist = average_distribution(ref_state, ref_app, 1000)
        assert dist.sigma == pytest.approx(math.sqrt(0.05), rel=1e-15)
        assert dist.weights == pytest.approx([0.2, 0.8], rel=1e-14)
        assert np.array_equal(dist.centers, [-1.0, 1.0])

    def test_grid_normalization(self, ref_state, ref_app):
        dist = average_distribution(ref_state, ref_app, 1000)
        assert dist.normalization() == pytest.approx(1.0, abs=1e-9)

    def test_moments(self, ref_state, ref_app):
        dist = average_distribution(ref_state, ref_app, 200)
        assert dist.mean() == pytest.approx(0.6, abs=1e-14)
        assert dist.variance() == pytest.approx(0.64 + 100.0 / (2 * 200),
                                                rel=1e-13)

    def test_bin_masses_sum_to_one(self, ref_state, ref_app):
        dist = average_distribution(ref_state, ref_app, 500)
        edges = np.linspace(-4.0, 4.0, 51)
        masses = dist.bin_masses(edges)
        assert masses.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(masses >= 0.0)

    def test_lobes_separate_as_steps_grow(self, ref_state, ref_app):
        narrow = average_distribution(ref_state, ref_app, 10_000)
        masses = narrow.bin_masses(np.array([-math.inf, 0.0, math.inf]))
        assert masses[0] == pytest.approx(0.2, abs=1e-10)
        assert masses[1] == pytest.approx(0.8, abs=1e-10)

    def test_custom_grid_validation(self, ref_state, ref_app):
        with pytest.raises(ValueError, match="strictly increasing"):
            average_distribution(ref_state, ref_app, 10, grid=[0.0, 0.0, 1.0])
        with pytest.raises(ValueError):
            average_distribution(ref_state, ref_app, 0)

    def test_tabulated_density_matches_closed_form(self, ref_state, ref_app):
        dist = average_distribution(ref_state, ref_app, 50)
        sigma = dist.sigma
        at_one = (0.8 / (sigma * math.sqrt(2 * math.pi))
                  + 0.2 * math.exp(-2.0 / sigma**2)
                  / (sigma * math.sqrt(2 * math.pi)))
        idx = int(np.argmin(np.abs(dist.grid - 1.0)))
        assert dist.density[idx] == pytest.approx(at_one, rel=1e-3)


def test_no_stray_warnings(ref_state, ref_app):
    # analytic paths must be silent away from their validity edges
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ensemble_mean(ref_state)
        outcome_variance(ref_state, ref_app)
        expected_reduced_density_after_M(ref_state, ref_app, 100)
        disturbance(ref_state, 0.5)
        average_distribution(ref_state, ref_app, 100)
