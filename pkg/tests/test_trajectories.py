import math

import numpy as np
import pytest

from weakmeas import (
    ApparatusConfig,
    AverageDistribution,
    DensityMatrix,
    EnsembleStats,
    OutcomeSequence,
    average_distribution,
    collapse,
    default_bin_edges,
    empirical_vs_analytic,
    make_state,
    run_ensemble,
    run_trajectory,
    sample_outcome,
    terminal_frequencies,
    trajectory_stream,
)


class TestStream:
    def test_same_key_same_draws(self):
        a = trajectory_stream(42, 7).random(5)
        b = trajectory_stream(42, 7).random(5)
        assert np.array_equal(a, b)

    def test_distinct_indices_distinct_draws(self):
        a = trajectory_stream(42, 0).random(5)
        b = trajectory_stream(42, 1).random(5)
        assert not np.array_equal(a, b)

    def test_distinct_master_seeds_distinct_draws(self):
        a = trajectory_stream(1, 3).random(5)
        b = trajectory_stream(2, 3).random(5)
        assert not np.array_equal(a, b)


class TestRunTrajectory:
    def test_eigenstate_stops_immediately(self, ref_app):
        st = make_state([1.0, -1.0], [1.0, 0.0])
        rec = run_trajectory(st, ref_app, 1000, rng=trajectory_stream(0, 0))
        assert rec.steps_taken == 1
        assert rec.converged and rec.terminal_index == 1
        assert rec.terminal_fidelity == 1.0

    def test_always_takes_at_least_one_step(self, ref_app):
        st = make_state([1.0, -1.0], [1.0, 0.0])
        rec = run_trajectory(st, ref_app, 5, convergence_tol=0.5,
                             rng=trajectory_stream(0, 1))
        assert rec.steps_taken >= 1

    def test_average_consistency(self, ref_state, ref_app):
        rec = run_trajectory(ref_state, ref_app, 300, rng=trajectory_stream(3, 0),
                             early_stop=False, keep_outcomes=True)
        assert rec.steps_taken == 300
        assert rec.average == rec.outcomes.total / rec.outcomes.count
        assert rec.outcomes.outcomes.size == 300
        assert rec.first_outcome == rec.outcomes.outcomes[0]

    def test_terminal_index_iff_fidelity(self, ref_state, ref_app):
        for idx in range(40):
            rec = run_trajectory(ref_state, ref_app, 200,
                                 rng=trajectory_stream(91, idx))
            reached = rec.terminal_fidelity >= 1.0 - 1e-6
            assert rec.converged == reached
            if not reached:
                assert rec.terminal_index is None

    def test_matches_sample_and_collapse_composition(self, ref_state, ref_app):
        # the engine consumes one uniform and one normal per reading, exactly
        # like the scalar sampler, so fixed seeds must give identical records
        rng_engine = trajectory_stream(17, 4)
        rec = run_trajectory(ref_state, ref_app, 150, rng=rng_engine,
                             early_stop=False, keep_outcomes=True)
        rng_ref = trajectory_stream(17, 4)
        st = ref_state
        outcomes = []
        for _ in range(150):
            p = sample_outcome(st, ref_app, rng_ref)
            outcomes.append(p)
            st = collapse(st, ref_app, p)
        assert np.array_equal(rec.outcomes.outcomes, np.asarray(outcomes))
        assert np.allclose(rec.final_state.amplitudes, st.amplitudes, atol=1e-10)

    def test_early_stop_parity_with_composition(self, ref_state, ref_app):
        tol = 1e-6
        rec = run_trajectory(ref_state, ref_app, 100_000, tol,
                             rng=trajectory_stream(29, 11))
        rng_ref = trajectory_stream(29, 11)
        st = ref_state
        steps = 0
        while not (steps >= 1 and st.probabilities.max() >= 1.0 - tol):
            p = sample_outcome(st, ref_app, rng_ref)
            st = collapse(st, ref_app, p)
            steps += 1
        assert rec.steps_taken == steps
        assert rec.terminal_index == int(np.argmax(st.probabilities))

    def test_post_stop_collapse_barely_moves_state(self, ref_state, ref_app):
        # after convergence one more reading leaves the state essentially
        # fixed: infidelity 1 - |<psi|psi'>|^2 below ten times the tolerance
        tol = 1e-6
        for idx in range(10):
            rng = trajectory_stream(53, idx)
            rec = run_trajectory(ref_state, ref_app, 100_000, tol, rng=rng)
            assert rec.converged
            p = sample_outcome(rec.final_state, ref_app, rng)
            post = collapse(rec.final_state, ref_app, p)
            overlap = abs(np.vdot(rec.final_state.amplitudes,
                                  post.amplitudes)) ** 2
            assert 1.0 - overlap < 10.0 * tol

    def test_validation(self, ref_state, ref_app):
        with pytest.raises(ValueError):
            run_trajectory(ref_state, ref_app, 0)
        with pytest.raises(ValueError):
            run_trajectory(ref_state, ref_app, 10, convergence_tol=0.0)
        with pytest.raises(ValueError):
            run_trajectory(ref_state, ref_app, 10, convergence_tol=1.5)


class TestRunEnsemble:
    def test_counts_sum_and_masses(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 300, 200, master_seed=1,
                             early_stop=False, bins=24)
        assert stats.counts.sum() == 300
        assert stats.empirical_masses.sum() == pytest.approx(1.0, abs=1e-12)
        assert stats.tv_distance is not None

    def test_fixed_step_tv_is_small(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 2000, 1000, master_seed=2,
                             early_stop=False, bins=24)
        assert stats.tv_distance < 0.1
        again = empirical_vs_analytic(
            stats, average_distribution(ref_state, ref_app, 1000))
        assert again == stats.tv_distance

    def test_early_stop_run_has_no_tv(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 200, 100_000, master_seed=3)
        assert stats.tv_distance is None
        assert stats.mean_steps < 100_000

    def test_mean_final_density_is_valid(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 400, 100, master_seed=4,
                             early_stop=False)
        rho = stats.mean_final_density
        assert rho.min_eigenvalue() > -1e-10
        assert np.trace(rho.entries).real == pytest.approx(1.0, abs=1e-12)
        assert stats.final_density_sem.shape == rho.entries.shape

    def test_first_outcome_mean_tracks_born_average(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 4000, 50, master_seed=5,
                             early_stop=False)
        sem = math.sqrt(50.64 / 4000)
        assert abs(stats.first_outcome_mean - 0.6) < 4 * sem

    def test_worker_count_invariance(self, ref_state, ref_app):
        serial = run_ensemble(ref_state, ref_app, 120, 80, master_seed=6,
                              early_stop=False, bins=16)
        parallel = run_ensemble(ref_state, ref_app, 120, 80, master_seed=6,
                                early_stop=False, bins=16, workers=3)
        assert np.array_equal(serial.counts, parallel.counts)
        assert serial.mean_average == parallel.mean_average
        assert serial.mean_steps == parallel.mean_steps
        assert np.array_equal(serial.mean_final_density.entries,
                              parallel.mean_final_density.entries)
        assert serial.tv_distance == parallel.tv_distance

    def test_explicit_edges_and_clipping(self, ref_state, ref_app):
        edges = np.array([0.55, 0.6, 0.65])  # far narrower than the data
        stats = run_ensemble(ref_state, ref_app, 50, 20, master_seed=7,
                             early_stop=False, bins=edges)
        assert stats.counts.sum() == 50

    def test_records_kept_on_request(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 10, 30, master_seed=8,
                             early_stop=False, keep_records=True)
        assert stats.records is not None and len(stats.records) == 10
        assert [r.seed_id for r in stats.records] == list(range(10))
        assert stats.records is not None

    def test_validation(self, ref_state, ref_app):
        with pytest.raises(ValueError):
            run_ensemble(ref_state, ref_app, 0, 10)
        with pytest.raises(ValueError):
            run_ensemble(ref_state, ref_app, 10, 10, workers=0)
        with pytest.raises(ValueError, match="strictly increasing"):
            run_ensemble(ref_state, ref_app, 10, 10, bins=np.array([1.0, 1.0]))


class TestBinEdges:
    def test_shape_and_padding(self, ref_state, ref_app):
        edges = default_bin_edges(ref_state.spectrum, ref_app, 1000, bins=24)
        sigma = 10.0 / math.sqrt(2000.0)
        assert edges.size == 25
        assert edges[0] == pytest.approx(-1.0 - 4 * sigma, rel=1e-14)
        assert edges[-1] == pytest.approx(1.0 + 4 * sigma, rel=1e-14)

    def test_bins_validation(self, ref_state, ref_app):
        with pytest.raises(ValueError):
            default_bin_edges(ref_state.spectrum, ref_app, 100, bins=0)


def _synthetic_stats(ref_state, counts, edges):
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    d = ref_state.dimension
    return EnsembleStats(
        trajectories=n, master_seed=0, max_steps=1, convergence_tol=1e-6,
        early_stop=False, born_weights=ref_state.probabilities,
        bin_edges=np.asarray(edges, dtype=float), counts=counts,
        terminal_counts=np.zeros(d, dtype=np.int64), unconverged=n,
        mean_average=0.0, mean_steps=1.0, first_outcome_mean=0.0,
        mean_final_density=DensityMatrix(np.eye(d) / d),
        final_density_sem=np.zeros((d, d)), tv_distance=None)


def _point_mass_distribution(center, lo, hi):
    return AverageDistribution(
        steps=1, weights=np.array([1.0]), centers=np.array([float(center)]),
        sigma=1e-3, grid=np.array([lo, hi]), density=np.array([0.0, 0.0]))


class TestEmpiricalVsAnalytic:
    def test_identical_gives_zero(self, ref_state):
        edges = np.linspace(0.0, 10.0, 11)
        counts = np.zeros(10, dtype=int)
        counts[4] = 1000  # all mass in the bin holding the point mass
        stats = _synthetic_stats(ref_state, counts, edges)
        dist = _point_mass_distribution(4.5, 0.0, 10.0)
        assert empirical_vs_analytic(stats, dist) == pytest.approx(0.0,
                                                                   abs=1e-12)

    def test_disjoint_gives_one(self, ref_state):
        edges = np.linspace(0.0, 10.0, 11)
        counts = np.zeros(10, dtype=int)
        counts[0] = 1000
        stats = _synthetic_stats(ref_state, counts, edges)
        dist = _point_mass_distribution(8.5, 0.0, 10.0)
        assert empirical_vs_analytic(stats, dist) == pytest.approx(1.0,
                                                                   abs=1e-12)

    def test_grid_must_cover_edges(self, ref_state):
        edges = np.linspace(0.0, 10.0, 11)
        counts = np.zeros(10, dtype=int)
        counts[0] = 10
        stats = _synthetic_stats(ref_state, counts, edges)
        dist = _point_mass_distribution(5.0, 2.0, 10.0)
        with pytest.raises(ValueError, match="bin mismatch"):
            empirical_vs_analytic(stats, dist)


class TestTerminalFrequencies:
    def test_eigenstate_ensemble(self, ref_app):
        st = make_state([1.0, -1.0], [1.0, 0.0])
        stats = run_ensemble(st, ref_app, 50, 10, master_seed=9)
        tf = terminal_frequencies(stats)
        assert tf.frequencies[1] == 1.0
        assert tf.chi_square == 0.0
        assert tf.p_value == 1.0
        assert tf.dof == 0

    def test_tracks_born_weights(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 800, 100_000, master_seed=10)
        assert stats.unconverged == 0
        tf = terminal_frequencies(stats)
        assert tf.frequencies.sum() == pytest.approx(1.0, abs=1e-12)
        assert abs(tf.frequencies[1] - 0.8) < 4 * math.sqrt(0.16 / 800)
        assert tf.p_value > 1e-4
        assert tf.as_pairs()[1][0] == 1

    def test_unconverged_rejected(self, ref_state, ref_app):
        stats = run_ensemble(ref_state, ref_app, 20, 1, master_seed=11,
                             convergence_tol=1e-12)
        assert stats.unconverged > 0
        with pytest.raises(ValueError, match="did not converge"):
            terminal_frequencies(stats)


class TestEnsembleStatsValidation:
    def test_counts_must_sum(self, ref_state):
        edges = np.linspace(0.0, 1.0, 3)
        with pytest.raises(ValueError, match="sum"):
            EnsembleStats(
                trajectories=5, master_seed=0, max_steps=1,
                convergence_tol=1e-6, early_stop=False,
                born_weights=ref_state.probabilities, bin_edges=edges,
                counts=np.array([1, 1]), terminal_counts=np.array([0, 5]),
                unconverged=0, mean_average=0.0, mean_steps=1.0,
                first_outcome_mean=0.0,
                mean_final_density=DensityMatrix(np.eye(2) / 2),
                final_density_sem=np.zeros((2, 2)), tv_distance=None)

    def test_terminal_counts_must_sum(self, ref_state):
        edges = np.linspace(0.0, 1.0, 3)
        with pytest.raises(ValueError, match="terminal"):
            EnsembleStats(
                trajectories=5, master_seed=0, max_steps=1,
                convergence_tol=1e-6, early_stop=False,
                born_weights=ref_state.probabilities, bin_edges=edges,
                counts=np.array([2, 3]), terminal_counts=np.array([0, 2]),
                unconverged=0, mean_average=0.0, mean_steps=1.0,
                first_outcome_mean=0.0,
                mean_final_density=DensityMatrix(np.eye(2) / 2),
                final_density_sem=np.zeros((2, 2)), tv_distance=None)
