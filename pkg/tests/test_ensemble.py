import math

import numpy as np
import pytest

import ensemble
import framework as fw
import lindblad
import models
import monitoring
import operators as ops
import trajectory

SZ = ops.pauli('z')
SX = ops.pauli('x')
MIXED = ops.maximally_mixed(2)

def run(rho0, model, spec, n, dt, t_final, stride=1, seed=0, **kwargs):
    config = ensemble.EnsembleConfig(
        n_trajectories=n, base_seed=seed,
        trajectory=trajectory.TrajectoryConfig(dt=dt, t_final=t_final, sample_stride=stride),
        **kwargs)
    return ensemble.run_ensemble(rho0, model, spec, config)


class TestConfig:

    def test_validation(self):
        tconfig = trajectory.TrajectoryConfig(dt=0.1, t_final=1.0)
        with pytest.raises(fw.RangeError):
            ensemble.EnsembleConfig(0, 0, tconfig)
        with pytest.raises(fw.RangeError):
            ensemble.EnsembleConfig(1, -1, tconfig)
        with pytest.raises(fw.RangeError, match='duplicate'):
            ensemble.EnsembleConfig(1, 0, tconfig, observables=[('z', SZ), ('z', SX)])
        with pytest.raises(fw.NonPhysicalState):
            ensemble.EnsembleConfig(1, 0, tconfig, observables={'a': ops.pauli('minus')})
        with pytest.raises(fw.UnknownObservable):
            ensemble.EnsembleConfig(1, 0, tconfig, observables={'z': SZ},
                                    localization_observable='x')


class TestReductions:

    def test_pairwise_sum(self, rng):
        x = rng.normal(size=(1001, 3))
        np.testing.assert_allclose(ensemble.pairwise_sum(x), x.sum(axis=0), rtol=1e-12)

    def test_expectation_of_mean_state(self, thermal):
        stats = run(MIXED, thermal, models.qnd_monitoring(2.0), 50, 1e-3, 0.2, stride=20,
                    observables={'z': SZ, 'x': SX})
        for name, a in (('z', SZ), ('x', SX)):
            np.testing.assert_allclose(stats.observable_means[name][0],
                                       ops.expectation(a, stats.mean_state), atol=1e-12)

    def test_single_trajectory_is_the_path(self, thermal):
        spec = models.qnd_monitoring(2.0)
        tconfig = trajectory.TrajectoryConfig(dt=1e-3, t_final=0.3, seed=12, sample_stride=10)
        config = ensemble.EnsembleConfig(1, 12, tconfig)
        stats = ensemble.run_ensemble(MIXED, thermal, spec, config)
        path = trajectory.simulate_trajectory(MIXED, thermal, spec, tconfig)
        np.testing.assert_array_equal(stats.mean_state, path.states)
        np.testing.assert_array_equal(stats.observable_means['sigma_z'][1], 0)

    def test_mean_state_is_physical(self, thermal):
        stats = run(MIXED, thermal, models.qnd_monitoring(2.0), 100, 1e-3, 0.5, stride=50)
        for rho in stats.mean_state:
            assert ops.is_density_matrix(rho, psd_tol=1e-4)

    def test_standard_error_scaling(self, thermal, thermal_steady):
        spec = models.qnd_monitoring(4.0)
        small = run(thermal_steady, thermal, spec, 100, 1e-3, 0.5, stride=100)
        large = run(thermal_steady, thermal, spec, 400, 1e-3, 0.5, stride=100, seed=1)
        ratio = small.observable_means['sigma_z'][1][-1] / large.observable_means['sigma_z'][1][-1]
        assert ratio == pytest.approx(2.0, rel=0.3)

    def test_histogram(self, thermal):
        stats = run(MIXED, thermal, models.qnd_monitoring(2.0), 40, 1e-3, 0.1, stride=10,
                    histogram_bins=10)
        assert stats.histogram_edges[0] == pytest.approx(-1)
        assert stats.histogram_edges[-1] == pytest.approx(1)
        assert stats.localization_histogram.shape == (len(stats.times), 10)
        np.testing.assert_array_equal(stats.localization_histogram.sum(axis=1), 40)


class TestReproducibility:

    def test_workers_do_not_change_results(self, thermal):
        spec = models.qnd_monitoring(3.0)
        a = run(MIXED, thermal, spec, 64, 1e-3, 0.2, stride=10, seed=5, chunk_size=16)
        b = run(MIXED, thermal, spec, 64, 1e-3, 0.2, stride=10, seed=5, chunk_size=16, workers=3)
        np.testing.assert_array_equal(a.mean_state, b.mean_state)
        np.testing.assert_array_equal(a.purity_mean, b.purity_mean)
        np.testing.assert_array_equal(a.observable_means['sigma_z'][1],
                                      b.observable_means['sigma_z'][1])

    def test_extending_keeps_members(self, thermal):
        spec = models.qnd_monitoring(3.0)
        a = run(MIXED, thermal, spec, 10, 1e-3, 0.1, stride=10, seed=5, chunk_size=10)
        b = run(MIXED, thermal, spec, 20, 1e-3, 0.1, stride=10, seed=5, chunk_size=10)
        np.testing.assert_array_equal(a.expectations['sigma_z'], b.expectations['sigma_z'][:10])

    def test_too_many_failures(self, thermal):
        coarse = trajectory.TrajectoryConfig(dt=0.5, t_final=2.0)
        config = ensemble.EnsembleConfig(20, 0, coarse)
        with pytest.raises(fw.EnsembleFailure) as info:
            ensemble.run_ensemble(MIXED, thermal, models.qnd_monitoring(50.0), config)
        assert len(info.value.failures) > 0.01 * 20


class TestUncollapse:

    def test_noise_floor(self):
        assert ensemble.uncollapse_noise_floor(1000) == pytest.approx(4 * math.sqrt(2) / math.sqrt(1000))
        assert ensemble.uncollapse_noise_floor(100) / ensemble.uncollapse_noise_floor(400) == pytest.approx(2)

    def test_grid_mismatch(self, thermal, thermal_steady):
        stats = run(thermal_steady, thermal, models.qnd_monitoring(1.0), 5, 1e-3, 0.01)
        with pytest.raises(fw.GridMismatch):
            ensemble.dissipative_uncollapse_metric(stats, np.eye(3) / 3)
        with pytest.raises(fw.GridMismatch):
            ensemble.dissipative_uncollapse_metric(stats, np.stack([thermal_steady] * 3))
        d = ensemble.dissipative_uncollapse_metric(stats, thermal_steady)
        assert d[0] == 0

    @pytest.mark.slow
    def test_partial_collapse(self):
        params = models.QubitThermalParams(gamma_down=0.75, gamma_up=0.25)
        model = models.thermal_qubit(params)
        rho_ss = models.thermal_qubit_steady_state(params)
        rate = params.total_rate
        n = 1000
        stats = run(rho_ss, model, models.qnd_monitoring(10 * rate), n, 1e-4, 10 / rate,
                    stride=100, seed=2024, workers=4)
        assert not stats.failures
        d = ensemble.dissipative_uncollapse_metric(stats, rho_ss)
        assert np.all(d <= ensemble.uncollapse_noise_floor(n))
        late = stats.times >= stats.times[-1] / 2
        assert np.mean(stats.purity_mean[late]) - ops.purity(rho_ss) >= 0.1
        measured = monitoring.measured_liouvillian(model, models.qnd_monitoring(10 * rate))
        reference = lindblad.evolve(measured, rho_ss, stats.times, 1e-3)
        report = ensemble.consistency_check(stats, reference, k=5, observables={'sigma_z': SZ})
        assert report.failure_fraction <= 0.01

    @pytest.mark.slow
    def test_non_invariant_ensemble_moves(self, thermal_params):
        model, c = models.counterexample_qubit(thermal_params)
        spec = monitoring.MonitoringSpec(c, 2.0)
        stats = run(models.thermal_qubit_steady_state(thermal_params), model, spec, 400, 5e-4, 2.0,
                    stride=100, seed=8, observables={'sigma_z': SZ, 'sigma_x': SX})
        target = monitoring.gamma_sweep(model, c, [2.0])[0].steady_state
        late = stats.times >= 1.0
        for name, a in (('sigma_z', SZ), ('sigma_x', SX)):
            mean, sem = stats.observable_means[name]
            assert np.all(np.abs(mean[late] - ops.expectation(a, target)) <= 4 * sem[late] + 1e-9)


class TestConsistency:

    @pytest.mark.slow
    def test_matches_master_equation_from_excited_state(self, thermal):
        spec = models.qnd_monitoring(1.0)
        rho0 = ops.basis_state(1, 2)
        stats = run(rho0, thermal, spec, 1000, 1e-3, 3.0, stride=100, seed=99)
        reference = lindblad.evolve(monitoring.measured_liouvillian(thermal, spec), rho0,
                                    stats.times, 1e-3)
        report = ensemble.consistency_check(stats, reference, k=5, observables={'sigma_z': SZ})
        assert report.passed
        np.testing.assert_allclose(report.reference['sigma_z'][0], -1)

    def test_report(self):
        stats = ensemble.ensemble_stats(
            np.array([0.0, 1.0]),
            np.stack([np.stack([ops.basis_state(0, 2), ops.basis_state(0, 2)]),
                      np.stack([ops.basis_state(0, 2), ops.basis_state(1, 2)])]),
            {'z': SZ}, 'z')
        reference = np.stack([ops.basis_state(0, 2), ops.basis_state(0, 2)])
        report = ensemble.consistency_check(stats, reference, k=1, observables={'z': SZ})
        np.testing.assert_array_equal(report.failing['z'], [False, False])
        report = ensemble.consistency_check(stats, reference, k=0.5, observables={'z': SZ})
        np.testing.assert_array_equal(report.failing['z'], [False, True])
        assert report.failure_fraction == 0.5
        with pytest.raises(fw.GridMismatch):
            ensemble.consistency_check(stats, reference[:1])


class TestLocalization:

    def stats(self):
        z = np.array([[0.0, 0.95, 0.95, 0.2, 0.99],
                      [0.0, 0.1, -0.92, -0.93, -0.5],
                      [0.0, 0.0, 0.0, 0.0, 0.0]])
        states = np.zeros(z.shape + (2, 2), dtype=complex)
        states[..., 0, 0] = (1 + z) / 2
        states[..., 1, 1] = (1 - z) / 2
        return ensemble.ensemble_stats(np.arange(5) * 0.1, states, {'sigma_z': SZ}, 'sigma_z')

    def test_bimodality(self):
        np.testing.assert_allclose(ensemble.bimodality_report(self.stats()),
                                   [0, 1 / 3, 2 / 3, 1 / 3, 1 / 3])

    def test_first_passage(self):
        got = ensemble.first_passage_times(self.stats())
        np.testing.assert_allclose(got[:2], [0.1, 0.2])
        assert np.isnan(got[2])

    def test_dwell_times_skip_censored_stays(self):
        np.testing.assert_allclose(sorted(ensemble.dwell_times(self.stats())), [0.2, 0.2])

    def test_unknown_observable(self):
        with pytest.raises(fw.UnknownObservable):
            ensemble.bimodality_report(self.stats(), observable='sigma_x')

    def test_starts_unlocalized_from_mixed_state(self, thermal):
        stats = run(MIXED, thermal, models.qnd_monitoring(2.0), 20, 1e-3, 0.1, stride=10)
        assert ensemble.bimodality_report(stats)[0] == 0

    def test_no_measurement_no_localization(self, thermal):
        stats = run(MIXED, thermal, models.qnd_monitoring(0.0), 20, 1e-3, 0.5, stride=50)
        unconditional = lindblad.evolve(thermal, MIXED, stats.times, 1e-3)
        expected = (np.abs(ops.expectation(SZ, unconditional)) > 0.9).astype(float)
        np.testing.assert_array_equal(ensemble.bimodality_report(stats), expected)

    @pytest.mark.slow
    def test_zeno_fraction(self):
        model = models.thermal_qubit(models.QubitThermalParams(0.05, 0.05))
        stats = run(MIXED, model, models.qnd_monitoring(5.0), 200, 1e-4, 4.0, stride=100, seed=3)
        assert ensemble.bimodality_report(stats)[-1] > 0.6

    @pytest.mark.slow
    def test_localization_time_scales_with_rate(self):
        medians = []
        for gamma_m, dt, t_final in ((1.0, 1e-3, 5.0), (10.0, 1e-4, 0.5)):
            stats = run(MIXED, models.free_qubit(), models.qnd_monitoring(gamma_m), 200, dt,
                        t_final, seed=31)
            passage = ensemble.first_passage_times(stats)
            assert np.all(np.isfinite(passage))
            median = np.median(passage)
            expected = models.mean_localization_time(1.0, gamma_m)
            assert expected / 3 <= median <= 3 * expected
            # in units of the measurement time 1 / (eta gamma_m) the median sits
            # near 0.26, under a third: the mean is a tanh(a) / 4 = 0.33 and
            # first passage is skewed to the right
            scaled = median * gamma_m
            assert 0.15 <= scaled <= 0.4
            medians.append(median)
        assert 5 <= medians[0] / medians[1] <= 20


@pytest.mark.slow
def test_weak_order_one():
    model = models.thermal_qubit(models.QubitThermalParams(gamma_down=1.5, gamma_up=0.5))
    report = ensemble.weak_convergence(
        ops.basis_state(1, 2), model, models.qnd_monitoring(0.2), SZ,
        t_final=1.0, dts=[0.04, 0.02], n_trajectories=4000, base_seed=77)
    assert report.dts == [0.04, 0.02]
    assert 1.4 <= report.ratios[0] <= 2.6

def test_weak_convergence_grid():
    model = models.thermal_qubit(models.QubitThermalParams(1.0, 0.0))
    with pytest.raises(fw.RangeError):
        ensemble.weak_convergence(MIXED, model, models.qnd_monitoring(1.0), SZ,
                                  t_final=1.0, dts=[0.03, 0.02], n_trajectories=2)
