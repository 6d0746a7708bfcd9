import numpy as np
import pytest

import framework as fw
import lindblad
import models
import monitoring
import operators as ops
from conftest import random_density_matrix, random_operator

SZ = ops.pauli('z')
SX = ops.pauli('x')


class TestMonitoringSpec:

    def test_ranges(self):
        with pytest.raises(fw.RangeError):
            monitoring.MonitoringSpec(SZ, gamma_m=-1.0)
        with pytest.raises(fw.RangeError, match='eta'):
            monitoring.MonitoringSpec(SZ, gamma_m=1.0, eta=1.5)

    def test_properties(self):
        spec = monitoring.MonitoringSpec(ops.pauli('minus'), gamma_m=4.0, eta=0.25)
        assert spec.dim == 2
        assert spec.noise_coefficient == pytest.approx(1.0)
        np.testing.assert_allclose(spec.readout, SX / 2)


class TestMeasuredLiouvillian:

    def test_zero_rate_is_bare_generator(self, thermal, rng):
        measured = monitoring.measured_liouvillian(thermal, models.qnd_monitoring(0.0))
        for _ in range(10):
            rho = random_density_matrix(rng, 2)
            np.testing.assert_allclose(lindblad.liouvillian_apply(measured, rho),
                                       lindblad.liouvillian_apply(thermal, rho), atol=1e-14)

    def test_difference_is_scaled_dissipator(self, thermal, rng):
        c = random_operator(rng, 2)
        measured = monitoring.measured_liouvillian(thermal, monitoring.MonitoringSpec(c, 2.5))
        rho = random_density_matrix(rng, 2)
        diff = lindblad.liouvillian_apply(measured, rho) - lindblad.liouvillian_apply(thermal, rho)
        np.testing.assert_allclose(diff, 2.5 * lindblad.dissipator_apply(c, rho), atol=1e-12)

    def test_qnd_generator(self, thermal_params):
        gamma_m = 1.0
        measured = monitoring.measured_liouvillian(models.thermal_qubit(thermal_params),
                                                   models.qnd_monitoring(gamma_m))
        rho = np.array([[0.6, 0.2 - 0.1j], [0.2 + 0.1j, 0.4]])
        out = lindblad.liouvillian_apply(measured, rho)
        gd, gu = thermal_params.gamma_down, thermal_params.gamma_up
        # populations follow the rate equation, coherences decay at (gd+gu)/2 + 2 gamma_m
        assert out[1, 1] == pytest.approx(-gd * 0.4 + gu * 0.6)
        assert out[0, 1] == pytest.approx(-((gd + gu) / 2 + 2 * gamma_m) * rho[0, 1])

    def test_efficiency_does_not_enter(self, thermal):
        a = monitoring.measured_liouvillian(thermal, models.qnd_monitoring(3.0, eta=0.0))
        b = monitoring.measured_liouvillian(thermal, models.qnd_monitoring(3.0, eta=1.0))
        np.testing.assert_array_equal(lindblad.liouvillian_matrix(a), lindblad.liouvillian_matrix(b))

    def test_linear_in_rate(self, thermal):
        def measured(gamma_m):
            return monitoring.measured_liouvillian(thermal, monitoring.MonitoringSpec(SX, gamma_m))
        parts = [lindblad.monitored_matrix(measured(g)) for g in (0.0, 1.0, 2.0)]
        np.testing.assert_array_equal(parts[0], 0)
        np.testing.assert_array_equal(parts[2], 2 * parts[1])
        for g in (1.0, 2.0):
            np.testing.assert_array_equal(lindblad.unmonitored_matrix(measured(g)),
                                          lindblad.unmonitored_matrix(thermal))
        # the full generator adds the parts, which rounds at the last bit
        g0, g1, g2 = (lindblad.liouvillian_matrix(measured(g)) for g in (0.0, 1.0, 2.0))
        np.testing.assert_allclose(g2 - g0, 2 * (g1 - g0), rtol=0, atol=1e-14)

    def test_dimension_mismatch(self, thermal):
        with pytest.raises(fw.DimensionMismatch):
            monitoring.measured_liouvillian(thermal, monitoring.MonitoringSpec(np.eye(3), 1.0))


class TestInvarianceCheck:

    def test_qnd_is_invariant(self, thermal, thermal_steady):
        report = monitoring.invariance_check(thermal, SZ)
        assert report.invariant
        assert report.residual_norm <= 1e-12
        np.testing.assert_allclose(report.steady_state_used, thermal_steady, atol=1e-12)

    def test_identity_is_always_invariant(self, rng):
        model = lindblad.LindbladModel(ops.hermitize(random_operator(rng, 3)),
                                       (random_operator(rng, 3),))
        assert monitoring.invariance_check(model, np.eye(3)).invariant

    def test_counterexample_residual(self, thermal):
        report = monitoring.invariance_check(thermal, SX)
        assert not report.invariant
        assert report.residual_norm == pytest.approx(np.sqrt(2) / 2, abs=1e-12)

    def test_verdict_follows_tolerance(self, thermal):
        report = monitoring.invariance_check(thermal, SX, tolerance=1.0)
        assert report.invariant == (report.residual_norm <= report.tolerance)
        assert report.invariant

    def test_degenerate_model(self):
        with pytest.raises(fw.DegenerateSteadyState):
            monitoring.invariance_check(models.free_qubit(), SZ)

    def test_detuned_thermal_qubit_stays_invariant(self, thermal_params):
        model = models.thermal_qubit(thermal_params, detuning=2.0)
        assert monitoring.invariance_check(model, SZ).residual_norm <= 1e-12

    def test_driven_qubit_is_not_invariant(self):
        model = models.driven_qubit(rabi=1.0, gamma_down=1.0)
        report = monitoring.invariance_check(model, SZ)
        assert report.residual_norm > 1e-3
        points = monitoring.gamma_sweep(model, SZ, [0.0, 1.0])
        assert points[1].drift > 1e-3


class TestGammaSweep:

    def test_qnd_sweep_has_no_drift(self, thermal, thermal_params):
        rate = thermal_params.total_rate
        points = monitoring.gamma_sweep(thermal, SZ, [0.0, 0.1 * rate, rate, 10 * rate])
        assert [p.gamma_m for p in points] == [0.0, 0.1 * rate, rate, 10 * rate]
        assert all(p.drift <= 1e-10 for p in points)

    def test_single_zero_rate(self, thermal):
        points = monitoring.gamma_sweep(thermal, SX, [0.0])
        assert len(points) == 1
        assert points[0].drift <= 1e-12

    def test_counterexample_populations(self, thermal_params):
        model, c = models.counterexample_qubit(thermal_params)
        gammas = [0.0, 0.5, 2.0, 8.0]
        for point in monitoring.gamma_sweep(model, c, gammas):
            expected = models.counterexample_excited_population(thermal_params, point.gamma_m)
            assert np.real(point.steady_state[1, 1]) == pytest.approx(expected, abs=1e-10)
        point = monitoring.gamma_sweep(model, c, [2.0])[0]
        assert np.real(point.steady_state[1, 1]) == pytest.approx(3 / 8, abs=1e-10)

    def test_counterexample_drift_grows(self, thermal_params):
        model, c = models.counterexample_qubit(thermal_params)
        drifts = [p.drift for p in monitoring.gamma_sweep(model, c)]
        assert all(a < b for a, b in zip(drifts, drifts[1:]))
        assert drifts[0] > 1e-8

    def test_default_grid(self, thermal, thermal_params):
        gammas = monitoring.default_gammas(thermal)
        assert len(gammas) == 8
        assert gammas[0] == pytest.approx(1e-2 * thermal_params.total_rate)
        assert gammas[-1] == pytest.approx(1e1 * thermal_params.total_rate)

    def test_failed_points_are_recorded(self, thermal, monkeypatch):
        solve = lindblad.steady_state

        def flaky(model, *args, **kwargs):
            if any(rate == 1.0 for rate, _ in model.monitored):
                raise fw.DegenerateSteadyState(2)
            return solve(model, *args, **kwargs)

        monkeypatch.setattr(lindblad, 'steady_state', flaky)
        points = monitoring.gamma_sweep(thermal, SX, [0.5, 1.0, 2.0])
        assert [p.error is None for p in points] == [True, False, True]
        assert 'dimension 2' in points[1].error
        assert points[1].steady_state is None and np.isnan(points[1].drift)
        report = monitoring.invariance_check(thermal, SX)
        assert monitoring.theorem_consistent(report, points)


class TestSweepAgreement:

    @pytest.mark.parametrize('gamma_up', [0.2, 0.5, 2.0, 5.0])
    def test_sufficiency_and_necessity(self, gamma_up):
        params = models.QubitThermalParams(gamma_down=1.0, gamma_up=gamma_up)
        model = models.thermal_qubit(params)
        gammas = np.linspace(0, 10 * params.total_rate, 6)
        for c in (SZ, SX):
            report = monitoring.invariance_check(model, c)
            points = monitoring.gamma_sweep(model, c, gammas)
            assert monitoring.theorem_consistent(report, points)
            if report.residual_norm <= 1e-12:
                assert all(p.drift <= 1e-9 for p in points)
            if report.residual_norm >= 1e-6:
                assert any(p.drift >= 1e-8 for p in points if p.gamma_m > 0)

    def test_inconsistent_sweep_is_flagged(self, thermal):
        report = monitoring.invariance_check(thermal, SZ)
        fake = [monitoring.SweepPoint(1.0, np.eye(2) / 2, drift=0.5)]
        assert not monitoring.theorem_consistent(report, fake)
