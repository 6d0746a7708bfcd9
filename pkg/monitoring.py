"""
Unconditional effect of continuous measurement and the invariance test.

Monitoring c at rate gamma_m adds gamma_m * D[c] to the generator, whatever
the efficiency. A steady state survives monitoring at every rate exactly when
D[c] rho_ss = 0; `invariance_check` tests that directly and `gamma_sweep`
tests it through the measured steady states.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

import framework as fw
import lindblad
import operators as ops

logger = logging.getLogger(__name__)

INVARIANCE_TOL = 1e-10
SWEEP_DRIFT_TOL = 1e-9

@dataclass(frozen=True)
class MonitoringSpec:
    c: np.ndarray
    gamma_m: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.gamma_m >= 0:
            problems.append(f'gamma_m must be >= 0, got {self.gamma_m}')
        if not 0 <= self.eta <= 1:
            problems.append(f'eta must lie in [0, 1], got {self.eta}')
        if problems:
            raise fw.RangeError('; '.join(problems))
        object.__setattr__(self, 'c', ops.frozen(ops.as_operator(self.c)))
        object.__setattr__(self, 'gamma_m', float(self.gamma_m))
        object.__setattr__(self, 'eta', float(self.eta))

    @property
    def dim(self):
        return self.c.shape[0]

    @property
    def noise_coefficient(self):
        return math.sqrt(self.eta * self.gamma_m)

    @property
    def readout(self):
        """
        (c + c^dag) / 2, whose conditioned expectation the record tracks.
        """
        return ops.hermitize(self.c)


@dataclass(frozen=True)
class InvarianceReport:
    residual_norm: float
    invariant: bool
    tolerance: float
    steady_state_used: np.ndarray


@dataclass(frozen=True)
class SweepPoint:
    gamma_m: float
    steady_state: np.ndarray = None
    drift: float = math.nan
    error: str = None


def measured_liouvillian(model, spec):
    """
    The model whose generator is L + gamma_m D[c]. Efficiency plays no part.
    """
    if spec.dim != model.dim:
        raise fw.DimensionMismatch(
            f'measurement operator has dimension {spec.dim}, model {model.dim}')
    return model.with_monitored(spec.gamma_m, spec.c)

def invariance_check(model, c, tolerance=INVARIANCE_TOL):
    c = ops.as_operator(c, model.dim)
    rho_ss = lindblad.steady_state(model)
    residual = float(ops.frobenius_norm(lindblad.dissipator_apply(c, rho_ss)))
    logger.info('invariance residual %.3e (tolerance %.1e)', residual, tolerance)
    return InvarianceReport(
        residual_norm=residual,
        invariant=residual <= tolerance,
        tolerance=tolerance,
        steady_state_used=rho_ss,
    )

def default_gammas(model, points=8):
    """
    Logarithmic grid over [1e-2, 1e1] times the model's dissipation scale.
    """
    scale = model.characteristic_rate() or 1.0
    return list(np.geomspace(1e-2, 1e1, points) * scale)

def gamma_sweep(model, c, gammas=None):
    """
    Steady state of L + gamma_m D[c] for each rate and its drift
    |rho_ss(gamma_m) - rho_ss(0)|_F. Points whose steady state is not unique
    are recorded with their error and the sweep continues.
    """
    c = ops.as_operator(c, model.dim)
    if gammas is None:
        gammas = default_gammas(model)
    reference = lindblad.steady_state(model)
    points = []
    for gamma_m in gammas:
        spec = MonitoringSpec(c, gamma_m)
        try:
            rho = lindblad.steady_state(measured_liouvillian(model, spec))
        except fw.NumericalFailure as exc:
            logger.warning('sweep point gamma_m=%g failed: %s', gamma_m, exc)
            points.append(SweepPoint(float(gamma_m), error=str(exc)))
            continue
        drift = float(ops.frobenius_norm(rho - reference))
        points.append(SweepPoint(float(gamma_m), rho, drift))
    return points

def theorem_consistent(report, points, drift_tol=SWEEP_DRIFT_TOL):
    """
    True when the sweep agrees with the residual: invariant models show no
    drift at any rate, non-invariant ones drift somewhere above zero rate.
    """
    solved = [p for p in points if p.error is None]
    if report.invariant:
        return all(p.drift <= drift_tol for p in solved)
    return any(p.drift > drift_tol for p in solved if p.gamma_m > 0)
