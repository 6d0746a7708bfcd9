"""
Built-in models and their closed-form references.

The thermalized qubit relaxes at gamma_down and is excited at gamma_up, with
steady state diag(1 - p, p), p = gamma_up / (gamma_up + gamma_down). Its
steady state is diagonal, so monitoring sigma_z leaves it untouched at any
rate, while sigma_x monitoring pulls p towards 1/2 unless p is already 1/2.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

import framework as fw
import lindblad
import monitoring
import operators as ops

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class QubitThermalParams:
    gamma_down: float
    gamma_up: float

    def __post_init__(self):
        if self.gamma_down < 0 or self.gamma_up < 0:
            raise fw.RangeError(
                f'rates must be non-negative, got gamma_down={self.gamma_down}, '
                f'gamma_up={self.gamma_up}')
        if self.gamma_down + self.gamma_up == 0:
            raise fw.AllRatesZero('gamma_down + gamma_up must be positive')

    @property
    def total_rate(self):
        return self.gamma_down + self.gamma_up

    @property
    def excited_population(self):
        return self.gamma_up / self.total_rate


def thermal_qubit(params, detuning=0.0):
    """
    :param detuning: optional H = detuning * sigma_z / 2; it commutes with the
        diagonal steady state and changes neither the steady state nor its
        invariance.
    """
    return lindblad.LindbladModel(
        hamiltonian=detuning / 2 * ops.pauli('z'),
        jumps=(math.sqrt(params.gamma_down) * ops.pauli('minus'),
               math.sqrt(params.gamma_up) * ops.pauli('plus')),
    )

def thermal_qubit_steady_state(params):
    p = params.excited_population
    return np.diag([1 - p, p]).astype(np.complex128)

def qnd_monitoring(gamma_m, eta=1.0):
    return monitoring.MonitoringSpec(ops.pauli('z'), gamma_m, eta)

def counterexample_qubit(params):
    """
    Thermal qubit paired with c = sigma_x, whose steady state is not invariant.

    :raises DegenerateChoice: when gamma_up == gamma_down, as diag(1/2, 1/2) is
        invariant under sigma_x monitoring too.
    """
    if params.gamma_up == params.gamma_down:
        raise fw.DegenerateChoice('gamma_up == gamma_down makes sigma_x invariant')
    return thermal_qubit(params), ops.pauli('x')

def counterexample_excited_population(params, gamma_m):
    """
    Excited population of the steady state under sigma_x monitoring, from
    p1' = -gamma_down p1 + gamma_up p0 + gamma_m (p0 - p1) = 0.
    """
    return (params.gamma_up + gamma_m) / (params.total_rate + 2 * gamma_m)

def free_qubit(detuning=0.0):
    """
    Qubit without dissipation, for pure-measurement runs. It has no unique
    steady state.
    """
    return lindblad.LindbladModel(detuning / 2 * ops.pauli('z'))

def driven_qubit(rabi, gamma_down, detuning=0.0):
    """
    Resonantly driven decaying qubit, H = (rabi sigma_x + detuning sigma_z) / 2.
    Its steady state carries coherences, so sigma_z monitoring is not
    invariant for rabi != 0.
    """
    if gamma_down <= 0:
        raise fw.AllRatesZero('gamma_down must be positive')
    return lindblad.LindbladModel(
        hamiltonian=(rabi * ops.pauli('x') + detuning * ops.pauli('z')) / 2,
        jumps=(math.sqrt(gamma_down) * ops.pauli('minus'),),
    )

def mean_localization_time(eta, gamma_m, threshold=0.9):
    """
    Mean first-passage time of |<sigma_z>_c| past `threshold` from the
    maximally mixed state under pure sigma_z monitoring.

    With z = <sigma_z>_c, dz = 2 sqrt(eta gamma_m) (1 - z^2) dW; in
    y = artanh(z) and tau = 4 eta gamma_m t the exit time from |y| < a has mean
    a tanh(a).
    """
    if eta * gamma_m <= 0:
        return math.inf
    a = math.atanh(threshold)
    return a * threshold / (4 * eta * gamma_m)


@dataclass(frozen=True)
class Preset:
    """
    A named model builder for the command line.

    :param measurements: bundled measurement operators mapped to whether the
        default steady state is expected to be invariant under them (None when
        the model has no unique steady state).
    """
    name: str
    build: object
    parameters: dict
    measurements: dict = field(default_factory=dict)
    steady_state: object = None

    def model(self, **params):
        return self.build(**self.resolve(params))

    def resolve(self, params):
        unknown = set(params) - set(self.parameters)
        if unknown:
            raise fw.UnknownName(f'{self.name} has no parameters {sorted(unknown)}; '
                                 f'known: {sorted(self.parameters)}')
        return {**self.parameters, **params}


def _thermal(gamma_down, gamma_up, detuning):
    return thermal_qubit(QubitThermalParams(gamma_down, gamma_up), detuning)

def _thermal_steady(gamma_down, gamma_up, detuning):
    return thermal_qubit_steady_state(QubitThermalParams(gamma_down, gamma_up))

def _counterexample(gamma_down, gamma_up):
    return counterexample_qubit(QubitThermalParams(gamma_down, gamma_up))[0]

def _counterexample_steady(gamma_down, gamma_up):
    return thermal_qubit_steady_state(QubitThermalParams(gamma_down, gamma_up))

PRESETS = {
    'thermal_qubit': Preset(
        'thermal_qubit', _thermal,
        parameters={'gamma_down': 1.0, 'gamma_up': 0.0, 'detuning': 0.0},
        measurements={'sigma_z': True, 'identity': True},
        steady_state=_thermal_steady,
    ),
    'counterexample_qubit': Preset(
        'counterexample_qubit', _counterexample,
        parameters={'gamma_down': 3.0, 'gamma_up': 1.0},
        measurements={'sigma_x': False, 'sigma_z': True, 'identity': True},
        steady_state=_counterexample_steady,
    ),
    'driven_qubit': Preset(
        'driven_qubit', driven_qubit,
        parameters={'rabi': 1.0, 'gamma_down': 1.0, 'detuning': 0.0},
        measurements={'sigma_z': False, 'identity': True},
    ),
    'free_qubit': Preset(
        'free_qubit', free_qubit,
        parameters={'detuning': 0.0},
        measurements={'sigma_z': None, 'identity': None},
    ),
}

def preset(name):
    if name not in PRESETS:
        raise fw.UnknownName(f'unknown preset {name!r}; known: {sorted(PRESETS)}')
    return PRESETS[name]

def build_preset(name, params=None):
    return preset(name).model(**(params or {}))
