"""
Conditioned stochastic master equation (Ito form)

    d rho_c = (L + gamma_m D[c]) rho_c dt + sqrt(eta gamma_m) H[c] rho_c dW

with record dY = sqrt(eta gamma_m) Tr[(c + c^dag) rho_c] dt + dW.

Integration is the explicit Euler-Maruyama scheme with hermitization and
trace renormalization after every step. Many trajectories advance together
as one (n, d, d) array; `simulate_trajectory` is the n = 1 case.

Noise for trajectory `i` of seed `s` comes from a Philox generator keyed by
the two 64-bit words (s, i); its counter advances with the step index, so a
trajectory's increments never depend on which other trajectories run or in
what order.
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

BLOWUP_NORM = 1e3
TRAJECTORY_PSD_TOL = 1e-6
SEED_LIMIT = 2 ** 64

@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t_final: float
    seed: int = 0
    sample_stride: int = 1
    renormalize: bool = True
    psd_tol: float = TRAJECTORY_PSD_TOL

    def __post_init__(self):
        if not self.dt > 0:
            raise fw.StepSizeInvalid(f'dt must be positive, got {self.dt}')
        if not self.t_final >= 0:
            raise fw.StepSizeInvalid(f't_final must be non-negative, got {self.t_final}')
        if self.sample_stride < 1:
            raise fw.RangeError(f'sample_stride must be >= 1, got {self.sample_stride}')
        if not 0 <= self.seed < SEED_LIMIT:
            raise fw.RangeError(f'seed must be an unsigned 64-bit integer, got {self.seed}')

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def sample_steps(self):
        return np.arange(0, self.n_steps + 1, self.sample_stride)

    @property
    def times(self):
        return self.sample_steps * self.dt


@dataclass(frozen=True)
class MeasurementRecord:
    increments: np.ndarray
    dt: float

    @property
    def times(self):
        """
        Start time of each increment.
        """
        return np.arange(len(self.increments)) * self.dt

    def integrated(self):
        """
        Y_t at the end of each step.
        """
        return np.cumsum(self.increments)


@dataclass(frozen=True)
class TrajectoryPath:
    times: np.ndarray
    states: np.ndarray
    expectations: np.ndarray
    record: MeasurementRecord
    min_eigenvalue: float

    @property
    def purities(self):
        return ops.purity(self.states)


@dataclass
class BatchResult:
    trajectory_ids: list
    times: np.ndarray
    states: np.ndarray
    records: np.ndarray = None
    min_eigenvalues: np.ndarray = None
    failures: dict = field(default_factory=dict)

    def survivors(self):
        """
        Row mask of trajectories that finished.
        """
        return np.array([i not in self.failures for i in self.trajectory_ids], dtype=bool)


def innovation_apply(c, rho):
    """
    H[c]rho = c rho + rho c^dag - Tr[(c + c^dag) rho] rho
    """
    ops.check_dims(c, rho)
    tr = ops.trace(rho)
    if abs(tr - 1) > 1e-9:
        raise fw.NonUnitTrace(f'innovation needs a unit-trace state, got trace {tr:.12g}')
    cdag = ops.dagger(c)
    return c @ rho + rho @ cdag - ops.trace((c + cdag) @ rho) * rho

def record_increment(rho, spec, dw, dt):
    signal = np.real(ops.trace((spec.c + ops.dagger(spec.c)) @ rho))
    return spec.noise_coefficient * signal * dt + dw

def _update(rho, drift_t, c, cdag, coeff, dt, dw, renormalize):
    signal = np.real(ops.trace((c + cdag) @ rho))
    det = ops.devectorize(ops.vectorize(rho) @ drift_t)
    innovation = c @ rho + rho @ cdag - signal[:, None, None] * rho
    new = rho + det * dt + (coeff * dw)[:, None, None] * innovation
    new = ops.hermitize(new)
    if renormalize:
        new = new / np.real(ops.trace(new))[:, None, None]
    return new

def _drift_transpose(model, spec):
    # rows are vectorized states, so the superoperator acts from the right
    return lindblad.liouvillian_matrix(monitoring.measured_liouvillian(model, spec)).T

def sme_step(rho, model, spec, dt, dw, renormalize=True):
    """
    One Euler-Maruyama step of the conditioned state.

    :param dw: Wiener increment with variance dt, supplied by the caller.
    """
    rho = ops.as_operator(rho, model.dim)
    ops.check_dims(rho, spec.c)
    if not dt > 0:
        raise fw.StepSizeInvalid(f'dt must be positive, got {dt}')
    with np.errstate(all='ignore'):
        new = _update(rho[None], _drift_transpose(model, spec), spec.c,
                      ops.dagger(spec.c), spec.noise_coefficient, dt,
                      np.array([dw], dtype=float), renormalize)[0]
    norm = ops.frobenius_norm(new)
    if not norm <= BLOWUP_NORM:
        raise fw.StateBlowup(f'state norm {norm:.3e} exceeds {BLOWUP_NORM:g}')
    return new

def noise_generator(seed, trajectory_id):
    key = np.array([seed, trajectory_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

def wiener_increments(seed, trajectory_id, n_steps, dt):
    """
    Independent N(0, dt) increments for one trajectory.
    """
    return noise_generator(seed, trajectory_id).standard_normal(n_steps) * math.sqrt(dt)

def integrate(rho0, model, spec, config, trajectory_ids, dws=None, keep_record=True):
    """
    Advance one trajectory per id from rho0, storing every
    `config.sample_stride`-th state.

    Trajectories that blow up or leave the positive cone by more than
    `config.psd_tol` at a sampled time are frozen and reported in
    `failures`; their rows must not be used.

    :param dws: optional (n, n_steps) increments replacing the generated
        noise, for common-random-number comparisons.
    """
    rho0 = ops.as_operator(rho0, model.dim)
    ops.check_dims(rho0, spec.c)
    ids = list(trajectory_ids)
    n, d, n_steps, dt = len(ids), model.dim, config.n_steps, config.dt
    if dws is None:
        dws = np.array([wiener_increments(config.seed, i, n_steps, dt) for i in ids])
        dws = dws.reshape(n, n_steps)
    else:
        dws = np.asarray(dws, dtype=float)
        if dws.shape != (n, n_steps):
            raise fw.LengthMismatch(
                f'increments have shape {dws.shape}, expected {(n, n_steps)}')

    drift_t = _drift_transpose(model, spec)
    c, cdag, coeff = spec.c, ops.dagger(spec.c), spec.noise_coefficient
    sample_steps = config.sample_steps
    states = np.empty((n, len(sample_steps), d, d), dtype=np.complex128)
    records = np.empty((n, n_steps)) if keep_record else None
    min_eig = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    failures = {}

    def fail(mask, error, message, step):
        for j in np.flatnonzero(mask & alive):
            failures[ids[j]] = error(message, ids[j], step)
            logger.debug('trajectory %s aborted at step %d: %s', ids[j], step, message)
        alive[mask] = False

    rho = np.broadcast_to(rho0, (n, d, d)).copy()
    si = 0
    for k in range(n_steps + 1):
        if si < len(sample_steps) and sample_steps[si] == k:
            states[:, si] = rho
            lowest = np.linalg.eigvalsh(ops.hermitize(rho))[:, 0]
            min_eig = np.where(alive, np.minimum(min_eig, lowest), min_eig)
            fail(lowest < -config.psd_tol, fw.PositivityViolation,
                 f'eigenvalue below -{config.psd_tol:g}', k)
            si += 1
        if k == n_steps:
            break
        dw = dws[:, k]
        if records is not None:
            signal = np.real(ops.trace((c + cdag) @ rho))
            records[:, k] = coeff * signal * dt + dw
        with np.errstate(all='ignore'):
            new = _update(rho, drift_t, c, cdag, coeff, dt, dw, config.renormalize)
        fail(~(ops.frobenius_norm(new) <= BLOWUP_NORM), fw.StateBlowup,
             f'state norm exceeds {BLOWUP_NORM:g}', k + 1)
        new[~alive] = rho[~alive]
        rho = new

    return BatchResult(ids, config.times, states, records, min_eig, failures)

def simulate_trajectory(rho0, model, spec, config, trajectory_id=0, dws=None):
    """
    One conditioned trajectory with its measurement record.

    :raises StateBlowup, PositivityViolation: with the failing step index.
    """
    batch = integrate(rho0, model, spec, config, [trajectory_id],
                      dws=None if dws is None else np.reshape(dws, (1, -1)))
    if trajectory_id in batch.failures:
        raise batch.failures[trajectory_id]
    states = batch.states[0]
    return TrajectoryPath(
        times=batch.times,
        states=states,
        expectations=ops.expectation(spec.readout, states),
        record=MeasurementRecord(batch.records[0], config.dt),
        min_eigenvalue=float(batch.min_eigenvalues[0]),
    )

def localization_time(path, threshold=0.9):
    """
    First sampled time with |<(c + c^dag)/2>_c| > threshold, NaN if never.
    """
    hits = np.flatnonzero(np.abs(path.expectations) > threshold)
    return float(path.times[hits[0]]) if len(hits) else math.nan
