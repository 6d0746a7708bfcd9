"""
Ensembles of conditioned trajectories and their record-averaged statistics.

Trajectory i of an ensemble draws its noise from the key (base_seed, i), so
an ensemble can be extended without recomputing its members. Trajectories
run in fixed chunks of `chunk_size`; `workers` only decides how many chunks
run at once, so results are bit-for-bit independent of it.
"""
import logging
import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

import framework as fw
import operators as ops
import trajectory

logger = logging.getLogger(__name__)

POINT_SIGMA = 4.0
SWEEP_SIGMA = 5.0

@dataclass(frozen=True)
class EnsembleConfig:
    n_trajectories: int
    base_seed: int
    trajectory: trajectory.TrajectoryConfig
    observables: dict = field(default_factory=dict)
    localization_observable: str = None
    histogram_bins: int = 20
    workers: int = 1
    chunk_size: int = 128
    max_failure_fraction: float = 0.01

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise fw.RangeError(f'n_trajectories must be >= 1, got {self.n_trajectories}')
        if not 0 <= self.base_seed < trajectory.SEED_LIMIT:
            raise fw.RangeError(f'base_seed must be an unsigned 64-bit integer, got {self.base_seed}')
        if self.workers < 1 or self.chunk_size < 1 or self.histogram_bins < 1:
            raise fw.RangeError('workers, chunk_size and histogram_bins must be >= 1')
        pairs = list(self.observables.items()) if hasattr(self.observables, 'items') \
                else list(self.observables)
        names = [name for name, _ in pairs]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise fw.RangeError(f'duplicate observable names {duplicates}')
        observables = {}
        for name, op in pairs:
            op = ops.as_operator(op)
            if ops.frobenius_norm(op - ops.dagger(op)) > ops.HERMITICITY_TOL * max(ops.frobenius_norm(op), 1.0):
                raise fw.NonPhysicalState(f'observable {name!r} is not Hermitian')
            observables[name] = ops.frozen(op)
        object.__setattr__(self, 'observables', observables)
        if self.localization_observable is not None and self.localization_observable not in observables:
            raise fw.UnknownObservable(
                f'localization observable {self.localization_observable!r} is not among '
                f'{sorted(observables)}')


@dataclass(frozen=True)
class EnsembleStats:
    times: np.ndarray
    mean_state: np.ndarray
    observable_means: dict
    expectations: dict
    localization_observable: str
    histogram_edges: np.ndarray
    localization_histogram: np.ndarray
    purity_mean: np.ndarray
    purity_sem: np.ndarray
    n_trajectories: int
    failures: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConsistencyReport:
    k: float
    reference: dict
    failing: dict

    @property
    def failure_fraction(self):
        total = sum(f.size for f in self.failing.values())
        return sum(int(f.sum()) for f in self.failing.values()) / max(total, 1)

    @property
    def passed(self):
        return self.failure_fraction == 0


@dataclass(frozen=True)
class WeakConvergenceReport:
    dts: list
    errors: list
    reference: float

    @property
    def ratios(self):
        """
        error(dt) / error(next smaller dt).
        """
        return [a / b for a, b in zip(self.errors[:-1], self.errors[1:])]


def pairwise_sum(a):
    """
    Sum over the first axis by recursive halving.
    """
    a = np.asarray(a)
    if len(a) <= 8:
        return a.sum(axis=0)
    half = len(a) // 2
    return pairwise_sum(a[:half]) + pairwise_sum(a[half:])

def _mean_sem(x):
    n = len(x)
    mean = pairwise_sum(x) / n
    if n < 2:
        return mean, np.zeros_like(mean, dtype=float)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(n)

def default_observables(spec):
    if spec.dim == 2:
        return {'sigma_z': ops.pauli('z')}
    return {'readout': spec.readout}

def _run_chunk(job):
    rho0, model, spec, config, ids = job
    batch = trajectory.integrate(rho0, model, spec, config, ids, keep_record=False)
    # exceptions do not pickle with their context, send the messages
    batch.failures = {i: str(exc) for i, exc in batch.failures.items()}
    return batch

def _chunks(n, size):
    return [range(start, min(start + size, n)) for start in range(0, n, size)]

def run_ensemble(rho0, model, spec, config):
    """
    Run `config.n_trajectories` conditioned trajectories and reduce them.

    :raises EnsembleFailure: when more than `max_failure_fraction` of the
        trajectories abort.
    """
    tconfig = replace(config.trajectory, seed=config.base_seed)
    jobs = [(rho0, model, spec, tconfig, ids)
            for ids in _chunks(config.n_trajectories, config.chunk_size)]
    logger.info('running %d trajectories in %d chunks on %d workers',
                config.n_trajectories, len(jobs), config.workers)
    if config.workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(min(config.workers, len(jobs))) as pool:
            batches = pool.map(_run_chunk, jobs)
    else:
        batches = [_run_chunk(job) for job in jobs]

    failures = {}
    for batch in batches:
        failures.update(batch.failures)
    if len(failures) > config.max_failure_fraction * config.n_trajectories:
        raise fw.EnsembleFailure(list(failures.values()), config.n_trajectories)
    if failures:
        logger.warning('%d trajectories aborted and are excluded', len(failures))
    states = np.concatenate([b.states[b.survivors()] for b in batches])

    observables = config.observables or default_observables(spec)
    return ensemble_stats(
        tconfig.times, states, observables,
        localization_observable=config.localization_observable or next(iter(observables)),
        bins=config.histogram_bins,
        failures=failures,
    )

def ensemble_stats(times, states, observables, localization_observable, bins=20, failures=None):
    """
    Reduce stacked conditioned states of shape (n, samples, d, d).
    """
    n = len(states)
    expectations = {name: ops.expectation(a, states) for name, a in observables.items()}
    purity_mean, purity_sem = _mean_sem(ops.purity(states))
    a = observables[localization_observable]
    lo, hi = np.linalg.eigvalsh(ops.hermitize(a))[[0, -1]]
    edges = np.linspace(lo, hi, bins + 1)
    x = np.clip(expectations[localization_observable], lo, hi)
    histogram = np.array([np.histogram(x[:, t], edges)[0] for t in range(x.shape[1])])
    return EnsembleStats(
        times=np.asarray(times),
        mean_state=pairwise_sum(states) / n,
        observable_means={name: _mean_sem(x) for name, x in expectations.items()},
        expectations=expectations,
        localization_observable=localization_observable,
        histogram_edges=edges,
        localization_histogram=histogram,
        purity_mean=purity_mean,
        purity_sem=purity_sem,
        n_trajectories=n,
        failures=dict(failures or {}),
    )

def uncollapse_noise_floor(n_trajectories, k=POINT_SIGMA):
    """
    k sqrt(2) / sqrt(n): bound on |mean_state - rho_ss|_F for two-level
    populations averaged over n trajectories.
    """
    return k * math.sqrt(2) / math.sqrt(n_trajectories)

def dissipative_uncollapse_metric(stats, rho_ss):
    """
    |mean_state(t) - rho_ss|_F at every sampled time. `rho_ss` is one matrix
    or one per sampled time.
    """
    ref = np.asarray(rho_ss, dtype=np.complex128)
    if ref.shape[-2:] != stats.mean_state.shape[-2:]:
        raise fw.GridMismatch(
            f'reference of shape {ref.shape} does not match states {stats.mean_state.shape}')
    if ref.ndim == 3 and len(ref) != len(stats.times):
        raise fw.GridMismatch(f'{len(ref)} reference states for {len(stats.times)} times')
    return ops.frobenius_norm(stats.mean_state - ref)

def _expectations(stats, observable):
    name = stats.localization_observable if observable is None else observable
    if name not in stats.expectations:
        raise fw.UnknownObservable(f'no observable {name!r}; known: {sorted(stats.expectations)}')
    return stats.expectations[name]

def bimodality_report(stats, threshold=0.9, observable=None):
    """
    Fraction of trajectories with |<obs>_c| > threshold at each sampled time.
    """
    x = _expectations(stats, observable)
    return np.mean(np.abs(x) > threshold, axis=0)

def first_passage_times(stats, threshold=0.9, observable=None):
    """
    Per trajectory, the first sampled time with |<obs>_c| > threshold, NaN if
    never.
    """
    above = np.abs(_expectations(stats, observable)) > threshold
    first = np.argmax(above, axis=1)
    return np.where(above.any(axis=1), stats.times[first], np.nan)

def dwell_times(stats, threshold=0.9, observable=None):
    """
    Durations of completed stays above threshold, pooled over trajectories.
    Stays still running at the last sample are censored and left out.
    """
    above = np.abs(_expectations(stats, observable)) > threshold
    if len(stats.times) < 2:
        return np.array([])
    step = stats.times[1] - stats.times[0]
    padded = np.pad(above.astype(np.int8), ((0, 0), (1, 0)))
    edges = np.diff(padded, axis=1)
    durations = []
    for row in edges:
        starts = np.flatnonzero(row == 1)
        ends = np.flatnonzero(row == -1)
        durations.extend((ends - starts[:len(ends)]) * step)
    return np.array(durations)

def consistency_check(stats, reference_states, k=SWEEP_SIGMA, observables=None):
    """
    Compare each observable mean with Tr(A rho_ref(t)) from a deterministic
    solution; a point fails when it is further than k standard errors away.
    """
    reference_states = np.asarray(reference_states)
    if len(reference_states) != len(stats.times):
        raise fw.GridMismatch(
            f'{len(reference_states)} reference states for {len(stats.times)} times')
    observables = observables or {}
    reference, failing = {}, {}
    for name, (mean, sem) in stats.observable_means.items():
        if name not in observables:
            continue
        expected = ops.expectation(observables[name], reference_states)
        reference[name] = expected
        failing[name] = np.abs(mean - expected) > k * sem + 1e-12
    return ConsistencyReport(k, reference, failing)

def weak_convergence(rho0, model, spec, observable, t_final, dts, n_trajectories,
                     base_seed=0, ref_factor=8):
    """
    Weak error of E[<observable>(t_final)] for each step size against a
    reference run at min(dts) / ref_factor driven by the same Brownian paths.
    """
    dts = sorted(dts, reverse=True)
    dt_ref = dts[-1] / ref_factor
    n_fine = int(round(t_final / dt_ref))
    factors = [int(round(dt / dt_ref)) for dt in dts]
    for dt, factor in zip(dts, factors):
        if not math.isclose(factor * dt_ref, dt) or n_fine % factor:
            raise fw.RangeError(f'dt={dt} is not a whole multiple of the reference step {dt_ref}')
    fine = np.array([trajectory.wiener_increments(base_seed, i, n_fine, dt_ref)
                     for i in range(n_trajectories)])

    def final_mean(factor):
        n_steps = n_fine // factor
        config = trajectory.TrajectoryConfig(
            dt=factor * dt_ref, t_final=n_steps * factor * dt_ref,
            seed=base_seed, sample_stride=n_steps)
        dws = fine.reshape(n_trajectories, n_steps, factor).sum(axis=2)
        batch = trajectory.integrate(rho0, model, spec, config, range(n_trajectories),
                                     dws=dws, keep_record=False)
        final = batch.states[batch.survivors(), -1]
        return float(np.mean(ops.expectation(observable, final)))

    reference = final_mean(1)
    errors = [abs(final_mean(factor) - reference) for factor in factors]
    logger.info('weak errors %s against reference %.6f', errors, reference)
    return WeakConvergenceReport(dts, errors, reference)
