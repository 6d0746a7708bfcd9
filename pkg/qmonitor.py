import csv
import json
import logging
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import ensemble
import expconfig
import framework as fw
import lindblad
import monitoring
import operators as ops
import trajectory

__version__ = '0.1'

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ASSERTION = 3

TIME = 'time [1/rate]'

def _num(x):
    x = float(x)
    return None if math.isnan(x) else x

def _matrix(a):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a)]

def write_json(path, obj):
    with open(path, 'w') as f:
        f.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False))
        f.write('\n')

def write_table(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)

def initial_state(config, model):
    spec = config.initial_state
    if isinstance(spec, expconfig.Matrix):
        return spec.value
    if spec == 'steady':
        return lindblad.steady_state(model)
    if spec == 'maximally_mixed':
        return ops.maximally_mixed(model.dim)
    if spec == 'ground':
        return ops.basis_state(0, model.dim)
    return ops.basis_state(model.dim - 1, model.dim)

def check(checks, name, value, bound, passed):
    checks[name] = {'value': value, 'bound': bound, 'passed': bool(passed)}


class Experiment:
    """
    One run of a config: computes results, fills `checks` from the config's
    assertions and writes its tables into `directory`.
    """

    def __init__(self, config, directory):
        self.config = config
        self.directory = directory
        self.model = config.model.build()
        self.checks = {}

    def table(self, name, header, rows):
        if self.config.write_timeseries:
            write_table(self.directory / name, header, rows)

    def run(self):
        return getattr(self, 'run_' + self.config.kind.replace('-', '_'))()

    def run_invariance_check(self):
        config, asserts = self.config, self.config.assertions
        report = monitoring.invariance_check(self.model, config.c.value, config.tolerance)
        results = {
            'residual_norm': report.residual_norm,
            'tolerance': report.tolerance,
            'invariant': report.invariant,
            'verdict': 'invariant' if report.invariant else 'not invariant',
            'steady_state': _matrix(report.steady_state_used),
        }
        analytic = config.model.analytic_steady_state()
        if analytic is not None:
            results['analytic_steady_state_error'] = float(
                ops.frobenius_norm(report.steady_state_used - analytic))
        if 'invariant' in asserts:
            check(self.checks, 'invariant', report.invariant, asserts['invariant'],
                  report.invariant == asserts['invariant'])
        if 'max_residual' in asserts:
            check(self.checks, 'max_residual', report.residual_norm, asserts['max_residual'],
                  report.residual_norm <= asserts['max_residual'])
        return results

    def run_gamma_sweep(self):
        config, asserts = self.config, self.config.assertions
        c = config.c.value
        gammas = config.gammas or monitoring.default_gammas(self.model)
        report = monitoring.invariance_check(self.model, c, config.tolerance)
        points = monitoring.gamma_sweep(self.model, c, gammas)
        d = self.model.dim
        header = ['gamma_m [1/time]', 'drift [-]'] + [f'rho_{k}{k} [-]' for k in range(d)] + ['error']
        rows = []
        for p in points:
            populations = (np.real(np.diag(p.steady_state)) if p.error is None
                           else [math.nan] * d)
            rows.append([p.gamma_m, p.drift, *map(float, populations), p.error or ''])
        self.table('sweep.csv', header, rows)
        drifts = [p.drift for p in points if p.error is None]
        max_drift = max(drifts) if drifts else math.nan
        consistent = monitoring.theorem_consistent(report, points)
        if 'invariant' in asserts:
            check(self.checks, 'invariant', report.invariant, asserts['invariant'],
                  report.invariant == asserts['invariant'])
        if 'max_drift' in asserts:
            check(self.checks, 'max_drift', _num(max_drift), asserts['max_drift'],
                  max_drift <= asserts['max_drift'])
        if 'theorem_consistent' in asserts:
            check(self.checks, 'theorem_consistent', consistent, asserts['theorem_consistent'],
                  consistent == asserts['theorem_consistent'])
        return {
            'residual_norm': report.residual_norm,
            'invariant': report.invariant,
            'max_drift': _num(max_drift),
            'theorem_consistent': consistent,
            'failed_points': [p.gamma_m for p in points if p.error is not None],
            'points': len(points),
        }

    def observables(self, spec):
        return self.config.observable_operators() or ensemble.default_observables(spec)

    def run_trajectory(self):
        config, asserts = self.config, self.config.assertions
        spec = config.monitoring_spec()
        rho0 = initial_state(config, self.model)
        path = trajectory.simulate_trajectory(rho0, self.model, spec, config.trajectory)
        observables = self.observables(spec)
        values = {name: ops.expectation(a, path.states) for name, a in observables.items()}
        purities = path.purities
        header = [TIME] + [f'{name} [-]' for name in values] + ['purity [-]']
        rows = [[t, *(float(v[i]) for v in values.values()), purities[i]]
                for i, t in enumerate(path.times)]
        self.table('timeseries.csv', header, rows)
        record = path.record
        self.table('record.csv', [TIME, 'dY [sqrt(time)]', 'Y [sqrt(time)]'],
                   zip(record.times, record.increments, record.integrated()))
        name = config.localization_observable or next(iter(values))
        if name not in values:
            raise fw.UnknownObservable(f'no observable {name!r}; known: {sorted(values)}')
        above = np.flatnonzero(np.abs(values[name]) > config.threshold)
        loc_time = float(path.times[above[0]]) if len(above) else math.nan
        if 'max_localization_time' in asserts:
            check(self.checks, 'max_localization_time', _num(loc_time),
                  asserts['max_localization_time'],
                  loc_time <= asserts['max_localization_time'])
        return {
            'final_state': _matrix(path.states[-1]),
            'min_eigenvalue': path.min_eigenvalue,
            'localization_observable': name,
            'localization_time': _num(loc_time),
            'mean_purity': float(np.mean(purities)),
            'steps': len(record.increments),
        }

    def run_ensemble(self):
        config, asserts = self.config, self.config.assertions
        spec = config.monitoring_spec()
        rho0 = initial_state(config, self.model)
        econfig = config.ensemble_config()
        stats = ensemble.run_ensemble(rho0, self.model, spec, econfig)
        observables = self.observables(spec)
        measured = monitoring.measured_liouvillian(self.model, spec)
        reference = lindblad.evolve(measured, rho0, stats.times, config.trajectory.dt)
        k = asserts.get('consistency_sigma', ensemble.SWEEP_SIGMA)
        consistency = ensemble.consistency_check(stats, reference, k, observables)
        try:
            rho_ss = lindblad.steady_state(self.model)
        except fw.NumericalFailure as exc:
            logger.info('no unique steady state, skipping the uncollapse metric: %s', exc)
            rho_ss = None
        uncollapse = (ensemble.dissipative_uncollapse_metric(stats, rho_ss)
                      if rho_ss is not None else np.full(len(stats.times), math.nan))
        localized = ensemble.bimodality_report(stats, config.threshold)
        floor = ensemble.uncollapse_noise_floor(stats.n_trajectories)

        header = [TIME]
        for name in stats.observable_means:
            header += [f'{name}_mean [-]', f'{name}_sem [-]', f'{name}_reference [-]']
        header += ['purity_mean [-]', 'purity_sem [-]', 'uncollapse [-]', 'localized_fraction [-]']
        rows = []
        for i, t in enumerate(stats.times):
            row = [t]
            for name, (mean, sem) in stats.observable_means.items():
                row += [mean[i], sem[i], consistency.reference[name][i]]
            row += [stats.purity_mean[i], stats.purity_sem[i], uncollapse[i], localized[i]]
            rows.append([float(x) for x in row])
        self.table('timeseries.csv', header, rows)

        late = stats.times >= stats.times[-1] / 2
        late_purity = float(np.mean(stats.purity_mean[late]))
        steady_purity = float(ops.purity(rho_ss)) if rho_ss is not None else math.nan
        purity_gain = late_purity - steady_purity
        max_uncollapse = float(np.max(uncollapse))
        dwell = ensemble.dwell_times(stats, config.threshold)
        passage = ensemble.first_passage_times(stats, config.threshold)

        if 'max_uncollapse' in asserts:
            bound = floor if asserts['max_uncollapse'] == 'noise_floor' else asserts['max_uncollapse']
            check(self.checks, 'max_uncollapse', _num(max_uncollapse), bound, max_uncollapse <= bound)
        if 'min_purity_gain' in asserts:
            check(self.checks, 'min_purity_gain', _num(purity_gain), asserts['min_purity_gain'],
                  purity_gain >= asserts['min_purity_gain'])
        if 'consistency_sigma' in asserts:
            check(self.checks, 'consistency_sigma', consistency.failure_fraction, k, consistency.passed)
        if 'min_localized_fraction' in asserts:
            check(self.checks, 'min_localized_fraction', float(localized[-1]),
                  asserts['min_localized_fraction'], localized[-1] >= asserts['min_localized_fraction'])
        return {
            'n_trajectories': stats.n_trajectories,
            'aborted': sorted(stats.failures),
            'final_mean_state': _matrix(stats.mean_state[-1]),
            'max_uncollapse': _num(max_uncollapse),
            'uncollapse_noise_floor': floor,
            'late_purity': late_purity,
            'steady_purity': _num(steady_purity),
            'purity_gain': _num(purity_gain),
            'consistency_failure_fraction': consistency.failure_fraction,
            'final_localized_fraction': float(localized[-1]),
            'mean_dwell_time': _num(np.mean(dwell)) if len(dwell) else None,
            'median_first_passage': _num(np.nanmedian(passage)) if np.any(~np.isnan(passage)) else None,
        }


def run_experiment(config, output_dir=None):
    """
    Run `config` and write summary.json, its tables and metadata.json.

    :return: EXIT_OK, or EXIT_ASSERTION when a configured assertion fails.
        Module errors propagate.
    """
    directory = Path(output_dir or config.output_directory)
    directory.mkdir(parents=True, exist_ok=True)
    experiment = Experiment(config, directory)
    logger.info('running %s into %s', config.kind, directory)
    try:
        results = experiment.run()
    except fw.QMonitorError as exc:
        logger.error('%s failed: %s', config.kind, exc)
        raise
    passed = all(c['passed'] for c in experiment.checks.values())
    write_json(directory / 'summary.json', {
        'config': config.document(execution=False),
        'kind': config.kind,
        'results': results,
        'assertions': experiment.checks,
        'passed': passed,
    })
    write_json(directory / 'metadata.json', {
        'config_hash': expconfig.config_hash(config),
        'seed': config.seed,
        'version': __version__,
        'created': datetime.now(timezone.utc).isoformat(),
        'workers': config.workers,
        'numpy': np.__version__,
    })
    for name, c in experiment.checks.items():
        if not c['passed']:
            logger.warning('assertion %s failed: value %r, bound %r', name, c['value'], c['bound'])
    return EXIT_OK if passed else EXIT_ASSERTION

def apply_overrides(config, args):
    changes = {}
    if args.workers is not None:
        changes['workers'] = args.workers
    if args.gammas is not None:
        changes['gammas'] = tuple(args.gammas)
    if args.seed is not None and config.trajectory is not None:
        changes['trajectory'] = replace(config.trajectory, seed=args.seed)
        if config.ensemble is not None:
            changes['ensemble'] = {**config.ensemble, 'base_seed': args.seed}
    if args.n_trajectories is not None and config.ensemble is not None:
        ensemble_ = changes.get('ensemble', config.ensemble)
        changes['ensemble'] = {**ensemble_, 'n_trajectories': args.n_trajectories}
    if not changes:
        return config
    return replace(config, **changes)

def main(argv=None):
    """
    Run continuous-measurement experiments described by YAML config files.
    """
    parser = fw.ArgumentParser(prog=Path(__file__).stem, description=main.__doc__)
    parser.add_argument('kind', choices=expconfig.KINDS)
    parser.add_argument('config', type=Path)
    args = parser.parse_args(argv)
    fw.configure_logging(args.verbose)

    try:
        config = expconfig.load_config(args.config)
        if config.kind != args.kind:
            raise fw.ValidationError([f'kind: config describes {config.kind}, not {args.kind}'])
        config = apply_overrides(config, args)
        return run_experiment(config, args.output)
    except (OSError, fw.ParseError, fw.ValidationError) as exc:
        print(f'{parser.prog}: {exc}', file=sys.stderr)
        return EXIT_VALIDATION
    except fw.NumericalFailure as exc:
        print(f'{parser.prog}: numerical failure: {exc}', file=sys.stderr)
        return EXIT_NUMERICAL
    except fw.QMonitorError as exc:
        print(f'{parser.prog}: {exc}', file=sys.stderr)
        return EXIT_VALIDATION

if __name__ == '__main__':
    sys.exit(main())
