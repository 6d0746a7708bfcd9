"""
Experiment config files.

A config is a YAML mapping. Complex numbers are written as [re, im] pairs,
matrices as nested row lists of entries, or as a Pauli name (sigma_x,
sigma_y, sigma_z, sigma_plus, sigma_minus, identity). Commented examples for
each experiment kind live in configs/.
"""
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import yaml

import ensemble
import framework as fw
import lindblad
import models
import monitoring
import operators as ops
import trajectory as sme

logger = logging.getLogger(__name__)

KINDS = ('invariance-check', 'gamma-sweep', 'trajectory', 'ensemble')
INITIAL_STATES = ('steady', 'maximally_mixed', 'ground', 'excited')
SECTIONS = ('kind', 'model', 'monitoring', 'initial_state', 'invariance', 'sweep',
            'trajectory', 'ensemble', 'observables', 'localization', 'assertions',
            'output', 'execution')
ASSERTIONS = {
    'invariance-check': {'invariant': bool, 'max_residual': float},
    'gamma-sweep': {'invariant': bool, 'max_drift': float, 'theorem_consistent': bool},
    'trajectory': {'max_localization_time': float},
    'ensemble': {'max_uncollapse': float, 'min_purity_gain': float,
                 'consistency_sigma': float, 'min_localized_fraction': float},
}

@dataclass(frozen=True)
class Matrix:
    """
    A parsed matrix and the name it was given by, if any.
    """
    value: np.ndarray
    name: str = None

    def document(self):
        if self.name is not None:
            return self.name
        return [[[float(z.real), float(z.imag)] for z in row] for row in self.value]


@dataclass(frozen=True)
class ModelConfig:
    preset: str = None
    params: dict = field(default_factory=dict)
    hamiltonian: Matrix = None
    jumps: tuple = ()

    def build(self):
        if self.preset is not None:
            return models.build_preset(self.preset, self.params)
        return lindblad.LindbladModel(self.hamiltonian.value, tuple(j.value for j in self.jumps))

    def analytic_steady_state(self):
        """
        The preset's closed-form steady state, None if it has none.
        """
        if self.preset is None:
            return None
        preset = models.preset(self.preset)
        if preset.steady_state is None:
            return None
        return preset.steady_state(**preset.resolve(self.params))

    def document(self):
        if self.preset is not None:
            return {'preset': self.preset, 'params': dict(self.params)}
        return {'hamiltonian': self.hamiltonian.document(),
                'jumps': [j.document() for j in self.jumps]}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelConfig
    c: Matrix
    gamma_m: float = 0.0
    eta: float = 1.0
    initial_state: object = 'steady'
    tolerance: float = monitoring.INVARIANCE_TOL
    gammas: tuple = None
    trajectory: sme.TrajectoryConfig = None
    ensemble: dict = None
    observables: dict = field(default_factory=dict)
    localization_observable: str = None
    threshold: float = 0.9
    assertions: dict = field(default_factory=dict)
    output_directory: str = 'results'
    write_timeseries: bool = True
    workers: int = 1

    def monitoring_spec(self):
        return monitoring.MonitoringSpec(self.c.value, self.gamma_m, self.eta)

    @property
    def seed(self):
        if self.ensemble is not None:
            return self.ensemble['base_seed']
        return None if self.trajectory is None else self.trajectory.seed

    def observable_operators(self):
        return {name: m.value for name, m in self.observables.items()}

    def ensemble_config(self):
        return ensemble.EnsembleConfig(
            n_trajectories=self.ensemble['n_trajectories'],
            base_seed=self.ensemble['base_seed'],
            trajectory=self.trajectory,
            observables=self.observable_operators(),
            localization_observable=self.localization_observable,
            histogram_bins=self.ensemble['histogram_bins'],
            workers=self.workers,
            chunk_size=self.ensemble['chunk_size'],
        )

    def document(self, execution=True):
        """
        The config as plain data. Execution settings (worker count) change no
        result and are left out when `execution` is false.
        """
        doc = {'kind': self.kind, 'model': self.model.document(),
               'monitoring': {'c': self.c.document(), 'gamma_m': self.gamma_m, 'eta': self.eta}}
        doc['initial_state'] = (self.initial_state.document()
                                if isinstance(self.initial_state, Matrix) else self.initial_state)
        doc['invariance'] = {'tolerance': self.tolerance}
        if self.gammas is not None:
            doc['sweep'] = {'gammas': [float(g) for g in self.gammas]}
        if self.trajectory is not None:
            t = self.trajectory
            doc['trajectory'] = {'dt': t.dt, 't_final': t.t_final, 'seed': t.seed,
                                 'sample_stride': t.sample_stride, 'renormalize': t.renormalize}
        if self.ensemble is not None:
            doc['ensemble'] = dict(self.ensemble)
        if self.observables:
            doc['observables'] = [{'name': name, 'matrix': m.document()}
                                  for name, m in self.observables.items()]
        doc['localization'] = {'threshold': self.threshold}
        if self.localization_observable is not None:
            doc['localization']['observable'] = self.localization_observable
        if self.assertions:
            doc['assertions'] = dict(self.assertions)
        doc['output'] = {'directory': self.output_directory, 'timeseries': self.write_timeseries}
        if execution:
            doc['execution'] = {'workers': self.workers}
        return doc


def _complex(z):
    if isinstance(z, (list, tuple)):
        if len(z) != 2:
            raise ValueError('complex entries are [re, im] pairs')
        re, im = z
        if isinstance(re, bool) or isinstance(im, bool):
            raise TypeError('booleans are not numbers')
        return complex(float(re), float(im))
    if isinstance(z, bool):
        raise TypeError('booleans are not numbers')
    return complex(float(z))


class _Reader:
    """
    Field readers that record problems instead of stopping at the first.
    """

    def __init__(self):
        self.errors = []

    def error(self, where, message):
        self.errors.append(f'{where}: {message}')

    def section(self, doc, key, required=False):
        value = doc.get(key)
        if value is None or value == {}:
            if required:
                self.error(key, 'missing required section')
            return {}
        if not isinstance(value, dict):
            self.error(key, 'expected a mapping')
            return {}
        return value

    def _value(self, doc, key, where, required):
        if doc.get(key) is None:
            if required:
                self.error(f'{where}.{key}', 'missing required field')
            return None
        return doc[key]

    def real(self, doc, key, where, default=None, required=False, lo=None, hi=None):
        raw = self._value(doc, key, where, required)
        if raw is None:
            return default
        try:
            if isinstance(raw, bool):
                raise TypeError
            value = float(raw)
        except (TypeError, ValueError):
            self.error(f'{where}.{key}', f'expected a number, got {raw!r}')
            return default
        if (lo is not None and value < lo) or (hi is not None and value > hi):
            lo_text = '-inf' if lo is None else f'{lo:g}'
            hi_text = 'inf' if hi is None else f'{hi:g}'
            self.error(f'{where}.{key}', f'{value:g} outside [{lo_text}, {hi_text}]')
            return default
        return value

    def integer(self, doc, key, where, default=None, required=False, lo=None):
        raw = self._value(doc, key, where, required)
        if raw is None:
            return default
        if isinstance(raw, bool) or not isinstance(raw, int):
            self.error(f'{where}.{key}', f'expected an integer, got {raw!r}')
            return default
        if lo is not None and raw < lo:
            self.error(f'{where}.{key}', f'{raw} is below {lo}')
            return default
        return raw

    def boolean(self, doc, key, where, default):
        raw = doc.get(key)
        if raw is None:
            return default
        if not isinstance(raw, bool):
            self.error(f'{where}.{key}', f'expected true or false, got {raw!r}')
            return default
        return raw

    def matrix(self, value, where, dim=None):
        if isinstance(value, str):
            try:
                result = Matrix(ops.pauli(value), value)
            except fw.UnknownName as exc:
                self.error(where, str(exc))
                return None
        else:
            try:
                rows = [[_complex(z) for z in row] for row in value]
            except (TypeError, ValueError) as exc:
                self.error(where, f'unreadable matrix entries ({exc})')
                return None
            if not rows or any(len(row) != len(rows) for row in rows):
                self.error(where, 'matrix must be square and non-empty')
                return None
            result = Matrix(np.array(rows, dtype=np.complex128))
        if dim is not None and result.value.shape[0] != dim:
            self.error(where, f'dimension {result.value.shape[0]} does not match model dimension {dim}')
            return None
        return result


def _read_model(r, doc):
    section = r.section(doc, 'model', required=True)
    if not section:
        return None, None
    if 'preset' in section:
        raw = section.get('params') or {}
        if not isinstance(raw, dict):
            r.error('model.params', 'expected a mapping')
            return None, None
        params = {str(key): r.real(raw, key, 'model.params', required=True) for key in raw}
        if None in params.values():
            return None, None
        model_config = ModelConfig(preset=str(section['preset']), params=params)
    else:
        if 'hamiltonian' not in section:
            r.error('model', 'give either a preset or an explicit hamiltonian')
            return None, None
        h = r.matrix(section['hamiltonian'], 'model.hamiltonian')
        dim = None if h is None else h.value.shape[0]
        jumps = tuple(r.matrix(j, f'model.jumps[{i}]', dim)
                      for i, j in enumerate(section.get('jumps') or []))
        if h is None or any(j is None for j in jumps):
            return None, None
        model_config = ModelConfig(hamiltonian=h, jumps=jumps)
    try:
        model = model_config.build()
    except fw.QMonitorError as exc:
        r.error('model', str(exc))
        return model_config, None
    return model_config, model

def _read_trajectory(r, doc, required):
    section = r.section(doc, 'trajectory', required=required)
    if not section:
        return None
    dt = r.real(section, 'dt', 'trajectory', required=True)
    t_final = r.real(section, 't_final', 'trajectory', required=True, lo=0)
    seed = r.integer(section, 'seed', 'trajectory', default=0, lo=0)
    stride = r.integer(section, 'sample_stride', 'trajectory', default=1, lo=1)
    renormalize = r.boolean(section, 'renormalize', 'trajectory', True)
    if None in (dt, t_final, seed, stride):
        return None
    try:
        return sme.TrajectoryConfig(dt=dt, t_final=t_final, seed=seed,
                                    sample_stride=stride, renormalize=renormalize)
    except fw.QMonitorError as exc:
        r.error('trajectory', str(exc))
        return None

def _read_ensemble(r, doc, required, default_seed):
    section = r.section(doc, 'ensemble', required=required)
    if not section:
        return None
    return {
        'n_trajectories': r.integer(section, 'n_trajectories', 'ensemble', required=True, lo=1),
        'base_seed': r.integer(section, 'base_seed', 'ensemble', default=default_seed, lo=0),
        'chunk_size': r.integer(section, 'chunk_size', 'ensemble', default=128, lo=1),
        'histogram_bins': r.integer(section, 'histogram_bins', 'ensemble', default=20, lo=1),
    }

def _read_observables(r, doc, dim):
    observables = {}
    entries = doc.get('observables') or []
    if not isinstance(entries, list):
        r.error('observables', 'expected a list of {name, matrix}')
        return observables
    for i, entry in enumerate(entries):
        where = f'observables[{i}]'
        if not isinstance(entry, dict) or 'name' not in entry or 'matrix' not in entry:
            r.error(where, 'expected a mapping with name and matrix')
            continue
        name = str(entry['name'])
        if name in observables:
            r.error(where, f'duplicate observable name {name!r}')
            continue
        m = r.matrix(entry['matrix'], f'{where}.matrix', dim)
        if m is None:
            continue
        if not np.allclose(m.value, ops.dagger(m.value), rtol=0, atol=ops.HERMITICITY_TOL):
            r.error(f'{where}.matrix', 'observable must be Hermitian')
            continue
        observables[name] = m
    return observables

def _read_assertions(r, doc, kind):
    section = r.section(doc, 'assertions')
    known = ASSERTIONS.get(kind, {})
    assertions = {}
    for key, raw in section.items():
        where = f'assertions.{key}'
        if key not in known:
            r.error(where, f'not an assertion for {kind}; known: {sorted(known)}')
        elif known[key] is bool:
            value = r.boolean(section, key, 'assertions', None)
            if value is not None:
                assertions[key] = value
        elif key == 'max_uncollapse' and raw == 'noise_floor':
            assertions[key] = raw
        else:
            value = r.real(section, key, 'assertions')
            if value is not None:
                assertions[key] = value
    return assertions

def parse_config(text):
    """
    Parse and validate a config document.

    :raises ParseError: for malformed YAML, with its line.
    :raises ValidationError: listing every invalid or missing field.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        raise fw.ParseError(getattr(exc, 'problem', None) or str(exc),
                            None if mark is None else mark.line + 1) from exc
    if not isinstance(doc, dict):
        raise fw.ParseError('config must be a mapping')

    r = _Reader()
    for key in doc:
        if key not in SECTIONS:
            r.error(str(key), f'unknown section; known: {", ".join(SECTIONS)}')
    kind = doc.get('kind')
    if kind not in KINDS:
        r.error('kind', f'expected one of {", ".join(KINDS)}, got {kind!r}')

    model_config, model = _read_model(r, doc)
    dim = None if model is None else model.dim

    mon = r.section(doc, 'monitoring', required=True)
    c = None
    if 'c' in mon:
        c = r.matrix(mon['c'], 'monitoring.c', dim)
    elif mon:
        r.error('monitoring.c', 'missing required field')
    gamma_m = r.real(mon, 'gamma_m', 'monitoring', default=0.0, lo=0)
    eta = r.real(mon, 'eta', 'monitoring', default=1.0, lo=0, hi=1)

    initial = doc.get('initial_state', 'steady')
    if isinstance(initial, str):
        if initial not in INITIAL_STATES:
            r.error('initial_state', f'expected one of {", ".join(INITIAL_STATES)} or a matrix')
    else:
        initial = r.matrix(initial, 'initial_state', dim)
        if initial is not None and not ops.is_density_matrix(initial.value):
            r.error('initial_state', 'not a density matrix')

    tolerance = r.real(r.section(doc, 'invariance'), 'tolerance', 'invariance',
                       default=monitoring.INVARIANCE_TOL, lo=0)
    sweep = r.section(doc, 'sweep')
    gammas = None
    if 'gammas' in sweep:
        raw = sweep['gammas'] if isinstance(sweep['gammas'], list) else [sweep['gammas']]
        indexed = dict(enumerate(raw))
        gammas = tuple(r.real(indexed, i, 'sweep.gammas', required=True, lo=0) for i in indexed)

    tconfig = _read_trajectory(r, doc, required=kind in ('trajectory', 'ensemble'))
    ens = _read_ensemble(r, doc, kind == 'ensemble', 0 if tconfig is None else tconfig.seed)
    observables = _read_observables(r, doc, dim)

    loc = r.section(doc, 'localization')
    loc_name = loc.get('observable')
    if loc_name is not None and observables and loc_name not in observables:
        r.error('localization.observable', f'{loc_name!r} is not among the observables')
    threshold = r.real(loc, 'threshold', 'localization', default=0.9, lo=0)

    assertions = _read_assertions(r, doc, kind)
    out = r.section(doc, 'output')
    directory = str(out.get('directory', 'results'))
    write_timeseries = r.boolean(out, 'timeseries', 'output', True)
    workers = r.integer(r.section(doc, 'execution'), 'workers', 'execution', default=1, lo=1)

    if r.errors:
        raise fw.ValidationError(r.errors)
    return ExperimentConfig(
        kind=kind, model=model_config, c=c, gamma_m=gamma_m, eta=eta,
        initial_state=initial, tolerance=tolerance, gammas=gammas,
        trajectory=tconfig, ensemble=ens, observables=observables,
        localization_observable=loc_name, threshold=threshold,
        assertions=assertions, output_directory=directory,
        write_timeseries=write_timeseries, workers=workers,
    )

def load_config(path):
    with open(path) as f:
        return parse_config(f.read())

def dump_config(config, execution=True):
    return yaml.safe_dump(config.document(execution), sort_keys=False, default_flow_style=None)

def config_hash(config):
    """
    SHA-256 of the serialized config without execution settings.
    """
    return hashlib.sha256(dump_config(config, execution=False).encode()).hexdigest()
