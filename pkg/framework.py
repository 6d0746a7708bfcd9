import argparse
import logging

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'

def configure_logging(verbosity=0):
    """
    Configure the root logger once for command line use.

    :param verbosity: 0 for warnings, 1 for info, 2 or more for debug.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)


class QMonitorError(Exception):
    """
    Base of every error raised by this package.
    """


class NumericalFailure(QMonitorError):
    """
    A computation could not produce a physical answer.
    """


class DimensionMismatch(QMonitorError, ValueError):
    pass


class LengthMismatch(QMonitorError, ValueError):
    pass


class UnknownName(QMonitorError, KeyError):

    def __str__(self):
        # KeyError would repr() the message
        return str(self.args[0]) if self.args else ''


class RangeError(QMonitorError, ValueError):
    pass


class StepSizeInvalid(RangeError):
    pass


class NonUnitTrace(QMonitorError, ValueError):
    pass


class NonPhysicalState(NumericalFailure):
    pass


class DegenerateSteadyState(NumericalFailure):

    def __init__(self, kernel_dimension):
        super().__init__(
            f'Liouvillian kernel has dimension {kernel_dimension}, expected 1')
        self.kernel_dimension = kernel_dimension


class NonPhysicalKernel(NumericalFailure):
    pass


class TrajectoryError(NumericalFailure):

    def __init__(self, message, trajectory_id=None, step=None):
        super().__init__(
            f'{message} (trajectory {trajectory_id}, step {step})')
        self.trajectory_id = trajectory_id
        self.step = step


class StateBlowup(TrajectoryError):
    pass


class PositivityViolation(TrajectoryError):
    pass


class EnsembleFailure(NumericalFailure):

    def __init__(self, failures, n_trajectories):
        super().__init__(
            f'{len(failures)} of {n_trajectories} trajectories aborted; '
            f'first: {failures[0]}')
        self.failures = failures


class GridMismatch(QMonitorError, ValueError):
    pass


class UnknownObservable(UnknownName):
    pass


class AllRatesZero(RangeError):
    pass


class DegenerateChoice(QMonitorError, ValueError):
    pass


class ParseError(QMonitorError):

    def __init__(self, message, line=None):
        where = '' if line is None else f'line {line}: '
        super().__init__(f'{where}{message}')
        self.line = line


class ValidationError(QMonitorError):
    """
    Every problem found in a config, not just the first.
    """

    def __init__(self, errors):
        super().__init__('; '.join(errors))
        self.errors = list(errors)


def floats(s):
    return [float(x) for x in s.split(',') if x.strip()]

class ArgumentParser(argparse.ArgumentParser):

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.add_argument('-v', '--verbose', action='count', default=0,
                          help='-v for info, -vv for debug logging')
        self.add_argument('--output', help='output directory, overrides the config')
        self.add_argument('--workers', type=int, help='worker processes for ensembles')
        self.add_argument('--seed', type=int, help='override the trajectory/ensemble seed')
        self.add_argument('--n-trajectories', type=int, dest='n_trajectories',
                          help='override the ensemble size')
        self.add_argument('--gammas', type=floats,
                          help='comma separated measurement rates for sweeps')
