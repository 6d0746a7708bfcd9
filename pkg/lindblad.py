"""
Unconditional Lindblad dynamics: generator, steady state, propagation.

Jump rates are folded into the jump operators (sqrt(gamma) * L). Monitored
channels added by `monitoring.measured_liouvillian` are kept apart as
(rate, c) pairs, so the measured part of the generator is exactly linear in
the measurement rate.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

import framework as fw
import operators as ops

logger = logging.getLogger(__name__)

KERNEL_RTOL = 1e-10

@dataclass(frozen=True)
class LindbladModel:
    """
    Hamiltonian (hbar = 1) plus jump operators, optionally with monitored
    channels entering as rate * D[c].
    """
    hamiltonian: np.ndarray
    jumps: tuple = ()
    monitored: tuple = field(default=())

    def __post_init__(self):
        h = ops.as_operator(self.hamiltonian)
        d = h.shape[0]
        asym = ops.frobenius_norm(h - ops.dagger(h))
        if asym > ops.HERMITICITY_TOL * max(ops.frobenius_norm(h), 1.0):
            raise fw.NonPhysicalState(f'Hamiltonian is not Hermitian ({asym:.3e})')
        jumps = tuple(ops.frozen(ops.as_operator(l, d)) for l in self.jumps)
        monitored = []
        for rate, c in self.monitored:
            if rate < 0:
                raise fw.RangeError(f'monitoring rate {rate} is negative')
            monitored.append((float(rate), ops.frozen(ops.as_operator(c, d))))
        object.__setattr__(self, 'hamiltonian', ops.frozen(h))
        object.__setattr__(self, 'jumps', jumps)
        object.__setattr__(self, 'monitored', tuple(monitored))

    @classmethod
    def free(cls, dim):
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    def with_jump(self, op):
        return replace(self, jumps=self.jumps + (op,))

    def with_monitored(self, rate, c):
        return replace(self, monitored=self.monitored + ((rate, c),))

    def folded_jumps(self):
        """
        All channels as jump operators, monitored ones folded as sqrt(rate) * c.
        """
        return self.jumps + tuple(np.sqrt(rate) * c for rate, c in self.monitored)

    def characteristic_rate(self):
        """
        Total dissipation scale, sum of squared spectral norms of the jumps.
        """
        rate = sum(np.linalg.norm(l, 2) ** 2 for l in self.jumps)
        rate += sum(r * np.linalg.norm(c, 2) ** 2 for r, c in self.monitored)
        return float(rate)


def dissipator_apply(l, rho):
    """
    D[L]rho = L rho L^dag - 1/2 {L^dag L, rho}
    """
    ops.check_dims(l, rho)
    ldag = ops.dagger(l)
    ldl = ldag @ l
    return l @ rho @ ldag - (ldl @ rho + rho @ ldl) / 2

def dissipator_super(l):
    ldl = ops.dagger(l) @ l
    return (ops.sandwich_super(l, ops.dagger(l))
            - (ops.left_mult_super(ldl) + ops.right_mult_super(ldl)) / 2)

def liouvillian_apply(model, rho):
    ops.check_dims(model.hamiltonian, rho)
    out = -1j * ops.commutator(model.hamiltonian, rho)
    for l in model.jumps:
        out = out + dissipator_apply(l, rho)
    for rate, c in model.monitored:
        out = out + rate * dissipator_apply(c, rho)
    return out

def unmonitored_matrix(model):
    h = model.hamiltonian
    out = -1j * (ops.left_mult_super(h) - ops.right_mult_super(h))
    for l in model.jumps:
        out = out + dissipator_super(l)
    return out

def monitored_matrix(model):
    """
    sum_j rate_j D[c_j] as a superoperator; exactly linear in the rates.
    """
    d2 = model.dim ** 2
    out = np.zeros((d2, d2), dtype=np.complex128)
    for rate, c in model.monitored:
        out = out + rate * dissipator_super(c)
    return out

def liouvillian_matrix(model):
    return unmonitored_matrix(model) + monitored_matrix(model)

def kernel_basis(matrix, rtol=KERNEL_RTOL):
    """
    Right-singular vectors whose singular value is below rtol * sigma_max, as
    columns.
    """
    _, s, vh = scipy.linalg.svd(matrix)
    if s[0] == 0:
        return ops.dagger(vh)
    null = s < rtol * s[0]
    return ops.dagger(vh[null])

def kernel_dimension(matrix, rtol=KERNEL_RTOL):
    return kernel_basis(matrix, rtol).shape[1]

def steady_state(model, rtol=KERNEL_RTOL):
    """
    Unique steady state from the one-dimensional kernel of the Liouvillian.

    :raises DegenerateSteadyState: when the kernel dimension is not 1.
    :raises NonPhysicalKernel: when the kernel vector is not a normalizable
        density matrix.
    """
    basis = kernel_basis(liouvillian_matrix(model), rtol)
    logger.debug('Liouvillian kernel dimension %d', basis.shape[1])
    if basis.shape[1] != 1:
        raise fw.DegenerateSteadyState(basis.shape[1])
    rho = ops.devectorize(basis[:, 0])
    tr = ops.trace(rho)
    if abs(tr) < 1e-12:
        raise fw.NonPhysicalKernel('kernel vector is traceless')
    rho = ops.hermitize(rho / tr)
    problems = ops.density_violations(rho)
    if problems:
        raise fw.NonPhysicalKernel('; '.join(problems))
    return rho

def _rk4(m, v, h):
    k1 = m @ v
    k2 = m @ (v + h / 2 * k1)
    k3 = m @ (v + h / 2 * k2)
    k4 = m @ (v + h * k3)
    return v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

def _advance(m, v, duration, dt):
    nfull = int(np.floor(duration / dt + 1e-9))
    for _ in range(nfull):
        v = _rk4(m, v, dt)
    rest = duration - nfull * dt
    if rest > 1e-12 * dt:
        v = _rk4(m, v, rest)
    return v

def _check_step(dt, t_final=0.0):
    if not dt > 0:
        raise fw.StepSizeInvalid(f'dt must be positive, got {dt}')
    if t_final < 0:
        raise fw.StepSizeInvalid(f't_final must be non-negative, got {t_final}')

def propagate(model, rho0, t_final, dt):
    """
    Integrate rho' = L rho with fixed-step fourth order Runge-Kutta. A final
    partial step lands exactly on `t_final`.

    :raises NonPhysicalState: when rho0 is not a density matrix.
    """
    _check_step(dt, t_final)
    rho0 = ops.check_density_matrix(ops.as_operator(rho0, model.dim))
    if t_final == 0:
        return rho0.copy()
    v = _advance(liouvillian_matrix(model), ops.vectorize(rho0), t_final, dt)
    rho = ops.devectorize(v)
    drift = abs(ops.trace(rho) - ops.trace(rho0))
    if drift > 1e-9:
        logger.warning('trace drifted by %.3e during propagation', drift)
    return rho

def evolve(model, rho0, times, dt):
    """
    States at each of the non-decreasing `times`, starting from rho0 at t=0.
    """
    times = np.asarray(times, dtype=float)
    _check_step(dt, times[0] if len(times) else 0.0)
    if np.any(np.diff(times) < 0):
        raise fw.GridMismatch('times must be non-decreasing')
    m = liouvillian_matrix(model)
    v = ops.vectorize(ops.check_density_matrix(ops.as_operator(rho0, model.dim)))
    states = np.empty((len(times), model.dim, model.dim), dtype=np.complex128)
    t = 0.0
    for i, ti in enumerate(times):
        v = _advance(m, v, ti - t, dt)
        t = ti
        states[i] = ops.devectorize(v)
    return states
