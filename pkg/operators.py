"""
Dense operator algebra on a d-dimensional Hilbert space.

Operators are complex128 numpy arrays of shape (d, d); functions here also
accept stacks of operators with leading batch axes where that is natural.

Vectorization stacks columns, vec(A)[i + d*j] = A[i, j], so that

    vec(X @ rho @ Y) == kron(Y.T, X) @ vec(rho)

Qubit basis order is (|0>, |1>) and sigma_z = diag(+1, -1), so <sigma_z> = +1
on |0>. Every qubit matrix in the package derives from `PAULI`.
"""
import logging
import math

import numpy as np

import framework as fw

logger = logging.getLogger(__name__)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-9

def as_operator(a, dim=None):
    """
    Coerce `a` to a square complex128 matrix.

    :param dim: required dimension, if any.
    """
    op = np.asarray(a, dtype=np.complex128)
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] < 1:
        raise fw.DimensionMismatch(f'expected a square matrix, got shape {op.shape}')
    if dim is not None and op.shape[0] != dim:
        raise fw.DimensionMismatch(f'expected dimension {dim}, got {op.shape[0]}')
    return op

def frozen(a):
    """
    Read-only complex copy of `a`.
    """
    op = np.array(a, dtype=np.complex128)
    op.flags.writeable = False
    return op

def check_dims(*ops):
    dims = {op.shape[-1] for op in ops}
    if len(dims) != 1:
        raise fw.DimensionMismatch(f'operator dimensions differ: {sorted(dims)}')
    return dims.pop()

def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))

def commutator(a, b):
    check_dims(a, b)
    return a @ b - b @ a

def anticommutator(a, b):
    check_dims(a, b)
    return a @ b + b @ a

def frobenius_norm(a):
    return np.linalg.norm(a, axis=(-2, -1))

def trace(a):
    return np.trace(a, axis1=-2, axis2=-1)

def hermitize(a):
    return (a + dagger(a)) / 2

def expectation(a, rho):
    """
    Re Tr(a rho), broadcasting over stacked states.
    """
    return np.real(trace(a @ rho))

def purity(rho):
    return np.real(trace(rho @ rho))

def vectorize(a):
    a = np.asarray(a)
    d = a.shape[-1]
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (d * d,))

def devectorize(v):
    v = np.asarray(v)
    n = v.shape[-1]
    d = math.isqrt(n)
    if d < 1 or d * d != n:
        raise fw.LengthMismatch(f'vector length {n} is not a square')
    return np.swapaxes(v.reshape(v.shape[:-1] + (d, d)), -1, -2)

def left_mult_super(x):
    """
    Superoperator of rho -> x @ rho.
    """
    return np.kron(np.eye(x.shape[0]), x)

def right_mult_super(y):
    """
    Superoperator of rho -> rho @ y.
    """
    return np.kron(y.T, np.eye(y.shape[0]))

def sandwich_super(x, y):
    """
    Superoperator of rho -> x @ rho @ y.
    """
    check_dims(x, y)
    return np.kron(y.T, x)

def apply_super(s, rho):
    if s.shape[-1] != rho.shape[-1] ** 2:
        raise fw.DimensionMismatch(
            f'superoperator of size {s.shape[-1]} cannot act on dimension {rho.shape[-1]}')
    return devectorize(vectorize(rho) @ s.T)

PAULI = {
    'id': np.array([[1, 0], [0, 1]], dtype=np.complex128),
    'x': np.array([[0, 1], [1, 0]], dtype=np.complex128),
    'y': np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    'z': np.array([[1, 0], [0, -1]], dtype=np.complex128),
    # sigma_minus = |0><1| lowers |1> to |0>
    'minus': np.array([[0, 1], [0, 0]], dtype=np.complex128),
    'plus': np.array([[0, 0], [1, 0]], dtype=np.complex128),
}

PAULI_ALIASES = {
    'identity': 'id', 'i': 'id',
    'sigma_x': 'x', 'sigma_y': 'y', 'sigma_z': 'z',
    'sigma_plus': 'plus', 'sigma_minus': 'minus',
}

def pauli(name):
    key = PAULI_ALIASES.get(name, name)
    if key not in PAULI:
        raise fw.UnknownName(f'unknown Pauli name {name!r}; known: {sorted(PAULI)}')
    return PAULI[key].copy()

def basis_state(k, dim):
    """
    Projector |k><k|.
    """
    if not 0 <= k < dim:
        raise fw.RangeError(f'basis index {k} outside dimension {dim}')
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[k, k] = 1
    return rho

def maximally_mixed(dim):
    return np.eye(dim, dtype=np.complex128) / dim

def density_violations(rho, hermiticity_tol=HERMITICITY_TOL, trace_tol=TRACE_TOL,
                       psd_tol=PSD_TOL):
    """
    List the DensityMatrix invariants `rho` breaks, empty if none.
    """
    problems = []
    norm = frobenius_norm(rho)
    asym = frobenius_norm(rho - dagger(rho))
    if asym > hermiticity_tol * max(norm, 1.0):
        problems.append(f'not Hermitian (|rho - rho^dag| = {asym:.3e})')
    tr = trace(rho)
    if abs(tr - 1) > trace_tol:
        problems.append(f'trace {tr:.12g} differs from 1')
    if not problems or asym <= 1e-6 * max(norm, 1.0):
        lowest = np.linalg.eigvalsh(hermitize(rho))[0]
        if lowest < -psd_tol:
            problems.append(f'min eigenvalue {lowest:.3e} below -{psd_tol:g}')
    return problems

def is_density_matrix(rho, **tolerances):
    return not density_violations(rho, **tolerances)

def check_density_matrix(rho, **tolerances):
    """
    Return `rho` as an operator if it is a density matrix, else raise
    NonPhysicalState naming every violated invariant.
    """
    rho = as_operator(rho)
    problems = density_violations(rho, **tolerances)
    if problems:
        raise fw.NonPhysicalState('; '.join(problems))
    return rho
