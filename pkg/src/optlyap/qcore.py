"""Dense complex linear algebra and quantum-state primitives.

Operators are plain ``numpy`` arrays of dtype ``complex128``. Arrays returned
by the constructors here are marked read-only so they can be shared between
concurrent trajectory workers without copying.
"""
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionError,
    ImaginaryResidueError,
    InvalidStateError,
    NotHermitianError,
)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
IMAG_TOL = 1e-10


def _frozen(a):
    a.flags.writeable = False
    return a


def operator(a):
    """Validate ``a`` as a square matrix and return a read-only complex copy."""
    a = np.array(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"operator must be a non-empty square matrix, got shape {a.shape}")
    return _frozen(a)


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def _require_hermitian(a, name="operator"):
    if not is_hermitian(a):
        raise NotHermitianError(f"{name} is not Hermitian")


def density_matrix(a):
    """Return a validated, read-only density matrix.

    Raises InvalidStateError unless the trace is one to 1e-10, the matrix is
    Hermitian to 1e-12 and its smallest eigenvalue is at least -1e-10.
    """
    rho = operator(a)
    if not is_hermitian(rho):
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"density matrix has trace {tr.real:.12g}")
    lam = np.linalg.eigvalsh(rho)[0]
    if lam < -PSD_TOL:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lam:.3g}")
    return rho


def projector(psi):
    """Density matrix of the normalised pure state ``psi``."""
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise InvalidStateError("cannot project onto the zero vector")
    psi = psi / nrm
    return _frozen(np.outer(psi, psi.conj()))


def basis_state(index, dim):
    """``|index><index|`` in a ``dim``-dimensional space (0-based index)."""
    e = np.zeros(dim, dtype=np.complex128)
    e[index] = 1.0
    return projector(e)


def purity(rho):
    rho = np.asarray(rho)
    return float(np.real(np.vdot(rho.conj().T, rho)))


def commutator(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"commutator of {a.shape} and {b.shape} matrices")
    return a @ b - b @ a


def expectation(p, rho):
    """Return Tr(P rho) for Hermitian ``p``, as a float.

    The imaginary part of the trace is checked against 1e-10 and discarded.
    """
    p = np.asarray(p)
    rho = np.asarray(rho)
    if p.shape != rho.shape:
        raise DimensionError(f"observable {p.shape} does not match state {rho.shape}")
    _require_hermitian(p, "observable")
    val = np.sum(p.T * rho)
    if abs(val.imag) > IMAG_TOL:
        raise ImaginaryResidueError(f"Tr(P rho) has imaginary part {val.imag:.3g}")
    return float(val.real)


_S3 = 1.0 / np.sqrt(3.0)
_GELL_MANN = {
    1: [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
    2: [[0, -1j, 0], [1j, 0, 0], [0, 0, 0]],
    3: [[1, 0, 0], [0, -1, 0], [0, 0, 0]],
    4: [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    5: [[0, 0, -1j], [0, 0, 0], [1j, 0, 0]],
    6: [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
    7: [[0, 0, 0], [0, 0, -1j], [0, 1j, 0]],
    8: [[_S3, 0, 0], [0, _S3, 0], [0, 0, -2 * _S3]],
}


def gell_mann(n):
    """SU(3) generator lambda_n, n = 1..8, in the standard matrix layout."""
    if n not in _GELL_MANN:
        raise ValueError(f"Gell-Mann index must be in 1..8, got {n!r}")
    return operator(_GELL_MANN[n])


class FockOperators(NamedTuple):
    dim: int
    lowering: np.ndarray
    raising: np.ndarray
    number: np.ndarray


def fock_operators(dim):
    """Ladder and number operators truncated to the lowest ``dim`` Fock states."""
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"Fock truncation must be an integer >= 2, got {dim!r}")
    dim = int(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(np.complex128)
    ad = a.conj().T.copy()
    return FockOperators(dim, _frozen(a), _frozen(ad), _frozen(ad @ a))


def thermal_populations(nbar, dim):
    """Geometric occupation probabilities, renormalised after truncation."""
    if nbar < 0:
        raise ValueError(f"mean occupation must be non-negative, got {nbar}")
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"Fock truncation must be an integer >= 2, got {dim!r}")
    m = np.arange(int(dim))
    if nbar == 0:
        p = (m == 0).astype(float)
    else:
        p = (nbar / (1.0 + nbar)) ** m
    return p / p.sum()


def thermal_state(nbar, dim):
    """Truncated thermal state with nominal mean occupation ``nbar``.

    The realised mean is below ``nbar`` whenever the truncation cuts off a
    noticeable tail; e.g. nbar=6.38 at dim=20 gives about 5.23.
    """
    return _frozen(np.diag(thermal_populations(nbar, dim)).astype(np.complex128))


def tensor_product(a, b):
    """Kronecker product; the first factor indexes blocks."""
    return _frozen(np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128)))
