"""Lyapunov control-field design laws.

For V = Tr(P rho) and H = H0 + sum_n f_n H_n with [P, H0] = 0 the Lyapunov
derivative is linear in the fields, dV/dt = sum_n f_n T_n, with
T_n = Tr(-i rho [P, H_n]). Every law here picks f from T so that this sum is
non-positive; the two constrained laws pick the minimiser over their
feasible set.

All field functions accept T with any leading batch shape; the last axis
indexes the controls.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from . import qcore
from .errors import DimensionError, ImaginaryResidueError, NotHermitianError

ZERO_TOL = 1e-20
COMMUTE_TOL = 1e-10


@dataclass(frozen=True)
class ControlProblem:
    """Free Hamiltonian, control Hamiltonians, Lyapunov observable, target.

    ``relaxed`` waives the [P, H0] = 0 check; perturbed problems use it so the
    nominal observable can be kept when the free Hamiltonian is disturbed.
    """

    h0: np.ndarray
    controls: Tuple[np.ndarray, ...]
    lyapunov_observable: np.ndarray
    target: Optional[np.ndarray] = None
    relaxed: bool = False
    sensitivity: np.ndarray = field(init=False, repr=False, compare=False)
    control_stack: np.ndarray = field(init=False, repr=False, compare=False)
    pure_target: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h0 = qcore.operator(self.h0)
        controls = tuple(qcore.operator(h) for h in self.controls)
        p = qcore.operator(self.lyapunov_observable)
        if not controls:
            raise ValueError("at least one control Hamiltonian is required")
        for name, op in [("h0", h0), ("lyapunov_observable", p)] + [
            (f"controls[{i}]", h) for i, h in enumerate(controls)
        ]:
            if op.shape != h0.shape:
                raise DimensionError(f"{name} has shape {op.shape}, expected {h0.shape}")
            if not qcore.is_hermitian(op):
                raise NotHermitianError(f"{name} is not Hermitian")
        if not self.relaxed:
            resid = np.max(np.abs(qcore.commutator(p, h0)))
            if resid > COMMUTE_TOL:
                raise ValueError(f"[P, H0] must vanish, max entry {resid:.3g}")
        target = None
        if self.target is not None:
            target = qcore.density_matrix(self.target)
            if target.shape != h0.shape:
                raise DimensionError(f"target has shape {target.shape}, expected {h0.shape}")
        # -i[P, H_n] is Hermitian, so T_n = Tr(rho S_n) is real for physical rho.
        sens = np.array([-1j * qcore.commutator(p, h) for h in controls])
        sens.flags.writeable = False
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "lyapunov_observable", p)
        object.__setattr__(self, "target", target)
        stack = np.array(controls)
        stack.flags.writeable = False
        object.__setattr__(self, "sensitivity", sens)
        object.__setattr__(self, "control_stack", stack)
        object.__setattr__(
            self, "pure_target",
            target is not None and abs(qcore.purity(target) - 1.0) <= qcore.TRACE_TOL,
        )

    @property
    def dim(self):
        return self.h0.shape[0]

    @property
    def k(self):
        return len(self.controls)

    def hamiltonian(self, fields):
        """H0 + sum_n f_n H_n; ``fields`` may carry leading batch axes."""
        fields = np.asarray(fields, dtype=float)
        return self.h0 + np.tensordot(fields, self.control_stack, axes=(-1, 0))


@dataclass(frozen=True)
class Conventional:
    k: float

    def __post_init__(self):
        _positive("K", self.k)

    def fields(self, T):
        return conventional_fields(T, self.k)

    def rate(self, T):
        """Analytic dV/dt = -K sum T_n^2."""
        T = np.asarray(T, dtype=float)
        return -self.k * np.sum(T * T, axis=-1)


@dataclass(frozen=True)
class PowerConstrained:
    w_max: float

    def __post_init__(self):
        _positive("w_max", self.w_max)

    def fields(self, T):
        return power_constrained_fields(T, self.w_max)

    def rate(self, T):
        """Analytic dV/dt = -sqrt(W_max) * ||T||."""
        T = np.asarray(T, dtype=float)
        sq = np.sum(T * T, axis=-1)
        return np.where(sq > ZERO_TOL, -np.sqrt(self.w_max) * np.sqrt(sq), 0.0)


@dataclass(frozen=True)
class StrengthConstrained:
    s: float

    def __post_init__(self):
        _positive("S", self.s)

    def fields(self, T):
        return bang_bang_fields(T, self.s)

    def rate(self, T):
        """Analytic dV/dt = -S sum |T_n|."""
        T = np.asarray(T, dtype=float)
        a = np.abs(T)
        return -self.s * np.sum(np.where(a > ZERO_TOL, a, 0.0), axis=-1)


Law = Union[Conventional, PowerConstrained, StrengthConstrained]


@dataclass(frozen=True)
class ControlDesign:
    law: Law
    epsilon: float = 1e-3
    averaging_window: Optional[float] = None

    def __post_init__(self):
        _positive("epsilon", self.epsilon)
        if self.averaging_window is not None:
            _positive("averaging_window", self.averaging_window)


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be strictly positive, got {value!r}")


def compute_T(rho, problem):
    """Sensitivities T_n = Tr(-i rho [P, H_n]) for one state or a stack of states."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (problem.dim, problem.dim):
        raise DimensionError(f"state shape {rho.shape} does not match dimension {problem.dim}")
    T = np.einsum("...ij,kji->...k", rho, problem.sensitivity)
    resid = np.max(np.abs(T.imag), initial=0.0)
    if resid > qcore.IMAG_TOL:
        raise ImaginaryResidueError(f"T has imaginary residue {resid:.3g}; inputs not Hermitian?")
    return T.real


def conventional_fields(T, K):
    return -K * np.asarray(T, dtype=float)


def power_constrained_fields(T, w_max):
    """Fields on the sphere sum f_n^2 = w_max pointing against T; zero where T vanishes."""
    T = np.asarray(T, dtype=float)
    sq = np.sum(T * T, axis=-1, keepdims=True)
    live = sq > ZERO_TOL
    norm = np.sqrt(np.where(live, sq, 1.0))
    return np.where(live, -np.sqrt(w_max) * T / norm, 0.0)


def bang_bang_fields(T, s):
    """f_n = -S sign(T_n), with f_n = 0 when |T_n| <= 1e-20."""
    T = np.asarray(T, dtype=float)
    return np.where(np.abs(T) > ZERO_TOL, -s * np.sign(T), 0.0)


def lyapunov_rate(fields, T):
    """dV/dt = sum_n f_n T_n."""
    return np.sum(np.asarray(fields) * np.asarray(T), axis=-1)


def fidelity(rho, problem):
    if problem.target is None:
        raise ValueError("control problem has no target state")
    return float(np.real(np.sum(problem.target.T * np.asarray(rho))))


def distance_to_target(rho, problem):
    """D = 1 - Tr(rho rho_f) for a pure target rho_f."""
    if problem.target is None:
        raise ValueError("control problem has no target state")
    if not problem.pure_target:
        raise ValueError("distance_to_target requires a pure target state")
    return 1.0 - fidelity(rho, problem)


def window_length(window, dt):
    """Number of samples spanned by an averaging window."""
    if window < dt * (1 - 1e-9):
        raise ValueError(f"averaging window {window} is shorter than the time step {dt}")
    return max(1, int(round(window / dt)))


def reshape_average(fields, window, dt):
    """Trailing rectangular moving average of a sampled field series.

    ``fields`` has shape (n_samples, k). Sample i is replaced by the mean of
    samples max(0, i - m + 1) .. i, with m = round(window / dt).
    """
    f = np.asarray(fields, dtype=float)
    m = window_length(window, dt)
    if m == 1:
        return f.copy()
    # Slice means rather than a cumulative sum: must agree bit-for-bit with the
    # online filter in dynamics.run_trajectory.
    return np.array([f[max(0, i - m + 1): i + 1].mean(axis=0) for i in range(len(f))])
