"""Closed (Liouville) and open (Lindblad) propagation under state feedback.

Step functions broadcast over leading axes, so a stack of states of shape
(..., d, d) can be advanced with a matching stack of Hamiltonians.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import qcore
from .designs import ControlDesign, ControlProblem, compute_T, fidelity, lyapunov_rate, window_length
from .errors import IntegratorError

TRACE_STEP_TOL = 1e-6
METHODS = ("unitary-step", "rk4")


@dataclass(frozen=True)
class LindbladChannel:
    jump: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "jump", qcore.operator(self.jump))
        if not self.rate >= 0:
            raise ValueError(f"decay rate must be non-negative, got {self.rate!r}")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_max: float
    method: str = "unitary-step"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_max >= self.dt:
            raise ValueError(f"t_max ({self.t_max}) must be at least dt ({self.dt})")
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}; expected one of {METHODS}")

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))


@dataclass
class Trajectory:
    """Sampled controlled evolution.

    Sample i holds the state observables at ``t[i]`` together with the fields
    held constant over the step that ended at ``t[i]`` (for i = 0, the fields
    about to be applied). ``vdot`` is the analytic sum f_n T_n for those
    fields, evaluated at the start of the step. ``switched_on`` is False once
    the stop rule has latched the fields to zero.
    """

    t: np.ndarray
    fields: np.ndarray
    V: np.ndarray
    W: np.ndarray
    metric: np.ndarray
    switched_on: np.ndarray
    vdot: np.ndarray
    stop_time: Optional[float] = None
    metric_name: str = "fidelity"
    final_state: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.t)

    @property
    def k(self):
        return self.fields.shape[1]

    def last_switched_on(self):
        """Index of the last sample recorded while the controller was active, or None."""
        idx = np.flatnonzero(self.switched_on)
        return int(idx[-1]) if len(idx) else None


class _Recorder:
    def __init__(self):
        self.rows = []

    def add(self, t, f, V, metric, on, vdot):
        self.rows.append((t, f, V, metric, on, vdot))

    def build(self, stop_time, metric_name, final_state):
        t, f, V, m, on, vd = zip(*self.rows)
        f = np.array(f, dtype=float)
        return Trajectory(
            t=np.array(t),
            fields=f,
            V=np.array(V),
            W=np.sum(f * f, axis=1),
            metric=np.array(m),
            switched_on=np.array(on, dtype=bool),
            vdot=np.array(vd),
            stop_time=stop_time,
            metric_name=metric_name,
            final_state=final_state,
        )


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def unitary(h, dt):
    """exp(-i h dt) via Hermitian eigendecomposition."""
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise IntegratorError(f"eigendecomposition failed: {exc}") from exc
    return (v * np.exp(-1j * dt * w)[..., None, :]) @ _dagger(v)


def step_closed(rho, h_total, dt):
    u = unitary(h_total, dt)
    return u @ rho @ _dagger(u)


def lindblad_rhs(rho, h, channels):
    out = -1j * (h @ rho - rho @ h)
    for ch in channels:
        if ch.rate == 0:
            continue
        L = ch.jump
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + ch.rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def step_lindblad(rho, h_total, channels, dt):
    """One classical RK4 step of the Lindblad master equation."""
    k1 = lindblad_rhs(rho, h_total, channels)
    k2 = lindblad_rhs(rho + 0.5 * dt * k1, h_total, channels)
    k3 = lindblad_rhs(rho + 0.5 * dt * k2, h_total, channels)
    k4 = lindblad_rhs(rho + dt * k3, h_total, channels)
    out = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    drift = np.max(np.abs(np.trace(out, axis1=-2, axis2=-1) - 1.0))
    if not drift <= TRACE_STEP_TOL:  # also catches overflow to nan
        raise IntegratorError(f"trace drifted by {drift:.3g}; reduce dt")
    return out


def liouvillian(h, channels=()):
    """Superoperator acting on row-major vec(rho); broadcasts over stacked ``h``.

    Uses vec(A X B) = (A kron B^T) vec(X).
    """
    h = np.asarray(h)
    d = h.shape[-1]
    eye = np.eye(d)
    L = -1j * (_kron(h, eye) - _kron(eye, np.swapaxes(h, -1, -2)))
    for ch in channels:
        if ch.rate == 0:
            continue
        J = ch.jump
        JdJ = J.conj().T @ J
        L = L + ch.rate * (np.kron(J, J.conj()) - 0.5 * np.kron(JdJ, eye) - 0.5 * np.kron(eye, JdJ.T))
    return L


def _kron(a, b):
    """Kronecker product over the last two axes, broadcasting the leading ones."""
    a = np.asarray(a)
    b = np.asarray(b)
    da, db = a.shape[-1], b.shape[-1]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(out.shape[:-4] + (da * db, da * db))


def rk4_propagator(generator, dt):
    """Matrix applied by one RK4 step of the linear ODE dx/dt = generator x."""
    a = generator * dt
    a2 = a @ a
    eye = np.eye(a.shape[-1])
    return eye + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24


def target_stop(problem, epsilon):
    """Stop rule: distance to the (pure) target at most ``epsilon``."""
    if problem.target is None:
        raise ValueError("a stop rule is required for problems without a target")
    return lambda rho: 1.0 - fidelity(rho, problem) <= epsilon


def run_trajectory(
    problem: ControlProblem,
    design: ControlDesign,
    rho0,
    channels: Sequence[LindbladChannel] = (),
    cfg: Optional[IntegratorConfig] = None,
    stop: Optional[Callable] = None,
    metric: Optional[Callable] = None,
    run_past_stop: bool = False,
    metric_name: Optional[str] = None,
) -> Trajectory:
    """Integrate the feedback loop from ``rho0``.

    Each step computes T from the current state, turns it into fields with the
    design law (optionally smoothed by a trailing moving average), holds the
    fields for ``cfg.dt`` and advances the state: exact unitary steps for
    closed systems with method "unitary-step", RK4 otherwise. The stop rule
    is checked on every freshly advanced state and, once it fires, the
    fields stay off. With ``run_past_stop`` free evolution continues to
    ``cfg.t_max``.
    """
    cfg = cfg or IntegratorConfig(dt=0.01, t_max=400.0)
    rho = qcore.density_matrix(rho0)
    if rho.shape != (problem.dim, problem.dim):
        raise ValueError(f"initial state has shape {rho.shape}, problem dimension is {problem.dim}")
    channels = tuple(channels)
    dt = cfg.dt
    if channels or cfg.method == "rk4":
        def advance(r, h):
            return step_lindblad(r, h, channels, dt)
    else:
        def advance(r, h):
            return step_closed(r, h, dt)

    pT = problem.lyapunov_observable.T

    def lyapunov(r):
        return float(np.real(np.sum(pT * r)))

    if stop is None:
        stop = target_stop(problem, design.epsilon)
    if metric is None:
        if problem.target is not None:
            metric, metric_name = (lambda r: fidelity(r, problem)), metric_name or "fidelity"
        else:
            metric, metric_name = lyapunov, metric_name or "V"
    metric_name = metric_name or "metric"

    law = design.law
    m = window_length(design.averaging_window, dt) if design.averaging_window else 1
    history = deque(maxlen=m)
    zeros = np.zeros(problem.k)
    active = not stop(rho)
    stop_time = None if active else 0.0

    def control(r):
        T = compute_T(r, problem)
        if not active:
            return zeros, T
        raw = law.fields(T)
        if m == 1:
            return raw, T
        history.append(raw)
        return np.array(list(history)).mean(axis=0), T

    rec = _Recorder()
    f, T = control(rho)
    rec.add(0.0, f, lyapunov(rho), metric(rho), active, lyapunov_rate(f, T))
    if active or run_past_stop:
        for i in range(1, cfg.n_steps + 1):
            rate = lyapunov_rate(f, T)
            rho = advance(rho, problem.hamiltonian(f))
            was_on = active
            if active and stop(rho):
                active = False
                stop_time = i * dt
            rec.add(i * dt, f, lyapunov(rho), metric(rho), was_on, rate)
            if not active and not run_past_stop:
                break
            f, T = control(rho)
    return rec.build(stop_time, metric_name, rho)
