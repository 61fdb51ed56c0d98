"""Three-level benchmark, random initial states and robustness ensembles.

Basis ordering follows the printed matrices: index 0 is level |3> (the
target), index 1 is |2>, index 2 is |1>.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import qcore
from .designs import ControlDesign, ControlProblem, compute_T
from .dynamics import (
    IntegratorConfig,
    LindbladChannel,
    liouvillian,
    rk4_propagator,
    step_closed,
    TRACE_STEP_TOL,
)
from .errors import IntegratorError

LEVEL_INDEX = {3: 0, 2: 1, 1: 2}
CONTROL_GENERATORS = (1, 2, 4, 5)


def level(n):
    """Projector onto level |n>, n in {1, 2, 3}."""
    return qcore.basis_state(LEVEL_INDEX[n], 3)


def build_three_level(omega=1.0):
    h0 = omega * np.diag([1.5, 1.0, 0.0])
    p = np.diag([0.0, 1.0, 1.0])
    controls = tuple(qcore.gell_mann(n) for n in CONTROL_GENERATORS)
    return ControlProblem(h0=h0, controls=controls, lyapunov_observable=p, target=level(3))


def uniform_superposition():
    return qcore.projector(np.ones(3) / np.sqrt(3.0))


def emission_channels(gamma1, gamma2):
    """Spontaneous emission |3> -> |1> (rate gamma1) and |3> -> |2> (rate gamma2)."""
    out = []
    for lower, rate in ((1, gamma1), (2, gamma2)):
        jump = np.zeros((3, 3), dtype=complex)
        jump[LEVEL_INDEX[lower], LEVEL_INDEX[3]] = 1.0
        out.append(LindbladChannel(jump=jump, rate=rate))
    return out


def sample_random_state(rng):
    """Pure state R [r1 e^{2 pi i r4}, r2 e^{2 pi i r5}, r3 e^{2 pi i r6}] with r_i ~ U[0, 1)."""
    while True:
        r = rng.random(6)
        norm2 = float(np.sum(r[:3] ** 2))
        if norm2 >= 1e-12:
            break
    psi = r[:3] * np.exp(2j * np.pi * r[3:])
    return qcore.projector(psi / np.sqrt(norm2))


def state_streams(seed, n):
    """One independent generator per ensemble member, split from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def random_states(seed, n):
    return np.array([sample_random_state(g) for g in state_streams(seed, n)])


@dataclass(frozen=True)
class PerturbationSpec:
    generator_index: int
    delta: float

    def __post_init__(self):
        if self.generator_index not in range(1, 9):
            raise ValueError(f"generator index must be in 1..8, got {self.generator_index!r}")


def perturbed_problem(base, pert):
    """Copy of ``base`` with H0 -> H0 + delta * lambda_n; P and target unchanged."""
    h0 = base.h0 + pert.delta * qcore.gell_mann(pert.generator_index)
    return ControlProblem(
        h0=h0,
        controls=base.controls,
        lyapunov_observable=base.lyapunov_observable,
        target=base.target,
        relaxed=True,
    )


@dataclass
class EnsembleResult:
    n_states: int
    mean_fidelity: float
    per_state_fidelities: np.ndarray
    seed: int
    stop_times: np.ndarray = field(default=None, repr=False)

    @property
    def stderr(self):
        f = self.per_state_fidelities
        return float(np.std(f, ddof=1) / np.sqrt(len(f))) if len(f) > 1 else float("nan")


@dataclass(frozen=True)
class Variant:
    """A disturbed copy of the system that replays the nominal fields."""

    perturbation: Optional[PerturbationSpec] = None
    channels: Tuple[LindbladChannel, ...] = ()


class _Replica:
    def __init__(self, base, variant, rho0, dt, substeps):
        h0 = base.h0
        if variant.perturbation is not None:
            h0 = perturbed_problem(base, variant.perturbation).h0
        self.h0 = h0
        self.controls = base.control_stack
        self.dt = dt
        self.open = any(ch.rate > 0 for ch in variant.channels)
        if self.open:
            self.substeps = substeps
            self.gen0 = liouvillian(h0, variant.channels)
            self.gen_controls = np.array([liouvillian(h) for h in base.controls])
            d = h0.shape[0]
            self.state = rho0.reshape(len(rho0), d * d).copy()
            self.trace_idx = np.arange(d) * (d + 1)
        else:
            self.state = rho0.copy()

    def advance(self, fields):
        if not self.open:
            h = self.h0 + np.tensordot(fields, self.controls, axes=(-1, 0))
            self.state = step_closed(self.state, h, self.dt)
            return
        gen = self.gen0 + np.tensordot(fields, self.gen_controls, axes=(-1, 0))
        prop = rk4_propagator(gen, self.dt / self.substeps)
        v = self.state
        for _ in range(self.substeps):
            v = np.einsum("nij,nj->ni", prop, v)
        drift = np.max(np.abs(v[:, self.trace_idx].sum(axis=1) - 1.0), initial=0.0)
        if drift > TRACE_STEP_TOL:
            raise IntegratorError(f"trace drifted by {drift:.3g}; increase lindblad_substeps")
        self.state = v

    def fidelity(self, target):
        d = target.shape[0]
        rho = self.state.reshape(-1, d, d)
        return np.real(np.einsum("nij,ji->n", rho, target))

    def keep(self, mask):
        self.state = self.state[mask]


def _run_chunk(problem, design, rho0, variants, cfg, substeps):
    n = len(rho0)
    dt = cfg.dt
    law = design.law
    target = problem.target
    replicas = [_Replica(problem, v, rho0, dt, substeps) for v in variants]
    fid = np.full((len(variants), n), np.nan)
    stop_times = np.full(n, np.nan)
    m = int(round(design.averaging_window / dt)) if design.averaging_window else 1
    history = deque(maxlen=m)
    idx = np.arange(n)
    rho = np.array(rho0)

    def settle(done, t):
        nonlocal idx, rho, history
        if not done.any():
            return
        for j, rep in enumerate(replicas):
            fid[j, idx[done]] = rep.fidelity(target)[done]
        if t is not None:
            stop_times[idx[done]] = t
        keep = ~done
        idx, rho = idx[keep], rho[keep]
        history = deque((h[keep] for h in history), maxlen=m)
        for rep in replicas:
            rep.keep(keep)

    settle(1.0 - np.real(np.einsum("nij,ji->n", rho, target)) <= design.epsilon, 0.0)
    for i in range(1, cfg.n_steps + 1):
        if len(idx) == 0:
            break
        raw = law.fields(compute_T(rho, problem))
        if m > 1:
            history.append(raw)
            f = np.array(list(history)).mean(axis=0)
        else:
            f = raw
        rho = step_closed(rho, problem.hamiltonian(f), dt)
        for rep in replicas:
            rep.advance(f)
        settle(1.0 - np.real(np.einsum("nij,ji->n", rho, target)) <= design.epsilon, i * dt)
    settle(np.ones(len(idx), dtype=bool), None)
    return fid, stop_times


def fidelity_sweep(
    design: ControlDesign,
    variants: Sequence[Variant],
    n_states: int,
    cfg: Optional[IntegratorConfig] = None,
    seed: int = 0,
    lindblad_substeps: int = 10,
    chunk_size: Optional[int] = None,
    problem: Optional[ControlProblem] = None,
) -> List[EnsembleResult]:
    """Average fidelity of disturbed systems driven by the nominal feedback fields.

    For every random initial state the closed-loop fields are computed on the
    undisturbed, closed system and applied unchanged to each variant. Each
    variant's fidelity with the target is read off at the moment the nominal
    run switches its fields off (or at ``cfg.t_max`` if it never does).
    Open variants are integrated with RK4 at ``cfg.dt / lindblad_substeps``.

    States are independent; results are merged by index, so any
    ``chunk_size`` gives the same answer.
    """
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    cfg = cfg or IntegratorConfig(dt=0.01, t_max=3000.0)
    problem = problem or build_three_level()
    rho0 = random_states(seed, n_states)
    chunk = chunk_size or n_states
    fids, stops = [], []
    for lo in range(0, n_states, chunk):
        f, s = _run_chunk(problem, design, rho0[lo: lo + chunk], variants, cfg, lindblad_substeps)
        fids.append(f)
        stops.append(s)
    fid = np.concatenate(fids, axis=1)
    stop = np.concatenate(stops)
    return [
        EnsembleResult(
            n_states=n_states,
            mean_fidelity=float(np.mean(row)),
            per_state_fidelities=row,
            seed=seed,
            stop_times=stop,
        )
        for row in fid
    ]


def average_fidelity(design, pert=None, channels=(), n_states=1000, cfg=None, seed=0, **kwargs):
    variant = Variant(perturbation=pert, channels=tuple(channels))
    return fidelity_sweep(design, [variant], n_states, cfg, seed, **kwargs)[0]


def replay_fidelity(problem, schedule, rho0, dt, pert=None, channels=(), substeps=10):
    """Single-state reference for the ensemble path: apply a recorded field
    schedule (one row per step) to the disturbed system and return the final
    fidelity. Uses the plain density-matrix steppers."""
    from .dynamics import step_lindblad

    target_problem = problem if pert is None else perturbed_problem(problem, pert)
    rho = np.array(rho0)
    for f in schedule:
        h = target_problem.hamiltonian(f)
        if channels:
            for _ in range(substeps):
                rho = step_lindblad(rho, h, channels, dt / substeps)
        else:
            rho = step_closed(rho, h, dt)
    return float(np.real(np.sum(problem.target.T * rho)))


@dataclass
class ConvergenceResult:
    t: np.ndarray
    distances: np.ndarray  # (n_samples, n_states)
    stop_times: np.ndarray
    seed: int

    def mean_distance(self):
        return self.distances.mean(axis=1)

    def first_passage(self, threshold):
        """Earliest sampled time at which each state's distance is <= threshold (nan if never)."""
        hit = self.distances <= threshold
        first = np.argmax(hit, axis=0)
        return np.where(hit.any(axis=0), self.t[first], np.nan)


def convergence_ensemble(design, n_states=50, cfg=None, seed=0, record_every=1, problem=None):
    """Distance-to-target histories of the closed loop from seeded random states."""
    cfg = cfg or IntegratorConfig(dt=0.01, t_max=1000.0)
    problem = problem or build_three_level()
    rho = random_states(seed, n_states)
    target = problem.target
    law = design.law
    m = int(round(design.averaging_window / cfg.dt)) if design.averaging_window else 1
    history = deque(maxlen=m)

    def distance(r):
        return 1.0 - np.real(np.einsum("nij,ji->n", r, target))

    d = distance(rho)
    active = d > design.epsilon
    stop_times = np.where(active, np.nan, 0.0)
    ts, ds = [0.0], [d]
    for i in range(1, cfg.n_steps + 1):
        if not active.any():
            break
        raw = np.where(active[:, None], law.fields(compute_T(rho, problem)), 0.0)
        if m > 1:
            history.append(raw)
            f = np.where(active[:, None], np.array(list(history)).mean(axis=0), 0.0)
        else:
            f = raw
        rho = step_closed(rho, problem.hamiltonian(f), cfg.dt)
        d = distance(rho)
        done = active & (d <= design.epsilon)
        stop_times[done] = i * cfg.dt
        active &= ~done
        if i % record_every == 0 or not active.any():
            ts.append(i * cfg.dt)
            ds.append(d)
    return ConvergenceResult(np.array(ts), np.array(ds), stop_times, seed)
