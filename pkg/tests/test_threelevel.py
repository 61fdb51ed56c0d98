import numpy as np
import pytest
from hypothesis import given, strategies as st

from optlyap import qcore, threelevel
from optlyap.designs import ControlDesign, Conventional, PowerConstrained, StrengthConstrained, compute_T
from optlyap.dynamics import IntegratorConfig, run_trajectory
from optlyap.threelevel import PerturbationSpec, Variant


@pytest.fixture(scope="module")
def problem():
    return threelevel.build_three_level()


def test_benchmark_structure(problem):
    np.testing.assert_array_equal(problem.h0, np.diag([1.5, 1, 0]))
    np.testing.assert_array_equal(problem.lyapunov_observable, np.diag([0, 1, 1]))
    for h, n in zip(problem.controls, (1, 2, 4, 5)):
        np.testing.assert_array_equal(h, qcore.gell_mann(n))
    np.testing.assert_array_equal(problem.target, np.diag([1, 0, 0]))
    P = problem.lyapunov_observable
    assert np.all(qcore.commutator(P, problem.h0) == 0)
    assert np.all(qcore.commutator(P, qcore.gell_mann(3)) == 0)
    assert qcore.expectation(P, problem.target) == 0.0


def test_level_indexing():
    np.testing.assert_array_equal(threelevel.level(3), np.diag([1, 0, 0]))
    np.testing.assert_array_equal(threelevel.level(1), np.diag([0, 0, 1]))


class _Fixed:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def random(self, n):
        return self.values[:n]


def test_sampler_single_component():
    rho = threelevel.sample_random_state(_Fixed([1, 0, 0, 0.3, 0.6, 0.9]))
    np.testing.assert_allclose(rho, threelevel.level(3), atol=1e-15)


@given(st.integers(0, 2**64 - 1))
def test_sampler_returns_pure_states(seed):
    rho = threelevel.sample_random_state(np.random.default_rng(seed))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert qcore.purity(rho) == pytest.approx(1.0, abs=1e-12)
    qcore.density_matrix(rho)


def test_sampler_symmetry_oracle():
    rng = np.random.default_rng(123)
    r = rng.random((100_000, 6))
    # vectorised copy of the sampler's population of the first component
    pops = r[:, 0] ** 2 / np.sum(r[:, :3] ** 2, axis=1)
    assert pops.mean() == pytest.approx(1 / 3, abs=3e-3)
    rhos = threelevel.random_states(7, 20_000)
    assert rhos[:, 0, 0].real.mean() == pytest.approx(1 / 3, abs=6e-3)


def test_random_states_reproducible_and_prefix_stable():
    a = threelevel.random_states(42, 10)
    b = threelevel.random_states(42, 10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, threelevel.random_states(43, 10))


def test_perturbed_problem(problem):
    same = threelevel.perturbed_problem(problem, PerturbationSpec(1, 0.0))
    np.testing.assert_array_equal(same.h0, problem.h0)
    p3 = threelevel.perturbed_problem(problem, PerturbationSpec(3, 0.02))
    assert np.all(qcore.commutator(problem.lyapunov_observable, p3.h0) == 0)
    p1 = threelevel.perturbed_problem(problem, PerturbationSpec(1, 0.01))
    assert np.max(np.abs(p1.h0 - problem.h0)) == pytest.approx(0.01)
    np.testing.assert_array_equal(p1.lyapunov_observable, problem.lyapunov_observable)
    with pytest.raises(ValueError):
        PerturbationSpec(9, 0.1)


def test_emission_channels():
    c1, c2 = threelevel.emission_channels(0.1, 0.2)
    # sigma_i^- = |i><3|
    np.testing.assert_array_equal(c1.jump, np.outer([0, 0, 1], [1, 0, 0]))
    np.testing.assert_array_equal(c2.jump, np.outer([0, 1, 0], [1, 0, 0]))
    assert (c1.rate, c2.rate) == (0.1, 0.2)


FAST = IntegratorConfig(dt=0.01, t_max=3000.0)


@pytest.mark.parametrize("law", [PowerConstrained(1e-4), StrengthConstrained(0.007)])
def test_nominal_fidelity_meets_threshold(law):
    res = threelevel.average_fidelity(ControlDesign(law), n_states=20, cfg=FAST, seed=1)
    assert np.all(res.per_state_fidelities >= 0.999)
    assert res.mean_fidelity >= 0.999
    assert res.mean_fidelity == pytest.approx(np.mean(res.per_state_fidelities))


def test_ensemble_matches_single_trajectories(problem):
    design = ControlDesign(StrengthConstrained(0.007))
    seed, n = 9, 4
    res = threelevel.average_fidelity(design, n_states=n, cfg=FAST, seed=seed)
    for rho0, fid, stop in zip(threelevel.random_states(seed, n), res.per_state_fidelities, res.stop_times):
        traj = run_trajectory(problem, design, rho0, cfg=FAST)
        assert traj.stop_time == pytest.approx(stop, abs=1e-9)
        assert traj.metric[-1] == pytest.approx(fid, abs=1e-10)


def test_replay_matches_ensemble_path(problem):
    design = ControlDesign(PowerConstrained(1e-4))
    seed = 3
    rho0 = threelevel.random_states(seed, 1)[0]
    traj = run_trajectory(problem, design, rho0, cfg=FAST)
    # sample i carries the fields held over the step that ends at t_i
    schedule = traj.fields[1:]
    pert = PerturbationSpec(3, 0.01)
    chans = tuple(threelevel.emission_channels(0.001, 0.001))
    ref_pert = threelevel.replay_fidelity(problem, schedule, rho0, FAST.dt, pert=pert)
    ref_open = threelevel.replay_fidelity(problem, schedule, rho0, FAST.dt, channels=chans, substeps=10)
    res = threelevel.fidelity_sweep(design, [Variant(perturbation=pert), Variant(channels=chans)], 1, FAST, seed)
    assert res[0].mean_fidelity == pytest.approx(ref_pert, abs=1e-10)
    assert res[1].mean_fidelity == pytest.approx(ref_open, abs=1e-10)


def test_sweep_chunking_and_reproducibility():
    design = ControlDesign(Conventional(0.01))
    variants = [Variant(perturbation=PerturbationSpec(1, 0.01)),
                Variant(channels=tuple(threelevel.emission_channels(0.001, 0.001)))]
    a = threelevel.fidelity_sweep(design, variants, 6, FAST, seed=5)
    b = threelevel.fidelity_sweep(design, variants, 6, FAST, seed=5, chunk_size=4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.per_state_fidelities, y.per_state_fidelities)
        assert np.all((x.per_state_fidelities >= 0) & (x.per_state_fidelities <= 1))


def test_fidelity_decreases_with_decoherence():
    design = ControlDesign(StrengthConstrained(0.007))
    variants = [Variant(channels=tuple(threelevel.emission_channels(g, g))) for g in (0.0005, 0.001, 0.002)]
    res = threelevel.fidelity_sweep(design, variants, 10, FAST, seed=2)
    means = [r.mean_fidelity for r in res]
    assert means[0] >= means[1] >= means[2]


def test_convergence_ensemble():
    design = ControlDesign(PowerConstrained(1e-4))
    res = threelevel.convergence_ensemble(design, n_states=5, cfg=IntegratorConfig(0.01, 400.0), seed=0,
                                          record_every=10)
    assert res.distances.shape == (len(res.t), 5)
    assert np.all(res.stop_times > 0)
    fp = res.first_passage(design.epsilon)
    np.testing.assert_allclose(fp, np.ceil(res.stop_times / 0.1 - 1e-9) * 0.1, atol=0.1 + 1e-9)
    # distance is non-increasing while the fields are on (power law keeps V decreasing)
    assert np.all(np.diff(res.mean_distance()) <= 1e-9)


def test_T_vanishes_on_invariant_set(problem):
    # diagonal states other than the target commute with P and every H_n sees zero T
    for n in (1, 2):
        np.testing.assert_allclose(compute_T(threelevel.level(n), problem), 0.0, atol=1e-15)
