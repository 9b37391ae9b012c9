import math

import numpy as np
import pytest

from conftest import SOLITON_NORM_SQ
from core.blockopt import bound_report
from core.coupling import BlockDecomposition, PhiKind, SignPartition
from core.groundstate import SubcriticalityError, soliton_1d
from core.pde import (DegenerateFitError, DiscreteSystem, EnvelopeSamples, Grid, GridMismatchError,
                      MaxIterationsError, PdeError, Potential, RadiiOutOfBoxError, SolverConfig, SystemSolver,
                      SystemSpec, SystemState, TailSeries, WindowBelowNoiseError, annulus_envelope, bump_field,
                      decay_chain_holds, energy, fit_decay, gradient, overlap_ratio, residual, seed_state, sign_diagnostics,
                      sliding_decay_rates, solve_system, tail_norms)

WELL = dict(kind='well', inner=0.0, outer=0.25, radius=3.0, width=0.5)


def scalar_spec(potential=None):
    return SystemSpec(N=1, p=2.0, beta=[[1.0]], potentials=[potential or Potential()])


def soliton_state(L=20.0, n=799):
    grid = Grid(1, L, n)
    return SystemState(grid, soliton_1d(grid.axis, 2.0)[None, :])


def competitive_pair():
    spec = SystemSpec(N=1, p=2.0, beta=[[1.0, -0.2], [-0.2, 1.0]])
    decomposition = BlockDecomposition((0, 1, 2), SignPartition.from_labels([1], [2]))
    return spec, decomposition


def test_constant_potential():
    pot = Potential()
    assert pot.sigma == 1.0
    assert pot.autonomous
    assert pot.rho == 0.0
    np.testing.assert_array_equal(pot(np.array([0.0, 5.0])), [1.0, 1.0])


def test_well_potential():
    pot = Potential(**WELL)
    assert pot.rho == 6.0
    assert pot.sigma == pytest.approx(0.25, abs=1e-5)
    assert pot.sigma <= 0.25
    assert pot(0.0) == pytest.approx(0.0, abs=1e-4)
    assert pot(20.0) == pytest.approx(0.25)
    assert pot.bound == 0.25
    assert not pot.autonomous
    assert Potential.from_dict(pot.to_dict()) == pot


def test_potential_rejects_unknown_kind():
    with pytest.raises(PdeError):
        Potential(kind='harmonic')
    with pytest.raises(PdeError):
        Potential(kind='well', width=0.0)


def test_system_spec_validation():
    spec = SystemSpec(N=1, p=2.0, beta=[[1.0, -0.5], [-0.5, 1.0]])
    assert spec.ell == 2
    assert len(spec.potentials) == 2
    assert spec.autonomous
    assert spec.box_length(1e-8) == pytest.approx(-math.log(1e-8))
    with pytest.raises(SubcriticalityError):
        SystemSpec(N=3, p=3.0, beta=[[1.0]])
    with pytest.raises(PdeError):
        SystemSpec(N=1, p=2.0, beta=[[1.0]], potentials=[Potential(value=0.0)])
    with pytest.raises(PdeError):
        SystemSpec(N=1, p=2.0, beta=np.eye(3), potentials=[Potential(), Potential()])


def test_grid_geometry():
    grid = Grid(1, 20.0, 799)
    assert grid.h == pytest.approx(0.05)
    assert grid.axis[0] == pytest.approx(-20.0 + 0.05)
    np.testing.assert_allclose(grid.axis, -grid.axis[::-1], atol=1e-12)
    assert Grid(2, 1.0, 9).radius().shape == (9, 9)
    with pytest.raises(PdeError):
        Grid(1, 1.0, 2)


def test_state_shape_is_checked():
    grid = Grid(1, 5.0, 9)
    with pytest.raises(GridMismatchError):
        SystemState(grid, np.zeros((1, 10)))
    with pytest.raises(GridMismatchError):
        SystemState(grid, np.zeros((2, 9)), tags=[PhiKind.TRIVIAL])


def test_gradient_matches_energy_derivative():
    grid = Grid(1, 5.0, 41)
    spec = SystemSpec(N=1, p=2.0, beta=[[1.0, 0.3], [0.3, 2.0]],
                      potentials=[Potential(), Potential(**WELL)])
    x = grid.axis
    fields = np.stack([np.exp(-x ** 2), 0.5 * np.exp(-(x - 1.0) ** 2)])
    direction = np.stack([np.cos(x) * np.exp(-x ** 2 / 4), np.sin(x) * np.exp(-x ** 2 / 4)])
    system = DiscreteSystem(spec, grid)

    eps = 1e-5
    numeric = (system.energy(fields + eps * direction) - system.energy(fields - eps * direction)) / (2 * eps)
    analytic = float(np.sum(system.gradient(fields) * direction) * grid.cell)
    assert numeric == pytest.approx(analytic, rel=1e-6)


def random_smooth_fields(rng, grid, ell, bumps=3):
    mesh = np.meshgrid(*grid.axes, indexing='ij')
    fields = np.zeros((ell,) + grid.shape)
    for i in range(ell):
        for _ in range(bumps):
            center = rng.uniform(-2.0, 2.0, grid.N)
            width = rng.uniform(0.5, 1.5)
            dist_sq = sum((c - x0) ** 2 for c, x0 in zip(mesh, center))
            fields[i] += rng.uniform(-1.5, 1.5) * np.exp(-dist_sq / width ** 2)
    return fields


@pytest.mark.parametrize('N', [1, 2])
def test_gradient_matches_energy_derivative_on_random_states(N):
    rng = np.random.default_rng(100 + N)
    grid = Grid(N, 4.0, 41 if N == 1 else 21)
    for _ in range(10):
        off = rng.uniform(-0.5, 0.5)
        spec = SystemSpec(N=N, p=2.0, beta=[[rng.uniform(0.5, 2.0), off], [off, rng.uniform(0.5, 2.0)]],
                          potentials=[Potential(), Potential(**WELL)])
        state = SystemState(grid, random_smooth_fields(rng, grid, 2))
        direction = random_smooth_fields(rng, grid, 2)

        eps = 1e-6
        plus = energy(SystemState(grid, state.fields + eps * direction), spec)
        minus = energy(SystemState(grid, state.fields - eps * direction), spec)
        numeric = (plus - minus) / (2 * eps)
        analytic = float(np.sum(gradient(state, spec) * direction) * grid.cell)
        assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-8)


def test_residual_of_zero_component_is_zero():
    grid = Grid(1, 5.0, 41)
    spec = SystemSpec(N=1, p=2.0, beta=[[1.0, -0.1], [-0.1, 1.0]])
    state = SystemState(grid, np.stack([np.exp(-grid.axis ** 2), np.zeros(41)]))
    values = residual(state, spec)
    assert values[0] > 0
    assert values[1] == 0.0


def test_sampled_soliton_is_nearly_stationary():
    state = soliton_state()
    spec = scalar_spec()
    assert 0 < residual(state, spec)[0] < 1e-2
    assert energy(state, spec) == pytest.approx(SOLITON_NORM_SQ / 4, rel=1e-3)
    assert gradient(state, spec).shape == state.fields.shape


def test_operations_check_component_count():
    state = soliton_state(n=99)
    spec, _ = competitive_pair()
    with pytest.raises(GridMismatchError):
        energy(state, spec)


def test_block_quantities():
    spec, decomposition = competitive_pair()
    grid = Grid(1, 10.0, 199)
    x = grid.axis
    fields = np.stack([np.exp(-x ** 2), x * np.exp(-(np.abs(x) - 2.0) ** 2)])
    system = DiscreteSystem(spec, grid)
    A, B = system.block_quantities(fields, decomposition)
    np.testing.assert_allclose(A, system.norms(fields))
    M = system.interaction_matrix(fields)
    assert B[0, 1] == pytest.approx(-0.2 * M[0, 1])
    assert B[1, 1] == pytest.approx(M[1, 1])


def test_state_checkpoint_round_trip(tmp_path):
    state = soliton_state(n=99)
    state.energy = 1.25
    path = state.save(tmp_path / 'state', {'p': 2.0})
    assert path.name == 'state.npz'
    loaded = SystemState.load(path)
    np.testing.assert_array_equal(loaded.fields, state.fields)
    assert loaded.tags == [PhiKind.TRIVIAL]
    assert loaded.energy == 1.25
    header = SystemState.read_header(path)
    assert header['p'] == 2.0
    assert header['n'] == 99


def test_bump_field_superposes_signed_bumps(profile_1d):
    grid = Grid(1, 20.0, 399)
    odd = bump_field(grid, profile_1d, np.array([[5.0], [-5.0]]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(odd, -odd[::-1], atol=1e-10)
    assert odd.max() == pytest.approx(math.sqrt(2.0), rel=1e-3)


def test_seed_state_layout(profile_1d):
    spec, decomposition = competitive_pair()
    grid = Grid(1, 40.0, 799)
    state = seed_state(spec, decomposition, grid, profile_1d, radius=16.0)
    assert state.tags == [PhiKind.TRIVIAL, PhiKind.THETA]
    center = grid.n // 2
    assert state.fields[0, center] == pytest.approx(math.sqrt(2.0), rel=1e-6)
    assert state.fields[1, center] == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(state.fields[1], -state.fields[1, ::-1], atol=1e-10)
    with pytest.raises(PdeError):
        seed_state(spec, decomposition, grid, profile_1d, radius=45.0)


def test_overlap_and_sign_diagnostics():
    grid = Grid(1, 10.0, 199)
    x = grid.axis
    state = SystemState(grid, np.stack([1.0 / np.cosh(x), x / np.cosh(x)]),
                        tags=[PhiKind.TRIVIAL, PhiKind.THETA])
    assert overlap_ratio(state, 1, 1, 2.0) == pytest.approx(1.0)
    assert 0 < overlap_ratio(state, 1, 2, 2.0) < 1

    signs = sign_diagnostics(state)
    assert signs[0]['positive'] and signs[0]['consistent']
    assert signs[1]['sign_changing'] and signs[1]['consistent']

    swapped = SystemState(grid, state.fields, tags=[PhiKind.THETA, PhiKind.TRIVIAL])
    assert not any(entry['consistent'] for entry in sign_diagnostics(swapped))


def test_overlap_of_zero_component():
    grid = Grid(1, 5.0, 9)
    state = SystemState(grid, np.zeros((2, 9)))
    with pytest.raises(PdeError):
        overlap_ratio(state, 1, 2, 2.0)


def test_tail_norm_at_origin_is_full_norm():
    state = soliton_state()
    system = DiscreteSystem(scalar_spec(), state.grid)
    tail = tail_norms(state, [0.0])
    assert tail.xi[0, 0] == pytest.approx(system.norms(state.fields)[0], rel=1e-10)


def test_tail_norms_decay_at_twice_the_rate():
    state = soliton_state()
    radii = 0.0125 + np.arange(0.0, 15.0, 0.5)
    tail = tail_norms(state, radii, fit_window=(3.0, 10.0))
    assert np.all(np.diff(tail.total) <= 0)
    assert tail.fitted_theta == pytest.approx(2.0, abs=0.05)
    frame = tail.to_frame()
    assert list(frame.columns) == ['radius', 'xi_1', 'xi_total']


def test_tail_norms_reject_bad_radii():
    state = soliton_state(n=99)
    with pytest.raises(RadiiOutOfBoxError):
        tail_norms(state, [0.0, 25.0])
    with pytest.raises(PdeError):
        tail_norms(state, [3.0, 1.0])


def test_decay_fit_of_soliton():
    state = soliton_state()
    envelope = annulus_envelope(state)
    assert envelope.radii[0] == pytest.approx(0.0)
    fit = fit_decay(state, (3.0, 10.0), scalar_spec())
    component = fit.components[0]
    assert component.rate == pytest.approx(1.0, abs=0.01)
    assert component.comparison == 1.0
    assert component.passed
    assert fit.all_pass
    assert list(fit.to_frame()['status']) == ['PASS']


def test_tail_decay_is_twice_the_envelope_rate():
    state = soliton_state()
    tail = tail_norms(state, 0.0125 + np.arange(3.0, 10.0, 0.5))
    fit = fit_decay(state, (3.0, 10.0))
    assert decay_chain_holds(tail, fit)
    assert not decay_chain_holds(TailSeries(tail.radii, tail.xi, None), fit)


def test_decay_fit_errors():
    state = soliton_state()
    with pytest.raises(DegenerateFitError):
        fit_decay(state, (3.0, 3.12))
    with pytest.raises(WindowBelowNoiseError):
        fit_decay(state, (15.0, 19.0), noise_floor=1e-5)
    with pytest.raises(PdeError):
        fit_decay(state, [(3.0, 10.0), (3.0, 10.0)])


def test_decay_fit_uses_sqrt_sigma_for_wells():
    radii = np.linspace(0.0, 30.0, 301)
    samples = EnvelopeSamples(radii, np.exp(-0.3 * radii))
    spec = scalar_spec(Potential(**WELL))
    fit = fit_decay(samples, (10.0, 30.0), spec)
    component = fit.components[0]
    assert component.comparison == pytest.approx(0.5, abs=1e-5)
    assert component.rate == pytest.approx(0.3)
    assert not component.passed
    assert list(fit.to_frame()['status']) == ['FAIL']


def test_decay_fit_compares_against_sqrt_of_constant_potential():
    radii = np.linspace(0.0, 20.0, 201)
    spec = scalar_spec(Potential(value=4.0))

    slow = fit_decay(EnvelopeSamples(radii, np.exp(-radii)), (3.0, 10.0), spec).components[0]
    assert slow.comparison == pytest.approx(2.0)
    assert slow.threshold == pytest.approx(1.9)
    assert slow.rate == pytest.approx(1.0)
    assert not slow.passed

    fast = fit_decay(EnvelopeSamples(radii, np.exp(-2.0 * radii)), (3.0, 10.0), spec).components[0]
    assert fast.rate == pytest.approx(2.0)
    assert fast.passed

    assert not fit_decay(EnvelopeSamples(radii, np.exp(-radii)), (3.0, 10.0), sigma=[4.0]).all_pass


def test_sliding_rates_of_pure_exponential():
    radii = np.linspace(0.0, 10.0, 101)
    frame = sliding_decay_rates(radii, 3.0 * np.exp(-2.0 * radii), [(0.0, 5.0), (5.0, 10.0)])
    np.testing.assert_allclose(frame['rate'], [2.0, 2.0], rtol=1e-10)
    np.testing.assert_allclose(frame['prefactor'], [3.0, 3.0], rtol=1e-8)


def test_solver_config_validation():
    with pytest.raises(PdeError):
        SolverConfig(step_factor=1.0)
    with pytest.raises(PdeError):
        SolverConfig(projection_interval=0)


def test_solver_rejects_theta_blocks_in_plane():
    spec = SystemSpec(N=2, p=2.0, beta=[[1.0]])
    decomposition = BlockDecomposition((0, 1), SignPartition.from_labels([], [1]))
    with pytest.raises(PdeError):
        SystemSolver(SolverConfig(L=4.0, n=15)).solve(spec, decomposition)


def test_dimension_three_runs_without_projection(profile_3d):
    spec = SystemSpec(N=3, p=2.0, beta=[[1.0]])
    decomposition = BlockDecomposition((0, 1))
    config = SolverConfig(L=6.0, n=15, max_iterations=5)
    with pytest.raises(MaxIterationsError) as info:
        solve_system(spec, decomposition, config, profile=profile_3d)
    result = info.value.result
    assert result.equivariance_errors == []
    assert result.state.fields.shape == (1, 15, 15, 15)
    assert result.iterations <= 5


@pytest.mark.slow
def test_scalar_ground_state_1d(profile_1d):
    spec = scalar_spec()
    result = solve_system(spec, BlockDecomposition((0, 1)), SolverConfig(L=20.0, n=799), profile=profile_1d)
    assert result.converged
    assert np.max(result.residuals) < 1e-6
    assert result.energy == pytest.approx(SOLITON_NORM_SQ / 4, rel=2e-3)
    assert result.state.fields.max() == pytest.approx(math.sqrt(2.0), rel=2e-3)
    assert sign_diagnostics(result.state)[0]['positive']
    assert result.equivariance_errors[0] < 1e-12
    assert list(result.log.columns) == ['iteration', 'energy', 'residual', 'step']
    assert result.log['energy'].iloc[-1] <= result.log['energy'].iloc[0] + 1e-12
    assert fit_decay(result.state, (3.0, 10.0), spec).all_pass


@pytest.mark.slow
def test_energy_converges_at_second_order(profile_1d):
    spec = scalar_spec()
    exact = SOLITON_NORM_SQ / 4
    errors = []
    for n in (199, 399):
        result = solve_system(spec, BlockDecomposition((0, 1)), SolverConfig(L=20.0, n=n), profile=profile_1d)
        errors.append(abs(result.energy - exact))
    assert 3.0 < errors[0] / errors[1] < 5.0


@pytest.mark.slow
def test_competitive_pair_keeps_block_signs(profile_1d):
    spec, decomposition = competitive_pair()
    config = SolverConfig(L=40.0, n=1599, seed_radius=16.0)
    result = solve_system(spec, decomposition, config, profile=profile_1d)
    assert result.converged
    signs = sign_diagnostics(result.state)
    assert signs[0]['positive']
    assert signs[1]['sign_changing']
    assert all(entry['consistent'] for entry in signs)
    assert result.energy == pytest.approx(3 * SOLITON_NORM_SQ / 4, rel=1e-2)
    assert overlap_ratio(result.state, 1, 2, spec.p) < 0.01

    fit = fit_decay(result.state, [(4.0, 10.0), (20.0, 30.0)], spec)
    assert fit.all_pass
    np.testing.assert_allclose(fit.rates, [1.0, 1.0], atol=0.02)

    report = bound_report([1.0, 1.0], decomposition.signs, SOLITON_NORM_SQ, fold=6)
    assert float(np.sum(result.norms)) < report.bound


@pytest.mark.slow
def test_decay_rate_follows_outer_potential(profile_1d):
    spec = scalar_spec(Potential(**WELL))
    config = SolverConfig(L=40.0, n=399)
    result = solve_system(spec, BlockDecomposition((0, 1)), config, profile=profile_1d)
    assert result.converged
    fit = fit_decay(result.state, (10.0, 30.0), spec)
    component = fit.components[0]
    assert component.comparison == pytest.approx(0.5, abs=1e-5)
    assert component.rate == pytest.approx(0.5, abs=0.02)
    assert component.passed


@pytest.mark.slow
def test_four_dimensional_smoke_run(profile_4d):
    spec = SystemSpec(N=4, p=1.5, beta=[[1.0, -0.1], [-0.1, 1.0]])
    decomposition = BlockDecomposition((0, 1, 2), SignPartition.from_labels([1], [2]))
    config = SolverConfig(L=8.0, n=32, max_iterations=200, projection_interval=50)
    try:
        result = solve_system(spec, decomposition, config, profile=profile_4d)
    except MaxIterationsError as e:
        result = e.result
    assert result.state.fields.shape == (2, 32, 32, 32, 32)
    assert np.isfinite(result.energy) and result.energy > 0
    signs = sign_diagnostics(result.state)
    assert signs[0]['positive']
    assert signs[1]['sign_changing']
    assert len(result.equivariance_errors) == 2
    assert all(entry['consistent'] for entry in signs)

    report = bound_report([1.0, 1.0], decomposition.signs, profile_4d.norm_sq, fold=6)
    assert float(np.sum(result.norms)) <= report.bound
