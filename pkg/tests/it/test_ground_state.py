# End-to-end minimization on the default desk-scale configuration (N=2, s=0.5, p=2)
import numpy as np
import pytest

from fracground import certify, config, field, fracops, minimize, rearrange


@pytest.fixture(scope="module")
def run_config():
    return config.load_config(command="solve")


@pytest.fixture(scope="module")
def ground_state(run_config):
    return minimize.find_ground_state(run_config.solver_config())


def test_minimizer_converges_on_constraint(ground_state, run_config):
    report, _, _ = ground_state
    assert report.converged
    assert not report.stalled
    assert report.iterations < run_config.solver["max_iters"]
    assert report.grad_norm < run_config.solver["tol_grad"]
    assert abs(report.V - 1) <= minimize.CONSTRAINT_TOL
    T = [iterate["T"] for iterate in report.iterates]
    assert all(later <= earlier * (1 + minimize.MONOTONE_SLACK) for earlier, later in zip(T, T[1:]))
    assert report.T < T[0]


def test_multipliers_agree(ground_state, run_config):
    report, _, _ = ground_state
    assert report.theta > 0
    np.testing.assert_allclose(report.theta, report.theta_pairing, rtol=minimize.MULTIPLIER_AGREEMENT)
    assert minimize.lagrange_multiplier(report, run_config.problem) == report.theta


def test_solution_is_certified(ground_state, run_config):
    _, solution, _ = ground_state
    certificate = certify.certify_solution(solution, run_config.problem)
    assert certificate.strong_residual < 1e-2
    assert certificate.pohozaev_residual < 1e-2
    assert certificate.passed()


def test_solution_matches_petviashvili(ground_state, run_config):
    _, solution, _ = ground_state
    oracle = certify.ground_state_oracle(solution.grid, run_config.problem)
    assert certify.relative_l2_distance(certify.recenter(solution), oracle) < 1e-2


def test_minimizer_obeys_radial_bound(ground_state):
    report, _, _ = ground_state
    check = rearrange.radial_bound_check(rearrange.rearrange_decreasing(report.minimizer))
    assert check["passed"]


def test_solution_obeys_radial_bound(ground_state):
    _, solution, _ = ground_state
    assert rearrange.radial_bound_check(solution)["passed"]


def test_minimizer_sobolev_ratio(ground_state, run_config):
    report, _, _ = ground_state
    ratio = fracops.sobolev_ratio(report.minimizer, run_config.problem.s)
    assert np.isfinite(ratio) and ratio > 0


def test_minimum_does_not_depend_on_seed_radius(ground_state, run_config):
    report, _, _ = ground_state
    other, _, seed = minimize.find_ground_state(run_config.solver_config(), R=2.0)
    assert seed["R_star"] == 2.0
    assert other.converged
    np.testing.assert_allclose(other.T, report.T, rtol=1e-2)


def test_weak_and_strong_residuals_track_a_perturbation(ground_state, run_config, rng):
    _, solution, _ = ground_state
    noise = field.random_smooth_field(solution.grid, rng)
    scale = 0.01 * solution.values.max() / np.abs(noise.values).max()
    perturbed = solution.with_values(solution.values + scale * noise.values)

    certificate = certify.certify_solution(perturbed, run_config.problem)
    assert not certificate.checks()["weak_residual"]
    weak = max(row["defect"] / row["bound_scale"] for row in certificate.weak_residuals)
    assert 1e-3 < certificate.strong_residual / weak < 1e3
