import math

import numpy as np
import pytest

from modetrain.datasets import shifting_bar
from modetrain.diagnostics import (
    benchmark_solver_vs_cd,
    certainty_trajectory,
    distance_profile,
    energy_change_check,
    energy_law_suite,
    energy_variance,
    hidden_certainty,
    log_hidden_certainty,
    marginal_mode,
    modal_correspondence,
    modal_correspondence_suite,
    spin_distance,
)
from modetrain.rbm import Convention, NodeState, RbmParams
from modetrain.solvers import exhaustive_ground_state, gauge_transform


def random_gauged(n, m, rng, sigma=1.0):
    rbm = RbmParams(sigma * rng.standard_normal((n, m)), np.zeros(n),
                    np.zeros(m), Convention.PLUS_MINUS)
    return gauge_transform(rbm, exhaustive_ground_state(rbm))


def pm_state(v, h):
    return NodeState(v, h, Convention.PLUS_MINUS)


# ---------------------------------------------------------------- distance

def test_spin_distance_identical():
    s = pm_state([1, -1, 1], [1, 1])
    assert spin_distance(s, s) == 0.0


def test_spin_distance_global_flip():
    s1 = pm_state([1, -1, 1], [1, 1])
    s2 = pm_state([-1, 1, -1], [-1, -1])
    assert spin_distance(s1, s2) == 0.0


def test_spin_distance_formula_cases():
    ones = pm_state([1] * 4, [1] * 4)
    all_v_flipped = pm_state([-1] * 4, [1] * 4)
    assert spin_distance(ones, all_v_flipped) == 1.0
    half = pm_state([-1, -1, 1, 1], [-1, -1, 1, 1])
    assert spin_distance(ones, half) == 0.5


def test_spin_distance_symmetry_and_triangle():
    rng = np.random.default_rng(5)
    n = m = 3
    bits = np.array(np.meshgrid(*[[0, 1]] * (n + m),
                                indexing="ij")).reshape(n + m, -1).T
    spins = 2 * bits - 1
    nv = (spins[:, None, :n] != spins[None, :, :n]).sum(axis=2)
    mh = (spins[:, None, n:] != spins[None, :, n:]).sum(axis=2)
    d = nv / n + mh / m - 2.0 * nv * mh / (n * m)
    assert np.allclose(d, d.T)
    via = (d[:, :, None] + d[None, :, :]).min(axis=1)
    assert np.all(d <= via + 1e-12)
    # spot check the matrix against the scalar implementation
    for _ in range(20):
        i, j = rng.integers(0, len(spins), 2)
        got = spin_distance(pm_state(spins[i, :n], spins[i, n:]),
                            pm_state(spins[j, :n], spins[j, n:]))
        assert abs(got - d[i, j]) < 1e-12


def test_spin_distance_requires_pm():
    with pytest.raises(ValueError):
        spin_distance(NodeState([0, 1], [1]), NodeState([0, 1], [1]))


# ---------------------------------------------------------------- profile

def test_distance_profile_mean_energy_law():
    rng = np.random.default_rng(7)
    for _ in range(10):
        gauged = random_gauged(3, 3, rng)
        e0 = exhaustive_ground_state(gauged).energy
        profile = distance_profile(gauged)
        expected = (1.0 - 2.0 * profile.distances) * e0
        assert np.max(np.abs(profile.mean_energy - expected)) < 1e-10
        assert profile.state_counts.sum() == 2 ** 6
        assert np.all((profile.distances >= 0) & (profile.distances <= 1))


def test_distance_profile_zero_bin_is_flip_pair():
    rng = np.random.default_rng(11)
    gauged = random_gauged(3, 2, rng)
    e0 = exhaustive_ground_state(gauged).energy
    profile = distance_profile(gauged)
    assert profile.distances[0] == 0.0
    assert profile.state_counts[0] == 2
    assert abs(profile.mean_energy[0] - e0) < 1e-12


def test_distance_profile_half_distance_bin():
    rng = np.random.default_rng(13)
    gauged = random_gauged(4, 4, rng)
    profile = distance_profile(gauged)
    idx = np.flatnonzero(np.abs(profile.distances - 0.5) < 1e-15)
    assert len(idx) == 1
    assert abs(profile.mean_energy[idx[0]]) < 1e-10


# ---------------------------------------------------------------- energy change

def test_energy_change_ground_state_shift():
    rng = np.random.default_rng(17)
    gauged = random_gauged(3, 3, rng)
    gamma = 0.37
    report = energy_change_check(gauged, gamma)
    assert report.passed and report.max_abs_error < 1e-12
    # the d=0 state moves by exactly gamma*n*m, the d=1 states by the opposite
    n = m = 3
    w_after = gauged.weights - gamma
    ones = pm_state([1] * 3, [1] * 3)
    before = -float(np.ones(3) @ gauged.weights @ np.ones(3))
    after = -float(np.ones(3) @ w_after @ np.ones(3))
    assert abs((after - before) - gamma * n * m) < 1e-12


def test_energy_change_all_states_random():
    rng = np.random.default_rng(19)
    for _ in range(5):
        gauged = random_gauged(3, 3, rng)
        gamma = float(rng.uniform(0.05, 0.9))
        assert energy_change_check(gauged, gamma).max_abs_error < 1e-12


# ---------------------------------------------------------------- variance

def test_energy_variance_zero_params():
    assert energy_variance(RbmParams.zeros(3, 3, Convention.PLUS_MINUS)) == 0.0


def test_variance_decreases_at_optimal_rate():
    rng = np.random.default_rng(23)
    for _ in range(10):
        gauged = random_gauged(4, 4, rng)
        e0 = exhaustive_ground_state(gauged).energy
        gamma_star = -e0 / 16.0
        before = energy_variance(gauged)
        shifted = RbmParams(gauged.weights - gamma_star, np.zeros(4),
                            np.zeros(4), Convention.PLUS_MINUS)
        assert energy_variance(shifted) < before


def test_variance_is_quadratic_in_gamma():
    rng = np.random.default_rng(29)
    gauged = random_gauged(4, 4, rng)
    e0 = exhaustive_ground_state(gauged).energy
    gamma_star = -e0 / 16.0
    grid = np.linspace(0.0, 2.0 * gamma_star, 15)
    variances = np.array([
        energy_variance(RbmParams(gauged.weights - g, np.zeros(4), np.zeros(4),
                                  Convention.PLUS_MINUS))
        for g in grid
    ])
    coeffs = np.polyfit(grid, variances, 2)
    residual = variances - np.polyval(coeffs, grid)
    assert np.max(np.abs(residual)) < 1e-8 * max(1.0, variances.max())
    interior_min = grid[int(np.argmin(variances))]
    assert abs(interior_min - gamma_star) <= grid[1] - grid[0]


# ---------------------------------------------------------------- certainty

def test_hidden_certainty_uniform():
    rbm = RbmParams.zeros(3, 10)
    assert abs(hidden_certainty(rbm, [0, 1, 0]) - 2.0 ** -10) < 1e-15


def test_hidden_certainty_product():
    # fields chosen so the conditionals are exactly 0.9 and 0.2
    theta1 = math.log(0.9 / 0.1)
    theta2 = math.log(0.2 / 0.8)
    rbm = RbmParams(np.zeros((2, 2)), np.zeros(2), np.array([theta1, theta2]))
    r = hidden_certainty(rbm, [0, 0])
    assert abs(r - 0.9 * 0.8) < 1e-12


def test_hidden_certainty_saturates():
    rbm = RbmParams(np.full((2, 3), 80.0), np.zeros(2), np.zeros(3))
    assert hidden_certainty(rbm, [1, 1]) > 1.0 - 1e-12


def test_hidden_certainty_log_domain_no_underflow():
    rbm = RbmParams.zeros(2, 1024)
    log_r = log_hidden_certainty(rbm, [0, 0])
    assert np.isfinite(log_r)
    assert abs(log_r - (-1024 * math.log(2))) < 1e-9
    r = hidden_certainty(rbm, [0, 0])
    assert 0.0 < r <= 1.0 or r == 0.0  # subnormal magnitude is acceptable


# ---------------------------------------------------------------- modes

def test_marginal_mode_matches_enumeration():
    rng = np.random.default_rng(31)
    rbm = RbmParams(rng.standard_normal((4, 3)), rng.standard_normal(4),
                    rng.standard_normal(3))
    from modetrain.rbm import unnormalized_marginal, binary_block
    states = binary_block(4, 0, 16).astype(float)
    log_p = unnormalized_marginal(rbm, states)
    v, log_max = marginal_mode(rbm)
    assert abs(log_max - log_p.max()) < 1e-12
    assert np.array_equal(v, states[np.argmax(log_p)].astype(int))


def test_modal_correspondence_zero_frustration():
    rng = np.random.default_rng(37)
    for _ in range(20):
        rbm = RbmParams(np.abs(rng.standard_normal((4, 4))), np.zeros(4),
                        np.zeros(4), Convention.PLUS_MINUS)
        assert modal_correspondence(rbm).equal


def test_modal_correspondence_large_weight_limit():
    rng = np.random.default_rng(41)
    checked = 0
    for _ in range(20):
        rbm = RbmParams(0.1 * rng.standard_normal((4, 4)), np.zeros(4),
                        np.zeros(4), Convention.PLUS_MINUS)
        gs = exhaustive_ground_state(rbm)
        fields = gs.visible.astype(float) @ rbm.weights
        if np.any(fields == 0):
            continue
        scaled = RbmParams(50.0 * rbm.weights, np.zeros(4), np.zeros(4),
                           Convention.PLUS_MINUS)
        assert modal_correspondence(scaled).equal
        checked += 1
    assert checked >= 15


def test_modal_correspondence_reports_certainty():
    rng = np.random.default_rng(43)
    rbm = RbmParams(rng.standard_normal((4, 4)), rng.standard_normal(4),
                    rng.standard_normal(4))
    mc = modal_correspondence(rbm)
    assert 0.0 < mc.r_at_marginal_mode <= 1.0
    assert abs(mc.r_at_marginal_mode
               - hidden_certainty(rbm, mc.marginal_mode_v)) < 1e-15


def test_certainty_trajectory_rises():
    data = shifting_bar(8, 1)
    traj = certainty_trajectory(data, n_hidden=6, n_updates=800, eps=0.5,
                                seed=0, record_every=100)
    assert traj.r_mode[-1] > traj.r_mode[0]
    assert traj.iters[0] == 0 and traj.iters[-1] == 800


# ---------------------------------------------------------------- suites

def test_energy_law_suite_small():
    report = energy_law_suite(seeds=10, max_size=4)
    assert report["max_mean_law_error"] < 1e-10
    assert report["max_change_law_error"] < 1e-10
    assert report["variance_decrease_count"] == 10
    assert report["grid_minimizer_hits"] == 10


def test_modal_correspondence_suite_small():
    report = modal_correspondence_suite(4, seeds=25, sigma=0.1)
    assert report["zero_frustration_equal"] == 25
    assert report["scaled_equal"] == report["scaled_applicable"]
    assert report["small_weight_equal"] >= 13


# ---------------------------------------------------------------- benchmark

def test_benchmark_identical_when_both_find_optimum():
    # tiny instances with generous budgets: both sides reach the optimum
    report = benchmark_solver_vs_cd(4, budget_steps=16_000, seeds=5,
                                    exchange_rate=0.1)
    assert report.cd_sweeps == 1600
    assert np.allclose(report.delta_eps_pct, 0.0)
    assert report.median_delta_eps_pct == 0.0


def test_benchmark_deterministic_energies():
    r1 = benchmark_solver_vs_cd(6, budget_steps=50, seeds=4, exchange_rate=10.0)
    r2 = benchmark_solver_vs_cd(6, budget_steps=50, seeds=4, exchange_rate=10.0)
    assert np.array_equal(r1.energies_solver, r2.energies_solver)
    assert np.array_equal(r1.energies_cd, r2.energies_cd)
    assert np.array_equal(r1.delta_eps_pct, r2.delta_eps_pct)
