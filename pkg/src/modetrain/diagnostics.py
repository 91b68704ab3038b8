"""Measurable diagnostics: spin distance, energy laws over distance shells,
energy variance, hidden certainty, joint/marginal mode correspondence, and a
wall-time-matched comparison of the dynamical solver against Gibbs sampling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rbm import (
    Convention,
    NodeState,
    RbmParams,
    binary_block,
    conditional_hidden,
    energy,
    gibbs_chain,
    iter_binary_blocks,
    unnormalized_marginal,
)
from .solvers import (
    ModeMethod,
    exhaustive_ground_state,
    memcomputing_solve,
    rbm_to_max2sat,
    sample_mode,
)

PROFILE_CAP_BITS = 16
VARIANCE_CAP_BITS = 20
MARGINAL_CAP_BITS = 20


def spin_distance(s1: NodeState, s2: NodeState) -> float:
    """Layer-normalized disagreement between two {-1,+1} states:
    d = n_v/n + m_h/m - 2 n_v m_h / (n m), zero on global-flip pairs."""
    if s1.convention is not Convention.PLUS_MINUS or s2.convention is not Convention.PLUS_MINUS:
        raise ValueError("spin distance is defined for {-1,+1} states")
    if s1.visible.shape != s2.visible.shape or s1.hidden.shape != s2.hidden.shape:
        raise ValueError("states must have equal shapes")
    n, m = len(s1.visible), len(s1.hidden)
    n_v = int(np.sum(s1.visible != s2.visible))
    m_h = int(np.sum(s1.hidden != s2.hidden))
    return n_v / n + m_h / m - 2.0 * n_v * m_h / (n * m)


@dataclass(frozen=True)
class DistanceProfile:
    """Per-distance shell statistics around the all-ones configuration."""

    distances: np.ndarray
    mean_energy: np.ndarray
    state_counts: np.ndarray


def _require_gauged(rbm: RbmParams):
    if rbm.convention is not Convention.PLUS_MINUS:
        raise ValueError("requires the {-1,+1} convention")
    if np.any(rbm.visible_bias != 0) or np.any(rbm.hidden_bias != 0):
        raise ValueError("requires an unbiased (gauged) model")


def _shell_tables(n: int, m: int):
    """Integer distance keys k = n_v*m + m_h*n - 2*n_v*m_h (= d*n*m) for every
    (n_v, m_h) pair, with the pair count per cell."""
    n_v = np.arange(n + 1)[:, None]
    m_h = np.arange(m + 1)[None, :]
    keys = n_v * m + m_h * n - 2 * n_v * m_h
    from math import comb
    counts = np.array([[comb(n, i) * comb(m, j) for j in range(m + 1)]
                       for i in range(n + 1)], dtype=float)
    return keys, counts


def _cell_energy_sums(gauged: RbmParams) -> np.ndarray:
    """Sum of E over all states in each (n_v, m_h) cell, n_v/m_h counted
    against the all-ones configuration."""
    n, m = gauged.n_visible, gauged.n_hidden
    v_bits = binary_block(n, 0, 1 << n)
    h_bits = binary_block(m, 0, 1 << m)
    v = (2.0 * v_bits - 1.0)
    h = (2.0 * h_bits - 1.0)
    energies = -(v @ gauged.weights @ h.T)
    n_v = n - v_bits.sum(axis=1)
    m_h = m - h_bits.sum(axis=1)
    row_sums = np.zeros((n + 1, 1 << m))
    np.add.at(row_sums, n_v, energies)
    cell_sums = np.zeros((n + 1, m + 1))
    np.add.at(cell_sums.T, m_h, row_sums.T)
    return cell_sums


def distance_profile(gauged: RbmParams) -> DistanceProfile:
    """Unweighted mean energy of all states binned by distance from all-ones."""
    _require_gauged(gauged)
    n, m = gauged.n_visible, gauged.n_hidden
    if n + m > PROFILE_CAP_BITS:
        raise ValueError(f"distance profile enumerates 2^(n+m) states; {n + m} bits exceeds cap")
    keys, counts = _shell_tables(n, m)
    cell_sums = _cell_energy_sums(gauged)
    sums: dict[int, float] = {}
    totals: dict[int, float] = {}
    for i in range(n + 1):
        for j in range(m + 1):
            k = int(keys[i, j])
            sums[k] = sums.get(k, 0.0) + cell_sums[i, j]
            totals[k] = totals.get(k, 0.0) + counts[i, j]
    ks = sorted(sums)
    return DistanceProfile(
        distances=np.array([k / (n * m) for k in ks]),
        mean_energy=np.array([sums[k] / totals[k] for k in ks]),
        state_counts=np.array([int(totals[k]) for k in ks]),
    )


@dataclass(frozen=True)
class EnergyChangeReport:
    gamma: float
    max_abs_error: float
    n_states: int
    passed: bool


def energy_change_check(gauged: RbmParams, gamma: float,
                        tol: float = 1e-12) -> EnergyChangeReport:
    """Apply the uniform ground-state update dW_ij = -gamma and verify that
    every state's energy moves by exactly gamma*n*m*(1-2d)."""
    _require_gauged(gauged)
    n, m = gauged.n_visible, gauged.n_hidden
    if n + m > PROFILE_CAP_BITS:
        raise ValueError(f"energy change check enumerates 2^(n+m) states; cap exceeded")
    v_bits = binary_block(n, 0, 1 << n)
    h_bits = binary_block(m, 0, 1 << m)
    v = 2.0 * v_bits - 1.0
    h = 2.0 * h_bits - 1.0
    before = -(v @ gauged.weights @ h.T)
    after = -(v @ (gauged.weights - gamma) @ h.T)
    n_v = (n - v_bits.sum(axis=1)).astype(float)
    m_h = (m - h_bits.sum(axis=1)).astype(float)
    d = n_v[:, None] / n + m_h[None, :] / m - 2.0 * np.outer(n_v, m_h) / (n * m)
    expected = gamma * n * m * (1.0 - 2.0 * d)
    err = float(np.max(np.abs((after - before) - expected)))
    return EnergyChangeReport(gamma=gamma, max_abs_error=err,
                              n_states=before.size, passed=err <= tol)


def energy_variance(rbm: RbmParams) -> float:
    """Unweighted variance of the energy over all 2^(n+m) states."""
    n, m = rbm.n_visible, rbm.n_hidden
    if n + m > VARIANCE_CAP_BITS:
        raise ValueError("energy variance enumerates 2^(n+m) states; cap exceeded")
    v_bits = binary_block(n, 0, 1 << n)
    h_bits = binary_block(m, 0, 1 << m)
    if rbm.convention is Convention.PLUS_MINUS:
        v = 2.0 * v_bits - 1.0
        h = 2.0 * h_bits - 1.0
    else:
        v = v_bits.astype(float)
        h = h_bits.astype(float)
    energies = (-(v @ rbm.weights @ h.T)
                - (v @ rbm.visible_bias)[:, None]
                - (h @ rbm.hidden_bias)[None, :])
    return float(energies.var())


def log_hidden_certainty(rbm: RbmParams, v: np.ndarray) -> float:
    """log of prod_j max(p_j, 1-p_j) with p_j the hidden conditionals."""
    p = conditional_hidden(rbm, v)
    return float(np.sum(np.log(np.maximum(p, 1.0 - p))))


def hidden_certainty(rbm: RbmParams, v: np.ndarray) -> float:
    """Probability of the most likely hidden configuration given v
    (the product of per-unit winning probabilities)."""
    return float(np.exp(log_hidden_certainty(rbm, v)))


@lru_cache(maxsize=8)
def _cached_visible_states(width: int, plus_minus: bool = False) -> np.ndarray:
    states = binary_block(width, 0, 1 << width).astype(float)
    if plus_minus:
        states = 2.0 * states - 1.0
    states.flags.writeable = False
    return states


def _log_marginal_pm(rbm: RbmParams, v: np.ndarray) -> np.ndarray:
    """log of the unnormalized {-1,+1} visible marginal:
    a.v + sum_j log(2 cosh(b_j + (W^T v)_j))."""
    fields = v @ rbm.weights + rbm.hidden_bias
    return v @ rbm.visible_bias + np.logaddexp(fields, -fields).sum(axis=1)


def marginal_mode(rbm: RbmParams) -> tuple[np.ndarray, float]:
    """argmax over v of the exact visible marginal, with its unnormalized
    log mass. Returned in the model's own alphabet."""
    n = rbm.n_visible
    if n > MARGINAL_CAP_BITS:
        raise ValueError("marginal mode enumerates 2^n visible states; cap exceeded")
    if rbm.convention is Convention.PLUS_MINUS:
        if n <= 16:
            blocks = [_cached_visible_states(n, plus_minus=True)]
        else:
            blocks = (2.0 * b - 1.0 for b in iter_binary_blocks(n))
        log_max = -np.inf
        v_best = None
        for block in blocks:
            log_p = _log_marginal_pm(rbm, block)
            i = int(np.argmax(log_p))
            if log_p[i] > log_max:
                log_max = float(log_p[i])
                v_best = block[i].astype(np.int8)
        return v_best, log_max
    log_max = -np.inf
    v_best = None
    if n <= 16:
        blocks = [_cached_visible_states(n)]
    else:
        blocks = (b.astype(float) for b in iter_binary_blocks(n))
    for block in blocks:
        log_p = unnormalized_marginal(rbm, block)
        i = int(np.argmax(log_p))
        if log_p[i] > log_max:
            log_max = float(log_p[i])
            v_best = block[i].astype(np.int8)
    return v_best, log_max


@dataclass(frozen=True)
class ModalCorrespondence:
    joint_mode_v: np.ndarray
    marginal_mode_v: np.ndarray
    equal: bool
    r_at_marginal_mode: float


def modal_correspondence(rbm: RbmParams, tol: float = 1e-9) -> ModalCorrespondence:
    """Compare the visible part of the joint ground state with the exact
    marginal mode.

    `equal` holds when the joint mode's visible configuration attains the
    maximal marginal mass (within tol on the log scale), which is the
    meaningful notion when the marginal has symmetric ties.
    """
    gs = exhaustive_ground_state(rbm)
    v_plus, log_max = marginal_mode(rbm)
    if rbm.convention is Convention.PLUS_MINUS:
        log_at_star = float(_log_marginal_pm(rbm, gs.visible.astype(float)[None, :])[0])
    else:
        log_at_star = float(unnormalized_marginal(rbm, gs.visible.astype(float)))
    return ModalCorrespondence(
        joint_mode_v=gs.visible,
        marginal_mode_v=v_plus,
        equal=bool(log_at_star >= log_max - tol),
        r_at_marginal_mode=hidden_certainty(rbm, v_plus),
    )


@dataclass(frozen=True)
class CertaintyTrajectory:
    iters: np.ndarray
    r_mode: np.ndarray
    r_baseline: np.ndarray


def certainty_trajectory(data, n_hidden: int, n_updates: int, eps: float,
                         seed: int, record_every: int = 5,
                         convention: Convention = Convention.PLUS_MINUS,
                         ) -> CertaintyTrajectory:
    """Track the hidden certainty of the exact marginal mode along a plain
    CD-1 run, against a fixed random visible configuration as baseline.

    The {-1,+1} alphabet is the default: there the marginal mode maximizes
    the total field magnitude, so its certainty cleanly dominates a random
    configuration's throughout training.
    """
    from .training import cd_update  # deferred: training imports this module's siblings

    rng = np.random.default_rng(seed)
    n = data.n_visible
    rbm = RbmParams.random_init(n, n_hidden, 0.1, rng, convention)
    w, a, b = rbm.weights, rbm.visible_bias, rbm.hidden_bias
    batch = data.as_batch().astype(np.int8)
    v_baseline = (rng.random(n) < 0.5).astype(np.int8)
    if convention is Convention.PLUS_MINUS:
        batch = 2 * batch - 1
        v_baseline = 2 * v_baseline - 1

    iters, r_mode, r_base = [], [], []

    def snap(i):
        v_plus, _ = marginal_mode(rbm)
        iters.append(i)
        r_mode.append(hidden_certainty(rbm, v_plus))
        r_base.append(hidden_certainty(rbm, v_baseline))

    snap(0)
    for i in range(1, n_updates + 1):
        grad = cd_update(rbm, batch, 1, rng)
        w += eps * grad.d_weights
        a += eps * grad.d_visible_bias
        b += eps * grad.d_hidden_bias
        if i % record_every == 0 or i == n_updates:
            snap(i)
    return CertaintyTrajectory(np.array(iters), np.array(r_mode), np.array(r_base))


def _random_unbiased_pm(n: int, m: int, sigma: float,
                        rng: np.random.Generator) -> RbmParams:
    return RbmParams(sigma * rng.standard_normal((n, m)),
                     np.zeros(n), np.zeros(m), Convention.PLUS_MINUS)


def energy_law_suite(seeds: int = 100, max_size: int = 4, seed_base: int = 0,
                     grid_points: int = 21) -> dict:
    """Check, over random gauged unbiased models, that shell-mean energies
    follow (1-2d)*E0, that the uniform ground-state update shifts every
    energy by gamma*n*m*(1-2d), and that the energy variance as a function
    of gamma dips inside (0, -2*E0/(n*m)) with its grid minimizer next to
    -E0/(n*m)."""
    worst_mean_law = 0.0
    worst_change_law = 0.0
    variance_decreases = 0
    minimizer_hits = 0
    for s in range(seeds):
        rng = np.random.default_rng(seed_base + s)
        n = int(rng.integers(2, max_size + 1))
        m = int(rng.integers(2, max_size + 1))
        rbm = _random_unbiased_pm(n, m, 1.0, rng)
        gauged = _gauge_by_ground_state(rbm)
        e0 = exhaustive_ground_state(gauged).energy

        profile = distance_profile(gauged)
        worst_mean_law = max(worst_mean_law, float(np.max(np.abs(
            profile.mean_energy - (1.0 - 2.0 * profile.distances) * e0))))

        gamma_probe = float(rng.uniform(0.1, 1.0))
        report = energy_change_check(gauged, gamma_probe, tol=np.inf)
        worst_change_law = max(worst_change_law, report.max_abs_error)

        gamma_star = -e0 / (n * m)
        grid = np.linspace(0.0, 2.0 * gamma_star, grid_points)
        variances = np.array([
            energy_variance(RbmParams(gauged.weights - g, np.zeros(n), np.zeros(m),
                                      Convention.PLUS_MINUS))
            for g in grid
        ])
        base = variances[0]
        if np.all(variances[1:-1] < base):
            variance_decreases += 1
        cell = grid[1] - grid[0]
        if abs(grid[int(np.argmin(variances))] - gamma_star) <= cell:
            minimizer_hits += 1
    return {
        "seeds": seeds,
        "max_mean_law_error": worst_mean_law,
        "max_change_law_error": worst_change_law,
        "variance_decrease_count": variance_decreases,
        "grid_minimizer_hits": minimizer_hits,
    }


def _gauge_by_ground_state(rbm: RbmParams) -> RbmParams:
    from .solvers import gauge_transform

    return gauge_transform(rbm, exhaustive_ground_state(rbm))


def _visible_sector_gap(rbm: RbmParams) -> float:
    """Energy gap between the two lowest visible sectors, where a sector's
    energy is min over h of E(v, h). The ground pair (v*, -v*) shares the
    bottom value, so the gap is third-lowest minus lowest over all states."""
    n, m = rbm.n_visible, rbm.n_hidden
    v = 2.0 * binary_block(n, 0, 1 << n) - 1.0
    h = 2.0 * binary_block(m, 0, 1 << m) - 1.0
    energies = np.sort((-(v @ rbm.weights @ h.T)).ravel())
    return float(energies[2] - energies[0])


def modal_correspondence_suite(n: int, seeds: int, sigma: float = 0.1,
                               seed_base: int = 0, scale: float = 50.0) -> dict:
    """Joint/marginal mode agreement counts over random n x n models.

    Three regimes per seed: the gauged all-positive (zero frustration)
    model, the raw small-weight model, and the same weights scaled up by
    `scale`. The scaled clause only applies where `scale` is large enough
    for the instance: the large-weight argument needs the ground-state gap
    times the scale to beat the worst-case m*log(2) correction between the
    marginal mass and its single-configuration approximation, and all
    ground-state fields nonzero.
    """
    zero_frustration_equal = 0
    small_weight_equal = 0
    scaled_equal = 0
    scaled_applicable = 0
    for s in range(seeds):
        rng = np.random.default_rng(seed_base + s)
        rbm = _random_unbiased_pm(n, n, sigma, rng)

        positive = RbmParams(np.abs(rbm.weights), np.zeros(n), np.zeros(n),
                             Convention.PLUS_MINUS)
        if modal_correspondence(positive).equal:
            zero_frustration_equal += 1

        if modal_correspondence(rbm).equal:
            small_weight_equal += 1

        scaled = RbmParams(scale * rbm.weights, np.zeros(n), np.zeros(n),
                           Convention.PLUS_MINUS)
        gs = exhaustive_ground_state(scaled)
        fields = gs.visible.astype(float) @ scaled.weights
        unique_enough = _visible_sector_gap(rbm) * scale > n * np.log(2.0)
        if unique_enough and np.all(fields != 0):
            scaled_applicable += 1
            if modal_correspondence(scaled).equal:
                scaled_equal += 1
    return {
        "n": n,
        "seeds": seeds,
        "sigma": sigma,
        "zero_frustration_equal": zero_frustration_equal,
        "small_weight_equal": small_weight_equal,
        "scaled_equal": scaled_equal,
        "scaled_applicable": scaled_applicable,
    }


@dataclass(frozen=True)
class SolverBenchmarkReport:
    size_n: int
    euler_steps: int
    exchange_rate: float
    cd_sweeps: int
    energies_solver: np.ndarray
    energies_cd: np.ndarray
    delta_eps_pct: np.ndarray
    median_delta_eps_pct: float
    wall_time_solver: float
    wall_time_cd: float


def _best_gibbs_energy(rbm: RbmParams, sweeps: int, rng: np.random.Generator) -> float:
    """Lowest joint energy visited by a Gibbs chain from a random start."""
    from .rbm import gibbs_step

    n = rbm.n_visible
    v = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    best = np.inf
    for _ in range(sweeps):
        state = gibbs_step(rbm, v, rng)
        v = state.visible
        e = energy(rbm, state)
        if e < best:
            best = e
    return float(best)


def measure_exchange_rate(size_n: int, probe_steps: int = 64, seed: int = 0) -> float:
    """Local wall-time cost of one Euler step expressed in Gibbs sweeps."""
    rng = np.random.default_rng(seed)
    rbm = RbmParams(0.1 * rng.standard_normal((size_n, size_n)),
                    np.zeros(size_n), np.zeros(size_n), Convention.PLUS_MINUS)
    instance = rbm_to_max2sat(rbm)
    t0 = time.perf_counter()
    memcomputing_solve(instance, np.random.default_rng(seed),
                       budget_time=np.inf, max_steps=probe_steps)
    t_euler = (time.perf_counter() - t0) / probe_steps
    v = np.where(rng.random(size_n) < 0.5, 1, -1).astype(np.int8)
    t0 = time.perf_counter()
    gibbs_chain(rbm, v, probe_steps, rng)
    t_sweep = (time.perf_counter() - t0) / probe_steps
    return max(t_euler / t_sweep, 1.0)


def benchmark_solver_vs_cd(
    size_n: int,
    budget_steps: int | None = None,
    seeds: int = 20,
    seed_base: int = 0,
    exchange_rate: float | None = None,
) -> SolverBenchmarkReport:
    """Energy comparison between the dynamical solver (budget_steps Euler
    steps, default 2*size_n) and a Gibbs chain given the wall-time-equivalent
    number of sweeps, on random NxN models with Normal(0, 0.01) couplings.

    delta_eps_pct = 100 * (E_solver - E_gibbs) / E_gibbs, positive when the
    solver reaches lower (more negative) energies.
    """
    steps = budget_steps if budget_steps is not None else 2 * size_n
    if exchange_rate is None:
        exchange_rate = measure_exchange_rate(size_n)
    sweeps = max(1, int(round(exchange_rate * steps)))
    e_solver, e_cd = [], []
    wall_solver = wall_cd = 0.0
    for s in range(seeds):
        rng = np.random.default_rng(seed_base + s)
        rbm = RbmParams(0.1 * rng.standard_normal((size_n, size_n)),
                        np.zeros(size_n), np.zeros(size_n), Convention.PLUS_MINUS)
        t0 = time.perf_counter()
        gs = sample_mode(rbm, ModeMethod.MEMCOMPUTING, budget_time=np.inf, rng=rng,
                         max_steps=steps)
        wall_solver += time.perf_counter() - t0
        t0 = time.perf_counter()
        best_cd = _best_gibbs_energy(rbm, sweeps, rng)
        wall_cd += time.perf_counter() - t0
        e_solver.append(gs.energy)
        e_cd.append(best_cd)
    e_solver = np.array(e_solver)
    e_cd = np.array(e_cd)
    delta = 100.0 * (e_solver - e_cd) / e_cd
    return SolverBenchmarkReport(
        size_n=size_n,
        euler_steps=steps,
        exchange_rate=float(exchange_rate),
        cd_sweeps=sweeps,
        energies_solver=e_solver,
        energies_cd=e_cd,
        delta_eps_pct=delta,
        median_delta_eps_pct=float(np.median(delta)),
        wall_time_solver=wall_solver,
        wall_time_cd=wall_cd,
    )
