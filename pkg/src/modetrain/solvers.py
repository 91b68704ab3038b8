"""Ground-state search for the RBM energy.

Provides an exhaustive oracle for small models, gauge/frustration utilities,
a reduction of the energy minimization to weighted MAX-2-SAT, and a
continuous-time dynamical solver for that problem integrated with forward
Euler and an adaptive time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .rbm import (
    ENUMERATION_CAP_BITS,
    Convention,
    NodeState,
    RbmParams,
    convert_convention,
    convert_state,
    energy,
    iter_binary_blocks,
)


class ModeMethod(Enum):
    EXHAUSTIVE = "exhaustive"
    MEMCOMPUTING = "memcomputing"


@dataclass(frozen=True)
class GroundState:
    """A minimizing (or heuristically minimal) joint configuration."""

    visible: np.ndarray
    hidden: np.ndarray
    energy: float
    exact: bool
    convention: Convention

    def as_state(self) -> NodeState:
        return NodeState(self.visible, self.hidden, self.convention)


def _to_alphabet(bits: np.ndarray, convention: Convention) -> np.ndarray:
    if convention is Convention.ZERO_ONE:
        return bits.astype(np.int8)
    return (2 * bits.astype(np.int8) - 1).astype(np.int8)


def _closed_form_opposite(fields: np.ndarray, convention: Convention):
    """Unit-wise minimizer of the opposite layer and its energy contribution.

    Each opposite unit contributes -field*value; the minimizing value is the
    upper one iff field > 0 (exact ties keep the lower value, which is the
    lexicographically smaller choice in the {0,1} encoding).
    """
    on = fields > 0
    if convention is Convention.ZERO_ONE:
        contrib = -np.maximum(fields, 0.0).sum(axis=1)
    else:
        contrib = -np.where(on, fields, -fields).sum(axis=1)
    return on.astype(np.uint8), contrib


def exhaustive_ground_state(rbm: RbmParams) -> GroundState:
    """Global energy minimum by enumerating the smaller layer.

    The opposite layer is minimized unit-wise in closed form. Exact energy
    ties are broken by the lexicographically smallest (visible, hidden)
    pair in the {0,1} encoding.
    """
    if min(rbm.n_visible, rbm.n_hidden) > ENUMERATION_CAP_BITS:
        raise ValueError(
            f"both layers exceed {ENUMERATION_CAP_BITS} units; exhaustive search refused"
        )
    enumerate_visible = rbm.n_visible <= rbm.n_hidden
    if enumerate_visible:
        width = rbm.n_visible
        w, bias_enum, bias_opp = rbm.weights, rbm.visible_bias, rbm.hidden_bias
    else:
        width = rbm.n_hidden
        w, bias_enum, bias_opp = rbm.weights.T, rbm.hidden_bias, rbm.visible_bias

    from .rbm import _adaptive_block_bits

    best_energy = math.inf
    best_key = None  # (visible bits, hidden bits) as tuples in {0,1} encoding
    block_bits = _adaptive_block_bits(w.shape[1])
    for block in iter_binary_blocks(width, block_bits):
        x = _to_alphabet(block, rbm.convention).astype(float)
        fields = x @ w + bias_opp
        opp_bits, contrib = _closed_form_opposite(fields, rbm.convention)
        energies = -(x @ bias_enum) + contrib
        block_min = energies.min()
        if block_min > best_energy:
            continue
        tied = np.flatnonzero(energies == block_min)
        enum_bits = block[tied]
        opp = opp_bits[tied]
        if enumerate_visible:
            v_bits, h_bits = enum_bits, opp
        else:
            v_bits, h_bits = opp, enum_bits
        keys = np.concatenate([v_bits, h_bits], axis=1)
        pick = np.lexsort(keys.T[::-1])[0]
        key = (tuple(int(b) for b in v_bits[pick]), tuple(int(b) for b in h_bits[pick]))
        if block_min < best_energy or (block_min == best_energy and key < best_key):
            best_energy = block_min
            best_key = key
    v = _to_alphabet(np.array(best_key[0], dtype=np.uint8), rbm.convention)
    h = _to_alphabet(np.array(best_key[1], dtype=np.uint8), rbm.convention)
    state = NodeState(v, h, rbm.convention)
    return GroundState(v, h, energy(rbm, state), exact=True, convention=rbm.convention)


def gauge_transform(rbm: RbmParams, gs: GroundState) -> RbmParams:
    """Flip coupling signs by the ground state, W'_ij = W_ij * v*_i * h*_j.

    The result has the all-ones configuration as a ground state with the
    same energy. Requires an unbiased {-1,+1} model; fold biases into ghost
    units first (see fold_ghost_spins).
    """
    if rbm.convention is not Convention.PLUS_MINUS:
        raise ValueError("gauge transform is defined for the {-1,+1} convention")
    if np.any(rbm.visible_bias != 0) or np.any(rbm.hidden_bias != 0):
        raise ValueError("gauge transform requires an unbiased model; "
                         "fold biases with fold_ghost_spins first")
    w = rbm.weights * np.outer(gs.visible, gs.hidden)
    return RbmParams(w, np.zeros(rbm.n_visible), np.zeros(rbm.n_hidden),
                     Convention.PLUS_MINUS)


def fold_ghost_spins(rbm: RbmParams) -> RbmParams:
    """Absorb biases into one extra visible and one extra hidden unit.

    States of the original biased model correspond to states of the
    returned unbiased (n+1)x(m+1) model whose ghost units are pinned to +1.
    """
    if rbm.convention is not Convention.PLUS_MINUS:
        raise ValueError("ghost-spin folding is defined for the {-1,+1} convention")
    n, m = rbm.n_visible, rbm.n_hidden
    w = np.zeros((n + 1, m + 1))
    w[:n, :m] = rbm.weights
    w[:n, m] = rbm.visible_bias
    w[n, :m] = rbm.hidden_bias
    return RbmParams(w, np.zeros(n + 1), np.zeros(m + 1), Convention.PLUS_MINUS)


def frustration_index(gauged: RbmParams) -> float:
    """Fraction of coupling weight unsatisfied at the all-ones ground state:
    f = (sum|W| - sum W) / (2 sum|W|)."""
    if gauged.convention is not Convention.PLUS_MINUS:
        raise ValueError("frustration index is defined for the {-1,+1} convention")
    if np.any(gauged.visible_bias != 0) or np.any(gauged.hidden_bias != 0):
        raise ValueError("frustration index requires an unbiased (gauged) model")
    total = np.abs(gauged.weights).sum()
    if total == 0:
        raise ValueError("frustration index undefined for an all-zero coupling matrix")
    return float((total - gauged.weights.sum()) / (2.0 * total))


@dataclass(frozen=True)
class Max2SatInstance:
    """Weighted mixed MAX-2-SAT instance.

    Literals are signed 1-based variable indices; the sign is the polarity.
    """

    n_vars: int
    unary_clauses: tuple
    binary_clauses: tuple

    def __post_init__(self):
        object.__setattr__(self, "unary_clauses", tuple(
            (int(lit), float(w)) for lit, w in self.unary_clauses))
        object.__setattr__(self, "binary_clauses", tuple(
            (int(li), int(lj), float(w)) for li, lj, w in self.binary_clauses))
        for lit, w in self.unary_clauses:
            self._check_lit(lit)
            if w <= 0:
                raise ValueError("clause weights must be strictly positive")
        for li, lj, w in self.binary_clauses:
            self._check_lit(li)
            self._check_lit(lj)
            if w <= 0:
                raise ValueError("clause weights must be strictly positive")

    def _check_lit(self, lit: int):
        if lit == 0 or abs(lit) > self.n_vars:
            raise ValueError(f"literal {lit} out of range for {self.n_vars} variables")

    @property
    def n_clauses(self) -> int:
        return len(self.unary_clauses) + len(self.binary_clauses)

    @property
    def total_weight(self) -> float:
        return (sum(w for _, w in self.unary_clauses)
                + sum(w for _, _, w in self.binary_clauses))

    def satisfied_weight(self, assignment: np.ndarray) -> float:
        """Total weight of clauses satisfied by a {0,1} assignment."""
        x = np.asarray(assignment).astype(bool)

        def sat(lit):
            return x[abs(lit) - 1] if lit > 0 else not x[abs(lit) - 1]

        total = sum(w for lit, w in self.unary_clauses if sat(lit))
        total += sum(w for li, lj, w in self.binary_clauses if sat(li) or sat(lj))
        return float(total)


def rbm_to_max2sat(rbm: RbmParams) -> Max2SatInstance:
    """Encode energy minimization of a {-1,+1} model as weighted MAX-2-SAT.

    Variables 1..n are the visible units, n+1..n+m the hidden ones. Every
    nonzero coupling becomes a pair of clauses of weight 2|W_ij| that reward
    agreement (W_ij > 0) or disagreement (W_ij < 0); every nonzero bias
    becomes a unit clause of weight 2|bias|. For all assignments,

        E(s) + SatWeight(s) = 3*sum|W| + sum|a| + sum|b|,

    so maximizing satisfied weight is exactly minimizing the energy.
    """
    if rbm.convention is not Convention.PLUS_MINUS:
        raise ValueError("MAX-2-SAT encoding requires the {-1,+1} convention")
    n, m = rbm.n_visible, rbm.n_hidden
    unary = []
    binary = []
    for i in range(n):
        a = rbm.visible_bias[i]
        if a != 0:
            unary.append((int(math.copysign(i + 1, a)), 2.0 * abs(a)))
    for j in range(m):
        b = rbm.hidden_bias[j]
        if b != 0:
            unary.append((int(math.copysign(n + j + 1, b)), 2.0 * abs(b)))
    for i in range(n):
        for j in range(m):
            w = rbm.weights[i, j]
            if w == 0:
                continue
            vi, hj = i + 1, n + j + 1
            if w > 0:
                binary.append((vi, -hj, 2.0 * w))
                binary.append((-vi, hj, 2.0 * w))
            else:
                binary.append((vi, hj, -2.0 * w))
                binary.append((-vi, -hj, -2.0 * w))
    return Max2SatInstance(n + m, tuple(unary), tuple(binary))


def clause_value(voltages: np.ndarray, clause) -> float:
    """Continuous clause function C = 0.5 * min over literals of (1 - q*v).

    Bounded in [0,1]; a clause counts as satisfied when C < 0.5.
    """
    v = np.asarray(voltages, dtype=float)
    lits = clause[:-1]
    terms = [1.0 - math.copysign(1.0, lit) * v[abs(lit) - 1] for lit in lits]
    return 0.5 * min(terms)


@dataclass(frozen=True)
class SolverParams:
    """Dynamical-solver constants and integration controls."""

    alpha: float = 10.0
    beta: float = 0.1
    rho: float = 0.1
    epsilon: float = 1e-3
    dt_min: float = 2.0 ** -5
    dt_max: float = 2.0 ** -1
    # Step acceptance: halve dt when any proposed per-variable step exceeds
    # step_cap, or any bound is overshot by more than overshoot_frac of the
    # variable's range; double after grow_after consecutive accepted steps.
    step_cap: float = 0.125
    overshoot_frac: float = 0.25
    grow_after: int = 10


@dataclass
class SolverState:
    """Snapshot of the integrator state (voltages and clause memories)."""

    voltages: np.ndarray
    x_fast: np.ndarray
    x_slow: np.ndarray
    time: float
    dt: float


@dataclass
class TrajectoryStats:
    times: np.ndarray
    dts: np.ndarray
    unsat_weights: np.ndarray
    steps: int
    best_step: int
    best_unsat_weight: float

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,dt,unsat_weight\n")
            for t, dt, u in zip(self.times, self.dts, self.unsat_weights):
                fh.write(f"{t!r},{dt!r},{u!r}\n")


class _CompiledInstance:
    """Array form of an instance for vectorized integration."""

    def __init__(self, instance: Max2SatInstance):
        n = instance.n_vars
        self.n = n
        self.bias = np.zeros(n)
        for lit, w in instance.unary_clauses:
            self.bias[abs(lit) - 1] += math.copysign(0.5 * w, lit)
        self.u_idx = np.array([abs(l) - 1 for l, _ in instance.unary_clauses], dtype=int)
        self.u_q = np.array([math.copysign(1.0, l) for l, _ in instance.unary_clauses])
        self.u_w = np.array([w for _, w in instance.unary_clauses])
        b = instance.binary_clauses
        self.i_idx = np.array([abs(li) - 1 for li, _, _ in b], dtype=int)
        self.j_idx = np.array([abs(lj) - 1 for _, lj, _ in b], dtype=int)
        self.q_i = np.array([math.copysign(1.0, li) for li, _, _ in b])
        self.q_j = np.array([math.copysign(1.0, lj) for _, lj, _ in b])
        self.w2 = np.array([w for _, _, w in b])
        self.m2 = len(b)
        self.total_weight = instance.total_weight

    def satisfied_weight(self, x: np.ndarray) -> float:
        s = 2.0 * x - 1.0
        total = 0.0
        if len(self.u_w):
            total += self.u_w @ (self.u_q * s[self.u_idx] > 0)
        if self.m2:
            sat = (self.q_i * s[self.i_idx] > 0) | (self.q_j * s[self.j_idx] > 0)
            total += self.w2 @ sat
        return float(total)


def memcomputing_solve(
    instance: Max2SatInstance,
    rng: np.random.Generator,
    params: SolverParams | None = None,
    budget_time: float = 500.0,
    max_steps: int | None = None,
    state_hook: Callable[[SolverState], None] | None = None,
) -> tuple[np.ndarray, float, TrajectoryStats]:
    """Integrate the voltage/memory dynamics and return the best assignment seen.

    Voltages v in [-1,1] represent the Boolean variables; each 2-SAT clause
    carries a fast memory x_f in [0,1] and a slow memory x_s in [1, 10*M2].
    The coupled system

        dv_i/dt  = b_i + sum_m [ W_m x_f x_s G_m^i + rho (1 - x_f) R_m^i ]
        dx_f/dt  = beta (x_f + eps) (C_m - 1/4)
        dx_s/dt  = alpha (1 + W_m) C_m

    is stepped with forward Euler under an adaptive dt in
    [params.dt_min, params.dt_max]; all state is clamped to its bounds after
    every step. The gradient-like term G pushes a clause's variables toward
    satisfaction, the rigidity term R holds the variable currently closest
    to satisfying the clause, and b_i collects the unit-clause weights.
    At every accepted step the thresholded assignment sign(v) is scored by
    satisfied weight; the best one over the whole trajectory is returned.
    """
    if params is None:
        params = SolverParams()
    comp = _CompiledInstance(instance)
    n = comp.n
    if instance.n_clauses == 0:
        # No constraints: any assignment is optimal with zero unsatisfied weight.
        x = (rng.uniform(-1.0, 1.0, n) > 0).astype(np.uint8)
        return x, 0.0, TrajectoryStats(np.zeros(0), np.zeros(0), np.zeros(0), 0, 0, 0.0)

    v = rng.uniform(-1.0, 1.0, n)
    m2 = comp.m2
    xf = np.zeros(m2)
    xs_hi = 10.0 * m2 if m2 else 1.0
    xs = np.clip(1.0 + comp.w2, 1.0, xs_hi) if m2 else np.zeros(0)

    dt = params.dt_max
    t = 0.0
    steps = 0
    consecutive = 0
    times, dts, unsats = [], [], []

    best_x = (v > 0).astype(np.uint8)
    best_unsat = comp.total_weight - comp.satisfied_weight(best_x)
    best_step = 0
    last_signs = v > 0
    last_unsat = best_unsat

    while t < budget_time and (max_steps is None or steps < max_steps):
        if m2:
            ti = 1.0 - comp.q_i * v[comp.i_idx]
            tj = 1.0 - comp.q_j * v[comp.j_idx]
            c = 0.5 * np.minimum(ti, tj)
            drive = comp.w2 * xf * xs
            gi = drive * comp.q_i * 0.5 * tj
            gj = drive * comp.q_j * 0.5 * ti
            rigid = params.rho * (1.0 - xf)
            ri = np.where(ti <= tj, rigid * comp.q_i * 0.5 * ti, 0.0)
            rj = np.where(tj <= ti, rigid * comp.q_j * 0.5 * tj, 0.0)
            vdot = comp.bias + (
                np.bincount(comp.i_idx, weights=gi + ri, minlength=n)
                + np.bincount(comp.j_idx, weights=gj + rj, minlength=n)
            )
            xfdot = params.beta * (xf + params.epsilon) * (c - 0.25)
            xsdot = params.alpha * (1.0 + comp.w2) * c
        else:
            vdot = comp.bias
            xfdot = xsdot = np.zeros(0)

        while dt > params.dt_min:
            v_new = v + dt * vdot
            xf_new = xf + dt * xfdot
            xs_new = xs + dt * xsdot
            too_big = (
                np.max(np.abs(dt * vdot), initial=0.0) > params.step_cap
                or np.max(np.abs(dt * xfdot), initial=0.0) > params.step_cap
                or np.max(np.abs(dt * xsdot), initial=0.0) > params.step_cap
            )
            overshoot = (
                np.max(np.abs(v_new), initial=0.0) > 1.0 + params.overshoot_frac * 2.0
                or (m2 and (
                    np.max(xf_new, initial=0.0) > 1.0 + params.overshoot_frac
                    or np.min(xf_new, initial=1.0) < -params.overshoot_frac
                    or np.max(xs_new, initial=0.0)
                    > xs_hi + params.overshoot_frac * (xs_hi - 1.0)
                ))
            )
            if too_big or overshoot:
                dt *= 0.5
                consecutive = 0
            else:
                break
        dt = max(dt, params.dt_min)

        v = np.clip(v + dt * vdot, -1.0, 1.0)
        if m2:
            xf = np.clip(xf + dt * xfdot, 0.0, 1.0)
            xs = np.clip(xs + dt * xsdot, 1.0, xs_hi)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(xf))
                and np.all(np.isfinite(xs))):
            raise RuntimeError(
                f"solver state became non-finite at t={t!r}, dt={dt!r} "
                "(adaptive step logic failed to keep the integration stable)"
            )
        t += dt
        steps += 1
        consecutive += 1
        if consecutive >= params.grow_after:
            dt = min(dt * 2.0, params.dt_max)
            consecutive = 0

        signs = v > 0
        if np.array_equal(signs, last_signs):
            unsat = last_unsat  # assignment unchanged, score carries over
        else:
            x = signs.astype(np.uint8)
            unsat = comp.total_weight - comp.satisfied_weight(x)
            last_signs = signs
            last_unsat = unsat
            if unsat < best_unsat:
                best_unsat = unsat
                best_x = x
                best_step = steps
        times.append(t)
        dts.append(dt)
        unsats.append(unsat)
        if state_hook is not None:
            state_hook(SolverState(v.copy(), xf.copy(), xs.copy(), t, dt))

    stats = TrajectoryStats(
        times=np.array(times),
        dts=np.array(dts),
        unsat_weights=np.array(unsats),
        steps=steps,
        best_step=best_step,
        best_unsat_weight=float(best_unsat),
    )
    return best_x, float(best_unsat), stats


def sample_mode(
    rbm: RbmParams,
    method: ModeMethod = ModeMethod.EXHAUSTIVE,
    budget_time: float = 500.0,
    rng: np.random.Generator | None = None,
    params: SolverParams | None = None,
    max_steps: int | None = None,
) -> GroundState:
    """Find the joint configuration minimizing the energy.

    The exhaustive path is exact (size permitting). The dynamical path
    re-expresses the model in the {-1,+1} alphabet, solves the MAX-2-SAT
    encoding, and maps the best assignment back to a state in the model's
    own convention; its energy is always recomputed exactly.
    """
    if method is ModeMethod.EXHAUSTIVE:
        return exhaustive_ground_state(rbm)
    if rng is None:
        raise ValueError("the dynamical solver needs a seeded generator")
    rbm_pm, _ = convert_convention(rbm, Convention.PLUS_MINUS)
    instance = rbm_to_max2sat(rbm_pm)
    assignment, _, _ = memcomputing_solve(
        instance, rng, params=params, budget_time=budget_time, max_steps=max_steps)
    spins = (2 * assignment.astype(np.int8) - 1)
    n = rbm.n_visible
    state_pm = NodeState(spins[:n], spins[n:], Convention.PLUS_MINUS)
    state = convert_state(state_pm, rbm.convention)
    return GroundState(state.visible, state.hidden, energy(rbm, state),
                       exact=False, convention=rbm.convention)


def plus_minus_energy(rbm: RbmParams, gs: GroundState) -> float:
    """Energy of a ground state re-expressed in the {-1,+1} convention."""
    if rbm.convention is Convention.PLUS_MINUS:
        return gs.energy
    _, offset = convert_convention(rbm, Convention.PLUS_MINUS)
    return gs.energy - offset


def write_wcnf(instance: Max2SatInstance, path, comment: str | None = None) -> None:
    """Write a weighted instance in an extended DIMACS wcnf format
    (real-valued weights allowed)."""
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"c {line}\n")
        fh.write(f"p wcnf {instance.n_vars} {instance.n_clauses}\n")
        for lit, w in instance.unary_clauses:
            fh.write(f"{w!r} {lit} 0\n")
        for li, lj, w in instance.binary_clauses:
            fh.write(f"{w!r} {li} {lj} 0\n")


def read_wcnf(path) -> Max2SatInstance:
    n_vars = None
    unary, binary = [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("c"):
                continue
            if line.startswith("p"):
                parts = line.split()
                if len(parts) < 4 or parts[1] != "wcnf":
                    raise ValueError(f"bad header line: {line!r}")
                n_vars = int(parts[2])
                continue
            if n_vars is None:
                raise ValueError("clause line before header")
            parts = line.split()
            if parts[-1] != "0":
                raise ValueError(f"clause line not zero-terminated: {line!r}")
            w = float(parts[0])
            lits = [int(p) for p in parts[1:-1]]
            if len(lits) == 1:
                unary.append((lits[0], w))
            elif len(lits) == 2:
                binary.append((lits[0], lits[1], w))
            else:
                raise ValueError(f"only clauses of length 1 or 2 supported: {line!r}")
    if n_vars is None:
        raise ValueError("missing 'p wcnf' header")
    return Max2SatInstance(n_vars, tuple(unary), tuple(binary))
