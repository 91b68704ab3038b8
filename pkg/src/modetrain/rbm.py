"""Restricted Boltzmann machine parameterization and exact probabilistic quantities.

Everything here is exact: energies, conditionals, Gibbs transitions, and
(for small models) partition functions, marginals, log-likelihoods and KL
divergences computed by exhaustive enumeration of the smaller layer. All
probability work is done in the log domain so large weights never overflow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np
from scipy.special import expit, logsumexp

CHECKPOINT_VERSION = 1

# Enumerating a layer wider than this is refused (2^25 states is already
# ~seconds of work on one core).
ENUMERATION_CAP_BITS = 25

_BLOCK_BITS = 16


class Convention(Enum):
    """Alphabet used by the binary units: {0,1} or {-1,+1}."""

    ZERO_ONE = "zero_one"
    PLUS_MINUS = "plus_minus"


def _alphabet(convention: Convention) -> tuple[int, int]:
    if convention is Convention.ZERO_ONE:
        return (0, 1)
    return (-1, 1)


@dataclass(frozen=True)
class RbmParams:
    """Weights and biases of a binary-binary RBM.

    The energy of a joint state (v, h) is

        E(v, h) = -a.v - b.h - v.W.h

    with `a` the visible bias, `b` the hidden bias and `W` the coupling
    matrix of shape (n_visible, n_hidden). `convention` records which
    alphabet the units take values in.
    """

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    convention: Convention = Convention.ZERO_ONE

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        a = np.asarray(self.visible_bias, dtype=float)
        b = np.asarray(self.hidden_bias, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"weights must be a matrix, got ndim={w.ndim}")
        if a.shape != (w.shape[0],):
            raise ValueError(
                f"visible_bias shape {a.shape} inconsistent with weights {w.shape}"
            )
        if b.shape != (w.shape[1],):
            raise ValueError(
                f"hidden_bias shape {b.shape} inconsistent with weights {w.shape}"
            )
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("both layers need at least one unit")
        for name, arr in (("weights", w), ("visible_bias", a), ("hidden_bias", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", a)
        object.__setattr__(self, "hidden_bias", b)

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int,
              convention: Convention = Convention.ZERO_ONE) -> "RbmParams":
        return cls(
            weights=np.zeros((n_visible, n_hidden)),
            visible_bias=np.zeros(n_visible),
            hidden_bias=np.zeros(n_hidden),
            convention=convention,
        )

    @classmethod
    def random_init(cls, n_visible: int, n_hidden: int, sigma: float,
                    rng: np.random.Generator,
                    convention: Convention = Convention.ZERO_ONE) -> "RbmParams":
        """All parameters drawn i.i.d. from Normal(0, sigma^2)."""
        return cls(
            weights=sigma * rng.standard_normal((n_visible, n_hidden)),
            visible_bias=sigma * rng.standard_normal(n_visible),
            hidden_bias=sigma * rng.standard_normal(n_hidden),
            convention=convention,
        )

    def copy(self) -> "RbmParams":
        return RbmParams(
            weights=self.weights.copy(),
            visible_bias=self.visible_bias.copy(),
            hidden_bias=self.hidden_bias.copy(),
            convention=self.convention,
        )


@dataclass(frozen=True)
class NodeState:
    """A joint (visible, hidden) configuration."""

    visible: np.ndarray
    hidden: np.ndarray
    convention: Convention = Convention.ZERO_ONE

    def __post_init__(self):
        v = np.asarray(self.visible, dtype=int)
        h = np.asarray(self.hidden, dtype=int)
        lo, hi = _alphabet(self.convention)
        for name, arr in (("visible", v), ("hidden", h)):
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a vector")
            if not np.all((arr == lo) | (arr == hi)):
                raise ValueError(
                    f"{name} entries must lie in {{{lo},{hi}}} for {self.convention.value}"
                )
        object.__setattr__(self, "visible", v)
        object.__setattr__(self, "hidden", h)


@dataclass(frozen=True)
class DataDistribution:
    """A finite-support distribution over visible configurations.

    `patterns` holds the distinct support vectors (rows, {0,1} entries),
    `masses` their probabilities, and `multiset_counts` the number of
    occurrences of each pattern in the generating multiset (used when
    summing log-likelihood over a dataset that contains repeats).
    """

    patterns: np.ndarray
    masses: np.ndarray
    multiset_counts: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.patterns, dtype=np.uint8)
        m = np.asarray(self.masses, dtype=float)
        c = np.asarray(self.multiset_counts, dtype=int)
        if p.ndim != 2:
            raise ValueError("patterns must be a 2-D array of row vectors")
        if not np.all((p == 0) | (p == 1)):
            raise ValueError("patterns must be binary 0/1")
        if m.shape != (p.shape[0],) or c.shape != (p.shape[0],):
            raise ValueError("masses/multiset_counts length must match patterns")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if abs(m.sum() - 1.0) > 1e-12:
            raise ValueError(f"masses must sum to 1, got {m.sum()!r}")
        if len({row.tobytes() for row in p}) != p.shape[0]:
            raise ValueError("patterns must be pairwise distinct")
        if np.any(c <= 0):
            raise ValueError("multiset_counts must be positive")
        expected = c / c.sum()
        if np.max(np.abs(expected - m)) > 1e-12:
            raise ValueError("masses must be proportional to multiset_counts")
        object.__setattr__(self, "patterns", p)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "multiset_counts", c)

    @property
    def n_visible(self) -> int:
        return self.patterns.shape[1]

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    @classmethod
    def uniform(cls, patterns: np.ndarray) -> "DataDistribution":
        patterns = np.asarray(patterns, dtype=np.uint8)
        k = patterns.shape[0]
        return cls(patterns, np.full(k, 1.0 / k), np.ones(k, dtype=int))

    @classmethod
    def from_counts(cls, patterns: np.ndarray, counts: np.ndarray) -> "DataDistribution":
        counts = np.asarray(counts, dtype=int)
        return cls(patterns, counts / counts.sum(), counts)

    def as_batch(self) -> np.ndarray:
        """The full generating multiset: each pattern repeated by its count."""
        return np.repeat(self.patterns, self.multiset_counts, axis=0)

    def to_json(self) -> str:
        doc = {
            "n_visible": int(self.n_visible),
            "patterns": ["".join(str(int(x)) for x in row) for row in self.patterns],
            "masses": [float(x) for x in self.masses],
            "multiset_counts": [int(x) for x in self.multiset_counts],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DataDistribution":
        doc = json.loads(text)
        patterns = np.array([[int(ch) for ch in s] for s in doc["patterns"]],
                            dtype=np.uint8)
        return cls(patterns, np.array(doc["masses"]),
                   np.array(doc["multiset_counts"], dtype=int))


def _check_units(rbm: RbmParams, vec: np.ndarray, n_units: int, name: str) -> np.ndarray:
    arr = np.asarray(vec)
    if arr.shape[-1] != n_units:
        raise ValueError(f"{name} has {arr.shape[-1]} units, expected {n_units}")
    lo, hi = _alphabet(rbm.convention)
    if not np.all((arr == lo) | (arr == hi)):
        raise ValueError(f"{name} entries must lie in {{{lo},{hi}}}")
    return arr.astype(float)


def energy(rbm: RbmParams, state: NodeState) -> float:
    """E(v, h) = -a.v - b.h - v.W.h."""
    if state.convention is not rbm.convention:
        raise ValueError(
            f"state convention {state.convention.value} does not match "
            f"model convention {rbm.convention.value}"
        )
    v = _check_units(rbm, state.visible, rbm.n_visible, "visible")
    h = _check_units(rbm, state.hidden, rbm.n_hidden, "hidden")
    return float(-rbm.visible_bias @ v - rbm.hidden_bias @ h - v @ rbm.weights @ h)


def convert_convention(rbm: RbmParams, target: Convention) -> tuple[RbmParams, float]:
    """Re-express the model in the other alphabet.

    Under the unit bijection v01 = (vpm + 1)/2, corresponding states of the
    source and target models have energies that differ by one global
    constant. Returns (converted, offset) with

        E_source(s) = E_target(s') + offset   for every state pair.

    Normalized probabilities of corresponding states are identical.
    """
    if target is rbm.convention:
        return rbm, 0.0
    w, a, b = rbm.weights, rbm.visible_bias, rbm.hidden_bias
    row = w.sum(axis=1)
    col = w.sum(axis=0)
    if rbm.convention is Convention.ZERO_ONE:
        out = RbmParams(
            weights=w / 4.0,
            visible_bias=a / 2.0 + row / 4.0,
            hidden_bias=b / 2.0 + col / 4.0,
            convention=Convention.PLUS_MINUS,
        )
        offset = -(a.sum() / 2.0 + b.sum() / 2.0 + w.sum() / 4.0)
    else:
        out = RbmParams(
            weights=4.0 * w,
            visible_bias=2.0 * a - 2.0 * row,
            hidden_bias=2.0 * b - 2.0 * col,
            convention=Convention.ZERO_ONE,
        )
        offset = a.sum() + b.sum() - w.sum()
    return out, float(offset)


def convert_state(state: NodeState, target: Convention) -> NodeState:
    """Map a state through the v01 = (vpm + 1)/2 bijection."""
    if target is state.convention:
        return state
    if target is Convention.PLUS_MINUS:
        return NodeState(2 * state.visible - 1, 2 * state.hidden - 1, target)
    return NodeState((state.visible + 1) // 2, (state.hidden + 1) // 2, target)


def _activation_probability(fields: np.ndarray, convention: Convention) -> np.ndarray:
    # For {0,1} units p(on) = sigmoid(field); for {-1,+1} the energy gap
    # between the two values is 2*field, hence sigmoid(2*field).
    if convention is Convention.ZERO_ONE:
        return expit(fields)
    return expit(2.0 * fields)


def conditional_hidden(rbm: RbmParams, v: np.ndarray) -> np.ndarray:
    """Per-unit probability that each hidden unit takes its upper value given v.

    Accepts a single vector or a batch of row vectors.
    """
    v = _check_units(rbm, v, rbm.n_visible, "visible")
    fields = v @ rbm.weights + rbm.hidden_bias
    return _activation_probability(fields, rbm.convention)


def conditional_visible(rbm: RbmParams, h: np.ndarray) -> np.ndarray:
    """Per-unit probability that each visible unit takes its upper value given h."""
    h = _check_units(rbm, h, rbm.n_hidden, "hidden")
    fields = h @ rbm.weights.T + rbm.visible_bias
    return _activation_probability(fields, rbm.convention)


def expected_hidden(rbm: RbmParams, v: np.ndarray) -> np.ndarray:
    """Conditional mean of each hidden unit given v (equals the probability
    for {0,1} units, 2p-1 for {-1,+1})."""
    p = conditional_hidden(rbm, v)
    if rbm.convention is Convention.ZERO_ONE:
        return p
    return 2.0 * p - 1.0


def _sample_units(prob: np.ndarray, convention: Convention,
                  rng: np.random.Generator) -> np.ndarray:
    on = rng.random(prob.shape) < prob
    if convention is Convention.ZERO_ONE:
        return on.astype(np.int8)
    return np.where(on, 1, -1).astype(np.int8)


def gibbs_step(rbm: RbmParams, v: np.ndarray, rng: np.random.Generator) -> NodeState:
    """One block-Gibbs transition: sample h ~ p(h|v), then v' ~ p(v|h)."""
    h = _sample_units(conditional_hidden(rbm, v), rbm.convention, rng)
    v_next = _sample_units(conditional_visible(rbm, h), rbm.convention, rng)
    return NodeState(v_next, h, rbm.convention)


def gibbs_chain(rbm: RbmParams, v: np.ndarray, k: int, rng: np.random.Generator,
                return_hidden: bool = False):
    """Advance a batch of chains by k block-Gibbs transitions.

    Returns v^k, or (v^k, h^k) with the hidden samples of the last
    transition when return_hidden is set.
    """
    v = np.asarray(v)
    h = None
    for _ in range(k):
        h = _sample_units(conditional_hidden(rbm, v), rbm.convention, rng)
        v = _sample_units(conditional_visible(rbm, h), rbm.convention, rng)
    if return_hidden:
        return v, h
    return v


def binary_block(width: int, start: int, stop: int) -> np.ndarray:
    """Rows `start..stop-1` of the lexicographic enumeration of {0,1}^width.

    Row i is the big-endian binary expansion of i, so row order equals
    lexicographic order of the vectors.
    """
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def iter_binary_blocks(width: int, block_bits: int = _BLOCK_BITS) -> Iterator[np.ndarray]:
    total = 1 << width
    step = 1 << min(width, block_bits)
    for start in range(0, total, step):
        yield binary_block(width, start, min(start + step, total))


def _adaptive_block_bits(opposite_width: int, budget_floats: int = 1 << 22) -> int:
    # Keep per-block scratch (rows x opposite layer) around budget_floats.
    bits = int(np.log2(max(budget_floats // max(opposite_width, 1), 2)))
    return max(8, min(_BLOCK_BITS, bits))


def unnormalized_marginal(rbm: RbmParams, v: np.ndarray) -> np.ndarray | float:
    """log of the unnormalized visible marginal, hidden units traced out.

    log P(v) = a.v + sum_j log(1 + exp(b_j + (W^T v)_j)), evaluated with
    log1p-style accumulation so it is stable for fields up to ~1e300.
    Only defined for the {0,1} alphabet; convert the model first otherwise.
    """
    if rbm.convention is not Convention.ZERO_ONE:
        raise ValueError("unnormalized_marginal requires the {0,1} convention")
    arr = _check_units(rbm, v, rbm.n_visible, "visible")
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    fields = arr @ rbm.weights + rbm.hidden_bias
    out = arr @ rbm.visible_bias + np.logaddexp(0.0, fields).sum(axis=1)
    return float(out[0]) if single else out


def _transposed(rbm: RbmParams) -> RbmParams:
    return RbmParams(
        weights=rbm.weights.T.copy(),
        visible_bias=rbm.hidden_bias.copy(),
        hidden_bias=rbm.visible_bias.copy(),
        convention=rbm.convention,
    )


def exact_partition(rbm: RbmParams) -> float:
    """log Z by enumerating the smaller layer and tracing out the other.

    Refuses models whose smaller layer exceeds ENUMERATION_CAP_BITS units.
    """
    if rbm.convention is not Convention.ZERO_ONE:
        rbm01, offset = convert_convention(rbm, Convention.ZERO_ONE)
        return exact_partition(rbm01) - offset
    model = rbm if rbm.n_visible <= rbm.n_hidden else _transposed(rbm)
    width = model.n_visible
    if width > ENUMERATION_CAP_BITS:
        raise ValueError(
            f"both layers exceed {ENUMERATION_CAP_BITS} units; exact Z is not feasible"
        )
    block_bits = _adaptive_block_bits(model.n_hidden)
    block_sums = [
        logsumexp(unnormalized_marginal(model, block))
        for block in iter_binary_blocks(width, block_bits)
    ]
    return float(logsumexp(np.array(block_sums)))


def exact_log_likelihood(rbm: RbmParams, data: DataDistribution) -> tuple[float, float]:
    """Exact dataset log-likelihood and KL(data || model) over the visible layer.

    The log-likelihood sums log p(v) over the generating multiset (pattern
    repeats counted); the KL uses the normalized masses.
    """
    if rbm.convention is not Convention.ZERO_ONE:
        rbm, _ = convert_convention(rbm, Convention.ZERO_ONE)
    log_z = exact_partition(rbm)
    log_p = unnormalized_marginal(rbm, data.patterns) - log_z
    total_ll = float(data.multiset_counts @ log_p)
    kl = float(data.masses @ (np.log(data.masses) - log_p))
    return total_ll, kl


def save_checkpoint(rbm: RbmParams, path) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "convention": rbm.convention.value,
        "n_visible": rbm.n_visible,
        "n_hidden": rbm.n_hidden,
        "weights": [float(x) for x in rbm.weights.ravel(order="C")],
        "visible_bias": [float(x) for x in rbm.visible_bias],
        "hidden_bias": [float(x) for x in rbm.hidden_bias],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> RbmParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    n, m = int(doc["n_visible"]), int(doc["n_hidden"])
    return RbmParams(
        weights=np.array(doc["weights"], dtype=float).reshape(n, m),
        visible_bias=np.array(doc["visible_bias"], dtype=float),
        hidden_bias=np.array(doc["hidden_bias"], dtype=float),
        convention=Convention(doc["convention"]),
    )
