"""Gradient estimators and the mode-assisted training loop.

Parameter updates follow the log-likelihood direction (data term minus
model term). The model term is estimated either by a k-step Gibbs chain
(CD-k / PCD-k) or, on a sigmoid schedule, replaced outright by the outer
product of the joint ground state, scaled by a variance-motivated rate
gamma = -E0 / ((n+1)(m+1)) with E0 the {-1,+1}-convention ground-state
energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .datasets import MnistSet
from .rbm import (
    DataDistribution,
    RbmParams,
    exact_log_likelihood,
    expected_hidden,
    gibbs_chain,
)
from .solvers import GroundState, ModeMethod, plus_minus_energy, sample_mode

log = logging.getLogger(__name__)

# Exact likelihood evaluation enumerates the smaller layer; past this width
# an evaluation would dominate the run, so metrics report null instead.
EXACT_EVAL_CAP_BITS = 20


class GradientSource(Enum):
    CD = "cd"
    PCD = "pcd"
    MODE = "mode"


@dataclass(frozen=True)
class GradientEstimate:
    d_weights: np.ndarray
    d_visible_bias: np.ndarray
    d_hidden_bias: np.ndarray
    source: GradientSource

    def __post_init__(self):
        for name, arr in (("d_weights", self.d_weights),
                          ("d_visible_bias", self.d_visible_bias),
                          ("d_hidden_bias", self.d_hidden_bias)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if self.d_weights.shape != (len(self.d_visible_bias), len(self.d_hidden_bias)):
            raise ValueError("gradient shapes are mutually inconsistent")

    def norm(self) -> float:
        return float(np.sqrt(
            (self.d_weights ** 2).sum()
            + (self.d_visible_bias ** 2).sum()
            + (self.d_hidden_bias ** 2).sum()
        ))


@dataclass(frozen=True)
class LearningRateSchedule:
    """Named learning-rate schedule: constant(c) or exp_decay(c).

    exp_decay evaluates exp(-c * f) with f the fraction of completed
    updates, so the rate starts at 1 and decays toward exp(-c).
    """

    kind: str = "constant"
    c: float = 0.2

    def __post_init__(self):
        if self.kind not in ("constant", "exp_decay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def value(self, iteration: int, n_total: int) -> float:
        if self.kind == "constant":
            return self.c
        frac = (iteration - 1) / n_total if n_total > 0 else 0.0
        return float(np.exp(-self.c * frac))


@dataclass(frozen=True)
class TrainConfig:
    n_updates: int
    n_hidden: int
    learning_rate: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    batch_size: int = 0  # 0 means full-batch updates
    k: int = 1
    p_max: float = 0.1
    alpha: float | None = None
    alpha_times_n: float = 20.0  # used when alpha is None: alpha = alpha_times_n / N
    beta: float = -6.0
    mode_method: str = "exhaustive"  # "exhaustive" | "memcomputing" | "none"
    mode_budget_time: float = 500.0
    persistent: bool = False
    seed: int = 0
    eval_every: int = 250
    sigma_init: float = 0.1
    exact_eval: bool = True

    def __post_init__(self):
        if self.n_updates < 0:
            raise ValueError("n_updates must be nonnegative")
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be positive")
        if not 0.0 < self.p_max <= 1.0:
            raise ValueError("p_max must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if self.mode_method not in ("exhaustive", "memcomputing", "none"):
            raise ValueError(f"unknown mode_method {self.mode_method!r}")
        if self.batch_size < 0:
            raise ValueError("batch_size must be nonnegative")

    @property
    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return self.alpha_times_n / max(self.n_updates, 1)


def _as_float_batch(batch: np.ndarray) -> np.ndarray:
    arr = np.asarray(batch, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-D array of visible rows")
    return arr


def _data_term(rbm: RbmParams, batch: np.ndarray):
    probs = expected_hidden(rbm, batch)
    b = batch.shape[0]
    return batch.T @ probs / b, batch.mean(axis=0), probs.mean(axis=0)


def cd_update(
    rbm: RbmParams,
    batch: np.ndarray,
    k: int,
    rng: np.random.Generator,
    persistent_chains: np.ndarray | None = None,
) -> GradientEstimate:
    """CD-k / PCD-k estimate of the log-likelihood gradient (unscaled).

    The data term pairs each batch row with its exact hidden conditional
    mean; the model term pairs v^k with its conditional mean after k Gibbs
    transitions started from the batch (CD) or from `persistent_chains`,
    which are advanced in place (PCD).
    """
    batch = _as_float_batch(batch)
    dw_data, da_data, db_data = _data_term(rbm, batch)
    if persistent_chains is not None:
        if persistent_chains.shape[0] != batch.shape[0]:
            raise ValueError(
                f"persistent chain count {persistent_chains.shape[0]} "
                f"does not match batch size {batch.shape[0]}"
            )
        v_k = gibbs_chain(rbm, persistent_chains, k, rng)
        persistent_chains[:] = v_k
        source = GradientSource.PCD
    else:
        v_k = gibbs_chain(rbm, batch.astype(np.int8), k, rng)
        source = GradientSource.CD
    v_k = v_k.astype(float)
    probs_k = expected_hidden(rbm, v_k)
    b = batch.shape[0]
    return GradientEstimate(
        d_weights=dw_data - v_k.T @ probs_k / b,
        d_visible_bias=da_data - v_k.mean(axis=0),
        d_hidden_bias=db_data - probs_k.mean(axis=0),
        source=source,
    )


def mode_update(rbm: RbmParams, batch: np.ndarray, mode: GroundState) -> GradientEstimate:
    """Gradient estimate whose model term is the ground-state outer product."""
    if mode.convention is not rbm.convention:
        raise ValueError("ground state convention does not match the model")
    batch = _as_float_batch(batch)
    dw_data, da_data, db_data = _data_term(rbm, batch)
    v_star = mode.visible.astype(float)
    h_star = mode.hidden.astype(float)
    return GradientEstimate(
        d_weights=dw_data - np.outer(v_star, h_star),
        d_visible_bias=da_data - v_star,
        d_hidden_bias=db_data - h_star,
        source=GradientSource.MODE,
    )


def mode_probability(n: int, cfg: TrainConfig) -> float:
    """Probability of taking a mode update at iteration n:
    p_max * sigmoid(alpha*n + beta)."""
    return float(cfg.p_max * expit(cfg.resolved_alpha * n + cfg.beta))


def mode_learning_rate(e0_pm: float, n: int, m: int) -> float:
    """gamma = -E0 / ((n+1)(m+1)) for a negative {-1,+1} ground-state energy.

    A nonnegative E0 only happens for degenerate (effectively zero-coupling)
    models; the rate is then 0 and the mode update contributes nothing.
    """
    if e0_pm >= 0:
        log.debug("nonnegative ground-state energy %r; mode rate forced to 0", e0_pm)
        return 0.0
    return float(-e0_pm / ((n + 1) * (m + 1)))


class _BatchProvider:
    """Yields full-batch or shuffled minibatch visible arrays, dropping any
    trailing partial batch so persistent chains keep a fixed width."""

    def __init__(self, data, batch_size: int, rng: np.random.Generator):
        if isinstance(data, DataDistribution):
            self.pool = data.as_batch()
        elif isinstance(data, MnistSet):
            if batch_size < 1:
                raise ValueError("MNIST training requires a positive batch_size")
            self.pool = data.images
        else:
            raise TypeError(f"unsupported dataset type {type(data).__name__}")
        self.batch_size = batch_size
        self.rng = rng
        self._order: np.ndarray | None = None
        self._cursor = 0
        if batch_size > self.pool.shape[0]:
            raise ValueError("batch_size exceeds the dataset size")

    def next(self) -> np.ndarray:
        if self.batch_size == 0:
            return self.pool
        if self._order is None or self._cursor + self.batch_size > len(self._order):
            self._order = self.rng.permutation(self.pool.shape[0])
            self._cursor = 0
        idx = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return self.pool[idx]


def _empirical_entropy(images: np.ndarray) -> float:
    _, counts = np.unique(images, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


class _Evaluator:
    def __init__(self, data, cfg: TrainConfig):
        self.enabled = cfg.exact_eval
        self.data = data
        self.count = None
        self.n_batches = None
        self.entropy = None
        if isinstance(data, MnistSet) and self.enabled:
            self.count = data.count
            self.n_batches = data.count // cfg.batch_size if cfg.batch_size else 1
            self.entropy = _empirical_entropy(data.images)
            self.dist = None
        elif isinstance(data, DataDistribution):
            self.count = int(data.multiset_counts.sum())
            self.dist = data

    def evaluate(self, rbm: RbmParams) -> dict:
        if not self.enabled or min(rbm.n_visible, rbm.n_hidden) > EXACT_EVAL_CAP_BITS:
            return {"kl": None, "log_likelihood": None, "avg_log_likelihood": None}
        if isinstance(self.data, DataDistribution):
            total, kl = exact_log_likelihood(rbm, self.data)
            return {
                "kl": kl,
                "log_likelihood": total,
                "avg_log_likelihood": total / self.count,
            }
        from .rbm import exact_partition, unnormalized_marginal  # local to avoid cycle noise
        log_z = exact_partition(rbm)
        log_p = unnormalized_marginal(rbm, self.data.images) - log_z
        total = float(log_p.sum())
        avg = total / self.count
        return {
            "kl": -self.entropy - avg,
            "log_likelihood": total,
            "avg_log_likelihood": avg,
            "avg_log_likelihood_per_batch": total / self.n_batches,
        }


def train(cfg: TrainConfig, data, rng: np.random.Generator | None = None,
          checkpoint_cb=None, checkpoint_every: int = 0):
    """Run the mode-assisted training loop.

    Returns (model, metrics) where metrics is a list of dict records
    emitted at iteration 0, every cfg.eval_every updates, and at the final
    update. Fully deterministic given cfg (the generator defaults to one
    seeded with cfg.seed). `checkpoint_cb(i, model)` fires every
    `checkpoint_every` updates when both are given.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = data.n_visible if isinstance(data, DataDistribution) else data.images.shape[1]
    m = cfg.n_hidden
    rbm = RbmParams.random_init(n, m, cfg.sigma_init, rng)
    w, a, b = rbm.weights, rbm.visible_bias, rbm.hidden_bias

    batches = _BatchProvider(data, cfg.batch_size, rng)
    evaluator = _Evaluator(data, cfg)
    chains: np.ndarray | None = None
    method = None if cfg.mode_method == "none" else ModeMethod(cfg.mode_method)

    records: list[dict] = []
    n_mode_updates = 0

    def record(i, p_mode=None, gamma=None, e0=None, kind=None, eps=None, grad_norm=None):
        rec = {"seed": cfg.seed, "iter": i}
        rec.update(evaluator.evaluate(rbm))
        rec.update({
            "p_mode": p_mode,
            "gamma": gamma,
            "e0": e0,
            "update_kind": kind,
            "eps": eps,
            "grad_norm": grad_norm,
            "n_mode_updates": n_mode_updates,
        })
        records.append(rec)

    record(0)
    for i in range(1, cfg.n_updates + 1):
        eps = cfg.learning_rate.value(i, cfg.n_updates)
        p_mode = mode_probability(i, cfg) if method is not None else 0.0
        u = rng.random()
        batch = batches.next()
        gamma = None
        e0_pm = None
        if method is not None and u <= p_mode:
            gs = sample_mode(rbm, method, budget_time=cfg.mode_budget_time, rng=rng)
            e0_pm = plus_minus_energy(rbm, gs)
            gamma = mode_learning_rate(e0_pm, n, m)
            grad = mode_update(rbm, batch, gs)
            scale = gamma * eps
            kind = "mode"
            n_mode_updates += 1
        else:
            if cfg.persistent:
                if chains is None:
                    chains = np.array(batch, dtype=np.int8, copy=True)
                grad = cd_update(rbm, batch, cfg.k, rng, persistent_chains=chains)
            else:
                grad = cd_update(rbm, batch, cfg.k, rng)
            scale = eps
            kind = grad.source.value
        w += scale * grad.d_weights
        a += scale * grad.d_visible_bias
        b += scale * grad.d_hidden_bias
        if i % cfg.eval_every == 0 or i == cfg.n_updates:
            record(i, p_mode=p_mode, gamma=gamma, e0=e0_pm, kind=kind, eps=eps,
                   grad_norm=grad.norm())
        if checkpoint_cb is not None and checkpoint_every > 0 and i % checkpoint_every == 0:
            checkpoint_cb(i, rbm)
    return rbm, records
