"""Gradient-balancing strategies for the shared trunk.

Three strategies are provided:

* ``equal_weight``: plain sum of the task gradients.
* ``ortho_only``: gradients projected onto an orthogonal set whose rows all
  have the norm of the smallest singular value, then summed.
* ``ega``: the same projection, recombined with eccentric weights derived
  from each task's loss progress since a warmup epoch.

Epochs are numbered from 1. Loss history stores one mean loss per task and
epoch; eccentric weights only change when the history does, so within an
epoch every batch sees the same weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGradientError,
    DegenerateHistoryError,
    InvalidConfigError,
    InvalidInputError,
)
from .linalg import as_matrix, project_align

log = logging.getLogger(__name__)

MIN_WARMUP_LOSS = 1e-12
DEFAULT_T_WARM = 4
DEFAULT_TEMPERATURE = 1.0


def as_gradient_matrix(G) -> np.ndarray:
    G = as_matrix(G, "G")
    if G.shape[0] < 2:
        raise InvalidInputError(f"need at least 2 tasks, got {G.shape[0]}")
    return G


class LossHistory:
    """Append-only per-task mean epoch losses."""

    def __init__(self, n_tasks: int, t_warm: int = DEFAULT_T_WARM):
        if n_tasks < 1:
            raise InvalidConfigError("n_tasks must be >= 1")
        if t_warm < 1:
            raise InvalidConfigError("t_warm must be >= 1")
        self.n_tasks = n_tasks
        self.t_warm = t_warm
        self._losses: dict[int, np.ndarray] = {}

    def record(self, epoch: int, losses) -> None:
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (self.n_tasks,):
            raise InvalidInputError(f"expected {self.n_tasks} losses, got shape {losses.shape}")
        if not np.all(np.isfinite(losses)) or np.any(losses < 0):
            raise InvalidInputError(f"losses must be finite and non-negative, got {losses}")
        if epoch in self._losses:
            raise InvalidInputError(f"epoch {epoch} already recorded")
        self._losses[epoch] = losses.copy()

    def loss(self, task: int, epoch: int) -> float:
        try:
            return float(self._losses[epoch][task])
        except KeyError:
            raise InvalidInputError(f"no losses recorded for epoch {epoch}") from None

    def has(self, epoch: int) -> bool:
        return epoch in self._losses

    @property
    def epochs(self) -> list[int]:
        return sorted(self._losses)

    def as_array(self) -> np.ndarray:
        """Losses as an (epochs, tasks) array in epoch order."""
        if not self._losses:
            return np.zeros((0, self.n_tasks))
        return np.stack([self._losses[e] for e in self.epochs])


def learning_rate_ratio(history: LossHistory, task: int, epoch: int) -> float:
    """Loss at ``epoch - 1`` divided by the loss at the warmup epoch.

    Small values mean fast progress.
    """
    if epoch <= history.t_warm:
        raise InvalidInputError(f"epoch {epoch} is not past warmup epoch {history.t_warm}")
    warm = history.loss(task, history.t_warm)
    if warm < MIN_WARMUP_LOSS:
        raise DegenerateHistoryError(f"task {task} warmup loss {warm:.3e} is zero")
    return history.loss(task, epoch - 1) / warm


@dataclass(frozen=True)
class EccentricVector:
    weights: np.ndarray
    temperature: float


def eccentric_vector(lr, temperature: float) -> EccentricVector:
    """Temperature softmax of the learning-rate ratios, scaled to sum to n."""
    if not temperature > 0:
        raise InvalidConfigError(f"temperature must be > 0, got {temperature}")
    lr = np.asarray(lr, dtype=np.float64)
    if lr.ndim != 1 or lr.size < 1 or not np.all(np.isfinite(lr)):
        raise InvalidInputError(f"lr must be a finite 1-D vector, got {lr}")
    z = lr / temperature
    e = np.exp(z - z.max())
    return EccentricVector(lr.size * e / e.sum(), float(temperature))


@dataclass
class BalancedGradient:
    vector: np.ndarray
    weights: np.ndarray
    sigma_min: float = float("nan")
    rank: int | None = None
    skipped: bool = False


def _skip(G: np.ndarray, weights: np.ndarray, err: Exception) -> BalancedGradient:
    log.debug("skipping trunk update: %s", err)
    return BalancedGradient(np.zeros(G.shape[1]), weights, skipped=True)


def _aligned_sum(G: np.ndarray, weights: np.ndarray, rank_tol: float | None) -> BalancedGradient:
    try:
        aligned = project_align(G, rank_tol)
    except DegenerateGradientError as err:
        return _skip(G, weights, err)
    vector = aligned.g_tilde.T @ weights
    return BalancedGradient(vector, weights, aligned.sigma_min, aligned.rank)


def equal_weight_step(G) -> BalancedGradient:
    G = as_gradient_matrix(G)
    w = np.ones(G.shape[0])
    return BalancedGradient(G.T @ w, w)


def ortho_only_step(G, rank_tol: float | None = None) -> BalancedGradient:
    G = as_gradient_matrix(G)
    return _aligned_sum(G, np.ones(G.shape[0]), rank_tol)


def eccentric_weights(history: LossHistory, epoch: int, temperature: float) -> np.ndarray:
    """Weights used at ``epoch``: all ones up to warmup, softmax afterwards.

    A task whose warmup loss is numerically zero is treated as converged and
    gets a learning-rate ratio of 1.
    """
    n = history.n_tasks
    if epoch <= history.t_warm:
        return np.ones(n)
    lr = np.empty(n)
    for i in range(n):
        try:
            lr[i] = learning_rate_ratio(history, i, epoch)
        except DegenerateHistoryError:
            lr[i] = 1.0
    return eccentric_vector(lr, temperature).weights


def ega_step(
    G,
    history: LossHistory,
    epoch: int,
    temperature: float = DEFAULT_TEMPERATURE,
    rank_tol: float | None = None,
) -> BalancedGradient:
    G = as_gradient_matrix(G)
    if G.shape[0] != history.n_tasks:
        raise InvalidInputError(f"G has {G.shape[0]} rows but history tracks {history.n_tasks} tasks")
    return _aligned_sum(G, eccentric_weights(history, epoch, temperature), rank_tol)


def apply_update(params, g, eta: float) -> np.ndarray:
    """One descent step ``params - eta * g``; ``g`` may be a BalancedGradient."""
    if not eta > 0:
        raise InvalidConfigError(f"eta must be > 0, got {eta}")
    vec = g.vector if isinstance(g, BalancedGradient) else np.asarray(g, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if params.shape != vec.shape:
        raise InvalidInputError(f"params {params.shape} and gradient {vec.shape} differ")
    return params - eta * vec


# --- strategy objects used by the training loop ---------------------------


@dataclass
class Strategy:
    """Base class: turn a task gradient matrix into one trunk gradient."""

    name: str = field(init=False, default="")

    def step(self, G: np.ndarray, history: LossHistory, epoch: int) -> BalancedGradient:
        raise NotImplementedError


@dataclass
class EqualWeight(Strategy):
    name: str = field(init=False, default="equal_weight")

    def step(self, G, history, epoch):
        return equal_weight_step(G)


@dataclass
class OrthoOnly(Strategy):
    rank_tol: float | None = None
    name: str = field(init=False, default="ortho_only")

    def step(self, G, history, epoch):
        return ortho_only_step(G, self.rank_tol)


@dataclass
class EGA(Strategy):
    temperature: float = DEFAULT_TEMPERATURE
    rank_tol: float | None = None
    name: str = field(init=False, default="ega")

    def __post_init__(self):
        if not self.temperature > 0:
            raise InvalidConfigError(f"temperature must be > 0, got {self.temperature}")

    def step(self, G, history, epoch):
        return ega_step(G, history, epoch, self.temperature, self.rank_tol)


STRATEGIES = {"equal_weight": EqualWeight, "ortho_only": OrthoOnly, "ega": EGA}


def make_strategy(name: str, temperature: float = DEFAULT_TEMPERATURE, rank_tol: float | None = None) -> Strategy:
    if name == "equal_weight":
        return EqualWeight()
    if name == "ortho_only":
        return OrthoOnly(rank_tol)
    if name == "ega":
        return EGA(temperature, rank_tol)
    raise InvalidConfigError(f"unknown strategy {name!r}; known: {sorted(STRATEGIES)}")
