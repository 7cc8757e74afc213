"""The non-convex two-layer convolutional ReLU network and its trainer.

Weights are ``m`` first-layer filters ``u_j`` (rows of a matrix, one per
filter, in patch-window order) and ``m`` second-layer scalars ``v_j``. On a
patch matrix the forward map is ``sum_j relu(Y' u_j) v_j``; with the skip
connection enabled the pixel's own input value is added back. Training is
plain minibatch Adam on the exact objective

    0.5 * ||forward - targets||^2 + (beta / 2) * sum_j (||u_j||^2 + v_j^2)

with the weight decay inside the loss, not decoupled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .common import DivergenceError, DualDenoiseError
from .tensors import PatchMatrix


@dataclass(frozen=True)
class PrimalWeights:
    """First-layer filters ``u`` (m, k^2) and second-layer scalars ``v`` (m,)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or v.ndim != 1 or u.shape[0] != v.shape[0]:
            raise DualDenoiseError(
                f"inconsistent weight shapes u{u.shape} v{v.shape}"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DualDenoiseError("non-finite primal weights")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def unit_count(self) -> int:
        return self.u.shape[0]

    @property
    def taps(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam accumulators shaped like :class:`PrimalWeights`."""

    m_u: np.ndarray
    s_u: np.ndarray
    m_v: np.ndarray
    s_v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def zeros(weights: PrimalWeights) -> "AdamState":
        return AdamState(
            m_u=np.zeros_like(weights.u),
            s_u=np.zeros_like(weights.u),
            m_v=np.zeros_like(weights.v),
            s_v=np.zeros_like(weights.v),
        )


@dataclass
class PrimalConfig:
    """Training hyperparameters for the non-convex network."""

    filters: int
    beta: float
    learning_rate: float = 1e-3
    max_iters: int = 1000
    batch_size: int = 0  # patch rows per step; 0 means full batch
    residual: bool = False
    seed: int = 0
    lr_schedule: str = "constant"  # or "cosine"
    eval_every: int = 1

    def __post_init__(self):
        if self.filters < 1:
            raise DualDenoiseError(f"filter count must be >= 1, got {self.filters}")
        if self.beta < 0:
            raise DualDenoiseError(f"beta must be >= 0, got {self.beta}")
        if self.max_iters < 1:
            raise DualDenoiseError("max_iters must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise DualDenoiseError(f"unknown lr schedule {self.lr_schedule!r}")


def init_kaiming_uniform(filters: int, kernel_size: int, seed: int) -> PrimalWeights:
    """Uniform fan-in initialization: bounds sqrt(6/k^2) for u, sqrt(6/m) for v."""
    if filters < 1:
        raise DualDenoiseError(f"filter count must be >= 1, got {filters}")
    taps = kernel_size * kernel_size
    rng = np.random.default_rng(seed)
    bound_u = np.sqrt(6.0 / taps)
    bound_v = np.sqrt(6.0 / filters)
    u = rng.uniform(-bound_u, bound_u, size=(filters, taps))
    v = rng.uniform(-bound_v, bound_v, size=filters)
    return PrimalWeights(u=u, v=v)


def primal_forward(
    weights: PrimalWeights, patches: PatchMatrix, residual: bool = False
) -> np.ndarray:
    """Network output per patch row; the skip connection adds the own pixel."""
    if weights.unit_count and weights.taps != patches.taps:
        raise DualDenoiseError(
            f"weight taps {weights.taps} != patch taps {patches.taps}"
        )
    pre = patches.rows @ weights.u.T
    out = np.maximum(pre, 0.0) @ weights.v
    if residual:
        out = out + patches.rows[:, patches.self_index]
    return out


def primal_objective(
    weights: PrimalWeights,
    patches: PatchMatrix,
    targets: np.ndarray,
    beta: float,
    residual: bool = False,
) -> float:
    resid = primal_forward(weights, patches, residual) - targets
    decay = float(np.sum(weights.u * weights.u) + np.sum(weights.v * weights.v))
    return 0.5 * float(resid @ resid) + 0.5 * beta * decay


def primal_gradient(
    weights: PrimalWeights,
    patches: PatchMatrix,
    targets: np.ndarray,
    beta: float,
    residual: bool = False,
) -> PrimalWeights:
    """Exact gradient of the training objective, ReLU derivative 0 at 0.

    Returned in a :class:`PrimalWeights` container of matching shape.
    """
    rows = patches.rows
    pre = rows @ weights.u.T
    act = np.maximum(pre, 0.0)
    out = act @ weights.v
    if residual:
        out = out + rows[:, patches.self_index]
    r = out - targets
    mask = pre > 0.0
    grad_u = ((mask * r[:, None]).T @ rows) * weights.v[:, None] + beta * weights.u
    grad_v = act.T @ r + beta * weights.v
    return PrimalWeights(u=grad_u, v=grad_v)


def adam_step(
    state: AdamState, weights: PrimalWeights, gradient: PrimalWeights, lr: float
):
    """One bias-corrected Adam update; returns (new_weights, new_state)."""
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    m_u = b1 * state.m_u + (1 - b1) * gradient.u
    s_u = b2 * state.s_u + (1 - b2) * gradient.u**2
    m_v = b1 * state.m_v + (1 - b1) * gradient.v
    s_v = b2 * state.s_v + (1 - b2) * gradient.v**2
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    new_u = weights.u - lr * (m_u / c1) / (np.sqrt(s_u / c2) + eps)
    new_v = weights.v - lr * (m_v / c1) / (np.sqrt(s_v / c2) + eps)
    new_state = AdamState(
        m_u=m_u, s_u=s_u, m_v=m_v, s_v=s_v, t=t, beta1=b1, beta2=b2, eps=eps
    )
    return PrimalWeights(u=new_u, v=new_v), new_state


def rescale_weights(weights: PrimalWeights, gammas: np.ndarray) -> PrimalWeights:
    """Scale each unit ``(u_j, v_j) -> (g_j u_j, v_j / g_j)``; output invariant."""
    gammas = np.asarray(gammas, dtype=np.float64)
    if gammas.shape != (weights.unit_count,):
        raise DualDenoiseError(
            f"need one gamma per unit, got shape {gammas.shape}"
        )
    if np.any(gammas <= 0):
        raise DualDenoiseError("rescaling factors must be strictly positive")
    return PrimalWeights(u=weights.u * gammas[:, None], v=weights.v / gammas)


@dataclass(frozen=True)
class PrimalRun:
    """Trained weights plus the recorded objective trace."""

    weights: PrimalWeights
    iterations: np.ndarray = field(repr=False)
    objectives: np.ndarray = field(repr=False)

    @property
    def final_objective(self) -> float:
        return float(self.objectives[-1])


def _schedule_lr(cfg: PrimalConfig, step: int) -> float:
    if cfg.lr_schedule == "cosine":
        return cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / cfg.max_iters))
    return cfg.learning_rate


def train_primal(
    patches: PatchMatrix,
    targets: np.ndarray,
    cfg: PrimalConfig,
    monitor: Optional[Callable[[int, PrimalWeights], None]] = None,
) -> PrimalRun:
    """Minibatch Adam on the exact objective; deterministic per seed.

    Batches are shuffled patch rows, re-shuffled each epoch; the minibatch
    data gradient is rescaled by ``P / batch`` so its expectation matches the
    full objective. Raises :class:`DivergenceError` if the recorded objective
    exceeds 10x its initial value.
    """
    targets = np.asarray(targets, dtype=np.float64)
    total = patches.row_count
    if targets.shape != (total,):
        raise DualDenoiseError(f"targets shape {targets.shape} != ({total},)")
    kernel_size = int(round(np.sqrt(patches.taps)))
    if kernel_size * kernel_size != patches.taps:
        raise DualDenoiseError(f"patch taps {patches.taps} is not a square")

    weights = init_kaiming_uniform(cfg.filters, kernel_size, cfg.seed)
    state = AdamState.zeros(weights)
    shuffle_rng = np.random.default_rng(cfg.seed)
    batch = cfg.batch_size if 0 < cfg.batch_size < total else total
    full_batch = batch == total

    order = np.arange(total)
    cursor = total  # force a shuffle on first use
    iters = [0]
    objectives = [primal_objective(weights, patches, targets, cfg.beta, cfg.residual)]
    initial = objectives[0]
    if monitor is not None:
        monitor(0, weights)

    for step in range(1, cfg.max_iters + 1):
        if full_batch:
            grad = primal_gradient(weights, patches, targets, cfg.beta, cfg.residual)
        else:
            if cursor >= total:
                order = shuffle_rng.permutation(total)
                cursor = 0
            idx = order[cursor : cursor + batch]
            cursor += batch
            sub = PatchMatrix(
                rows=patches.rows[idx],
                origin=patches.origin[idx],
                self_index=patches.self_index,
            )
            g = primal_gradient(weights, sub, targets[idx], 0.0, cfg.residual)
            scale = total / idx.size
            grad = PrimalWeights(
                u=scale * g.u + cfg.beta * weights.u,
                v=scale * g.v + cfg.beta * weights.v,
            )
        weights, state = adam_step(state, weights, grad, _schedule_lr(cfg, step))

        if step % cfg.eval_every == 0 or step == cfg.max_iters:
            value = primal_objective(weights, patches, targets, cfg.beta, cfg.residual)
            iters.append(step)
            objectives.append(value)
            if value > 10.0 * max(initial, 1e-300):
                raise DivergenceError(step, value, initial)
            if monitor is not None:
                monitor(step, weights)

    return PrimalRun(
        weights=weights,
        iterations=np.asarray(iters),
        objectives=np.asarray(objectives),
    )


_PRIMAL_MAGIC = b"DDPW"


def save_primal_weights(path, weights: PrimalWeights) -> None:
    """Flat binary: magic, (m, k^2) as little-endian int64, then u then v."""
    with open(path, "wb") as fh:
        fh.write(_PRIMAL_MAGIC)
        fh.write(struct.pack("<qq", weights.unit_count, weights.taps))
        fh.write(np.ascontiguousarray(weights.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(weights.v, dtype="<f8").tobytes())


def load_primal_weights(path) -> PrimalWeights:
    with open(path, "rb") as fh:
        if fh.read(4) != _PRIMAL_MAGIC:
            raise DualDenoiseError("bad primal weight file magic")
        m, taps = struct.unpack("<qq", fh.read(16))
        body = fh.read(8 * m * (taps + 1))
        if len(body) != 8 * m * (taps + 1):
            raise DualDenoiseError("truncated primal weight file")
        u = np.frombuffer(body[: 8 * m * taps], dtype="<f8").reshape(m, taps).copy()
        v = np.frombuffer(body[8 * m * taps :], dtype="<f8").copy()
    return PrimalWeights(u=u, v=v)
