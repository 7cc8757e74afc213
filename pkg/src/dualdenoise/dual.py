"""Convex reformulation of the two-layer ReLU denoiser and its solvers.

One weight pair ``(w_i, z_i)`` per activation pattern; the model predicts
``sum_i D_i Y' (w_i - z_i)`` and pays a group-lasso penalty
``beta * sum_i (||w_i|| + ||z_i||)``. Each pattern's cone constraints
``(2 D_i - I) Y' w_i >= 0`` (and likewise for ``z_i``) force the pre-
activations to agree in sign with the pattern's mask; they are enforced
softly through a hinge penalty with strength ``rho``, grown by a factor of
10 until the measured violation drops below the feasibility tolerance.

Two backends:

* ``train_dual_prox`` -- accelerated proximal gradient (squared hinge only)
  whose group soft-threshold produces exact zeros. Groups enter through a
  working set driven by the zero-subgradient test ``||grad_i|| <= beta``,
  momentum restarts on objective increase keep the recorded objective
  monotone within each penalty stage, and two objective-safe polish steps
  finish the run: an exact least-norm cone restoration and a support
  pruning step that reaches a sparse optimal representative.
* ``train_dual_adam`` -- subgradient Adam on the penalized objective,
  either hinge.

Internally both backends work on the two weight blocks stacked into one
``(2 count, k^2)`` matrix with a per-row prediction sign, which keeps the
hot loops to a handful of BLAS calls.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .common import DivergenceError, DualDenoiseError, GROUP_ZERO_TOL
from .patterns import SignPatternSet, _pattern_chunks
from .primal import PrimalWeights
from .tensors import PatchMatrix


@dataclass(frozen=True)
class DualWeights:
    """Per-pattern filter pairs, rows of ``w`` and ``z``, shape (count, k^2)."""

    w: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        if w.shape != z.shape or w.ndim != 2:
            raise DualDenoiseError(f"inconsistent dual shapes w{w.shape} z{z.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z))):
            raise DualDenoiseError("non-finite dual weights")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z", z)

    @property
    def count(self) -> int:
        return self.w.shape[0]

    @property
    def taps(self) -> int:
        return self.w.shape[1]

    @staticmethod
    def zeros(count: int, taps: int) -> "DualWeights":
        return DualWeights(np.zeros((count, taps)), np.zeros((count, taps)))

    def difference(self) -> np.ndarray:
        return self.w - self.z


@dataclass
class DualConfig:
    """Solver settings shared by both backends."""

    beta: float
    rho: float = 1e2
    hinge: str = "squared"  # {"linear", "squared"}
    learning_rate: float = 1e-3
    max_iters: int = 1000
    feasibility_tol: float = 1e-6
    seed: int = 0
    continuation: bool = True  # grow rho x10 until feasibility_tol is met
    rho_growth: float = 10.0
    max_rho: float = 1e12
    rel_tol: float = 1e-12  # per-stage early stop on relative objective change
    lr_schedule: str = "constant"  # Adam backend only
    restore: bool = True  # prox backend: exact cone restoration after the stages
    prune: bool = True  # prox backend: objective-preserving support pruning

    def __post_init__(self):
        if self.beta < 0:
            raise DualDenoiseError(f"beta must be >= 0, got {self.beta}")
        if self.rho <= 0:
            raise DualDenoiseError(f"rho must be > 0, got {self.rho}")
        if self.hinge not in ("linear", "squared"):
            raise DualDenoiseError(f"unknown hinge {self.hinge!r}")
        if self.max_iters < 1:
            raise DualDenoiseError("max_iters must be >= 1")


@dataclass(frozen=True)
class DualSolution:
    """Solver output: weights plus per-iteration history.

    ``stage_starts`` indexes the history rows where a new penalty stage
    (larger rho, or the final polish) begins; the prox backend's objective
    is monotone non-increasing within each stage.
    """

    weights: DualWeights
    objective_history: np.ndarray = field(repr=False)
    violation_history: np.ndarray = field(repr=False)
    active_history: np.ndarray = field(repr=False)
    stage_starts: np.ndarray = field(repr=False)
    rho_final: float = 0.0

    @property
    def active_groups(self) -> int:
        return active_group_count(self.weights)

    @property
    def final_objective(self) -> float:
        return float(self.objective_history[-1])

    @property
    def final_violation(self) -> float:
        return float(self.violation_history[-1])


def active_group_count(weights: DualWeights, tol: float = GROUP_ZERO_TOL) -> int:
    """Number of patterns whose larger side exceeds the zero tolerance."""
    norm_w = np.linalg.norm(weights.w, axis=1)
    norm_z = np.linalg.norm(weights.z, axis=1)
    return int(np.sum(np.maximum(norm_w, norm_z) > tol))


def group_soft_threshold(vectors: np.ndarray, threshold: float) -> np.ndarray:
    """Prox of ``threshold * ||.||_2`` applied to a vector or to each row."""
    arr = np.asarray(vectors, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    norms = np.linalg.norm(rows, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - threshold / norms[nz])
    out = rows * scale[:, None]
    return out[0] if single else out


class _StackedProblem:
    """Chunked evaluation on the stacked weight matrix ``V = [W; Z]``.

    Row ``j < count`` is ``w_j`` (prediction sign +1), row ``count + j`` is
    ``z_j`` (sign -1); the hinge treats both halves identically. All passes
    stream over bounded column chunks of the duplicated mask matrix so only
    ``(P x chunk)`` float temporaries exist at a time.
    """

    def __init__(self, rows: np.ndarray, targets: np.ndarray,
                 masks: np.ndarray, beta: float):
        self.rows = rows
        self.targets = targets
        self.masks2 = np.concatenate([masks, masks], axis=1)
        self.count = masks.shape[1]
        self.taps = rows.shape[1]
        self.beta = beta
        self.sign = np.concatenate(
            [np.ones(self.count), -np.ones(self.count)]
        )

    @staticmethod
    def from_parts(patches: PatchMatrix, targets: np.ndarray,
                   patterns: SignPatternSet, beta: float) -> "_StackedProblem":
        if patches.taps != patterns.taps:
            raise DualDenoiseError(
                f"patch taps {patches.taps} != pattern taps {patterns.taps}"
            )
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (patches.row_count,):
            raise DualDenoiseError(
                f"targets shape {targets.shape} != ({patches.row_count},)"
            )
        return _StackedProblem(patches.rows, targets,
                               patterns.masks_for(patches), beta)

    def restricted(self, index: np.ndarray) -> "_StackedProblem":
        sub = _StackedProblem.__new__(_StackedProblem)
        sub.rows = self.rows
        sub.targets = self.targets
        sel = np.concatenate([index, index + self.count])
        sub.masks2 = self.masks2[:, sel]
        sub.count = index.size
        sub.taps = self.taps
        sub.beta = self.beta
        sub.sign = np.concatenate([np.ones(index.size), -np.ones(index.size)])
        return sub

    def stack(self, weights: DualWeights) -> np.ndarray:
        return np.vstack([weights.w, weights.z])

    def unstack(self, v: np.ndarray) -> DualWeights:
        return DualWeights(v[: self.count].copy(), v[self.count :].copy())

    def _chunks(self):
        return _pattern_chunks(self.rows.shape[0], 2 * self.count)

    def value_pass(self, v: np.ndarray):
        """(pred, squared_hinge_sum, linear_violation_sum)."""
        pred = np.zeros(self.rows.shape[0])
        sq = 0.0
        lin = 0.0
        for a, b in self._chunks():
            m = self.masks2[:, a:b]
            s = self.rows @ v[a:b].T
            h = np.where(m, -s, s)
            np.maximum(h, 0.0, out=h)
            lin += h.sum()
            sq += np.einsum("ij,ij->", h, h)
            s *= m
            pred += s @ self.sign[a:b]
        return pred, sq, lin

    def smooth_value(self, v: np.ndarray, rho: float):
        """(f, linear_violation, residual) with f = data fit + rho*sq hinge."""
        pred, sq, lin = self.value_pass(v)
        r = pred - self.targets
        return 0.5 * float(r @ r) + rho * sq, lin, r

    def smooth_value_grad(self, v: np.ndarray, rho: float):
        """Fused value and gradient of the smooth part (squared hinge)."""
        p = self.rows.shape[0]
        pred = np.zeros(p)
        sq = 0.0
        lin = 0.0
        chunks = list(self._chunks())
        hinge_grads = []
        for a, b in chunks:
            m = self.masks2[:, a:b]
            s = self.rows @ v[a:b].T
            h = np.where(m, -s, s)
            np.maximum(h, 0.0, out=h)
            lin += h.sum()
            sq += np.einsum("ij,ij->", h, h)
            sh = np.where(m, h, -h)
            hinge_grads.append(-2.0 * rho * (sh.T @ self.rows))
            s *= m
            pred += s @ self.sign[a:b]
        r = pred - self.targets
        g = np.empty_like(v)
        for (a, b), hg in zip(chunks, hinge_grads):
            base = (self.masks2[:, a:b] * r[:, None]).T @ self.rows
            base *= self.sign[a:b, None]
            g[a:b] = base + hg
        f = 0.5 * float(r @ r) + rho * sq
        return f, lin, r, g

    def subgradient(self, v: np.ndarray, rho: float, hinge: str):
        """Penalized objective and a full subgradient (either hinge)."""
        pred = np.zeros(self.rows.shape[0])
        sq = 0.0
        lin = 0.0
        for a, b in self._chunks():
            m = self.masks2[:, a:b]
            s = self.rows @ v[a:b].T
            h = np.where(m, -s, s)
            np.maximum(h, 0.0, out=h)
            lin += h.sum()
            sq += np.einsum("ij,ij->", h, h)
            s *= m
            pred += s @ self.sign[a:b]
        r = pred - self.targets
        g = np.empty_like(v)
        for a, b in self._chunks():
            m = self.masks2[:, a:b]
            s = self.rows @ v[a:b].T
            h = np.where(m, -s, s)
            np.maximum(h, 0.0, out=h)
            if hinge == "squared":
                sh = np.where(m, h, -h)
                hg = -2.0 * rho * (sh.T @ self.rows)
            else:
                sh = np.where(m, 1.0, -1.0) * (h > 0)
                hg = -rho * (sh.T @ self.rows)
            base = (m * r[:, None]).T @ self.rows
            base *= self.sign[a:b, None]
            g[a:b] = base + hg
        norms = np.linalg.norm(v, axis=1)
        nz = norms > 0
        g[nz] += self.beta * v[nz] / norms[nz, None]
        penalty = rho * (sq if hinge == "squared" else lin)
        value = 0.5 * float(r @ r) + self.beta * norms.sum() + penalty
        return value, lin, g

    def penalized(self, v: np.ndarray, rho: float, hinge: str):
        pred, sq, lin = self.value_pass(v)
        r = pred - self.targets
        penalty = rho * (sq if hinge == "squared" else lin)
        value = 0.5 * float(r @ r) + self.beta * self.group_norms(v).sum() + penalty
        return value, lin

    def group_norms(self, v: np.ndarray) -> np.ndarray:
        return np.linalg.norm(v, axis=1)

    def active_count(self, v: np.ndarray, tol: float = GROUP_ZERO_TOL) -> int:
        norms = self.group_norms(v)
        return int(np.sum(np.maximum(norms[: self.count], norms[self.count :]) > tol))

    def data_gradient_norms(self, residual: np.ndarray) -> np.ndarray:
        """Per-pattern ``||Y'^T (m_i * r)||_2``: the zero-subgradient test."""
        norms = np.empty(self.count)
        for a, b in _pattern_chunks(self.rows.shape[0], self.count):
            base = (self.masks2[:, a:b] * residual[:, None]).T @ self.rows
            norms[a:b] = np.linalg.norm(base, axis=1)
        return norms

    def data_operator_norm_sq(self, iters: int = 12, seed: int = 0) -> float:
        """Power iteration for the squared norm of the prediction operator."""
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.rows.shape[0])
        vec /= np.linalg.norm(vec)
        lam = 0.0
        for _ in range(iters):
            u = np.zeros_like(vec)
            for a, b in self._chunks():
                m = self.masks2[:, a:b]
                base = (m * vec[:, None]).T @ self.rows
                s = self.rows @ base.T
                s *= m
                u += s.sum(axis=1)
            lam = float(np.linalg.norm(u))
            if lam == 0.0:
                return 0.0
            vec = u / lam
        return lam

    def rows_operator_norm_sq(self) -> float:
        sv = np.linalg.svd(self.rows, compute_uv=False)
        return float(sv[0] ** 2) if sv.size else 0.0


def dual_predict(
    weights: DualWeights, patterns: SignPatternSet, patches: PatchMatrix
) -> np.ndarray:
    """Batched prediction ``sum_i D_i Y' (w_i - z_i)``."""
    from .patterns import apply_masks

    return apply_masks(patterns, patches, weights.difference())


def dual_predict_pixelwise(
    weights: DualWeights, patterns: SignPatternSet, patches: PatchMatrix
) -> np.ndarray:
    """Per-pixel evaluation ``sum_i d_i(p) * (y_p . (w_i - z_i))``.

    Same numbers as :func:`dual_predict`, computed one output pixel at a
    time; intended for interpretation and cross-checks on small instances.
    """
    masks = patterns.masks_for(patches)
    diff = weights.difference()
    out = np.empty(patches.row_count)
    for p in range(patches.row_count):
        scores = diff @ patches.rows[p]
        out[p] = scores @ masks[p]
    return out


def constraint_violation(
    weights: DualWeights,
    patterns: SignPatternSet,
    patches: PatchMatrix,
    hinge: str = "linear",
) -> float:
    """Total cone-constraint violation over both weight blocks."""
    problem = _StackedProblem.from_parts(
        patches, np.zeros(patches.row_count), patterns, 0.0
    )
    _, sq, lin = problem.value_pass(problem.stack(weights))
    return sq if hinge == "squared" else lin


def dual_objective(
    weights: DualWeights,
    patterns: SignPatternSet,
    patches: PatchMatrix,
    targets: np.ndarray,
    cfg: DualConfig,
) -> float:
    """Penalized objective: data fit + group lasso + rho * hinge."""
    problem = _StackedProblem.from_parts(patches, targets, patterns, cfg.beta)
    value, _ = problem.penalized(problem.stack(weights), cfg.rho, cfg.hinge)
    return value


def dual_objective_unpenalized(
    weights: DualWeights,
    patterns: SignPatternSet,
    patches: PatchMatrix,
    targets: np.ndarray,
    beta: float,
) -> float:
    """Data fit + group lasso, without the constraint penalty."""
    problem = _StackedProblem.from_parts(patches, targets, patterns, beta)
    v = problem.stack(weights)
    pred, _, _ = problem.value_pass(v)
    r = pred - targets
    return 0.5 * float(r @ r) + beta * problem.group_norms(v).sum()


class _History:
    def __init__(self):
        self.objective = []
        self.violation = []
        self.active = []
        self.stage_starts = [0]

    def record(self, objective: float, violation: float, active: int):
        self.objective.append(objective)
        self.violation.append(violation)
        self.active.append(active)

    def new_stage(self):
        self.stage_starts.append(len(self.objective))

    def solution(self, weights: DualWeights, rho: float) -> DualSolution:
        return DualSolution(
            weights=weights,
            objective_history=np.asarray(self.objective),
            violation_history=np.asarray(self.violation),
            active_history=np.asarray(self.active, dtype=np.int64),
            stage_starts=np.asarray(self.stage_starts, dtype=np.int64),
            rho_final=rho,
        )


class _Monitor:
    """Throttles user monitor callbacks to a fixed iteration cadence."""

    def __init__(self, problem: _StackedProblem, monitor, every: int):
        self.problem = problem
        self.monitor = monitor
        self.every = max(1, every)

    def __call__(self, index: int, v: np.ndarray, scatter=None):
        if self.monitor is None or index % self.every:
            return
        if scatter is not None:
            v = scatter(v)
        self.monitor(index, self.problem.unstack(v))


def _prox_stage(problem: _StackedProblem, v: np.ndarray, rho: float,
                cfg: DualConfig, history: _History, monitor: Optional[_Monitor],
                scatter=None) -> np.ndarray:
    """Accelerated proximal gradient with restart at fixed rho (squared hinge).

    FISTA momentum, reset whenever the extrapolated step would increase the
    objective; the fallback is a plain backtracked prox step from the
    current iterate, so the recorded objective is monotone non-increasing.
    """

    def prox_from(point, g, f_point, tau):
        while True:
            cand = group_soft_threshold(point - tau * g, tau * cfg.beta)
            f_c, viol_c, _ = problem.smooth_value(cand, rho)
            diff = cand - point
            model = (
                f_point
                + float(np.sum(g * diff))
                + float(np.sum(diff * diff)) / (2.0 * tau)
            )
            if f_c <= model + 1e-12 * max(1.0, abs(f_point)):
                return cand, f_c, viol_c, tau
            tau *= 0.5

    lips = problem.data_operator_norm_sq(seed=cfg.seed) * 1.1
    lips += 2.0 * rho * problem.rows_operator_norm_sq()
    tau = 1.0 / max(lips, 1e-30)
    tau_cap = 10.0 * tau

    x = v
    y = v
    t = 1.0
    f_x, viol_x, _ = problem.smooth_value(x, rho)
    obj_x = f_x + problem.beta * problem.group_norms(x).sum()
    history.record(obj_x, viol_x, problem.active_count(x))
    if monitor is not None:
        monitor(len(history.objective) - 1, x, scatter)
    recent = [obj_x]

    for _ in range(cfg.max_iters):
        f_y, _, _, g = problem.smooth_value_grad(y, rho)
        cand, f_c, viol_c, tau = prox_from(y, g, f_y, tau)
        obj_c = f_c + problem.beta * problem.group_norms(cand).sum()
        if obj_c > obj_x:
            # momentum overshoot: restart from the current iterate
            f_s, _, _, g = problem.smooth_value_grad(x, rho)
            cand, f_c, viol_c, tau = prox_from(x, g, f_s, tau)
            obj_c = f_c + problem.beta * problem.group_norms(cand).sum()
            t = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - x)
        x, obj_x, viol_x = cand, min(obj_c, obj_x), viol_c
        t = t_next
        tau = min(tau * 1.02, tau_cap)
        history.record(obj_x, viol_x, problem.active_count(x))
        if monitor is not None:
            monitor(len(history.objective) - 1, x, scatter)
        recent.append(obj_x)
        if len(recent) > 40:
            recent.pop(0)
            if cfg.rel_tol > 0 and (
                abs(recent[0] - recent[-1]) <= cfg.rel_tol * max(1.0, abs(recent[-1]))
            ):
                break
    return x


_WORKSET_ROUNDS = 40


def _prox_working_set(problem: _StackedProblem, v: np.ndarray, rho: float,
                      cfg: DualConfig, history: _History, working: np.ndarray,
                      monitor: Optional[_Monitor]) -> np.ndarray:
    """One penalty stage solved over a growing working set of patterns.

    A pattern pinned at zero is optimal iff its data-gradient norm is at
    most beta (the hinge gradient vanishes at zero; the test covers both
    blocks since their gradients differ only in sign), so patterns are
    added only when that test fails; each restricted solve starts from the
    previous point, which keeps the recorded objective monotone across
    expansions.
    """
    from dataclasses import replace

    n = problem.count
    grow_cap = max(64, 4 * problem.rows.shape[0])
    loose_cfg = replace(cfg, max_iters=min(cfg.max_iters, 300),
                        rel_tol=max(cfg.rel_tol, 1e-9))
    mode = "loose"
    solved_current = False
    for _ in range(_WORKSET_ROUNDS):
        if working.any() and not solved_current:
            index = np.flatnonzero(working)
            sub = problem.restricted(index)
            sel = np.concatenate([index, index + n])

            def scatter(sub_v, _sel=sel):
                full = np.zeros((2 * n, problem.taps))
                full[_sel] = sub_v
                return full

            sub_v = _prox_stage(sub, v[sel].copy(), rho,
                                loose_cfg if mode == "loose" else cfg,
                                history, monitor, scatter)
            v = np.zeros_like(v)
            v[sel] = sub_v
            solved_current = True
        pred, _, _ = problem.value_pass(v)
        norms = problem.data_gradient_norms(pred - problem.targets)
        norms[working] = 0.0
        violating = norms > cfg.beta * (1.0 + 1e-9) + 1e-14
        if violating.any():
            candidates = np.flatnonzero(violating)
            if candidates.size > grow_cap:
                candidates = candidates[
                    np.argsort(norms[candidates])[::-1][:grow_cap]
                ]
            working[candidates] = True
            solved_current = False
            mode = "loose"  # cheap solves while the set is still growing
            continue
        if mode == "loose" and working.any():
            mode = "tight"  # set settled; finish with the configured budget
            solved_current = False
            continue
        break
    return v


def train_dual_prox(
    patches: PatchMatrix,
    targets: np.ndarray,
    patterns: SignPatternSet,
    cfg: DualConfig,
    init: Optional[DualWeights] = None,
    monitor=None,
    monitor_every: int = 1,
) -> DualSolution:
    """Proximal-gradient backend with exact group soft-thresholding.

    Requires the squared hinge (the smooth part must be differentiable).
    The recorded objective is monotone non-increasing within each penalty
    stage; rho grows by ``rho_growth`` between stages until the linear
    violation is at most ``feasibility_tol``, stopping early if a larger
    rho stops helping. ``restore``/``prune`` apply the final polish steps,
    recorded as a one-row final stage.
    """
    if cfg.hinge != "squared":
        raise DualDenoiseError("prox backend requires the squared hinge")
    problem = _StackedProblem.from_parts(patches, targets, patterns, cfg.beta)
    v = (
        problem.stack(init)
        if init is not None
        else np.zeros((2 * patterns.count, patterns.taps))
    )
    norms = problem.group_norms(v)
    working = np.maximum(norms[: patterns.count], norms[patterns.count :]) > 0.0
    wrapped = _Monitor(problem, monitor, monitor_every) if monitor else None
    history = _History()
    rho = cfg.rho
    prev_violation = np.inf
    while True:
        v = _prox_working_set(problem, v, rho, cfg, history, working, wrapped)
        if not history.objective:  # every pattern passed the zero test
            value, lin = problem.penalized(v, rho, "squared")
            history.record(value, lin, problem.active_count(v))
        violation = history.violation[-1]
        saturated = violation > 0.5 * prev_violation  # larger rho stopped helping
        prev_violation = violation
        if (
            not cfg.continuation
            or violation <= cfg.feasibility_tol
            or rho * cfg.rho_growth > cfg.max_rho
            or saturated
        ):
            break
        rho *= cfg.rho_growth
        history.new_stage()
        # exact zeros leave the working set; the next stage's tests re-add
        # anything dropped wrongly
        norms = problem.group_norms(v)
        working &= np.maximum(norms[: patterns.count], norms[patterns.count :]) > 0.0

    if cfg.restore and cfg.prune:
        v = _polish_support(problem, v, rho, cfg, history, working)

    weights = problem.unstack(v)
    polish = cfg.restore or cfg.prune
    if cfg.restore and history.violation[-1] > 0.0:
        weights = restore_feasibility(weights, patterns, patches)
    if cfg.prune:
        weights = prune_active_groups(weights, patterns, patches)
    if polish:
        history.new_stage()
        value, lin = problem.penalized(problem.stack(weights), rho, "squared")
        history.record(value, lin, active_group_count(weights))
        if monitor is not None:
            monitor(len(history.objective) - 1, weights)
    return history.solution(weights, rho)


def _polish_support(problem: _StackedProblem, v: np.ndarray, rho: float,
                    cfg: DualConfig, history: _History,
                    working: np.ndarray) -> np.ndarray:
    """High-accuracy finish: smooth solves on the identified support.

    On a fixed support the penalized objective is continuously
    differentiable, so a quasi-Newton solve drives it to near machine
    precision; the zero-subgradient test is re-checked afterwards and any
    violating pattern re-enters through one more proximal round. Accepted
    points never increase the objective.
    """
    from scipy.optimize import minimize

    n = problem.count
    history.new_stage()
    for _ in range(6):
        norms = problem.group_norms(v)
        support = np.flatnonzero(np.maximum(norms[:n], norms[n:]) > 0.0)
        if support.size == 0 or support.size > 8 * problem.rows.shape[0]:
            break
        sub = problem.restricted(support)
        sel = np.concatenate([support, support + n])
        shape = (sel.size, problem.taps)
        current, _ = problem.penalized(v, rho, "squared")

        def fun(x):
            m = x.reshape(shape)
            f, _, _, g = sub.smooth_value_grad(m, rho)
            row_norms = np.linalg.norm(m, axis=1)
            nz = row_norms > 0
            f += sub.beta * row_norms.sum()
            g = g.copy()
            g[nz] += sub.beta * m[nz] / row_norms[nz, None]
            return f, g.ravel()

        res = minimize(fun, v[sel].ravel(), jac=True, method="L-BFGS-B",
                       options={"maxiter": 1000, "ftol": 1e-18, "gtol": 1e-12})
        if res.fun <= current + 1e-12 * max(1.0, abs(current)):
            v = np.zeros_like(v)
            v[sel] = res.x.reshape(shape)
        value, lin = problem.penalized(v, rho, "squared")
        history.record(value, lin, problem.active_count(v))
        pred, _, _ = problem.value_pass(v)
        grad_norms = problem.data_gradient_norms(pred - problem.targets)
        grad_norms[support] = 0.0
        violating = grad_norms > cfg.beta * (1.0 + 1e-9) + 1e-14
        if not violating.any():
            break
        working[np.flatnonzero(violating)] = True
        working[support] = True
        v = _prox_working_set(problem, v, rho, cfg, history, working, None)
    return v


def restore_feasibility(
    weights: DualWeights,
    patterns: SignPatternSet,
    patches: PatchMatrix,
    max_rounds: int = 20,
) -> DualWeights:
    """Least-norm correction zeroing each group's sign-violating responses.

    For every group whose responses disagree in sign with its mask, the
    offending response entries are pinned to zero by the minimum-norm weight
    update (a linear solve per group, repeated if the correction flips new
    entries). Near a converged solution the violations are tiny, so the
    objective moves by the same order while feasibility becomes exact up to
    roundoff. Groups at zero are untouched.
    """
    masks = patterns.masks_for(patches)
    rows = patches.rows
    out = []
    for block in (weights.w, weights.z):
        block = block.copy()
        scores = rows @ block.T
        sigma = np.where(masks, 1.0, -1.0)
        bad_groups = np.flatnonzero(((sigma * scores) < 0).any(axis=0))
        for i in bad_groups:
            pinned = np.zeros(rows.shape[0], dtype=bool)
            for _ in range(max_rounds):
                s = rows @ block[i]
                violating = (sigma[:, i] * s) < 0
                if not violating.any():
                    break
                pinned |= violating
                sub = rows[pinned]
                delta, *_ = np.linalg.lstsq(sub, s[pinned], rcond=None)
                block[i] -= delta
        out.append(block)
    return DualWeights(out[0], out[1])


def prune_active_groups(
    weights: DualWeights,
    patterns: SignPatternSet,
    patches: PatchMatrix,
    tol: float = GROUP_ZERO_TOL,
) -> DualWeights:
    """Objective-preserving reduction to a sparse optimal representative.

    The prediction is a nonnegative combination of "atoms" (each group's
    masked unit response) with the group penalty equal to the coefficient
    sum. Along any null direction of the atom matrix the prediction is
    unchanged; orienting the move so the coefficient sum does not grow, the
    objective never increases, and stepping until a coefficient hits zero
    removes one atom at a time. Stops when the live atoms are linearly
    independent, which caps the active count at P.
    """
    masks = patterns.masks_for(patches)
    rows = patches.rows
    atoms = []  # (block, group index, unit direction, coefficient, response)
    for block, sign in ((0, 1.0), (1, -1.0)):
        mat = weights.w if block == 0 else weights.z
        norms = np.linalg.norm(mat, axis=1)
        for i in np.flatnonzero(norms > tol):
            unit = mat[i] / norms[i]
            response = sign * (masks[:, i] * (rows @ unit))
            atoms.append([block, i, unit, norms[i], response])
    if len(atoms) <= 1:
        return weights

    coeff = np.array([a[3] for a in atoms])
    response = np.stack([a[4] for a in atoms], axis=1)  # (P, n_atoms)
    alive = np.ones(len(atoms), dtype=bool)
    while alive.sum() > 1:
        idx = np.flatnonzero(alive)
        _, sv, vt = np.linalg.svd(response[:, idx], full_matrices=True)
        rank = int(np.sum(sv > 1e-12 * max(sv[0] if sv.size else 0.0, 1e-300)))
        if rank >= idx.size:
            break
        d = vt[-1]
        if d.sum() > 0:
            d = -d  # never let the penalty (coefficient sum) grow
        steps = []
        for direction in ((d,) if d.sum() < -1e-14 else (d, -d)):
            neg = direction < -1e-14
            if neg.any():
                steps.append((np.min(coeff[idx][neg] / -direction[neg]), direction))
        if not steps:
            break
        t, direction = min(steps, key=lambda s: s[0])
        coeff[idx] = np.maximum(coeff[idx] + t * direction, 0.0)
        dead = idx[coeff[idx] <= 1e-12 * max(1.0, float(coeff.max()))]
        if dead.size == 0:  # ratio test failed to zero anything; stop cleanly
            break
        coeff[dead] = 0.0
        alive[dead] = False

    w = np.zeros_like(weights.w)
    z = np.zeros_like(weights.z)
    for a, c in zip(atoms, coeff):
        if c <= 0.0:
            continue
        block, i, unit = a[0], a[1], a[2]
        if block == 0:
            w[i] += c * unit
        else:
            z[i] += c * unit
    return DualWeights(w, z)


def train_dual_adam(
    patches: PatchMatrix,
    targets: np.ndarray,
    patterns: SignPatternSet,
    cfg: DualConfig,
    init: Optional[DualWeights] = None,
    monitor=None,
    monitor_every: int = 1,
) -> DualSolution:
    """Subgradient-Adam backend on the penalized objective.

    Works with either hinge; the group-norm subgradient at zero is zero.
    Raises :class:`DivergenceError` if the objective exceeds 10x its initial
    value.
    """
    problem = _StackedProblem.from_parts(patches, targets, patterns, cfg.beta)
    v = (
        problem.stack(init)
        if init is not None
        else np.zeros((2 * patterns.count, patterns.taps))
    )
    wrapped = _Monitor(problem, monitor, monitor_every) if monitor else None
    history = _History()
    rho = cfg.rho

    b1, b2, eps = 0.9, 0.999, 1e-8
    m_v = np.zeros_like(v)
    s_v = np.zeros_like(v)
    step = 0
    initial = None

    while True:
        for it in range(cfg.max_iters):
            value, lin, g = problem.subgradient(v, rho, cfg.hinge)
            history.record(value, lin, problem.active_count(v))
            if initial is None:
                initial = value
            if value > 10.0 * max(initial, 1e-300):
                raise DivergenceError(step, value, initial)
            if wrapped is not None:
                wrapped(len(history.objective) - 1, v)
            step += 1
            if cfg.lr_schedule == "cosine":
                lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * it / cfg.max_iters))
            else:
                lr = cfg.learning_rate
            m_v = b1 * m_v + (1 - b1) * g
            s_v = b2 * s_v + (1 - b2) * g**2
            c1 = 1 - b1**step
            c2 = 1 - b2**step
            v = v - lr * (m_v / c1) / (np.sqrt(s_v / c2) + eps)
        value, lin = problem.penalized(v, rho, cfg.hinge)
        history.record(value, lin, problem.active_count(v))
        if (
            not cfg.continuation
            or lin <= cfg.feasibility_tol
            or rho * cfg.rho_growth > cfg.max_rho
        ):
            break
        rho *= cfg.rho_growth
        history.new_stage()
    return history.solution(problem.unstack(v), rho)


def dual_to_primal(
    solution, tol: float = GROUP_ZERO_TOL
) -> PrimalWeights:
    """Map dual weights to network filters.

    Each pattern with ``||w_i|| > tol`` contributes ``(w_i / sqrt||w_i||,
    +sqrt||w_i||)``; each with ``||z_i|| > tol`` contributes ``(z_i /
    sqrt||z_i||, -sqrt||z_i||)``. The negative second-layer sign on the z
    branch is what reproduces the subtracted masked response.
    """
    weights = solution.weights if isinstance(solution, DualSolution) else solution
    us = []
    vs = []
    for block, sign in ((weights.w, 1.0), (weights.z, -1.0)):
        norms = np.linalg.norm(block, axis=1)
        for i in np.flatnonzero(norms > tol):
            root = np.sqrt(norms[i])
            us.append(block[i] / root)
            vs.append(sign * root)
    if not us:
        return PrimalWeights(
            u=np.zeros((0, weights.taps)), v=np.zeros(0)
        )
    return PrimalWeights(u=np.asarray(us), v=np.asarray(vs))


_DUAL_MAGIC = b"DDDW"


def save_dual_weights(path, weights: DualWeights) -> None:
    """Flat binary: magic, (count, k^2) little-endian int64, then w then z."""
    with open(path, "wb") as fh:
        fh.write(_DUAL_MAGIC)
        fh.write(struct.pack("<qq", weights.count, weights.taps))
        fh.write(np.ascontiguousarray(weights.w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(weights.z, dtype="<f8").tobytes())


def load_dual_weights(path) -> DualWeights:
    with open(path, "rb") as fh:
        if fh.read(4) != _DUAL_MAGIC:
            raise DualDenoiseError("bad dual weight file magic")
        count, taps = struct.unpack("<qq", fh.read(16))
        need = 2 * 8 * count * taps
        body = fh.read(need)
        if len(body) != need:
            raise DualDenoiseError("truncated dual weight file")
        half = 8 * count * taps
        w = np.frombuffer(body[:half], dtype="<f8").reshape(count, taps).copy()
        z = np.frombuffer(body[half:], dtype="<f8").reshape(count, taps).copy()
    return DualWeights(w=w, z=z)


def save_history_csv(path, solution: DualSolution) -> None:
    """Per-iteration history: iter, objective, violation, active_groups."""
    with open(path, "w", newline="") as fh:
        fh.write("iter,objective,violation,active_groups\n")
        for i in range(solution.objective_history.size):
            fh.write(
                f"{i},{solution.objective_history[i]:.17g},"
                f"{solution.violation_history[i]:.17g},"
                f"{solution.active_history[i]}\n"
            )
