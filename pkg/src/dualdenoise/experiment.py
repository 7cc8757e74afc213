"""Experiment orchestration: denoising runs, sweeps, and result export.

A run loads a dataset, normalizes it by training statistics, synthesizes
noise, trains the requested networks on identical data, and writes:

* ``metrics.csv``      evaluation rows (deterministic for a fixed config)
* ``timings.csv``      wall-clock sidecar, deliberately outside metrics.csv
* ``gap.json``         final objectives and the relative duality gap
* ``*_weights.bin``    flat binary weight files, ``patterns.bin``
* ``dual_history.csv`` full per-iteration solver trace
* ``images/``          input / target / output triptychs as PGM
* ``figures/``         matplotlib renderings of the delimited outputs
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import report
from .common import DualDenoiseError
from .data import (
    add_exponential_noise,
    add_gaussian_noise,
    apply_normalization,
    bundled_digits,
    load_idx,
    load_pgm_dir,
    normalize_dataset,
    save_idx,
    save_pgm,
    undo_normalization,
)
from .dual import (
    DualConfig,
    DualSolution,
    DualWeights,
    active_group_count,
    dual_objective_unpenalized,
    dual_predict,
    constraint_violation,
    save_dual_weights,
    save_history_csv,
    train_dual_adam,
    train_dual_prox,
)
from .interpret import cluster_codes, filter_frequency_response, kmeans
from .metrics import MetricsRecord, MetricsWriter, mse, psnr
from .patterns import SignPatternSet, sample_patterns, save_patterns
from .primal import (
    PrimalConfig,
    PrimalWeights,
    primal_forward,
    primal_objective,
    save_primal_weights,
    train_primal,
)
from .tensors import ConvSpec, ImageTensor, extract_patches, flatten_targets, unflatten


@dataclass
class ExperimentConfig:
    """Everything a run needs; identical configs produce identical outputs."""

    data: str = ""
    format: str = "idx"  # {"idx", "pgm-dir"}
    subset: int = 64
    test_subset: int = 16
    noise: str = "gaussian"  # {"gaussian", "exponential"}
    sigma: float = 0.5
    rate: float = 1.15  # exponential noise rate
    center_noise: bool = False
    kernel: int = 3
    filters: int = 32
    patterns: int = 200
    beta: float = 1e-5
    lr_primal: float = 1e-3
    lr_dual: float = 1e-3
    epochs: int = 10
    batch: int = 0  # patch rows per minibatch; 0 = full batch
    dual_iters: int = 300
    dual_backend: str = "prox"  # {"prox", "adam"}
    hinge: str = "squared"
    rho: float = 1e2
    feasibility_tol: float = 1e-6
    continuation: bool = True
    residual: bool = False
    seed: int = 0
    loss: str = "squared"
    per_pixel_norm: bool = False
    eval_every: int = 10
    out: str = "out"
    figures: bool = True
    codes_on: str = "clean"  # cluster codes from clean or noisy inputs
    clusters: int = 12
    ablation_sizes: tuple = (50, 200, 800, 3200)

    def __post_init__(self):
        if self.noise not in ("gaussian", "exponential"):
            raise DualDenoiseError(f"unknown noise model {self.noise!r}")
        if self.noise == "gaussian" and self.sigma < 0:
            raise DualDenoiseError("sigma must be >= 0")
        if self.noise == "exponential" and self.rate <= 0:
            raise DualDenoiseError("lambda must be > 0")
        if self.format not in ("idx", "pgm-dir"):
            raise DualDenoiseError(f"unknown dataset format {self.format!r}")
        if self.loss != "squared":
            raise NotImplementedError(
                f"loss {self.loss!r} not implemented (only 'squared' is)"
            )
        if self.codes_on not in ("clean", "noisy"):
            raise DualDenoiseError(f"codes_on must be clean or noisy")

    def run_id(self, mode: str) -> str:
        blob = mode + "|" + repr(dataclasses.astuple(self))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def config_from_file(path) -> dict:
    """Parse flat ``key=value`` lines; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DualDenoiseError(f"{path}:{lineno}: expected key=value")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key] = val
    return values


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def build_config(file_values: Optional[dict] = None, **cli_values) -> ExperimentConfig:
    """Merge config-file values with CLI values; CLI wins on conflict."""
    merged = {}
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    alias = {"lambda": "rate", "lam": "rate"}
    for source in (file_values or {}), cli_values:
        for key, val in source.items():
            if val is None:
                continue
            name = alias.get(key, key)
            if name not in fields:
                raise DualDenoiseError(f"unknown config key {key!r}")
            if isinstance(val, str):
                typ = fields[name].type
                if typ == "int":
                    val = int(val)
                elif typ == "float":
                    val = float(val)
                elif typ == "bool":
                    low = val.lower()
                    if low in _BOOL_TRUE:
                        val = True
                    elif low in _BOOL_FALSE:
                        val = False
                    else:
                        raise DualDenoiseError(f"bad boolean for {key}: {val!r}")
                elif typ == "tuple":
                    val = tuple(int(x) for x in val.split(","))
            merged[name] = val
    return ExperimentConfig(**merged)


@dataclass
class PreparedData:
    """Normalized train/test splits with their noisy counterparts."""

    conv: ConvSpec
    mean: object
    std: object
    train_clean: ImageTensor
    train_noisy: ImageTensor
    test_clean: ImageTensor
    test_noisy: ImageTensor
    train_patches: object = field(repr=False, default=None)
    test_patches: object = field(repr=False, default=None)
    train_targets: np.ndarray = field(repr=False, default=None)
    test_targets: np.ndarray = field(repr=False, default=None)


def _load_dataset(cfg: ExperimentConfig) -> ImageTensor:
    if cfg.format == "idx":
        return load_idx(cfg.data)
    return load_pgm_dir(cfg.data)


def _add_noise(cfg: ExperimentConfig, images: ImageTensor, seed: int) -> ImageTensor:
    if cfg.noise == "gaussian":
        return add_gaussian_noise(images, cfg.sigma, seed)
    return add_exponential_noise(images, cfg.rate, seed, center=cfg.center_noise)


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load, split, normalize by train statistics, and synthesize noise."""
    raw = _load_dataset(cfg)
    need = cfg.subset + cfg.test_subset
    if raw.count < need:
        raise DualDenoiseError(
            f"dataset has {raw.count} images, need {need} (subset + test_subset)"
        )
    train_raw = ImageTensor(raw.data[: cfg.subset].copy())
    test_raw = ImageTensor(raw.data[cfg.subset : need].copy())
    train_clean, mean, std = normalize_dataset(train_raw, per_pixel=cfg.per_pixel_norm)
    test_clean = apply_normalization(test_raw, mean, std)
    train_noisy = _add_noise(cfg, train_clean, cfg.seed + 1)
    test_noisy = _add_noise(cfg, test_clean, cfg.seed + 2)
    conv = ConvSpec(cfg.kernel)
    prepared = PreparedData(
        conv=conv, mean=mean, std=std,
        train_clean=train_clean, train_noisy=train_noisy,
        test_clean=test_clean, test_noisy=test_noisy,
    )
    prepared.train_patches = extract_patches(train_noisy, conv)
    prepared.test_patches = extract_patches(test_noisy, conv)
    prepared.train_targets = flatten_targets(train_clean)
    prepared.test_targets = flatten_targets(test_clean)
    return prepared


class _Timings:
    def __init__(self):
        self.entries = []

    def add(self, label: str, seconds: float):
        self.entries.append((label, seconds))

    def save(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("phase,seconds\n")
            for label, seconds in self.entries:
                fh.write(f"{label},{seconds:.3f}\n")


def _denoised_images(pred: np.ndarray, like: ImageTensor, mean, std) -> ImageTensor:
    n, h, w = like.shape
    return undo_normalization(unflatten(pred, n, h, w), mean, std)


def _quality(pred: np.ndarray, data: PreparedData, phase: str):
    """MSE / PSNR of the un-normalized reconstruction against the raw images."""
    clean = data.train_clean if phase == "train" else data.test_clean
    recon = _denoised_images(pred, clean, data.mean, data.std)
    target = undo_normalization(clean, data.mean, data.std)
    return mse(recon.data, target.data), psnr(recon.data, target.data)


def _primal_cfg(cfg: ExperimentConfig, row_count: int, seed: int) -> PrimalConfig:
    batch = cfg.batch if cfg.batch > 0 else row_count
    steps_per_epoch = max(1, math.ceil(row_count / batch))
    return PrimalConfig(
        filters=cfg.filters,
        beta=cfg.beta,
        learning_rate=cfg.lr_primal,
        max_iters=cfg.epochs * steps_per_epoch,
        batch_size=cfg.batch,
        residual=cfg.residual,
        seed=seed,
        eval_every=cfg.eval_every,
    )


def _dual_cfg(cfg: ExperimentConfig) -> DualConfig:
    return DualConfig(
        beta=cfg.beta,
        rho=cfg.rho,
        hinge=cfg.hinge,
        learning_rate=cfg.lr_dual,
        max_iters=cfg.dual_iters,
        feasibility_tol=cfg.feasibility_tol,
        seed=cfg.seed,
        continuation=cfg.continuation,
    )


def _primal_active(weights: PrimalWeights) -> int:
    paths = np.linalg.norm(weights.u, axis=1) * np.abs(weights.v)
    return int(np.sum(paths > 1e-8))


def train_primal_run(cfg: ExperimentConfig, data: PreparedData, writer, run_id,
                     seed: Optional[int] = None):
    """Train the non-convex network, streaming metrics rows."""
    pcfg = _primal_cfg(cfg, data.train_patches.row_count, cfg.seed if seed is None else seed)
    p_train = data.train_patches.row_count
    p_test = data.test_patches.row_count

    def monitor(iteration, weights):
        if writer is None:
            return
        train_pred = primal_forward(weights, data.train_patches, cfg.residual)
        obj = primal_objective(weights, data.train_patches, data.train_targets,
                               cfg.beta, cfg.residual)
        m_tr, p_tr = _quality(train_pred, data, "train")
        writer.write(MetricsRecord(run_id, "train", iteration, obj / p_train, obj,
                                   0.0, _primal_active(weights), m_tr, p_tr))
        test_pred = primal_forward(weights, data.test_patches, cfg.residual)
        obj_t = primal_objective(weights, data.test_patches, data.test_targets,
                                 cfg.beta, cfg.residual)
        m_te, p_te = _quality(test_pred, data, "test")
        writer.write(MetricsRecord(run_id, "test", iteration, obj_t / p_test, obj_t,
                                   0.0, _primal_active(weights), m_te, p_te))

    return train_primal(data.train_patches, data.train_targets, pcfg, monitor=monitor)


def train_dual_run(cfg: ExperimentConfig, data: PreparedData, writer, run_id,
                   patterns: Optional[SignPatternSet] = None,
                   init: Optional[DualWeights] = None):
    """Train the convex network, streaming metrics rows."""
    if patterns is None:
        patterns = sample_patterns(data.train_patches, cfg.patterns, cfg.seed + 3)
    dcfg = _dual_cfg(cfg)
    p_train = data.train_patches.row_count
    p_test = data.test_patches.row_count
    last_recorded = {"index": -1}

    def record_row(history_index, weights):
        train_pred = dual_predict(weights, patterns, data.train_patches)
        r = train_pred - data.train_targets
        obj = 0.5 * float(r @ r) + cfg.beta * (
            np.linalg.norm(weights.w, axis=1).sum()
            + np.linalg.norm(weights.z, axis=1).sum()
        )
        viol = constraint_violation(weights, patterns, data.train_patches)
        m_tr, p_tr = _quality(train_pred, data, "train")
        writer.write(MetricsRecord(run_id, "train", history_index, obj / p_train,
                                   obj, viol, active_group_count(weights), m_tr, p_tr))
        test_pred = dual_predict(weights, patterns, data.test_patches)
        obj_t = dual_objective_unpenalized(weights, patterns, data.test_patches,
                                           data.test_targets, cfg.beta)
        viol_t = constraint_violation(weights, patterns, data.test_patches)
        m_te, p_te = _quality(test_pred, data, "test")
        writer.write(MetricsRecord(run_id, "test", history_index, obj_t / p_test,
                                   obj_t, viol_t, active_group_count(weights),
                                   m_te, p_te))
        last_recorded["index"] = history_index

    monitor = record_row if writer is not None else None
    if cfg.dual_backend == "prox":
        solution = train_dual_prox(data.train_patches, data.train_targets, patterns,
                                   dcfg, init=init, monitor=monitor,
                                   monitor_every=cfg.eval_every)
    elif cfg.dual_backend == "adam":
        solution = train_dual_adam(data.train_patches, data.train_targets, patterns,
                                   dcfg, init=init, monitor=monitor,
                                   monitor_every=cfg.eval_every)
    else:
        raise DualDenoiseError(f"unknown dual backend {cfg.dual_backend!r}")
    final_index = solution.objective_history.size - 1
    if writer is not None and last_recorded["index"] != final_index:
        record_row(final_index, solution.weights)
    return solution, patterns


def _export_triptychs(cfg: ExperimentConfig, data: PreparedData, outdir,
                      label: str, pred_test: np.ndarray, count: int = 3):
    os.makedirs(outdir, exist_ok=True)
    n = min(count, data.test_clean.count)
    noisy_raw = undo_normalization(data.test_noisy, data.mean, data.std)
    clean_raw = undo_normalization(data.test_clean, data.mean, data.std)
    recon = _denoised_images(pred_test, data.test_clean, data.mean, data.std)
    for i in range(n):
        save_pgm(os.path.join(outdir, f"test_{label}_{i:03d}_input.pgm"),
                 noisy_raw.data[i], vmin=0.0, vmax=1.0)
        save_pgm(os.path.join(outdir, f"test_{label}_{i:03d}_target.pgm"),
                 clean_raw.data[i], vmin=0.0, vmax=1.0)
        save_pgm(os.path.join(outdir, f"test_{label}_{i:03d}_output.pgm"),
                 recon.data[i], vmin=0.0, vmax=1.0)


def run_experiment(cfg: ExperimentConfig, mode: str = "gap") -> dict:
    """Train primal and/or dual on identical data and export everything.

    ``mode`` is one of "gap" (both networks + gap summary), "primal", or
    "dual". Returns a summary dict (also written as JSON for gap runs).
    """
    if mode not in ("gap", "primal", "dual"):
        raise DualDenoiseError(f"unknown experiment mode {mode!r}")
    os.makedirs(cfg.out, exist_ok=True)
    run_id = cfg.run_id(mode)
    data = prepare_data(cfg)
    timings = _Timings()
    summary = {"run_id": run_id, "mode": mode,
               "train_pixels": data.train_patches.row_count,
               "test_pixels": data.test_patches.row_count}

    with MetricsWriter(os.path.join(cfg.out, "metrics.csv")) as writer:
        if mode in ("gap", "primal"):
            t0 = time.perf_counter()
            run = train_primal_run(cfg, data, writer, run_id)
            timings.add("train_primal", time.perf_counter() - t0)
            save_primal_weights(os.path.join(cfg.out, "primal_weights.bin"),
                                run.weights)
            pred_test = primal_forward(run.weights, data.test_patches, cfg.residual)
            _export_triptychs(cfg, data, os.path.join(cfg.out, "images"),
                              "primal", pred_test)
            summary["primal_objective_raw"] = run.final_objective
            summary["primal_objective_avg"] = (
                run.final_objective / data.train_patches.row_count
            )
        if mode in ("gap", "dual"):
            t0 = time.perf_counter()
            solution, patterns = train_dual_run(cfg, data, writer, run_id)
            timings.add("train_dual", time.perf_counter() - t0)
            save_dual_weights(os.path.join(cfg.out, "dual_weights.bin"),
                              solution.weights)
            save_patterns(os.path.join(cfg.out, "patterns.bin"), patterns)
            save_history_csv(os.path.join(cfg.out, "dual_history.csv"), solution)
            pred_test = dual_predict(solution.weights, patterns, data.test_patches)
            _export_triptychs(cfg, data, os.path.join(cfg.out, "images"),
                              "dual", pred_test)
            unpen = dual_objective_unpenalized(
                solution.weights, patterns, data.train_patches,
                data.train_targets, cfg.beta,
            )
            summary["dual_objective_raw"] = unpen
            summary["dual_objective_avg"] = unpen / data.train_patches.row_count
            summary["dual_objective_penalized"] = solution.final_objective
            summary["dual_violation"] = solution.final_violation
            summary["dual_active_groups"] = solution.active_groups
            summary["dual_patterns_effective"] = patterns.count

    if mode == "gap":
        p = summary["primal_objective_raw"]
        d = summary["dual_objective_raw"]
        summary["relative_gap"] = abs(p - d) / max(abs(d), 1e-300)
        with open(os.path.join(cfg.out, "gap.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)

    timings.save(os.path.join(cfg.out, "timings.csv"))
    if cfg.figures:
        figdir = os.path.join(cfg.out, "figures")
        report.loss_curves(os.path.join(cfg.out, "metrics.csv"),
                           os.path.join(figdir, "loss_curves.png"))
        if mode == "gap":
            report.gap_bars(summary, os.path.join(figdir, "gap.png"))
    return summary


def run_ablation(cfg: ExperimentConfig) -> dict:
    """Dual objective across nested pattern subsets of one master draw.

    Subsets are prefixes in draw order, each run warm-started from the
    previous solution padded with zero groups; with a fixed penalty weight
    that makes the final penalized objective non-increasing by construction
    whenever the solver is monotone.
    """
    os.makedirs(cfg.out, exist_ok=True)
    sizes = sorted(cfg.ablation_sizes)
    data = prepare_data(cfg)
    master = sample_patterns(data.train_patches, sizes[-1], cfg.seed + 3)
    run_id = cfg.run_id("ablate")
    timings = _Timings()
    abl_cfg = replace(cfg, continuation=False, dual_backend="prox")

    rows = []
    prev_weights = None
    prev_count = 0
    for size in sizes:
        subset = master.prefix_by_draws(size)
        init = None
        if prev_weights is not None:
            pad = subset.count - prev_count
            init = DualWeights(
                np.vstack([prev_weights.w, np.zeros((pad, subset.taps))]),
                np.vstack([prev_weights.z, np.zeros((pad, subset.taps))]),
            )
        t0 = time.perf_counter()
        solution, _ = train_dual_run(abl_cfg, data, None, run_id,
                                     patterns=subset, init=init)
        timings.add(f"dual_{size}", time.perf_counter() - t0)
        prev_weights = solution.weights
        prev_count = subset.count
        unpen = dual_objective_unpenalized(
            solution.weights, subset, data.train_patches,
            data.train_targets, cfg.beta,
        )
        rows.append({
            "patterns_requested": size,
            "patterns_effective": subset.count,
            "objective_penalized_raw": solution.final_objective,
            "objective_raw": unpen,
            "objective_avg": unpen / data.train_patches.row_count,
            "violation": solution.final_violation,
            "active_groups": solution.active_groups,
        })

    path = os.path.join(cfg.out, "ablation.csv")
    with open(path, "w", newline="") as fh:
        keys = list(rows[0].keys())
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(
                f"{row[k]:.17g}" if isinstance(row[k], float) else str(row[k])
                for k in keys) + "\n")
    timings.save(os.path.join(cfg.out, "timings.csv"))
    if cfg.figures:
        report.ablation_curve(path, os.path.join(cfg.out, "figures",
                                                 "ablation.png"))
    return {"run_id": run_id, "rows": rows}


def run_robustness(cfg: ExperimentConfig) -> dict:
    """Gaussian vs exponential noise comparison at matched settings."""
    out_root = cfg.out
    results = {}
    for tag, noise_cfg in (
        ("gaussian", replace(cfg, noise="gaussian",
                             out=os.path.join(out_root, "gaussian"))),
        ("exponential", replace(cfg, noise="exponential",
                                out=os.path.join(out_root, "exponential"))),
    ):
        results[tag] = run_experiment(noise_cfg, mode="gap")
    summary = {
        tag: {
            "primal_objective_avg": res["primal_objective_avg"],
            "dual_objective_avg": res["dual_objective_avg"],
            "relative_gap": res["relative_gap"],
        }
        for tag, res in results.items()
    }
    with open(os.path.join(out_root, "robustness.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if cfg.figures:
        report.robustness_curves(
            os.path.join(out_root, "gaussian", "metrics.csv"),
            os.path.join(out_root, "exponential", "metrics.csv"),
            os.path.join(out_root, "figures", "robustness.png"),
        )
    return summary


def run_interpret(cfg: ExperimentConfig, weights_path, patterns_path) -> dict:
    """Cluster codes + k-means label maps + filter frequency responses."""
    from .dual import load_dual_weights
    from .patterns import load_patterns

    os.makedirs(cfg.out, exist_ok=True)
    data = prepare_data(cfg)
    weights = load_dual_weights(weights_path)
    patterns = load_patterns(patterns_path)
    source = data.test_clean if cfg.codes_on == "clean" else data.test_noisy
    patches = extract_patches(source, data.conv)
    codes = cluster_codes(weights, patterns, patches)
    assignment = kmeans(codes, cfg.clusters, seed=cfg.seed)

    n, h, w = source.shape
    label_maps = assignment.labels.reshape(n, h, w)
    imgdir = os.path.join(cfg.out, "images")
    os.makedirs(imgdir, exist_ok=True)
    index_rows = []
    peak = max(1, cfg.clusters - 1)
    for i in range(n):
        name = f"clusters_{i:03d}.pgm"
        save_pgm(os.path.join(imgdir, name), label_maps[i].astype(np.float64),
                 vmin=0.0, vmax=float(peak))
        index_rows.append((name, "cluster_map", i))

    responses = filter_frequency_response(weights, h, w)
    for j in range(responses.shape[0]):
        name = f"filter_response_{j:03d}.pgm"
        save_pgm(os.path.join(imgdir, name), responses[j], vmin=0.0, vmax=1.0)
        index_rows.append((name, "frequency_response", j))

    with open(os.path.join(cfg.out, "interpret_index.csv"), "w", newline="") as fh:
        fh.write("file,kind,index\n")
        for name, kind, idx in index_rows:
            fh.write(f"{name},{kind},{idx}\n")

    summary = {
        "code_length": codes.length,
        "clusters": int(cfg.clusters),
        "inertia": assignment.inertia,
        "active_filters": int(responses.shape[0]),
    }
    with open(os.path.join(cfg.out, "interpret.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if cfg.figures:
        figdir = os.path.join(cfg.out, "figures")
        report.cluster_maps(label_maps, cfg.clusters,
                            os.path.join(figdir, "cluster_maps.png"))
        if responses.shape[0]:
            report.frequency_grid(responses,
                                  os.path.join(figdir, "filter_responses.png"))
    return summary


def run_denoise(cfg: ExperimentConfig, weights_path, patterns_path=None) -> dict:
    """Apply saved weights to the configured dataset's test split."""
    from .dual import load_dual_weights
    from .patterns import load_patterns
    from .primal import load_primal_weights

    os.makedirs(cfg.out, exist_ok=True)
    data = prepare_data(cfg)
    if patterns_path is not None:
        weights = load_dual_weights(weights_path)
        patterns = load_patterns(patterns_path)
        pred = dual_predict(weights, patterns, data.test_patches)
        if cfg.residual:
            pred = pred + data.test_patches.rows[:, data.test_patches.self_index]
        label = "dual"
    else:
        weights = load_primal_weights(weights_path)
        pred = primal_forward(weights, data.test_patches, cfg.residual)
        label = "primal"
    _export_triptychs(cfg, data, os.path.join(cfg.out, "images"), label, pred,
                      count=data.test_clean.count)
    m, p = _quality(pred, data, "test")
    summary = {"network": label, "test_mse": m, "test_psnr": p}
    with open(os.path.join(cfg.out, "denoise.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def make_digits_idx(path, count: int, height: int = 28, width: int = 28,
                    seed: int = 0) -> None:
    """Write the bundled digit images as an IDX file."""
    save_idx(path, bundled_digits(count, height, width, seed))
