"""Two-layer convolutional ReLU denoisers, trained two equivalent ways.

The same squared-loss, weight-decay training problem is solved either
directly over network weights (non-convex, Adam) or as a convex group-lasso
program over ReLU activation patterns with cone constraints. The convex
side certifies the optimum, exposes which patterns drive each pixel, and
maps back to network filters exactly.
"""

from .common import DivergenceError, DualDenoiseError, FormatError, GROUP_ZERO_TOL
from .tensors import (
    ConvSpec,
    ImageTensor,
    PatchMatrix,
    conv2d_direct,
    extract_patches,
    flatten_targets,
    unflatten,
)
from .patterns import (
    SignPatternSet,
    activation_masks,
    apply_masks,
    enumerate_patterns_exact,
    load_patterns,
    matrix_rank,
    pattern_count_bound,
    sample_patterns,
    save_patterns,
)
from .primal import (
    AdamState,
    PrimalConfig,
    PrimalRun,
    PrimalWeights,
    adam_step,
    init_kaiming_uniform,
    load_primal_weights,
    primal_forward,
    primal_gradient,
    primal_objective,
    rescale_weights,
    save_primal_weights,
    train_primal,
)
from .dual import (
    DualConfig,
    DualSolution,
    DualWeights,
    active_group_count,
    constraint_violation,
    dual_objective,
    dual_objective_unpenalized,
    dual_predict,
    dual_predict_pixelwise,
    dual_to_primal,
    group_soft_threshold,
    load_dual_weights,
    save_dual_weights,
    save_history_csv,
    train_dual_adam,
    train_dual_prox,
)
from .interpret import (
    ClusterAssignment,
    ClusterCodes,
    DenoiserBlock,
    StackConfig,
    cluster_codes,
    filter_frequency_response,
    greedy_stack,
    kmeans,
)
from .data import (
    add_exponential_noise,
    add_gaussian_noise,
    bundled_digits,
    load_idx,
    load_pgm,
    load_pgm_dir,
    normalize_dataset,
    save_idx,
    save_pgm,
)
from .metrics import MetricsRecord, mse, psnr
from .experiment import (
    ExperimentConfig,
    build_config,
    make_digits_idx,
    prepare_data,
    run_ablation,
    run_denoise,
    run_experiment,
    run_interpret,
    run_robustness,
)

__version__ = "0.1.0"
