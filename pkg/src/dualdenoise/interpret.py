"""Reading a trained dual network: codes, clusters, filters, stacking.

Every output pixel's prediction is a sum of inner products with the filters
of the patterns active at that pixel, so the binary vector of those
memberships (restricted to patterns whose filter difference is nonzero) is a
complete description of which linear map the network applies there. Pixels
are clustered on these codes; the filters themselves are summarized by the
magnitude of their zero-padded discrete Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .common import DualDenoiseError, GROUP_ZERO_TOL
from .dual import DualConfig, DualSolution, DualWeights, dual_predict, train_dual_prox
from .patterns import SignPatternSet, sample_patterns
from .tensors import ConvSpec, ImageTensor, PatchMatrix, extract_patches, flatten_targets, unflatten


@dataclass(frozen=True)
class ClusterCodes:
    """Per-pixel activation codes over the active patterns.

    ``bits[p, j]`` is the mask bit of active pattern ``j`` at pixel ``p``;
    ``pattern_index[j]`` maps the column back into the full pattern set.
    """

    bits: np.ndarray
    pattern_index: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2 or not np.isin(bits, (0, 1)).all():
            raise DualDenoiseError("codes must be a 2-D array of 0/1 bits")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "pattern_index", np.asarray(self.pattern_index))

    @property
    def pixel_count(self) -> int:
        return self.bits.shape[0]

    @property
    def length(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float

    def __post_init__(self):
        if self.labels.min(initial=0) < 0 or (
            self.labels.size and self.labels.max() >= self.centroids.shape[0]
        ):
            raise DualDenoiseError("cluster labels out of range")
        if self.inertia < 0:
            raise DualDenoiseError("inertia must be >= 0")


def cluster_codes(
    solution, patterns: SignPatternSet, patches: PatchMatrix,
    tol: float = GROUP_ZERO_TOL,
) -> ClusterCodes:
    """Mask bits restricted to patterns with nonzero filter difference.

    A pattern counts as active when ``||w_i - z_i|| > tol``, the quantity
    that actually enters the prediction.
    """
    weights = solution.weights if isinstance(solution, DualSolution) else solution
    diff_norm = np.linalg.norm(weights.difference(), axis=1)
    active = np.flatnonzero(diff_norm > tol)
    masks = patterns.masks_for(patches)
    return ClusterCodes(
        bits=masks[:, active].astype(np.uint8), pattern_index=active
    )


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances (n, k) via the expanded inner product."""
    sq = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    np.maximum(sq, 0.0, out=sq)
    return sq


def _kmeans_pp_seeds(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    dist = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0:
            centroids[j:] = points[rng.integers(n, size=k - j)]
            break
        centroids[j] = points[rng.choice(n, p=dist / total)]
        dist = np.minimum(dist, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    codes, k: int, seed: int = 0, max_iters: int = 100
) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding on binary (or real) vectors.

    Deterministic per seed. Empty clusters are reseeded to the point
    farthest from its current centroid. Inertia is checked to be
    non-increasing on every run.
    """
    points = codes.bits.astype(np.float64) if isinstance(codes, ClusterCodes) else np.asarray(codes, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise DualDenoiseError("kmeans needs a non-empty 2-D point array")
    n = points.shape[0]
    if k < 1:
        raise DualDenoiseError(f"cluster count must be >= 1, got {k}")
    k = min(k, n)
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seeds(points, k, rng)

    prev_inertia = np.inf
    prev_labels = None
    for _ in range(max_iters):
        sq = _sq_distances(points, centroids)
        labels = sq.argmin(axis=1)
        inertia = float(sq[np.arange(n), labels].sum())
        assert inertia <= prev_inertia + 1e-9, "k-means inertia increased"
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        new_centroids = centroids.copy()
        for j in range(k):
            member = labels == j
            if member.any():
                new_centroids[j] = points[member].mean(axis=0)
            else:
                far = sq[np.arange(n), labels].argmax()
                new_centroids[j] = points[far]
        centroids = new_centroids
        prev_labels = labels
        prev_inertia = inertia

    sq = _sq_distances(points, centroids)
    labels = sq.argmin(axis=1)
    inertia = float(sq[np.arange(n), labels].sum())
    return ClusterAssignment(labels=labels, centroids=centroids, inertia=inertia)


def filter_frequency_response(
    solution, height: int, width: int,
    tol: float = GROUP_ZERO_TOL, normalize: bool = True,
) -> np.ndarray:
    """DC-centered DFT magnitude of each active w-filter, zero-padded.

    Each k x k filter is embedded in an ``height x width`` zero grid before
    the transform (the standard finite-impulse-response evaluation); output
    shape is (n_active, height, width). With ``normalize`` each response is
    scaled into [0, 1] for image export; all-zero filters stay all zero.
    """
    weights = solution.weights if isinstance(solution, DualSolution) else solution
    k = int(round(np.sqrt(weights.taps)))
    if k * k != weights.taps:
        raise DualDenoiseError(f"filter length {weights.taps} is not a square")
    if k > min(height, width):
        raise DualDenoiseError(f"kernel {k} larger than target grid {height}x{width}")
    norms = np.linalg.norm(weights.w, axis=1)
    active = np.flatnonzero(norms > tol)
    out = np.zeros((active.size, height, width))
    for row, i in enumerate(active):
        grid = np.zeros((height, width))
        grid[:k, :k] = weights.w[i].reshape(k, k)
        mag = np.abs(np.fft.fftshift(np.fft.fft2(grid)))
        peak = mag.max()
        if normalize and peak > 0:
            mag = mag / peak
        out[row] = mag
    return out


@dataclass(frozen=True)
class DenoiserBlock:
    """A trained dual block: geometry, patterns, weights, skip flag."""

    conv: ConvSpec
    patterns: SignPatternSet
    solution: DualSolution
    residual: bool = False

    def predict(self, images: ImageTensor) -> ImageTensor:
        patches = extract_patches(images, self.conv)
        pred = dual_predict(self.solution.weights, self.patterns, patches)
        if self.residual:
            pred = pred + flatten_targets(images)
        n, h, w = images.shape
        return unflatten(pred, n, h, w)

    def codes(self, images: ImageTensor) -> ClusterCodes:
        patches = extract_patches(images, self.conv)
        return cluster_codes(self.solution, self.patterns, patches)


@dataclass
class StackConfig:
    """Settings for training the next block on the previous block's output."""

    pattern_count: int
    dual: DualConfig
    residual: bool = False
    seed: int = 0


def greedy_stack(
    block1: DenoiserBlock,
    images: ImageTensor,
    targets: ImageTensor,
    cfg: StackConfig,
):
    """Train a second block on block 1's output, keeping block 1 frozen.

    Returns ``(block2, codes1, codes2)`` where the codes are the per-pixel
    activation codes of each block on its own input, ready for the
    per-stage clustering comparison.
    """
    mid = block1.predict(images)
    patches2 = extract_patches(mid, block1.conv)
    patterns2 = sample_patterns(patches2, cfg.pattern_count, cfg.seed)
    labels = flatten_targets(targets)
    if cfg.residual:
        labels = labels - flatten_targets(mid)
    solution2 = train_dual_prox(patches2, labels, patterns2, cfg.dual)
    block2 = DenoiserBlock(
        conv=block1.conv, patterns=patterns2, solution=solution2,
        residual=cfg.residual,
    )
    return block2, block1.codes(images), block2.codes(mid)
