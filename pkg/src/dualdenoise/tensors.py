"""Image stacks, zero-padded patch extraction, and a direct convolution oracle.

Layout conventions, fixed once and shared by every module:

* image stacks are ``(N, h, w)`` float64 arrays, image-major then row-major;
* output pixel ``p`` of ``flatten`` order is ``(n, i, j)`` with
  ``p = (n * h + i) * w + j``;
* a patch row is the k x k zero-padded window around its output pixel,
  flattened row-major over the window;
* convolution is cross-correlation (no kernel flip), stride 1, "same"
  padding, so output spatial size always equals input spatial size.

Odd kernels pad symmetrically by ``(k - 1) // 2``. Even kernels are also
accepted, padding ``(k - 1) // 2`` before and ``k // 2`` after on each axis,
which keeps the same-size guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import DualDenoiseError


@dataclass(frozen=True)
class ImageTensor:
    """A dense stack of real-valued images, shape ``(N, h, w)``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DualDenoiseError(f"expected (N, h, w) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DualDenoiseError(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DualDenoiseError("image tensor contains NaN or Inf")
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ConvSpec:
    """First-layer convolution geometry: kernel size, stride-1, same padding."""

    kernel_size: int

    def __post_init__(self):
        k = self.kernel_size
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise DualDenoiseError(f"kernel size must be a positive integer, got {k!r}")
        object.__setattr__(self, "kernel_size", int(k))

    @property
    def pad_before(self) -> int:
        return (self.kernel_size - 1) // 2

    @property
    def pad_after(self) -> int:
        return self.kernel_size // 2

    @property
    def taps(self) -> int:
        """Filter length k^2."""
        return self.kernel_size * self.kernel_size

    @property
    def self_index(self) -> int:
        """Flat window position holding the output pixel's own input value."""
        return self.pad_before * self.kernel_size + self.pad_before


@dataclass(frozen=True)
class PatchMatrix:
    """Flattened zero-padded patches, one row per output pixel.

    ``rows[p]`` is the window around output pixel ``p`` in flatten order;
    ``origin[p] == (n, i, j)`` records where that pixel lives. ``self_index``
    is the column holding the pixel's own value (the window center for odd
    kernels).
    """

    rows: np.ndarray
    origin: np.ndarray = field(repr=False)
    self_index: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DualDenoiseError(f"patch matrix must be 2-D, got shape {rows.shape}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "origin", np.asarray(self.origin))

    @property
    def row_count(self) -> int:
        return self.rows.shape[0]

    @property
    def taps(self) -> int:
        return self.rows.shape[1]


def extract_patches(images: ImageTensor, spec: ConvSpec) -> PatchMatrix:
    """im2col: build the ``(N*h*w, k^2)`` matrix of zero-padded patches.

    Row ``p`` aligns index-for-index with ``flatten_targets``; multiplying by
    a length-``k^2`` filter reproduces :func:`conv2d_direct` exactly.
    """
    k = spec.kernel_size
    n, h, w = images.shape
    if k > min(h, w) + spec.pad_before + spec.pad_after:
        raise DualDenoiseError(
            f"kernel size {k} exceeds padded image extent {min(h, w)} + padding"
        )
    pb = spec.pad_before
    padded = np.pad(
        images.data,
        ((0, 0), (pb, spec.pad_after), (pb, spec.pad_after)),
        mode="constant",
    )
    # Window view: axis order (n, i, j, di, dj) so the row-major flatten of
    # the trailing two axes matches the fixed window order.
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    rows = windows.reshape(n * h * w, k * k).copy()

    ns, is_, js = np.meshgrid(np.arange(n), np.arange(h), np.arange(w), indexing="ij")
    origin = np.stack([ns.ravel(), is_.ravel(), js.ravel()], axis=1)
    return PatchMatrix(rows=rows, origin=origin, self_index=spec.self_index)


def conv2d_direct(images: ImageTensor, filt: np.ndarray, spec: ConvSpec) -> ImageTensor:
    """Same-size 2-D cross-correlation by explicit window loops.

    Deliberately naive: this is the independent oracle that pins down what
    :func:`extract_patches` followed by a matrix-vector product must produce.
    """
    filt = np.asarray(filt, dtype=np.float64).ravel()
    k = spec.kernel_size
    if filt.size != k * k:
        raise DualDenoiseError(f"filter length {filt.size} != k^2 = {k * k}")
    kernel = filt.reshape(k, k)
    n, h, w = images.shape
    pb = spec.pad_before
    padded = np.pad(
        images.data,
        ((0, 0), (pb, spec.pad_after), (pb, spec.pad_after)),
        mode="constant",
    )
    out = np.zeros((n, h, w))
    for ni in range(n):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        acc += padded[ni, i + a, j + b] * kernel[a, b]
                out[ni, i, j] = acc
    return ImageTensor(out)


def flatten_targets(images: ImageTensor) -> np.ndarray:
    """Flatten an image stack to a length ``N*h*w`` vector in patch-row order."""
    return images.data.reshape(-1).copy()


def unflatten(vector: np.ndarray, count: int, height: int, width: int) -> ImageTensor:
    """Inverse of :func:`flatten_targets`; round-trips exactly."""
    vec = np.asarray(vector, dtype=np.float64)
    if vec.size != count * height * width:
        raise DualDenoiseError(
            f"vector length {vec.size} != {count}x{height}x{width}"
        )
    return ImageTensor(vec.reshape(count, height, width).copy())
