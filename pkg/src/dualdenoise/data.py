"""Dataset ingestion, noise synthesis, and image export.

Supports the classic big-endian IDX container (magic 0x00000803, unsigned
bytes scaled to [0, 1]) and binary PGM (P5, maxval 255). A bundled
handwritten-digit set (upscaled to any requested resolution) stands in for
external datasets in offline environments.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .common import DualDenoiseError, FormatError
from .tensors import ImageTensor

IDX_IMAGE_MAGIC = 0x00000803
_MAX_DIM = 1 << 24  # anything larger is a corrupt header, not a real dataset


def load_idx(path) -> ImageTensor:
    """Parse an IDX image file into a float stack scaled to [0, 1]."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise FormatError(f"{path}: truncated IDX header ({len(header)} bytes)")
        magic, n, h, w = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        if min(n, h, w) < 1 or max(n, h, w) > _MAX_DIM:
            raise FormatError(f"{path}: dimension overflow ({n}, {h}, {w})")
        body = fh.read(n * h * w)
        if len(body) != n * h * w:
            raise FormatError(
                f"{path}: truncated body, expected {n * h * w} bytes, got {len(body)}"
            )
    pixels = np.frombuffer(body, dtype=np.uint8).astype(np.float64) / 255.0
    return ImageTensor(pixels.reshape(n, h, w))


def save_idx(path, images: ImageTensor) -> None:
    """Quantize [0, 1] floats to bytes and write the IDX container."""
    n, h, w = images.shape
    data = np.clip(np.rint(images.data * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, h, w))
        fh.write(data.tobytes())


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) as a float image in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5), got {fields[0]!r}")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise FormatError(f"{path}: truncated PGM body")
    pixels = np.frombuffer(body, dtype=np.uint8).astype(np.float64) / 255.0
    return pixels.reshape(height, width)


def save_pgm(path, image: np.ndarray, vmin=None, vmax=None) -> None:
    """Write a float image as binary PGM.

    With ``vmin``/``vmax`` the affine map [vmin, vmax] -> [0, 255] is used
    (values clipped); otherwise the image's own min-max range is stretched.
    A constant image without explicit bounds is clipped to [0, 1] directly
    so exact byte levels round-trip.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DualDenoiseError(f"PGM export needs a 2-D image, got {img.shape}")
    if vmin is None and vmax is None:
        lo, hi = float(img.min()), float(img.max())
        if hi <= lo:
            scaled = np.clip(img, 0.0, 1.0)
        else:
            scaled = (img - lo) / (hi - lo)
    else:
        lo = 0.0 if vmin is None else float(vmin)
        hi = 1.0 if vmax is None else float(vmax)
        if hi <= lo:
            raise DualDenoiseError(f"empty export range [{lo}, {hi}]")
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    data = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm_dir(path) -> ImageTensor:
    """Stack every .pgm in a directory, sorted by name; sizes must match."""
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".pgm"))
    if not names:
        raise FormatError(f"{path}: no .pgm files found")
    frames = [load_pgm(os.path.join(path, name)) for name in names]
    shape = frames[0].shape
    for name, frame in zip(names, frames):
        if frame.shape != shape:
            raise FormatError(f"{path}/{name}: size {frame.shape} != {shape}")
    return ImageTensor(np.stack(frames))


def normalize_dataset(images: ImageTensor, per_pixel: bool = False):
    """Standardize by dataset statistics; returns (normalized, mean, std).

    Scalar statistics over every pixel by default; ``per_pixel`` switches to
    position-wise maps (which reject datasets with constant pixels).
    """
    data = images.data
    if per_pixel:
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        if np.any(std <= 0):
            raise DualDenoiseError("per-pixel normalization hit zero variance")
    else:
        mean = float(data.mean())
        std = float(data.std())
        if std <= 0:
            raise DualDenoiseError("dataset has zero variance")
    return ImageTensor((data - mean) / std), mean, std


def apply_normalization(images: ImageTensor, mean, std) -> ImageTensor:
    """Apply recorded statistics (e.g. train stats to the test split)."""
    return ImageTensor((images.data - mean) / std)


def undo_normalization(images: ImageTensor, mean, std) -> ImageTensor:
    return ImageTensor(images.data * std + mean)


def add_gaussian_noise(images: ImageTensor, sigma: float, seed: int) -> ImageTensor:
    if sigma < 0:
        raise DualDenoiseError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return ImageTensor(images.data.copy())
    rng = np.random.default_rng(seed)
    return ImageTensor(images.data + rng.normal(0.0, sigma, size=images.shape))


def add_exponential_noise(
    images: ImageTensor, rate: float, seed: int, center: bool = False
) -> ImageTensor:
    """Add i.i.d. Exponential(rate) noise (mean 1/rate, variance 1/rate^2).

    The noise is non-negative and skewed; ``center`` subtracts the mean
    1/rate for sensitivity checks.
    """
    if rate <= 0:
        raise DualDenoiseError(f"rate must be > 0, got {rate}")
    rng = np.random.default_rng(seed)
    noise = rng.exponential(1.0 / rate, size=images.shape)
    if center:
        noise -= 1.0 / rate
    return ImageTensor(images.data + noise)


def bundled_digits(count: int, height: int = 28, width: int = 28,
                   seed: int = 0) -> ImageTensor:
    """Real handwritten digits from scikit-learn, resampled to the target size.

    Offline stand-in for external digit datasets: the 8x8 originals are
    bicubically upscaled and clipped back to [0, 1]. Selection order is a
    seeded shuffle so subsets are representative of all ten digits.
    """
    from scipy.ndimage import zoom
    from sklearn.datasets import load_digits

    raw = load_digits().images / 16.0
    if count > raw.shape[0]:
        raise DualDenoiseError(
            f"bundled digit set has {raw.shape[0]} images, requested {count}"
        )
    rng = np.random.default_rng(seed)
    picks = rng.permutation(raw.shape[0])[:count]
    out = np.empty((count, height, width))
    for i, idx in enumerate(picks):
        scaled = zoom(raw[idx], (height / 8.0, width / 8.0), order=3,
                      grid_mode=True, mode="grid-constant")
        out[i] = np.clip(scaled, 0.0, 1.0)
    return ImageTensor(out)
