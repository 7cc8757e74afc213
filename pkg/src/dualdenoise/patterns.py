"""ReLU activation patterns over a patch matrix.

A pattern is the boolean vector ``mask[p] = (y_p . g >= 0)`` induced by a
generator direction ``g``; ties count as active. Patterns are stored by
generator so huge mask matrices never have to live in memory; masks are
recomputed in bounded chunks by one canonical routine, which makes the
on-the-fly and materialized paths bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from math import e as _E
from typing import Optional

import numpy as np

from .common import DualDenoiseError, RANK_RTOL
from .tensors import PatchMatrix

# Masks are materialized in chunks of at most this many matrix entries.
_CHUNK_ENTRIES = 1 << 22

# Sets whose full mask matrix stays below this entry count keep it cached.
_CACHE_ENTRIES = 1 << 26


def _pattern_chunks(row_count: int, pattern_count: int):
    """Yield (start, stop) pattern index ranges of bounded mask size."""
    step = max(1, min(pattern_count, _CHUNK_ENTRIES // max(1, row_count)))
    for start in range(0, pattern_count, step):
        yield start, min(start + step, pattern_count)


def activation_masks(rows: np.ndarray, generators: np.ndarray) -> np.ndarray:
    """Boolean mask matrix ``(P, count)``: ``rows @ generators.T >= 0``.

    The single source of truth for mask bits; every caller goes through here
    so recomputation is idempotent.
    """
    rows = np.asarray(rows, dtype=np.float64)
    generators = np.asarray(generators, dtype=np.float64)
    out = np.empty((rows.shape[0], generators.shape[0]), dtype=bool)
    for start, stop in _pattern_chunks(rows.shape[0], generators.shape[0]):
        out[:, start:stop] = rows @ generators[start:stop].T >= 0.0
    return out


@dataclass(frozen=True)
class SignPatternSet:
    """Deduplicated activation patterns, stored by generator vector.

    ``masks`` is an optional cache of the bool mask matrix on the patch
    matrix the set was built from; it is dropped for large instances.
    ``draw_index`` records which raw draw each kept generator came from, so
    nested subsets of one master draw can be reconstructed exactly.
    """

    generators: np.ndarray
    masks: Optional[np.ndarray] = field(default=None, repr=False)
    draw_index: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        gen = np.asarray(self.generators, dtype=np.float64)
        if gen.ndim != 2:
            raise DualDenoiseError(f"generators must be 2-D, got shape {gen.shape}")
        object.__setattr__(self, "generators", gen)

    @property
    def count(self) -> int:
        return self.generators.shape[0]

    @property
    def taps(self) -> int:
        return self.generators.shape[1]

    def masks_for(self, patches: PatchMatrix) -> np.ndarray:
        """Mask matrix on ``patches``, using the cache when it applies."""
        if self.masks is not None and self.masks.shape[0] == patches.row_count:
            return self.masks
        return activation_masks(patches.rows, self.generators)

    def subset(self, count: int) -> "SignPatternSet":
        """First ``count`` patterns, preserving first-occurrence order."""
        if not 0 <= count <= self.count:
            raise DualDenoiseError(f"subset size {count} out of range")
        masks = None if self.masks is None else self.masks[:, :count]
        draws = None if self.draw_index is None else self.draw_index[:count]
        return SignPatternSet(self.generators[:count].copy(), masks, draws)

    def prefix_by_draws(self, draws: int) -> "SignPatternSet":
        """Patterns first seen within the first ``draws`` raw samples.

        Because deduplication keeps first occurrences in draw order, this
        equals what sampling only ``draws`` generators would have produced,
        and it is a prefix of this set's pattern list.
        """
        if self.draw_index is None:
            raise DualDenoiseError("this set does not carry draw indices")
        return self.subset(int(np.searchsorted(self.draw_index, draws)))


def _mask_keys(masks: np.ndarray):
    """Hashable per-pattern key for dedup; exact bit identity."""
    p = masks.shape[0]
    if p <= 64:
        codes = masks.T.astype(np.uint64) @ (np.uint64(1) << np.arange(p, dtype=np.uint64))
        return [int(c) for c in codes]
    packed = np.packbits(masks.T, axis=1)
    return [row.tobytes() for row in packed]


def _dedup_generators(rows: np.ndarray, generators: np.ndarray):
    """Keep the first generator for each distinct mask, in draw order."""
    seen = set()
    keep = []
    step = max(1, _CHUNK_ENTRIES // max(1, rows.shape[0]))
    for start in range(0, generators.shape[0], step):
        block = generators[start : start + step]
        masks = activation_masks(rows, block)
        for local, key in enumerate(_mask_keys(masks)):
            if key not in seen:
                seen.add(key)
                keep.append(start + local)
    keep = np.array(keep, dtype=np.intp)
    return generators[keep], keep


def _finish_set(rows: np.ndarray, generators: np.ndarray,
                draw_index: np.ndarray) -> SignPatternSet:
    masks = None
    if rows.shape[0] * max(1, generators.shape[0]) <= _CACHE_ENTRIES:
        masks = activation_masks(rows, generators)
    return SignPatternSet(generators, masks, draw_index)


def sample_patterns(patches: PatchMatrix, requested: int, seed: int) -> SignPatternSet:
    """Draw ``requested`` standard-normal generators and deduplicate masks.

    Deterministic for a fixed seed. Duplicate-heavy data simply yields fewer
    than ``requested`` patterns.
    """
    if requested < 1:
        raise DualDenoiseError(f"requested pattern count must be >= 1, got {requested}")
    rng = np.random.default_rng(seed)
    generators = rng.standard_normal((requested, patches.taps))
    kept, draw_index = _dedup_generators(patches.rows, generators)
    return _finish_set(patches.rows, kept, draw_index)


# Vertex probing is skipped when the subset count blows past this budget.
_PROBE_BUDGET = 400_000


def _vertex_probes(rows: np.ndarray) -> np.ndarray:
    """Deterministic directions adjacent to every arrangement vertex line.

    In a generic central arrangement every full-dimensional cell has an
    extreme ray lying on r - 1 of the hyperplanes, so probing both sides of
    each such intersection with every local sign combination reaches cells
    whose solid angle is too small for random draws. Pure linear algebra;
    returns an empty array when the combinatorial budget is exceeded.
    """
    from itertools import combinations
    from math import comb

    p, d = rows.shape
    u, sv, vt = np.linalg.svd(rows, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros((0, d))
    r = int(np.sum(sv > RANK_RTOL * sv[0]))
    basis = vt[:r]  # row-space coordinates
    reduced = rows @ basis.T  # (p, r) hyperplane normals in R^r
    if r == 1:
        probes_r = np.array([[1.0], [-1.0]])
        return probes_r @ basis
    if comb(p, r - 1) * (1 << (r - 1)) > _PROBE_BUDGET:
        return np.zeros((0, d))

    signs = np.array(
        [[1.0 if (i >> j) & 1 else -1.0 for j in range(r - 1)]
         for i in range(1 << (r - 1))]
    )
    probes = []
    for subset in combinations(range(p), r - 1):
        sub = reduced[list(subset)]
        _, sub_sv, sub_vt = np.linalg.svd(sub, full_matrices=True)
        ray = sub_vt[-1]  # null direction of the r-1 chosen normals
        ray = ray / np.linalg.norm(ray)
        off = reduced @ ray
        others = np.delete(np.abs(off), list(subset))
        if others.size == 0 or others.min() <= 0.0:
            continue
        correction = np.linalg.pinv(sub) @ signs.T  # (r, 2^(r-1))
        corr_scale = np.abs(reduced @ correction).max()
        eps = 0.5 * others.min() / max(corr_scale, 1e-300)
        local = ray[None, :] + eps * correction.T
        probes.append(local)
        probes.append(-local)
    if not probes:
        return np.zeros((0, d))
    return np.vstack(probes) @ basis


def enumerate_patterns_exact(
    patches: PatchMatrix, draws: int, seed: int = 0
) -> SignPatternSet:
    """Dense random-direction enumeration for tiny instances (P <= 64).

    Standard-normal draws are augmented with deterministic probes next to
    every arrangement vertex, which rescues cells whose solid angle is too
    small to hit by chance; on generic-position data the union recovers the
    full cell set. The count can be checked against
    :func:`pattern_count_bound`.
    """
    if patches.row_count > 64:
        raise DualDenoiseError(
            f"exact enumeration limited to P <= 64 rows, got {patches.row_count}"
        )
    if draws < 10**5:
        raise DualDenoiseError(f"enumeration needs >= 1e5 draws, got {draws}")
    rng = np.random.default_rng(seed)
    generators = np.vstack([
        _vertex_probes(patches.rows),
        rng.standard_normal((draws, patches.taps)),
    ])
    kept, draw_index = _dedup_generators(patches.rows, generators)
    return _finish_set(patches.rows, kept, draw_index)


def pattern_count_bound(row_count: int, rank: int) -> float:
    """Upper bound ``2 r (e (P - 1) / r)^r`` on the number of patterns."""
    if rank < 1:
        raise DualDenoiseError(f"rank must be >= 1, got {rank}")
    if row_count < 2:
        raise DualDenoiseError(f"row count must be >= 2, got {row_count}")
    return 2.0 * rank * (_E * (row_count - 1) / rank) ** rank


def matrix_rank(rows: np.ndarray) -> int:
    """Numerical rank with threshold ``1e-10 * sigma_max``."""
    sv = np.linalg.svd(np.asarray(rows, dtype=np.float64), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def apply_masks(
    patterns: SignPatternSet, patches: PatchMatrix, weights: np.ndarray
) -> np.ndarray:
    """Masked sum ``sum_i D_i Y' w_i`` as a length-P vector.

    Masks come from the cache when available and are recomputed from the
    generators otherwise; both paths share :func:`activation_masks`.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (patterns.count, patterns.taps):
        raise DualDenoiseError(
            f"weights shape {weights.shape} != ({patterns.count}, {patterns.taps})"
        )
    if patches.taps != patterns.taps:
        raise DualDenoiseError(
            f"patch taps {patches.taps} != pattern taps {patterns.taps}"
        )
    masks = patterns.masks_for(patches)
    out = np.zeros(patches.row_count)
    for start, stop in _pattern_chunks(patches.row_count, patterns.count):
        scores = patches.rows @ weights[start:stop].T
        scores *= masks[:, start:stop]
        out += scores.sum(axis=1)
    return out


_PATTERN_MAGIC = b"DDSP"


def save_patterns(path, patterns: SignPatternSet) -> None:
    """Flat binary: magic, count, taps (little-endian int64), then generators."""
    with open(path, "wb") as fh:
        fh.write(_PATTERN_MAGIC)
        fh.write(struct.pack("<qq", patterns.count, patterns.taps))
        fh.write(np.ascontiguousarray(patterns.generators, dtype="<f8").tobytes())


def load_patterns(path) -> SignPatternSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _PATTERN_MAGIC:
            raise DualDenoiseError(f"bad pattern file magic {magic!r}")
        count, taps = struct.unpack("<qq", fh.read(16))
        body = fh.read(8 * count * taps)
        if len(body) != 8 * count * taps:
            raise DualDenoiseError("truncated pattern file")
        generators = np.frombuffer(body, dtype="<f8").reshape(count, taps).copy()
    return SignPatternSet(generators)
