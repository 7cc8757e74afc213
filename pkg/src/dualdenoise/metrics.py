"""Reconstruction quality measures and the experiment metrics table."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .common import DualDenoiseError

METRICS_HEADER = (
    "run_id,phase,iteration,objective_avg,objective_raw,"
    "constraint_violation,active_groups,mse,psnr"
)


def mse(prediction: np.ndarray, reference: np.ndarray) -> float:
    prediction = np.asarray(prediction, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if prediction.shape != reference.shape:
        raise DualDenoiseError(
            f"shape mismatch {prediction.shape} vs {reference.shape}"
        )
    diff = prediction - reference
    return float(np.mean(diff * diff))


def psnr(prediction: np.ndarray, reference: np.ndarray,
         peak: Optional[float] = None) -> float:
    """10 log10(peak^2 / mse); +inf when the images are identical.

    ``peak`` defaults to the reference's max minus min.
    """
    err = mse(prediction, reference)
    if err == 0.0:
        return math.inf
    if peak is None:
        reference = np.asarray(reference, dtype=np.float64)
        peak = float(reference.max() - reference.min())
    if peak <= 0:
        raise DualDenoiseError(f"peak must be > 0, got {peak}")
    return 10.0 * math.log10(peak * peak / err)


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation point of one training run."""

    run_id: str
    phase: str  # "train" or "test"
    iteration: int
    objective_avg: float  # objective / (N h w) of the phase's data
    objective_raw: float
    constraint_violation: float
    active_groups: int
    mse: float
    psnr: float

    def csv_row(self) -> str:
        return (
            f"{self.run_id},{self.phase},{self.iteration},"
            f"{self.objective_avg:.17g},{self.objective_raw:.17g},"
            f"{self.constraint_violation:.17g},{self.active_groups},"
            f"{self.mse:.17g},{self.psnr:.17g}"
        )


class MetricsWriter:
    """Append-only CSV writer, flushed per record for crash legibility."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._fh.write(METRICS_HEADER + "\n")
        self._fh.flush()

    def write(self, record: MetricsRecord) -> None:
        self._fh.write(record.csv_row() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
