"""Trajectory error metrics in the local horizontal frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geodesy import ecef_to_geodetic, enu_rotation
from .types import Trajectory

__all__ = ["ErrorMetrics", "evaluate"]


@dataclass(frozen=True)
class ErrorMetrics:
    """Per-run position error summary against ground truth.

    Horizontal (2D east-north) errors are the headline numbers; 3D errors
    are carried alongside. `epoch_indices` aligns the per-epoch series.
    """

    mean_2d: float
    std_2d: float
    max_2d: float
    mean_3d: float
    std_3d: float
    max_3d: float
    epoch_indices: np.ndarray
    east: np.ndarray
    north: np.ndarray
    up: np.ndarray

    @property
    def horizontal(self) -> np.ndarray:
        return np.hypot(self.east, self.north)

    def table(self) -> str:
        return "\n".join([
            f"MEAN 2D error: {self.mean_2d:.4f} m",
            f"STD  2D error: {self.std_2d:.4f} m",
            f"MAX  2D error: {self.max_2d:.4f} m",
            f"MEAN 3D error: {self.mean_3d:.4f} m",
            f"STD  3D error: {self.std_3d:.4f} m",
            f"MAX  3D error: {self.max_3d:.4f} m",
        ])


def evaluate(estimated: Trajectory, truth: Trajectory) -> ErrorMetrics:
    """Horizontal/3D error statistics over the epochs both trajectories share.

    Differences are taken in ECEF, rotated into the east-north-up frame at
    the centroid of the shared ground-truth positions; statistics are the
    population mean/std and max over epochs.
    """
    truth_by_index = truth.by_index()
    shared = [(s, truth_by_index[s.epoch.index]) for s in estimated
              if s.epoch.index in truth_by_index]
    if not shared:
        raise ValueError("trajectories share no epochs")

    truth_positions = np.array([t.position for _, t in shared])
    centroid = truth_positions.mean(axis=0)
    rot = enu_rotation(ecef_to_geodetic(centroid))

    differences = np.array([e.position - t.position for e, t in shared])
    enu = differences @ rot.T
    horizontal = np.hypot(enu[:, 0], enu[:, 1])
    full = np.linalg.norm(enu, axis=1)

    return ErrorMetrics(
        mean_2d=float(horizontal.mean()),
        std_2d=float(horizontal.std()),
        max_2d=float(horizontal.max()),
        mean_3d=float(full.mean()),
        std_3d=float(full.std()),
        max_3d=float(full.max()),
        epoch_indices=np.array([e.epoch.index for e, _ in shared]),
        east=enu[:, 0],
        north=enu[:, 1],
        up=enu[:, 2],
    )
