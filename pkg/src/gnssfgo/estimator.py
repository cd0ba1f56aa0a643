"""Scikit-learn style facade over the batch positioning solver.

`GnssBatchEstimator` exposes the solver through the familiar
fit/predict/score/get_params surface so it can be dropped into sklearn
tooling (grid search over `n_max` or kernel settings, pipelines, `clone`).
`fit` takes a dataset (list of epochs) and estimates the whole trajectory
in one batch; `predict` returns positions; `score` is the negative mean
horizontal error against a ground-truth trajectory (higher is better).
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .eliminator import EliminatorKind
from .factors import WeightingConfig
from .metrics import evaluate
from .robust import RobustKernel
from .solver import EstimatorMode, SolverConfig, solve_dataset
from .types import Dataset, Trajectory

__all__ = ["GnssBatchEstimator"]


class GnssBatchEstimator(BaseEstimator):
    """Batch GNSS trajectory estimator with a sklearn-compatible API.

    Parameters mirror `SolverConfig`; strings are accepted for the
    enum-valued ones (`mode`, `eliminator`, `wcp_kernel`) so the estimator
    stays grid-search friendly.
    """

    def __init__(self, mode: str = "psr-dop-wcp", n_max: int = 6,
                 eliminator: str = "orthonormal", eliminator_seed: int = 0,
                 wcp_kernel: str = "cauchy", wcp_k: float = 2.0,
                 max_iterations: int = 50, gradient_tolerance: float = 1e-8,
                 step_tolerance: float = 1e-10, cost_tolerance: float = 1e-4,
                 initial_lambda: float = 1e-4,
                 elevation_mask_deg: float = 10.0,
                 sigma_pseudorange: float = 1.0, sigma_phase: float = 0.01,
                 sigma_doppler: float = 0.1):
        self.mode = mode
        self.n_max = n_max
        self.eliminator = eliminator
        self.eliminator_seed = eliminator_seed
        self.wcp_kernel = wcp_kernel
        self.wcp_k = wcp_k
        self.max_iterations = max_iterations
        self.gradient_tolerance = gradient_tolerance
        self.step_tolerance = step_tolerance
        self.cost_tolerance = cost_tolerance
        self.initial_lambda = initial_lambda
        self.elevation_mask_deg = elevation_mask_deg
        self.sigma_pseudorange = sigma_pseudorange
        self.sigma_phase = sigma_phase
        self.sigma_doppler = sigma_doppler

    def _build_config(self) -> SolverConfig:
        mode = (EstimatorMode.parse(self.mode)
                if isinstance(self.mode, str) else self.mode)
        if isinstance(self.eliminator, str):
            try:
                eliminator = EliminatorKind(self.eliminator)
            except ValueError:
                names = ", ".join(k.value for k in EliminatorKind)
                raise ValueError(
                    f"unknown eliminator {self.eliminator!r} "
                    f"(expected one of: {names})") from None
        else:
            eliminator = self.eliminator
        wcp_kernel = (RobustKernel.parse(self.wcp_kernel, float(self.wcp_k))
                      if isinstance(self.wcp_kernel, str) else self.wcp_kernel)
        weighting = WeightingConfig(
            sigma_pseudorange=float(self.sigma_pseudorange),
            sigma_phase=float(self.sigma_phase),
            sigma_doppler=float(self.sigma_doppler),
            elevation_mask=math.radians(float(self.elevation_mask_deg)),
        )
        return SolverConfig(
            mode=mode,
            n_max=int(self.n_max),
            eliminator_kind=eliminator,
            eliminator_seed=int(self.eliminator_seed),
            kernels={"wcp": wcp_kernel},
            max_iterations=int(self.max_iterations),
            gradient_tolerance=float(self.gradient_tolerance),
            step_tolerance=float(self.step_tolerance),
            cost_tolerance=float(self.cost_tolerance),
            initial_lambda=float(self.initial_lambda),
            weighting=weighting,
        )

    def fit(self, X: Dataset, y=None) -> "GnssBatchEstimator":
        """Estimate the receiver trajectory for dataset `X` (y is ignored)."""
        config = self._build_config()
        report = solve_dataset(X, config)
        self.config_ = config
        self.report_ = report
        self.trajectory_ = report.trajectory
        self.n_iterations_ = report.iterations
        self.convergence_reason_ = report.convergence_reason
        return self

    def predict(self, X: Dataset | None = None) -> np.ndarray:
        """Return estimated ECEF positions, shape (n_epochs, 3).

        With `X=None` this returns the positions from the last `fit`;
        with a dataset it runs a fresh batch solve under the current
        parameters (the estimator itself is not modified).
        """
        if X is None:
            check_is_fitted(self, "trajectory_")
            return self.trajectory_.positions()
        return solve_dataset(X, self._build_config()).trajectory.positions()

    def score(self, X: Dataset | None, y: Trajectory) -> float:
        """Negative mean horizontal error (m) against truth `y`."""
        if X is None:
            check_is_fitted(self, "trajectory_")
            estimated = self.trajectory_
        else:
            estimated = solve_dataset(X, self._build_config()).trajectory
        return -evaluate(estimated, y).mean_2d
