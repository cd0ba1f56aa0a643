"""Batch GNSS positioning with windowed carrier-phase constraints.

The package estimates a receiver trajectory from pseudorange, Doppler, and
carrier-phase measurements by batch nonlinear least squares over a factor
graph. Carrier-phase windows are tied together by eliminating the shared
integer ambiguity with a null-space matrix, and robust M-estimator kernels
keep cycle slips and NLOS outliers from dragging the solution.

Typical use:

    >>> from gnssfgo import ScenarioConfig, generate, solve_dataset, evaluate
    >>> dataset, truth, _ = generate(ScenarioConfig(seed=1))
    >>> report = solve_dataset(dataset)
    >>> metrics = evaluate(report.trajectory, truth)

or through the sklearn-style facade:

    >>> from gnssfgo import GnssBatchEstimator
    >>> estimator = GnssBatchEstimator(mode="psr-dop-wcp", n_max=6).fit(dataset)
    >>> positions = estimator.predict()
"""

from .constants import C_LIGHT, OMEGA_EARTH, WAVELENGTH_L1
from .eliminator import (
    EliminatorKind,
    EliminatorMatrix,
    build_eliminator,
    orthonormal_null_basis,
    random_unitary,
    random_unitary_eliminator,
    tdcp_difference_matrix,
)
from .estimator import GnssBatchEstimator
from .factors import (
    DopplerVelocityFactor,
    InsufficientObservations,
    PhaseWindow,
    PseudorangeFactor,
    TdcpFactor,
    WeightingConfig,
    build_phase_window,
    doppler_wls_velocity,
    measurement_variance,
)
from .metrics import ErrorMetrics, evaluate
from .robust import KernelKind, RobustKernel, irls_weight, loss
from .simulate import (
    InjectionRecord,
    ScenarioConfig,
    TrajectoryKind,
    generate,
    inject_cycle_slip,
)
from .solver import (
    DatasetError,
    EstimatorMode,
    FactorGraph,
    SolveReport,
    SolverConfig,
    SolverError,
    build_graph,
    chain_windows,
    solve,
    solve_dataset,
    solve_wls_epoch,
)
from .types import (
    Constellation,
    Dataset,
    Epoch,
    EpochTime,
    Observation,
    ReceiverState,
    SatelliteId,
    SatelliteState,
    Trajectory,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "C_LIGHT",
    "OMEGA_EARTH",
    "WAVELENGTH_L1",
    "Constellation",
    "Dataset",
    "DatasetError",
    "DopplerVelocityFactor",
    "EliminatorKind",
    "EliminatorMatrix",
    "Epoch",
    "EpochTime",
    "ErrorMetrics",
    "EstimatorMode",
    "FactorGraph",
    "GnssBatchEstimator",
    "InjectionRecord",
    "InsufficientObservations",
    "KernelKind",
    "Observation",
    "PhaseWindow",
    "PseudorangeFactor",
    "ReceiverState",
    "RobustKernel",
    "SatelliteId",
    "SatelliteState",
    "ScenarioConfig",
    "SolveReport",
    "SolverConfig",
    "SolverError",
    "TdcpFactor",
    "Trajectory",
    "TrajectoryKind",
    "WeightingConfig",
    "build_eliminator",
    "build_graph",
    "build_phase_window",
    "chain_windows",
    "doppler_wls_velocity",
    "evaluate",
    "generate",
    "inject_cycle_slip",
    "irls_weight",
    "loss",
    "measurement_variance",
    "orthonormal_null_basis",
    "random_unitary",
    "random_unitary_eliminator",
    "solve",
    "solve_dataset",
    "solve_wls_epoch",
    "tdcp_difference_matrix",
    "validate_dataset",
]
