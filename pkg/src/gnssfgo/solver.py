"""Batch factor-graph assembly and Levenberg-Marquardt minimization.

The graph covers every epoch of a dataset at once. Unknowns are the
per-epoch receiver position (ECEF meters) and one clock bias (meters) per
constellation observed at that epoch. Four estimator modes share the
machinery:

* per-epoch weighted least squares on pseudoranges only,
* pseudorange + Doppler-velocity factors,
* the above + time-differenced carrier-phase factors,
* the above with the differenced pairs replaced by windowed carrier-phase
  constraints (shared-ambiguity windows, robust kernel support).

Minimization is damped Gauss-Newton with Marquardt scaling (lambda times
the normal-matrix diagonal), iteratively reweighted by the configured
robust kernels. Lambda follows the gain-ratio rule: the better the actual
cost drop matches the quadratic model's prediction, the harder lambda is
cut; rejected steps escalate it geometrically. Iteration stops on a small
gradient, a small step, or a relative cost decrease below cost_tolerance
(robust reweighting makes the final approach linear-rate, so the cost
criterion is usually the one that fires on noisy data).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .factors import (
    DopplerVelocityFactor,
    InsufficientObservations,
    PhaseWindow,
    PseudorangeFactor,
    WeightingConfig,
    build_phase_window,
    correct_phase,
    correct_pseudorange,
    doppler_velocity_residual,
    doppler_wls_velocity,
    measurement_variance,
    pseudorange_residual,
    wcp_residual,
)
from .eliminator import EliminatorKind
from .geodesy import (
    DEFAULT_IONO_COEFFICIENTS,
    ecef_to_geodetic,
    elevation_azimuth,
    iono_delay_klobuchar,
    tropo_delay_saastamoinen,
)
from .robust import KernelKind, RobustKernel, irls_weight, loss
from .types import (
    Constellation,
    Dataset,
    Epoch,
    Observation,
    ReceiverState,
    SatelliteId,
    SatelliteState,
    Trajectory,
    validate_dataset,
)

__all__ = [
    "EstimatorMode",
    "SolverConfig",
    "SolveReport",
    "WindowDiagnostic",
    "FactorGraph",
    "DatasetError",
    "SolverError",
    "chain_windows",
    "solve_wls_epoch",
    "build_graph",
    "solve",
    "solve_dataset",
    "marginal_cost_breakdown",
]

class DatasetError(ValueError):
    """The dataset cannot be processed (validation fatal, empty, etc.)."""


class SolverError(RuntimeError):
    """The optimization could not produce a usable solution."""


class EstimatorMode(enum.Enum):
    """Which measurement set the batch estimator fuses."""

    WLS_SPP = "wls-spp"
    PSR_DOP = "psr-dop"
    PSR_DOP_TDCP = "psr-dop-tdcp"
    PSR_DOP_WCP = "psr-dop-wcp"

    @classmethod
    def parse(cls, name: str) -> "EstimatorMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown mode {name!r}; expected one of: {valid}") from None


def default_kernels() -> dict[str, RobustKernel]:
    """Robust kernel per factor type: Cauchy on phase windows, plain elsewhere."""
    return {
        "pseudorange": RobustKernel(KernelKind.NONE),
        "doppler": RobustKernel(KernelKind.NONE),
        "tdcp": RobustKernel(KernelKind.NONE),
        "wcp": RobustKernel(KernelKind.CAUCHY, k=2.0),
    }


@dataclass
class SolverConfig:
    """Everything that controls graph construction and minimization."""

    mode: EstimatorMode = EstimatorMode.PSR_DOP_WCP
    n_max: int = 6
    eliminator_kind: EliminatorKind = EliminatorKind.ORTHONORMAL_BASIS_T
    eliminator_seed: int = 0
    kernels: dict[str, RobustKernel] = field(default_factory=default_kernels)
    max_iterations: int = 50
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    cost_tolerance: float = 1e-4
    initial_lambda: float = 1e-4
    weighting: WeightingConfig = field(default_factory=WeightingConfig)

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError(f"n_max must be >= 2, got {self.n_max}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name, value in [("gradient_tolerance", self.gradient_tolerance),
                            ("step_tolerance", self.step_tolerance),
                            ("cost_tolerance", self.cost_tolerance),
                            ("initial_lambda", self.initial_lambda)]:
            if not (value > 0.0):
                raise ValueError(f"{name} must be positive, got {value}")
        kernels = default_kernels()
        kernels.update(self.kernels)
        self.kernels = kernels

    @property
    def elevation_mask(self) -> float:
        return self.weighting.elevation_mask


@dataclass(frozen=True)
class WindowDiagnostic:
    """Final-iterate diagnostics for one phase window."""

    sat: SatelliteId
    first_epoch: int
    size: int
    weights: np.ndarray   # per-component IRLS weights, 1 = fully trusted
    residual: np.ndarray  # whitened residual components

    @property
    def weight(self) -> float:
        """Strongest downweighting applied to any component."""
        return float(self.weights.min())

    @property
    def reweighted(self) -> np.ndarray:
        return np.sqrt(self.weights) * self.residual


@dataclass
class SolveReport:
    """Outcome of a batch solve."""

    mode: EstimatorMode
    states: list[ReceiverState]
    iterations: int
    initial_cost: float
    final_cost: float
    cost_by_type: dict[str, float]
    convergence_reason: str
    residuals_by_type: dict[str, np.ndarray]
    window_diagnostics: list[WindowDiagnostic]
    warnings: list[str] = field(default_factory=list)

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(states=self.states)


def marginal_cost_breakdown(
    report: SolveReport,
) -> tuple[dict[str, np.ndarray], list[WindowDiagnostic]]:
    """Whitened residual components per factor type, plus per-window detail.

    The flat arrays are suitable for histogramming; the per-window entries
    carry the IRLS weight each window ended up with, which is how a
    slipped window's down-weighting shows up.
    """
    return report.residuals_by_type, report.window_diagnostics


def chain_windows(length: int, n_max: int) -> list[tuple[int, int]]:
    """Tile a track of `length` epochs into chained windows of <= n_max.

    Windows overlap by exactly one epoch (each window starts where the
    previous one ended) so that every consecutive pair of epochs is
    covered by some window; with n_max = 2 the tiling is exactly the set
    of consecutive pairs. Returns (start, end) index pairs, end inclusive.
    A track shorter than two epochs yields nothing.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    tiles = []
    start = 0
    while start < length - 1:
        end = min(start + n_max - 1, length - 1)
        tiles.append((start, end))
        if end >= length - 1:
            break
        start = end
    return tiles


# --------------------------------------------------------------------------
# Graph construction


@dataclass
class _PsrEntry:
    factor: PseudorangeFactor
    sat: SatelliteState
    epoch_pos: int  # position of the epoch in the dataset ordering


@dataclass
class _DvEntry:
    factor: DopplerVelocityFactor
    whitener: np.ndarray  # 3x3, inverse Cholesky factor of the covariance
    epoch_pos: int


@dataclass
class _WindowEntry:
    window: PhaseWindow
    sats: list[SatelliteState]
    epoch_pos_first: int
    kind: str = "wcp"  # kernel/cost slot: "wcp", or "tdcp" for pair windows


@dataclass
class FactorGraph:
    """Assembled factors plus the state-vector layout for one dataset."""

    dataset: Dataset
    config: SolverConfig
    initial_states: list[ReceiverState]
    psr_factors: list[_PsrEntry]
    dv_factors: list[_DvEntry]
    windows: list[_WindowEntry]
    offsets: list[int]  # state-vector offset of each epoch's block
    clock_cols: dict[tuple[int, Constellation], int]  # (epoch_pos, const) -> column
    n_vars: int
    warnings: list[str] = field(default_factory=list)

    @property
    def n_factors(self) -> int:
        return (len(self.psr_factors) + len(self.dv_factors)
                + len(self.windows))


class _AtmosphereResolver:
    """Fills NaN atmosphere delays from the standard models, once per need."""

    def __init__(self, epoch: Epoch, reference_position: np.ndarray):
        self._time = epoch.time
        self._position = np.array(reference_position, dtype=float)  # own copy
        self._geodetic = None

    def resolve(self, obs: Observation, sat: SatelliteState) -> tuple[float, float]:
        iono, tropo = sat.iono_delay, sat.tropo_delay
        if math.isfinite(iono) and math.isfinite(tropo):
            return iono, tropo
        elevation, azimuth = elevation_azimuth(self._position, sat.position)
        if self._geodetic is None:
            self._geodetic = ecef_to_geodetic(self._position)
        if not math.isfinite(tropo):
            tropo = tropo_delay_saastamoinen(elevation, self._geodetic.height)
        if not math.isfinite(iono):
            iono = iono_delay_klobuchar(elevation, azimuth, self._geodetic,
                                        self._time, DEFAULT_IONO_COEFFICIENTS)
            iono *= (obs.wavelength / 0.19029367279836487) ** 2
        return iono, tropo


def solve_wls_epoch(
    observations: list[Observation],
    satellites: list[SatelliteState],
    epoch: Epoch,
    weighting: WeightingConfig = WeightingConfig(),
    initial: np.ndarray | None = None,
) -> tuple[ReceiverState, np.ndarray]:
    """Single-epoch weighted least-squares position and clock solve.

    Two stages: an unweighted, unmasked Gauss-Newton from the cold start
    (needed because elevation-dependent weights require a position), then
    an elevation/SNR-weighted refinement over above-mask satellites.
    Returns the receiver state and the covariance of (position, clocks)
    as the inverse weighted normal matrix.
    """
    pairs = []
    by_id = {s.sat: s for s in satellites}
    for obs in observations:
        if obs.pseudorange is None:
            continue
        sat = by_id.get(obs.sat)
        if sat is not None:
            pairs.append((obs, sat))
    consts = sorted({obs.sat.constellation for obs, _ in pairs}, key=lambda c: c.value)
    n_params = 3 + len(consts)
    if len(pairs) < n_params:
        raise InsufficientObservations(
            f"epoch {epoch.time.index}: {len(pairs)} pseudoranges for {n_params} unknowns")

    position = np.zeros(3) if initial is None else np.asarray(initial, dtype=float).copy()
    clocks = np.zeros(len(consts))
    const_index = {c: i for i, c in enumerate(consts)}

    def gauss_newton(entries, weights, step_tol, max_iter):
        nonlocal position, clocks
        for _ in range(max_iter):
            rows, residuals = [], []
            for (obs, sat, corrected), weight in zip(entries, weights):
                los = sat.position - position
                rng = float(np.linalg.norm(los))
                row = np.zeros(n_params)
                row[:3] = los / rng
                row[3 + const_index[obs.sat.constellation]] = -1.0
                rows.append(row * math.sqrt(weight))
                model = rng + clocks[const_index[obs.sat.constellation]]
                residuals.append((corrected - model) * math.sqrt(weight))
            a = np.array(rows)  # rows hold d(residual)/d(state)
            r = np.array(residuals)
            normal = a.T @ a
            try:
                step = np.linalg.solve(normal, -(a.T @ r))
            except np.linalg.LinAlgError:
                raise SolverError(
                    f"epoch {epoch.time.index}: singular single-point geometry") from None
            position += step[:3]
            clocks += step[3:]
            if np.abs(step).max() < step_tol:
                return normal
        raise SolverError(
            f"epoch {epoch.time.index}: single-point solve did not converge")

    # Stage 1: unweighted, unmasked, raw-carried atmosphere (NaN treated as 0).
    coarse_entries = []
    for obs, sat in pairs:
        iono = sat.iono_delay if math.isfinite(sat.iono_delay) else 0.0
        tropo = sat.tropo_delay if math.isfinite(sat.tropo_delay) else 0.0
        coarse_entries.append((obs, sat, correct_pseudorange(obs, sat, iono, tropo)))
    gauss_newton(coarse_entries, np.ones(len(coarse_entries)), 1e-2, 20)

    # Stage 2: masked, atmosphere-resolved, elevation/SNR weighted.
    resolver = _AtmosphereResolver(epoch, position)
    entries, weights = [], []
    for obs, sat in pairs:
        elevation, _ = elevation_azimuth(position, sat.position)
        if elevation <= weighting.elevation_mask:
            continue
        iono, tropo = resolver.resolve(obs, sat)
        entries.append((obs, sat, correct_pseudorange(obs, sat, iono, tropo)))
        weights.append(1.0 / measurement_variance(elevation, obs.snr, "pseudorange", weighting))
    live_consts = sorted({obs.sat.constellation for obs, _, _ in entries},
                         key=lambda c: c.value)
    if len(entries) < 3 + len(live_consts):
        raise InsufficientObservations(
            f"epoch {epoch.time.index}: {len(entries)} above-mask pseudoranges "
            f"for {3 + len(live_consts)} unknowns")
    # 1e-8 m sits just above the double-precision rounding floor of the
    # residuals (~4e-9 m at ECEF magnitudes); anything tighter never fires.
    normal = gauss_newton(entries, np.asarray(weights), 1e-8, 20)

    state = ReceiverState(
        epoch=epoch.time,
        position=position.copy(),
        clock_bias={c: float(clocks[const_index[c]]) for c in consts},
    )
    return state, np.linalg.inv(normal)


def _initial_states(dataset: Dataset, config: SolverConfig,
                    warnings: list[str]) -> list[ReceiverState]:
    states: list[ReceiverState] = []
    previous: np.ndarray | None = None
    for epoch in dataset:
        try:
            state, _ = solve_wls_epoch(list(epoch.observations), list(epoch.satellites),
                                       epoch, config.weighting, initial=previous)
        except (InsufficientObservations, SolverError) as exc:
            if previous is None:
                raise DatasetError(
                    f"cannot initialize epoch {epoch.time.index}: {exc}") from exc
            warnings.append(
                f"epoch {epoch.time.index}: single-point init failed ({exc}); "
                f"carried previous epoch")
            state = ReceiverState(epoch=epoch.time, position=previous.copy(),
                                  clock_bias=dict(states[-1].clock_bias))
        states.append(state)
        previous = state.position
    return states


def _phase_usable(obs: Observation | None) -> bool:
    return obs is not None and obs.carrier_phase is not None


def build_graph(dataset: Dataset, config: SolverConfig) -> FactorGraph:
    """Validate, initialize, and assemble all factors for the configured mode."""
    report = validate_dataset(dataset)
    if not report.ok:
        raise DatasetError(f"dataset validation failed:\n{report.summary()}")

    warnings: list[str] = []
    initial = _initial_states(dataset, config, warnings)
    n_epochs = len(dataset)
    mask = config.elevation_mask
    weighting = config.weighting

    # Per-epoch bookkeeping: observations by satellite, above-mask elevations,
    # resolved atmosphere, and measurement variances.
    obs_by_epoch: list[dict[SatelliteId, tuple[Observation, SatelliteState]]] = []
    elevation_by_epoch: list[dict[SatelliteId, float]] = []
    corrected_phase: list[dict[SatelliteId, float]] = []
    phase_variance: list[dict[SatelliteId, float]] = []

    psr_entries: list[_PsrEntry] = []
    epoch_consts: list[set[Constellation]] = [set() for _ in range(n_epochs)]

    for i, epoch in enumerate(dataset):
        resolver = _AtmosphereResolver(epoch, initial[i].position)
        table: dict[SatelliteId, tuple[Observation, SatelliteState]] = {}
        elevations: dict[SatelliteId, float] = {}
        phases: dict[SatelliteId, float] = {}
        phase_vars: dict[SatelliteId, float] = {}
        for obs in epoch.observations:
            sat = epoch.satellite_for(obs.sat)
            if sat is None:
                continue
            elevation, _ = elevation_azimuth(initial[i].position, sat.position)
            if elevation <= mask:
                continue
            table[obs.sat] = (obs, sat)
            elevations[obs.sat] = elevation
            iono, tropo = resolver.resolve(obs, sat)
            if obs.pseudorange is not None:
                variance = measurement_variance(elevation, obs.snr, "pseudorange", weighting)
                psr_entries.append(_PsrEntry(
                    factor=PseudorangeFactor(
                        epoch_index=epoch.time.index, sat=obs.sat,
                        corrected_pseudorange=correct_pseudorange(obs, sat, iono, tropo),
                        variance=variance),
                    sat=sat, epoch_pos=i))
                epoch_consts[i].add(obs.sat.constellation)
            if obs.carrier_phase is not None:
                phases[obs.sat] = correct_phase(obs, sat, iono, tropo)
                phase_vars[obs.sat] = measurement_variance(elevation, obs.snr, "phase", weighting)
        obs_by_epoch.append(table)
        elevation_by_epoch.append(elevations)
        corrected_phase.append(phases)
        phase_variance.append(phase_vars)

    # Doppler-velocity factors between consecutive epochs (measured at the
    # earlier epoch). Velocities are recorded on the initial states so every
    # report carries them.
    dv_entries: list[_DvEntry] = []
    use_dv = config.mode is not EstimatorMode.WLS_SPP
    for i in range(n_epochs - 1):
        dt = dataset[i + 1].time.seconds - dataset[i].time.seconds
        obs_list = [obs for obs, _ in obs_by_epoch[i].values()]
        sat_list = [sat for _, sat in obs_by_epoch[i].values()]
        try:
            velocity, _, covariance = doppler_wls_velocity(
                obs_list, sat_list, initial[i].position, weighting)
        except InsufficientObservations as exc:
            if use_dv:
                warnings.append(f"epoch {dataset[i].time.index}: Doppler factor "
                                f"omitted ({exc})")
            continue
        initial[i].velocity = velocity
        if not use_dv:
            continue
        chol = np.linalg.cholesky(covariance)
        whitener = scipy.linalg.solve_triangular(chol, np.eye(3), lower=True)
        dv_entries.append(_DvEntry(
            factor=DopplerVelocityFactor(
                epoch_index=dataset[i].time.index,
                measured_velocity=velocity, dt=dt, covariance=covariance),
            whitener=whitener, epoch_pos=i))

    # Lock-continuous track segments per satellite: a segment covers epochs
    # where the satellite stays above mask with usable phase, every epoch
    # after the first arriving with lock maintained and no epoch gaps.
    #
    # Pairwise phase differencing is the two-epoch special case of the
    # window constraint, so both modes share one construction; pair windows
    # get their own kernel/cost slot ("tdcp") and the same deterministic
    # basis eliminator so the two modes coincide exactly at window size 2.
    window_entries: list[_WindowEntry] = []
    if config.mode in (EstimatorMode.PSR_DOP_TDCP, EstimatorMode.PSR_DOP_WCP):
        if config.mode is EstimatorMode.PSR_DOP_TDCP:
            window_kind = "tdcp"
            window_n_max = 2
            window_eliminator = EliminatorKind.ORTHONORMAL_BASIS_T
        else:
            window_kind = "wcp"
            window_n_max = config.n_max
            window_eliminator = config.eliminator_kind
        all_sats = sorted({sid for table in obs_by_epoch for sid in table},
                          key=lambda s: (s.constellation.value, s.prn))
        for sid in all_sats:
            segments: list[list[int]] = []
            current: list[int] = []
            for i in range(n_epochs):
                pair = obs_by_epoch[i].get(sid)
                usable = pair is not None and pair[0].carrier_phase is not None
                if not usable:
                    if current:
                        segments.append(current)
                    current = []
                    continue
                contiguous = (current
                              and dataset[i].time.index == dataset[current[-1]].time.index + 1
                              and pair[0].lock_indicator)
                if contiguous:
                    current.append(i)
                else:
                    if current:
                        segments.append(current)
                    current = [i]
            if current:
                segments.append(current)

            for segment in segments:
                if len(segment) < 2:
                    continue
                for start, end in chain_windows(len(segment), window_n_max):
                    positions = segment[start:end + 1]
                    window = build_phase_window(
                        sat=sid,
                        epoch_indices=tuple(dataset[i].time.index for i in positions),
                        phases=np.array([corrected_phase[i][sid] for i in positions]),
                        variances=np.array([phase_variance[i][sid] for i in positions]),
                        eliminator_kind=window_eliminator,
                        seed=config.eliminator_seed)
                    window_entries.append(_WindowEntry(
                        window=window,
                        sats=[obs_by_epoch[i][sid][1] for i in positions],
                        epoch_pos_first=positions[0],
                        kind=window_kind))
                    for i in positions:
                        epoch_consts[i].add(sid.constellation)

    # State-vector layout: per epoch, position block then clock biases for
    # the constellations any factor at that epoch touches.
    offsets: list[int] = []
    clock_cols: dict[tuple[int, Constellation], int] = {}
    cursor = 0
    for i in range(n_epochs):
        offsets.append(cursor)
        cursor += 3
        for const in sorted(epoch_consts[i], key=lambda c: c.value):
            clock_cols[(i, const)] = cursor
            cursor += 1

    return FactorGraph(
        dataset=dataset, config=config, initial_states=initial,
        psr_factors=psr_entries, dv_factors=dv_entries,
        windows=window_entries,
        offsets=offsets, clock_cols=clock_cols, n_vars=cursor,
        warnings=warnings)


# --------------------------------------------------------------------------
# Levenberg-Marquardt


def _states_to_vector(graph: FactorGraph, states: list[ReceiverState]) -> np.ndarray:
    x = np.zeros(graph.n_vars)
    for i, state in enumerate(states):
        x[graph.offsets[i]:graph.offsets[i] + 3] = state.position
    for (pos, const), col in graph.clock_cols.items():
        x[col] = states[pos].clock_bias.get(const, 0.0)
    return x


def _vector_to_states(graph: FactorGraph, x: np.ndarray) -> list[ReceiverState]:
    clocks: list[dict[Constellation, float]] = [{} for _ in graph.dataset]
    for (pos, const), col in graph.clock_cols.items():
        clocks[pos][const] = float(x[col])
    return [ReceiverState(
        epoch=epoch.time,
        position=x[graph.offsets[i]:graph.offsets[i] + 3].copy(),
        clock_bias=clocks[i],
        velocity=graph.initial_states[i].velocity)
        for i, epoch in enumerate(graph.dataset)]


class _Evaluation:
    __slots__ = ("cost", "gradient", "normal", "cost_by_type",
                 "residuals_by_type", "window_diagnostics")


def _evaluate(graph: FactorGraph, x: np.ndarray, assemble: bool,
              config: SolverConfig | None = None) -> _Evaluation:
    """Robust cost at x; optionally the IRLS normal matrix and gradient."""
    config = graph.config if config is None else config
    states = _vector_to_states(graph, x)
    n = graph.n_vars
    out = _Evaluation()
    out.cost = 0.0
    out.cost_by_type = {"pseudorange": 0.0, "doppler": 0.0, "tdcp": 0.0, "wcp": 0.0}
    out.gradient = np.zeros(n) if assemble else None
    out.normal = np.zeros((n, n)) if assemble else None
    out.residuals_by_type = {"pseudorange": [], "doppler": [], "tdcp": [], "wcp": []}
    out.window_diagnostics = []

    def accumulate(kind: str, cols: np.ndarray, residual: np.ndarray,
                   jacobian: np.ndarray) -> np.ndarray | None:
        """Add one factor's contribution; robust kernels act per component.

        Both the gradient and the normal matrix use the IRLS weight
        2*rho' per component — the exact robust gradient with the
        positive-definite fixed-weight curvature model.

        Returns the per-component IRLS weights (None = all ones).
        """
        kernel = config.kernels[kind]
        if kernel.kind is KernelKind.NONE:
            weights = None
            rho = 0.5 * float(residual @ residual)
        else:
            weights = np.empty(residual.shape[0])
            rho = 0.0
            for i, component in enumerate(residual):
                s = float(component) * float(component)
                value, d1, _ = loss(kernel, s)
                rho += value
                weights[i] = 2.0 * d1
        out.cost += rho
        out.cost_by_type[kind] += rho
        out.residuals_by_type[kind].append(residual)
        if assemble:
            if weights is None:
                out.normal[np.ix_(cols, cols)] += jacobian.T @ jacobian
                out.gradient[cols] += jacobian.T @ residual
            else:
                out.normal[np.ix_(cols, cols)] += (
                    (weights[:, None] * jacobian).T @ jacobian)
                out.gradient[cols] += jacobian.T @ (weights * residual)
        return weights

    for entry in graph.psr_factors:
        state = states[entry.epoch_pos]
        residual, jac = pseudorange_residual(state, entry.sat, entry.factor)
        scale = 1.0 / math.sqrt(entry.factor.variance)
        cols = np.array([*range(graph.offsets[entry.epoch_pos],
                                graph.offsets[entry.epoch_pos] + 3),
                         graph.clock_cols[(entry.epoch_pos, entry.factor.sat.constellation)]])
        accumulate("pseudorange", cols,
                   np.array([residual * scale]), (jac * scale)[None, :])

    for entry in graph.dv_factors:
        i = entry.epoch_pos
        residual, jac = doppler_velocity_residual(states[i], states[i + 1], entry.factor)
        rw = entry.whitener @ residual
        jw = entry.whitener @ jac[:, [0, 1, 2, 4, 5, 6]]  # clock columns are zero
        cols = np.array([*range(graph.offsets[i], graph.offsets[i] + 3),
                         *range(graph.offsets[i + 1], graph.offsets[i + 1] + 3)])
        accumulate("doppler", cols, rw, jw)

    for entry in graph.windows:
        window = entry.window
        first = entry.epoch_pos_first
        span = range(first, first + window.size)
        residual, blocks = wcp_residual(window, [states[i] for i in span], entry.sats)
        const = window.sat.constellation
        cols = np.array([c for i in span
                         for c in (*range(graph.offsets[i], graph.offsets[i] + 3),
                                   graph.clock_cols[(i, const)])])
        jacobian = blocks.reshape(blocks.shape[0], -1)
        weights = accumulate(entry.kind, cols, residual, jacobian)
        if weights is None:
            weights = np.ones(residual.shape[0])
        out.window_diagnostics.append(WindowDiagnostic(
            sat=window.sat, first_epoch=window.epoch_indices[0], size=window.size,
            weights=weights, residual=residual))

    for kind, chunks in out.residuals_by_type.items():
        out.residuals_by_type[kind] = (np.concatenate(chunks) if chunks
                                       else np.zeros(0))
    return out


def _minimize(graph: FactorGraph, config: SolverConfig,
              x: np.ndarray) -> tuple[np.ndarray, _Evaluation, int, str]:
    """Levenberg-Marquardt descent of the graph's cost under `config`."""
    current = _evaluate(graph, x, assemble=True, config=config)
    lam = config.initial_lambda
    nu = 2.0
    iterations = 0
    small_steps = 0
    reason = "max-iterations"
    for _ in range(config.max_iterations):
        if np.abs(current.gradient).max() < config.gradient_tolerance:
            reason = "gradient"
            break
        accepted = False
        step = None
        diag = np.diag(current.normal)
        while True:
            damped = current.normal + lam * np.diag(diag)
            try:
                chol = scipy.linalg.cho_factor(damped)
                step = scipy.linalg.cho_solve(chol, -current.gradient)
            except scipy.linalg.LinAlgError:
                lam *= nu
                nu *= 2.0
                if lam > 1e12:
                    break
                continue
            candidate = x + step
            trial = _evaluate(graph, candidate, assemble=True, config=config)
            # Gain ratio: actual cost drop over the drop the local quadratic
            # model predicts for this step.
            predicted = 0.5 * float(step @ (lam * diag * step
                                            - current.gradient))
            actual = current.cost - trial.cost
            if actual > 0.0 and predicted > 0.0:
                x = candidate
                current = trial
                rho = actual / predicted
                lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3),
                          1e-15)
                nu = 2.0
                accepted = True
                break
            lam *= nu
            nu *= 2.0
            if lam > 1e12:
                break
        if not accepted:
            # No damping level yields a cost decrease. With accepted
            # progress behind us that is an ambiguous mid-descent cliff;
            # straight from the start it means the initial point already
            # minimizes this objective to machine precision (the best
            # step is length zero, i.e. below any step tolerance).
            reason = "stalled" if iterations else "step"
            break
        iterations += 1
        scale = 1.0 + float(np.abs(x).max())
        if float(np.abs(step).max()) < config.step_tolerance * scale:
            # Two consecutive sub-tolerance steps: a single cautious LM
            # step can dip under the threshold one Gauss-Newton iteration
            # short of the actual minimum.
            small_steps += 1
            if small_steps >= 2:
                reason = "step"
                break
        else:
            small_steps = 0
        if actual < config.cost_tolerance * current.cost:
            reason = "cost"
            break
    return x, current, iterations, reason


def _rigid_window_config(config: SolverConfig,
                         kinds: set[str]) -> SolverConfig | None:
    """The same config with robust kernels of the given window kinds
    disabled, or None.

    None means no window factor in the graph carries a robust kernel, so
    a rigid pre-solve would be identical to the robust solve. Only kinds
    actually present matter: a robust kernel configured for an absent
    factor type must not change how the present ones are solved.
    """
    kernels = dict(config.kernels)
    changed = False
    for kind in kinds:
        if kernels[kind].kind is not KernelKind.NONE:
            kernels[kind] = RobustKernel(KernelKind.NONE)
            changed = True
    if not changed:
        return None
    return replace(config, kernels=kernels)


def solve(graph: FactorGraph, config: SolverConfig | None = None,
          initial: list[ReceiverState] | None = None) -> SolveReport:
    """Minimize the graph's robust objective by Levenberg-Marquardt.

    `initial` overrides the graph's single-point initialization. The
    per-epoch single-point mode returns its initialization directly.

    When phase windows carry a robust kernel, minimization runs in two
    stages: first with those kernels disabled — the rigid problem is
    nearly quadratic and lands on a phase-consistent trajectory in a few
    iterations — then the robust objective from that point, where faulty
    windows show up as isolated large residuals the kernel can reject
    outright. Starting the robust stage cold instead leaves it creeping
    toward phase re-engagement at a linear rate for tens of iterations.
    """
    config = graph.config if config is None else config
    states0 = graph.initial_states if initial is None else initial
    if len(states0) != len(graph.dataset):
        raise ValueError("initial states must cover every epoch")

    if config.mode is EstimatorMode.WLS_SPP:
        return SolveReport(
            mode=config.mode, states=[s.copy() for s in states0],
            iterations=0, initial_cost=0.0, final_cost=0.0,
            cost_by_type={}, convergence_reason="per-epoch",
            residuals_by_type={}, window_diagnostics=[],
            warnings=list(graph.warnings))

    if graph.n_factors == 0:
        raise SolverError("graph has no factors")

    x = _states_to_vector(graph, states0)
    probe = _evaluate(graph, x, assemble=True, config=config)

    zero_diag = np.flatnonzero(np.diag(probe.normal) <= 0.0)
    if zero_diag.size:
        bad_epochs = sorted({_column_epoch(graph, col) for col in zero_diag})
        raise SolverError(
            f"unobservable state: no factor constrains epoch(s) {bad_epochs}")

    initial_cost = probe.cost
    iterations = 0
    window_kinds = {entry.kind for entry in graph.windows}
    rigid = _rigid_window_config(config, window_kinds)
    if rigid is not None:
        x, _, rigid_iterations, _ = _minimize(graph, rigid, x)
        iterations += rigid_iterations
    x, current, robust_iterations, reason = _minimize(graph, config, x)
    iterations += robust_iterations

    states = _vector_to_states(graph, x)
    return SolveReport(
        mode=config.mode, states=states, iterations=iterations,
        initial_cost=initial_cost, final_cost=current.cost,
        cost_by_type=dict(current.cost_by_type),
        convergence_reason=reason,
        residuals_by_type=current.residuals_by_type,
        window_diagnostics=current.window_diagnostics,
        warnings=list(graph.warnings))


def _column_epoch(graph: FactorGraph, col: int) -> int:
    for i in reversed(range(len(graph.offsets))):
        if col >= graph.offsets[i]:
            return graph.dataset[i].time.index
    return graph.dataset[0].time.index


def solve_dataset(dataset: Dataset, config: SolverConfig | None = None) -> SolveReport:
    """Build the graph for a dataset and solve it in one call."""
    config = SolverConfig() if config is None else config
    graph = build_graph(dataset, config)
    return solve(graph, config)
