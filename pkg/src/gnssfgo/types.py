"""Core domain types for GNSS observations, satellite states, and trajectories.

All positions are ECEF meters, velocities ECEF m/s, clock terms meters
(bias) and m/s (drift), so every residual downstream is in meters and the
normal equations stay uniformly conditioned. Carrier phase is stored in
cycles together with its wavelength; factor math converts to meters at the
boundary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Constellation",
    "EpochTime",
    "SatelliteId",
    "Observation",
    "SatelliteState",
    "Epoch",
    "ReceiverState",
    "Trajectory",
    "Finding",
    "ValidationReport",
    "validate_dataset",
]


class Constellation(enum.Enum):
    GPS = "GPS"
    GLONASS = "GLONASS"
    BEIDOU = "BEIDOU"
    GALILEO = "GALILEO"
    SIM = "SIM"


@dataclass(frozen=True, order=True)
class EpochTime:
    """Run-relative measurement time.

    Attributes:
        index: non-negative epoch counter, strictly increasing in a dataset.
        seconds: seconds since the start of the run, monotone non-decreasing.
    """

    index: int
    seconds: float

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"epoch index must be non-negative, got {self.index}")


@dataclass(frozen=True, order=True)
class SatelliteId:
    """Constellation + PRN pair, unique within an epoch."""

    constellation: Constellation
    prn: int

    def __post_init__(self):
        if self.prn <= 0:
            raise ValueError(f"prn must be positive, got {self.prn}")

    def __str__(self):
        return f"{self.constellation.value}-{self.prn:02d}"


@dataclass(frozen=True)
class Observation:
    """One satellite's raw measurements at one epoch.

    Any of pseudorange / doppler / carrier_phase may be absent (None).
    `lock_indicator` is True while carrier lock has been maintained since
    the previous epoch; False marks a receiver-flagged loss of lock at this
    epoch, i.e. the phase is not continuous with the previous one.
    `phase_correction` is the precomputed per-measurement carrier-phase
    correction (antenna offsets, wind-up, relativity), in meters; zero for
    simulated data.
    """

    sat: SatelliteId
    pseudorange: float | None = None      # m
    doppler: float | None = None          # Hz
    carrier_phase: float | None = None    # cycles
    snr: float = 45.0                     # dB-Hz
    wavelength: float = 0.19029367279836487  # m
    lock_indicator: bool = True
    phase_correction: float = 0.0         # m

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if self.snr < 0:
            raise ValueError(f"snr must be non-negative, got {self.snr}")


@dataclass(frozen=True)
class SatelliteState:
    """Satellite position/velocity/clock at emission time (model input).

    `iono_delay` / `tropo_delay` are the slant atmosphere delays in meters
    for the receiver-satellite path; NaN means "not provided, compute from
    the standard models" (handled by the correction layer).
    """

    sat: SatelliteId
    position: np.ndarray          # ECEF m, shape (3,)
    velocity: np.ndarray          # ECEF m/s, shape (3,)
    clock_bias: float = 0.0       # m
    clock_drift: float = 0.0      # m/s
    iono_delay: float = math.nan  # m
    tropo_delay: float = math.nan # m

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("satellite position/velocity must be 3-vectors")


@dataclass(frozen=True)
class Epoch:
    """One epoch of a dataset: time, observations, and satellite states."""

    time: EpochTime
    observations: tuple[Observation, ...]
    satellites: tuple[SatelliteState, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "satellites", tuple(self.satellites))

    def satellite_for(self, sat: SatelliteId) -> SatelliteState | None:
        for s in self.satellites:
            if s.sat == sat:
                return s
        return None

    def constellations(self) -> tuple[Constellation, ...]:
        seen = []
        for o in self.observations:
            if o.sat.constellation not in seen:
                seen.append(o.sat.constellation)
        return tuple(seen)


# A dataset is simply the ordered list of epochs.
Dataset = list[Epoch]


@dataclass
class ReceiverState:
    """Per-epoch receiver estimate.

    `clock_bias` holds one meter-valued bias per constellation observed at
    the epoch. `velocity` is the Doppler-WLS velocity carried as a
    by-product of the solve; it is not an optimized unknown.
    """

    epoch: EpochTime
    position: np.ndarray                       # ECEF m, shape (3,)
    clock_bias: dict[Constellation, float] = field(default_factory=dict)
    velocity: np.ndarray | None = None         # ECEF m/s

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise ValueError("receiver position must be a 3-vector")
        if self.velocity is not None:
            self.velocity = np.asarray(self.velocity, dtype=float)

    def copy(self) -> "ReceiverState":
        return ReceiverState(
            epoch=self.epoch,
            position=self.position.copy(),
            clock_bias=dict(self.clock_bias),
            velocity=None if self.velocity is None else self.velocity.copy(),
        )


@dataclass
class Trajectory:
    """Ordered receiver states, optionally linked to a ground-truth run."""

    states: list[ReceiverState]
    reference: "Trajectory | None" = None

    def __post_init__(self):
        indices = [s.epoch.index for s in self.states]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("trajectory epochs must be strictly increasing")

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.states])

    def by_index(self) -> dict[int, ReceiverState]:
        return {s.epoch.index: s for s in self.states}


@dataclass(frozen=True)
class Finding:
    """One validation finding; `fatal` findings reject the dataset."""

    fatal: bool
    epoch_index: int | None
    message: str


@dataclass
class ValidationReport:
    """Outcome of validate_dataset; callers decide what to do with it."""

    findings: list[Finding]
    epoch_count: int
    satellite_counts: list[int]
    missing_pseudorange: int
    missing_doppler: int
    missing_phase: int

    @property
    def fatals(self) -> list[Finding]:
        return [f for f in self.findings if f.fatal]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if not f.fatal]

    @property
    def ok(self) -> bool:
        return not self.fatals

    def summary(self) -> str:
        lines = [
            f"epochs: {self.epoch_count}",
            f"satellites per epoch: {self.satellite_counts}",
            f"missing fields: pseudorange={self.missing_pseudorange} "
            f"doppler={self.missing_doppler} phase={self.missing_phase}",
            f"fatal findings: {len(self.fatals)}, warnings: {len(self.warnings)}",
        ]
        for f in self.findings:
            tag = "FATAL" if f.fatal else "warn"
            where = "dataset" if f.epoch_index is None else f"epoch {f.epoch_index}"
            lines.append(f"  [{tag}] {where}: {f.message}")
        return "\n".join(lines)


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Check a dataset against the structural invariants.

    Fatal findings: duplicate satellite in one epoch, non-positive time step
    between consecutive epochs, and observations without a matching
    satellite state. Everything else (orphan satellite states, missing
    measurement fields) is reported as warnings. Pure: identical inputs
    yield identical reports.
    """
    findings: list[Finding] = []
    sat_counts: list[int] = []
    miss_pr = miss_dop = miss_ph = 0

    if not dataset:
        findings.append(Finding(True, None, "no epochs"))

    prev_time: EpochTime | None = None
    for epoch in dataset:
        idx = epoch.time.index
        sat_counts.append(len(epoch.observations))

        if prev_time is not None:
            if epoch.time.index <= prev_time.index:
                findings.append(Finding(
                    True, idx,
                    f"epoch index {idx} not increasing after {prev_time.index}"))
            if epoch.time.seconds <= prev_time.seconds:
                findings.append(Finding(
                    True, idx,
                    f"non-positive Δt: t={epoch.time.seconds} after "
                    f"t={prev_time.seconds}"))
        prev_time = epoch.time

        seen: set[SatelliteId] = set()
        for obs in epoch.observations:
            if obs.sat in seen:
                findings.append(Finding(True, idx, f"duplicate satellite {obs.sat}"))
            seen.add(obs.sat)
            if epoch.satellite_for(obs.sat) is None:
                findings.append(Finding(
                    True, idx, f"orphan observation: no satellite state for {obs.sat}"))
            if obs.pseudorange is None:
                miss_pr += 1
            elif obs.pseudorange <= 0:
                findings.append(Finding(
                    False, idx, f"non-positive pseudorange for {obs.sat}"))
            if obs.doppler is None:
                miss_dop += 1
            if obs.carrier_phase is None:
                miss_ph += 1

        state_ids = [s.sat for s in epoch.satellites]
        if len(set(state_ids)) != len(state_ids):
            findings.append(Finding(True, idx, "duplicate satellite state"))
        for s in epoch.satellites:
            if s.sat not in seen:
                findings.append(Finding(
                    False, idx, f"satellite state {s.sat} has no observation"))
            r = float(np.linalg.norm(s.position))
            if not np.isfinite(s.position).all() or not (1.5e7 <= r <= 5e7):
                findings.append(Finding(
                    False, idx,
                    f"satellite {s.sat} position |p|={r:.3e} outside sanity band"))

    return ValidationReport(
        findings=findings,
        epoch_count=len(dataset),
        satellite_counts=sat_counts,
        missing_pseudorange=miss_pr,
        missing_doppler=miss_dop,
        missing_phase=miss_ph,
    )
