"""Synthetic multi-constellation scenario generator with exact ground truth.

Clean measurements satisfy the estimator's models exactly by construction:

* pseudorange = range + receiver clock - satellite clock + iono + tropo,
* carrier phase carries the same terms plus a per-track integer ambiguity
  and a per-satellite phase correction,
* Doppler encodes the discrete average velocity between consecutive truth
  positions (and the discrete receiver clock drift), so the velocity
  measured from it reproduces the position difference without
  discretization error.

Satellites fly analytic circular orbits placed so the whole constellation
stays well above the elevation mask for the run. Urban error processes —
positive-biased pseudorange outliers, cycle slips (receiver-flagged or
silent), Doppler bias — are injected on top and recorded in an injection
log. Everything is drawn from one counter-based generator, so equal seeds
give bit-identical outputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import C_LIGHT, MU_EARTH, WAVELENGTH_L1
from .factors import WeightingConfig, measurement_variance
from .geodesy import (
    DEFAULT_IONO_COEFFICIENTS,
    GeodeticPosition,
    ecef_to_geodetic,
    elevation_azimuth,
    enu_rotation,
    geodetic_to_ecef,
    iono_delay_klobuchar,
    scale_iono_to_wavelength,
    tropo_delay_saastamoinen,
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
)

__all__ = [
    "TrajectoryKind",
    "ScenarioConfig",
    "InjectionRecord",
    "generate",
    "inject_cycle_slip",
]

_WAVELENGTHS = {
    Constellation.GPS: WAVELENGTH_L1,
    Constellation.BEIDOU: C_LIGHT / 1561.098e6,
    Constellation.GALILEO: WAVELENGTH_L1,
    Constellation.GLONASS: C_LIGHT / 1602.0e6,
    Constellation.SIM: WAVELENGTH_L1,
}


class TrajectoryKind(enum.Enum):
    STATIC = "static"
    CONSTANT_VELOCITY = "constant-velocity"
    WAYPOINT_SPLINE = "waypoint-spline"

    @classmethod
    def parse(cls, name: str) -> "TrajectoryKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown trajectory {name!r}; expected one of: {valid}") from None


@dataclass
class ScenarioConfig:
    """Everything a scenario needs; defaults describe a noisy urban drive."""

    duration_epochs: int = 60
    rate_hz: float = 1.0
    n_satellites: int = 8
    constellations: tuple[Constellation, ...] = (Constellation.GPS, Constellation.BEIDOU)
    orbit_radius_m: float = 2.66e7
    trajectory: TrajectoryKind = TrajectoryKind.CONSTANT_VELOCITY
    base_latitude_deg: float = 22.3
    base_longitude_deg: float = 114.2
    base_height_m: float = 60.0
    velocity_enu: tuple[float, float, float] = (5.0, 0.0, 0.0)
    waypoints_enu: tuple[tuple[float, float, float], ...] = (
        (0.0, 0.0, 0.0), (60.0, 10.0, 0.0), (100.0, 80.0, 1.0), (90.0, 160.0, 0.0))
    sigma_pseudorange_m: float = 1.0
    sigma_phase_m: float = 0.01
    sigma_doppler_mps: float = 0.4
    outlier_probability: float = 0.1
    outlier_magnitude_m: tuple[float, float] = (10.0, 50.0)
    outlier_burst_epochs: float = 2.0
    doppler_outlier_probability: float = 0.0
    doppler_outlier_mps: tuple[float, float] = (1.0, 5.0)
    slip_probability: float = 0.02
    slip_cycles_min: int = 20
    slip_cycles_max: int = 30
    slip_flagged_fraction: float = 0.0
    snr_floor_dbhz: float = 30.0
    snr_span_dbhz: float = 20.0
    snr_noise_db: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_epochs < 1:
            raise ValueError("duration_epochs must be >= 1")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.n_satellites < 1:
            raise ValueError("n_satellites must be >= 1")
        for name in ("outlier_probability", "doppler_outlier_probability",
                     "slip_probability", "slip_flagged_fraction"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        for name in ("sigma_pseudorange_m", "sigma_phase_m", "sigma_doppler_mps"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.slip_cycles_min < 1:
            raise ValueError("slip_cycles_min must be >= 1")
        if self.slip_cycles_max < self.slip_cycles_min:
            raise ValueError("slip_cycles_max must be >= slip_cycles_min")
        if self.outlier_burst_epochs < 1.0:
            raise ValueError("outlier_burst_epochs must be >= 1")


@dataclass(frozen=True)
class InjectionRecord:
    """One injected error: where, what, and how big."""

    epoch_index: int
    sat: SatelliteId
    kind: str  # "nlos" (m), "slip"/"slip-flagged" (cycles), "doppler" (m/s)
    magnitude: float


@dataclass
class _SimSatellite:
    sat: SatelliteId
    wavelength: float
    anchor: np.ndarray      # unit vector of the orbit position at mid-run
    cross: np.ndarray       # unit vector 90 degrees ahead in the orbit plane
    clock_bias0: float
    clock_drift: float
    phase_correction: float
    ambiguity: int = 0
    nlos_active: bool = False


def _truth_positions(config: ScenarioConfig, times: np.ndarray,
                     base_ecef: np.ndarray, rot_enu: np.ndarray) -> np.ndarray:
    """Per-epoch true receiver positions, ECEF."""
    if config.trajectory is TrajectoryKind.STATIC:
        return np.tile(base_ecef, (len(times), 1))
    if config.trajectory is TrajectoryKind.CONSTANT_VELOCITY:
        v_ecef = rot_enu.T @ np.asarray(config.velocity_enu, dtype=float)
        return base_ecef + np.outer(times, v_ecef)
    from scipy.interpolate import CubicSpline
    waypoints = np.asarray(config.waypoints_enu, dtype=float)
    if len(waypoints) < 2:
        raise ValueError("waypoint trajectory needs >= 2 waypoints")
    knots = np.linspace(times[0], times[-1] if len(times) > 1 else times[0] + 1.0,
                        len(waypoints))
    spline = CubicSpline(knots, waypoints, axis=0)
    return base_ecef + spline(times) @ rot_enu


def _place_satellites(config: ScenarioConfig, rng: np.random.Generator,
                      mid_position: np.ndarray) -> list[_SimSatellite]:
    """Spread satellites over the sky above `mid_position`, on circular orbits."""
    sats = []
    n = config.n_satellites
    consts = config.constellations
    prn_counter = {c: 0 for c in consts}
    radius = config.orbit_radius_m
    r_norm = float(np.linalg.norm(mid_position))
    rot = enu_rotation(ecef_to_geodetic(mid_position))
    for i in range(n):
        const = consts[i % len(consts)]
        prn_counter[const] += 1
        sid = SatelliteId(constellation=const, prn=prn_counter[const])
        # Stratified azimuth, spread elevations: keeps the geometry strong
        # at every seed while staying seed-deterministic.
        azimuth = 2.0 * math.pi * (i + rng.uniform(0.0, 0.6)) / n
        elevation = math.radians(25.0 + (55.0 * ((i * 0.618034) % 1.0))
                                 + rng.uniform(-3.0, 3.0))
        direction_enu = np.array([
            math.cos(elevation) * math.sin(azimuth),
            math.cos(elevation) * math.cos(azimuth),
            math.sin(elevation),
        ])
        direction = rot.T @ direction_enu
        # Intersect the sky ray with the orbit sphere.
        b = float(mid_position @ direction)
        s = -b + math.sqrt(b * b + radius * radius - r_norm * r_norm)
        anchor = (mid_position + s * direction) / radius
        # Random orbit plane through the anchor point.
        w = rng.normal(size=3)
        w -= (w @ anchor) * anchor
        normal = w / np.linalg.norm(w)
        cross = np.cross(normal, anchor)
        sats.append(_SimSatellite(
            sat=sid, wavelength=_WAVELENGTHS[const],
            anchor=anchor, cross=cross,
            clock_bias0=rng.uniform(-1e4, 1e4),
            clock_drift=rng.uniform(-0.01, 0.01),
            phase_correction=rng.uniform(-0.05, 0.05)))
    return sats


def generate(config: ScenarioConfig) -> tuple[Dataset, Trajectory, list[InjectionRecord]]:
    """Produce (dataset, ground-truth trajectory, injection log) for a scenario."""
    rng = np.random.Generator(np.random.Philox(config.seed))
    dt = 1.0 / config.rate_hz
    n_epochs = config.duration_epochs
    times = np.arange(n_epochs) * dt

    base = GeodeticPosition(
        latitude=math.radians(config.base_latitude_deg),
        longitude=math.radians(config.base_longitude_deg),
        height=config.base_height_m)
    base_ecef = geodetic_to_ecef(base)
    rot_enu = enu_rotation(base)
    positions = _truth_positions(config, times, base_ecef, rot_enu)

    # Receiver clock: smooth bias series plus per-constellation offsets.
    c0 = rng.uniform(-100.0, 100.0)
    c1 = rng.uniform(-1.0, 1.0)
    amp = rng.uniform(0.0, 5.0)
    ph0 = rng.uniform(0.0, 2.0 * math.pi)
    clock_base = c0 + c1 * times + amp * np.sin(2.0 * math.pi * times / 300.0 + ph0)
    const_offset = {c: rng.uniform(-50.0, 50.0) for c in config.constellations}

    mid = positions[len(positions) // 2]
    satellites = _place_satellites(config, rng, mid)
    omega = math.sqrt(MU_EARTH / config.orbit_radius_m ** 3)
    t_mid = times[len(times) // 2]

    for sim_sat in satellites:
        sim_sat.ambiguity = int(rng.integers(-1_000_000, 1_000_001))

    # Discrete average velocity / clock drift, backward-filled at the end,
    # so Doppler taken at epoch t reproduces (p_{t+1} - p_t)/dt exactly.
    if n_epochs > 1:
        v_avg = np.diff(positions, axis=0) / dt
        v_avg = np.vstack([v_avg, v_avg[-1]])
        drift_avg = np.diff(clock_base) / dt
        drift_avg = np.append(drift_avg, drift_avg[-1])
    else:
        v_avg = np.zeros((1, 3))
        drift_avg = np.zeros(1)

    noise_cfg = WeightingConfig(
        sigma_pseudorange=config.sigma_pseudorange_m,
        sigma_phase=config.sigma_phase_m,
        sigma_doppler=config.sigma_doppler_mps,
        elevation_mask=0.0)

    dataset: Dataset = []
    injections: list[InjectionRecord] = []
    truth_states: list[ReceiverState] = []

    for t in range(n_epochs):
        p_recv = positions[t]
        geo = ecef_to_geodetic(p_recv)
        time = EpochTime(index=t, seconds=float(times[t]))
        observations: list[Observation] = []
        sat_states: list[SatelliteState] = []

        for sim_sat in satellites:
            angle = omega * (times[t] - t_mid)
            p_sat = config.orbit_radius_m * (
                math.cos(angle) * sim_sat.anchor + math.sin(angle) * sim_sat.cross)
            v_sat = config.orbit_radius_m * omega * (
                -math.sin(angle) * sim_sat.anchor + math.cos(angle) * sim_sat.cross)
            clk_sat = sim_sat.clock_bias0 + sim_sat.clock_drift * times[t]

            elevation, azimuth = elevation_azimuth(p_recv, p_sat)
            tropo = tropo_delay_saastamoinen(elevation, geo.height)
            iono_l1 = iono_delay_klobuchar(elevation, azimuth, geo, time,
                                           DEFAULT_IONO_COEFFICIENTS)
            iono = scale_iono_to_wavelength(iono_l1, sim_sat.wavelength)
            snr = (config.snr_floor_dbhz + config.snr_span_dbhz * math.sin(elevation)
                   + rng.normal(0.0, config.snr_noise_db))
            snr = max(snr, 0.0)

            clock_recv = clock_base[t] + const_offset[sim_sat.sat.constellation]
            los = p_sat - p_recv
            rng_m = float(np.linalg.norm(los))
            u = los / rng_m

            def sigma(kind: str) -> float:
                return math.sqrt(measurement_variance(
                    max(elevation, 1e-3), snr, kind, noise_cfg)) if \
                    noise_cfg.sigma_base(kind) > 0.0 else 0.0

            pseudorange = (rng_m + clock_recv - clk_sat + iono + tropo
                           + rng.normal(0.0, 1.0) * sigma("pseudorange"))
            phase_m = (rng_m + clock_recv - clk_sat + iono + tropo
                       + sim_sat.phase_correction
                       + sim_sat.wavelength * sim_sat.ambiguity
                       + rng.normal(0.0, 1.0) * sigma("phase"))
            range_rate = (float(u @ (v_sat - v_avg[t])) + drift_avg[t]
                          - sim_sat.clock_drift)
            doppler = (-(range_rate) / sim_sat.wavelength
                       + rng.normal(0.0, 1.0) * sigma("doppler") / sim_sat.wavelength)

            lock = True
            # Error processes: NLOS pseudorange bias, Doppler bias, cycle slip.
            # NLOS arrives in bursts (obstructions persist across epochs): a
            # per-track two-state process whose stationary occupancy equals
            # outlier_probability and whose burst length is geometric with
            # the configured mean. Burst length 1 is a memoryless draw.
            fraction = config.outlier_probability
            burst = config.outlier_burst_epochs
            draw = rng.random()
            if burst <= 1.0 or fraction >= 1.0 or t == 0:
                sim_sat.nlos_active = draw < fraction
            elif sim_sat.nlos_active:
                sim_sat.nlos_active = draw >= 1.0 / burst
            else:
                sim_sat.nlos_active = draw < min(
                    1.0, fraction / (burst * (1.0 - fraction)))
            if sim_sat.nlos_active:
                magnitude = rng.uniform(*config.outlier_magnitude_m)
                pseudorange += magnitude
                injections.append(InjectionRecord(t, sim_sat.sat, "nlos", magnitude))
            if rng.random() < config.doppler_outlier_probability:
                magnitude = rng.uniform(*config.doppler_outlier_mps)
                doppler += magnitude / sim_sat.wavelength
                injections.append(InjectionRecord(t, sim_sat.sat, "doppler", magnitude))
            if t > 0 and rng.random() < config.slip_probability:
                cycles = int(rng.integers(config.slip_cycles_min,
                                          config.slip_cycles_max + 1))
                if rng.random() < 0.5:
                    cycles = -cycles
                flagged = rng.random() < config.slip_flagged_fraction
                sim_sat.ambiguity += cycles
                phase_m += sim_sat.wavelength * cycles
                if flagged:
                    lock = False
                injections.append(InjectionRecord(
                    t, sim_sat.sat, "slip-flagged" if flagged else "slip",
                    float(cycles)))

            observations.append(Observation(
                sat=sim_sat.sat,
                pseudorange=pseudorange,
                doppler=doppler,
                carrier_phase=phase_m / sim_sat.wavelength,
                snr=snr,
                wavelength=sim_sat.wavelength,
                lock_indicator=lock,
                phase_correction=sim_sat.phase_correction))
            sat_states.append(SatelliteState(
                sat=sim_sat.sat, position=p_sat, velocity=v_sat,
                clock_bias=clk_sat, clock_drift=sim_sat.clock_drift,
                iono_delay=iono, tropo_delay=tropo))

        dataset.append(Epoch(time=time, observations=tuple(observations),
                             satellites=tuple(sat_states)))
        truth_states.append(ReceiverState(
            epoch=time, position=p_recv.copy(),
            clock_bias={c: float(clock_base[t] + const_offset[c])
                        for c in config.constellations},
            velocity=v_avg[t].copy()))

    return dataset, Trajectory(states=truth_states), injections


def inject_cycle_slip(dataset: Dataset, sat: SatelliteId, epoch_index: int,
                      cycles: int, flagged: bool = False) -> Dataset:
    """Shift one satellite's phases by whole cycles from `epoch_index` onward.

    Returns a new dataset; the input is untouched. With flagged=False the
    lock flag stays set — the silent slip a robust kernel must absorb; with
    flagged=True the slip epoch is marked as loss-of-lock so the graph
    builder splits the track there.
    """
    if cycles == 0:
        raise ValueError("cycle slip must be a nonzero whole number of cycles")
    if not any(e.time.index == epoch_index
               and any(o.sat == sat for o in e.observations) for e in dataset):
        raise ValueError(f"satellite {sat} not observed at epoch {epoch_index}")
    out: Dataset = []
    for epoch in dataset:
        if epoch.time.index < epoch_index:
            out.append(epoch)
            continue
        observations = []
        for obs in epoch.observations:
            if obs.sat == sat and obs.carrier_phase is not None:
                changes = {"carrier_phase": obs.carrier_phase + cycles}
                if flagged and epoch.time.index == epoch_index:
                    changes["lock_indicator"] = False
                obs = replace(obs, **changes)
            observations.append(obs)
        out.append(Epoch(time=epoch.time, observations=tuple(observations),
                         satellites=epoch.satellites))
    return out
