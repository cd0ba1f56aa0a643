"""Residuals, Jacobians, and variance models for every measurement factor.

All factors follow one convention: residual = corrected measurement minus
the model h(state), and Jacobians are taken with respect to the per-epoch
unknowns (position x, y, z in ECEF meters; receiver clock bias in meters).
Measurement corrections (satellite clock, ionosphere, troposphere, phase
correction) are applied on the measurement side so the model stays pure
geometry plus receiver clock.

Factor kinds:

* pseudorange — one epoch, scalar, model ||p_sat - p_recv|| + clock.
* Doppler velocity — consecutive epochs, 3-vector, ties the position
  difference to a velocity pre-estimated from Doppler by WLS.
* time-differenced carrier phase — consecutive epochs, scalar, ambiguity
  cancelled by differencing.
* windowed carrier phase — N consecutive epochs of one satellite, the
  shared ambiguity removed by an eliminator matrix, residual whitened by
  the propagated window covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .eliminator import EliminatorKind, EliminatorMatrix, build_eliminator
from .types import Constellation, Observation, ReceiverState, SatelliteId, SatelliteState

__all__ = [
    "WeightingConfig",
    "measurement_variance",
    "correct_pseudorange",
    "correct_phase",
    "PseudorangeFactor",
    "pseudorange_residual",
    "DopplerVelocityFactor",
    "doppler_wls_velocity",
    "doppler_velocity_residual",
    "TdcpFactor",
    "tdcp_residual",
    "PhaseWindow",
    "build_phase_window",
    "wcp_residual",
    "InsufficientObservations",
]


class InsufficientObservations(ValueError):
    """Too few or too poorly conditioned measurements for a local solve."""


@dataclass(frozen=True)
class WeightingConfig:
    """Elevation/SNR variance model parameters.

    sigma^2 = sigma_base^2 * (1/sin^2 el) * clamp(10^((snr_ref - snr)/snr_decade), 1, snr_factor_max)
    """

    sigma_pseudorange: float = 1.0  # m
    sigma_phase: float = 0.01  # m
    sigma_doppler: float = 0.1  # m/s range-rate
    snr_reference: float = 45.0  # dB-Hz at which the SNR factor is 1
    snr_decade: float = 30.0  # dB-Hz per factor-of-10 variance growth
    snr_factor_max: float = 100.0
    elevation_mask: float = math.radians(10.0)

    def sigma_base(self, kind: str) -> float:
        try:
            return {"pseudorange": self.sigma_pseudorange,
                    "phase": self.sigma_phase,
                    "doppler": self.sigma_doppler}[kind]
        except KeyError:
            raise ValueError(f"unknown measurement kind {kind!r}") from None


def measurement_variance(elevation: float, snr: float, kind: str,
                         config: WeightingConfig = WeightingConfig()) -> float:
    """Elevation/SNR-dependent measurement variance (m^2 or (m/s)^2)."""
    if elevation <= config.elevation_mask:
        raise ValueError(
            f"elevation {elevation:.4f} rad at or below mask {config.elevation_mask:.4f}")
    base = config.sigma_base(kind)
    snr_factor = 10.0 ** ((config.snr_reference - snr) / config.snr_decade)
    snr_factor = min(max(snr_factor, 1.0), config.snr_factor_max)
    return base * base * snr_factor / math.sin(elevation) ** 2


def _resolve_atmosphere(value: float | None, carried: float, label: str) -> float:
    delay = carried if value is None else value
    if not math.isfinite(delay):
        raise ValueError(
            f"{label} delay unresolved (NaN) — compute it from the models first")
    return delay


def correct_pseudorange(obs: Observation, sat: SatelliteState,
                        iono: float | None = None,
                        tropo: float | None = None) -> float:
    """Pseudorange with satellite clock added back and atmosphere removed.

    Returns rho + sat_clock - iono - tropo (all meters), which models
    ||p_sat - p_recv|| + receiver_clock at the true state. Explicit iono /
    tropo arguments override the delays carried on the satellite state.
    """
    if obs.pseudorange is None:
        raise ValueError(f"observation {obs.sat} has no pseudorange")
    if obs.sat != sat.sat:
        raise ValueError(f"observation {obs.sat} does not match state {sat.sat}")
    iono = _resolve_atmosphere(iono, sat.iono_delay, "ionosphere")
    tropo = _resolve_atmosphere(tropo, sat.tropo_delay, "troposphere")
    return obs.pseudorange + sat.clock_bias - iono - tropo


def correct_phase(obs: Observation, sat: SatelliteState,
                  iono: float | None = None,
                  tropo: float | None = None) -> float:
    """Carrier phase in meters with all non-geometric terms removed.

    Returns wavelength*phase + sat_clock - iono - tropo - phase_correction,
    which models ||p_sat - p_recv|| + receiver_clock + wavelength*ambiguity.
    The ionosphere enters phase with the same sign convention as the
    pseudorange here; the simulator generates it the same way.
    """
    if obs.carrier_phase is None:
        raise ValueError(f"observation {obs.sat} has no carrier phase")
    if obs.sat != sat.sat:
        raise ValueError(f"observation {obs.sat} does not match state {sat.sat}")
    iono = _resolve_atmosphere(iono, sat.iono_delay, "ionosphere")
    tropo = _resolve_atmosphere(tropo, sat.tropo_delay, "troposphere")
    return (obs.wavelength * obs.carrier_phase + sat.clock_bias
            - iono - tropo - obs.phase_correction)


def _unit_los(receiver: np.ndarray, satellite: np.ndarray) -> tuple[np.ndarray, float]:
    los = satellite - receiver
    rng = float(np.linalg.norm(los))
    if rng <= 0.0:
        raise ValueError("receiver and satellite positions coincide")
    return los / rng, rng


# --------------------------------------------------------------------------
# Pseudorange


@dataclass(frozen=True)
class PseudorangeFactor:
    """One corrected pseudorange at one epoch."""

    epoch_index: int
    sat: SatelliteId
    corrected_pseudorange: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0.0):
            raise ValueError(f"variance must be positive, got {self.variance}")


def pseudorange_residual(state: ReceiverState, sat: SatelliteState,
                         factor: PseudorangeFactor) -> tuple[float, np.ndarray]:
    """Raw residual (m) and 1x4 Jacobian w.r.t. (position, clock bias).

    residual = corrected - (||p_sat - p_recv|| + clock); the Jacobian row is
    (unit line-of-sight toward the satellite, -1).
    """
    u, rng = _unit_los(state.position, sat.position)
    clock = state.clock_bias[factor.sat.constellation]
    residual = factor.corrected_pseudorange - (rng + clock)
    jac = np.empty(4)
    jac[:3] = u
    jac[3] = -1.0
    return residual, jac


# --------------------------------------------------------------------------
# Doppler velocity


@dataclass(frozen=True)
class DopplerVelocityFactor:
    """Velocity measured from epoch-t Doppler, constraining p_{t+1} - p_t."""

    epoch_index: int
    measured_velocity: np.ndarray
    dt: float
    covariance: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.measured_velocity, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "measured_velocity", v)
        object.__setattr__(self, "covariance", cov)
        if v.shape != (3,):
            raise ValueError(f"measured velocity must be a 3-vector, got {v.shape}")
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if cov.shape != (3, 3) or np.abs(cov - cov.T).max() > 1e-12:
            raise ValueError("covariance must be symmetric 3x3")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None


def doppler_wls_velocity(
    observations: list[Observation],
    sats: list[SatelliteState],
    receiver_position: np.ndarray,
    config: WeightingConfig = WeightingConfig(),
    min_observations: int | None = None,
) -> tuple[np.ndarray, dict[Constellation, float], np.ndarray]:
    """Receiver velocity and per-constellation clock drift from Doppler WLS.

    Solves -wavelength*doppler = u·(v_sat - v_recv) + drift_recv - drift_sat
    for (v_recv, drift per constellation), weighting by the elevation/SNR
    Doppler variance. Returns (velocity, drift dict, 3x3 velocity covariance
    from the unit-variance inverse normal matrix).

    Raises InsufficientObservations when fewer than 3 + number of
    constellations usable Dopplers remain (or `min_observations` if given),
    or when the geometry is too ill-conditioned (condition number > 1e8).
    """
    from .geodesy import elevation_azimuth  # local import to avoid cycle

    receiver_position = np.asarray(receiver_position, dtype=float)
    rows, rhs, weights, constellations = [], [], [], []
    for obs, sat in zip(observations, sats):
        if obs.doppler is None or obs.sat != sat.sat:
            continue
        elevation, _ = elevation_azimuth(receiver_position, sat.position)
        if elevation <= config.elevation_mask:
            continue
        u, _ = _unit_los(receiver_position, sat.position)
        range_rate = -obs.wavelength * obs.doppler
        rhs.append(range_rate - float(u @ sat.velocity) + sat.clock_drift)
        rows.append(-u)
        weights.append(1.0 / measurement_variance(elevation, obs.snr, "doppler", config))
        constellations.append(obs.sat.constellation)

    unique_consts = sorted(set(constellations), key=lambda c: c.value)
    n_params = 3 + len(unique_consts)
    needed = max(n_params, 4) if min_observations is None else min_observations
    if len(rows) < needed:
        raise InsufficientObservations(
            f"{len(rows)} usable Doppler measurements, need >= {needed}")

    a = np.zeros((len(rows), n_params))
    for i, (row, const) in enumerate(zip(rows, constellations)):
        a[i, :3] = row
        a[i, 3 + unique_consts.index(const)] = 1.0
    w = np.asarray(weights)
    z = np.asarray(rhs)

    aw = a * w[:, None]
    normal = a.T @ aw
    if np.linalg.cond(normal) > 1e8:
        raise InsufficientObservations("Doppler geometry too ill-conditioned")
    solution = np.linalg.solve(normal, aw.T @ z)
    covariance = np.linalg.inv(normal)[:3, :3]
    drift = {const: float(solution[3 + i]) for i, const in enumerate(unique_consts)}
    return solution[:3], drift, covariance


def doppler_velocity_residual(
    state_t: ReceiverState, state_t1: ReceiverState,
    factor: DopplerVelocityFactor,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw 3-vector residual and 3x8 Jacobian w.r.t. both epochs' unknowns.

    residual = v_measured - (p_{t+1} - p_t)/dt; clock biases do not enter.
    """
    residual = factor.measured_velocity - (state_t1.position - state_t.position) / factor.dt
    jac = np.zeros((3, 8))
    jac[:, :3] = np.eye(3) / factor.dt
    jac[:, 4:7] = -np.eye(3) / factor.dt
    return residual, jac


# --------------------------------------------------------------------------
# Time-differenced carrier phase


@dataclass(frozen=True)
class TdcpFactor:
    """Corrected phase difference between consecutive epochs, one satellite."""

    epoch_index: int  # first epoch t of the pair (t, t+1)
    sat: SatelliteId
    delta_phase: float  # corrected phase(t+1) - corrected phase(t), meters
    variance: float  # sum of the two per-epoch phase variances

    def __post_init__(self):
        if not (self.variance > 0.0):
            raise ValueError(f"variance must be positive, got {self.variance}")


def tdcp_residual(
    state_t: ReceiverState, state_t1: ReceiverState,
    sat_t: SatelliteState, sat_t1: SatelliteState,
    factor: TdcpFactor,
) -> tuple[float, np.ndarray]:
    """Raw residual (m) and 1x8 Jacobian w.r.t. (p_t, clk_t, p_{t+1}, clk_{t+1}).

    residual = delta_phase - [(r_{t+1} + clk_{t+1}) - (r_t + clk_t)], the
    range-plus-clock difference taken in the same later-minus-earlier order
    as the measurement difference.
    """
    const = factor.sat.constellation
    u_t, rng_t = _unit_los(state_t.position, sat_t.position)
    u_t1, rng_t1 = _unit_los(state_t1.position, sat_t1.position)
    model = (rng_t1 + state_t1.clock_bias[const]) - (rng_t + state_t.clock_bias[const])
    residual = factor.delta_phase - model
    jac = np.empty(8)
    jac[:3] = -u_t
    jac[3] = 1.0
    jac[4:7] = u_t1
    jac[7] = -1.0
    return residual, jac


# --------------------------------------------------------------------------
# Windowed carrier phase


@dataclass(frozen=True)
class PhaseWindow:
    """N consecutive corrected phases of one satellite, ambiguity eliminated.

    `whitener` maps the raw length-N vector (phase - model) to the whitened
    residual: it is W = chol(Sigma)^-1 E for the reduced eliminator, or the
    eigen-whitened form discarding the single zero mode for square
    eliminators; Sigma = E diag(variances) E^T is the propagated window
    covariance.
    """

    sat: SatelliteId
    epoch_indices: tuple[int, ...]
    phases: np.ndarray  # corrected phases, meters
    variances: np.ndarray
    eliminator: EliminatorMatrix
    sigma: np.ndarray = field(repr=False)
    whitener: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = len(self.epoch_indices)
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))
        if n < 2:
            raise ValueError(f"window needs >= 2 epochs, got {n}")
        if any(b - a != 1 for a, b in zip(self.epoch_indices, self.epoch_indices[1:])):
            raise ValueError(f"window epochs not contiguous: {self.epoch_indices}")
        if self.phases.shape != (n,) or self.variances.shape != (n,):
            raise ValueError("phases/variances must match the window length")
        if self.eliminator.cols != n:
            raise ValueError(
                f"eliminator spans {self.eliminator.cols} epochs, window has {n}")

    @property
    def size(self) -> int:
        return len(self.epoch_indices)


def build_phase_window(
    sat: SatelliteId,
    epoch_indices: tuple[int, ...],
    phases: np.ndarray,
    variances: np.ndarray,
    eliminator_kind: EliminatorKind = EliminatorKind.ORTHONORMAL_BASIS_T,
    seed: int = 0,
) -> PhaseWindow:
    """Assemble a phase window: eliminator, propagated covariance, whitener.

    The reduced orthonormal eliminator yields a positive-definite covariance
    handled by Cholesky; square eliminators (dense random-unitary, or the
    sparse difference matrix) yield a singular covariance whose single zero
    eigenvalue — the eliminated ambiguity direction — is discarded during
    eigen-whitening. Either way the whitened residual has N-1 components
    and the weighted cost is invariant to the eliminator choice.
    """
    phases = np.asarray(phases, dtype=float)
    variances = np.asarray(variances, dtype=float)
    n = len(epoch_indices)
    if n < 2:
        raise ValueError(f"window needs >= 2 epochs, got {n}")
    if np.any(variances <= 0.0):
        raise ValueError("all window variances must be positive")
    elim = build_eliminator(eliminator_kind, n, seed)
    e = elim.entries
    sigma = e @ np.diag(variances) @ e.T
    sigma = 0.5 * (sigma + sigma.T)
    if eliminator_kind is EliminatorKind.ORTHONORMAL_BASIS_T:
        chol = scipy.linalg.cholesky(sigma, lower=True)
        whitener = scipy.linalg.solve_triangular(chol, e, lower=True)
    else:
        eigenvalues, eigenvectors = np.linalg.eigh(sigma)
        keep = eigenvalues > eigenvalues[-1] * 1e-12
        if keep.sum() != n - 1:
            raise ValueError(
                f"window covariance rank {keep.sum()}, expected {n - 1}")
        whitener = (eigenvectors[:, keep] / np.sqrt(eigenvalues[keep])).T @ e
    return PhaseWindow(sat=sat, epoch_indices=tuple(int(i) for i in epoch_indices),
                       phases=phases, variances=variances, eliminator=elim,
                       sigma=sigma, whitener=whitener)


def wcp_residual(
    window: PhaseWindow,
    states: list[ReceiverState],
    sats: list[SatelliteState],
) -> tuple[np.ndarray, np.ndarray]:
    """Whitened window residual and its Jacobian blocks.

    Returns (residual of length N-1, blocks of shape (N-1, N, 4)) where
    blocks[:, j] is the Jacobian w.r.t. epoch j's (position, clock bias).
    The raw per-epoch misfit is phase_j - (range_j + clock_j); the whitener
    eliminates the shared ambiguity and normalizes the covariance.
    """
    n = window.size
    if len(states) != n or len(sats) != n:
        raise ValueError(
            f"window spans {n} epochs but got {len(states)} states, {len(sats)} satellites")
    const = window.sat.constellation
    raw = np.empty(n)
    los = np.empty((n, 3))
    for j, (state, sat) in enumerate(zip(states, sats)):
        u, rng = _unit_los(state.position, sat.position)
        raw[j] = window.phases[j] - (rng + state.clock_bias[const])
        los[j] = u
    residual = window.whitener @ raw
    # d(raw_j)/d(p_j, clk_j) = (+u_j, -1); whitener column j carries it.
    blocks = np.zeros((window.whitener.shape[0], n, 4))
    blocks[:, :, :3] = window.whitener[:, :, None] * los[None, :, :]
    blocks[:, :, 3] = -window.whitener
    return residual, blocks
