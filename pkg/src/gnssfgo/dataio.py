"""Plain-text file formats: datasets, trajectories, injection logs, reports, configs.

Every format is line-oriented CSV-like text with a versioned header line so
files are self-identifying and future-proof. Floats are written with
``repr`` so read(write(x)) round-trips bit-exactly. Empty fields mean
"absent" (a measurement the receiver did not produce).
"""

from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np

from .eliminator import EliminatorKind
from .robust import RobustKernel
from .simulate import InjectionRecord
from .solver import (
    DatasetError,
    EstimatorMode,
    SolveReport,
    SolverConfig,
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

__all__ = [
    "DATASET_HEADER",
    "TRAJECTORY_HEADER",
    "INJECTION_HEADER",
    "REPORT_HEADER",
    "read_dataset",
    "write_dataset",
    "read_trajectory",
    "write_trajectory",
    "read_injections",
    "write_injections",
    "write_report",
    "read_solver_config",
    "write_solver_config",
]

DATASET_HEADER = "# gnss-dataset v1"
TRAJECTORY_HEADER = "# gnss-trajectory v1"
INJECTION_HEADER = "# gnss-injections v1"
REPORT_HEADER = "# gnss-report v1"

DATASET_COLUMNS = (
    "epoch_index,t_seconds,constellation,prn,pseudorange_m,doppler_hz,"
    "phase_cycles,wavelength_m,snr_dbhz,lock,sat_x_m,sat_y_m,sat_z_m,"
    "sat_vx_mps,sat_vy_mps,sat_vz_mps,sat_clk_m,sat_clkdrift_mps,"
    "iono_m,tropo_m,phase_corr_m"
)
N_DATASET_FIELDS = len(DATASET_COLUMNS.split(","))

TRAJECTORY_COLUMNS = (
    "epoch_index,t_seconds,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,clock_biases_m"
)
INJECTION_COLUMNS = "epoch_index,constellation,prn,kind,magnitude"


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _read_lines(path: str | os.PathLike, expected_header: str,
                error: type[Exception]) -> list[tuple[int, str]]:
    """Return (line_number, text) for data lines after checking the header."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = handle.read().splitlines()
    header = None
    rows = []
    for number, line in enumerate(raw, start=1):
        text = line.strip()
        if not text:
            continue
        if header is None:
            if not text.startswith("#"):
                raise error(f"{path}: missing '{expected_header}' header line")
            if text != expected_header:
                raise error(
                    f"{path}: unsupported format/version {text!r}, "
                    f"expected {expected_header!r}")
            header = text
            continue
        if text.startswith("#"):
            continue
        rows.append((number, text))
    if header is None:
        raise error(f"{path}: missing '{expected_header}' header line")
    return rows


class _FieldReader:
    """Typed field access for one CSV record with line-numbered errors."""

    def __init__(self, path, line_number: int, fields: list[str],
                 error: type[Exception]):
        self.path = path
        self.line_number = line_number
        self.fields = fields
        self.error = error

    def fail(self, message: str):
        raise self.error(f"{self.path}:{self.line_number}: {message}")

    def _convert(self, index: int, kind, name: str, allow_empty: bool):
        text = self.fields[index]
        if text == "":
            if allow_empty:
                return None
            self.fail(f"field {name!r} must not be empty")
        try:
            return kind(text)
        except ValueError:
            self.fail(f"field {name!r} has malformed value {text!r}")

    def integer(self, index: int, name: str) -> int:
        return self._convert(index, int, name, allow_empty=False)

    def number(self, index: int, name: str) -> float:
        return self._convert(index, float, name, allow_empty=False)

    def number_or_none(self, index: int, name: str) -> float | None:
        return self._convert(index, float, name, allow_empty=True)

    def number_or_nan(self, index: int, name: str) -> float:
        value = self._convert(index, float, name, allow_empty=True)
        return math.nan if value is None else value

    def constellation(self, index: int, name: str) -> Constellation:
        text = self.fields[index]
        try:
            return Constellation(text)
        except ValueError:
            self.fail(f"field {name!r} has unknown constellation {text!r}")

    def flag(self, index: int, name: str) -> bool:
        text = self.fields[index]
        if text not in ("0", "1"):
            self.fail(f"field {name!r} must be 0 or 1, got {text!r}")
        return text == "1"


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write one record per (epoch, satellite) in the pinned column order."""
    lines = [DATASET_HEADER, "# " + DATASET_COLUMNS]
    for epoch in dataset:
        for obs in epoch.observations:
            sat = epoch.satellite_for(obs.sat)
            if sat is None:
                raise ValueError(
                    f"epoch {epoch.time.index}: observation of {obs.sat} "
                    "has no matching satellite state")
            lines.append(",".join([
                str(epoch.time.index),
                repr(float(epoch.time.seconds)),
                obs.sat.constellation.value,
                str(obs.sat.prn),
                _fmt(obs.pseudorange),
                _fmt(obs.doppler),
                _fmt(obs.carrier_phase),
                repr(float(obs.wavelength)),
                repr(float(obs.snr)),
                "1" if obs.lock_indicator else "0",
                repr(float(sat.position[0])),
                repr(float(sat.position[1])),
                repr(float(sat.position[2])),
                repr(float(sat.velocity[0])),
                repr(float(sat.velocity[1])),
                repr(float(sat.velocity[2])),
                repr(float(sat.clock_bias)),
                repr(float(sat.clock_drift)),
                _fmt(sat.iono_delay),
                _fmt(sat.tropo_delay),
                repr(float(obs.phase_correction)),
            ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_dataset(path: str | os.PathLike, validate: bool = True) -> Dataset:
    """Parse a dataset file; malformed lines are reported with line numbers.

    With ``validate`` (the default), the assembled dataset is run through
    `validate_dataset` and fatal findings raise `DatasetError`.
    """
    rows = _read_lines(path, DATASET_HEADER, DatasetError)
    # Ordered (epoch_index -> (seconds, [(Observation, SatelliteState)])).
    epochs: dict[int, tuple[float, list]] = {}
    for number, text in rows:
        fields = text.split(",")
        reader = _FieldReader(path, number, fields, DatasetError)
        if len(fields) != N_DATASET_FIELDS:
            reader.fail(f"expected {N_DATASET_FIELDS} fields, got {len(fields)}")
        index = reader.integer(0, "epoch_index")
        seconds = reader.number(1, "t_seconds")
        constellation = reader.constellation(2, "constellation")
        prn = reader.integer(3, "prn")
        if prn <= 0:
            reader.fail(f"field 'prn' must be positive, got {prn}")
        sat_id = SatelliteId(constellation, prn)
        try:
            obs = Observation(
                sat=sat_id,
                pseudorange=reader.number_or_none(4, "pseudorange_m"),
                doppler=reader.number_or_none(5, "doppler_hz"),
                carrier_phase=reader.number_or_none(6, "phase_cycles"),
                wavelength=reader.number(7, "wavelength_m"),
                snr=reader.number(8, "snr_dbhz"),
                lock_indicator=reader.flag(9, "lock"),
                phase_correction=reader.number(20, "phase_corr_m"),
            )
        except ValueError as exc:
            reader.fail(str(exc))
        sat = SatelliteState(
            sat=sat_id,
            position=np.array([reader.number(10, "sat_x_m"),
                               reader.number(11, "sat_y_m"),
                               reader.number(12, "sat_z_m")]),
            velocity=np.array([reader.number(13, "sat_vx_mps"),
                               reader.number(14, "sat_vy_mps"),
                               reader.number(15, "sat_vz_mps")]),
            clock_bias=reader.number(16, "sat_clk_m"),
            clock_drift=reader.number(17, "sat_clkdrift_mps"),
            iono_delay=reader.number_or_nan(18, "iono_m"),
            tropo_delay=reader.number_or_nan(19, "tropo_m"),
        )
        if index in epochs:
            known_seconds, records = epochs[index]
            if known_seconds != seconds:
                reader.fail(
                    f"epoch {index} has conflicting t_seconds "
                    f"({known_seconds!r} vs {seconds!r})")
            records.append((obs, sat))
        else:
            epochs[index] = (seconds, [(obs, sat)])

    dataset = [
        Epoch(time=EpochTime(index=index, seconds=seconds),
              observations=tuple(o for o, _ in records),
              satellites=tuple(s for _, s in records))
        for index, (seconds, records) in sorted(epochs.items())
    ]
    if validate:
        report = validate_dataset(dataset)
        if not report.ok:
            fatal = "; ".join(f.message for f in report.fatals)
            raise DatasetError(f"{path}: invalid dataset: {fatal}")
    return dataset


def write_trajectory(trajectory: Trajectory, path: str | os.PathLike) -> None:
    lines = [TRAJECTORY_HEADER, "# " + TRAJECTORY_COLUMNS]
    for state in trajectory:
        if state.velocity is None:
            velocity_fields = ["", "", ""]
        else:
            velocity_fields = [repr(float(v)) for v in state.velocity]
        clocks = ";".join(
            f"{constellation.value}:{repr(float(bias))}"
            for constellation, bias in sorted(
                state.clock_bias.items(), key=lambda item: item[0].value))
        lines.append(",".join([
            str(state.epoch.index),
            repr(float(state.epoch.seconds)),
            repr(float(state.position[0])),
            repr(float(state.position[1])),
            repr(float(state.position[2])),
            *velocity_fields,
            clocks,
        ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_trajectory(path: str | os.PathLike) -> Trajectory:
    rows = _read_lines(path, TRAJECTORY_HEADER, ValueError)
    states = []
    for number, text in rows:
        fields = text.split(",")
        reader = _FieldReader(path, number, fields, ValueError)
        if len(fields) != 9:
            reader.fail(f"expected 9 fields, got {len(fields)}")
        index = reader.integer(0, "epoch_index")
        seconds = reader.number(1, "t_seconds")
        position = np.array([reader.number(2, "x_m"),
                             reader.number(3, "y_m"),
                             reader.number(4, "z_m")])
        velocity_fields = fields[5:8]
        if all(f == "" for f in velocity_fields):
            velocity = None
        else:
            velocity = np.array([reader.number(5, "vx_mps"),
                                 reader.number(6, "vy_mps"),
                                 reader.number(7, "vz_mps")])
        clocks: dict[Constellation, float] = {}
        if fields[8]:
            for pair in fields[8].split(";"):
                name, _, value = pair.partition(":")
                try:
                    clocks[Constellation(name)] = float(value)
                except ValueError:
                    reader.fail(f"malformed clock entry {pair!r}")
        states.append(ReceiverState(
            epoch=EpochTime(index=index, seconds=seconds),
            position=position,
            clock_bias=clocks,
            velocity=velocity,
        ))
    return Trajectory(states=states)


def write_injections(records: list[InjectionRecord],
                     path: str | os.PathLike) -> None:
    lines = [INJECTION_HEADER, "# " + INJECTION_COLUMNS]
    for record in records:
        lines.append(",".join([
            str(record.epoch_index),
            record.sat.constellation.value,
            str(record.sat.prn),
            record.kind,
            repr(float(record.magnitude)),
        ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_injections(path: str | os.PathLike) -> list[InjectionRecord]:
    rows = _read_lines(path, INJECTION_HEADER, ValueError)
    records = []
    for number, text in rows:
        fields = text.split(",")
        reader = _FieldReader(path, number, fields, ValueError)
        if len(fields) != 5:
            reader.fail(f"expected 5 fields, got {len(fields)}")
        records.append(InjectionRecord(
            epoch_index=reader.integer(0, "epoch_index"),
            sat=SatelliteId(reader.constellation(1, "constellation"),
                            reader.integer(2, "prn")),
            kind=fields[3],
            magnitude=reader.number(4, "magnitude"),
        ))
    return records


def write_report(report: SolveReport, path: str | os.PathLike) -> None:
    """Serialize a solve report as key=value lines plus per-window rows."""
    lines = [
        REPORT_HEADER,
        f"mode={report.mode.value}",
        f"epochs={len(report.states)}",
        f"iterations={report.iterations}",
        f"initial_cost={repr(report.initial_cost)}",
        f"final_cost={repr(report.final_cost)}",
        f"convergence_reason={report.convergence_reason}",
    ]
    for kind in sorted(report.cost_by_type):
        lines.append(f"cost_{kind}={repr(report.cost_by_type[kind])}")
    for warning in report.warnings:
        lines.append(f"warning={warning}")
    if report.window_diagnostics:
        lines.append("# window: sat,first_epoch,size,weight,residual_norm")
        for window in report.window_diagnostics:
            norm = float(np.linalg.norm(window.residual))
            lines.append("window," + ",".join([
                str(window.sat),
                str(window.first_epoch),
                str(window.size),
                repr(float(window.weight)),
                repr(norm),
            ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


_KERNEL_FACTORS = ("pseudorange", "doppler", "tdcp", "wcp")


def _config_entries(text: str, origin: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ValueError(f"{origin}:{number}: expected key=value, got {stripped!r}")
        entries[key.strip()] = value.strip()
    return entries


def read_solver_config(path: str | os.PathLike) -> SolverConfig:
    """Build a `SolverConfig` from a key=value text file.

    Recognized keys: mode, n_max, eliminator, eliminator_seed,
    max_iterations, gradient_tolerance, step_tolerance, cost_tolerance,
    initial_lambda,
    elevation_mask_deg, sigma_pseudorange, sigma_phase, sigma_doppler,
    snr_reference, snr_decade, snr_factor_max, and per-factor robust
    kernels as `<factor>_kernel` / `<factor>_k` for factor in
    pseudorange/doppler/tdcp/wcp. Unknown keys are rejected.
    """
    with open(path, "r", encoding="utf-8") as handle:
        entries = _config_entries(handle.read(), str(path))
    return solver_config_from_entries(entries, origin=str(path))


def solver_config_from_entries(entries: dict[str, str],
                               origin: str = "config") -> SolverConfig:
    entries = dict(entries)

    def take(key: str) -> str | None:
        return entries.pop(key, None)

    def take_typed(key: str, kind, current):
        raw = take(key)
        if raw is None:
            return current
        try:
            return kind(raw)
        except ValueError as exc:
            raise ValueError(f"{origin}: bad value for {key!r}: {exc}") from None

    defaults = SolverConfig()
    weighting = defaults.weighting

    mode = take("mode")
    mode = defaults.mode if mode is None else EstimatorMode.parse(mode)
    raw_eliminator = take("eliminator")
    if raw_eliminator is None:
        eliminator = defaults.eliminator_kind
    else:
        try:
            eliminator = EliminatorKind(raw_eliminator)
        except ValueError:
            names = ", ".join(k.value for k in EliminatorKind)
            raise ValueError(
                f"{origin}: unknown eliminator {raw_eliminator!r} "
                f"(expected one of: {names})") from None

    mask_deg = take_typed("elevation_mask_deg", float, None)
    weighting = replace(
        weighting,
        sigma_pseudorange=take_typed("sigma_pseudorange", float,
                                     weighting.sigma_pseudorange),
        sigma_phase=take_typed("sigma_phase", float, weighting.sigma_phase),
        sigma_doppler=take_typed("sigma_doppler", float,
                                 weighting.sigma_doppler),
        snr_reference=take_typed("snr_reference", float,
                                 weighting.snr_reference),
        snr_decade=take_typed("snr_decade", float, weighting.snr_decade),
        snr_factor_max=take_typed("snr_factor_max", float,
                                  weighting.snr_factor_max),
        elevation_mask=(weighting.elevation_mask if mask_deg is None
                        else math.radians(mask_deg)),
    )

    kernels: dict[str, RobustKernel] = {}
    for factor in _KERNEL_FACTORS:
        name = take(f"{factor}_kernel")
        k_raw = take(f"{factor}_k")
        if name is None and k_raw is None:
            continue
        if name is None:
            raise ValueError(
                f"{origin}: {factor}_k given without {factor}_kernel")
        try:
            kernels[factor] = RobustKernel.parse(
                name, 1.0 if k_raw is None else float(k_raw))
        except ValueError as exc:
            raise ValueError(f"{origin}: {exc}") from None

    config = SolverConfig(
        mode=mode,
        n_max=take_typed("n_max", int, defaults.n_max),
        eliminator_kind=eliminator,
        eliminator_seed=take_typed("eliminator_seed", int,
                                   defaults.eliminator_seed),
        kernels=kernels,
        max_iterations=take_typed("max_iterations", int,
                                  defaults.max_iterations),
        gradient_tolerance=take_typed("gradient_tolerance", float,
                                      defaults.gradient_tolerance),
        step_tolerance=take_typed("step_tolerance", float,
                                  defaults.step_tolerance),
        cost_tolerance=take_typed("cost_tolerance", float,
                                  defaults.cost_tolerance),
        initial_lambda=take_typed("initial_lambda", float,
                                  defaults.initial_lambda),
        weighting=weighting,
    )
    if entries:
        unknown = ", ".join(sorted(entries))
        raise ValueError(f"{origin}: unknown config keys: {unknown}")
    return config


def write_solver_config(config: SolverConfig, path: str | os.PathLike) -> None:
    weighting = config.weighting
    lines = [
        "# solver configuration",
        f"mode={config.mode.value}",
        f"n_max={config.n_max}",
        f"eliminator={config.eliminator_kind.value}",
        f"eliminator_seed={config.eliminator_seed}",
        f"max_iterations={config.max_iterations}",
        f"gradient_tolerance={repr(config.gradient_tolerance)}",
        f"step_tolerance={repr(config.step_tolerance)}",
        f"cost_tolerance={repr(config.cost_tolerance)}",
        f"initial_lambda={repr(config.initial_lambda)}",
        f"elevation_mask_deg={repr(math.degrees(weighting.elevation_mask))}",
        f"sigma_pseudorange={repr(weighting.sigma_pseudorange)}",
        f"sigma_phase={repr(weighting.sigma_phase)}",
        f"sigma_doppler={repr(weighting.sigma_doppler)}",
        f"snr_reference={repr(weighting.snr_reference)}",
        f"snr_decade={repr(weighting.snr_decade)}",
        f"snr_factor_max={repr(weighting.snr_factor_max)}",
    ]
    for factor in _KERNEL_FACTORS:
        kernel = config.kernels[factor]
        lines.append(f"{factor}_kernel={kernel.kind.value}")
        lines.append(f"{factor}_k={repr(kernel.k)}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
