"""Scenario generator: model exactness, determinism, injections, trajectories."""

import math

import numpy as np
import pytest

from gnssfgo.factors import correct_phase, correct_pseudorange, doppler_wls_velocity
from gnssfgo.geodesy import elevation_azimuth
from gnssfgo.simulate import (
    InjectionRecord,
    ScenarioConfig,
    TrajectoryKind,
    generate,
    inject_cycle_slip,
)

from conftest import noiseless_config


def model_residuals(dataset, truth, corrector):
    """Corrected-measurement minus range-plus-clock for every observation."""
    out = {}
    for i, epoch in enumerate(dataset):
        state = truth.states[i]
        for obs in epoch.observations:
            sat = epoch.satellite_for(obs.sat)
            rng = float(np.linalg.norm(sat.position - state.position))
            clock = state.clock_bias[obs.sat.constellation]
            out[(epoch.time.index, obs.sat)] = corrector(obs, sat) - (rng + clock)
    return out


class TestModelExactness:
    def test_pseudoranges_satisfy_the_model_exactly(self, noiseless_data):
        dataset, truth, injections = noiseless_data
        assert injections == []
        residuals = model_residuals(dataset, truth, correct_pseudorange)
        assert max(abs(v) for v in residuals.values()) < 1e-9

    def test_phases_differ_from_model_by_constant_whole_ambiguity(
            self, noiseless_data):
        dataset, truth, _ = noiseless_data
        residuals = model_residuals(dataset, truth, correct_phase)
        wavelengths = {obs.sat: obs.wavelength
                       for epoch in dataset for obs in epoch.observations}
        by_sat = {}
        for (_, sat), value in residuals.items():
            by_sat.setdefault(sat, []).append(value)
        for sat, values in by_sat.items():
            assert max(values) - min(values) < 1e-9  # constant along the track
            cycles = values[0] / wavelengths[sat]
            assert abs(cycles - round(cycles)) < 1e-6  # a whole ambiguity

    def test_doppler_velocity_reproduces_position_difference(
            self, noiseless_data):
        dataset, truth, _ = noiseless_data
        for i in (0, 20, 40):
            epoch = dataset[i]
            velocity, _, _ = doppler_wls_velocity(
                list(epoch.observations), list(epoch.satellites),
                truth.states[i].position)
            dt = dataset[i + 1].time.seconds - epoch.time.seconds
            delta = truth.states[i + 1].position - truth.states[i].position
            assert np.abs(velocity * dt - delta).max() < 1e-8

    def test_all_satellites_stay_above_the_elevation_mask(self, noiseless_data):
        dataset, truth, _ = noiseless_data
        for i, epoch in enumerate(dataset):
            for sat in epoch.satellites:
                elevation, _ = elevation_azimuth(truth.states[i].position,
                                                 sat.position)
                assert elevation > math.radians(10.0)

    def test_noiseless_observations_report_continuous_lock(self, noiseless_data):
        dataset, _, _ = noiseless_data
        assert all(obs.lock_indicator
                   for epoch in dataset for obs in epoch.observations)


class TestDeterminism:
    def test_equal_seeds_give_bit_identical_output(self):
        config = ScenarioConfig(seed=5, duration_epochs=20)
        data_a, truth_a, inj_a = generate(config)
        data_b, truth_b, inj_b = generate(config)
        assert inj_a == inj_b
        for sa, sb in zip(truth_a.states, truth_b.states):
            assert np.array_equal(sa.position, sb.position)
            assert sa.clock_bias == sb.clock_bias
        for ea, eb in zip(data_a, data_b):
            assert ea.observations == eb.observations
            for xa, xb in zip(ea.satellites, eb.satellites):
                assert np.array_equal(xa.position, xb.position)
                assert xa.clock_bias == xb.clock_bias

    def test_different_seeds_differ(self):
        data_a, _, _ = generate(ScenarioConfig(seed=5, duration_epochs=20))
        data_b, _, _ = generate(ScenarioConfig(seed=6, duration_epochs=20))
        assert data_a[0].observations != data_b[0].observations


class TestInjections:
    def test_outlier_records_match_the_pseudorange_bias_exactly(self):
        config = noiseless_config(seed=7, outlier_probability=0.25)
        dataset, truth, injections = generate(config)
        recorded = {(r.epoch_index, r.sat): r.magnitude
                    for r in injections if r.kind == "nlos"}
        assert recorded
        residuals = model_residuals(dataset, truth, correct_pseudorange)
        for key, value in residuals.items():
            if key in recorded:
                assert abs(value - recorded[key]) < 1e-6
                assert 10.0 <= recorded[key] <= 50.0
            else:
                assert abs(value) < 1e-6

    def test_slip_records_match_the_phase_jumps_exactly(self):
        config = noiseless_config(seed=7, slip_probability=0.08)
        dataset, truth, injections = generate(config)
        recorded = {(r.epoch_index, r.sat): r.magnitude
                    for r in injections if r.kind == "slip"}
        assert recorded
        residuals = model_residuals(dataset, truth, correct_phase)
        wavelengths = {obs.sat: obs.wavelength
                       for epoch in dataset for obs in epoch.observations}
        previous = {}
        for (index, sat), value in residuals.items():  # already in epoch order
            if sat in previous:
                jump = value - previous[sat]
                if (index, sat) in recorded:
                    cycles = recorded[(index, sat)]
                    assert 20.0 <= abs(cycles) <= 30.0
                    assert abs(jump - wavelengths[sat] * cycles) < 1e-6
                else:
                    assert abs(jump) < 1e-6
            previous[sat] = value

    def test_injection_counts_match_their_configured_rates(self):
        # 40 seeds x 60 epochs x 8 satellites; NLOS occupancy 0.1 and slip
        # rate 0.02/track/epoch give expectations 1920 and 378, checked
        # with generous five-sigma bands (burstiness inflates NLOS spread).
        nlos = slips = 0
        for seed in range(40):
            _, _, injections = generate(ScenarioConfig(seed=seed))
            nlos += sum(1 for r in injections if r.kind == "nlos")
            slips += sum(1 for r in injections if r.kind == "slip")
        assert 1500 < nlos < 2350
        assert 280 < slips < 480

    def test_flagged_fraction_marks_loss_of_lock(self):
        config = noiseless_config(seed=2, slip_probability=0.1,
                                  slip_flagged_fraction=1.0)
        dataset, _, injections = generate(config)
        flagged = [r for r in injections if r.kind == "slip-flagged"]
        assert flagged
        assert not any(r.kind == "slip" for r in injections)
        by_epoch = {e.time.index: e for e in dataset}
        for record in flagged:
            epoch = by_epoch[record.epoch_index]
            obs = next(o for o in epoch.observations if o.sat == record.sat)
            assert obs.lock_indicator is False


class TestTrajectories:
    def test_static_trajectory_never_moves(self):
        _, truth, _ = generate(noiseless_config(
            trajectory=TrajectoryKind.STATIC, duration_epochs=10))
        positions = truth.positions()
        assert np.abs(positions - positions[0]).max() == 0.0

    def test_constant_velocity_has_constant_steps(self):
        _, truth, _ = generate(noiseless_config(duration_epochs=10))
        positions = truth.positions()
        steps = np.diff(positions, axis=0)
        assert np.abs(steps - steps[0]).max() < 1e-9
        assert np.linalg.norm(steps[0]) == pytest.approx(5.0, abs=1e-9)

    def test_waypoint_spline_hits_first_and_last_waypoints(self):
        config = noiseless_config(trajectory=TrajectoryKind.WAYPOINT_SPLINE,
                                  duration_epochs=30)
        _, truth, _ = generate(config)
        positions = truth.positions()
        straight = generate(noiseless_config(duration_epochs=1,
                                             trajectory=TrajectoryKind.STATIC))
        base = straight[1].states[0].position
        from gnssfgo.geodesy import ecef_to_enu
        enu = ecef_to_enu(positions, base)
        assert np.abs(enu[0] - np.asarray(config.waypoints_enu[0])).max() < 1e-6
        assert np.abs(enu[-1] - np.asarray(config.waypoints_enu[-1])).max() < 1e-6

    def test_trajectory_kind_parse(self):
        assert TrajectoryKind.parse("static") is TrajectoryKind.STATIC
        with pytest.raises(ValueError, match="unknown trajectory"):
            TrajectoryKind.parse("figure-eight")


class TestConfigValidation:
    @pytest.mark.parametrize("overrides", [
        dict(duration_epochs=0),
        dict(rate_hz=0.0),
        dict(n_satellites=0),
        dict(outlier_probability=1.5),
        dict(slip_probability=-0.1),
        dict(sigma_pseudorange_m=-1.0),
        dict(slip_cycles_min=0),
        dict(slip_cycles_min=30, slip_cycles_max=20),
        dict(outlier_burst_epochs=0.5),
    ])
    def test_invalid_configs_are_rejected(self, overrides):
        with pytest.raises(ValueError):
            ScenarioConfig(**overrides)


class TestInjectCycleSlip:
    def test_shifts_subsequent_phases_by_whole_cycles(self, noiseless_data):
        dataset, _, _ = noiseless_data
        sat = dataset[0].observations[0].sat
        shifted = inject_cycle_slip(dataset, sat, 30, -3)
        for before, after in zip(dataset, shifted):
            for ob, oa in zip(before.observations, after.observations):
                if oa.sat == sat and before.time.index >= 30:
                    assert oa.carrier_phase == ob.carrier_phase - 3
                else:
                    assert oa.carrier_phase == ob.carrier_phase

    def test_original_dataset_is_untouched(self, noiseless_data):
        dataset, _, _ = noiseless_data
        sat = dataset[0].observations[0].sat
        before = [o.carrier_phase for e in dataset for o in e.observations]
        inject_cycle_slip(dataset, sat, 10, 5, flagged=True)
        after = [o.carrier_phase for e in dataset for o in e.observations]
        assert before == after

    def test_zero_cycles_is_rejected(self, noiseless_data):
        dataset, _, _ = noiseless_data
        sat = dataset[0].observations[0].sat
        with pytest.raises(ValueError, match="nonzero"):
            inject_cycle_slip(dataset, sat, 10, 0)

    def test_unobserved_satellite_is_rejected(self, noiseless_data):
        dataset, _, _ = noiseless_data
        from gnssfgo.types import Constellation, SatelliteId
        ghost = SatelliteId(Constellation.GALILEO, 99)
        with pytest.raises(ValueError, match="not observed"):
            inject_cycle_slip(dataset, ghost, 10, 5)

    def test_record_shape(self):
        record = InjectionRecord(epoch_index=3,
                                 sat=None, kind="nlos", magnitude=12.0)
        assert record.kind == "nlos"
