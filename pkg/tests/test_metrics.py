"""Trajectory error statistics in the local east-north-up frame."""

import numpy as np
import pytest

from gnssfgo.geodesy import GeodeticPosition, ecef_to_geodetic, enu_rotation, geodetic_to_ecef
from gnssfgo.metrics import ErrorMetrics, evaluate
from gnssfgo.types import EpochTime, ReceiverState, Trajectory

import math

ORIGIN = geodetic_to_ecef(GeodeticPosition(math.radians(22.3),
                                           math.radians(114.2), 60.0))
ENU = enu_rotation(ecef_to_geodetic(ORIGIN))


def trajectory(offsets_enu, start_index=0):
    """Truth-anchored trajectory displaced by per-epoch ENU offsets."""
    states = []
    for i, offset in enumerate(offsets_enu):
        position = ORIGIN + ENU.T @ np.asarray(offset, dtype=float)
        states.append(ReceiverState(epoch=EpochTime(start_index + i,
                                                    float(start_index + i)),
                                    position=position))
    return Trajectory(states=states)


class TestEvaluate:
    def test_identical_trajectories_give_zero_errors(self):
        truth = trajectory([(0, 0, 0)] * 10)
        metrics = evaluate(truth, truth)
        assert metrics.mean_2d == 0.0
        assert metrics.max_3d == 0.0
        assert metrics.std_2d == 0.0

    def test_constant_east_offset(self):
        truth = trajectory([(0, 0, 0)] * 10)
        shifted = trajectory([(3.0, 0, 0)] * 10)
        metrics = evaluate(shifted, truth)
        assert metrics.mean_2d == pytest.approx(3.0, abs=1e-9)
        assert metrics.mean_3d == pytest.approx(3.0, abs=1e-9)
        assert metrics.std_2d == pytest.approx(0.0, abs=1e-9)
        assert np.abs(metrics.east - 3.0).max() < 1e-9
        assert np.abs(metrics.north).max() < 1e-9
        assert np.abs(metrics.up).max() < 1e-9

    def test_single_bad_epoch_shows_in_max_and_mean(self):
        truth = trajectory([(0, 0, 0)] * 10)
        offsets = [(0.0, 0.0, 0.0)] * 10
        offsets[4] = (3.0, 4.0, 0.0)
        metrics = evaluate(trajectory(offsets), truth)
        assert metrics.max_2d == pytest.approx(5.0, abs=1e-9)
        assert metrics.mean_2d == pytest.approx(0.5, abs=1e-9)

    def test_vertical_error_only_affects_3d(self):
        truth = trajectory([(0, 0, 0)] * 5)
        metrics = evaluate(trajectory([(0, 0, 2.0)] * 5), truth)
        assert metrics.mean_2d == pytest.approx(0.0, abs=1e-9)
        assert metrics.mean_3d == pytest.approx(2.0, abs=1e-9)

    def test_population_std_convention(self):
        truth = trajectory([(0, 0, 0)] * 2)
        metrics = evaluate(trajectory([(1.0, 0, 0), (3.0, 0, 0)]), truth)
        assert metrics.mean_2d == pytest.approx(2.0, abs=1e-9)
        assert metrics.std_2d == pytest.approx(1.0, abs=1e-9)  # not ddof=1

    def test_only_shared_epochs_are_compared(self):
        truth = trajectory([(0, 0, 0)] * 10)
        estimate = trajectory([(1.0, 0, 0)] * 4, start_index=8)
        metrics = evaluate(estimate, truth)
        assert list(metrics.epoch_indices) == [8, 9]
        assert metrics.east.size == 2

    def test_disjoint_trajectories_raise(self):
        truth = trajectory([(0, 0, 0)] * 3)
        estimate = trajectory([(0, 0, 0)] * 3, start_index=50)
        with pytest.raises(ValueError, match="share no epochs"):
            evaluate(estimate, truth)

    def test_table_lists_all_six_statistics(self):
        truth = trajectory([(0, 0, 0)] * 4)
        metrics = evaluate(trajectory([(3.0, 0, 0)] * 4), truth)
        table = metrics.table()
        assert "MEAN 2D error: 3.0000 m" in table
        assert "MAX  3D error: 3.0000 m" in table
        assert len(table.splitlines()) == 6

    def test_horizontal_series_property(self):
        truth = trajectory([(0, 0, 0)] * 3)
        metrics = evaluate(trajectory([(3.0, 4.0, 1.0)] * 3), truth)
        assert np.abs(metrics.horizontal - 5.0).max() < 1e-9

    def test_metrics_type_is_frozen(self):
        truth = trajectory([(0, 0, 0)] * 3)
        metrics = evaluate(truth, truth)
        assert isinstance(metrics, ErrorMetrics)
        with pytest.raises(Exception):
            metrics.mean_2d = 1.0
