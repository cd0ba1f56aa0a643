"""Graph construction, single-epoch WLS, and the batch solve."""

import dataclasses

import numpy as np
import pytest

from gnssfgo.eliminator import EliminatorKind
from gnssfgo.factors import InsufficientObservations
from gnssfgo.robust import KernelKind, RobustKernel
from gnssfgo.simulate import generate, inject_cycle_slip
from gnssfgo.solver import (
    EstimatorMode,
    SolveReport,
    SolverConfig,
    SolverError,
    build_graph,
    chain_windows,
    solve,
    solve_dataset,
    solve_wls_epoch,
)
from gnssfgo.types import Constellation, Epoch

from conftest import noiseless_config


class TestChainWindows:
    def test_ten_epochs_max_six_gives_two_overlapping_tiles(self):
        assert chain_windows(10, 6) == [(0, 5), (5, 9)]

    def test_max_two_yields_every_consecutive_pair(self):
        assert chain_windows(5, 2) == [(0, 1), (1, 2), (2, 3), (3, 4)]

    def test_exact_fit_is_a_single_window(self):
        assert chain_windows(6, 6) == [(0, 5)]

    def test_every_consecutive_pair_is_covered(self):
        for length in range(2, 40):
            for n_max in (2, 3, 6, 9, 40):
                tiles = chain_windows(length, n_max)
                covered = set()
                for start, end in tiles:
                    assert 2 <= end - start + 1 <= n_max
                    covered.update(range(start, end))
                assert covered == set(range(length - 1))

    def test_track_shorter_than_two_yields_nothing(self):
        assert chain_windows(1, 6) == []
        assert chain_windows(0, 6) == []

    def test_invalid_n_max_is_rejected(self):
        with pytest.raises(ValueError):
            chain_windows(10, 1)


class TestWlsEpoch:
    def test_full_epoch_recovers_truth(self, noiseless_data):
        dataset, truth, _ = noiseless_data
        epoch = dataset[0]
        state, covariance = solve_wls_epoch(
            list(epoch.observations), list(epoch.satellites), epoch)
        assert np.linalg.norm(state.position - truth.states[0].position) < 1e-6
        for const, bias in truth.states[0].clock_bias.items():
            assert abs(state.clock_bias[const] - bias) < 1e-6
        assert covariance.shape[0] == covariance.shape[1] == 3 + len(
            state.clock_bias)

    def test_four_satellites_single_constellation_solve_exactly(
            self, noiseless_data):
        dataset, truth, _ = noiseless_data
        epoch = dataset[0]
        const = epoch.observations[0].sat.constellation
        subset = [o for o in epoch.observations
                  if o.sat.constellation is const][:4]
        assert len(subset) == 4
        state, _ = solve_wls_epoch(subset, list(epoch.satellites), epoch)
        assert np.linalg.norm(state.position - truth.states[0].position) < 1e-6

    def test_three_satellites_raise(self, noiseless_data):
        dataset, _, _ = noiseless_data
        epoch = dataset[0]
        const = epoch.observations[0].sat.constellation
        subset = [o for o in epoch.observations
                  if o.sat.constellation is const][:3]
        with pytest.raises(InsufficientObservations):
            solve_wls_epoch(subset, list(epoch.satellites), epoch)


class TestGraphStructure:
    def ten_epoch_data(self):
        return generate(noiseless_config(duration_epochs=10))

    def test_pair_windows_cover_consecutive_epochs(self):
        dataset, _, _ = self.ten_epoch_data()
        graph = build_graph(dataset, SolverConfig(mode=EstimatorMode.PSR_DOP_TDCP))
        sat = dataset[0].observations[0].sat
        pairs = sorted(w.window.epoch_indices for w in graph.windows
                       if w.window.sat == sat)
        assert pairs == [(i, i + 1) for i in range(9)]
        assert all(w.kind == "tdcp" for w in graph.windows)

    def test_flagged_slip_removes_the_broken_pair(self):
        dataset, _, _ = self.ten_epoch_data()
        sat = dataset[0].observations[0].sat
        slipped = inject_cycle_slip(dataset, sat, 4, 25, flagged=True)
        graph = build_graph(slipped, SolverConfig(mode=EstimatorMode.PSR_DOP_TDCP))
        pairs = sorted(w.window.epoch_indices for w in graph.windows
                       if w.window.sat == sat)
        assert (3, 4) not in pairs
        assert (2, 3) in pairs and (4, 5) in pairs
        assert len(pairs) == 8

    def test_flagged_slip_splits_window_tiling(self):
        dataset, _, _ = self.ten_epoch_data()
        sat = dataset[0].observations[0].sat
        slipped = inject_cycle_slip(dataset, sat, 4, 25, flagged=True)
        graph = build_graph(slipped, SolverConfig(mode=EstimatorMode.PSR_DOP_WCP,
                                                  n_max=6))
        windows = sorted((w.window.epoch_indices for w in graph.windows
                          if w.window.sat == sat))
        assert windows == [tuple(range(0, 4)), tuple(range(4, 10))]

    def test_window_sizes_respect_n_max(self, urban_data):
        dataset, _, _ = urban_data
        graph = build_graph(dataset, SolverConfig(mode=EstimatorMode.PSR_DOP_WCP,
                                                  n_max=9))
        assert graph.windows
        assert all(2 <= w.window.size <= 9 for w in graph.windows)

    def test_whitened_residual_count_matches_window_sizes(self, noiseless_data):
        dataset, _, _ = noiseless_data
        config = SolverConfig(mode=EstimatorMode.PSR_DOP_WCP)
        graph = build_graph(dataset, config)
        report = solve(graph)
        expected = sum(w.window.size - 1 for w in graph.windows)
        assert report.residuals_by_type["wcp"].size == expected
        assert report.residuals_by_type["pseudorange"].size == len(
            graph.psr_factors)

    def test_mode_without_phase_builds_no_windows(self, noiseless_data):
        dataset, _, _ = noiseless_data
        graph = build_graph(dataset, SolverConfig(mode=EstimatorMode.PSR_DOP))
        assert graph.windows == []
        assert graph.dv_factors and graph.psr_factors

    def test_invalid_dataset_is_rejected_with_findings(self, noiseless_data):
        dataset, _, _ = noiseless_data
        broken = list(dataset)
        broken[3] = Epoch(time=dataset[2].time,
                          observations=dataset[3].observations,
                          satellites=dataset[3].satellites)
        from gnssfgo.solver import DatasetError
        with pytest.raises(DatasetError, match="validation failed"):
            build_graph(broken, SolverConfig())


class TestSolve:
    def test_single_point_mode_reports_per_epoch(self, noiseless_data):
        dataset, truth, _ = noiseless_data
        report = solve_dataset(dataset, SolverConfig(mode=EstimatorMode.WLS_SPP))
        assert report.convergence_reason == "per-epoch"
        assert report.iterations == 0
        errors = [np.linalg.norm(s.position - t.position)
                  for s, t in zip(report.states, truth.states)]
        assert max(errors) < 1e-5

    def test_noiseless_batch_residuals_are_tiny(self, noiseless_data):
        dataset, truth, _ = noiseless_data
        report = solve_dataset(dataset, SolverConfig(mode=EstimatorMode.PSR_DOP_WCP))
        assert report.convergence_reason in ("gradient", "step", "cost")
        for kind, residuals in report.residuals_by_type.items():
            if residuals.size:
                assert np.abs(residuals).max() < 1e-6, kind
        errors = [np.linalg.norm(s.position - t.position)
                  for s, t in zip(report.states, truth.states)]
        assert max(errors) < 1e-5

    def test_pseudorange_outlier_barely_moves_window_solution(self):
        dataset, _, _ = generate(noiseless_config(duration_epochs=20))
        config = SolverConfig(mode=EstimatorMode.PSR_DOP_WCP)
        baseline = solve_dataset(dataset, config)
        sat = dataset[10].observations[0].sat
        contaminated = []
        for epoch in dataset:
            if epoch.time.index != 10:
                contaminated.append(epoch)
                continue
            observations = tuple(
                dataclasses.replace(o, pseudorange=o.pseudorange + 50.0)
                if o.sat == sat else o for o in epoch.observations)
            contaminated.append(Epoch(time=epoch.time, observations=observations,
                                      satellites=epoch.satellites))
        report = solve_dataset(contaminated, config)
        shift = max(np.linalg.norm(a.position - b.position)
                    for a, b in zip(baseline.states, report.states))
        assert shift < 3.0  # inside 3 sigma of the pseudorange noise model

    def test_silent_slip_window_is_downweighted(self):
        dataset, truth, _ = generate(noiseless_config(duration_epochs=20))
        sat = dataset[10].observations[0].sat
        slipped = inject_cycle_slip(dataset, sat, 10, 30, flagged=False)
        report = solve_dataset(slipped, SolverConfig(mode=EstimatorMode.PSR_DOP_WCP))
        straddling = [d for d in report.window_diagnostics
                      if d.sat == sat
                      and d.first_epoch <= 9 and d.first_epoch + d.size - 1 >= 10]
        assert straddling
        assert min(d.weight for d in straddling) < 0.1
        errors = [np.linalg.norm(s.position - t.position)
                  for s, t in zip(report.states, truth.states)]
        assert max(errors) < 0.1

    def test_unconstrained_epoch_is_reported_by_index(self):
        dataset, _, _ = generate(noiseless_config(duration_epochs=6))
        broken = list(dataset)
        # Last epoch loses every measurement; the one before loses Doppler,
        # so nothing ties the final position to the rest of the graph.
        broken[4] = Epoch(
            time=dataset[4].time,
            observations=tuple(dataclasses.replace(o, doppler=None)
                               for o in dataset[4].observations),
            satellites=dataset[4].satellites)
        broken[5] = Epoch(time=dataset[5].time, observations=(),
                          satellites=dataset[5].satellites)
        with pytest.raises(SolverError, match=r"unobservable.*\[5\]"):
            solve_dataset(broken, SolverConfig(mode=EstimatorMode.PSR_DOP))

    def test_report_carries_costs_and_trajectory(self, noiseless_data):
        dataset, _, _ = noiseless_data
        report = solve_dataset(dataset, SolverConfig(mode=EstimatorMode.PSR_DOP_WCP))
        assert isinstance(report, SolveReport)
        assert report.final_cost <= report.initial_cost
        assert set(report.cost_by_type) >= {"pseudorange", "doppler", "wcp"}
        assert len(report.trajectory) == len(dataset)


class TestSolverConfig:
    def test_window_cap_below_two_is_rejected(self):
        with pytest.raises(ValueError, match="n_max"):
            SolverConfig(n_max=1)

    def test_non_positive_tolerances_are_rejected(self):
        with pytest.raises(ValueError, match="gradient_tolerance"):
            SolverConfig(gradient_tolerance=0.0)

    def test_kernel_overrides_merge_with_defaults(self):
        config = SolverConfig(kernels={"wcp": RobustKernel(KernelKind.NONE)})
        assert config.kernels["wcp"].kind is KernelKind.NONE
        assert config.kernels["pseudorange"].kind is KernelKind.NONE
        assert set(config.kernels) == {"pseudorange", "doppler", "tdcp", "wcp"}

    def test_default_window_kernel_is_cauchy(self):
        config = SolverConfig()
        assert config.kernels["wcp"] == RobustKernel(KernelKind.CAUCHY, 2.0)

    def test_mode_parse_round_trips_and_rejects_unknown(self):
        assert EstimatorMode.parse("psr-dop-wcp") is EstimatorMode.PSR_DOP_WCP
        assert EstimatorMode.parse(" WLS-SPP ") is EstimatorMode.WLS_SPP
        with pytest.raises(ValueError, match="unknown mode"):
            EstimatorMode.parse("rtk")


class TestEliminatorEquivalence:
    def test_square_eliminators_give_same_solution_as_reduced_basis(self):
        dataset, _, _ = generate(noiseless_config(duration_epochs=12))
        positions = {}
        for kind in EliminatorKind:
            config = SolverConfig(mode=EstimatorMode.PSR_DOP_WCP,
                                  eliminator_kind=kind)
            report = solve_dataset(dataset, config)
            positions[kind] = np.array([s.position for s in report.states])
        reference = positions[EliminatorKind.ORTHONORMAL_BASIS_T]
        for kind, values in positions.items():
            assert np.abs(values - reference).max() < 1e-6, kind
