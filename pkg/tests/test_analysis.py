"""
Tests for the post-processing helpers.
"""

import math

import numpy as np
import pytest

from src.core.analysis import (
    ConvergenceHistory, RefinementStudy, comp_order_q, comp_order_qq, decay_slope,
    dispersion_from_moments, ensemble_dispersion, eoc, mc_stats, moment_diffusion,
)
from src.core.errors import EstimationError
from src.core.lattice import Grid


class TestRefinement:
    """Test estimated orders of convergence."""

    def test_second_order(self):
        assert eoc([0.4, 0.1, 0.025]) == pytest.approx([2.0, 2.0])

    def test_first_order(self):
        assert eoc([3.0, 1.5]) == pytest.approx([1.0])

    def test_needs_two_levels(self):
        with pytest.raises(EstimationError):
            eoc([0.1])

    def test_zero_error(self):
        with pytest.raises(EstimationError):
            eoc([0.1, 0.0])

    def test_study_rows(self):
        study = RefinementStudy([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4])
        rows = study.as_rows()
        assert [row['level'] for row in rows] == [1, 2, 3]
        assert math.isnan(rows[0]['eoc'])
        assert rows[2]['eoc'] == pytest.approx(2.0)

    def test_spacings_must_halve(self):
        with pytest.raises(EstimationError):
            RefinementStudy([0.1, 0.03], [1.0, 0.5])


class TestConvergenceOrders:
    """Test iteration convergence orders on synthetic histories."""

    def test_linear_convergence(self):
        history = [0.5 ** s for s in range(2, 40)]
        assert comp_order_q(history) == pytest.approx(1.0)
        assert comp_order_qq(history, 1.0) == pytest.approx(0.5)

    def test_quadratic_convergence(self):
        history = [0.5 ** (2 ** s) for s in range(8)]
        assert comp_order_q(history) == pytest.approx(2.0)
        assert comp_order_qq(history, 2.0) == pytest.approx(1.0)

    def test_too_short(self):
        with pytest.raises(EstimationError):
            comp_order_q([1.0, 0.5, 0.25])
        with pytest.raises(EstimationError):
            comp_order_qq([1.0])

    def test_decay_slope(self):
        history = [1.0 / s for s in range(2, 200)]
        assert decay_slope(history) == pytest.approx(-1.0, abs=1e-9)

    def test_history_object(self):
        history = ConvergenceHistory([[0.1, 0.01], [0.5 ** s for s in range(2, 30)]])
        assert len(history.longest_step()) == 28
        assert len(history.flat) == 30
        assert comp_order_qq(history) == pytest.approx(0.5)
        with pytest.raises(EstimationError):
            ConvergenceHistory([[-1.0]])


def gaussian(grid: Grid, center: float, variance: float) -> np.ndarray:
    return np.exp(-(grid.z - center) ** 2 / (2 * variance)) / math.sqrt(2 * math.pi * variance)


class TestMomentDiffusion:
    """Test diffusion estimates from variance growth."""

    def test_exact_gaussians(self):
        grid = Grid.line(0.0, 10.0, 0.01)
        d = 0.01
        snapshots = {t: gaussian(grid, 5.0, 0.1 + 2 * d * t) for t in (0.0, 1.0, 2.0, 3.0)}
        estimate = moment_diffusion(snapshots, grid, d)
        assert estimate.valid
        assert estimate.d_z == pytest.approx(d, rel=1e-6)
        assert estimate.eps_z < 1e-6
        assert math.isnan(estimate.d_x)

    def test_boundary_contact_invalidates(self):
        grid = Grid.line(0.0, 1.0, 0.01)
        snapshots = {t: gaussian(grid, 0.5, 0.05 + t) for t in (0.0, 1.0)}
        assert not moment_diffusion(snapshots, grid, 0.5).valid

    def test_needs_two_snapshots(self):
        grid = Grid.line(0.0, 1.0, 0.1)
        with pytest.raises(EstimationError):
            moment_diffusion({0.0: np.ones(grid.shape)}, grid, 1.0)


class TestEnsembles:
    """Test ensemble dispersion and Monte Carlo statistics."""

    def test_linear_spread(self):
        times = [0.0, 1.0, 2.0]
        table = {'center_z': [0.0, 0.1, 0.2], 'variance_z': [0.0, 0.02, 0.04]}
        out = dispersion_from_moments([table, table], times, local_d=0.01)
        assert np.allclose(out['D_z'], 1.0)
        assert np.allclose(out['S_z'], [0.0, 0.02, 0.04])

    def test_spreading_centers(self):
        times = [0.0, 1.0, 2.0]
        tables = [{'center_z': [0.0, 1.0, 2.0], 'variance_z': [0.0] * 3},
                  {'center_z': [0.0, -1.0, -2.0], 'variance_z': [0.0] * 3}]
        out = dispersion_from_moments(tables, times)
        assert np.allclose(out['S_z'], [0.0, 1.0, 4.0])
        assert np.allclose(out['D_z'], [0.5, 1.0, 1.5])

    def test_from_fields(self):
        grid = Grid.line(0.0, 1.0, 0.1)

        def delta(index):
            values = np.zeros(grid.shape)
            values[index] = 1.0
            return values

        realizations = [{0.0: delta(5), 1.0: delta(6)}, {0.0: delta(5), 1.0: delta(4)}]
        out = ensemble_dispersion(realizations, grid)
        assert np.allclose(out['D_z'], 0.005)

    def test_mismatched_times(self):
        with pytest.raises(EstimationError):
            dispersion_from_moments([{'center_z': [0.0], 'variance_z': [0.0]}], [0.0])
        grid = Grid.line(0.0, 1.0, 0.5)
        with pytest.raises(EstimationError):
            ensemble_dispersion([{0.0: np.ones(3)}, {1.0: np.ones(3)}], grid)

    def test_mc_stats(self):
        stats = mc_stats([np.zeros((3, 3)), np.full((3, 3), 2.0)])
        assert stats.center_mean == pytest.approx(1.0)
        assert stats.center_variance == pytest.approx(2.0)
        assert stats.mean_std == pytest.approx(0.0)
        assert set(stats.as_dict()) == {'mean_avg', 'mean_std', 'variance_avg', 'variance_std',
                                        'center_mean', 'center_variance'}

    def test_mc_stats_needs_two_fields(self):
        with pytest.raises(EstimationError):
            mc_stats([np.zeros(3)])
