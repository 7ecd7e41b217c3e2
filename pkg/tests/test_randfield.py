"""
Tests for the Kraichnan random field generators.
"""

import math

import numpy as np
import pytest

from src.core.errors import ContractViolation
from src.core.lattice import Grid
from src.core.randfield import (
    KraichnanModes, RandomFieldSpec, kraichnan_lognormal, kraichnan_velocity_firstorder, make_rng,
)

GRID = Grid.rectangle((0.0, 2.0), (0.0, 1.0), 0.05)


class TestRandomFieldSpec:
    """Test field statistics."""

    def test_log_mean(self):
        assert RandomFieldSpec(mean=2.0, variance=0.5, corr_len=1.0).log_mean == pytest.approx(math.log(2.0) - 0.25)
        assert RandomFieldSpec(mean=2.0, variance=0.5, corr_len=1.0, geometric_mean=True).log_mean \
            == pytest.approx(math.log(2.0))

    def test_anisotropic_lengths(self):
        spec = RandomFieldSpec(mean=1.0, variance=1.0, corr_len=(1.0, 0.1))
        assert spec.lengths == (1.0, 0.1)
        assert spec.sigma == 1.0

    def test_correlation(self):
        spec = RandomFieldSpec(mean=1.0, variance=2.0, corr_len=1.0, corr_model='gaussian')
        assert spec.correlation(0.0) == pytest.approx(2.0)
        assert spec.correlation(1.0) == pytest.approx(2.0 * math.exp(-1.0))

    @pytest.mark.parametrize('kwargs', [
        {'mean': 0.0, 'variance': 1.0, 'corr_len': 1.0},
        {'mean': 1.0, 'variance': -1.0, 'corr_len': 1.0},
        {'mean': 1.0, 'variance': 1.0, 'corr_len': 0.0},
        {'mean': 1.0, 'variance': 1.0, 'corr_len': 1.0, 'corr_model': 'spherical'},
        {'mean': 1.0, 'variance': 1.0, 'corr_len': 1.0, 'n_modes': 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ContractViolation):
            RandomFieldSpec(**kwargs)


class TestKraichnanFields:
    """Test realizations of log-normal fields."""

    def test_same_seed_same_field(self):
        spec = RandomFieldSpec(mean=1.0, variance=1.0, corr_len=0.2, seed=11)
        assert np.array_equal(kraichnan_lognormal(spec, GRID), kraichnan_lognormal(spec, GRID))

    def test_different_seeds_differ(self):
        a = kraichnan_lognormal(RandomFieldSpec(mean=1.0, variance=1.0, corr_len=0.2, seed=1), GRID)
        b = kraichnan_lognormal(RandomFieldSpec(mean=1.0, variance=1.0, corr_len=0.2, seed=2), GRID)
        assert not np.allclose(a, b)

    def test_zero_variance_is_constant(self):
        field = kraichnan_lognormal(RandomFieldSpec(mean=3.0, variance=0.0, corr_len=1.0), GRID)
        assert np.allclose(field, 3.0)

    def test_line_fields(self):
        grid = Grid.line(0.0, 1.0, 0.01)
        field = kraichnan_lognormal(RandomFieldSpec(mean=1.0, variance=0.5, corr_len=0.1), grid)
        assert field.shape == grid.shape
        assert np.all(field > 0)

    @pytest.mark.parametrize('model', ['exponential', 'gaussian'])
    def test_ensemble_statistics_at_a_point(self, model):
        sigma2 = 0.25
        values = np.array([
            KraichnanModes.sample(RandomFieldSpec(mean=1.0, variance=sigma2, corr_len=0.5, corr_model=model,
                                                  seed=seed), 2).fluctuation(np.array([0.3]), np.array([0.7]))[0]
            for seed in range(400)
        ])
        assert abs(values.mean()) < 0.25 * math.sqrt(sigma2)
        assert values.var(ddof=1) == pytest.approx(sigma2, rel=0.35)

    def test_ensemble_arithmetic_mean(self):
        grid = Grid.line(0.0, 1.0, 0.5)
        values = [kraichnan_lognormal(RandomFieldSpec(mean=2.0, variance=0.25, corr_len=0.5, seed=s), grid)[1]
                  for s in range(400)]
        assert np.mean(values) == pytest.approx(2.0, rel=0.15)

    def test_wavevectors_scale_with_lengths(self):
        spec = RandomFieldSpec(mean=1.0, variance=1.0, corr_len=(1.0, 0.1), seed=3)
        isotropic = KraichnanModes.sample(RandomFieldSpec(mean=1.0, variance=1.0, corr_len=1.0, seed=3), 2)
        scaled = KraichnanModes.sample(spec, 2)
        assert np.allclose(scaled.wavevectors[:, 1], 10.0 * isotropic.wavevectors[:, 1])
        assert np.allclose(scaled.wavevectors[:, 0], isotropic.wavevectors[:, 0])

    def test_coordinate_count(self):
        modes = KraichnanModes.sample(RandomFieldSpec(mean=1.0, variance=1.0, corr_len=1.0), 2)
        with pytest.raises(ContractViolation):
            modes.fluctuation(np.zeros(3))

    def test_rng_is_reproducible(self):
        assert make_rng(5).random() == make_rng(5).random()


class TestKraichnanVelocity:
    """Test the first-order velocity fields."""

    def test_divergence_free(self):
        spec = RandomFieldSpec(mean=1.0, variance=1.0, corr_len=0.2, corr_model='gaussian', seed=4)
        modes = KraichnanModes.sample(spec, 2)
        x, z = np.array([0.13, 0.71, 1.4]), np.array([0.22, 0.5, 0.93])
        assert np.allclose(modes.velocity_divergence(1.0, x, z), 0.0, atol=1e-10)
        h = 1e-6
        du = (modes.velocity_fluctuation(1.0, x + h, z)[0] - modes.velocity_fluctuation(1.0, x - h, z)[0]) / (2 * h)
        dv = (modes.velocity_fluctuation(1.0, x, z + h)[1] - modes.velocity_fluctuation(1.0, x, z - h)[1]) / (2 * h)
        scale = np.max(np.abs(du)) + 1.0
        assert np.allclose(du + dv, 0.0, atol=1e-5 * scale)

    def test_mean_flow(self):
        velocity = kraichnan_velocity_firstorder(RandomFieldSpec(mean=1.0, variance=0.0, corr_len=0.1), 2.0, GRID)
        assert np.allclose(velocity.u, 2.0)
        assert np.allclose(velocity.v, 0.0)

    def test_fluctuating_field_shape(self):
        velocity = kraichnan_velocity_firstorder(RandomFieldSpec(mean=1.0, variance=0.1, corr_len=0.1), 1.0, GRID)
        assert velocity.u.shape == GRID.shape
        assert velocity.u.mean() == pytest.approx(1.0, abs=0.2)

    def test_needs_two_dimensions(self):
        with pytest.raises(ContractViolation):
            kraichnan_velocity_firstorder(RandomFieldSpec(mean=1.0, variance=0.1, corr_len=0.1), 1.0,
                                          Grid.line(0.0, 1.0, 0.1))
