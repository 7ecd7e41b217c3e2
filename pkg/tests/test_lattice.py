"""
Tests for lattices, particle fields and redistribution.
"""

import numpy as np
import pytest

from src.core.errors import ContractViolation
from src.core.lattice import (
    BoundaryCondition, BoundarySet, Grid, ParticleField, RedistributionMode, Redistributor,
    jump_nearest, l2_norm, midpoint_values, neighbor, redistribute, relative_error,
)


class TestGrid:
    """Test lattice geometry."""

    def test_line(self):
        grid = Grid.line(0.0, 2.0, 0.01)
        assert grid.nz == 201
        assert grid.ndim == 1
        assert grid.shape == (201,)
        assert grid.z[-1] == pytest.approx(2.0)
        assert grid.cell_volume == pytest.approx(0.01)

    def test_rectangle(self):
        grid = Grid.rectangle((0.0, 2.0), (0.0, 3.0), 0.1)
        assert grid.shape == (21, 31)
        assert grid.ndim == 2
        assert grid.vertical_axis == 1
        assert grid.cell_volume == pytest.approx(0.01)
        assert grid.center == pytest.approx((1.0, 1.5))

    def test_invalid_steps(self):
        with pytest.raises(ContractViolation):
            Grid(dx=0.0, dz=0.1, nx=1, nz=5)
        with pytest.raises(ContractViolation):
            Grid(dx=0.1, dz=0.1, nx=1, nz=1)

    def test_refined_halves_the_spacing(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 0.1).refined()
        assert grid.dx == pytest.approx(0.05)
        assert grid.shape == (21, 21)

    def test_face_masks(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 2.0), 0.5)
        assert grid.face_mask('x_low')[0].all() and not grid.face_mask('x_low')[1:].any()
        assert grid.face_mask('z_high')[:, -1].all()
        assert grid.boundary_mask().sum() == grid.size - (grid.nx - 2) * (grid.nz - 2)
        with pytest.raises(ContractViolation):
            Grid.line(0, 1, 0.1).face_mask('x_low')

    def test_mesh_uses_ij_layout(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 2.0), 0.5)
        X, Z = grid.mesh()
        assert X.shape == grid.shape
        assert X[1, 0] == pytest.approx(0.5)
        assert Z[0, 1] == pytest.approx(0.5)


class TestParticleField:
    """Test the particle <-> value scaling."""

    def test_values_round_trip(self):
        values = np.array([0.5, -1.25, 2.0])
        field = ParticleField.from_values(values, n_total=1e10, unit_scale=4.0)
        assert np.allclose(field.values, values)
        assert field.counts[0] == pytest.approx(0.5 * 1e10 / 4.0)

    def test_integer_counts(self):
        field = ParticleField.from_values([0.123456789], n_total=1e3, integer=True)
        assert field.counts[0] == 123.0

    def test_copy_is_independent(self):
        field = ParticleField.from_values([1.0, 2.0])
        copy = field.copy()
        copy.counts[0] = 0.0
        assert field.counts[0] > 0


class TestRedistribution:
    """Test the three redistribution modes."""

    def test_deterministic_split_is_exact(self):
        out = redistribute([0.25, 0.5], 10.0)
        assert out.shape == (2,)
        assert np.allclose(out, [2.5, 5.0])

    def test_split_over_sites(self):
        out = redistribute([0.5, 0.25], np.array([4.0, 8.0, 12.0]))
        assert out.shape == (2, 3)
        assert np.allclose(out[1], [1.0, 2.0, 3.0])

    def test_weights_out_of_range(self):
        with pytest.raises(ContractViolation):
            redistribute([1.2], 10.0)
        with pytest.raises(ContractViolation):
            redistribute([0.6, 0.6], 10.0)

    def test_remainder_carry_conserves_particles(self):
        state = Redistributor('remainder_carry')
        counts = np.array([7.0, 13.0, 1.0, 0.0])
        weights = np.stack([np.full(4, 0.3), np.full(4, 0.45)])
        for _ in range(50):
            moved = state.split(counts, weights, key='test')
            assert np.all(moved == np.floor(moved))
            assert np.all(moved.sum(axis=0) <= counts)

    def test_remainder_carry_tracks_the_real_average(self):
        state = Redistributor(RedistributionMode.REMAINDER_CARRY)
        total = 0.0
        for _ in range(1000):
            total += float(state.scale(np.array([10.0]), np.array([0.33]), key='avg')[0])
        assert total == pytest.approx(3300.0, abs=1.0)

    def test_full_split_leaves_nothing_behind(self):
        state = Redistributor('remainder_carry')
        counts = np.array([9.0, 17.0])
        moved = state.split(counts, np.stack([np.full(2, 0.5), np.full(2, 0.5)]), key='full')
        assert np.allclose(moved.sum(axis=0), counts)

    def test_binomial_is_seeded(self):
        a = Redistributor('binomial', seed=7).split(np.array([1000.0]), np.array([[0.3], [0.3]]))
        b = Redistributor('binomial', seed=7).split(np.array([1000.0]), np.array([[0.3], [0.3]]))
        assert np.array_equal(a, b)
        assert a.sum() <= 1000.0
        assert np.all(a == np.floor(a))

    def test_binomial_handles_huge_counts(self):
        moved = Redistributor('binomial', seed=1).split(np.array([1e20]), np.array([[0.5]]))
        assert moved[0, 0] == pytest.approx(0.5e20, rel=1e-6)

    def test_unknown_mode(self):
        with pytest.raises(ContractViolation):
            Redistributor('random')

    def test_source_floor_and_carry(self):
        state = Redistributor('remainder_carry')
        emitted = sum(float(state.source(np.array([2.25]), key='s')[0]) for _ in range(4))
        assert emitted == pytest.approx(9.0)


class TestNeighborArithmetic:
    """Test shifts, mid-point values and nearest-neighbor jumps."""

    def test_neighbor_pads_with_zero(self):
        values = np.array([1.0, 2.0, 3.0])
        assert neighbor(values, 0, 1).tolist() == [2.0, 3.0, 0.0]
        assert neighbor(values, 0, -1).tolist() == [0.0, 1.0, 2.0]

    def test_midpoint_values_close_the_ends(self):
        plus, minus = midpoint_values(np.array([1.0, 3.0, 5.0]), 0)
        assert plus.tolist() == [2.0, 4.0, 0.0]
        assert minus.tolist() == [0.0, 2.0, 4.0]

    def test_harmonic_midpoints(self):
        plus, _ = midpoint_values(np.array([1.0, 3.0]), 0, 'harmonic')
        assert plus[0] == pytest.approx(1.5)

    def test_jump_nearest_conserves_mass(self):
        counts = np.zeros(11)
        counts[5] = 1e6
        w = np.full(11, 0.25)
        w_plus, w_minus = w.copy(), w.copy()
        w_plus[-1] = 0.0
        w_minus[0] = 0.0
        state = Redistributor()
        for _ in range(3):
            counts = jump_nearest(counts, [(0, w_plus, w_minus)], state, key='m')
        assert counts.sum() == pytest.approx(1e6, rel=1e-14)

    def test_jump_nearest_is_the_explicit_difference_update(self):
        rng = np.random.default_rng(3)
        counts = rng.random(9)
        r = 0.4
        w_plus = np.full(9, r / 2)
        w_minus = np.full(9, r / 2)
        w_plus[-1] = w_minus[0] = 0.0
        out = jump_nearest(counts, [(0, w_plus, w_minus)], Redistributor(), key='fd')
        expected = counts[1:-1] + 0.5 * r * (counts[2:] - 2 * counts[1:-1] + counts[:-2])
        assert np.allclose(out[1:-1], expected, rtol=0, atol=1e-14)


class TestNorms:
    """Test the discrete L2 norm and relative error."""

    def test_l2_norm(self):
        grid = Grid.line(0.0, 1.0, 0.25)
        assert l2_norm(np.ones(grid.shape), grid) == pytest.approx(np.sqrt(5 * 0.25))

    def test_relative_error(self):
        grid = Grid.line(0.0, 1.0, 0.5)
        assert relative_error(np.array([1.1, 2.2, 3.3]), np.array([1.0, 2.0, 3.0]), grid) == pytest.approx(0.1)

    def test_relative_error_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            relative_error(np.ones(3), np.ones(4))

    def test_relative_error_zero_reference(self):
        with pytest.raises(ZeroDivisionError):
            relative_error(np.ones(3), np.zeros(3))


class TestBoundaries:
    """Test boundary condition bookkeeping."""

    def test_dirichlet_values_are_imposed(self):
        grid = Grid.line(0.0, 1.0, 0.25)
        bounds = BoundarySet(grid, [BoundaryCondition('z_low', 'dirichlet', 1.0),
                                    BoundaryCondition('z_high', 'dirichlet', lambda t, x, z: t * z)])
        values = bounds.apply_dirichlet(np.zeros(grid.shape), 2.0)
        assert values[0] == 1.0
        assert values[-1] == pytest.approx(2.0)
        assert bounds.has_dirichlet()

    def test_segments_restrict_a_face(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 0.25)
        bc = BoundaryCondition('z_high', 'dirichlet', 5.0, segment=lambda x, z: x <= 0.5)
        bounds = BoundarySet(grid, [bc])
        assert bounds.dirichlet_mask[:, -1].tolist() == [True, True, True, False, False]

    def test_overlapping_segments(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 0.25)
        with pytest.raises(ContractViolation):
            BoundarySet(grid, [BoundaryCondition('x_low', 'dirichlet', 0.0),
                               BoundaryCondition('x_low', 'neumann', 1.0, segment=lambda x, z: z > 0.5)])

    def test_unknown_kind(self):
        with pytest.raises(ContractViolation):
            BoundaryCondition('z_low', 'robin')

    def test_non_finite_values(self):
        grid = Grid.line(0.0, 1.0, 0.5)
        bounds = BoundarySet(grid, [BoundaryCondition('z_low', 'dirichlet', float('nan'))])
        with pytest.raises(ContractViolation):
            bounds.apply_dirichlet(np.zeros(grid.shape), 0.0)
