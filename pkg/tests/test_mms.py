"""
Finite-difference residual checks of the manufactured source terms.
"""

import numpy as np
import pytest

from src.core.errors import ConfigError
from src.scenarios.mms import MmsLibrary

H_T = 1e-5
H_X = 1e-4
H_INNER = 1e-6


def residuals(case, t, X, Z, ndim, coupled):
    """F and S recomputed from the exact fields by central differences."""
    soil = case.soil

    def theta(t, X, Z):
        c = case.c(t, X, Z) if coupled else None
        return np.asarray(soil.theta(case.psi(t, X, Z), c), dtype=float)

    def flux(t, X, Z):
        """(q_x, q_z) = -K grad(psi + z)."""
        k = np.asarray(soil.conductivity(case.psi(t, X, Z)), dtype=float)
        dz = (case.psi(t, X, Z + H_INNER) - case.psi(t, X, Z - H_INNER)) / (2 * H_INNER)
        dx = (case.psi(t, X + H_INNER, Z) - case.psi(t, X - H_INNER, Z)) / (2 * H_INNER)
        return -k * dx, -k * (dz + 1.0)

    def divergence(fn):
        out = (fn(t, X, Z + H_X)[1] - fn(t, X, Z - H_X)[1]) / (2 * H_X)
        if ndim == 2:
            out = out + (fn(t, X + H_X, Z)[0] - fn(t, X - H_X, Z)[0]) / (2 * H_X)
        return out

    theta_t = (theta(t + H_T, X, Z) - theta(t - H_T, X, Z)) / (2 * H_T)
    flow = theta_t + divergence(flux)
    if not coupled:
        return flow, None

    def theta_c(t, X, Z):
        return theta(t, X, Z) * case.c(t, X, Z)

    def transport_flux(t, X, Z):
        q_x, q_z = flux(t, X, Z)
        c = case.c(t, X, Z)
        c_z = (case.c(t, X, Z + H_INNER) - case.c(t, X, Z - H_INNER)) / (2 * H_INNER)
        c_x = (case.c(t, X + H_INNER, Z) - case.c(t, X - H_INNER, Z)) / (2 * H_INNER)
        return q_x * c - case.diffusion * c_x, q_z * c - case.diffusion * c_z

    storage_t = (theta_c(t + H_T, X, Z) - theta_c(t - H_T, X, Z)) / (2 * H_T)
    return flow, storage_t + divergence(transport_flux)


POINTS_2D = (np.array([0.2, 0.5, 0.7, 0.9]), np.array([0.3, 0.5, 0.15, 0.8]))
POINTS_1D = (np.zeros(4), np.array([0.1, 0.3, 0.45, 0.8]))


class TestManufacturedSources:
    """The sources must balance the equations for the exact fields."""

    def test_flow_2d(self):
        case = MmsLibrary.get('flow-2d')
        X, Z = POINTS_2D
        flow, _ = residuals(case, 0.6, X, Z, 2, coupled=False)
        assert np.allclose(case.flow_source(0.6, X, Z), flow, atol=1e-5)
        assert np.allclose(case.transport_source(0.6, X, Z), 0.0)

    @pytest.mark.parametrize('name,ndim', [('coupled-2d', 2), ('coupled-1d', 1)])
    def test_coupled(self, name, ndim):
        case = MmsLibrary.get(name)
        X, Z = POINTS_2D if ndim == 2 else POINTS_1D
        flow, transport = residuals(case, 0.4, X, Z, ndim, coupled=True)
        assert np.allclose(case.flow_source(0.4, X, Z), flow, atol=1e-5)
        assert np.allclose(case.transport_source(0.4, X, Z), transport, atol=1e-5)

    def test_degenerate_both_branches(self):
        case = MmsLibrary.get('degenerate-1d')
        X, Z = np.zeros(2), np.array([0.3, 0.8])
        psi = case.psi(0.5, X, Z)
        assert psi[0] < 0 < psi[1]
        flow, transport = residuals(case, 0.5, X, Z, 1, coupled=True)
        assert np.allclose(case.flow_source(0.5, X, Z), flow, atol=1e-5)
        assert np.allclose(case.transport_source(0.5, X, Z), transport, atol=1e-5)
        assert case.two_branch

    def test_velocity_matches_darcy(self):
        case = MmsLibrary.get('coupled-2d')
        X, Z = POINTS_2D
        q_x, q_z = case.velocity(0.3, X, Z)
        psi = case.psi(0.3, X, Z)
        dz = (case.psi(0.3, X, Z + H_INNER) - case.psi(0.3, X, Z - H_INNER)) / (2 * H_INNER)
        assert np.allclose(q_z, -psi ** 2 * (dz + 1.0), atol=1e-8)
        assert q_x.shape == X.shape

    def test_exact_fields_at_start(self):
        case = MmsLibrary.get('coupled-1d')
        X, Z = POINTS_1D
        assert np.allclose(case.psi(0.0, X, Z), -1.0)
        assert np.allclose(case.c(0.0, X, Z), 1.0)

    def test_unknown_case(self):
        with pytest.raises(ConfigError):
            MmsLibrary.get('flow-3d')
