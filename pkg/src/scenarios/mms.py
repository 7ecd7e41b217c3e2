"""
Manufactured solutions and the source terms they induce.

Every entry pairs exact pressure and concentration fields with the sources
obtained by inserting them into

    d theta(psi, c)/dt - div[K grad(psi + z)] = F
    d [theta(psi, c) c]/dt - div[D grad c - q c] = S,   q = -K grad(psi + z)

with the entry's constitutive laws and R = 0. The fields are built from the
polynomial bump B = x(x-1) z(z-1) on the unit square (B = z(z-1) on the
unit interval).
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Tuple

import numpy as np

from src.core.constitutive import (
    DegenerateManufacturedSoil, ManufacturedSoil, theta_degenerate, theta_manufactured,
)
from src.core.coupling import ManufacturedCase
from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

DIFFUSION = 1.0


@dataclass(frozen=True)
class _Bump:
    """B with its gradient and Laplacian; 1D bumps ignore x."""

    ndim: int

    def value(self, X, Z):
        q = Z * (Z - 1.0)
        return q if self.ndim == 1 else X * (X - 1.0) * q

    def gradient(self, X, Z) -> Tuple[np.ndarray, np.ndarray]:
        if self.ndim == 1:
            return np.zeros_like(Z), 2.0 * Z - 1.0
        p, q = X * (X - 1.0), Z * (Z - 1.0)
        return (2.0 * X - 1.0) * q, p * (2.0 * Z - 1.0)

    def laplacian(self, X, Z):
        if self.ndim == 1:
            return np.full_like(Z, 2.0)
        return 2.0 * (Z * (Z - 1.0) + X * (X - 1.0))


@dataclass
class _Fields:
    """Exact values and derivatives at one time level."""

    psi: np.ndarray
    psi_t: np.ndarray
    psi_grad: Tuple[np.ndarray, np.ndarray]
    psi_lap: np.ndarray
    c: np.ndarray
    c_t: np.ndarray
    c_grad: Tuple[np.ndarray, np.ndarray]
    c_lap: np.ndarray


def _smooth_fields(t: float, X, Z, ndim: int) -> _Fields:
    """psi = -t B - 1 and c = t B + 1."""
    X, Z = np.asarray(X, dtype=float), np.asarray(Z, dtype=float)
    bump = _Bump(ndim)
    b = bump.value(X, Z)
    bx, bz = bump.gradient(X, Z)
    lap = bump.laplacian(X, Z)
    return _Fields(psi=-t * b - 1.0, psi_t=-b, psi_grad=(-t * bx, -t * bz), psi_lap=-t * lap,
                   c=t * b + 1.0, c_t=b, c_grad=(t * bx, t * bz), c_lap=t * lap)


def _degenerate_fields(t: float, X, Z) -> _Fields:
    """psi = -t z(1-z) + z/4 and c = t z(z-1) + 1 on the unit interval."""
    Z = np.asarray(Z, dtype=float)
    b = Z * (Z - 1.0)
    bz = 2.0 * Z - 1.0
    zero = np.zeros_like(Z)
    return _Fields(psi=t * b + 0.25 * Z, psi_t=b, psi_grad=(zero, t * bz + 0.25),
                   psi_lap=np.full_like(Z, 2.0 * t),
                   c=t * b + 1.0, c_t=b, c_grad=(zero, t * bz), c_lap=np.full_like(Z, 2.0 * t))


# ---------------------------------------------------------------------------
# Source terms
# ---------------------------------------------------------------------------

def _balance(f: _Fields, theta, theta_t, k, dk, diffusion: float, coupled: bool) -> Dict[str, np.ndarray]:
    """Darcy flux, its divergence and the two sources for given laws."""
    gx, gz = f.psi_grad
    div_q = -(k * f.psi_lap + dk * (gx ** 2 + gz ** 2) + dk * gz)
    q_x, q_z = -k * gx, -k * (gz + 1.0)
    flow = theta_t + div_q
    if not coupled:
        return {'F': flow, 'S': np.zeros_like(flow), 'q_x': q_x, 'q_z': q_z}
    cx, cz = f.c_grad
    transport = (theta_t * f.c + theta * f.c_t + f.c * div_q + q_x * cx + q_z * cz
                 - diffusion * f.c_lap)
    return {'F': flow, 'S': transport, 'q_x': q_x, 'q_z': q_z}


def _smooth_terms(t: float, X, Z, ndim: int, coupled: bool) -> Dict[str, np.ndarray]:
    """theta = 1/(1 - psi - c/10) (c = 0 for pure flow), K = psi^2."""
    f = _smooth_fields(t, X, Z, ndim)
    c = f.c if coupled else 0.0
    c_t = f.c_t if coupled else 0.0
    theta = np.asarray(theta_manufactured(f.psi, c), dtype=float)
    theta_t = theta ** 2 * (f.psi_t + c_t / 10.0)
    return _balance(f, theta, theta_t, f.psi ** 2, 2.0 * f.psi, DIFFUSION, coupled)


def _degenerate_terms(t: float, X, Z) -> Dict[str, np.ndarray]:
    """Two-branch theta, K = 1; the storage derivative vanishes where psi >= 0."""
    f = _degenerate_fields(t, X, Z)
    theta = np.asarray(theta_degenerate(f.psi, f.c), dtype=float)
    theta_t = np.where(f.psi < 0, theta ** 2 * (f.psi_t + f.c_t / 10.0), 0.0)
    return _balance(f, theta, theta_t, np.ones_like(f.psi), np.zeros_like(f.psi), DIFFUSION, True)


def _pick(terms_fn: Callable, key: str, t, X, Z):
    return terms_fn(t, X, Z)[key]


def _velocity(terms_fn: Callable, ndim: int, t, X, Z):
    terms = terms_fn(t, X, Z)
    return (terms['q_z'],) if ndim == 1 else (terms['q_x'], terms['q_z'])


def _exact(fields_fn: Callable, key: str, t, X, Z):
    return getattr(fields_fn(t, X, Z), key)


def _case(fields_fn, terms_fn, soil, ndim: int, two_branch: bool = False) -> ManufacturedCase:
    return ManufacturedCase(
        soil=soil,
        psi=partial(_exact, fields_fn, 'psi'),
        c=partial(_exact, fields_fn, 'c'),
        flow_source=partial(_pick, terms_fn, 'F'),
        transport_source=partial(_pick, terms_fn, 'S'),
        velocity=partial(_velocity, terms_fn, ndim),
        diffusion=DIFFUSION,
        two_branch=two_branch,
    )


class MmsLibrary:
    """Named manufactured cases used by the refinement scenarios and the tests."""

    @staticmethod
    def flow_2d() -> ManufacturedCase:
        """psi = -t x(x-1) z(z-1) - 1, theta = 1/(1 - psi), K = psi^2 (c unused)."""
        fields_fn = partial(_smooth_fields, ndim=2)
        terms_fn = partial(_smooth_terms, ndim=2, coupled=False)
        return _case(fields_fn, terms_fn, ManufacturedSoil(), 2)

    @staticmethod
    def coupled_2d() -> ManufacturedCase:
        fields_fn = partial(_smooth_fields, ndim=2)
        terms_fn = partial(_smooth_terms, ndim=2, coupled=True)
        return _case(fields_fn, terms_fn, ManufacturedSoil(), 2)

    @staticmethod
    def coupled_1d() -> ManufacturedCase:
        fields_fn = partial(_smooth_fields, ndim=1)
        terms_fn = partial(_smooth_terms, ndim=1, coupled=True)
        return _case(fields_fn, terms_fn, ManufacturedSoil(), 1)

    @staticmethod
    def degenerate_1d() -> ManufacturedCase:
        """psi turns positive for z > 1 - 1/(4t); K = 1 and two-branch theta."""
        return _case(_degenerate_fields, _degenerate_terms, DegenerateManufacturedSoil(), 1,
                     two_branch=True)

    @classmethod
    def get(cls, name: str) -> ManufacturedCase:
        builders = {'flow-2d': cls.flow_2d, 'coupled-2d': cls.coupled_2d,
                    'coupled-1d': cls.coupled_1d, 'degenerate-1d': cls.degenerate_1d}
        try:
            return builders[name]()
        except KeyError:
            raise ConfigError(f"Unknown manufactured case '{name}', expected one of {sorted(builders)}") from None
