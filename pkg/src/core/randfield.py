"""
Kraichnan spectral generators for log-normal random fields.

A log field is the superposition of ``n_modes`` random periodic modes

    Y(x) = m_Y + sigma * sqrt(2 / N) * sum_j cos(k_j . x + phi_j)

with wavevectors drawn from the spectral density of the correlation model
and uniform phases. The same modes give first-order velocity fluctuations
by projecting every mode orthogonally to its wavevector, which keeps the
fluctuation field divergence free.

Realizations are drawn from ``numpy.random.Generator(numpy.random.Philox(seed))``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ContractViolation
from src.core.flow import VelocityField
from src.core.lattice import Grid

logger = logging.getLogger(__name__)

CORRELATION_MODELS = ('exponential', 'gaussian')


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class RandomFieldSpec:
    """
    Statistics of a log-normal field.

    ``corr_len`` is a single correlation length or a (lambda_x, lambda_z)
    pair. With ``geometric_mean`` the configured mean is exp(m_Y); otherwise
    it is the arithmetic mean of the field and m_Y = ln(mean) - variance / 2.
    """

    mean: float
    variance: float
    corr_len: Union[float, Tuple[float, float]]
    corr_model: str = 'exponential'
    n_modes: int = 100
    seed: int = 0
    geometric_mean: bool = False

    def __post_init__(self):
        if self.mean <= 0:
            raise ContractViolation(f"field mean must be positive, got {self.mean}")
        if self.variance < 0:
            raise ContractViolation(f"variance must be nonnegative, got {self.variance}")
        if min(self.lengths) <= 0:
            raise ContractViolation(f"correlation lengths must be positive, got {self.corr_len}")
        if self.corr_model not in CORRELATION_MODELS:
            raise ContractViolation(f"Unknown correlation model '{self.corr_model}'")
        if self.n_modes < 1:
            raise ContractViolation("n_modes must be at least 1")

    @property
    def lengths(self) -> Tuple[float, float]:
        if isinstance(self.corr_len, (tuple, list)):
            return float(self.corr_len[0]), float(self.corr_len[1])
        return float(self.corr_len), float(self.corr_len)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def log_mean(self) -> float:
        if self.geometric_mean:
            return math.log(self.mean)
        return math.log(self.mean) - 0.5 * self.variance

    def correlation(self, lag: np.ndarray) -> np.ndarray:
        """Log-field covariance at a lag measured in correlation lengths."""
        lag = np.abs(np.asarray(lag, dtype=float))
        power = 1.0 if self.corr_model == 'exponential' else 2.0
        return self.variance * np.exp(-lag ** power)


def _unit_wavevectors(model: str, ndim: int, n_modes: int, rng: np.random.Generator) -> np.ndarray:
    """Wavevectors for unit correlation length, shape (n_modes, ndim)."""
    if model == 'gaussian':
        return rng.normal(0.0, math.sqrt(2.0), size=(n_modes, ndim))
    u = rng.random(n_modes)
    if ndim == 1:
        return np.tan(math.pi * (u - 0.5))[:, None]
    # inverse CDF of the radial density k (1 + k^2)^(-3/2)
    radius = np.sqrt((1.0 - u) ** -2 - 1.0)
    angle = rng.uniform(0.0, 2.0 * math.pi, n_modes)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


@dataclass
class KraichnanModes:
    """Wavevectors, phases and common amplitude of one realization."""

    wavevectors: np.ndarray
    phases: np.ndarray
    amplitude: float
    log_mean: float

    @classmethod
    def sample(cls, spec: RandomFieldSpec, ndim: int) -> 'KraichnanModes':
        rng = make_rng(spec.seed)
        unit = _unit_wavevectors(spec.corr_model, ndim, spec.n_modes, rng)
        phases = rng.uniform(0.0, 2.0 * math.pi, spec.n_modes)
        lengths = spec.lengths if ndim == 2 else spec.lengths[1:]
        wavevectors = unit / np.asarray(lengths)[None, :]
        amplitude = spec.sigma * math.sqrt(2.0 / spec.n_modes)
        return cls(wavevectors=wavevectors, phases=phases, amplitude=amplitude, log_mean=spec.log_mean)

    @property
    def ndim(self) -> int:
        return self.wavevectors.shape[1]

    def _arguments(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """k_j . x + phi_j with the mode index last."""
        arg = np.zeros(np.shape(coords[0]) + (len(self.phases),))
        for axis, coord in enumerate(coords):
            arg += np.asarray(coord, dtype=float)[..., None] * self.wavevectors[:, axis]
        return arg + self.phases

    def fluctuation(self, *coords: np.ndarray) -> np.ndarray:
        """Zero-mean part of the log field."""
        self._check(coords)
        return self.amplitude * np.cos(self._arguments(coords)).sum(axis=-1)

    def log_field(self, *coords: np.ndarray) -> np.ndarray:
        return self.log_mean + self.fluctuation(*coords)

    def velocity_fluctuation(self, mean_velocity: float, x: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        First-order fluctuation of a mean flow along x.

        u'_i = U * amplitude * sum_j (delta_ix - k_i k_x / |k|^2) cos(k_j . x + phi_j)
        """
        self._check((x, z))
        k = self.wavevectors
        norm2 = np.maximum((k ** 2).sum(axis=1), np.finfo(float).tiny)
        proj_x = 1.0 - k[:, 0] ** 2 / norm2
        proj_z = -k[:, 1] * k[:, 0] / norm2
        cosines = np.cos(self._arguments((x, z)))
        scale = mean_velocity * self.amplitude
        return scale * (cosines @ proj_x), scale * (cosines @ proj_z)

    def velocity_divergence(self, mean_velocity: float, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Analytic divergence of ``velocity_fluctuation``; zero up to rounding."""
        k = self.wavevectors
        norm2 = np.maximum((k ** 2).sum(axis=1), np.finfo(float).tiny)
        proj_x = 1.0 - k[:, 0] ** 2 / norm2
        proj_z = -k[:, 1] * k[:, 0] / norm2
        sines = np.sin(self._arguments((x, z)))
        weights = k[:, 0] * proj_x + k[:, 1] * proj_z
        return -mean_velocity * self.amplitude * (sines @ weights)

    def _check(self, coords):
        if len(coords) != self.ndim:
            raise ContractViolation(f"{self.ndim}D modes evaluated with {len(coords)} coordinates")


def _coordinates(grid: Grid) -> Tuple[np.ndarray, ...]:
    X, Z = grid.mesh()
    return (Z,) if grid.ndim == 1 else (X, Z)


def kraichnan_log_field(spec: RandomFieldSpec, grid: Grid) -> np.ndarray:
    return KraichnanModes.sample(spec, grid.ndim).log_field(*_coordinates(grid))


def kraichnan_lognormal(spec: RandomFieldSpec, grid: Grid) -> np.ndarray:
    """
    Log-normal field exp(Y) on the lattice sites.

    Args:
        spec: Field statistics and seed.
        grid: 1D or 2D lattice.

    Returns:
        Field values shaped like ``grid.shape``.
    """
    if spec.variance == 0:
        return np.full(grid.shape, math.exp(spec.log_mean))
    field = np.exp(kraichnan_log_field(spec, grid))
    logger.debug("Kraichnan %s field (seed %d): mean %.4g", spec.corr_model, spec.seed, float(field.mean()))
    return field


def kraichnan_velocity_firstorder(spec: RandomFieldSpec, mean_velocity: float, grid: Grid) -> VelocityField:
    """
    Divergence-free first-order velocity for a mean flow along x.

    Raises:
        ContractViolation: On 1D grids.
    """
    if grid.ndim != 2:
        raise ContractViolation("first-order Kraichnan velocities need a 2D grid")
    X, Z = grid.mesh()
    if spec.variance == 0:
        return VelocityField.uniform(grid, u=mean_velocity, v=0.0)
    modes = KraichnanModes.sample(spec, 2)
    du, dv = modes.velocity_fluctuation(mean_velocity, X, Z)
    return VelocityField(v=dv, u=mean_velocity + du)
