"""
Regular lattices, particle fields and particle redistribution.

Every GRW solver in GrwSim moves particle numbers between the sites of a
regular 1D or 2D lattice. This module provides the lattice geometry, the
particle <-> field-value scaling, the three redistribution modes and the
boundary-condition bookkeeping shared by the flow and transport solvers.

Array layout: 1D fields have shape ``(nz,)``; 2D fields have shape
``(nx, nz)`` with axis 0 along x and axis 1 along z.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from src.core.errors import ContractViolation

logger = logging.getLogger(__name__)

DEFAULT_N_TOTAL = 1e24
WEIGHT_TOL = 1e-12
# Above this magnitude binomial draws use the normal approximation.
BINOMIAL_EXACT_LIMIT = 1e15

FACES = ('x_low', 'x_high', 'z_low', 'z_high')


@dataclass(frozen=True)
class Grid:
    """
    Regular lattice.

    ``nx == 1`` denotes a 1D column along z. ``z_up`` records whether z
    grows upward (pressure-form solvers) or downward (theta-form solver).
    """

    dx: float
    dz: float
    nx: int
    nz: int
    x0: float = 0.0
    z0: float = 0.0
    z_up: bool = True

    def __post_init__(self):
        if self.dx <= 0 or self.dz <= 0:
            raise ContractViolation(f"Grid steps must be positive, got dx={self.dx}, dz={self.dz}")
        if self.nx < 1 or self.nz < 2:
            raise ContractViolation(f"Grid needs nx >= 1 and nz >= 2, got {self.nx}x{self.nz}")

    @classmethod
    def line(cls, z_min: float, z_max: float, dz: float, z_up: bool = True) -> 'Grid':
        """1D column with sites at z_min, z_min + dz, ..., z_max."""
        nz = int(round((z_max - z_min) / dz)) + 1
        return cls(dx=dz, dz=dz, nx=1, nz=nz, x0=0.0, z0=z_min, z_up=z_up)

    @classmethod
    def rectangle(cls, x_range: Tuple[float, float], z_range: Tuple[float, float],
                  dx: float, dz: Optional[float] = None) -> 'Grid':
        """2D lattice covering the closed rectangle x_range x z_range."""
        dz = dx if dz is None else dz
        nx = int(round((x_range[1] - x_range[0]) / dx)) + 1
        nz = int(round((z_range[1] - z_range[0]) / dz)) + 1
        return cls(dx=dx, dz=dz, nx=nx, nz=nz, x0=x_range[0], z0=z_range[0])

    @property
    def ndim(self) -> int:
        return 1 if self.nx == 1 else 2

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nz,) if self.ndim == 1 else (self.nx, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def vertical_axis(self) -> int:
        return 0 if self.ndim == 1 else 1

    @property
    def cell_volume(self) -> float:
        return self.dz if self.ndim == 1 else self.dx * self.dz

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.nz)

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x0 + 0.5 * self.dx * (self.nx - 1), self.z0 + 0.5 * self.dz * (self.nz - 1))

    def spacing(self, axis: int) -> float:
        if self.ndim == 1 or axis == 1:
            return self.dz
        return self.dx

    def axes(self) -> List[Tuple[int, float, bool]]:
        """(axis, spacing, is_vertical) for every lattice axis."""
        if self.ndim == 1:
            return [(0, self.dz, True)]
        return [(0, self.dx, False), (1, self.dz, True)]

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Site coordinates (X, Z), each shaped like a field."""
        if self.ndim == 1:
            return np.full(self.nz, self.x0), self.z.copy()
        return np.meshgrid(self.x, self.z, indexing='ij')

    def face_mask(self, face: str) -> np.ndarray:
        """Boolean mask of the sites lying on a lattice face."""
        mask = np.zeros(self.shape, dtype=bool)
        if face == 'z_low':
            mask[..., 0] = True
        elif face == 'z_high':
            mask[..., -1] = True
        elif face in ('x_low', 'x_high'):
            if self.ndim == 1:
                raise ContractViolation(f"Face '{face}' does not exist on a 1D grid")
            mask[0 if face == 'x_low' else -1, :] = True
        else:
            raise ContractViolation(f"Unknown face '{face}', expected one of {FACES}")
        return mask

    def face_axis(self, face: str) -> int:
        return 0 if face.startswith('x') else self.vertical_axis

    def boundary_mask(self) -> np.ndarray:
        faces = ('z_low', 'z_high') if self.ndim == 1 else FACES
        mask = np.zeros(self.shape, dtype=bool)
        for face in faces:
            mask |= self.face_mask(face)
        return mask

    def refined(self) -> 'Grid':
        """Grid with halved steps over the same domain."""
        return Grid(dx=self.dx / 2 if self.ndim == 2 else self.dz / 2, dz=self.dz / 2,
                    nx=1 if self.ndim == 1 else 2 * self.nx - 1, nz=2 * self.nz - 1,
                    x0=self.x0, z0=self.z0, z_up=self.z_up)

    def describe(self) -> Dict[str, float]:
        return {'dx': self.dx, 'dz': self.dz, 'nx': self.nx, 'nz': self.nz,
                'x0': self.x0, 'z0': self.z0, 'z_up': self.z_up}


@dataclass
class ParticleField:
    """
    Particle numbers approximating a field: value = counts * unit_scale / n_total.
    """

    counts: np.ndarray
    n_total: float = DEFAULT_N_TOTAL
    unit_scale: float = 1.0

    @classmethod
    def from_values(cls, values, n_total: float = DEFAULT_N_TOTAL,
                    unit_scale: float = 1.0, integer: bool = False) -> 'ParticleField':
        counts = np.asarray(values, dtype=float) * (n_total / unit_scale)
        if integer:
            counts = np.rint(counts)
        return cls(counts=counts, n_total=n_total, unit_scale=unit_scale)

    @property
    def values(self) -> np.ndarray:
        return self.counts * (self.unit_scale / self.n_total)

    def to_counts(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * (self.n_total / self.unit_scale)

    def total(self) -> float:
        return float(np.sum(self.counts))

    def copy(self) -> 'ParticleField':
        return ParticleField(self.counts.copy(), self.n_total, self.unit_scale)


class RedistributionMode(str, Enum):
    DETERMINISTIC = 'deterministic'
    REMAINDER_CARRY = 'remainder_carry'
    BINOMIAL = 'binomial'

    @classmethod
    def parse(cls, value: Union[str, 'RedistributionMode']) -> 'RedistributionMode':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace('-', '_'))
        except ValueError:
            raise ContractViolation(
                f"Unknown redistribution mode '{value}', expected one of {[m.value for m in cls]}"
            ) from None


class Redistributor:
    """
    Splits particle numbers over destinations in one of three modes.

    Deterministic mode returns the exact real products. RemainderCarry floors
    every product and keeps a running remainder per (site, direction) stream
    that emits one extra particle whenever it reaches one. Binomial draws
    integer splits from a seeded generator. Remainder streams persist until
    ``reset`` is called, which the solvers do at every time step.
    """

    def __init__(self, mode: Union[str, RedistributionMode] = RedistributionMode.DETERMINISTIC,
                 rng: Optional[np.random.Generator] = None, seed: Optional[int] = None):
        self.mode = RedistributionMode.parse(mode)
        if rng is None and self.mode is RedistributionMode.BINOMIAL:
            rng = np.random.Generator(np.random.Philox(seed))
        self.rng = rng
        self._carry: Dict[str, np.ndarray] = {}

    @property
    def deterministic(self) -> bool:
        return self.mode is RedistributionMode.DETERMINISTIC

    def reset(self):
        self._carry.clear()

    def _carry_for(self, key: str, shape: Tuple[int, ...]) -> np.ndarray:
        carry = self._carry.get(key)
        if carry is None or carry.shape != shape:
            carry = np.zeros(shape)
            self._carry[key] = carry
        return carry

    def _binomial(self, trials: np.ndarray, prob: np.ndarray) -> np.ndarray:
        trials, prob = np.broadcast_arrays(trials, prob)
        draws = np.zeros(trials.shape)
        exact = trials <= BINOMIAL_EXACT_LIMIT
        if np.any(exact):
            draws[exact] = self.rng.binomial(trials[exact].astype(np.int64), prob[exact])
        if np.any(~exact):
            n, p = trials[~exact], prob[~exact]
            normal = n * p + np.sqrt(n * p * (1.0 - p)) * self.rng.standard_normal(n.shape)
            draws[~exact] = np.clip(np.rint(normal), 0.0, n)
        return draws

    def split(self, counts: np.ndarray, weights: np.ndarray, key: str = 'split') -> np.ndarray:
        """
        Move fractions of ``counts`` towards k destinations.

        Args:
            counts: Particle numbers per site, shape S.
            weights: Fractions per destination, shape (k, *S); the residue stays.
            key: Name of the remainder streams used in RemainderCarry mode.

        Returns:
            Moved particle numbers, shape (k, *S).

        Raises:
            ContractViolation: If a weight leaves [0, 1] or the weights sum above one.
        """
        counts = np.asarray(counts, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if weights.shape[1:] != counts.shape:
            weights = np.broadcast_to(weights, (weights.shape[0],) + counts.shape)
        if np.any(weights < -WEIGHT_TOL) or np.any(weights > 1.0 + WEIGHT_TOL):
            raise ContractViolation("redistribution weights must lie in [0, 1]")
        total_weight = weights.sum(axis=0)
        if np.any(total_weight > 1.0 + WEIGHT_TOL):
            raise ContractViolation(
                f"redistribution weights sum to {float(np.max(total_weight))} > 1"
            )
        weights = np.clip(weights, 0.0, 1.0)

        if self.mode is RedistributionMode.DETERMINISTIC:
            return weights * counts

        sign = np.where(counts < 0, -1.0, 1.0)
        magnitude = np.abs(counts)
        if self.mode is RedistributionMode.BINOMIAL:
            magnitude = np.rint(magnitude)
            moved = np.zeros(weights.shape)
            remaining = magnitude.copy()
            left = np.ones(counts.shape)
            for idx in range(weights.shape[0]):
                with np.errstate(divide='ignore', invalid='ignore'):
                    prob = np.where(left > WEIGHT_TOL, np.clip(weights[idx] / left, 0.0, 1.0), 0.0)
                moved[idx] = self._binomial(remaining, prob)
                remaining -= moved[idx]
                left = left - weights[idx]
            return sign * moved

        products = weights * magnitude
        carry = self._carry_for(key, products.shape)
        whole = np.floor(products)
        carry += products - whole
        extra = np.floor(carry)
        carry -= extra
        moved = whole + extra

        # emitted remainders may not push the total past the available particles
        excess = np.maximum(moved.sum(axis=0) - magnitude, 0.0)
        for idx in reversed(range(moved.shape[0])):
            if not np.any(excess > 0):
                break
            take = np.minimum(excess, extra[idx])
            moved[idx] -= take
            carry[idx] += take
            excess -= take

        full = np.abs(total_weight - 1.0) <= WEIGHT_TOL
        if np.any(full):
            last = magnitude - moved[:-1].sum(axis=0)
            moved[-1] = np.where(full, last, moved[-1])
        return sign * moved

    def scale(self, counts: np.ndarray, weight: np.ndarray, key: str) -> np.ndarray:
        """Single-stream product ``weight * counts`` rounded according to the mode."""
        counts = np.asarray(counts, dtype=float)
        weight = np.broadcast_to(np.asarray(weight, dtype=float), counts.shape)
        if np.any(weight < -WEIGHT_TOL) or np.any(weight > 1.0 + WEIGHT_TOL):
            raise ContractViolation("scaling weight must lie in [0, 1]")
        weight = np.clip(weight, 0.0, 1.0)
        if self.mode is RedistributionMode.DETERMINISTIC:
            return weight * counts
        sign = np.where(counts < 0, -1.0, 1.0)
        magnitude = np.abs(counts)
        if self.mode is RedistributionMode.BINOMIAL:
            return sign * self._binomial(np.rint(magnitude), weight)
        products = weight * magnitude
        carry = self._carry_for(key, products.shape)
        whole = np.floor(products)
        carry += products - whole
        extra = np.floor(carry)
        carry -= extra
        return sign * (whole + extra)

    def source(self, amounts: np.ndarray, key: str = 'source') -> np.ndarray:
        """
        Floor of a source term in particles.

        Deterministic mode keeps the real value. The other modes floor the
        magnitude and recover the fractional part through a remainder stream
        (RemainderCarry) or a Bernoulli draw (Binomial).
        """
        amounts = np.asarray(amounts, dtype=float)
        if self.mode is RedistributionMode.DETERMINISTIC:
            return amounts
        sign = np.where(amounts < 0, -1.0, 1.0)
        magnitude = np.abs(amounts)
        whole = np.floor(magnitude)
        fraction = magnitude - whole
        if self.mode is RedistributionMode.BINOMIAL:
            return sign * (whole + (self.rng.random(magnitude.shape) < fraction))
        carry = self._carry_for(key, magnitude.shape)
        carry += fraction
        extra = np.floor(carry)
        carry -= extra
        return sign * (whole + extra)


def redistribute(weights, n, mode: Union[str, RedistributionMode] = RedistributionMode.DETERMINISTIC,
                 state: Optional[Redistributor] = None,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Split ``n`` particles over destinations with the given fractions.

    Args:
        weights: Per-destination fractions, each in [0, 1], summing to at most one.
        n: Particle number (scalar or array of sites).
        mode: Redistribution mode.
        state: Redistributor carrying remainder streams between calls.
        rng: Generator for Binomial mode when no state is given.

    Returns:
        Per-destination particle numbers, shape (len(weights), *shape(n)).
    """
    if state is None:
        state = Redistributor(mode, rng=rng)
    n = np.asarray(n, dtype=float)
    weights = np.asarray(weights, dtype=float).reshape((-1,) + (1,) * n.ndim)
    weights = np.broadcast_to(weights, (weights.shape[0],) + n.shape)
    return state.split(n, weights, key='redistribute')


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _field_values(field_like) -> np.ndarray:
    if isinstance(field_like, ParticleField):
        return field_like.values
    return np.asarray(field_like, dtype=float)


def l2_norm(field_like, grid: Optional[Grid] = None, cell_volume: Optional[float] = None) -> float:
    """Discrete L2 norm sqrt(sum v^2 * cell volume)."""
    values = _field_values(field_like)
    if cell_volume is None:
        cell_volume = grid.cell_volume if grid is not None else 1.0
    return float(np.sqrt(np.sum(values ** 2) * cell_volume))


def relative_error(field_like, reference, grid: Optional[Grid] = None) -> float:
    """
    Relative error ||v - w|| / ||w||.

    Raises:
        ContractViolation: On shape mismatch.
        ZeroDivisionError: If the reference has zero norm.
    """
    values = _field_values(field_like)
    ref = _field_values(reference)
    if values.shape != ref.shape:
        raise ContractViolation(f"Field shapes differ: {values.shape} vs {ref.shape}")
    denominator = l2_norm(ref, grid)
    if denominator == 0.0:
        raise ZeroDivisionError("reference field has zero L2 norm")
    return l2_norm(values - ref, grid) / denominator


# ---------------------------------------------------------------------------
# Neighbor arithmetic
# ---------------------------------------------------------------------------

def neighbor(values: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """out[i] = values[i + offset] along ``axis``; zero beyond the lattice."""
    out = np.zeros_like(values)
    n = values.shape[axis]
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if offset >= 0:
        src[axis] = slice(offset, n)
        dst[axis] = slice(0, n - offset)
    else:
        src[axis] = slice(0, n + offset)
        dst[axis] = slice(-offset, n)
    out[tuple(dst)] = values[tuple(src)]
    return out


def midpoint_values(values: np.ndarray, axis: int, rule: str = 'arithmetic') -> Tuple[np.ndarray, np.ndarray]:
    """
    Values at the half sites i+1/2 and i-1/2 along ``axis``.

    Half sites beyond the lattice carry zero, which closes those faces.
    """
    upper = neighbor(values, axis, 1)
    if rule == 'arithmetic':
        face = 0.5 * (values + upper)
    elif rule == 'harmonic':
        total = values + upper
        with np.errstate(divide='ignore', invalid='ignore'):
            face = np.where(total > 0, 2.0 * values * upper / total, 0.0)
    else:
        raise ContractViolation(f"Unknown mid-point rule '{rule}'")
    last = [slice(None)] * values.ndim
    last[axis] = -1
    face[tuple(last)] = 0.0
    return face, neighbor(face, axis, -1)


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------

BoundaryValue = Union[float, Callable[[float, np.ndarray, np.ndarray], np.ndarray]]
BOUNDARY_KINDS = ('dirichlet', 'neumann', 'noflow', 'free_drainage')


@dataclass
class BoundaryCondition:
    """
    Condition on (part of) a lattice face.

    For ``neumann`` the value is the inward flux through the face. A
    ``segment`` predicate on the face coordinates restricts the condition to
    part of the face; the remainder of every face defaults to no-flow.
    """

    face: str
    kind: str = 'noflow'
    value: BoundaryValue = 0.0
    segment: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.face not in FACES:
            raise ContractViolation(f"Unknown face '{self.face}'")
        if self.kind not in BOUNDARY_KINDS:
            raise ContractViolation(f"Unknown boundary kind '{self.kind}'")

    def evaluate(self, t: float, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        if callable(self.value):
            values = np.broadcast_to(np.asarray(self.value(t, x, z), dtype=float), x.shape)
        else:
            values = np.full(x.shape, float(self.value))
        if not np.all(np.isfinite(values)):
            raise ContractViolation(f"Non-finite {self.kind} value on face {self.face} at t={t}")
        return values


class BoundarySet:
    """Site masks and values of a collection of boundary conditions on one grid."""

    def __init__(self, grid: Grid, conditions: Iterable[BoundaryCondition] = ()):
        self.grid = grid
        self.conditions = list(conditions)
        self._x, self._z = grid.mesh()
        self._masks = []
        for bc in self.conditions:
            mask = grid.face_mask(bc.face)
            if bc.segment is not None:
                mask &= np.asarray(bc.segment(self._x, self._z), dtype=bool)
            self._masks.append(mask)
        self._check_overlaps()
        self.dirichlet_mask = np.zeros(grid.shape, dtype=bool)
        for bc, mask in zip(self.conditions, self._masks):
            if bc.kind == 'dirichlet':
                self.dirichlet_mask |= mask

    def _check_overlaps(self):
        for face in FACES:
            covered = None
            for bc, mask in zip(self.conditions, self._masks):
                if bc.face != face:
                    continue
                if covered is not None and np.any(covered & mask):
                    raise ContractViolation(f"Overlapping boundary conditions on face '{face}'")
                covered = mask.copy() if covered is None else covered | mask

    def apply_dirichlet(self, values: np.ndarray, t: float) -> np.ndarray:
        """Overwrite Dirichlet sites of ``values`` in place and return it."""
        for bc, mask in zip(self.conditions, self._masks):
            if bc.kind == 'dirichlet' and np.any(mask):
                values[mask] = bc.evaluate(t, self._x[mask], self._z[mask])
        return values

    def flux_conditions(self, kinds=('neumann', 'free_drainage')) -> List[Tuple[BoundaryCondition, np.ndarray]]:
        return [(bc, mask) for bc, mask in zip(self.conditions, self._masks)
                if bc.kind in kinds and np.any(mask)]

    def inward_flux(self, bc: BoundaryCondition, mask: np.ndarray, t: float) -> np.ndarray:
        return bc.evaluate(t, self._x[mask], self._z[mask])

    def has_dirichlet(self) -> bool:
        return bool(np.any(self.dirichlet_mask))

    def describe(self) -> List[Dict[str, str]]:
        return [{'face': bc.face, 'kind': bc.kind,
                 'partial': bc.segment is not None} for bc in self.conditions]


def jump_nearest(counts: np.ndarray, jumps: List[Tuple[int, np.ndarray, np.ndarray]],
                 redistributor: Redistributor, key: str) -> np.ndarray:
    """
    One nearest-neighbor GRW move.

    Args:
        counts: Particle numbers per site.
        jumps: ``(axis, w_plus, w_minus)`` per lattice axis: the per-site
            fractions jumping to i+1 and i-1. Fractions pointing off the
            lattice must be zero.
        redistributor: Rounding mode and remainder streams.
        key: Stream name.

    Returns:
        Particle numbers after the move; the residue of every site stays.
    """
    weights = np.stack([w for _, w_plus, w_minus in jumps for w in (w_plus, w_minus)])
    moved = redistributor.split(counts, weights, key)
    out = counts - moved.sum(axis=0)
    for idx, (axis, _, _) in enumerate(jumps):
        out = out + neighbor(moved[2 * idx], axis, -1) + neighbor(moved[2 * idx + 1], axis, 1)
    return out
