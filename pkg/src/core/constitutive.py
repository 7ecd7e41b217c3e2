"""
Constitutive laws for variably saturated porous media.

This module collects the closed-form relations between pressure head,
water content, hydraulic conductivity and diffusivity, together with the
surfactant surface-tension scaling and the reaction rate used by the coupled
flow and transport benchmarks. All functions accept scalars or numpy arrays
and evaluate element-wise.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from src.core.errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Constant of the degenerate 1D manufactured water content, used verbatim.
DEGENERATE_THETA_OFFSET = 3.4333
DEGENERATE_THETA_SAT = 0.3


def _array(values: ArrayLike) -> np.ndarray:
    return np.asarray(values, dtype=float)


def _out(values: np.ndarray):
    """Return numpy scalars for 0-d results so scalar callers get scalars back."""
    return values[()] if values.ndim == 0 else values


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpModelParams:
    """Parameters of the exponential water-content model."""

    theta_res: float
    theta_sat: float
    k_sat: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.theta_res < self.theta_sat <= 1.0:
            raise DomainError(
                f"Need 0 <= theta_res < theta_sat <= 1, got {self.theta_res}, {self.theta_sat}"
            )
        if self.k_sat <= 0:
            raise DomainError(f"k_sat must be positive, got {self.k_sat}")
        if self.alpha <= 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class VgmParams:
    """
    Van Genuchten-Mualem parameters.

    The exponent ``m`` is derived from ``n`` and cannot be passed in.
    """

    theta_res: float
    theta_sat: float
    k_sat: float
    alpha: float
    n: float
    m: float = field(init=False)

    def __post_init__(self):
        if self.n <= 1:
            raise DomainError(f"van Genuchten n must exceed 1, got {self.n}")
        if not 0.0 <= self.theta_res < self.theta_sat:
            raise DomainError(
                f"Need 0 <= theta_res < theta_sat, got {self.theta_res}, {self.theta_sat}"
            )
        if self.k_sat <= 0 or self.alpha <= 0:
            raise DomainError("k_sat and alpha must be positive")
        object.__setattr__(self, 'm', 1.0 - 1.0 / self.n)


@dataclass(frozen=True)
class FujitaParams:
    """
    Fujita diffusivity D(Theta) = d0 / (1 - v Theta)^2.

    ``k_sat`` scales the companion conductivity used for the gravity drift of
    the theta-form solver; it is expressed in normalized-content flux units.
    """

    d0: float
    v: float
    k_sat: float = 0.0

    def __post_init__(self):
        if self.d0 <= 0:
            raise DomainError(f"d0 must be positive, got {self.d0}")
        if not 0.0 <= self.v < 1.0:
            raise DomainError(f"v must lie in [0, 1), got {self.v}")
        if self.k_sat < 0:
            raise DomainError(f"k_sat must be nonnegative, got {self.k_sat}")


@dataclass(frozen=True)
class SurfactantParams:
    """Surface-tension scaling constants of gamma(c)."""

    a_gamma: float = 0.44
    b_gamma: float = 0.0046

    def __post_init__(self):
        if self.a_gamma <= 0:
            raise DomainError(f"a_gamma must be positive, got {self.a_gamma}")


# ---------------------------------------------------------------------------
# Exponential model
# ---------------------------------------------------------------------------

def theta_exp(psi: ArrayLike, p: ExpModelParams):
    """
    Water content of the exponential model.

    Args:
        psi: Pressure head.
        p: Model parameters.

    Returns:
        theta_res + (theta_sat - theta_res) exp(alpha psi) for psi < 0,
        theta_sat otherwise.
    """
    psi = _array(psi)
    unsat = np.minimum(psi, 0.0)
    theta = p.theta_res + (p.theta_sat - p.theta_res) * np.exp(p.alpha * unsat)
    return _out(np.where(psi < 0, theta, p.theta_sat))


def k_exp(theta: ArrayLike, p: ExpModelParams):
    """
    Conductivity of the exponential model, linear in water content.

    Raises:
        DomainError: If theta lies outside [theta_res, theta_sat].
    """
    theta = _array(theta)
    tol = 1e-12 * max(1.0, p.theta_sat)
    if np.any(theta < p.theta_res - tol) or np.any(theta > p.theta_sat + tol):
        raise DomainError(
            f"theta outside [{p.theta_res}, {p.theta_sat}]: "
            f"min={float(np.min(theta))}, max={float(np.max(theta))}"
        )
    relative = np.clip((theta - p.theta_res) / (p.theta_sat - p.theta_res), 0.0, 1.0)
    return _out(p.k_sat * relative)


def dtheta_exp(psi: ArrayLike, p: ExpModelParams):
    psi = _array(psi)
    slope = (p.theta_sat - p.theta_res) * p.alpha * np.exp(p.alpha * np.minimum(psi, 0.0))
    return _out(np.where(psi < 0, slope, 0.0))


# ---------------------------------------------------------------------------
# Van Genuchten-Mualem model
# ---------------------------------------------------------------------------

def saturation_vgm(psi: ArrayLike, p: VgmParams):
    """Normalized water content Theta(psi); 1 for psi >= 0."""
    psi = _array(psi)
    suction = np.where(psi < 0, -p.alpha * psi, 0.0)
    # exp/log1p keeps Theta accurate close to saturation
    return _out(np.exp(-p.m * np.log1p(suction ** p.n)))


def theta_vgm(psi: ArrayLike, p: VgmParams):
    """Water content theta_res + (theta_sat - theta_res) Theta(psi)."""
    return _out(p.theta_res + (p.theta_sat - p.theta_res) * _array(saturation_vgm(psi, p)))


def psi_vgm(theta: ArrayLike, p: VgmParams):
    """
    Closed-form inverse of the unsaturated branch of theta_vgm.

    Args:
        theta: Water content strictly between theta_res and theta_sat.
        p: Model parameters.

    Returns:
        Pressure head (negative).

    Raises:
        DomainError: At or beyond theta_res / theta_sat, where psi is unbounded.
    """
    theta = _array(theta)
    saturation = (theta - p.theta_res) / (p.theta_sat - p.theta_res)
    if np.any(saturation <= 0.0) or np.any(saturation >= 1.0):
        raise DomainError("psi_vgm is unbounded at theta_res and theta_sat")
    core = np.expm1(-np.log(saturation) / p.m)
    return _out(-(core ** (1.0 / p.n)) / p.alpha)


def k_vgm_saturation(saturation: ArrayLike, p: VgmParams):
    """Mualem conductivity as a function of normalized water content."""
    saturation = np.clip(_array(saturation), 0.0, 1.0)
    tail = 1.0 - (1.0 - saturation ** (1.0 / p.m)) ** p.m
    return _out(p.k_sat * np.sqrt(saturation) * tail ** 2)


def k_vgm(psi: ArrayLike, p: VgmParams):
    """Conductivity K(psi); K_sat for psi >= 0."""
    psi = _array(psi)
    k = _array(k_vgm_saturation(saturation_vgm(psi, p), p))
    return _out(np.where(psi < 0, k, p.k_sat))


def dtheta_vgm(psi: ArrayLike, p: VgmParams):
    """Analytic d theta / d psi."""
    psi = _array(psi)
    suction = np.where(psi < 0, -p.alpha * psi, 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        slope = (p.m * p.n * p.alpha * suction ** (p.n - 1.0)
                 * (1.0 + suction ** p.n) ** (-p.m - 1.0))
    slope = np.where(np.isfinite(slope), slope, 0.0)
    return _out(np.where(psi < 0, (p.theta_sat - p.theta_res) * slope, 0.0))


def dk_dsaturation_vgm(saturation: ArrayLike, p: VgmParams):
    """
    Analytic dK/dTheta of the Mualem conductivity.

    Raises:
        DomainError: For Theta outside [0, 1); the derivative blows up at 1.
    """
    saturation = _array(saturation)
    if np.any(saturation < 0.0) or np.any(saturation >= 1.0):
        raise DomainError("dK/dTheta requires Theta in [0, 1)")
    safe = np.where(saturation > 0, saturation, 1.0)
    inner = 1.0 - safe ** (1.0 / p.m)
    tail = 1.0 - inner ** p.m
    dtail = inner ** (p.m - 1.0) * safe ** (1.0 / p.m - 1.0)
    dk = p.k_sat * (0.5 * tail ** 2 / np.sqrt(safe) + 2.0 * np.sqrt(safe) * tail * dtail)
    return _out(np.where(saturation > 0, dk, 0.0))


def diffusivity_vgm(saturation: ArrayLike, p: VgmParams):
    """
    Theta-form diffusivity D(Theta) = K(Theta) / ((theta_sat - theta_res) dTheta/dpsi).

    Raises:
        DomainError: For Theta outside (0, 1).
    """
    saturation = _array(saturation)
    if np.any(saturation <= 0.0) or np.any(saturation >= 1.0):
        raise DomainError("D(Theta) requires Theta in (0, 1)")
    suction = np.expm1(-np.log(saturation) / p.m) ** (1.0 / p.n)
    dsat_dpsi = (p.m * p.n * p.alpha * suction ** (p.n - 1.0)
                 * saturation ** (1.0 + 1.0 / p.m))
    k = _array(k_vgm_saturation(saturation, p))
    return _out(k / ((p.theta_sat - p.theta_res) * dsat_dpsi))


def drift_vgm(saturation: ArrayLike, p: VgmParams):
    """Gravity drift V(Theta) = dK/dTheta / (theta_sat - theta_res)."""
    return _out(_array(dk_dsaturation_vgm(saturation, p)) / (p.theta_sat - p.theta_res))


# ---------------------------------------------------------------------------
# Fujita theta-form model
# ---------------------------------------------------------------------------

def fujita_diffusivity(saturation: ArrayLike, p: FujitaParams):
    """
    Fujita diffusivity D0 / (1 - v Theta)^2.

    Raises:
        DomainError: For negative Theta or where v Theta >= 1.
    """
    saturation = _array(saturation)
    if np.any(saturation < 0.0) or np.any(p.v * saturation >= 1.0):
        raise DomainError("Fujita diffusivity is singular for v*Theta >= 1")
    return _out(p.d0 / (1.0 - p.v * saturation) ** 2)


def k_fujita(saturation: ArrayLike, p: FujitaParams):
    """Conductivity whose Theta-derivative is proportional to the Fujita diffusivity."""
    saturation = _array(saturation)
    return _out(p.k_sat * (1.0 - p.v) * saturation / (1.0 - p.v * saturation))


def fujita_drift(saturation: ArrayLike, p: FujitaParams):
    """dK/dTheta of ``k_fujita``."""
    saturation = _array(saturation)
    if np.any(p.v * saturation >= 1.0):
        raise DomainError("Fujita drift is singular for v*Theta >= 1")
    return _out(p.k_sat * (1.0 - p.v) / (1.0 - p.v * saturation) ** 2)


# ---------------------------------------------------------------------------
# Surfactant coupling and reaction
# ---------------------------------------------------------------------------

def gamma_surfactant(c: ArrayLike, p: SurfactantParams):
    """
    Surface-tension scaling gamma(c) = 1 / (1 - b ln(c/a + 1)).

    Raises:
        DomainError: If c/a + 1 <= 0 or the denominator is not positive.
    """
    c = _array(c)
    shifted = c / p.a_gamma + 1.0
    if np.any(shifted <= 0):
        raise DomainError("gamma(c) needs c > -a_gamma")
    denominator = 1.0 - p.b_gamma * np.log(shifted)
    if np.any(denominator <= 0):
        raise DomainError("gamma(c) denominator is not positive")
    return _out(1.0 / denominator)


def reaction_rate(c: ArrayLike):
    """Saturating reaction R(c) = 1e-3 c / (1 + c)."""
    c = _array(c)
    if np.any(c <= -1.0):
        raise DomainError("reaction_rate is undefined for c <= -1")
    return _out(1e-3 * c / (1.0 + c))


# ---------------------------------------------------------------------------
# Manufactured-solution laws
# ---------------------------------------------------------------------------

def theta_manufactured(psi: ArrayLike, c: ArrayLike = 0.0):
    """theta(psi, c) = 1 / (1 - psi - c/10)."""
    denominator = 1.0 - _array(psi) - _array(c) / 10.0
    if np.any(denominator <= 0):
        raise DomainError("manufactured theta denominator is not positive")
    return _out(1.0 / denominator)


def dtheta_manufactured(psi: ArrayLike, c: ArrayLike = 0.0):
    return _out(_array(theta_manufactured(psi, c)) ** 2)


def k_manufactured(psi: ArrayLike):
    """K(psi) = psi^2."""
    return _out(_array(psi) ** 2)


def theta_degenerate(psi: ArrayLike, c: ArrayLike = 0.0):
    """Two-branch manufactured water content; constant 0.3 for psi >= 0."""
    psi = _array(psi)
    c = np.broadcast_to(_array(c), psi.shape)
    denominator = DEGENERATE_THETA_OFFSET - np.minimum(psi, 0.0) - c / 10.0
    if np.any(denominator[psi < 0] <= 0):
        raise DomainError("degenerate theta denominator is not positive")
    safe = np.where(denominator > 0, denominator, 1.0)
    return _out(np.where(psi < 0, 1.0 / safe, DEGENERATE_THETA_SAT))


def dtheta_degenerate(psi: ArrayLike, c: ArrayLike = 0.0):
    psi = _array(psi)
    theta = _array(theta_degenerate(psi, c))
    return _out(np.where(psi < 0, theta ** 2, 0.0))


# ---------------------------------------------------------------------------
# Soil models
# ---------------------------------------------------------------------------

class SoilModel:
    """
    Uniform interface over the constitutive laws.

    Subclasses evaluate water content, conductivity and d theta / d psi for a
    pressure field and an optional concentration field.
    """

    name = 'soil'
    couples_concentration = False

    def theta(self, psi: ArrayLike, c: Optional[ArrayLike] = None):
        raise NotImplementedError

    def conductivity(self, psi: ArrayLike, c: Optional[ArrayLike] = None):
        raise NotImplementedError

    def dtheta_dpsi(self, psi: ArrayLike, c: Optional[ArrayLike] = None):
        raise NotImplementedError

    def describe(self) -> dict:
        return {'model': self.name}


class ExponentialSoil(SoilModel):
    name = 'exponential'

    def __init__(self, params: ExpModelParams):
        self.params = params

    def theta(self, psi, c=None):
        return theta_exp(psi, self.params)

    def conductivity(self, psi, c=None):
        return k_exp(theta_exp(psi, self.params), self.params)

    def dtheta_dpsi(self, psi, c=None):
        return dtheta_exp(psi, self.params)

    def describe(self) -> dict:
        return {'model': self.name, **vars(self.params)}


class VanGenuchtenSoil(SoilModel):
    name = 'vgm'

    def __init__(self, params: VgmParams):
        self.params = params

    def theta(self, psi, c=None):
        return theta_vgm(psi, self.params)

    def conductivity(self, psi, c=None):
        return k_vgm(psi, self.params)

    def dtheta_dpsi(self, psi, c=None):
        return dtheta_vgm(psi, self.params)

    def describe(self) -> dict:
        return {'model': self.name, **vars(self.params)}


class ManufacturedSoil(SoilModel):
    """theta = 1/(1 - psi - c/10), K = psi^2."""

    name = 'manufactured'
    couples_concentration = True

    def theta(self, psi, c=None):
        return theta_manufactured(psi, 0.0 if c is None else c)

    def conductivity(self, psi, c=None):
        return k_manufactured(psi)

    def dtheta_dpsi(self, psi, c=None):
        return dtheta_manufactured(psi, 0.0 if c is None else c)


class DegenerateManufacturedSoil(SoilModel):
    """Two-branch manufactured law with K = 1."""

    name = 'manufactured-degenerate'
    couples_concentration = True

    def theta(self, psi, c=None):
        return theta_degenerate(psi, 0.0 if c is None else c)

    def conductivity(self, psi, c=None):
        return _out(np.ones_like(_array(psi)))

    def dtheta_dpsi(self, psi, c=None):
        return dtheta_degenerate(psi, 0.0 if c is None else c)


class SaturatedSoil(SoilModel):
    """Constant water content and conductivity; the saturated-aquifer limit."""

    name = 'saturated'

    def __init__(self, theta_value: float = 1.0, k_sat: float = 1.0):
        if k_sat <= 0:
            raise DomainError(f"k_sat must be positive, got {k_sat}")
        self.theta_value = theta_value
        self.k_sat = k_sat

    def theta(self, psi, c=None):
        return _out(np.full_like(_array(psi), self.theta_value))

    def conductivity(self, psi, c=None):
        return _out(np.full_like(_array(psi), self.k_sat))

    def dtheta_dpsi(self, psi, c=None):
        return _out(np.zeros_like(_array(psi)))

    def describe(self) -> dict:
        return {'model': self.name, 'theta': self.theta_value, 'k_sat': self.k_sat}


class SurfactantSoil(SoilModel):
    """Evaluates a base soil at the scaled head gamma(c) psi."""

    name = 'surfactant'
    couples_concentration = True

    def __init__(self, base: SoilModel, surfactant: SurfactantParams):
        self.base = base
        self.surfactant = surfactant

    def _scaled(self, psi, c):
        if c is None:
            return _array(psi)
        return _array(psi) * _array(gamma_surfactant(c, self.surfactant))

    def theta(self, psi, c=None):
        return self.base.theta(self._scaled(psi, c))

    def conductivity(self, psi, c=None):
        return self.base.conductivity(self._scaled(psi, c))

    def dtheta_dpsi(self, psi, c=None):
        scale = 1.0 if c is None else _array(gamma_surfactant(c, self.surfactant))
        return _out(scale * _array(self.base.dtheta_dpsi(self._scaled(psi, c))))

    def describe(self) -> dict:
        return {'model': self.name, 'base': self.base.describe(), **vars(self.surfactant)}


def theta_coupled(psi: ArrayLike, c: ArrayLike, soil: SoilModel,
                  surfactant: SurfactantParams):
    """theta(gamma(c) psi) for the given base soil."""
    return SurfactantSoil(soil, surfactant).theta(psi, c)


def l_theta(soil: SoilModel, c: Optional[float] = None, points: int = 2001) -> float:
    """
    Estimate sup |d theta / d psi| over the unsaturated range.

    The analytic derivative is scanned on a log-spaced grid of
    psi in [-1e6, -1e-6] and the best cell is refined with a bounded scalar
    minimization in log10(-psi).

    Args:
        soil: Soil model.
        c: Optional concentration for coupled models.
        points: Grid size of the scan.

    Returns:
        The L_theta diagnostic.
    """
    exponents = np.linspace(-6.0, 6.0, points)
    psi = -(10.0 ** exponents)
    slopes = np.abs(_array(soil.dtheta_dpsi(psi, c)))
    if not np.any(slopes > 0):
        return 0.0

    best = int(np.argmax(slopes))
    lo = exponents[max(best - 1, 0)]
    hi = exponents[min(best + 1, points - 1)]
    if hi <= lo:
        return float(slopes[best])

    result = minimize_scalar(
        lambda e: -abs(float(soil.dtheta_dpsi(-(10.0 ** e), c))),
        bounds=(lo, hi), method='bounded',
    )
    refined = -result.fun if result.success else 0.0
    return float(max(refined, slopes[best]))
