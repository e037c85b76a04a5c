#!/usr/bin/env python3
"""
Decay wavefunction and cluster ionization physics

This module evaluates the apparatus-free Gamow state of an emitted alpha, its
square-norm and outward square-norm flux, and the cluster polarization
machinery that makes ionization cross sections singular near a critical radius.

Units: geometry in mm and s, cluster physics in nm and eV. Nothing converts
between the two implicitly.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError

logger = logging.getLogger("mottlab-gamow")

# Coulomb constant, eV*nm per squared elementary charge
COULOMB_EV_NM = 1.43996
# Planck constant times c, MeV*m
HC_MEV_M = 1.23984e-12
SPEED_OF_LIGHT_MM_S = 2.99792458e11


@dataclass
class GamowParams:
    """Parameters of the decay wavefunction.

    Attributes:
        gamma: decay e-folding rate (1/s)
        v: alpha speed (mm/s)
        k: wavenumber p/hbar (1/mm)
    """

    gamma: float
    v: float
    k: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.v > 0 and self.k > 0):
            raise DomainError(
                f"GamowParams needs gamma, v, k > 0 (got {self.gamma}, {self.v}, {self.k})"
            )

    @classmethod
    def from_decay(
        cls,
        half_life_s: float,
        kinetic_energy_mev: float,
        mass_energy_mev: float = 3727.379,
    ) -> "GamowParams":
        """Build parameters from a half-life and a nonrelativistic kinetic energy."""
        if half_life_s <= 0 or kinetic_energy_mev <= 0 or mass_energy_mev <= 0:
            raise DomainError("half-life and energies must be positive")
        gamma = math.log(2.0) / half_life_s
        v = SPEED_OF_LIGHT_MM_S * math.sqrt(2.0 * kinetic_energy_mev / mass_energy_mev)
        hbar_c_mev_mm = HC_MEV_M * 1e3 / (2.0 * math.pi)
        k = math.sqrt(2.0 * mass_energy_mev * kinetic_energy_mev) / hbar_c_mev_mm
        return cls(gamma=gamma, v=v, k=k)


@dataclass
class ClusterModel:
    """Spherical vapor cluster around a freshly created ion.

    charge_q is in elementary charges, r_ion in nm, binding_energy in eV.
    """

    charge_q: float
    epsilon: float
    r_ion: float
    binding_energy: float

    def __post_init__(self):
        if self.epsilon < 1:
            raise DomainError(f"dielectric constant must be >= 1, got {self.epsilon}")
        if self.r_ion <= 0:
            raise DomainError(f"ion radius must be positive, got {self.r_ion}")
        if self.binding_energy < 0:
            raise DomainError(
                f"binding energy must be nonnegative, got {self.binding_energy}"
            )


@dataclass
class CrossSectionModel:
    """Singular ionization cross section A/(R_c - R), lengths in nm."""

    coeff_a: float
    r_crit: float

    def __post_init__(self):
        if self.coeff_a <= 0 or self.r_crit <= 0:
            raise DomainError("coeff_a and r_crit must be positive")

    @classmethod
    def from_cluster(cls, cluster: ClusterModel, coeff_a: float) -> "CrossSectionModel":
        return cls(coeff_a=coeff_a, r_crit=critical_radius(cluster))


class FluxMode(str, Enum):
    EXACT = "exact"
    ASYMPTOTIC = "asymptotic"


@dataclass
class CollimationVerdict:
    drain_rate: float
    collimates: bool


@dataclass
class ConeEstimate:
    """Outgoing beam after an ionization, lengths in m."""

    wavelength: float
    opening_angle: float
    beam_spread: Optional[float] = None


def _check_radius(r):
    if np.any(np.asarray(r) <= 0):
        raise DomainError("distance from the nucleus must be positive (1/r singularity)")


def eval_amplitude(r, t, p: GamowParams):
    """
    Evaluate the Gamow state at distance r (mm) and time t (s).

    The global phase is fixed to 1 on the causal shell r = v*t. Points with
    r > v*t lie outside the support and return 0.

    Returns:
        complex amplitude in mm^(-3/2); an array when r or t is an array
    """
    _check_radius(r)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be nonnegative")
    lag = r / p.v - t
    inside = lag <= 0
    # clip keeps the exponent finite where the step function zeroes the value
    exponent = np.where(inside, lag, 0.0) * complex(p.gamma / 2.0, p.k * p.v)
    amplitude = np.where(
        inside,
        math.sqrt(p.gamma / (4.0 * math.pi * p.v)) / r * np.exp(exponent),
        0.0 + 0.0j,
    )
    if amplitude.ndim == 0:
        return complex(amplitude)
    return amplitude


def square_norm_density(r, t, p: GamowParams):
    """|psi|^2 in 1/mm^3."""
    _check_radius(r)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be nonnegative")
    lag = r / p.v - t
    density = np.where(
        lag <= 0,
        p.gamma / (4.0 * math.pi * p.v * r**2) * np.exp(np.minimum(lag, 0.0) * p.gamma),
        0.0,
    )
    if density.ndim == 0:
        return float(density)
    return density


def total_square_norm(t: float, p: GamowParams, r_max: Optional[float] = None) -> float:
    """
    Integrate 4*pi*r^2*|psi|^2 over the support (0, v*t] by adaptive quadrature.

    Args:
        t: time in s
        p: wavefunction parameters
        r_max: optional radius (mm) to stop at, for the share inside a finite volume

    Returns:
        dimensionless square-norm; equals 1 - exp(-gamma*t) when r_max is None
    """
    if t < 0:
        raise DomainError("time must be nonnegative")
    upper = p.v * t
    if r_max is not None:
        if r_max < 0:
            raise DomainError("r_max must be nonnegative")
        upper = min(upper, r_max)
    if upper <= 0:
        return 0.0

    def shell(r):
        return 4.0 * math.pi * r * r * square_norm_density(r, t, p)

    value, error = integrate.quad(shell, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
    logger.debug(f"square-norm quadrature t={t}: {value} (+/- {error})")
    return value


def square_norm_within(radius: float, t: float, p: GamowParams) -> float:
    """Closed-form square-norm inside a sphere of the given radius (mm)."""
    if radius < 0 or t < 0:
        raise DomainError("radius and time must be nonnegative")
    reach = min(radius, p.v * t)
    return math.exp(-p.gamma * t) * math.expm1(p.gamma * reach / p.v)


def flux_magnitude(r, t, p: GamowParams, mode: FluxMode = FluxMode.EXACT):
    """
    Outward square-norm flux in 1/(mm^2*s).

    The exact flux is v*|psi|^2: the phase gradient of the Gamow state is k
    radially, and the real amplitude factors contribute nothing to the current.
    The asymptotic form is gamma*exp(-gamma*t)/(4*pi*r^2).
    """
    _check_radius(r)
    mode = FluxMode(mode)
    if mode is FluxMode.EXACT:
        return p.v * square_norm_density(r, t, p)
    r = np.asarray(r, dtype=float)
    value = p.gamma * np.exp(-p.gamma * np.asarray(t, dtype=float)) / (4.0 * math.pi * r**2)
    if np.ndim(value) == 0:
        return float(value)
    return value


def polarization_energy(c: ClusterModel, r_cluster: float) -> float:
    """Polarization energy (eV) of a cluster of radius r_cluster (nm) around the ion."""
    if r_cluster <= 0:
        raise DomainError(f"cluster radius must be positive, got {r_cluster}")
    prefactor = 0.5 * c.charge_q**2 * COULOMB_EV_NM * (1.0 - 1.0 / c.epsilon)
    return prefactor * (1.0 / r_cluster - 1.0 / c.r_ion)


def critical_radius(c: ClusterModel) -> float:
    """
    Radius (nm) at which the polarization energy cancels the binding energy.

    Raises:
        DomainError: binding energy is zero or the cluster has no dielectric response
        NumericalError: the binding is too strong for any finite radius
    """
    if c.binding_energy <= 0 or c.epsilon <= 1:
        raise DomainError("critical radius needs binding_energy > 0 and epsilon > 1")
    inverse = 1.0 / c.r_ion - 2.0 * c.binding_energy / (
        c.charge_q**2 * COULOMB_EV_NM * (1.0 - 1.0 / c.epsilon)
    )
    if inverse <= 0:
        raise NumericalError(
            f"no finite critical radius: binding energy {c.binding_energy} eV is too strong "
            f"for this cluster model"
        )
    return 1.0 / inverse


def ionization_cross_section(r_cluster, m: CrossSectionModel):
    """A/(R_c - R) in nm^2, defined only below the critical radius."""
    deficit = m.r_crit - np.asarray(r_cluster, dtype=float)
    if np.any(deficit <= 0):
        raise DomainError(
            f"cluster radius must stay below the critical radius {m.r_crit} nm"
        )
    value = m.coeff_a / deficit
    if np.ndim(value) == 0:
        return float(value)
    return value


def collimation_criterion(sigma: float, flux: float, tau: float) -> CollimationVerdict:
    """Drain rate sigma*|J| and whether it empties the channel within tau."""
    if sigma < 0 or flux < 0 or tau < 0:
        raise DomainError("sigma, flux and tau must be nonnegative")
    drain_rate = sigma * flux
    return CollimationVerdict(drain_rate=drain_rate, collimates=drain_rate * tau > 1.0)


def collimation_cone(
    mass_energy: float,
    kinetic_energy: float,
    aperture: float,
    spacing: Optional[float] = None,
) -> ConeEstimate:
    """
    De Broglie wavelength and opening angle of the beam leaving a molecular aperture.

    Args:
        mass_energy: rest energy in MeV
        kinetic_energy: kinetic energy in MeV
        aperture: aperture width in m
        spacing: optional flight distance in m (droplet spacing) for the beam spread

    Returns:
        ConeEstimate with lengths in m and the angle in rad
    """
    if mass_energy <= 0 or kinetic_energy <= 0 or aperture <= 0:
        raise DomainError("mass energy, kinetic energy and aperture must be positive")
    if spacing is not None and spacing < 0:
        raise DomainError("spacing must be nonnegative")
    if kinetic_energy > 0.1 * mass_energy:
        logger.warning(
            f"kinetic energy {kinetic_energy} MeV is not small against {mass_energy} MeV; "
            f"the nonrelativistic wavelength is only indicative"
        )
    wavelength = HC_MEV_M / math.sqrt(2.0 * mass_energy * kinetic_energy)
    angle = wavelength / aperture
    spread = angle * spacing if spacing is not None else None
    return ConeEstimate(wavelength=wavelength, opening_angle=angle, beam_spread=spread)
