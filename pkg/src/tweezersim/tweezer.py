"""Dipole-trap physics of a focused Gaussian beam acting on Rb-87.

The depth of the attractive potential created by trapping light red-detuned
from both D lines is

    U0 = (hbar*Gamma/4) * P/(pi*w0^2*I_sat) * (Gamma/(3*delta1) + 2*Gamma/(3*delta2))

with line-strength weights 1/3 (D1) and 2/3 (D2) and a single shared
linewidth Gamma.  Inverting U0 together with the harmonic radial curvature
m*omega_r^2 = 4*U0/w0^2 gives the beam waist from a measured oscillation
frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constants

__all__ = [
    "AtomSpecies",
    "TrapBeam",
    "TrapCharacteristics",
    "RB87",
    "detunings",
    "trap_depth",
    "waist_from_frequency",
    "oscillation_frequencies",
    "trap_characteristics",
    "potential",
]


@dataclass(frozen=True)
class AtomSpecies:
    """Atomic data entering the two-line light-shift model.

    All frequencies are angular (rad/s).
    """

    mass: float
    linewidth: float
    saturation_intensity: float
    d1_frequency: float
    d2_frequency: float
    constants_version: str = constants.CONSTANTS_VERSION

    def __post_init__(self):
        for name in ("mass", "linewidth", "saturation_intensity", "d1_frequency", "d2_frequency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.d2_frequency <= self.d1_frequency:
            raise ValueError("d2_frequency must exceed d1_frequency")


RB87 = AtomSpecies(
    mass=constants.RB87_MASS,
    linewidth=constants.RB87_LINEWIDTH,
    saturation_intensity=constants.RB87_I_SAT,
    d1_frequency=constants.RB87_D1_FREQUENCY,
    d2_frequency=constants.RB87_D2_FREQUENCY,
)


@dataclass(frozen=True)
class TrapBeam:
    """Trapping-beam parameters: power (W), waist (m), wavelength (m)."""

    power: float
    waist: float
    trap_wavelength: float = 850e-9

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if self.trap_wavelength <= 0:
            raise ValueError("trap_wavelength must be > 0")
        if self.waist <= self.trap_wavelength / 4:
            raise ValueError("waist below lambda/4: Gaussian-beam model invalid")

    @property
    def rayleigh_range(self) -> float:
        return np.pi * self.waist**2 / self.trap_wavelength


@dataclass(frozen=True)
class TrapCharacteristics:
    """Derived trap summary; frequencies are angular (rad/s), depth in J."""

    depth: float
    waist: float
    rayleigh_range: float
    radial_frequency: float
    longitudinal_frequency: float
    detuning_d1: float
    detuning_d2: float

    def to_json_dict(self) -> dict:
        """Unit-explicit serialization, angular frequencies reported as f/2pi."""
        two_pi = 2.0 * np.pi
        return {
            "depth_J": self.depth,
            "depth_mK": self.depth / constants.k_B * 1e3,
            "depth_MHz": self.depth / constants.h / 1e6,
            "waist_um": self.waist * 1e6,
            "rayleigh_range_um": self.rayleigh_range * 1e6,
            "omega_r_kHz": self.radial_frequency / two_pi / 1e3,
            "omega_z_kHz": self.longitudinal_frequency / two_pi / 1e3,
            "detuning_d1_THz": self.detuning_d1 / two_pi / 1e12,
            "detuning_d2_THz": self.detuning_d2 / two_pi / 1e12,
        }


def detunings(species: AtomSpecies, trap_wavelength: float) -> tuple[float, float]:
    """Angular detunings (line minus trap frequency) of both D lines.

    The trap light must be red of both lines; blue or resonant light is
    rejected since the attractive-potential model no longer applies.
    """
    if trap_wavelength <= 0:
        raise ValueError("trap_wavelength must be > 0")
    trap = 2.0 * np.pi * constants.c / trap_wavelength
    d1 = species.d1_frequency - trap
    d2 = species.d2_frequency - trap
    if d1 <= 0 or d2 <= 0:
        raise ValueError("trap light must be red-detuned from both D lines")
    return d1, d2


def _line_weight(species: AtomSpecies, trap_wavelength: float) -> float:
    d1, d2 = detunings(species, trap_wavelength)
    g = species.linewidth
    return g / (3.0 * d1) + 2.0 * g / (3.0 * d2)


def trap_depth(beam: TrapBeam, species: AtomSpecies) -> float:
    """Depth U0 (J, positive) of the attractive potential at the focus."""
    weight = _line_weight(species, beam.trap_wavelength)
    return (
        constants.hbar
        * species.linewidth
        / 4.0
        * beam.power
        / (np.pi * beam.waist**2 * species.saturation_intensity)
        * weight
    )


def waist_from_frequency(
    power: float,
    radial_frequency: float,
    species: AtomSpecies,
    trap_wavelength: float = 850e-9,
) -> float:
    """Beam waist inferred from a measured radial oscillation frequency.

    Fourth root of hbar*Gamma/(m*omega_r^2) * P/(pi*I_sat) * line weight,
    the exact algebraic inverse of trap_depth plus the harmonic curvature.
    """
    if power <= 0:
        raise ValueError("power must be > 0")
    if radial_frequency <= 0:
        raise ValueError("radial_frequency must be > 0")
    weight = _line_weight(species, trap_wavelength)
    return (
        constants.hbar
        * species.linewidth
        / (species.mass * radial_frequency**2)
        * power
        / (np.pi * species.saturation_intensity)
        * weight
    ) ** 0.25


def oscillation_frequencies(depth: float, beam: TrapBeam, species: AtomSpecies) -> tuple[float, float]:
    """(omega_r, omega_z) of the harmonic trap bottom.

    omega_r = sqrt(4*U0/(m*w0^2)), omega_z = sqrt(2*U0/(m*z_R^2)).
    """
    if depth <= 0:
        raise ValueError("depth must be > 0")
    omega_r = np.sqrt(4.0 * depth / (species.mass * beam.waist**2))
    omega_z = np.sqrt(2.0 * depth / (species.mass * beam.rayleigh_range**2))
    return omega_r, omega_z


def trap_characteristics(beam: TrapBeam, species: AtomSpecies) -> TrapCharacteristics:
    """Full derived summary for a trap beam."""
    depth = trap_depth(beam, species)
    omega_r, omega_z = oscillation_frequencies(depth, beam, species)
    d1, d2 = detunings(species, beam.trap_wavelength)
    return TrapCharacteristics(
        depth=depth,
        waist=beam.waist,
        rayleigh_range=beam.rayleigh_range,
        radial_frequency=omega_r,
        longitudinal_frequency=omega_z,
        detuning_d1=d1,
        detuning_d2=d2,
    )


def potential(position, depth: float, beam: TrapBeam):
    """Gaussian-beam potential U(r, z) = -U0 * exp(-2r^2/w(z)^2) / (1 + (z/z_R)^2).

    position is (r, z); both may be arrays.  U(0, 0) = -U0 and U -> 0 far
    from the focus.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    r, z = position
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    expansion = 1.0 + (z / beam.rayleigh_range) ** 2
    out = -depth * np.exp(-2.0 * r**2 / (beam.waist**2 * expansion)) / expansion
    if out.ndim == 0:
        return float(out)
    return out
