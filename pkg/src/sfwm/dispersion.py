"""Fused-silica dispersion with a scalar birefringence offset.

Units used throughout the package:

* wavelength ``nm``
* angular frequency ``rad/ps``
* wavevector ``rad/um``
* group velocity ``um/ps``

The base index comes from a Sellmeier sum.  The slow and fast axes of the
waveguide sit at ``n + dn/2`` and ``n - dn/2`` respectively, so only the
difference ``dn`` is observable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

C_UM_PER_PS = 299.792458
C_NM_PER_PS = 299792.458

#: Relative finite-difference step (fraction of wavelength) for dn/dlambda.
FD_REL_STEP = 1e-4


class DispersionRangeError(ValueError):
    """Wavelength outside the validity window of a dispersion model."""


class Axis(enum.Enum):
    FAST = "fast"
    SLOW = "slow"

    @property
    def sign(self) -> float:
        return 0.5 if self is Axis.SLOW else -0.5


@dataclass(frozen=True)
class SellmeierModel:
    """n^2 = 1 + sum_i B_i lam^2 / (lam^2 - C_i), with lam in um and C_i in um^2."""

    terms: tuple[tuple[float, float], ...]
    valid_range: tuple[float, float] = (210.0, 3710.0)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(b), float(c)) for b, c in self.terms))
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ValueError(f"bad valid_range {self.valid_range}")
        object.__setattr__(self, "valid_range", (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, d: dict) -> "SellmeierModel":
        return cls(
            terms=tuple(tuple(t) for t in d["terms"]),
            valid_range=tuple(d.get("valid_range_nm", (210.0, 3710.0))),
            name=d.get("name", "custom"),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "terms": [list(t) for t in self.terms],
            "valid_range_nm": list(self.valid_range),
        }

    def check_range(self, wavelength_nm) -> None:
        lam = np.asarray(wavelength_nm, dtype=float)
        lo, hi = self.valid_range
        if lam.size and (np.isnan(lam).any() or lam.min() < lo or lam.max() > hi):
            bad = lam[(lam < lo) | (lam > hi) | np.isnan(lam)].ravel()[0]
            raise DispersionRangeError(
                f"wavelength {bad:g} nm outside the {self.name} model window [{lo:g}, {hi:g}] nm"
            )

    def index(self, wavelength_nm):
        """Base (axis-free) refractive index."""
        self.check_range(wavelength_nm)
        lam2 = (np.asarray(wavelength_nm, dtype=float) * 1e-3) ** 2
        n2 = 1.0
        for b, c in self.terms:
            n2 = n2 + b * lam2 / (lam2 - c)
        return np.sqrt(n2)


# Malitson (1965) fused silica, 0.21-3.71 um.
FUSED_SILICA = SellmeierModel(
    terms=(
        (0.6961663, 0.0684043**2),
        (0.4079426, 0.1162414**2),
        (0.8974794, 9.896161**2),
    ),
    valid_range=(210.0, 3710.0),
    name="fused_silica",
)


def wavelength_to_omega(wavelength_nm):
    return 2 * np.pi * C_NM_PER_PS / np.asarray(wavelength_nm, dtype=float)


def omega_to_wavelength(omega):
    return 2 * np.pi * C_NM_PER_PS / np.asarray(omega, dtype=float)


def refractive_index(wavelength_nm, axis: Axis, model: SellmeierModel = FUSED_SILICA,
                     birefringence: float = 0.0):
    """Index seen by light polarized along ``axis``.

    Raises DispersionRangeError when any wavelength leaves ``model.valid_range``.
    """
    return model.index(wavelength_nm) + axis.sign * birefringence


def wavevector(wavelength_nm, axis: Axis, model: SellmeierModel = FUSED_SILICA,
               birefringence: float = 0.0):
    """k = 2 pi n / lambda in rad/um."""
    lam_um = np.asarray(wavelength_nm, dtype=float) * 1e-3
    return 2 * np.pi * refractive_index(wavelength_nm, axis, model, birefringence) / lam_um


def wavevector_omega(omega, axis: Axis, model: SellmeierModel = FUSED_SILICA,
                     birefringence: float = 0.0):
    """Same as :func:`wavevector` but parametrized by angular frequency."""
    omega = np.asarray(omega, dtype=float)
    n = refractive_index(omega_to_wavelength(omega), axis, model, birefringence)
    return n * omega / C_UM_PER_PS


def index_derivative(wavelength_nm, model: SellmeierModel = FUSED_SILICA,
                     rel_step: float = FD_REL_STEP):
    """dn/dlambda (per nm) by central difference with step ``rel_step * lambda``."""
    lam = np.asarray(wavelength_nm, dtype=float)
    h = rel_step * lam
    model.check_range(lam - h)
    model.check_range(lam + h)
    return (model.index(lam + h) - model.index(lam - h)) / (2 * h)


def group_index(wavelength_nm, axis: Axis, model: SellmeierModel = FUSED_SILICA,
                birefringence: float = 0.0, rel_step: float = FD_REL_STEP):
    lam = np.asarray(wavelength_nm, dtype=float)
    n = refractive_index(lam, axis, model, birefringence)
    return n - lam * index_derivative(lam, model, rel_step)


def group_velocity(wavelength_nm, axis: Axis, model: SellmeierModel = FUSED_SILICA,
                   birefringence: float = 0.0, rel_step: float = FD_REL_STEP):
    """v_g = c / (n - lambda dn/dlambda) in um/ps."""
    return C_UM_PER_PS / group_index(wavelength_nm, axis, model, birefringence, rel_step)


def sellmeier_from_config(block: dict | None) -> SellmeierModel:
    if not block:
        return FUSED_SILICA
    return SellmeierModel.from_dict(block)
