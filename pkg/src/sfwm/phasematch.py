"""Wavevector mismatch, phase-matched wavelengths and the phasematching function.

The pump travels on the slow axis, signal and idler on the fast axis.  Inside
``delta_k`` the pump frequency is pinned to the energy-conserving value
``(w_s + w_i) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import brentq

from ._kernels import segment_sum
from .dispersion import (
    C_UM_PER_PS,
    FUSED_SILICA,
    Axis,
    SellmeierModel,
    omega_to_wavelength,
    wavelength_to_omega,
    wavevector_omega,
)

#: Root refinement target for solve_phasematch, |dk| * L.
ROOT_TOL = 1e-6
#: Maximum step-halving disagreement accepted by phi_inhomogeneous.
QUADRATURE_TOL = 1e-6
#: Sub-intervals used for smooth (linear) birefringence profiles.
LINEAR_SUBDIVISIONS = 400
#: Truncation of the random-segment normal draws, in standard deviations.
RANDOM_TRUNCATION = 4.0

PHASE_MODELS = ("literal", "accumulated")


class NoPhasematchError(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


class PhysicalDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Uniform:
    kind = "uniform"

    def to_dict(self) -> dict:
        return {"profile": "uniform"}


@dataclass(frozen=True)
class LinearGradient:
    """dn(z) = dn0 + delta_dn * z / L."""

    delta_dn: float
    kind = "linear"

    def offsets(self, z, length):
        return self.delta_dn * np.asarray(z, dtype=float) / length

    def to_dict(self) -> dict:
        return {"profile": "linear", "delta_dn": self.delta_dn}


@dataclass(frozen=True)
class RandomSegments:
    """Piecewise-constant birefringence with normally distributed segment values.

    The per-segment offsets from the nominal birefringence are drawn once at
    construction (PCG64 seeded by ``seed``) and truncated at +-4 sigma by
    redrawing.
    """

    delta_dn: float
    segment_count: int = 400
    seed: int = 0
    values: np.ndarray = field(init=False, repr=False, compare=False)
    kind = "random"

    def __post_init__(self):
        if self.segment_count < 1:
            raise ValueError("segment_count must be >= 1")
        if self.delta_dn < 0:
            raise ValueError("delta_dn must be >= 0")
        rng = np.random.Generator(np.random.PCG64(self.seed))
        draws = rng.standard_normal(self.segment_count)
        bad = np.abs(draws) > RANDOM_TRUNCATION
        while bad.any():
            draws[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(draws) > RANDOM_TRUNCATION
        vals = self.delta_dn * draws
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def offsets(self, z, length):
        idx = np.clip((np.asarray(z, dtype=float) / length * self.segment_count).astype(int),
                      0, self.segment_count - 1)
        return self.values[idx]

    def to_dict(self) -> dict:
        return {"profile": "random", "delta_dn": self.delta_dn,
                "segments": self.segment_count, "seed": self.seed}


BirefringenceProfile = Union[Uniform, LinearGradient, RandomSegments]


def profile_from_dict(d: dict | None) -> BirefringenceProfile:
    """Build a profile from ``{"profile": ..., "delta_dn": ..., "segments": ..., "seed": ...}``."""
    if not d:
        return Uniform()
    kind = d.get("profile", "uniform")
    if kind == "uniform":
        return Uniform()
    if kind == "linear":
        return LinearGradient(float(d["delta_dn"]))
    if kind == "random":
        return RandomSegments(float(d["delta_dn"]), int(d.get("segments", 400)),
                              int(d.get("seed", 0)))
    raise ValueError(f"unknown birefringence profile {kind!r}")


@dataclass(frozen=True)
class WaveguideSpec:
    length_cm: float = 4.0
    birefringence: float = 1e-4
    profile: BirefringenceProfile = Uniform()
    phase_model: str = "literal"
    material: SellmeierModel = FUSED_SILICA

    def __post_init__(self):
        if self.length_cm <= 0:
            raise ValueError("waveguide length must be positive")
        if self.birefringence <= 0:
            raise ValueError("nominal birefringence must be positive")
        if self.phase_model not in PHASE_MODELS:
            raise ValueError(f"phase_model must be one of {PHASE_MODELS}")

    @property
    def length_um(self) -> float:
        return self.length_cm * 1e4

    def with_profile(self, profile: BirefringenceProfile) -> "WaveguideSpec":
        return WaveguideSpec(self.length_cm, self.birefringence, profile,
                             self.phase_model, self.material)


def delta_k(omega_s, omega_i, birefringence: float, model: SellmeierModel = FUSED_SILICA):
    """2 k_slow(w_p) - k_fast(w_s) - k_fast(w_i) with w_p = (w_s + w_i)/2, in rad/um."""
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    omega_p = 0.5 * (omega_s + omega_i)
    return (2 * wavevector_omega(omega_p, Axis.SLOW, model, birefringence)
            - wavevector_omega(omega_s, Axis.FAST, model, birefringence)
            - wavevector_omega(omega_i, Axis.FAST, model, birefringence))


def birefringence_sensitivity(omega_s, omega_i):
    """d(delta_k)/d(dn) = 4 pi / lambda_p = (w_s + w_i) / c, in rad/um."""
    return (np.asarray(omega_s, dtype=float) + np.asarray(omega_i, dtype=float)) / C_UM_PER_PS


def energy_conjugate(pump_nm: float, signal_nm: float) -> float:
    """Idler wavelength from 1/lambda_i = 2/lambda_p - 1/lambda_s."""
    inv = 2.0 / pump_nm - 1.0 / signal_nm
    if not inv > 0:
        raise PhysicalDomainError(
            f"no positive idler wavelength for pump {pump_nm} nm and signal {signal_nm} nm")
    return 1.0 / inv


def solve_phasematch(pump_nm: float, spec: WaveguideSpec, scan_points: int = 4000):
    """Non-degenerate (signal, idler) wavelengths in nm with dk = 0.

    The signal detuning is scanned outward from the pump until dk changes sign,
    then refined with Brent's method and a bisection tail until |dk| L < 1e-6.
    """
    model = spec.material
    model.check_range(pump_nm)
    lo, hi = model.valid_range
    wp = float(wavelength_to_omega(pump_nm))
    # keep both photons inside the model window
    max_det = min(wavelength_to_omega(lo) - wp, wp - wavelength_to_omega(hi)) * (1 - 1e-9)
    if max_det <= 0:
        raise NoPhasematchError("pump at the edge of the dispersion window")

    def f(det):
        return float(delta_k(wp + det, wp - det, spec.birefringence, model))

    dets = np.linspace(max_det / scan_points, max_det, scan_points)
    vals = delta_k(wp + dets, wp - dets, spec.birefringence, model)
    sign_change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if vals[0] <= 0 or sign_change.size == 0:
        raise NoPhasematchError(
            f"dk has no sign change for pump {pump_nm} nm, dn={spec.birefringence:g}")
    j = sign_change[0]
    a, b = dets[j], dets[j + 1]
    root = brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    fa = f(a)
    for _ in range(200):
        if abs(f(root)) * spec.length_um < ROOT_TOL:
            break
        mid = 0.5 * (a + b)
        if np.sign(f(mid)) == np.sign(fa):
            a, fa = mid, f(mid)
        else:
            b = mid
        root = 0.5 * (a + b)
    else:
        raise NoPhasematchError("bisection did not reach the root tolerance")
    return float(omega_to_wavelength(wp + root)), float(omega_to_wavelength(wp - root))


def phi_uniform(omega_s, omega_i, spec: WaveguideSpec):
    """exp(i dk L/2) sinc(dk L/2), the length-normalized integral of exp(i dk z)."""
    x = 0.5 * delta_k(omega_s, omega_i, spec.birefringence, spec.material) * spec.length_um
    return np.exp(1j * x) * np.sinc(x / np.pi)


def _quadrature_nodes(spec: WaveguideSpec, refine: int):
    """Sub-interval midpoints, widths, phase offsets g(z) and slopes g'(z).

    The total phase at position z is dk0 * z + beta * g(z), where g is
    z * eps(z) for the literal model and the running integral of eps for the
    accumulated model (eps = dn(z) - dn0).
    """
    L = spec.length_um
    prof = spec.profile
    literal = spec.phase_model == "literal"
    if isinstance(prof, LinearGradient):
        n = LINEAR_SUBDIVISIONS * refine
        h = L / n
        z = (np.arange(n) + 0.5) * h
        a = prof.delta_dn / L
        if literal:
            g, gp = a * z**2, 2 * a * z
        else:
            g, gp = 0.5 * a * z**2, a * z
        return z, np.full(n, h), g, gp
    if isinstance(prof, RandomSegments):
        m = prof.segment_count
        seg = L / m
        h = seg / refine
        z = (np.arange(m * refine) + 0.5) * h
        eps = np.repeat(prof.values, refine)
        if literal:
            g = z * eps
        else:
            starts = np.concatenate(([0.0], np.cumsum(prof.values * seg)[:-1]))
            z0 = np.repeat(np.arange(m) * seg, refine)
            g = np.repeat(starts, refine) + eps * (z - z0)
        return z, np.full(z.size, h), g, eps.copy()
    raise TypeError(f"profile {prof!r} has no longitudinal structure")


def _phi_nodes(dk0, beta, spec, refine):
    z, h, g, gp = _quadrature_nodes(spec, refine)
    shape = np.shape(dk0)
    out = segment_sum(np.ascontiguousarray(np.ravel(dk0), dtype=float),
                      np.ascontiguousarray(np.ravel(beta), dtype=float),
                      z, h, g, gp, spec.length_um)
    return out.reshape(shape)


def phi_inhomogeneous(omega_s, omega_i, spec: WaveguideSpec, refine: int = 1,
                      probe_stride: int = 1, max_refine: int = 64):
    """Length-normalized phasematching integral for a z-dependent birefringence.

    Each sub-interval is integrated exactly with the phase linearized about its
    midpoint.  The subdivision is doubled until every ``probe_stride``-th
    point changes by at most 1e-6 on a further halving of the step; the full
    set of points is then evaluated once at that resolution.  QuadratureError
    is raised if convergence needs more than ``max_refine``.
    """
    if isinstance(spec.profile, Uniform):
        raise TypeError("phi_inhomogeneous needs a LinearGradient or RandomSegments profile")
    omega_s, omega_i = np.broadcast_arrays(np.asarray(omega_s, float), np.asarray(omega_i, float))
    dk0 = delta_k(omega_s, omega_i, spec.birefringence, spec.material)
    beta = birefringence_sensitivity(omega_s, omega_i)
    if probe_stride:
        probe = slice(None, None, probe_stride)
        dk_probe, beta_probe = np.ravel(dk0)[probe], np.ravel(beta)[probe]
        coarse = _phi_nodes(dk_probe, beta_probe, spec, refine)
        while True:
            fine = _phi_nodes(dk_probe, beta_probe, spec, 2 * refine)
            err = float(np.max(np.abs(fine - coarse))) if fine.size else 0.0
            if err <= QUADRATURE_TOL:
                break
            refine *= 2
            if refine > max_refine:
                raise QuadratureError(
                    f"phasematching quadrature not converged (step-halving change {err:.2e})")
            coarse = fine
    return _phi_nodes(dk0, beta, spec, refine)


def phasematching(omega_s, omega_i, spec: WaveguideSpec, probe_stride: int = 1):
    """Dispatch to the uniform or inhomogeneous phasematching function."""
    if isinstance(spec.profile, Uniform):
        return phi_uniform(omega_s, omega_i, spec)
    return phi_inhomogeneous(omega_s, omega_i, spec, probe_stride=probe_stride)
