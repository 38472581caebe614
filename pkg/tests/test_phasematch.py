import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from sfwm.dispersion import Axis, SellmeierModel, refractive_index, wavelength_to_omega
from sfwm.phasematch import (
    LinearGradient,
    NoPhasematchError,
    PhysicalDomainError,
    QuadratureError,
    RandomSegments,
    Uniform,
    WaveguideSpec,
    birefringence_sensitivity,
    delta_k,
    energy_conjugate,
    phasematching,
    phi_inhomogeneous,
    phi_uniform,
    profile_from_dict,
    solve_phasematch,
)

SPEC = WaveguideSpec()


def mismatch_by_wavelength(lp, ls, dn):
    """Independent route: dk from refractive indices at wavelengths (rad/um)."""
    li = 1 / (2 / lp - 1 / ls)
    k = lambda lam, ax: 2e3 * np.pi * refractive_index(lam, ax, birefringence=dn) / lam
    return 2 * k(lp, Axis.SLOW) - k(ls, Axis.FAST) - k(li, Axis.FAST)


def test_solve_729():
    t0 = time.perf_counter()
    ls, li = solve_phasematch(729.0, SPEC)
    assert time.perf_counter() - t0 < 1.0
    assert ls == pytest.approx(676.0, abs=3.0)
    assert li == pytest.approx(790.0, abs=3.0)


@pytest.mark.parametrize("lp, dn", [(729.0, 1e-4), (1100.0, 1e-4), (800.0, 2e-4), (650.0, 5e-5)])
def test_solution_matches_wavelength_space_root(lp, dn):
    spec = WaveguideSpec(birefringence=dn)
    ls, li = solve_phasematch(lp, spec)
    ref = brentq(lambda s: mismatch_by_wavelength(lp, s, dn), lp * 0.8, lp * (1 - 1e-4),
                 xtol=1e-12)
    assert ls == pytest.approx(ref, abs=1e-6)
    assert 1 / ls + 1 / li == pytest.approx(2 / lp, rel=1e-12)
    ws, wi = wavelength_to_omega(ls), wavelength_to_omega(li)
    assert abs(delta_k(ws, wi, dn)) * spec.length_um < 1e-6


def test_no_sign_change_raises():
    # a dispersionless medium has dk = 2 w_p dn / c > 0 everywhere
    flat = SellmeierModel(terms=((0.0, 0.01),), name="vacuum-like")
    with pytest.raises(NoPhasematchError):
        solve_phasematch(729.0, WaveguideSpec(material=flat))


@settings(max_examples=40, deadline=None)
@given(st.floats(650.0, 720.0), st.floats(1e-5, 5e-4), st.floats(1e-5, 5e-4))
def test_mismatch_linear_in_birefringence(ls, dn1, gap):
    dn2 = dn1 + gap
    lp = 729.0
    li = energy_conjugate(lp, ls)
    ws, wi = wavelength_to_omega(ls), wavelength_to_omega(li)
    slope = (delta_k(ws, wi, dn2) - delta_k(ws, wi, dn1)) / (dn2 - dn1)
    assert slope == pytest.approx(4 * np.pi / (lp * 1e-3), rel=1e-6)
    assert birefringence_sensitivity(ws, wi) == pytest.approx(slope, rel=1e-6)


def test_energy_conjugate_domain():
    assert energy_conjugate(729.0, 729.0) == pytest.approx(729.0)
    with pytest.raises(PhysicalDomainError):
        energy_conjugate(729.0, 364.0)


def test_uniform_peak_and_modulus():
    ls, li = solve_phasematch(729.0, SPEC)
    ws, wi = wavelength_to_omega(ls), wavelength_to_omega(li)
    assert abs(phi_uniform(ws, wi, SPEC)) == pytest.approx(1.0, abs=1e-12)
    x = 0.5 * delta_k(ws + 5, wi - 3, SPEC.birefringence) * SPEC.length_um
    assert abs(phi_uniform(ws + 5, wi - 3, SPEC)) == pytest.approx(abs(np.sin(x) / x), rel=1e-12)


def _quad_phi(dk, L, phase=lambda z: 0.0):
    re = quad(lambda z: np.cos(dk * z + phase(z)), 0, L, limit=2000, epsabs=1e-13)[0]
    im = quad(lambda z: np.sin(dk * z + phase(z)), 0, L, limit=2000, epsabs=1e-13)[0]
    return complex(re, im) / L


@pytest.mark.parametrize("dws, dwi", [(0.0, 0.0), (2.0, -1.0), (6.0, 4.0), (-9.0, 2.5)])
def test_uniform_matches_quadrature(dws, dwi):
    ls, li = solve_phasematch(729.0, SPEC)
    ws, wi = wavelength_to_omega(ls) + dws, wavelength_to_omega(li) + dwi
    dk = float(delta_k(ws, wi, SPEC.birefringence))
    assert phi_uniform(ws, wi, SPEC) == pytest.approx(_quad_phi(dk, SPEC.length_um), abs=1e-9)


def _axis_points():
    ls, li = solve_phasematch(729.0, SPEC)
    ws = wavelength_to_omega(ls) + np.linspace(-8, 8, 9)
    wi = wavelength_to_omega(li) + np.linspace(-6, 6, 9)
    return np.meshgrid(ws, wi, indexing="ij")


@pytest.mark.parametrize("profile", [LinearGradient(0.0), RandomSegments(0.0, 50, seed=3)])
def test_zero_variation_reduces_to_uniform(profile):
    ws, wi = _axis_points()
    for model in ("literal", "accumulated"):
        spec = WaveguideSpec(profile=profile, phase_model=model)
        assert np.allclose(phi_inhomogeneous(ws, wi, spec), phi_uniform(ws, wi, SPEC),
                           atol=1e-12)


@pytest.mark.parametrize("delta", [1e-6, 3e-6, 1e-5])
def test_linear_gradient_matches_quadrature(delta):
    spec = WaveguideSpec(profile=LinearGradient(delta))
    L = spec.length_um
    ws, wi = _axis_points()
    for a, b in [(0, 0), (4, 4), (2, 7), (8, 1)]:
        dk = float(delta_k(ws[a, b], wi[a, b], spec.birefringence))
        beta = float(birefringence_sensitivity(ws[a, b], wi[a, b]))
        ref = _quad_phi(dk, L, lambda z: beta * delta * z**2 / L)
        assert phi_inhomogeneous(ws[a, b], wi[a, b], spec) == pytest.approx(ref, abs=2e-6)


def test_accumulated_linear_is_half_gradient_literal():
    ws, wi = _axis_points()
    acc = phi_inhomogeneous(ws, wi, WaveguideSpec(profile=LinearGradient(4e-6),
                                                  phase_model="accumulated"))
    lit = phi_inhomogeneous(ws, wi, WaveguideSpec(profile=LinearGradient(2e-6)))
    assert np.allclose(acc, lit, atol=2e-6)


def _segment_sum_oracle(dk, beta, spec, values, accumulated):
    """Exact piecewise integral: the phase is linear in z inside each segment."""
    L = spec.length_um
    m = values.size
    edges = np.linspace(0, L, m + 1)
    total, offset = 0j, 0.0
    for j, e in enumerate(values):
        z0, z1 = edges[j], edges[j + 1]
        a = dk + beta * e
        c = beta * (offset - e * z0) if accumulated else 0.0
        total += np.exp(1j * c) * (np.exp(1j * a * z1) - np.exp(1j * a * z0)) / (1j * a)
        offset += e * (z1 - z0)
    return total / L


@pytest.mark.parametrize("model", ["literal", "accumulated"])
@pytest.mark.parametrize("seed", [0, 11])
def test_random_segments_match_exact_piecewise(model, seed):
    prof = RandomSegments(2e-6, 40, seed=seed)
    spec = WaveguideSpec(profile=prof, phase_model=model)
    ws, wi = _axis_points()
    got = phi_inhomogeneous(ws, wi, spec)
    for a, b in [(0, 0), (4, 4), (3, 6), (8, 8)]:
        dk = float(delta_k(ws[a, b], wi[a, b], spec.birefringence))
        beta = float(birefringence_sensitivity(ws[a, b], wi[a, b]))
        ref = _segment_sum_oracle(dk, beta, spec, prof.values, model == "accumulated")
        assert got[a, b] == pytest.approx(ref, abs=1e-9)


def test_random_segments_deterministic_and_truncated():
    a, b, c = RandomSegments(1e-6, 400, 5), RandomSegments(1e-6, 400, 5), RandomSegments(1e-6, 400, 6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert np.max(np.abs(RandomSegments(1.0, 20000, 1).values)) <= 4.0
    with pytest.raises(ValueError):
        a.values[0] = 1.0


def test_quadrature_error_when_refinement_capped():
    spec = WaveguideSpec(profile=LinearGradient(1e-5))
    ws, wi = _axis_points()
    with pytest.raises(QuadratureError):
        phi_inhomogeneous(ws, wi, spec, max_refine=1)


def test_profile_from_dict():
    assert profile_from_dict(None) == Uniform()
    assert profile_from_dict({"profile": "linear", "delta_dn": 2e-6}) == LinearGradient(2e-6)
    r = profile_from_dict({"profile": "random", "delta_dn": 1e-6, "segments": 10, "seed": 4})
    assert (r.segment_count, r.seed) == (10, 4)
    with pytest.raises(ValueError):
        profile_from_dict({"profile": "sawtooth"})


@pytest.mark.parametrize("kwargs", [{"length_cm": 0}, {"birefringence": -1e-4},
                                    {"phase_model": "quadratic"}])
def test_waveguide_validation(kwargs):
    with pytest.raises(ValueError):
        WaveguideSpec(**kwargs)


def test_dispatch():
    ws, wi = _axis_points()
    assert np.array_equal(phasematching(ws, wi, SPEC), phi_uniform(ws, wi, SPEC))
    with pytest.raises(TypeError):
        phi_inhomogeneous(ws, wi, SPEC)
