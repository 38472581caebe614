"""Pump envelope, joint spectral amplitude on a frequency grid, and heralding filters."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import io
from .dispersion import C_NM_PER_PS, omega_to_wavelength, wavelength_to_omega
from .phasematch import WaveguideSpec, delta_k, phasematching

#: Required ratio of grid span to the JSI marginal FWHM on each axis.
COVERAGE_FACTOR = 6.0
MIN_POINTS = 64
#: Stride of the convergence probe used for inhomogeneous phasematching.
PROBE_STRIDE = 61


class GridCoverageError(ValueError):
    pass


class ZeroTransmissionError(ValueError):
    pass


def bandwidth_to_omega(center_nm: float, width_nm: float) -> float:
    """Wavelength width to angular-frequency width at ``center_nm``."""
    return 2 * np.pi * C_NM_PER_PS * width_nm / center_nm**2


def omega_to_bandwidth(center_nm: float, width_omega: float) -> float:
    return width_omega * center_nm**2 / (2 * np.pi * C_NM_PER_PS)


@dataclass(frozen=True)
class PumpSpec:
    """Transform-limited Gaussian pump; ``bandwidth_nm`` is the FWHM of |alpha|^2."""

    wavelength_nm: float = 729.0
    bandwidth_nm: float = 3.1
    mean_pairs: float = 0.01

    def __post_init__(self):
        if self.bandwidth_nm <= 0:
            raise ValueError("pump bandwidth must be positive")
        if self.mean_pairs <= 0:
            raise ValueError("mean pairs per pulse must be positive")

    @property
    def omega(self) -> float:
        return float(wavelength_to_omega(self.wavelength_nm))

    @property
    def fwhm_omega(self) -> float:
        return bandwidth_to_omega(self.wavelength_nm, self.bandwidth_nm)

    @property
    def sigma(self) -> float:
        # |alpha|^2 = exp(-(w - wp)^2 / sigma^2)
        return self.fwhm_omega / (2 * np.sqrt(np.log(2)))


def pump_envelope(omega, pump: PumpSpec):
    """alpha(w) = exp(-(w - w_p)^2 / (2 sigma^2)), peak 1."""
    d = np.asarray(omega, dtype=float) - pump.omega
    return np.exp(-d**2 / (2 * pump.sigma**2))


def pump_autoconvolution(total_omega, pump: PumpSpec,
                         envelope: Callable | None = None, half_window: float | None = None):
    """A(W) = integral alpha(w') alpha(W - w') dw'.

    The Gaussian envelope has the closed form sigma sqrt(pi) exp(-(W - 2 w_p)^2 / (4 sigma^2)).
    Passing ``envelope`` (a callable of angular frequency) switches to adaptive
    quadrature over ``W/2 +- half_window`` (default 20 sigma).
    """
    W = np.asarray(total_omega, dtype=float)
    s = pump.sigma
    if envelope is None:
        return s * np.sqrt(np.pi) * np.exp(-(W - 2 * pump.omega)**2 / (4 * s**2))
    hw = 20 * s if half_window is None else half_window

    def one(w):
        def part(fn):
            val, err = quad(lambda x: fn(envelope(x) * envelope(w - x)),
                            w / 2 - hw, w / 2 + hw, points=[pump.omega, w - pump.omega],
                            epsabs=0.0, epsrel=1e-12, limit=400)
            return val
        return complex(part(np.real), part(np.imag))

    out = np.array([one(w) for w in W.ravel()], dtype=complex)
    return out.reshape(W.shape)


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform angular-frequency samples spanning ``center +- span/2`` in wavelength."""

    signal_center_nm: float
    signal_span_nm: float
    idler_center_nm: float
    idler_span_nm: float
    signal_points: int = 512
    idler_points: int = 512

    def __post_init__(self):
        if min(self.signal_points, self.idler_points) < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} points per axis")
        for c, s in ((self.signal_center_nm, self.signal_span_nm),
                     (self.idler_center_nm, self.idler_span_nm)):
            if not 0 < s < 2 * c:
                raise ValueError(f"bad span {s} nm around {c} nm")

    @classmethod
    def around(cls, signal_nm: float, idler_nm: float, signal_span_nm: float = 20.0,
               idler_span_nm: float = 28.0, points: int = 512) -> "SpectralGrid":
        return cls(signal_nm, signal_span_nm, idler_nm, idler_span_nm, points, points)

    @staticmethod
    def _axis(center, span, points):
        return np.linspace(wavelength_to_omega(center + span / 2),
                           wavelength_to_omega(center - span / 2), points)

    @property
    def omega_s(self) -> np.ndarray:
        return self._axis(self.signal_center_nm, self.signal_span_nm, self.signal_points)

    @property
    def omega_i(self) -> np.ndarray:
        return self._axis(self.idler_center_nm, self.idler_span_nm, self.idler_points)

    @property
    def lambda_s(self) -> np.ndarray:
        return omega_to_wavelength(self.omega_s)

    @property
    def lambda_i(self) -> np.ndarray:
        return omega_to_wavelength(self.omega_i)

    @property
    def d_omega_s(self) -> float:
        w = self.omega_s
        return float(w[1] - w[0])

    @property
    def d_omega_i(self) -> float:
        w = self.omega_i
        return float(w[1] - w[0])

    def mesh(self):
        return np.meshgrid(self.omega_s, self.omega_i, indexing="ij")

    def widened(self, signal_factor: float, idler_factor: float) -> "SpectralGrid":
        """Grid with spans scaled and point counts raised to keep the step."""
        def grow(center, span, points, factor):
            if factor <= 1:
                return span, points
            new_span = span * factor
            old = wavelength_to_omega(center - span / 2) - wavelength_to_omega(center + span / 2)
            new = wavelength_to_omega(center - new_span / 2) - wavelength_to_omega(center + new_span / 2)
            return new_span, int(np.ceil((points - 1) * new / old)) + 1
        ss, sp = grow(self.signal_center_nm, self.signal_span_nm, self.signal_points, signal_factor)
        si, ip = grow(self.idler_center_nm, self.idler_span_nm, self.idler_points, idler_factor)
        return SpectralGrid(self.signal_center_nm, ss, self.idler_center_nm, si, sp, ip)

    def to_dict(self) -> dict:
        return {
            "signal": {"center_nm": self.signal_center_nm, "span_nm": self.signal_span_nm,
                       "points": self.signal_points},
            "idler": {"center_nm": self.idler_center_nm, "span_nm": self.idler_span_nm,
                      "points": self.idler_points},
            "units": {"center": "nm", "span": "nm", "omega": "rad/ps"},
            "d_omega_s": self.d_omega_s,
            "d_omega_i": self.d_omega_i,
        }


@dataclass(frozen=True)
class JointSpectralAmplitude:
    """Complex amplitude indexed [signal, idler], with sum |f|^2 dws dwi = 1."""

    grid: SpectralGrid
    amplitude: np.ndarray

    @classmethod
    def normalized(cls, grid: SpectralGrid, amplitude) -> "JointSpectralAmplitude":
        amp = np.asarray(amplitude, dtype=complex)
        norm = np.sum(np.abs(amp)**2) * grid.d_omega_s * grid.d_omega_i
        if not norm > 0:
            raise ValueError("joint spectral amplitude is identically zero")
        return cls(grid, amp / np.sqrt(norm))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude)**2

    def norm(self) -> float:
        return float(np.sum(self.intensity) * self.grid.d_omega_s * self.grid.d_omega_i)

    def export(self, path, intensity: bool = False):
        """CSV matrix (rows: signal wavelength, columns: idler wavelength) + JSON sidecar."""
        data = self.intensity if intensity else self.amplitude
        meta = {"quantity": "joint spectral intensity" if intensity else "joint spectral amplitude",
                "normalization": "sum |f|^2 d_omega_s d_omega_i = 1",
                "grid": self.grid.to_dict()}
        return io.write_matrix_csv(path, data, self.grid.lambda_s, self.grid.lambda_i,
                                   "lambda_s_nm", "lambda_i_nm", meta)


def _fwhm(axis, profile):
    """FWHM of a sampled peak, or None when the half maximum is not inside the axis."""
    y = profile / profile.max()
    above = np.nonzero(y >= 0.5)[0]
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == len(y) - 1:
        return None

    def cross(i0, i1):
        return axis[i0] + (0.5 - y[i0]) * (axis[i1] - axis[i0]) / (y[i1] - y[i0])
    return abs(cross(hi, hi + 1) - cross(lo - 1, lo))


def coverage(jsa: JointSpectralAmplitude, factor: float = COVERAGE_FACTOR) -> dict:
    """Compare each axis span with ``factor`` times the JSI marginal FWHM.

    A marginal whose half maximum falls outside the grid counts as uncovered
    and asks for twice the current span.
    """
    g = jsa.grid
    I = jsa.intensity
    out = {"ok": True, "factor": factor}
    for name, axis, marg, center, span in (
            ("signal", g.omega_s, I.sum(axis=1), g.signal_center_nm, g.signal_span_nm),
            ("idler", g.omega_i, I.sum(axis=0), g.idler_center_nm, g.idler_span_nm)):
        width = _fwhm(axis, marg)
        have = axis[-1] - axis[0]
        need = 2 * have if width is None else factor * width
        out[name] = {
            "fwhm_omega": width,
            "span_omega": have,
            "required_span_omega": need,
            "required_span_nm": omega_to_bandwidth(center, need),
            "ratio": need / have,
        }
        if need > have * (1 + 1e-12):
            out["ok"] = False
    return out


def build_jsa(grid: SpectralGrid, pump: PumpSpec, spec: WaveguideSpec,
              check_coverage: bool = True) -> JointSpectralAmplitude:
    """f(ws, wi) = A(ws + wi) phi(ws, wi), L2-normalized on the grid.

    Raises GridCoverageError naming the required spans when the grid is too
    narrow for the resulting JSI.
    """
    WS, WI = grid.mesh()
    amp = pump_autoconvolution(WS + WI, pump) * phasematching(WS, WI, spec, probe_stride=PROBE_STRIDE)
    jsa = JointSpectralAmplitude.normalized(grid, amp)
    if check_coverage:
        rep = coverage(jsa)
        if not rep["ok"]:
            raise GridCoverageError(
                "grid does not cover the joint spectrum: need signal span >= "
                f"{rep['signal']['required_span_nm']:.3f} nm (have {grid.signal_span_nm} nm) "
                f"and idler span >= {rep['idler']['required_span_nm']:.3f} nm "
                f"(have {grid.idler_span_nm} nm)")
    return jsa


def build_jsa_covered(grid: SpectralGrid, pump: PumpSpec, spec: WaveguideSpec,
                      max_rounds: int = 4):
    """build_jsa, widening the grid at fixed step until the coverage rule holds."""
    for _ in range(max_rounds):
        jsa = build_jsa(grid, pump, spec, check_coverage=False)
        rep = coverage(jsa)
        if rep["ok"]:
            return jsa
        grid = grid.widened(rep["signal"]["ratio"] * 1.02, rep["idler"]["ratio"] * 1.02)
    return build_jsa(grid, pump, spec)


@dataclass(frozen=True)
class SpectralFilter:
    """Heralding-arm filter.  ``shape`` is "tophat" (full width) or "gaussian" (intensity FWHM)."""

    target: str = "signal"
    shape: str = "tophat"
    center_nm: float = 676.0
    width_nm: float = 4.5

    def __post_init__(self):
        if self.target not in ("signal", "idler"):
            raise ValueError("filter target must be 'signal' or 'idler'")
        if self.shape not in ("tophat", "gaussian"):
            raise ValueError("filter shape must be 'tophat' or 'gaussian'")
        if self.width_nm <= 0:
            raise ValueError("filter width must be positive")

    def amplitude_transmission(self, wavelength_nm):
        lam = np.asarray(wavelength_nm, dtype=float)
        if self.shape == "tophat":
            return (np.abs(lam - self.center_nm) <= self.width_nm / 2).astype(float)
        # amplitude is the square root of the Gaussian intensity transmission
        return np.exp(-2 * np.log(2) * (lam - self.center_nm)**2 / self.width_nm**2)

    def to_dict(self) -> dict:
        return {"target": self.target, "shape": self.shape,
                "center_nm": self.center_nm, "width_nm": self.width_nm}


def apply_filter(jsa: JointSpectralAmplitude, filt: SpectralFilter):
    """Returns (renormalized filtered JSA, fraction of pairs transmitted)."""
    g = jsa.grid
    if filt.target == "signal":
        t = filt.amplitude_transmission(g.lambda_s)[:, None]
    else:
        t = filt.amplitude_transmission(g.lambda_i)[None, :]
    filtered = jsa.amplitude * t
    total = np.sum(jsa.intensity)
    passed = np.sum(np.abs(filtered)**2)
    if not passed > 0:
        raise ZeroTransmissionError(f"filter {filt.to_dict()} transmits nothing on this grid")
    return JointSpectralAmplitude.normalized(g, filtered), float(passed / total)


def marginal_spectrum(jsa: JointSpectralAmplitude, which: str = "signal"):
    """(wavelength_nm, weights): |f|^2 summed over the other axis, weights sum to one."""
    if which == "signal":
        lam, m = jsa.grid.lambda_s, jsa.intensity.sum(axis=1)
    elif which == "idler":
        lam, m = jsa.grid.lambda_i, jsa.intensity.sum(axis=0)
    else:
        raise ValueError("which must be 'signal' or 'idler'")
    return lam, m / m.sum()


def central_lobe_correlation(jsa: JointSpectralAmplitude, spec: WaveguideSpec) -> float:
    """Correlation coefficient between ws and wi under the JSI, restricted to the
    main phasematching lobe |dk L / 2| < pi.  Zero means axis-aligned."""
    WS, WI = jsa.grid.mesh()
    x = 0.5 * delta_k(WS, WI, spec.birefringence, spec.material) * spec.length_um
    w = jsa.intensity * (np.abs(x) < np.pi)
    w = w / w.sum()
    ms, mi = np.sum(w * WS), np.sum(w * WI)
    cov = np.sum(w * (WS - ms) * (WI - mi))
    var_s = np.sum(w * (WS - ms)**2)
    var_i = np.sum(w * (WI - mi)**2)
    return float(cov / np.sqrt(var_s * var_i))


def half_max_contour(grid: SpectralGrid, field) -> np.ndarray:
    """Points (lambda_s, lambda_i) where ``field`` / max crosses 0.5, scanning each signal row."""
    f = np.asarray(field, dtype=float)
    f = f / f.max()
    lam_s, lam_i = grid.lambda_s, grid.lambda_i
    pts = []
    for j in range(f.shape[0]):
        row = f[j] - 0.5
        idx = np.nonzero(np.sign(row[:-1]) * np.sign(row[1:]) < 0)[0]
        for k in idx:
            t = row[k] / (row[k] - row[k + 1])
            pts.append((lam_s[j], lam_i[k] + t * (lam_i[k + 1] - lam_i[k])))
    return np.array(pts).reshape(-1, 2)


def fwhm_tracks(grid: SpectralGrid, pump: PumpSpec, spec: WaveguideSpec) -> dict:
    """Half-maximum contours of the pump factor |A|^2 and of |phi|^2 alone."""
    WS, WI = grid.mesh()
    pump_i = np.abs(pump_autoconvolution(WS + WI, pump))**2
    pm_i = np.abs(phasematching(WS, WI, spec, probe_stride=PROBE_STRIDE))**2
    return {"pump_envelope": half_max_contour(grid, pump_i),
            "phasematching": half_max_contour(grid, pm_i)}
