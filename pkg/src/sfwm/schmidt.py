"""Schmidt decomposition of a joint spectral amplitude and the statistics it predicts.

Convention: coefficients satisfy sum c_m^2 = 1, purity P = sum c_m^4,
Schmidt number K = 1/P and the unheralded autocorrelation is 1 + P.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io
from .jsa import JointSpectralAmplitude, SpectralGrid

#: Modes with c_m / c_1 below this are dropped.
TRUNCATION = 1e-6


class SchmidtError(ValueError):
    pass


class EstimatorDomainError(ValueError):
    pass


@dataclass(frozen=True)
class SchmidtResult:
    coefficients: np.ndarray
    signal_modes: np.ndarray  # (modes, signal points), unit L2 norm in d_omega_s
    idler_modes: np.ndarray   # (modes, idler points)
    grid: SpectralGrid

    @property
    def purity(self) -> float:
        return float(np.sum(self.coefficients**4))

    @property
    def schmidt_number(self) -> float:
        return 1.0 / self.purity

    @property
    def retained_mode_count(self) -> int:
        return int(self.coefficients.size)

    def reconstruct(self) -> np.ndarray:
        """sum_m c_m xi_m(ws) psi_m(wi), i.e. the normalized amplitude on the grid."""
        return np.einsum("m,ms,mi->si", self.coefficients, self.signal_modes, self.idler_modes)

    def summary(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "purity": self.purity,
            "schmidt_number": self.schmidt_number,
            "retained_mode_count": self.retained_mode_count,
            "g2_ss_predicted": predicted_autocorrelation(self),
        }

    def export(self, json_path, modes_csv_path=None, max_modes: int = 5):
        io.write_json(json_path, self.summary())
        if modes_csv_path is not None:
            n = min(max_modes, self.retained_mode_count)
            header = ["axis", "wavelength_nm"]
            for m in range(n):
                header += [f"re_mode{m + 1}", f"im_mode{m + 1}"]
            rows = []
            for axis, lam, modes in (("signal", self.grid.lambda_s, self.signal_modes),
                                     ("idler", self.grid.lambda_i, self.idler_modes)):
                for k, l in enumerate(lam):
                    row = [axis, l]
                    for m in range(n):
                        row += [modes[m, k].real, modes[m, k].imag]
                    rows.append(row)
            io.write_csv(modes_csv_path, header, rows)


def _weighted(jsa: JointSpectralAmplitude) -> np.ndarray:
    g = jsa.grid
    return jsa.amplitude * np.sqrt(g.d_omega_s * g.d_omega_i)


def schmidt_coefficients(jsa: JointSpectralAmplitude, truncation: float = TRUNCATION) -> np.ndarray:
    """Normalized, truncated Schmidt coefficients without the mode functions."""
    s = np.linalg.svd(_weighted(jsa), compute_uv=False)
    return _normalize(s, truncation)


def _normalize(s, truncation):
    if s.size == 0 or not s[0] > 0:
        raise SchmidtError("cannot decompose an all-zero joint spectral amplitude")
    s = s[s >= truncation * s[0]]
    return s / np.sqrt(np.sum(s**2))


def decompose(jsa: JointSpectralAmplitude, truncation: float = TRUNCATION) -> SchmidtResult:
    """SVD of the quadrature-weighted amplitude.

    Mode phases are fixed so each signal mode's largest-magnitude sample is
    real and positive; the idler mode absorbs the conjugate phase.
    """
    g = jsa.grid
    u, s, vh = np.linalg.svd(_weighted(jsa), full_matrices=False)
    c = _normalize(s, truncation)
    n = c.size
    xi = u[:, :n].T / np.sqrt(g.d_omega_s)
    psi = vh[:n, :] / np.sqrt(g.d_omega_i)
    peak = xi[np.arange(n), np.argmax(np.abs(xi), axis=1)]
    phase = peak / np.abs(peak)
    xi = xi * np.conj(phase)[:, None]
    psi = psi * phase[:, None]
    return SchmidtResult(c, xi, psi, g)


def purity(jsa: JointSpectralAmplitude) -> float:
    return float(np.sum(schmidt_coefficients(jsa)**4))


def predicted_autocorrelation(result) -> float:
    """Unheralded g2 of either arm, 1 + P.  Accepts a SchmidtResult or a purity."""
    p = result.purity if isinstance(result, SchmidtResult) else float(result)
    return 1.0 + p


def purity_from_g2(g2_ss: float) -> float:
    if not 1.0 <= g2_ss <= 2.0:
        raise EstimatorDomainError(
            f"g2_ss = {g2_ss} outside [1, 2]; statistical noise or background dominates")
    return g2_ss - 1.0


def cauchy_schwarz_violation(g2_si: float, g2_ss: float, g2_ii: float,
                             standard_errors=(0.0, 0.0, 0.0)):
    """(violated, margin): V = g2_si^2 - g2_ss g2_ii over its first-order error.

    ``standard_errors`` are ordered like the arguments.  The margin is inf
    when every error is zero and V > 0, and 0 when V = 0.
    """
    if min(g2_si, g2_ss, g2_ii) < 0:
        raise ValueError("correlation functions must be non-negative")
    e_si, e_ss, e_ii = standard_errors
    v = g2_si**2 - g2_ss * g2_ii
    sigma = np.sqrt((2 * g2_si * e_si)**2 + (g2_ii * e_ss)**2 + (g2_ss * e_ii)**2)
    if sigma == 0:
        margin = 0.0 if v == 0 else np.copysign(np.inf, v)
    else:
        margin = v / sigma
    return bool(v > 0), float(margin)
