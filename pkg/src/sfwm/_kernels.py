"""Compiled inner loops."""
import numpy as np
from numba import njit


@njit(cache=True)
def segment_sum(dk0, beta, z_mid, width, g_mid, g_slope, length):
    """(1/L) sum_j h_j exp(i(dk0 z_j + beta g_j)) sinc((dk0 + beta g'_j) h_j / 2).

    ``dk0`` and ``beta`` are flat arrays over evaluation points; the remaining
    arrays describe the longitudinal sub-intervals.  Each sub-interval is
    integrated exactly for a phase that is linear across it.
    """
    n_pts = dk0.shape[0]
    n_seg = z_mid.shape[0]
    out = np.empty(n_pts, np.complex128)
    for p in range(n_pts):
        d = dk0[p]
        b = beta[p]
        re = 0.0
        im = 0.0
        for j in range(n_seg):
            x = 0.5 * (d + b * g_slope[j]) * width[j]
            if abs(x) > 1e-6:
                s = np.sin(x) / x
            else:
                s = 1.0 - x * x / 6.0
            a = d * z_mid[j] + b * g_mid[j]
            w = width[j] * s
            re += w * np.cos(a)
            im += w * np.sin(a)
        out[p] = complex(re, im) / length
    return out
