"""Sigma-range speckle filtering for SAR backscatter grids.

The filter re-centers the sigma range on an a-priori mean estimated over a
small target window (rather than on the raw center pixel), selects main
window pixels falling inside that range and replaces the center with their
average; when nothing falls inside the range the a-priori mean is used.
``sigma_range`` is the fraction of a Gaussian noise distribution the range
should cover (0.9 spans roughly +/-1.645 local standard deviations).
Constant inputs are exact fixed points. Borders use edge replication.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .accel import jit_kernel, resolve_use_numba


def _lee_sigma_loop(padded, height, width, win, twin, zfac):
    r = win // 2
    rt = twin // 2
    nt = float(twin * twin)
    out = np.empty((height, width), dtype=np.float64)
    for i in range(height):
        for j in range(width):
            ci = i + r
            cj = j + r
            s = 0.0
            s2 = 0.0
            for di in range(-rt, rt + 1):
                for dj in range(-rt, rt + 1):
                    v = padded[ci + di, cj + dj]
                    s += v
                    s2 += v * v
            m0 = s / nt
            var0 = s2 / nt - m0 * m0
            if var0 < 0.0:
                var0 = 0.0
            band = zfac * np.sqrt(var0)
            lo = m0 - band
            hi = m0 + band
            ssel = 0.0
            csel = 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    v = padded[ci + di, cj + dj]
                    if lo <= v <= hi:
                        ssel += v
                        csel += 1
            out[i, j] = ssel / csel if csel > 0 else m0
    return out


_lee_sigma_jit = jit_kernel(_lee_sigma_loop)


def _lee_sigma_numpy(padded, height, width, win, twin, zfac):
    # Mirrors the loop kernel offset-by-offset so accumulation order (and
    # therefore float64 rounding) is identical.
    r = win // 2
    rt = twin // 2
    nt = float(twin * twin)

    def shifted(di, dj):
        return padded[r + di : r + di + height, r + dj : r + dj + width]

    s = np.zeros((height, width), dtype=np.float64)
    s2 = np.zeros((height, width), dtype=np.float64)
    for di in range(-rt, rt + 1):
        for dj in range(-rt, rt + 1):
            v = shifted(di, dj)
            s += v
            s2 += v * v
    m0 = s / nt
    var0 = np.maximum(s2 / nt - m0 * m0, 0.0)
    band = zfac * np.sqrt(var0)
    lo = m0 - band
    hi = m0 + band
    ssel = np.zeros((height, width), dtype=np.float64)
    csel = np.zeros((height, width), dtype=np.int64)
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            v = shifted(di, dj)
            inside = (lo <= v) & (v <= hi)
            ssel += np.where(inside, v, 0.0)
            csel += inside
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(csel > 0, ssel / np.maximum(csel, 1), m0)
    return out


def lee_sigma_filter(
    band: np.ndarray,
    window: int = 7,
    sigma_range: float = 0.9,
    target_window: int = 3,
    use_numba: bool | None = None,
) -> np.ndarray:
    """Speckle-suppress one grid; returns a float32 grid of the same shape."""
    if window % 2 == 0 or target_window % 2 == 0:
        raise ValueError("window sizes must be odd")
    if not (window >= target_window >= 1):
        raise ValueError("need window >= target_window >= 1")
    if not 0.0 < sigma_range < 1.0:
        raise ValueError("sigma_range must be a fraction in (0, 1)")
    grid = np.asarray(band, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("band must be a 2-D grid")
    zfac = float(ndtri(0.5 * (1.0 + sigma_range)))
    height, width = grid.shape
    padded = np.pad(grid, window // 2, mode="edge")
    if resolve_use_numba(use_numba):
        out = _lee_sigma_jit(padded, height, width, window, target_window, zfac)
    else:
        out = _lee_sigma_numpy(padded, height, width, window, target_window, zfac)
    return out.astype(np.float32)
