"""Hot inner loops of the histogram grower, in numba and numpy flavors.

Each public wrapper routes to an ``@njit`` loop kernel or a vectorized
numpy implementation (``use_numba=None`` follows the FLOODPIX_NUMBA
policy). Accumulation order matches between the two, so results are
bit-identical: histogram sums accumulate in ascending row order (numpy via
``np.bincount``), and cumulative bin scans mirror ``np.cumsum``.
"""

from __future__ import annotations

import numpy as np

from ..accel import jit_kernel, resolve_use_numba


def _histograms_loop(codes, rows, grad, hess, n_bins_max):
    d = codes.shape[0]
    hist_g = np.zeros((d, n_bins_max), dtype=np.float64)
    hist_h = np.zeros((d, n_bins_max), dtype=np.float64)
    hist_c = np.zeros((d, n_bins_max), dtype=np.int64)
    for f in range(d):
        for i in range(rows.shape[0]):
            idx = rows[i]
            b = codes[f, idx]
            hist_g[f, b] += grad[idx]
            hist_h[f, b] += hess[idx]
            hist_c[f, b] += 1
    return hist_g, hist_h, hist_c


_histograms_jit = jit_kernel(_histograms_loop)


def _histograms_numpy(codes, rows, grad, hess, n_bins_max):
    d = codes.shape[0]
    hist_g = np.zeros((d, n_bins_max), dtype=np.float64)
    hist_h = np.zeros((d, n_bins_max), dtype=np.float64)
    hist_c = np.zeros((d, n_bins_max), dtype=np.int64)
    g_rows = grad[rows]
    h_rows = hess[rows]
    for f in range(d):
        binned = codes[f, rows]
        hist_g[f] = np.bincount(binned, weights=g_rows, minlength=n_bins_max)
        hist_h[f] = np.bincount(binned, weights=h_rows, minlength=n_bins_max)
        hist_c[f] = np.bincount(binned, minlength=n_bins_max)
    return hist_g, hist_h, hist_c


def build_histograms(codes, rows, grad, hess, n_bins_max, use_numba=None):
    """Per-feature per-bin gradient/hessian/count sums over ``rows``."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if resolve_use_numba(use_numba):
        return _histograms_jit(codes, rows, grad, hess, n_bins_max)
    return _histograms_numpy(codes, rows, grad, hess, n_bins_max)


def _split_scan_loop(hist_g, hist_h, hist_c, n_bins, lam):
    d = hist_g.shape[0]
    best_gain = 0.0
    best_feature = -1
    best_bin = -1
    for f in range(d):
        nb = n_bins[f]
        if nb < 2:
            continue
        total_g = 0.0
        total_h = 0.0
        total_c = 0
        for b in range(nb):
            total_g += hist_g[f, b]
            total_h += hist_h[f, b]
            total_c += hist_c[f, b]
        den_t = total_h + lam
        if den_t == 0.0:  # every hessian underflowed and lam == 0
            continue
        parent = total_g * total_g / den_t
        gl = 0.0
        hl = 0.0
        cl = 0
        for b in range(nb - 1):
            gl += hist_g[f, b]
            hl += hist_h[f, b]
            cl += hist_c[f, b]
            if cl == 0 or cl == total_c:
                continue
            gr = total_g - gl
            hr = total_h - hl
            den_l = hl + lam
            den_r = hr + lam
            if den_l == 0.0 or den_r == 0.0:
                continue
            gain = 0.5 * (gl * gl / den_l + gr * gr / den_r - parent)
            if gain > best_gain:
                best_gain = gain
                best_feature = f
                best_bin = b
    return best_feature, best_bin, best_gain


_split_scan_jit = jit_kernel(_split_scan_loop)


def _split_scan_numpy(hist_g, hist_h, hist_c, n_bins, lam):
    d, n_bins_max = hist_g.shape
    gains = np.full((d, max(n_bins_max - 1, 1)), -np.inf)
    for f in range(d):
        nb = int(n_bins[f])
        if nb < 2:
            continue
        gl = np.cumsum(hist_g[f, :nb])
        hl = np.cumsum(hist_h[f, :nb])
        cl = np.cumsum(hist_c[f, :nb])
        total_g, total_h, total_c = gl[-1], hl[-1], cl[-1]
        den_t = total_h + lam
        if den_t == 0.0:  # mirrors the loop kernel's skipped feature
            continue
        parent = total_g * total_g / den_t
        gl, hl, cl = gl[:-1], hl[:-1], cl[:-1]
        gr = total_g - gl
        hr = total_h - hl
        den_l = hl + lam
        den_r = hr + lam
        valid = (cl > 0) & (cl < total_c) & (den_l != 0.0) & (den_r != 0.0)
        gain = 0.5 * (
            gl * gl / np.where(den_l != 0.0, den_l, 1.0)
            + gr * gr / np.where(den_r != 0.0, den_r, 1.0)
            - parent
        )
        gains[f, : nb - 1] = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gains))
    best_feature, best_bin = divmod(flat, gains.shape[1])
    best_gain = gains[best_feature, best_bin]
    if not best_gain > 0.0:
        return -1, -1, 0.0
    return int(best_feature), int(best_bin), float(best_gain)


def scan_best_split(hist_g, hist_h, hist_c, n_bins, lam, use_numba=None):
    """Highest-gain (feature, bin) over all candidates; ties go to the
    lowest feature id then lowest bin. Returns (-1, -1, 0.0) when no
    candidate has positive gain."""
    if resolve_use_numba(use_numba):
        return _split_scan_jit(hist_g, hist_h, hist_c, n_bins, lam)
    return _split_scan_numpy(hist_g, hist_h, hist_c, n_bins, lam)


def _traverse_codes_loop(codes, feature, bin_threshold, left, right, leaf_value, is_leaf, out):
    n = codes.shape[1]
    for i in range(n):
        node = 0
        while not is_leaf[node]:
            if codes[feature[node], i] <= bin_threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_value[node]
    return out


_traverse_codes_jit = jit_kernel(_traverse_codes_loop)


def _traverse_codes_numpy(codes, feature, bin_threshold, left, right, leaf_value, is_leaf, out):
    n = codes.shape[1]
    node = np.zeros(n, dtype=np.int32)
    active = ~is_leaf[node]
    idx = np.arange(n)
    while active.any():
        cur = node[active]
        rows = idx[active]
        go_left = codes[feature[cur], rows] <= bin_threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = ~is_leaf[node]
    out[:] = leaf_value[node]
    return out


def _traverse_raw_loop(values, feature, raw_threshold, left, right, leaf_value, is_leaf, out):
    n = values.shape[0]
    for i in range(n):
        node = 0
        while not is_leaf[node]:
            if values[i, feature[node]] < raw_threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_value[node]
    return out


_traverse_raw_jit = jit_kernel(_traverse_raw_loop)


def _traverse_raw_numpy(values, feature, raw_threshold, left, right, leaf_value, is_leaf, out):
    n = values.shape[0]
    node = np.zeros(n, dtype=np.int32)
    active = ~is_leaf[node]
    idx = np.arange(n)
    while active.any():
        cur = node[active]
        rows = idx[active]
        go_left = values[rows, feature[cur]] < raw_threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = ~is_leaf[node]
    out[:] = leaf_value[node]
    return out


def tree_outputs_codes(tree, codes, use_numba=None):
    """Leaf value per row, routing on pre-binned codes."""
    out = np.empty(codes.shape[1], dtype=np.float64)
    args = (codes, tree.feature, tree.bin_threshold, tree.left, tree.right, tree.leaf_value, tree.is_leaf, out)
    if resolve_use_numba(use_numba):
        return _traverse_codes_jit(*args)
    return _traverse_codes_numpy(*args)


def tree_outputs_raw(tree, values, use_numba=None):
    """Leaf value per row, routing on raw float features."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.empty(values.shape[0], dtype=np.float64)
    args = (values, tree.feature, tree.raw_threshold, tree.left, tree.right, tree.leaf_value, tree.is_leaf, out)
    if resolve_use_numba(use_numba):
        return _traverse_raw_jit(*args)
    return _traverse_raw_numpy(*args)
