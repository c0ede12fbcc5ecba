"""Independent reference implementations used to verify the library.

Everything here is written as plain scalar loops, directly from the defining
formulas, and shares no code with the package: the implementation under test
and these oracles can only agree by computing the same mathematics.
"""

import math

import numpy as np


def conv2d_reference(x, weights, bias):
    """Triple-loop 3x3 correlation with zero padding 1, stride 1."""
    n, c_in, h, w = x.shape
    c_out = weights.shape[0]
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for y in range(h):
                for xx in range(w):
                    acc = float(bias[o])
                    for c in range(c_in):
                        for dy in range(3):
                            for dx in range(3):
                                sy = y + dy - 1
                                sx = xx + dx - 1
                                if 0 <= sy < h and 0 <= sx < w:
                                    acc += float(weights[o, c, dy, dx]) * float(x[b, c, sy, sx])
                    out[b, o, y, xx] = acc
    return out


def _cubic(t):
    a = abs(t)
    if a <= 1.0:
        return 1.5 * a**3 - 2.5 * a**2 + 1.0
    if a <= 2.0:
        return -0.5 * a**3 + 2.5 * a**2 - 4.0 * a + 2.0
    return 0.0


def _axis_taps(in_len, out_len, k):
    """Tap positions/weights for output pixel k (0-based) along one axis."""
    scale = out_len / in_len
    if scale < 1.0:
        support = 4.0 / scale
        kern = lambda t: scale * _cubic(scale * t)
    else:
        support = 4.0
        kern = _cubic
    u = (k + 1) / scale + 0.5 * (1.0 - 1.0 / scale)
    left = math.floor(u - support / 2.0)
    taps = []
    for j in range(int(math.ceil(support)) + 2):
        pos = left + j
        taps.append((min(max(pos, 1), in_len) - 1, kern(u - pos)))
    total = sum(wt for _, wt in taps)
    return [(idx, wt / total) for idx, wt in taps]


def bicubic_reference(img, out_h, out_w):
    """Direct per-pixel kernel summation (Keys a=-0.5, antialiased downscale)."""
    in_h, in_w = img.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        row_taps = _axis_taps(in_h, out_h, oy)
        for ox in range(out_w):
            col_taps = _axis_taps(in_w, out_w, ox)
            acc = 0.0
            for iy, wy in row_taps:
                for ix, wx in col_taps:
                    acc += wy * wx * float(img[iy, ix])
            out[oy, ox] = min(max(acc, 0.0), 1.0)
    return out


def quantize_reference(v):
    v = min(max(float(v), 0.0), 1.0)
    return math.floor(v * 255.0 + 0.5)


def psnr_reference(a, b):
    """Double-loop MSE on 8-bit quantized values."""
    h, w = a.shape
    total = 0.0
    for y in range(h):
        for x in range(w):
            d = quantize_reference(a[y, x]) - quantize_reference(b[y, x])
            total += d * d
    mse = total / (h * w)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def ssim_reference(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Brute-force sliding-window SSIM on 8-bit quantized values.

    Uses the centered definition of the weighted (co)variances, a different
    computation path from the E[xy] - mu_x*mu_y form.
    """
    h, w = a.shape
    qa = np.array([[quantize_reference(v) for v in row] for row in a], dtype=np.float64)
    qb = np.array([[quantize_reference(v) for v in row] for row in b], dtype=np.float64)

    half = (window - 1) / 2.0
    win = np.zeros((window, window))
    for i in range(window):
        for j in range(window):
            win[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2.0 * sigma**2))
    win /= win.sum()

    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    scores = []
    for y in range(h - window + 1):
        for x in range(w - window + 1):
            pa = qa[y : y + window, x : x + window]
            pb = qb[y : y + window, x : x + window]
            mu_a = float((win * pa).sum())
            mu_b = float((win * pb).sum())
            var_a = float((win * (pa - mu_a) ** 2).sum())
            var_b = float((win * (pb - mu_b) ** 2).sum())
            cov = float((win * (pa - mu_a) * (pb - mu_b)).sum())
            scores.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(scores))
