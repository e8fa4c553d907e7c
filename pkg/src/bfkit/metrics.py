"""Image-quality and statistical evaluation measures."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from bfkit.errors import DegenerateInputError, ParameterError
from bfkit.imgio import as_mask


@dataclass(frozen=True)
class MetricRecord:
    name: str
    value: float
    region: object = None
    pair: tuple = None


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ParameterError(f"shape mismatch {ref.shape} vs {test.shape}")
    return ref, test


def psnr(ref, test, peak=1.0, region=None):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    ref, test = _pair(ref, test)
    if not peak > 0:
        raise ParameterError("peak must be positive")
    diff = ref - test
    if region is not None:
        diff = diff[as_mask(region, ref.shape)]
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=11, sigma=1.5):
    off = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim_map(ref, test, k1=0.01, k2=0.03, window=11, window_sigma=1.5, peak=1.0):
    """SSIM at every position where the window fits inside the image."""
    ref, test = _pair(ref, test)
    if min(ref.shape) < window:
        raise ParameterError(f"image {ref.shape} smaller than the {window}x{window} window")
    g = gaussian_window(window, window_sigma)

    def local(f):
        return ndimage.correlate(f, g, mode="constant")

    h = window // 2
    crop = (slice(h, ref.shape[0] - (window - 1 - h)), slice(h, ref.shape[1] - (window - 1 - h)))
    mx, my = local(ref)[crop], local(test)[crop]
    sxx = local(ref * ref)[crop] - mx * mx
    syy = local(test * test)[crop] - my * my
    sxy = local(ref * test)[crop] - mx * my
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim(ref, test, k1=0.01, k2=0.03, window=11, window_sigma=1.5, peak=1.0, region=None):
    m = ssim_map(ref, test, k1, k2, window, window_sigma, peak)
    if region is None:
        return float(m.mean())
    h = window // 2
    reg = as_mask(region, np.shape(ref))
    reg = reg[h:h + m.shape[0], h:h + m.shape[1]]
    if not reg.any():
        raise DegenerateInputError("region has no valid SSIM window centers")
    return float(m[reg].mean())


def cv(img, region):
    """Coefficient of variation (population std / mean) over ``region``."""
    img = np.asarray(img, dtype=np.float64)
    region = as_mask(region, img.shape)
    vals = img[region]
    if vals.size == 0:
        raise DegenerateInputError("region is empty")
    mean = vals.mean()
    if mean <= 0:
        raise DegenerateInputError("region mean is not positive")
    return float(vals.std() / mean)


def dice(a, b):
    a = as_mask(a)
    b = as_mask(b, a.shape)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def intensity_match(test, ref, region=None):
    """Scale ``test`` by the least-squares gain onto ``ref`` over ``region``."""
    ref, test = _pair(ref, test)
    sel = slice(None) if region is None else as_mask(region, ref.shape)
    t, r = test[sel], ref[sel]
    tt = float(np.dot(t.ravel(), t.ravel()))
    if tt == 0:
        raise DegenerateInputError("test image is zero on the region")
    return test * (float(np.dot(t.ravel(), r.ravel())) / tt)


def _rank_average(a):
    """1-based ranks with ties given their average rank."""
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def signed_rank_null(doubled_ranks):
    """Counts of each doubled positive-rank sum over all 2^n sign patterns."""
    total = int(sum(doubled_ranks))
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        for s in range(total - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    return counts


EXACT_MAX_N = 12


def wilcoxon_signed_rank(x, y):
    """Two-sided Wilcoxon signed-rank test of paired samples.

    Zero differences are dropped and tied magnitudes get average ranks.
    Returns ``{"W": min(W+, W-), "p": p}``; the p-value is exact for up to 12
    non-zero differences and uses the tie- and continuity-corrected normal
    approximation beyond that.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be 1D sequences of equal length")
    d = y - x
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return {"W": 0.0, "p": 1.0}
    ranks = _rank_average(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    W = min(w_plus, w_minus)

    if n <= EXACT_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = signed_rank_null(doubled)
        t = int(round(2 * w_plus))
        lower = sum(counts[:t + 1])
        upper = sum(counts[t:])
        p = min(1.0, 2.0 * min(lower, upper) / 2 ** n)
        return {"W": W, "p": p}

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    if var <= 0:
        return {"W": W, "p": 1.0}
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return {"W": W, "p": min(1.0, math.erfc(z / math.sqrt(2.0)))}
