"""Multi-threshold Otsu foreground extraction."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from bfkit.errors import DegenerateInputError, ParameterError
from bfkit.imgio import as_image


@dataclass(frozen=True)
class ThresholdSet:
    thresholds: tuple   # ascending intensities
    bins: tuple         # histogram index of the last bin in each lower class

    @property
    def M(self):
        return len(self.thresholds)


def otsu_histogram(counts, M):
    """Best ``M`` class boundaries for an integer histogram.

    Returns the bin index ending each of the first ``M`` classes. Classes are
    contiguous, non-empty runs of bins; the partition maximizes between-class
    variance, evaluated exactly in rational arithmetic so that ties resolve to
    the lexicographically smallest boundary tuple.
    """
    counts = np.asarray(counts)
    if M < 1:
        raise ParameterError("M must be >= 1")
    if counts.ndim != 1 or len(counts) < M + 1:
        raise ParameterError(f"need at least {M + 1} bins, got {counts.size}")
    occ = np.flatnonzero(counts > 0)
    n = len(occ)
    if n < M + 1:
        raise DegenerateInputError(
            f"{n} occupied histogram bins cannot form {M + 1} non-empty classes")

    # Between-class variance is affine-invariant in the bin values, so bin
    # indices stand in for bin centers and every class sum stays an integer.
    W = [0]
    S = [0]
    for k in occ:
        W.append(W[-1] + int(counts[k]))
        S.append(S[-1] + int(counts[k]) * int(k))

    def cost(a, b):
        w = W[b + 1] - W[a]
        s = S[b + 1] - S[a]
        return Fraction(s * s, w)

    # best[m][a]: optimum splitting occupied bins a..n-1 into m classes
    best = [None, [cost(a, n - 1) for a in range(n)]]
    for m in range(2, M + 2):
        row = [None] * n
        for a in range(n - m + 1):
            row[a] = max(cost(a, b) + best[m - 1][b + 1] for b in range(a, n - m + 1))
        best.append(row)

    ends = []
    a = 0
    for m in range(M + 1, 1, -1):
        target = best[m][a]
        for b in range(a, n - m + 1):
            if cost(a, b) + best[m - 1][b + 1] == target:
                break
        ends.append(int(occ[b]))
        a = b + 1
    return tuple(ends)


def otsu_multilevel(img, M=3, bins=256):
    """Multi-level Otsu thresholds of ``img``.

    The histogram uses ``bins`` uniform bins over ``[min, max]``; each
    threshold is the upper edge of the last bin in its class.
    """
    img = as_image(img)
    if bins < M + 1:
        raise ParameterError(f"bins={bins} must be at least M+1={M + 1}")
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        raise DegenerateInputError("image is constant")
    counts, edges = np.histogram(img, bins=bins, range=(lo, hi))
    ends = otsu_histogram(counts, M)
    return ThresholdSet(tuple(float(edges[k + 1]) for k in ends), ends)


def foreground_mask(img, M=3, bins=256):
    """``I > min(thresholds)`` with strict inequality."""
    img = as_image(img)
    t = otsu_multilevel(img, M, bins)
    return img > min(t.thresholds)
