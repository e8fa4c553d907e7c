"""Masked, per-pixel renormalized Gaussian window.

For foreground pixels ``r`` and ``s`` the weight is

    w(r, s) = g(r - s) / Z(r),   Z(r) = sum over foreground s of g(r - s)

with ``g`` a truncated Gaussian on a ``d x d`` square window. ``w`` is zero
whenever either pixel is background. Each row ``w(r, .)`` sums to one; the
columns do not, which is why :class:`MaskedFilter` exposes both the forward
sum over ``s`` and the transposed sum over ``r``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from bfkit.errors import ParameterError
from bfkit.imgio import as_mask


@dataclass(frozen=True)
class KernelSpec:
    d: int
    sigma: float
    weights: np.ndarray = field(repr=False, compare=False)

    @property
    def radius(self):
        return self.d // 2


def build_kernel(d=17, sigma=4.0):
    if int(d) != d or d < 3 or d % 2 == 0:
        raise ParameterError(f"kernel size d={d} must be an odd integer >= 3")
    if not sigma > 0:
        raise ParameterError(f"sigma={sigma} must be positive")
    if d > 4 * sigma + 1:
        raise ParameterError(f"kernel size d={d} exceeds 4*sigma+1={4 * sigma + 1}")
    d = int(d)
    off = np.arange(d) - d // 2
    sq = off[:, None] ** 2 + off[None, :] ** 2
    weights = np.exp(-sq / (2.0 * sigma * sigma))
    weights.setflags(write=False)
    return KernelSpec(d, float(sigma), weights)


class MaskedFilter:
    """Row-stochastic masked kernel operator bound to one mask."""

    def __init__(self, mask, kernel):
        self.mask = as_mask(mask)
        self.kernel = kernel
        self._fg = self.mask.astype(np.float64)
        z = self._window_sum(self._fg)
        # every foreground pixel sees itself with weight g(0) = 1
        self.norm = np.where(self.mask, z, 1.0)
        self._colsum = None

    @property
    def shape(self):
        return self.mask.shape

    def _window_sum(self, f):
        return ndimage.correlate(f, self.kernel.weights, mode="constant", cval=0.0)

    def _check(self, f):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != self.mask.shape:
            raise ParameterError(f"field shape {f.shape} does not match mask shape {self.mask.shape}")
        return f

    def __call__(self, f):
        """``sum_s w(r, s) f(s)``; zero on background."""
        f = self._check(f)
        out = self._window_sum(np.where(self.mask, f, 0.0)) / self.norm
        return np.where(self.mask, out, 0.0)

    def adjoint(self, f):
        """``sum_r w(r, s) f(r)``; zero on background."""
        f = self._check(f)
        out = self._window_sum(np.where(self.mask, f / self.norm, 0.0))
        return np.where(self.mask, out, 0.0)

    def row_sums(self):
        return self(np.ones(self.shape))

    def column_sums(self):
        if self._colsum is None:
            self._colsum = self.adjoint(np.ones(self.shape))
            self._colsum.setflags(write=False)
        return self._colsum


def operator(mask, k):
    """Accept either a :class:`KernelSpec` or a prebuilt :class:`MaskedFilter`."""
    if isinstance(k, MaskedFilter):
        if mask is not None and as_mask(mask).shape != k.shape:
            raise ParameterError("mask shape does not match the operator")
        return k
    return MaskedFilter(mask, k)


def masked_filter(field, mask, k):
    mask = as_mask(mask)
    field = np.asarray(field, dtype=np.float64)
    if field.shape != mask.shape:
        raise ParameterError(f"field shape {field.shape} does not match mask shape {mask.shape}")
    return operator(mask, k)(field)
