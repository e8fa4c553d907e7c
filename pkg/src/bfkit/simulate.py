"""Synthetic ground truth: Legendre bias fields, phantoms, corruption."""

from dataclasses import dataclass

import numpy as np

from bfkit.config import rng_stream
from bfkit.errors import ParameterError
from bfkit.imgio import as_image

GEOMETRIES = ("nested-ellipses", "voronoi-blobs")


@dataclass
class LegendreSpec:
    order: int = 3
    coeffs: np.ndarray = None
    range: tuple = (0.3, 1.7)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.range
        if not 0 < lo < hi:
            raise ParameterError(f"bias range {self.range} must satisfy 0 < lo < hi")
        if self.order < 0:
            raise ParameterError("order must be >= 0")
        if self.coeffs is not None:
            self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
            if self.coeffs.shape != (self.order + 1, self.order + 1):
                raise ParameterError(
                    f"coeffs shape {self.coeffs.shape} != {(self.order + 1, self.order + 1)}")

    def coefficients(self):
        if self.coeffs is not None:
            return self.coeffs
        rng = rng_stream(self.seed, "simulate.bias")
        return rng.uniform(-1.0, 1.0, (self.order + 1, self.order + 1))


@dataclass
class PhantomSpec:
    width: int = 128
    height: int = 128
    levels: tuple = (0.25, 0.5, 0.75, 1.0)
    geometry: str = "nested-ellipses"
    seed: int = 0

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        if lv.ndim != 1 or len(lv) == 0:
            raise ParameterError("levels must be a non-empty list")
        if np.any(np.diff(lv) <= 0) or lv[0] <= 0 or lv[-1] > 1:
            raise ParameterError(f"levels {self.levels} must be strictly ascending in (0, 1]")
        if self.geometry not in GEOMETRIES:
            raise ParameterError(f"geometry {self.geometry!r} not in {GEOMETRIES}")

    @property
    def n_classes(self):
        return len(self.levels)


def legendre_table(t, order):
    """Rows ``P_0(t) .. P_order(t)`` by the three-term recurrence."""
    t = np.asarray(t, dtype=np.float64)
    P = np.empty((order + 1,) + t.shape)
    P[0] = 1.0
    if order >= 1:
        P[1] = t
    for k in range(1, order):
        P[k + 1] = ((2 * k + 1) * t * P[k] - k * P[k - 1]) / (k + 1)
    return P


def grid_coords(n):
    if n == 1:
        return np.zeros(1)
    return 2.0 * np.arange(n) / (n - 1) - 1.0


def legendre_bias(w, h, spec=None):
    """Smooth positive bias ``sum_mn a_mn P_m(x) P_n(y)`` rescaled to ``spec.range``.

    ``x`` follows columns and ``y`` rows, both mapped onto ``[-1, 1]``. The
    raw polynomial is min-max rescaled; a constant polynomial maps to the
    midpoint of the range.
    """
    spec = spec or LegendreSpec()
    a = spec.coefficients()
    px = legendre_table(grid_coords(w), spec.order)   # (order+1, w)
    py = legendre_table(grid_coords(h), spec.order)   # (order+1, h)
    raw = np.einsum("mn,mc,nr->rc", a, px, py)
    lo, hi = spec.range
    rmin, rmax = raw.min(), raw.max()
    if rmax - rmin <= 1e-12 * max(1.0, np.abs(raw).max()):
        return np.full((h, w), 0.5 * (lo + hi))
    t = (raw - rmin) / (rmax - rmin)
    return lo * (1.0 - t) + hi * t


def _ellipse(rows, cols, cy, cx, ay, ax, theta):
    y = rows - cy
    x = cols - cx
    ct, st = np.cos(theta), np.sin(theta)
    xr = ct * x + st * y
    yr = -st * x + ct * y
    return (xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0


def _nested_ellipses(spec, rng, rows, cols):
    h, w = spec.height, spec.width
    n = spec.n_classes
    cls = np.zeros((h, w), dtype=int)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ay, ax = 0.42 * h, 0.40 * w
    for k in range(n):
        s = 1.0 - k / (n + 0.5)
        jy, jx = rng.uniform(-0.04, 0.04, 2) * (h, w) * (k > 0)
        theta = rng.uniform(-0.3, 0.3) * (k > 0)
        inside = _ellipse(rows, cols, cy + jy, cx + jx, s * ay, s * ax, theta)
        cls[inside] = k + 1
    return cls


def _voronoi_blobs(spec, rng, rows, cols):
    h, w = spec.height, spec.width
    n = spec.n_classes
    fg = _ellipse(rows, cols, (h - 1) / 2.0, (w - 1) / 2.0, 0.42 * h, 0.40 * w, 0.0)
    sites = np.column_stack([rng.uniform(0.1, 0.9, 3 * n) * h, rng.uniform(0.1, 0.9, 3 * n) * w])
    site_cls = rng.permutation(np.arange(3 * n) % n) + 1
    d2 = (rows[None] - sites[:, 0, None, None]) ** 2 + (cols[None] - sites[:, 1, None, None]) ** 2
    cls = site_cls[np.argmin(d2, axis=0)]
    return np.where(fg, cls, 0)


def phantom(spec=None):
    """Piecewise-constant phantom.

    Returns ``(clean, labels)`` where ``labels`` is a boolean stack of
    ``n_classes + 1`` masks, index 0 being the zero-intensity background.
    """
    spec = spec or PhantomSpec()
    rng = rng_stream(spec.seed, "simulate.phantom")
    rows, cols = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    build = _nested_ellipses if spec.geometry == "nested-ellipses" else _voronoi_blobs
    cls = build(spec, rng, rows, cols)
    labels = np.stack([cls == k for k in range(spec.n_classes + 1)])
    empty = [k for k in range(spec.n_classes + 1) if not labels[k].any()]
    if empty:
        raise ParameterError(f"phantom geometry left classes {empty} empty")
    lv = np.concatenate([[0.0], np.asarray(spec.levels, dtype=np.float64)])
    return lv[cls], labels


def corrupt(clean, bias, noise_sigma=0.0, seed=0):
    """``clean * bias`` plus seeded Gaussian noise, clamped at zero."""
    clean = as_image(clean)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != clean.shape:
        raise ParameterError(f"bias shape {bias.shape} does not match image shape {clean.shape}")
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    out = clean * bias
    if noise_sigma > 0:
        out = out + rng_stream(seed, "simulate.noise").normal(0.0, noise_sigma, out.shape)
    return np.maximum(out, 0.0)
