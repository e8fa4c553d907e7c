"""Alternating closed-form bias-field solver.

The objective, for foreground pixels r, s and clusters i, is

    E = sum_r sum_i sum_s w(r, s) u_i(s)^p (I(s) - b(r) c_i)^2

with ``w`` the masked row-normalized kernel. Each of ``u``, ``c`` and ``b``
has a closed-form minimizer when the other two are held fixed. Memberships
are ``(N, H, W)`` arrays, centers are 1D arrays kept in ascending order, and
bias fields are 2D arrays equal to 1 on the background.
"""

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from bfkit.errors import (
    DegenerateClusterError,
    DegenerateInputError,
    IllConditionedWarning,
    ParameterError,
)
from bfkit.config import rng_stream
from bfkit.imgio import as_image, as_mask
from bfkit.kernel import build_kernel, operator
from bfkit.masking import otsu_multilevel

log = logging.getLogger(__name__)

MEMBERSHIP_MODES = ("literal", "exact")
INIT_MODES = ("gradient", "flat")
TV_VARIANTS = ("squared_grad", "laplacian")


@dataclass
class SolverConfig:
    N: int = 4
    p: float = 2.0
    d: int = 17
    sigma: float = 4.0
    max_iters: int = 100
    tol: float = 1e-5
    tv_enabled: bool = True
    tv_variant: str = "squared_grad"
    tv_steps: int = 5
    tv_step_size: float = 0.1
    epsilon: float = 1e-10
    membership_mode: str = "literal"
    init: str = "gradient"
    edge_factor: float = 5.0
    jitter: bool = False
    seed: int = 0

    def __post_init__(self):
        bad = []
        if self.N < 2:
            bad.append(f"N={self.N} must be >= 2")
        if not self.p > 1:
            bad.append(f"p={self.p} must be > 1")
        if not self.tol > 0:
            bad.append(f"tol={self.tol} must be > 0")
        if not self.epsilon > 0:
            bad.append(f"epsilon={self.epsilon} must be > 0")
        if self.max_iters < 0:
            bad.append(f"max_iters={self.max_iters} must be >= 0")
        if self.tv_steps < 0:
            bad.append(f"tv_steps={self.tv_steps} must be >= 0")
        if self.membership_mode not in MEMBERSHIP_MODES:
            bad.append(f"membership_mode={self.membership_mode!r} not in {MEMBERSHIP_MODES}")
        if self.init not in INIT_MODES:
            bad.append(f"init={self.init!r} not in {INIT_MODES}")
        if not self.edge_factor > 0:
            bad.append(f"edge_factor={self.edge_factor} must be > 0")
        if self.tv_variant not in TV_VARIANTS:
            bad.append(f"tv_variant={self.tv_variant!r} not in {TV_VARIANTS}")
        if bad:
            raise ParameterError("; ".join(bad))

    def kernel(self):
        return build_kernel(self.d, self.sigma)

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    loss_tv: float
    lam: float
    dmax_b: float
    dmax_u: float


@dataclass
class EnergyReport:
    records: list = field(default_factory=list)
    stop_reason: str = ""
    initial_energy: float = float("nan")
    warnings: list = field(default_factory=list)

    @property
    def energies(self):
        return np.array([r.energy for r in self.records])

    def to_csv(self):
        lines = ["iter,E,loss_tv,lambda,dmax_b,dmax_u"]
        for r in self.records:
            lines.append(f"{r.iteration},{r.energy!r},{r.loss_tv!r},{r.lam!r},{r.dmax_b!r},{r.dmax_u!r}")
        return "\n".join(lines) + "\n"


@dataclass
class Correction:
    corrected: np.ndarray
    bias: np.ndarray
    u: np.ndarray
    c: np.ndarray
    report: EnergyReport


@dataclass
class Targets:
    u_target: np.ndarray
    b_target: np.ndarray
    c: np.ndarray
    order: np.ndarray   # u_pred[order] is aligned with u_target


def _check_u(u, shape):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 3 or u.shape[1:] != tuple(shape):
        raise ParameterError(f"membership shape {u.shape} does not match image shape {tuple(shape)}")
    return u


def _check_same(a, shape, what):
    a = np.asarray(a, dtype=np.float64)
    if a.shape != tuple(shape):
        raise ParameterError(f"{what} shape {a.shape} does not match image shape {tuple(shape)}")
    return a


def energy(I, mask, u, c, b, k, p):
    """Kernel-weighted fuzzy clustering energy with multiplicative bias."""
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    u = _check_u(u, I.shape)
    b = _check_same(b, I.shape, "bias")
    c = np.asarray(c, dtype=np.float64)
    if len(c) != len(u):
        raise ParameterError(f"{len(c)} centers for {len(u)} membership maps")
    op = operator(mask, k)
    # sum_r w(r,s) b(r)^k for k = 0, 1, 2
    a0 = op.column_sums()
    a1 = op.adjoint(b)
    a2 = op.adjoint(b * b)
    up = u[:, mask] ** p
    Im = I[mask]
    dist = (Im * Im * a0[mask] - 2.0 * c[:, None] * Im * a1[mask]
            + (c * c)[:, None] * a2[mask])
    return float(np.sum(up * dist))


def _centers(I, mask, u, b, op, p, epsilon):
    fb = op.adjoint(b)[mask]
    fb2 = op.adjoint(b * b)[mask]
    up = u[:, mask] ** p
    num = up @ (I[mask] * fb)
    den = up @ fb2
    for i, v in enumerate(den):
        if not v > epsilon:
            raise DegenerateClusterError(i)
    return num / den


def update_centers(I, mask, u, b, k, p, epsilon=1e-10):
    """Minimize the energy over the centers.

    Returns ``(c, u_sorted)``: centers in ascending order and ``u`` with its
    maps permuted to match.
    """
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    u = _check_u(u, I.shape)
    b = _check_same(b, I.shape, "bias")
    c = _centers(I, mask, u, b, operator(mask, k), p, epsilon)
    order = np.argsort(c, kind="stable")
    return c[order], u[order]


def _distances_literal(I, mask, c, b, op):
    kb = op(b)
    return (I[None] - c[:, None, None] * kb[None]) ** 2


def _distances_exact(I, mask, c, b, op):
    a0 = op.column_sums()
    a1 = op.adjoint(b)
    a2 = op.adjoint(b * b)
    cc = c[:, None, None]
    return I * I * a0 - 2.0 * cc * I * a1 + cc * cc * a2


def update_memberships(I, mask, c, b, k, p, epsilon=1e-10, mode="literal"):
    """Fuzzy memberships from the centers and the smoothed bias.

    ``mode="literal"`` uses the distance ``(I(r) - c_i (K*b)(r))^2``.
    ``mode="exact"`` uses ``sum_s w(s, r) (I(r) - b(s) c_i)^2``, the true
    minimizer of the energy over ``u``. Distances at or below ``epsilon``
    give a hard assignment to the nearest center.
    """
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    b = _check_same(b, I.shape, "bias")
    c = np.asarray(c, dtype=np.float64)
    if mode not in MEMBERSHIP_MODES:
        raise ParameterError(f"unknown membership mode {mode!r}")
    if len(c) > 1 and np.min(np.diff(np.sort(c))) <= epsilon:
        raise ParameterError(f"cluster centers are not distinct: {c.tolist()}")
    op = operator(mask, k)
    dist = (_distances_literal if mode == "literal" else _distances_exact)(I, mask, c, b, op)
    raw = dist[:, mask]
    dist = np.maximum(raw, epsilon)

    inv = dist ** (-1.0 / (p - 1.0))
    um = inv / inv.sum(axis=0)
    hard = raw.min(axis=0) <= epsilon
    if hard.any():
        nearest = raw[:, hard].argmin(axis=0)
        um[:, hard] = 0.0
        um[nearest, np.flatnonzero(hard)] = 1.0

    u = np.zeros((len(c),) + I.shape)
    u[:, mask] = um
    return u


def update_bias(I, mask, u, c, k, p, epsilon=1e-10):
    """Minimize the energy over the bias field; background is set to 1."""
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    u = _check_u(u, I.shape)
    c = np.asarray(c, dtype=np.float64)
    op = operator(mask, k)
    up = u ** p
    num = op(I * np.tensordot(c, up, axes=1))
    den = op(np.tensordot(c * c, up, axes=1))
    floored = mask & (den <= epsilon)
    n_fg = int(mask.sum())
    if n_fg and floored.sum() > 0.01 * n_fg:
        warnings.warn(
            f"bias denominator at floor on {int(floored.sum())} of {n_fg} foreground pixels",
            IllConditionedWarning, stacklevel=2)
    b = num / np.maximum(den, epsilon)
    return np.where(mask, b, 1.0)


def _tv_pairs(mask):
    """Foreground-only forward-difference stencils (rows, cols)."""
    return mask[1:, :] & mask[:-1, :], mask[:, 1:] & mask[:, :-1]


def tv_energy(b, mask, variant="squared_grad"):
    """Global smoothness penalty of the bias field over the foreground.

    ``squared_grad`` sums squared forward differences along both axes, using
    only stencils whose pixels are all foreground. ``laplacian`` sums the
    second differences themselves (linear in ``b``, unbounded below).
    """
    b = np.asarray(b, dtype=np.float64)
    mask = as_mask(mask, b.shape)
    if variant == "squared_grad":
        vr, vc = _tv_pairs(mask)
        dr = np.diff(b, axis=0)
        dc = np.diff(b, axis=1)
        return float(np.sum(dr[vr] ** 2) + np.sum(dc[vc] ** 2))
    if variant == "laplacian":
        total = 0.0
        for axis in (0, 1):
            m = np.moveaxis(mask, axis, 0)
            v = np.moveaxis(b, axis, 0)
            ok = m[2:] & m[1:-1] & m[:-2]
            total += float(np.sum((v[2:] - 2.0 * v[1:-1] + v[:-2])[ok]))
        return total
    raise ParameterError(f"unknown TV variant {variant!r}")


def tv_gradient(b, mask, variant="squared_grad"):
    b = np.asarray(b, dtype=np.float64)
    mask = as_mask(mask, b.shape)
    g = np.zeros_like(b)
    if variant == "squared_grad":
        vr, vc = _tv_pairs(mask)
        dr = np.where(vr, np.diff(b, axis=0), 0.0)
        dc = np.where(vc, np.diff(b, axis=1), 0.0)
        g[1:, :] += 2.0 * dr
        g[:-1, :] -= 2.0 * dr
        g[:, 1:] += 2.0 * dc
        g[:, :-1] -= 2.0 * dc
    elif variant == "laplacian":
        for axis in (0, 1):
            m = np.moveaxis(mask, axis, 0)
            gv = np.moveaxis(g, axis, 0)
            ok = (m[2:] & m[1:-1] & m[:-2]).astype(np.float64)
            gv[2:] += ok
            gv[1:-1] -= 2.0 * ok
            gv[:-2] += ok
    else:
        raise ParameterError(f"unknown TV variant {variant!r}")
    return np.where(mask, g, 0.0)


def tv_smooth_step(b, mask, lam, step, steps, epsilon=1e-10, variant="squared_grad"):
    """Explicit gradient descent on ``lam * tv_energy`` over the foreground.

    A step that would raise the TV energy is retried with half the step size,
    at most six times; if it still fails the step is skipped.
    """
    b = np.array(b, dtype=np.float64)
    mask = as_mask(mask, b.shape)
    if steps <= 0 or lam == 0:
        return b
    e = tv_energy(b, mask, variant)
    for _ in range(steps):
        g = lam * tv_gradient(b, mask, variant)
        h = step
        for _ in range(7):
            trial = np.where(mask, np.maximum(b - h * g, epsilon), b)
            e_trial = tv_energy(trial, mask, variant)
            if e_trial <= e:
                b, e = trial, e_trial
                break
            h *= 0.5
    return b


def normalize_bias(b, mask):
    """Scale ``b`` to unit foreground mean.

    Returns ``(b_scaled, scale)``; multiply the centers by ``scale`` to keep
    every product ``b(r) * c_i`` unchanged.
    """
    b = np.asarray(b, dtype=np.float64)
    mask = as_mask(mask, b.shape)
    if not mask.any():
        raise DegenerateInputError("mask is empty")
    scale = float(b[mask].mean())
    return np.where(mask, b / scale, 1.0), scale


def quantile_centers(I, mask, N, jitter=False, seed=0):
    """Centers at the (2k-1)/2N quantiles of the foreground intensities."""
    q = (2 * np.arange(1, N + 1) - 1) / (2.0 * N)
    c = np.quantile(I[mask], q)
    if jitter:
        c = c + rng_stream(seed, "solver.jitter").uniform(-1e-3, 1e-3, N)
    return np.sort(c)


def otsu_centers(I, mask, N, jitter=False, seed=0):
    """Class means of the multi-Otsu partition of the foreground histogram.

    Falls back to quantile centers if the histogram has fewer than ``N``
    occupied bins.
    """
    vals = I[mask]
    try:
        t = otsu_multilevel(vals[None, :], N - 1).thresholds
    except DegenerateInputError:
        return quantile_centers(I, mask, N, jitter, seed)
    cls = np.searchsorted(np.asarray(t), vals, side="left")
    c = np.array([vals[cls == k].mean() for k in range(N)])
    if jitter:
        c = c + rng_stream(seed, "solver.jitter").uniform(-1e-3, 1e-3, N)
    return np.sort(c)


def _neighbour_pairs(mask):
    """Flat foreground indices of every 4-neighbour foreground pair."""
    idx = np.full(mask.shape, -1)
    idx[mask] = np.arange(int(mask.sum()))
    a = np.concatenate([idx[1:, :][mask[1:, :] & mask[:-1, :]],
                        idx[:, 1:][mask[:, 1:] & mask[:, :-1]]])
    b = np.concatenate([idx[:-1, :][mask[1:, :] & mask[:-1, :]],
                        idx[:, :-1][mask[:, 1:] & mask[:, :-1]]])
    return a, b


def gradient_bias_init(I, mask, edge_factor=5.0):
    """Smooth bias estimate from the log-image gradient field.

    Forward differences of ``log I`` larger than ``edge_factor`` times their
    median magnitude are treated as tissue edges and replaced by zero; the
    remaining field is integrated by a least-squares Poisson solve. Returns a
    bias with unit foreground mean.
    """
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    n = int(mask.sum())
    vals = I[mask]
    if n == 0 or vals.max() <= 0:
        raise DegenerateInputError("empty or all-zero foreground")
    logv = np.log(np.maximum(vals, 1e-3 * vals.max()))
    a, b = _neighbour_pairs(mask)
    if len(a) == 0:
        return np.ones(I.shape)
    g = logv[a] - logv[b]
    tau = edge_factor * np.median(np.abs(g))
    g = np.where(np.abs(g) > tau, 0.0, g)
    m = len(a)
    D = sparse.csr_matrix(
        (np.r_[np.ones(m), -np.ones(m)], (np.r_[np.arange(m), np.arange(m)], np.r_[a, b])),
        shape=(m, n))
    # tiny ridge pins the free additive constant of each connected component
    A = (D.T @ D + 1e-8 * sparse.identity(n)).tocsc()
    x = spsolve(A, D.T @ g)
    out = np.ones(I.shape)
    out[mask] = np.exp(x - x.mean())
    return normalize_bias(out, mask)[0]


def initialize(I, mask, cfg, b_init=None, op=None):
    """Starting ``(u, c, b)`` for :func:`correct`."""
    if b_init is not None:
        b = normalize_bias(_check_same(b_init, I.shape, "initial bias"), mask)[0]
    elif cfg.init == "gradient":
        b = gradient_bias_init(I, mask, cfg.edge_factor)
    else:
        b = np.ones(I.shape)
    flat = I / b
    if cfg.init == "flat" and b_init is None:
        c = quantile_centers(flat, mask, cfg.N, cfg.jitter, cfg.seed)
    else:
        c = otsu_centers(flat, mask, cfg.N, cfg.jitter, cfg.seed)
    if len(c) > 1 and np.min(np.diff(c)) <= cfg.epsilon:
        c = quantile_centers(flat, mask, cfg.N, cfg.jitter, cfg.seed)
    op = operator(mask, op if op is not None else cfg.kernel())
    u = update_memberships(I, mask, c, b, op, cfg.p, cfg.epsilon, cfg.membership_mode)
    return u, c, b


def correct(I, mask, cfg=None, log_every=0, b_init=None):
    """Estimate the bias field of ``I`` and return the corrected image.

    ``I`` should already be normalized to a unit foreground maximum.
    """
    cfg = cfg or SolverConfig()
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    if not mask.any():
        raise DegenerateInputError("mask is empty")
    op = operator(mask, cfg.kernel())
    p, eps = cfg.p, cfg.epsilon

    u, c, b = initialize(I, mask, cfg, b_init, op)
    report = EnergyReport(initial_energy=energy(I, mask, u, c, b, op, p))
    e_prev = report.initial_energy

    report.stop_reason = "max_iters"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditionedWarning)
        for it in range(cfg.max_iters):
            try:
                u_new = update_memberships(I, mask, c, b, op, p, eps, cfg.membership_mode)
                c, u_new = update_centers(I, mask, u_new, b, op, p, eps)
            except DegenerateClusterError as err:
                raise DegenerateClusterError(err.cluster, it) from None
            b_new = update_bias(I, mask, u_new, c, op, p, eps)
            lam = 0.0
            if cfg.tv_enabled:
                # bias-change energy stands in for the reconstruction loss
                proxy = float(np.sum((b_new - b)[mask] ** 2))
                lam = adaptive_lambda(proxy, tv_energy(b_new, mask, cfg.tv_variant), eps)
                b_new = tv_smooth_step(b_new, mask, lam, cfg.tv_step_size, cfg.tv_steps,
                                       eps, cfg.tv_variant)
            b_new, scale = normalize_bias(b_new, mask)
            c = c * scale
            loss_tv = tv_energy(b_new, mask, cfg.tv_variant)

            e = energy(I, mask, u_new, c, b_new, op, p)
            if not math.isfinite(e):
                raise DegenerateInputError(f"non-finite energy at iteration {it}")
            rec = IterationRecord(it, e, loss_tv, lam,
                                  float(np.max(np.abs(b_new - b)[mask])),
                                  float(np.max(np.abs(u_new - u))))
            report.records.append(rec)
            u, b = u_new, b_new
            if log_every and it % log_every == 0:
                log.info("iter %d E=%.6g tv=%.4g lambda=%.4g dmax_b=%.3g dmax_u=%.3g",
                         it, e, loss_tv, lam, rec.dmax_b, rec.dmax_u)
            if abs(e_prev - e) < cfg.tol * max(abs(e_prev), np.finfo(float).tiny):
                report.stop_reason = "converged"
                break
            e_prev = e
    report.warnings = [str(w.message) for w in caught]

    corrected = np.where(mask, I / np.maximum(b, eps), I)
    return Correction(corrected, b, u, c, report)


def adaptive_lambda(loss_bias, loss_tv, epsilon=1e-10):
    """Ratio weighting bias fidelity against TV; 0 when both are 0."""
    if loss_bias == 0 and loss_tv == 0:
        return 0.0
    return loss_bias / max(loss_tv, epsilon)


def reconstruction_targets(I, mask, u_pred, b_pred, cfg=None):
    """Closed-form regression targets for a membership and a bias predictor."""
    cfg = cfg or SolverConfig()
    I = as_image(I)
    mask = as_mask(mask, I.shape)
    u_pred = _check_u(u_pred, I.shape)
    b_pred = _check_same(b_pred, I.shape, "bias")
    op = operator(mask, cfg.kernel())
    c = _centers(I, mask, u_pred, b_pred, op, cfg.p, cfg.epsilon)
    order = np.argsort(c, kind="stable")
    c = c[order]
    u_target = update_memberships(I, mask, c, b_pred, op, cfg.p, cfg.epsilon, cfg.membership_mode)
    b_target = update_bias(I, mask, u_pred[order], c, op, cfg.p, cfg.epsilon)
    return Targets(u_target, b_target, c, order)


def losses(u_pred, u_target, b_pred, b_target, mask, epsilon=1e-10, tv_variant="squared_grad"):
    """Reconstruction losses for the two predictors and the adaptive TV weight."""
    mask = as_mask(mask)
    u_pred = _check_u(u_pred, mask.shape)
    u_target = _check_u(u_target, mask.shape)
    b_pred = _check_same(b_pred, mask.shape, "bias")
    b_target = _check_same(b_target, mask.shape, "bias")
    loss_clus = float(np.sum((u_target - u_pred)[:, mask] ** 2))
    loss_bias = float(np.sum((b_target - b_pred)[mask] ** 2))
    loss_tv = tv_energy(b_pred, mask, tv_variant)
    lam = adaptive_lambda(loss_bias, loss_tv, epsilon)
    return {
        "loss_clus": loss_clus,
        "loss_bias": loss_bias,
        "loss_tv": loss_tv,
        "lambda": lam,
        "total_bias_loss": loss_bias + lam * loss_tv,
    }
