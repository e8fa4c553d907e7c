"""Slow reference computations used as independent test oracles."""

import itertools
import math

import numpy as np


def naive_weights(mask, d, sigma):
    """Dense row-normalized masked Gaussian weights w[r, s] on flat indices."""
    H, W = mask.shape
    h = d // 2
    w = np.zeros((H * W, H * W))
    for r0, r1 in itertools.product(range(H), range(W)):
        if not mask[r0, r1]:
            continue
        for s0, s1 in itertools.product(range(H), range(W)):
            dy, dx = s0 - r0, s1 - r1
            if mask[s0, s1] and abs(dy) <= h and abs(dx) <= h:
                w[r0 * W + r1, s0 * W + s1] = math.exp(-(dy * dy + dx * dx) / (2 * sigma * sigma))
        w[r0 * W + r1] /= w[r0 * W + r1].sum()
    return w


def naive_energy(I, mask, u, c, b, w, p):
    I, b = I.ravel(), b.ravel()
    fg = np.flatnonzero(mask.ravel())
    total = 0.0
    for r in fg:
        for i in range(len(c)):
            for s in fg:
                if w[r, s]:
                    total += w[r, s] * u[i].ravel()[s] ** p * (I[s] - b[r] * c[i]) ** 2
    return total


def naive_centers(I, mask, u, b, w, p):
    I, b = I.ravel(), b.ravel()
    fg = np.flatnonzero(mask.ravel())
    out = []
    for i in range(len(u)):
        ui = u[i].ravel()
        num = den = 0.0
        for r in fg:
            for s in fg:
                num += w[r, s] * b[r] * I[s] * ui[s] ** p
                den += w[r, s] * b[r] ** 2 * ui[s] ** p
        out.append(num / den)
    return np.array(out)


def naive_bias(I, mask, u, c, w, p):
    I = I.ravel()
    out = np.ones(I.size)
    for r in np.flatnonzero(mask.ravel()):
        num = den = 0.0
        for i in range(len(c)):
            ui = u[i].ravel()
            for s in np.flatnonzero(w[r]):
                num += w[r, s] * c[i] * I[s] * ui[s] ** p
                den += w[r, s] * c[i] ** 2 * ui[s] ** p
        out[r] = num / den
    return out.reshape(mask.shape)


def naive_memberships_literal(I, mask, c, b, w, p):
    I, b = I.ravel(), b.ravel()
    u = np.zeros((len(c), I.size))
    for r in np.flatnonzero(mask.ravel()):
        kb = sum(w[r, s] * b[s] for s in range(I.size))
        dist = [(I[r] - ci * kb) ** 2 for ci in c]
        for i in range(len(c)):
            u[i, r] = 1.0 / sum((dist[i] / dist[j]) ** (1.0 / (p - 1)) for j in range(len(c)))
    return u.reshape((len(c),) + mask.shape)


def naive_tv(b, mask):
    H, W = b.shape
    total = 0.0
    for y in range(H):
        for x in range(W):
            if x + 1 < W and mask[y, x] and mask[y, x + 1]:
                total += (b[y, x + 1] - b[y, x]) ** 2
            if y + 1 < H and mask[y, x] and mask[y + 1, x]:
                total += (b[y + 1, x] - b[y, x]) ** 2
    return total


def naive_psnr(ref, test, peak):
    n = ref.size
    mse = sum((float(a) - float(b)) ** 2 for a, b in zip(ref.ravel(), test.ravel())) / n
    return 10 * math.log10(peak * peak / mse)


def naive_ssim(x, y, k1=0.01, k2=0.03, win=11, sig=1.5, peak=1.0):
    off = [i - (win - 1) / 2 for i in range(win)]
    g = [[math.exp(-(a * a + b * b) / (2 * sig * sig)) for b in off] for a in off]
    tot = sum(map(sum, g))
    g = [[v / tot for v in row] for row in g]
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    vals = []
    for i in range(x.shape[0] - win + 1):
        for j in range(x.shape[1] - win + 1):
            mx = my = 0.0
            for a in range(win):
                for b in range(win):
                    mx += g[a][b] * x[i + a, j + b]
                    my += g[a][b] * y[i + a, j + b]
            vx = vy = cxy = 0.0
            for a in range(win):
                for b in range(win):
                    dx, dy = x[i + a, j + b] - mx, y[i + a, j + b] - my
                    vx += g[a][b] * dx * dx
                    vy += g[a][b] * dy * dy
                    cxy += g[a][b] * dx * dy
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def sign_flip_pvalue(x, y):
    """Two-sided exact signed-rank p by enumerating all 2^n sign patterns."""
    d = [b - a for a, b in zip(x, y) if b != a]
    n = len(d)
    mags = sorted(abs(v) for v in d)

    def rank(v):
        first = mags.index(v)
        last = n - 1 - mags[::-1].index(v)
        return (first + last) / 2 + 1

    ranks = [rank(abs(v)) for v in d]
    obs = sum(r for r, v in zip(ranks, d) if v > 0)
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=n):
        t = sum(r for r, s in zip(ranks, signs) if s)
        le += t <= obs + 1e-9
        ge += t >= obs - 1e-9
    return min(1.0, 2 * min(le, ge) / 2 ** n)
