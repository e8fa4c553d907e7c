"""End-to-end runs: simulate, mask, correct, score."""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from bfkit import metrics
from bfkit.errors import ParameterError
from bfkit.imgio import normalize
from bfkit.masking import foreground_mask
from bfkit.simulate import LegendreSpec, PhantomSpec, corrupt, legendre_bias, phantom
from bfkit.solver import SolverConfig, correct

BENCH_METRICS = ("psnr", "ssim", "cv")


@dataclass
class Case:
    clean: np.ndarray
    labels: np.ndarray
    bias: np.ndarray
    corrupted: np.ndarray


def simulate_case(size=64, seed=0, order=3, bias_range=(0.3, 1.7), noise=0.0, n_classes=4,
                  geometry="nested-ellipses"):
    levels = tuple((k + 1) / n_classes for k in range(n_classes))
    clean, labels = phantom(PhantomSpec(size, size, levels, geometry, seed))
    bias = legendre_bias(size, size, LegendreSpec(order=order, range=bias_range, seed=seed))
    return Case(clean, labels, bias, corrupt(clean, bias, noise, seed))


def score(clean, labels, img, region):
    """PSNR/SSIM after a least-squares gain onto ``clean`` and mean tissue CV."""
    matched = metrics.intensity_match(img, clean, region)
    cvs = [metrics.cv(img, labels[k] & region) for k in range(1, len(labels))
           if (labels[k] & region).any()]
    return {"psnr": metrics.psnr(clean, matched), "ssim": metrics.ssim(clean, matched),
            "cv": float(np.mean(cvs)), "cv_per_class": cvs}


def bench_one(seed, size=64, noise=0.0, cfg=None, mask_levels=3, mask_bins=256):
    cfg = replace(cfg or SolverConfig(), seed=seed)
    case = simulate_case(size, seed, noise=noise)
    mask = foreground_mask(case.corrupted, mask_levels, mask_bins)
    res = correct(normalize(case.corrupted, mask), mask, cfg)
    before = score(case.clean, case.labels, case.corrupted, mask)
    after = score(case.clean, case.labels, res.corrected, mask)
    row = {"seed": seed}
    for m in BENCH_METRICS:
        row[m + "_corrupted"] = before[m]
        row[m + "_corrected"] = after[m]
    row["bias_corr"] = float(np.corrcoef(res.bias[mask], case.bias[mask])[0, 1])
    row["iters"] = len(res.report.records)
    return row


def worker_count():
    env = os.environ.get("BFKIT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"BFKIT_THREADS={env!r} is not an integer") from None
        if n < 1:
            raise ParameterError("BFKIT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def bench(seeds, size=64, noise=0.0, cfg=None, mask_levels=3, mask_bins=256):
    """Per-seed rows (ordered by seed) followed by mean, std and Wilcoxon p rows."""
    seeds = sorted(seeds)
    with ThreadPoolExecutor(max_workers=min(worker_count(), max(len(seeds), 1))) as pool:
        rows = list(pool.map(lambda s: bench_one(s, size, noise, cfg, mask_levels, mask_bins), seeds))
    cols = [k for k in rows[0] if k != "seed"]
    mean = {"seed": "mean"}
    std = {"seed": "std"}
    pval = {"seed": "wilcoxon_p"}
    for k in cols:
        vals = np.array([r[k] for r in rows], dtype=np.float64)
        mean[k] = float(vals.mean())
        std[k] = float(vals.std())
        pval[k] = ""
    for m in BENCH_METRICS:
        p = metrics.wilcoxon_signed_rank([r[m + "_corrupted"] for r in rows],
                                         [r[m + "_corrected"] for r in rows])["p"]
        pval[m + "_corrected"] = p
    return rows + [mean, std, pval]


def sweep_clusters(image, mask, clean, labels, cfg=None, n_range=range(2, 9)):
    """Correct ``image`` for each cluster count and score against ``clean``."""
    n_range = list(n_range)
    if not n_range or min(n_range) < 2 or max(n_range) > 8:
        raise ParameterError(f"cluster counts {n_range} must lie within [2, 8]")
    cfg = cfg or SolverConfig()
    img = normalize(image, mask)
    rows = []
    for n in n_range:
        res = correct(img, mask, replace(cfg, N=n))
        s = score(clean, labels, res.corrected, mask)
        row = {"N": n, "psnr": s["psnr"], "ssim": s["ssim"]}
        for k, v in enumerate(s["cv_per_class"], 1):
            row[f"cv_{k}"] = v
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def to_csv(rows):
    """CSV text with LF line endings and shortest round-trip floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([_fmt(r[k]) for k in rows[0]])
    return buf.getvalue()
