"""Saliency evaluation metrics with exact, oracle-friendly definitions.

AUC variants use the exact Mann-Whitney statistic (midranks give ties
half credit), so no threshold grid is involved.  NSS and CC standardize
with the population convention.  SIM and KL normalize each map to a
distribution first.

All functions take plain float arrays and integer fixations; nothing
here touches the autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.stats import rankdata

from .errors import DataFormatError

KL_EPS = 2.2204e-16
SAUC_RESAMPLES = 10


def _as_map(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DataFormatError(f"saliency map must be 2-D, got shape {arr.shape}")
    return arr


def _as_fixations(fix, shape) -> np.ndarray:
    pts = np.asarray(fix, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[1] != 2 or not len(pts):
        raise DataFormatError("fixations must be a nonempty [n, 2] array of (x, y)")
    h, w = shape
    if (pts[:, 0].min() < 0 or pts[:, 0].max() >= w
            or pts[:, 1].min() < 0 or pts[:, 1].max() >= h):
        raise DataFormatError(f"fixation outside {w}x{h} map")
    return pts


def _fixated_flat(pts: np.ndarray, width: int) -> np.ndarray:
    """Deduplicated flat pixel indices of the fixated locations."""
    return np.unique(pts[:, 1] * width + pts[:, 0])


def nss(saliency, fix) -> float:
    """Mean standardized saliency at the fixated pixels (with multiplicity)."""
    smap = _as_map(saliency)
    pts = _as_fixations(fix, smap.shape)
    std = smap.std()
    if std == 0.0:
        return 0.0
    z = (smap - smap.mean()) / std
    return float(z[pts[:, 1], pts[:, 0]].mean())


def _mann_whitney_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """Exact probability a random positive outranks a random negative,
    ties counted half, via midranks."""
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def auc_judd(saliency, fix) -> float:
    """AUC with fixated pixels as positives and every other pixel negative."""
    smap = _as_map(saliency)
    pts = _as_fixations(fix, smap.shape)
    flat = smap.ravel()
    pos_idx = _fixated_flat(pts, smap.shape[1])
    if len(pos_idx) == flat.size:
        raise DataFormatError("every pixel is fixated; no negatives remain")
    neg_mask = np.ones(flat.size, dtype=bool)
    neg_mask[pos_idx] = False
    return _mann_whitney_auc(flat[pos_idx], flat[neg_mask])


def sauc(saliency, fix, other_fix, seed: int) -> float:
    """Shuffled AUC: negatives drawn from other images' fixation pixels.

    The pool is the union of the other sets' pixels minus this image's
    fixated pixels; each of the 10 seeded resamples draws min(|fix|, pool)
    negatives without replacement and the resulting AUCs are averaged.
    """
    smap = _as_map(saliency)
    pts = _as_fixations(fix, smap.shape)
    w = smap.shape[1]
    pos_idx = _fixated_flat(pts, w)
    pool: set[int] = set()
    for other in other_fix:
        opts = _as_fixations(other, smap.shape)
        pool.update((opts[:, 1] * w + opts[:, 0]).tolist())
    pool.difference_update(pos_idx.tolist())
    if not pool:
        raise DataFormatError("shuffled-AUC negative pool is empty after exclusion")
    pool_idx = np.array(sorted(pool), dtype=np.int64)
    flat = smap.ravel()
    pos = flat[pos_idx]
    draw = min(len(pos_idx), len(pool_idx))
    rng = np.random.default_rng(seed)
    scores = [
        _mann_whitney_auc(pos, flat[rng.choice(pool_idx, size=draw, replace=False)])
        for _ in range(SAUC_RESAMPLES)
    ]
    return float(np.mean(scores))


def cc(map_a, map_b) -> float:
    """Pearson correlation over pixels; constant inputs give 0 by convention."""
    a = _as_map(map_a)
    b = _as_map(map_b)
    if a.shape != b.shape:
        raise DataFormatError(f"map shapes differ: {a.shape} vs {b.shape}")
    a0 = a - a.mean()
    b0 = b - b.mean()
    denom = np.sqrt((a0 * a0).mean() * (b0 * b0).mean())
    if denom == 0.0:
        return 0.0
    return float((a0 * b0).mean() / denom)


def _distribution(m: np.ndarray, name: str) -> np.ndarray:
    if m.min() < 0.0:
        raise DataFormatError(f"{name} map has negative entries")
    s = m.sum()
    if s <= 0.0:
        raise DataFormatError(f"{name} map sums to zero")
    return m / s


def sim(map_a, map_b) -> float:
    """Histogram intersection of the two maps normalized to distributions."""
    a = _distribution(_as_map(map_a), "first")
    b = _distribution(_as_map(map_b), "second")
    if a.shape != b.shape:
        raise DataFormatError(f"map shapes differ: {a.shape} vs {b.shape}")
    return float(np.minimum(a, b).sum())


def kl(pred, gt) -> float:
    """Ground-truth-weighted divergence with the standard benchmark epsilon."""
    p = _distribution(_as_map(pred), "predicted")
    g = _distribution(_as_map(gt), "ground-truth")
    if p.shape != g.shape:
        raise DataFormatError(f"map shapes differ: {p.shape} vs {g.shape}")
    return float((g * np.log(g / (p + KL_EPS) + KL_EPS)).sum())


@dataclass
class MetricReport:
    """One evaluation row; column order follows the reporting convention."""

    cc: float
    auc: float
    nss: float
    sauc: float
    kl: float
    sim: float

    COLUMNS = ("cc", "auc", "nss", "sauc", "kl", "sim")

    def row(self) -> list[float]:
        return [self.cc, self.auc, self.nss, self.sauc, self.kl, self.sim]

    @staticmethod
    def mean(reports: list["MetricReport"]) -> "MetricReport":
        stacked = np.array([r.row() for r in reports])
        return MetricReport(*stacked.mean(axis=0))


def evaluate_map(pred, density, fix, other_fix, seed: int) -> MetricReport:
    """All six metrics for one prediction against one sample's ground truth."""
    return MetricReport(
        cc=cc(pred, density),
        auc=auc_judd(pred, fix),
        nss=nss(pred, fix),
        sauc=sauc(pred, fix, other_fix, seed),
        kl=kl(pred, density),
        sim=sim(pred, density),
    )


def fixation_density(fix, height: int, width: int, sigma: float) -> np.ndarray:
    """Gaussian-blurred fixation counts, normalized to sum 1."""
    pts = _as_fixations(fix, (height, width))
    counts = np.zeros((height, width))
    np.add.at(counts, (pts[:, 1], pts[:, 0]), 1.0)
    blurred = gaussian_filter(counts, sigma=sigma, mode="constant")
    return blurred / blurred.sum()


def parse_fixations(text: str) -> np.ndarray:
    """Parse `x,y` integer lines into an [n, 2] array."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"fixation line {lineno}: expected x,y")
        try:
            rows.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DataFormatError(f"fixation line {lineno}: non-integer coordinate") from None
    if not rows:
        raise DataFormatError("fixation file holds no points")
    return np.array(rows, dtype=np.int64)


def format_fixations(fix: np.ndarray) -> str:
    return "\n".join(f"{int(x)},{int(y)}" for x, y in fix) + "\n"
