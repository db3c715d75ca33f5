"""Binary mask algebra: coverage binning, morphology, propagation, statistics.

Masks are 2D uint8 numpy arrays with values in {0,1}. All operations are
pure; randomized ones take explicit seeds and derive one child generator per
variant so results are reproducible element by element.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "as_mask",
    "coverage",
    "CoverageBinning",
    "uniform_bins",
    "assign_class",
    "SE3",
    "dilate",
    "erode",
    "translate",
    "connected_components",
    "PropagationPolicy",
    "MaskVariant",
    "propagate",
    "skeletonize",
    "TargetStats",
    "estimate_target_stats",
    "resize_nearest",
]

# 3x3 full square structuring element (8-connected neighborhood).
SE3 = np.ones((3, 3), dtype=bool)


def as_mask(m) -> np.ndarray:
    """Validate and coerce to a strictly binary uint8 raster."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"mask must be 2D with positive dims, got shape {m.shape}")
    out = m.astype(np.uint8, copy=True)
    if not np.all((out == 0) | (out == 1)):
        raise DomainError("mask values must be 0 or 1")
    return out


def coverage(m) -> float:
    """Fraction of foreground pixels."""
    m = as_mask(m)
    return float(m.mean())


@dataclass(frozen=True)
class CoverageBinning:
    """Strictly increasing coverage-ratio edges; C = len(edges)-1 classes."""

    edges: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        if e.ndim != 1 or len(e) < 2:
            raise DomainError("need at least two edges")
        if e[0] < 0.0 or e[-1] > 1.0 or np.any(np.diff(e) <= 0):
            raise DomainError(f"edges must be strictly increasing within [0,1], got {self.edges}")
        object.__setattr__(self, "edges", tuple(float(v) for v in e))

    @property
    def num_classes(self) -> int:
        return len(self.edges) - 1


def uniform_bins(num_classes: int = 10, max_coverage: float = 0.05) -> CoverageBinning:
    """Equal-width bins from 0 to max_coverage (default ten 0.5% bins)."""
    edges = np.linspace(0.0, max_coverage, num_classes + 1)
    return CoverageBinning(edges=tuple(edges))


def assign_class(rho: float, bins: CoverageBinning) -> int:
    """Class index with edges[i] <= rho < edges[i+1]; out-of-range clamps."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"coverage ratio must lie in [0,1], got {rho}")
    idx = int(np.searchsorted(bins.edges, rho, side="right")) - 1
    return int(np.clip(idx, 0, bins.num_classes - 1))


def _check_se(se) -> np.ndarray:
    se = np.asarray(se, dtype=bool)
    if se.ndim != 2 or se.shape[0] % 2 == 0 or se.shape[1] % 2 == 0:
        raise ShapeError(f"structuring element must be 2D with odd dims, got {se.shape}")
    return se


def dilate(m, se=SE3) -> np.ndarray:
    """Binary dilation under zero padding (background outside the image)."""
    m = as_mask(m)
    se = _check_se(se)
    h, w = m.shape
    ph, pw = se.shape[0] // 2, se.shape[1] // 2
    padded = np.zeros((h + 2 * ph, w + 2 * pw), dtype=np.uint8)
    padded[ph : ph + h, pw : pw + w] = m
    out = np.zeros_like(m)
    for di in range(se.shape[0]):
        for dj in range(se.shape[1]):
            if se[di, dj]:
                np.maximum(out, padded[di : di + h, dj : dj + w], out=out)
    return out


def erode(m, se=SE3) -> np.ndarray:
    """Binary erosion under zero padding (border pixels erode away)."""
    m = as_mask(m)
    se = _check_se(se)
    h, w = m.shape
    ph, pw = se.shape[0] // 2, se.shape[1] // 2
    padded = np.zeros((h + 2 * ph, w + 2 * pw), dtype=np.uint8)
    padded[ph : ph + h, pw : pw + w] = m
    out = np.ones_like(m)
    for di in range(se.shape[0]):
        for dj in range(se.shape[1]):
            if se[di, dj]:
                np.minimum(out, padded[di : di + h, dj : dj + w], out=out)
    return out


def translate(m, dx: int, dy: int) -> np.ndarray:
    """Shift right by dx and down by dy; pixels moved past a border vanish."""
    m = as_mask(m)
    out = np.zeros_like(m)
    h, w = m.shape
    src_rows = slice(max(0, -dy), min(h, h - dy))
    src_cols = slice(max(0, -dx), min(w, w - dx))
    dst_rows = slice(max(0, dy), min(h, h + dy))
    dst_cols = slice(max(0, dx), min(w, w + dx))
    out[dst_rows, dst_cols] = m[src_rows, src_cols]
    return out


def connected_components(m) -> tuple[int, np.ndarray]:
    """8-connected component count and label raster (labels start at 1)."""
    m = as_mask(m)
    h, w = m.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    neighbors = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    for i in range(h):
        for j in range(w):
            if m[i, j] and labels[i, j] == 0:
                count += 1
                stack = [(i, j)]
                labels[i, j] = count
                while stack:
                    ci, cj = stack.pop()
                    for di, dj in neighbors:
                        ni, nj = ci + di, cj + dj
                        if 0 <= ni < h and 0 <= nj < w and m[ni, nj] and labels[ni, nj] == 0:
                            labels[ni, nj] = count
                            stack.append((ni, nj))
    return count, labels


@dataclass(frozen=True)
class PropagationPolicy:
    """Controls for structure-preserving mask perturbation."""

    variants: int = 3
    max_dilate: int = 1
    max_erode: int = 1
    jitter_px: int = 1
    preserve_connectivity: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.variants < 1:
            raise DomainError(f"variants must be >= 1, got {self.variants}")
        for name in ("max_dilate", "max_erode", "jitter_px"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class MaskVariant:
    mask: np.ndarray
    provenance: str


def _window_restricted(m: np.ndarray, op, rng: np.random.Generator) -> np.ndarray:
    """Apply a morphological op inside a random window only (local
    thinning/thickening); the rest of the mask passes through unchanged."""
    h, w = m.shape
    wh = max(1, h // 2)
    ww = max(1, w // 2)
    r0 = int(rng.integers(0, h - wh + 1))
    c0 = int(rng.integers(0, w - ww + 1))
    out = m.copy()
    out[r0 : r0 + wh, c0 : c0 + ww] = op(m)[r0 : r0 + wh, c0 : c0 + ww]
    return out


def propagate(m, policy: PropagationPolicy) -> list[MaskVariant]:
    """Generate policy.variants perturbed masks from m.

    Each variant draws its own generator from (policy.seed, index), composes
    dilation/erosion (globally or window-restricted) with an integer jitter,
    and, when preserve_connectivity is set, falls back to jitter-only (then
    identity) whenever the composition would empty the mask or split
    components. Fallbacks are recorded in the variant provenance.
    """
    m = as_mask(m)
    if policy.preserve_connectivity and m.sum() == 0:
        raise DomainError("cannot preserve connectivity of an empty mask")
    base_components, _ = connected_components(m)
    out: list[MaskVariant] = []
    for j in range(policy.variants):
        rng = np.random.default_rng([policy.seed, j])
        n_d = int(rng.integers(0, policy.max_dilate + 1))
        n_e = int(rng.integers(0, policy.max_erode + 1))
        local = bool(rng.random() < 0.5)
        dx = int(rng.integers(-policy.jitter_px, policy.jitter_px + 1))
        dy = int(rng.integers(-policy.jitter_px, policy.jitter_px + 1))

        cand = m
        for _ in range(n_d):
            cand = _window_restricted(cand, dilate, rng) if local else dilate(cand)
        for _ in range(n_e):
            cand = _window_restricted(cand, erode, rng) if local else erode(cand)
        cand = translate(cand, dx, dy)
        tag = f"dilate={n_d};erode={n_e};local={int(local)};jitter=({dx},{dy})"

        if policy.preserve_connectivity:
            n_comp, _ = connected_components(cand)
            if cand.sum() == 0 or n_comp > base_components:
                cand = translate(m, dx, dy)
                tag += ";fallback=jitter_only"
                if cand.sum() == 0:
                    cand = m.copy()
                    tag += ";fallback=identity"
        out.append(MaskVariant(mask=cand, provenance=tag))
    return out


def skeletonize(m) -> np.ndarray:
    """Zhang-Suen thinning; returns a 1-px-wide skeleton mask."""
    img = as_mask(m).astype(bool)

    def neighbors(a):
        p = np.zeros(a.shape + (8,), dtype=bool)
        padded = np.zeros((a.shape[0] + 2, a.shape[1] + 2), dtype=bool)
        padded[1:-1, 1:-1] = a
        # Clockwise from north: p2..p9.
        offs = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
        for k, (di, dj) in enumerate(offs):
            p[..., k] = padded[1 + di : padded.shape[0] - 1 + di, 1 + dj : padded.shape[1] - 1 + dj]
        return p

    changed = True
    while changed:
        changed = False
        for phase in (0, 1):
            p = neighbors(img)
            b = p.sum(axis=-1)
            ring = np.concatenate([p, p[..., :1]], axis=-1).astype(np.int8)
            a = ((ring[..., :-1] == 0) & (ring[..., 1:] == 1)).sum(axis=-1)
            p2, p4, p6, p8 = p[..., 0], p[..., 2], p[..., 4], p[..., 6]
            if phase == 0:
                cond = (~p2 | ~p4 | ~p6) & (~p4 | ~p6 | ~p8)
            else:
                cond = (~p2 | ~p4 | ~p8) & (~p2 | ~p6 | ~p8)
            remove = img & (b >= 2) & (b <= 6) & (a == 1) & cond
            if remove.any():
                img &= ~remove
                changed = True
    return img.astype(np.uint8)


@dataclass(frozen=True)
class TargetStats:
    """Empirical coverage-class distribution plus a width summary."""

    histogram: np.ndarray
    mean_width: float
    n_used: int

    def __post_init__(self):
        object.__setattr__(self, "histogram", np.asarray(self.histogram, dtype=np.float64))


def estimate_target_stats(
    masks: list[np.ndarray], fraction: float, bins: CoverageBinning, seed: int = 0
) -> TargetStats:
    """Subsample ceil(fraction*N) masks and summarize their statistics.

    The histogram is the empirical distribution over coverage classes; the
    width summary is foreground area divided by skeleton length (a stroke
    width proxy), averaged over nonempty masks in the subsample.
    """
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"fraction must lie in (0,1], got {fraction}")
    if len(masks) == 0:
        raise DomainError("mask sample is empty")
    n_use = math.ceil(fraction * len(masks))
    order = np.random.default_rng(seed).permutation(len(masks))
    chosen = [masks[i] for i in order[:n_use]]

    hist = np.zeros(bins.num_classes, dtype=np.float64)
    widths = []
    for m in chosen:
        m = as_mask(m)
        hist[assign_class(coverage(m), bins)] += 1.0
        area = float(m.sum())
        if area > 0:
            skel = float(skeletonize(m).sum())
            widths.append(area / max(skel, 1.0))
    hist /= hist.sum()
    mean_width = float(np.mean(widths)) if widths else 0.0
    return TargetStats(histogram=hist, mean_width=mean_width, n_used=n_use)


def resize_nearest(m, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resample to (H, W); binarity is preserved."""
    m = as_mask(m)
    h2, w2 = shape
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"target shape must be positive, got {shape}")
    rows = (np.arange(h2) * m.shape[0] // h2).astype(np.intp)
    cols = (np.arange(w2) * m.shape[1] // w2).astype(np.intp)
    return m[np.ix_(rows, cols)]
