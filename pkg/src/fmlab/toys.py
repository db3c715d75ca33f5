"""Self-contained toy datasets for desk-scale experiments and tests."""
from __future__ import annotations

import numpy as np

__all__ = [
    "two_gaussians",
    "TWO_GAUSSIAN_MEANS",
    "line_mask",
    "toy_mask_dataset",
    "renderer_pairs",
    "dark_line_task",
]

TWO_GAUSSIAN_MEANS = {0: (-2.0, -2.0), 1: (2.0, 2.0)}


def two_gaussians(n_per_class: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """2D class-conditional data: class 0 at (-2,-2), class 1 at (+2,+2), std 0.1."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, mean in TWO_GAUSSIAN_MEANS.items():
        xs.append(np.asarray(mean) + 0.1 * rng.standard_normal((n_per_class, 2)))
        ys.append(np.full(n_per_class, label, dtype=np.intp))
    return np.concatenate(xs), np.concatenate(ys)


def line_mask(side: int, n_lines: int, rng: np.random.Generator) -> np.ndarray:
    """Mask with n_lines distinct full-width rows or columns lit."""
    m = np.zeros((side, side), dtype=np.uint8)
    horizontal = bool(rng.random() < 0.5)
    positions = rng.choice(side, size=min(n_lines, side), replace=False)
    for pos in positions:
        if horizontal:
            m[pos, :] = 1
        else:
            m[:, pos] = 1
    return m


def toy_mask_dataset(
    n_per_class: int,
    side: int = 8,
    line_counts: tuple[int, ...] = (1, 5),
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Line masks per sparsity class: class c gets line_counts[c] lines.

    With the defaults, coverage is 12.5% vs 62.5% at side=8, which lands each
    class mid-bin for two equal-width bins over [0, 0.75].
    """
    rng = np.random.default_rng(seed)
    masks, labels = [], []
    for label, n_lines in enumerate(line_counts):
        for _ in range(n_per_class):
            masks.append(line_mask(side, n_lines, rng))
            labels.append(label)
    return np.stack(masks), np.asarray(labels, dtype=np.intp)


def renderer_pairs(
    masks: np.ndarray, seed: int = 0, lo: float = 0.68, hi: float = 0.82
) -> np.ndarray:
    """Images paired to masks: constant background with crack pixels darkened to 0."""
    rng = np.random.default_rng(seed)
    n = masks.shape[0]
    brightness = rng.uniform(lo, hi, size=(n, 1, 1))
    return (brightness * (1.0 - masks.astype(np.float64))).reshape(n, -1)


def dark_line_task(
    n_pairs: int, n_backgrounds: int, side: int = 8, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Injection toy: crack images are backgrounds with a dark 1-px line.

    Returns (images (N, side*side), masks (N, side, side), backgrounds
    (M, side*side)); backgrounds are independent constant rasters drawn from
    the same brightness distribution as the crack images' backgrounds.
    """
    rng = np.random.default_rng(seed)
    masks = np.stack([line_mask(side, 1, rng) for _ in range(n_pairs)])
    images = renderer_pairs(masks, seed=seed + 1)
    backgrounds = np.repeat(
        np.random.default_rng(seed + 2).uniform(0.68, 0.82, size=(n_backgrounds, 1)),
        side * side,
        axis=1,
    )
    return images, masks, backgrounds
