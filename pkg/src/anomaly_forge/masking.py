"""Grid-patch and large rectangular input masks for inpainting pre-training.

grid_mask tiles the image into patch_size x patch_size cells (trailing
partial cells count as whole patches) and masks an exact number of them:
floor(mask_ratio * patch_count), sampled without replacement. large_mask
unions a configurable number of big rectangles whose sides are drawn from
large_side_range. The two are layered by OR-ing the masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import as_mask, as_tensor3


@dataclass(frozen=True)
class MaskSpec:
    patch_size: int = 8
    mask_ratio: float = 0.8
    large_mask_count: int = 1
    large_side_range: tuple[int, int] = (40, 150)
    fill_value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1], got {self.mask_ratio}")
        if self.large_mask_count < 0:
            raise ValueError("large_mask_count must be >= 0")
        lo, hi = self.large_side_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid large_side_range ({lo}, {hi})")


def grid_mask(height: int, width: int, spec: MaskSpec) -> np.ndarray:
    """Mask exactly floor(mask_ratio * patches) whole patches, seeded."""
    if spec.patch_size > min(height, width):
        raise ValueError(
            f"patch_size {spec.patch_size} exceeds image side min({height}, {width})"
        )
    n_rows = -(-height // spec.patch_size)
    n_cols = -(-width // spec.patch_size)
    total = n_rows * n_cols
    # tiny nudge so ratios that are exact in real arithmetic floor correctly
    n_masked = int(spec.mask_ratio * total + 1e-9)

    rng = np.random.default_rng([spec.seed, 0])
    chosen = rng.choice(total, size=n_masked, replace=False)
    member = np.zeros(total, dtype=bool)
    member[chosen] = True

    rows = np.arange(height) // spec.patch_size
    cols = np.arange(width) // spec.patch_size
    patch_id = rows[:, None] * n_cols + cols[None, :]
    return member[patch_id].astype(np.uint8)


def large_mask(height: int, width: int, spec: MaskSpec) -> np.ndarray:
    """Union of large_mask_count seeded rectangles with sides in range."""
    lo, hi = spec.large_side_range
    if hi > min(height, width):
        raise ValueError(
            f"large_side_range max {hi} exceeds image side min({height}, {width})"
        )
    rng = np.random.default_rng([spec.seed, 1])
    mask = np.zeros((height, width), dtype=np.uint8)
    for _ in range(spec.large_mask_count):
        h_side = int(rng.integers(lo, hi + 1))
        w_side = int(rng.integers(lo, hi + 1))
        r0 = int(rng.integers(0, height - h_side + 1))
        c0 = int(rng.integers(0, width - w_side + 1))
        mask[r0 : r0 + h_side, c0 : c0 + w_side] = 1
    return mask


def combined_mask(height: int, width: int, spec: MaskSpec) -> np.ndarray:
    """Grid mask with the large masks superimposed (bitwise OR)."""
    return np.maximum(grid_mask(height, width, spec), large_mask(height, width, spec))


def apply_mask(img, mask, fill: float) -> np.ndarray:
    """Set masked pixels to ``fill`` on every channel; others stay bit-equal."""
    t = as_tensor3(img, "img")
    m = as_mask(mask)
    if m.shape != t.shape[:2]:
        raise ValueError(f"mask shape {m.shape} != image spatial dims {t.shape[:2]}")
    return np.where(m[:, :, None].astype(bool), float(fill), t)
