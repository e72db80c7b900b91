"""Synthetic anomaly generation.

A sample is produced in five steps: (1) draw a seeded noise mask, (2) AND it
with the object-foreground mask so defects stay off the background, (3) pick
a noise-source image for the chosen branch, (4) jitter the source's
brightness/contrast, and (5) blend source into the normal image under the
mask with a transparency factor delta:

    out = (1 - M) * I + M * (delta * I_N + (1 - delta) * I)

Off-mask pixels are copied, not recomputed, so they stay bit-equal to the
input. The structural branch sources same-image block permutations or an
external texture directory; the logical branch sources a different image of
the same corpus (rotated), with a lower noise frequency and higher
binarization threshold so masked regions come out fewer and larger.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import imageio
from .noise import binarize_relative, perlin2d
from .tensors import as_mask, as_tensor3

BRANCH_STRUCTURAL = "structural"
BRANCH_LOGICAL = "logical"

SOURCE_SELF_PERMUTE = "self_permute"
SOURCE_TEXTURE_DIR = "texture_dir"

# branch defaults when SimConfig leaves freq/threshold unset
_BRANCH_FREQ = {BRANCH_STRUCTURAL: 8.0, BRANCH_LOGICAL: 4.0}
_BRANCH_THRESHOLD = {BRANCH_STRUCTURAL: 0.3, BRANCH_LOGICAL: 0.5}

_PERMUTE_BLOCK = 32


@dataclass(frozen=True)
class SimConfig:
    """All knobs for one simulated sample; seed makes the sample reproducible."""

    branch: str = BRANCH_STRUCTURAL
    delta_range: tuple[float, float] = (0.3, 1.0)
    structural_source: str = SOURCE_SELF_PERMUTE
    texture_dir: Optional[Path] = None
    perlin_freq: Optional[float] = None
    binarize_threshold: Optional[float] = None
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    rotation_choices: tuple[int, ...] = (0, 90, 180, 270)
    seed: int = 0

    def __post_init__(self):
        if self.branch not in (BRANCH_STRUCTURAL, BRANCH_LOGICAL):
            raise ValueError(f"unknown branch {self.branch!r}")
        lo, hi = self.delta_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"delta_range must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
        if self.structural_source not in (SOURCE_SELF_PERMUTE, SOURCE_TEXTURE_DIR):
            raise ValueError(f"unknown structural_source {self.structural_source!r}")
        if self.structural_source == SOURCE_TEXTURE_DIR and self.texture_dir is None:
            raise ValueError("texture_dir is required when structural_source='texture_dir'")
        for deg in self.rotation_choices:
            if deg % 90 != 0:
                raise ValueError(f"rotation_choices must be multiples of 90, got {deg}")

    @property
    def resolved_freq(self) -> float:
        return self.perlin_freq if self.perlin_freq is not None else _BRANCH_FREQ[self.branch]

    @property
    def resolved_threshold(self) -> float:
        if self.binarize_threshold is not None:
            return self.binarize_threshold
        return _BRANCH_THRESHOLD[self.branch]


@dataclass(frozen=True)
class SimSample:
    anomalous_image: np.ndarray
    mask: np.ndarray
    delta_used: float
    source_id: str


def build_anomaly_mask(noise_mask, foreground) -> np.ndarray:
    """Elementwise AND of noise and foreground masks (foreground enhancement)."""
    nm = as_mask(noise_mask, "noise_mask")
    fg = as_mask(foreground, "foreground")
    if nm.shape != fg.shape:
        raise ValueError(f"mask dims differ: {nm.shape} vs {fg.shape}")
    return (nm & fg).astype(np.uint8)


def composite(normal, noise_src, mask, delta: float) -> np.ndarray:
    """Blend source into the normal image under the mask with weight delta."""
    img = as_tensor3(normal, "normal")
    src = as_tensor3(noise_src, "noise_src")
    m = as_mask(mask)
    if img.shape != src.shape:
        raise ValueError(f"image dims differ: {img.shape} vs {src.shape}")
    if m.shape != img.shape[:2]:
        raise ValueError(f"mask shape {m.shape} != image spatial dims {img.shape[:2]}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    blend = delta * src + (1.0 - delta) * img
    return np.where(m[:, :, None].astype(bool), blend, img)


def augment(img, gain: float, offset: float, value_min: float = 0.0, value_max: float = 1.0) -> np.ndarray:
    """Brightness/contrast jitter: clamp(gain * img + offset)."""
    t = as_tensor3(img, "img")
    return np.clip(gain * t + offset, value_min, value_max)


def rotate_cw(img, degrees: int) -> np.ndarray:
    """Lossless clockwise rotation by a multiple of 90 degrees."""
    if degrees % 90 != 0:
        raise ValueError(f"rotation must be a multiple of 90, got {degrees}")
    return np.rot90(np.asarray(img), k=-(degrees // 90) % 4)


def resize_nearest(img, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize by pure index mapping (fully deterministic)."""
    t = as_tensor3(img, "img")
    h, w = t.shape[:2]
    rows = np.minimum((np.arange(height) * (h / height)).astype(np.intp), h - 1)
    cols = np.minimum((np.arange(width) * (w / width)).astype(np.intp), w - 1)
    return t[rows][:, cols]


def permute_blocks(img, rng: np.random.Generator, block: int = _PERMUTE_BLOCK) -> np.ndarray:
    """Shuffle the full block x block tiles of the image among themselves.

    Trailing strips that do not fill a whole tile are left in place, so the
    output is always an exact pixel permutation of the input.
    """
    t = as_tensor3(img, "img")
    h, w = t.shape[:2]
    nbh, nbw = h // block, w // block
    out = t.copy()
    n = nbh * nbw
    if n < 2:
        return out
    perm = rng.permutation(n)
    for dst in range(n):
        src = perm[dst]
        dr, dc = divmod(dst, nbw)
        sr, sc = divmod(src, nbw)
        out[dr * block : (dr + 1) * block, dc * block : (dc + 1) * block] = t[
            sr * block : (sr + 1) * block, sc * block : (sc + 1) * block
        ]
    return out


def _match_channels(src: np.ndarray, channels: int) -> np.ndarray:
    if src.shape[2] == channels:
        return src
    if src.shape[2] == 1:
        return np.repeat(src, channels, axis=2)
    return src.mean(axis=2, keepdims=True)


def select_noise_source(
    cfg: SimConfig,
    normal,
    corpus: Sequence[tuple[str, np.ndarray]] = (),
    rng_seed: int = 0,
    current_id: Optional[str] = None,
) -> tuple[np.ndarray, str]:
    """Pick the noise-source image for the configured branch.

    Returns the source (matched to the normal image's dims/channels) and an
    identifier recorded in the sample manifest.
    """
    img = as_tensor3(normal, "normal")
    h, w, c = img.shape
    rng = np.random.default_rng(rng_seed)

    if cfg.branch == BRANCH_STRUCTURAL:
        if cfg.structural_source == SOURCE_SELF_PERMUTE:
            return permute_blocks(img, rng), SOURCE_SELF_PERMUTE
        tex_dir = Path(cfg.texture_dir)
        files = sorted(tex_dir.glob("*.png"))
        if not files:
            raise ValueError(f"texture_dir {tex_dir} contains no .png files")
        pick = files[int(rng.integers(len(files)))]
        tex = imageio.load_image(pick)
        tex = _match_channels(tex, c)
        if tex.shape[:2] != (h, w):
            tex = resize_nearest(tex, h, w)
        return tex, pick.name

    # logical branch: a different corpus image, randomly rotated
    candidates = [(cid, cimg) for cid, cimg in corpus if cid != current_id]
    if not candidates:
        raise ValueError(
            "logical branch needs >= 2 images (corpus excluding the current image is empty)"
        )
    cid, chosen = candidates[int(rng.integers(len(candidates)))]
    deg = int(cfg.rotation_choices[int(rng.integers(len(cfg.rotation_choices)))])
    src = rotate_cw(as_tensor3(chosen, "corpus image"), deg)
    src = _match_channels(src, c)
    if src.shape[:2] != (h, w):
        src = resize_nearest(src, h, w)
    return src, f"{cid}@rot{deg}"


def simulate_sample(
    normal,
    foreground,
    cfg: SimConfig,
    corpus: Sequence[tuple[str, np.ndarray]] = (),
    current_id: Optional[str] = None,
) -> SimSample:
    """Produce one (anomalous image, mask) training pair; seeded by cfg.seed.

    Fixed draw order from cfg.seed: noise seed, source seed, delta, contrast
    gain, brightness offset.
    """
    img = as_tensor3(normal, "normal")
    fg = as_mask(foreground, "foreground")
    if fg.shape != img.shape[:2]:
        raise ValueError(f"foreground shape {fg.shape} != image spatial dims {img.shape[:2]}")

    rng = np.random.default_rng(cfg.seed)
    noise_seed = int(rng.integers(0, 2**63))
    source_seed = int(rng.integers(0, 2**63))
    delta = float(rng.uniform(*cfg.delta_range))
    gain = float(rng.uniform(*cfg.contrast_range))
    offset = float(rng.uniform(*cfg.brightness_range))

    freq = cfg.resolved_freq
    field = perlin2d(img.shape[0], img.shape[1], freq, freq, noise_seed)
    noise_mask = binarize_relative(field, cfg.resolved_threshold)
    mask = build_anomaly_mask(noise_mask, fg)

    source, source_id = select_noise_source(cfg, img, corpus, source_seed, current_id)
    source = augment(source, gain, offset)
    anomalous = composite(img, source, mask, delta)
    return SimSample(anomalous_image=anomalous, mask=mask, delta_used=delta, source_id=source_id)
