"""Seeded 2-D gradient noise and binarization.

The generator is classic lattice-gradient ("Perlin-style") noise: each
integer lattice point gets a pseudo-random unit gradient, corner dot
products are blended with the quintic fade 6t^5 - 15t^4 + 10t^3, and the
result is scaled by sqrt(2) so the theoretical range is [-1, 1]. Gradients
come from a fixed 256-entry unit-vector table indexed by an integer hash of
(lattice x, lattice y, seed), so a given (seed, dims, freqs) triple always
produces a bit-identical field on every call. The value at any integer
lattice point is exactly 0 (all corner offsets vanish there).

Frequencies are expressed in lattice cells per image side: freq_x = 8 on a
256-wide image puts a lattice line every 32 pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# angles evenly spaced on the circle; 256 entries so a byte of hash indexes one
_TABLE_SIZE = 256
_ANGLES = 2.0 * np.pi * np.arange(_TABLE_SIZE) / _TABLE_SIZE
_GRAD_X = np.cos(_ANGLES)
_GRAD_Y = np.sin(_ANGLES)

_MIX_A = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX_C = np.uint64(0xD6E8FEB86659FD93)
_MUL_1 = np.uint64(0xFF51AFD7ED558CCD)
_MUL_2 = np.uint64(0xC4CEB9FE1A85EC53)


@dataclass(frozen=True)
class NoiseField:
    """A sampled 2-D noise field plus the parameters that produced it."""

    height: int
    width: int
    values: np.ndarray  # (height, width) float64 in [-1, 1]
    seed: int
    freq_x: float
    freq_y: float


def _hash_lattice(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """64-bit avalanche hash of lattice coordinates, reduced mod table size."""
    with np.errstate(over="ignore"):
        h = (
            ix.astype(np.uint64) * _MIX_A
            ^ iy.astype(np.uint64) * _MIX_B
            ^ np.uint64(seed) * _MIX_C
        )
        h ^= h >> np.uint64(33)
        h *= _MUL_1
        h ^= h >> np.uint64(33)
        h *= _MUL_2
        h ^= h >> np.uint64(33)
    return (h & np.uint64(_TABLE_SIZE - 1)).astype(np.intp)


def _fade(t: np.ndarray) -> np.ndarray:
    # quintic smoothstep: zero first and second derivative at the lattice
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _corner_dot(ix, iy, dx, dy, seed):
    idx = _hash_lattice(ix, iy, seed)
    return _GRAD_X[idx] * dx + _GRAD_Y[idx] * dy


def perlin2d(
    height: int, width: int, freq_x: float, freq_y: float, seed: int
) -> NoiseField:
    """Sample a height x width gradient-noise field.

    Pixel (row, col) is evaluated at lattice coordinates
    (col * freq_x / width, row * freq_y / height).
    """
    if height < 1 or width < 1:
        raise ValueError(f"dims must be positive, got {height}x{width}")
    if freq_x < 1 or freq_y < 1:
        raise ValueError(f"frequencies must be >= 1, got ({freq_x}, {freq_y})")

    xs = np.arange(width, dtype=np.float64) * (float(freq_x) / width)
    ys = np.arange(height, dtype=np.float64) * (float(freq_y) / height)
    x = np.broadcast_to(xs[None, :], (height, width))
    y = np.broadcast_to(ys[:, None], (height, width))

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    xf = x - x0
    yf = y - y0

    n00 = _corner_dot(x0, y0, xf, yf, seed)
    n10 = _corner_dot(x0 + 1, y0, xf - 1.0, yf, seed)
    n01 = _corner_dot(x0, y0 + 1, xf, yf - 1.0, seed)
    n11 = _corner_dot(x0 + 1, y0 + 1, xf - 1.0, yf - 1.0, seed)

    u = _fade(xf)
    v = _fade(yf)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    vals = nx0 + v * (nx1 - nx0)

    # unit gradients bound 2-D lattice noise by sqrt(2)/2; rescale to [-1, 1]
    vals = np.clip(vals * np.sqrt(2.0), -1.0, 1.0)
    return NoiseField(
        height=height,
        width=width,
        values=vals,
        seed=int(seed),
        freq_x=float(freq_x),
        freq_y=float(freq_y),
    )


def binarize(field: NoiseField, threshold: float) -> np.ndarray:
    """0/1 mask: bit set where the field value is strictly above threshold."""
    return (field.values > threshold).astype(np.uint8)


def binarize_relative(field: NoiseField, fraction: float) -> np.ndarray:
    """Binarize at ``fraction`` of the field's peak after rescaling to [0, 1].

    The field is mapped by v -> (v + 1) / 2 and cut at fraction * max of the
    rescaled values; equivalent to an absolute threshold of
    fraction * (max + 1) - 1 on the raw field.
    """
    peak = float(field.values.max())
    return binarize(field, fraction * (peak + 1.0) - 1.0)


def rect_noise(
    height: int,
    width: int,
    w_range: tuple[int, int],
    h_range: tuple[int, int],
    seed: int,
) -> np.ndarray:
    """Single axis-aligned rectangle of 1s at a seeded random position/size.

    Side lengths are drawn uniformly (inclusive) from w_range / h_range, then
    the top-left corner uniformly among positions keeping the rectangle in
    bounds. Draw order is fixed: width, height, row, col.
    """
    if height < 1 or width < 1:
        raise ValueError(f"dims must be positive, got {height}x{width}")
    for lo, hi, dim, name in ((*w_range, width, "w_range"), (*h_range, height, "h_range")):
        if not (1 <= lo <= hi <= dim):
            raise ValueError(f"{name}=({lo}, {hi}) outside image dimension {dim}")

    rng = np.random.default_rng(seed)
    rw = int(rng.integers(w_range[0], w_range[1] + 1))
    rh = int(rng.integers(h_range[0], h_range[1] + 1))
    r0 = int(rng.integers(0, height - rh + 1))
    c0 = int(rng.integers(0, width - rw + 1))

    mask = np.zeros((height, width), dtype=np.uint8)
    mask[r0 : r0 + rh, c0 : c0 + rw] = 1
    return mask


def invert(mask: np.ndarray) -> np.ndarray:
    """Flip every bit of a 0/1 mask."""
    return (1 - np.asarray(mask, dtype=np.uint8)).astype(np.uint8)
