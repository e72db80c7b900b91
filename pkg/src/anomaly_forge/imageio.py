"""PNG and raw-float I/O.

Images come in as 8-bit grayscale or RGB PNG and are converted to float64
(H, W, C) in [0, 1] with C of 1 or 3. Masks are 8-bit PNGs thresholded at
128. Score maps are either 16-bit grayscale PNGs (divided by 65535) or flat
little-endian float32 ``.bin`` files with a JSON sidecar giving the dims.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path) -> np.ndarray:
    """Read an 8-bit gray or RGB PNG as float64 (H, W, C) in [0, 1]."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, img) -> None:
    """Write float [0, 1] (H, W, C) data as an 8-bit PNG (gray if C == 1)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {arr.shape}")
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(q, mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    """Read a PNG as a 0/1 uint8 mask (any channel value >= 128 counts)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.uint8)


def save_mask(path, mask) -> None:
    q = (np.asarray(mask, dtype=np.uint8) * 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path)


def save_score_map(path, scores) -> None:
    """Write a float [0, 1] score map as 16-bit grayscale PNG."""
    arr = np.asarray(scores, dtype=np.float64)
    q = np.clip(np.round(arr * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(path)


def load_score_map(path) -> np.ndarray:
    """Read a score map: 16-bit (or 8-bit) gray PNG, or .bin + .json sidecar."""
    path = Path(path)
    if path.suffix == ".bin":
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            raise ValueError(f"missing JSON sidecar for {path}")
        meta = json.loads(sidecar.read_text())
        dtype = np.dtype(meta.get("dtype", "float32"))
        raw = np.fromfile(path, dtype=dtype)
        return raw.reshape(meta["height"], meta["width"]).astype(np.float64)
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"score map {path} must be single-channel, got {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64) / 65535.0
