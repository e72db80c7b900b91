"""Scalar loss kernels with analytic gradients.

Every kernel reduces by the mean and returns (value, gradient) where the
gradient matches the first input's shape. The combined objectives are plain
weighted sums:

    reconstruction:  a1 * adversarial + a2 * l1 + a3 * l2_aux
    segmentation:    a4 * focal + a5 * l1 + a6 * l2_aux
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-7  # probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before log


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 0.8
    alpha3: float = 1.0
    alpha4: float = 0.4
    alpha5: float = 0.6
    alpha6: float = 0.3
    gamma: float = 4.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _check_same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l1_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean absolute error; subgradient 0 at exact ties."""
    p, t = _check_same_shape(pred, target)
    diff = p - t
    grad = np.sign(diff) / diff.size
    return float(np.abs(diff).mean()), grad


def l2_aux_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error; gradient 2 (pred - target) / count."""
    p, t = _check_same_shape(pred, target)
    diff = p - t
    grad = 2.0 * diff / diff.size
    return float((diff * diff).mean()), grad


def focal_loss(prob, label, gamma: float = 4.0) -> tuple[float, np.ndarray]:
    """Mean of -(1 - p_t)^gamma * log(p_t) with p_t = p on positives, 1-p else.

    ``prob`` must lie in [0, 1] (values outside are rejected, then the
    interior clamp PROB_EPS is applied before the log). ``label`` is an
    (H, W) 0/1 mask broadcast across prob's channels. gamma = 0 reduces to
    binary cross-entropy.
    """
    p = np.asarray(prob, dtype=np.float64)
    lab = np.asarray(label)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if (p < 0).any() or (p > 1).any():
        raise ValueError("probabilities outside [0, 1]")
    if not np.isin(lab, (0, 1)).all():
        raise ValueError("label must contain only 0/1 entries")
    if p.ndim == 3 and lab.ndim == 2:
        lab = lab[:, :, None]
    if lab.shape != p.shape:
        lab = np.broadcast_to(lab, p.shape)

    interior = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    sign = np.where(lab == 1, 1.0, -1.0)
    pt = np.where(lab == 1, pc, 1.0 - pc)

    one_minus = 1.0 - pt
    loss = -np.power(one_minus, gamma) * np.log(pt)
    # d/dpt [-(1-pt)^g log pt] = g (1-pt)^(g-1) log pt - (1-pt)^g / pt
    if gamma == 0.0:
        d_pt = -1.0 / pt
    else:
        d_pt = gamma * np.power(one_minus, gamma - 1.0) * np.log(pt) - np.power(one_minus, gamma) / pt
    grad = d_pt * sign * interior / p.size
    return float(loss.mean()), grad


def lsgan_generator(d_fake) -> tuple[float, np.ndarray]:
    """Mean of (d - 1)^2 / 2 over the discriminator map; zero when fooled."""
    d = np.asarray(d_fake, dtype=np.float64)
    grad = (d - 1.0) / d.size
    return float((0.5 * (d - 1.0) ** 2).mean()), grad


def lsgan_discriminator(d_fake, d_real) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Mean of d_fake^2 / 2 plus mean of (d_real - 1)^2 / 2."""
    df = np.asarray(d_fake, dtype=np.float64)
    dr = np.asarray(d_real, dtype=np.float64)
    loss = float((0.5 * df**2).mean() + (0.5 * (dr - 1.0) ** 2).mean())
    return loss, (df / df.size, (dr - 1.0) / dr.size)


def reconstruction_objective(lg: float, ll1: float, laux: float, w: LossWeights) -> float:
    """Weighted sum of adversarial, l1, and auxiliary reconstruction losses."""
    return w.alpha1 * lg + w.alpha2 * ll1 + w.alpha3 * laux


def segmentation_objective(lf: float, ll1: float, laux: float, w: LossWeights) -> float:
    """Weighted sum of focal, l1, and auxiliary segmentation losses."""
    return w.alpha4 * lf + w.alpha5 * ll1 + w.alpha6 * laux
