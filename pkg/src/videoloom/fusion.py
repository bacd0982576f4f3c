"""Merging per-clip denoised outputs back into one latent.

Each path (dilated or shifted-window) is collapsed to a full-length latent
by weighted averaging of its scattered clips; the two paths are then
combined by a timestep-annealed convex blend.  A reference solver for the
joint weighted-least-squares problem over all clips of both paths is
included for verification; it solves the per-pixel normal equations
exactly and is deliberately independent of the production blend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clips import ClipMap, WeightProfile, gather, scatter_accumulate, GLOBAL
from .exceptions import CoverageError, ParameterError, ShapeError
from .latent import LatentVideo


@dataclass(frozen=True)
class AnnealParams:
    """Exponential anneal gamma(t) = gamma0 * exp(beta * t), clamped to 1."""

    gamma0: float = 0.005
    beta: float = 0.0005

    def __post_init__(self):
        if not 0.0 < self.gamma0 <= 1.0:
            raise ParameterError(f"gamma0 must be in (0, 1], got {self.gamma0}")
        if self.beta < 0.0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class FusedStep:
    """Blend result for one timestep plus diagnostics."""

    latent: LatentVideo
    gamma_used: float
    per_path_residuals: tuple[float, float] = (float("nan"), float("nan"))

    def __post_init__(self):
        if not 0.0 <= self.gamma_used <= 1.0:
            raise ParameterError(f"gamma_used outside [0, 1]: {self.gamma_used}")


def annealing_gamma(t: int, p: AnnealParams) -> float:
    """min(gamma0 * exp(beta * t), 1); non-decreasing in t."""
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    return min(p.gamma0 * math.exp(p.beta * t), 1.0)


def fuse_path(
    clips: list[LatentVideo],
    maps: list[ClipMap],
    weights: list[WeightProfile],
    K: int,
) -> LatentVideo:
    """Weighted average of scattered clips: sum_i w_i*clip_i / sum_i w_i
    per frame.  Every frame must receive positive total weight."""
    if not clips or not (len(clips) == len(maps) == len(weights)):
        raise ParameterError("clips, maps and weights must be equal-length, non-empty")
    frame_shape = clips[0].shape[1:]
    num = np.zeros((K,) + frame_shape, dtype=np.float32)
    den = np.zeros(K, dtype=np.float32)
    for clip, cmap, w in zip(clips, maps, weights):
        scatter_accumulate(num, den, clip, cmap, w)
    uncovered = np.flatnonzero(den == 0)
    if uncovered.size:
        raise CoverageError(
            f"frames {uncovered.tolist()} received zero total weight"
        )
    return LatentVideo(num / den[:, None, None, None])


def path_residual(
    fused: LatentVideo,
    clips: list[LatentVideo],
    maps: list[ClipMap],
    weights: list[WeightProfile],
) -> float:
    """L2 disagreement between the fused latent and the path's clips:
    sqrt(sum_i ||w_i * (gather(fused)_i - clip_i)||^2).  Diagnostic only."""
    total = 0.0
    for clip, cmap, w in zip(clips, maps, weights):
        diff = gather(fused, cmap).data.astype(np.float64) - clip.data
        wv = w.values.astype(np.float64)[:, None, None, None]
        total += float(np.sum((wv * diff) ** 2))
    return math.sqrt(total)


def glcd_fuse(
    global_latent: LatentVideo,
    local_latent: LatentVideo,
    gamma: float,
    residuals: tuple[float, float] | None = None,
) -> FusedStep:
    """Convex blend of path latents: gamma*global + (1-gamma)*local.

    Computed in residual form local + gamma*(global - local) so that
    identical inputs pass through bit-exactly; gamma 0 and 1 short-circuit
    to exact copies of the corresponding path.
    """
    if global_latent.shape != local_latent.shape:
        raise ShapeError(
            f"path shapes differ: {global_latent.shape} vs {local_latent.shape}"
        )
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must be in [0, 1], got {gamma}")
    if gamma == 0.0:
        blended = local_latent
    elif gamma == 1.0:
        blended = global_latent
    else:
        blended = LatentVideo(
            local_latent.data
            + np.float32(gamma) * (global_latent.data - local_latent.data)
        )
    res = residuals if residuals is not None else (float("nan"), float("nan"))
    return FusedStep(blended, gamma, res)


def brute_force_fuse(
    clips: list[LatentVideo],
    maps: list[ClipMap],
    weights: list[WeightProfile],
    gamma: float,
    K: int,
) -> LatentVideo:
    """Exact per-pixel minimizer of the joint objective over both paths:

        sum_k || w'_k * (gather(z)_k - clip_k) ||^2,

    with w'_k = sqrt(gamma)*w_k on the dilated path and sqrt(1-gamma)*w_k
    on the window path.  The minimizer is the squared-weight mean, solved
    here in float64 by accumulating the normal equations directly.
    """
    if not clips or not (len(clips) == len(maps) == len(weights)):
        raise ParameterError("clips, maps and weights must be equal-length, non-empty")
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must be in [0, 1], got {gamma}")
    frame_shape = clips[0].shape[1:]
    num = np.zeros((K,) + frame_shape, dtype=np.float64)
    den = np.zeros(K, dtype=np.float64)
    for clip, cmap, w in zip(clips, maps, weights):
        path_scale = gamma if cmap.path == GLOBAL else 1.0 - gamma
        w2 = path_scale * w.values.astype(np.float64) ** 2
        folded = cmap.fold(K)
        np.add.at(num, folded, w2[:, None, None, None] * clip.data.astype(np.float64))
        np.add.at(den, folded, w2)
    uncovered = np.flatnonzero(den == 0)
    if uncovered.size:
        raise CoverageError(
            f"frames {uncovered.tolist()} received zero combined weight"
        )
    return LatentVideo((num / den[:, None, None, None]).astype(np.float32))
