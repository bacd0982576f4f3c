"""Latent-video value types, the deterministic DDIM step, and the
fully-denoised prediction used by the motion refiner.

A latent video is a 4-D float32 tensor laid out frames-major:
``(K, C, H, W)``.  Frame slicing is the hot path for the windowed
denoisers, so the frame axis comes first.  All public operations are
pure functions over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, ParameterError, ScheduleError, ShapeError


@dataclass(frozen=True)
class LatentVideo:
    """Immutable 4-D latent tensor of shape (frames, channels, height, width).

    Data is always float32 and finite; construction validates both.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ShapeError(f"latent must be 4-D (K,C,H,W), got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"latent axes must all be >= 1, got shape {arr.shape}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise NumericError("latent contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, shape) -> "LatentVideo":
        return cls(np.zeros(shape, dtype=np.float32))

    @classmethod
    def full(cls, shape, value: float) -> "LatentVideo":
        return cls(np.full(shape, value, dtype=np.float32))

    @classmethod
    def standard_normal(cls, shape, rng: np.random.Generator) -> "LatentVideo":
        return cls(rng.standard_normal(shape).astype(np.float32))


@dataclass(frozen=True)
class DenoisePrediction:
    """Noise prediction for a latent at timestep ``t``."""

    eps: LatentVideo
    t: int


@dataclass(frozen=True)
class DenoiseSchedule:
    """Cumulative-alpha table plus the subset of timesteps actually visited.

    ``alpha_bar`` has length ``T + 1`` with ``alpha_bar[0] == 1`` and is
    strictly decreasing; ``step_indices`` lists the visited timesteps in
    descending order, the last of which transitions to the fully denoised
    state t = 0.
    """

    alpha_bar: np.ndarray
    step_indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise ScheduleError("alpha_bar must be a 1-D table of length T+1 >= 2")
        if abs(ab[0] - 1.0) > 1e-12:
            raise ScheduleError("alpha_bar[0] must be 1")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ScheduleError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        steps = tuple(int(s) for s in self.step_indices)
        if not steps:
            steps = tuple(range(self.timesteps, 0, -1))
        if any(s < 1 or s > self.timesteps for s in steps):
            raise ScheduleError("step indices must lie in [1, T]")
        if any(a <= b for a, b in zip(steps, steps[1:])):
            raise ScheduleError("step indices must be strictly decreasing")
        object.__setattr__(self, "step_indices", steps)

    @property
    def timesteps(self) -> int:
        return len(self.alpha_bar) - 1

    def abar(self, t: int) -> float:
        if not 0 <= t <= self.timesteps:
            raise ScheduleError(f"timestep {t} outside schedule [0, {self.timesteps}]")
        return float(self.alpha_bar[t])

    def with_steps(self, num_steps: int) -> "DenoiseSchedule":
        """Uniform-stride subsample of the table: ``num_steps`` visited
        timesteps descending from T, each transitioning to the next and
        finally to t = 0."""
        if not 1 <= num_steps <= self.timesteps:
            raise ScheduleError(f"num_steps must be in [1, {self.timesteps}]")
        stride = self.timesteps // num_steps
        steps = tuple(self.timesteps - i * stride for i in range(num_steps))
        return DenoiseSchedule(self.alpha_bar, steps)

    def transitions(self) -> list[tuple[int, int]]:
        """(t_from, t_to) pairs visited in order; the last pair lands on 0."""
        targets = list(self.step_indices[1:]) + [0]
        return list(zip(self.step_indices, targets))


def alpha_schedule(T: int, beta_start: float, beta_end: float) -> DenoiseSchedule:
    """Build the cumulative-product alpha table from a linear beta ramp.

    beta_i interpolates linearly from ``beta_start`` to ``beta_end`` over T
    steps; ``alpha_bar[t]`` is the product of (1 - beta_i) for i <= t.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, got "
            f"[{beta_start}, {beta_end}]"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DenoiseSchedule(alpha_bar)


def _check_pair(z: LatentVideo, pred: DenoisePrediction):
    if z.shape != pred.eps.shape:
        raise ShapeError(
            f"latent shape {z.shape} does not match prediction shape {pred.eps.shape}"
        )


def ddim_step(
    z_t: LatentVideo,
    pred: DenoisePrediction,
    t_from: int,
    t_to: int,
    sched: DenoiseSchedule,
) -> LatentVideo:
    """One deterministic denoising hop from timestep ``t_from`` to ``t_to``.

    z_to = sqrt(abar_to / abar_from) * z_t
           + (sqrt(1/abar_to - 1) - sqrt(1/abar_from - 1)) * eps

    ``t_to == t_from`` degenerates to the identity.
    """
    if t_to > t_from:
        raise ParameterError(f"t_to ({t_to}) must not exceed t_from ({t_from})")
    _check_pair(z_t, pred)
    a_from = sched.abar(t_from)
    a_to = sched.abar(t_to)
    scale = np.float32(math.sqrt(a_to / a_from))
    eps_coef = np.float32(math.sqrt(1.0 / a_to - 1.0) - math.sqrt(1.0 / a_from - 1.0))
    return LatentVideo(scale * z_t.data + eps_coef * pred.eps.data)


def predict_z0(
    z_t: LatentVideo, pred: DenoisePrediction, t: int, sched: DenoiseSchedule
) -> LatentVideo:
    """Current estimate of the fully denoised video:
    (z_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t)."""
    _check_pair(z_t, pred)
    a_t = sched.abar(t)
    if a_t <= 0.0:
        raise ScheduleError(f"alpha_bar({t}) must be positive")
    inv = np.float32(1.0 / math.sqrt(a_t))
    noise_coef = np.float32(math.sqrt(1.0 - a_t))
    return LatentVideo(inv * (z_t.data - noise_coef * pred.eps.data))


def renoise(
    z0: LatentVideo, pred: DenoisePrediction, t: int, sched: DenoiseSchedule
) -> LatentVideo:
    """Forward identity z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps;
    exact inverse of :func:`predict_z0` for the same prediction."""
    _check_pair(z0, pred)
    a_t = sched.abar(t)
    return LatentVideo(
        np.float32(math.sqrt(a_t)) * z0.data
        + np.float32(math.sqrt(1.0 - a_t)) * pred.eps.data
    )
