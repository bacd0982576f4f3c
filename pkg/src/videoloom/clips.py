"""Frame-index maps projecting a long latent onto short clips.

Two families:

* dilated maps: arithmetic-progression indices with stride ``d``, one map
  per start offset 0..d-1, so the d maps partition the (padded) frame
  range exactly;
* shifted windows: consecutive-frame windows on a stride grid whose
  common start offset is re-randomized every timestep, with the first and
  last windows clamped so the whole sequence stays covered.

A map records indices into a virtually padded latent; padding is realized
on the fly by folding out-of-range indices back onto the nearest real
frame (replicate-edge).  ``gather`` extracts a clip, ``scatter_accumulate``
adds a clip back into numerator/denominator accumulators for weighted
averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ParameterError, ShapeError
from .latent import LatentVideo

GLOBAL = "global"
LOCAL = "local"

PAD_REPLICATE = "replicate"


@dataclass(frozen=True)
class ClipMap:
    """Selects ``len(indices)`` frames (possibly padded) from a latent."""

    indices: tuple[int, ...]
    path: str
    clip_id: int
    pad: tuple[int, int, str] = (0, 0, PAD_REPLICATE)

    def __post_init__(self):
        if self.path not in (GLOBAL, LOCAL):
            raise ParameterError(f"unknown path tag {self.path!r}")
        left, right, mode = self.pad
        if mode != PAD_REPLICATE:
            raise ParameterError(f"unsupported pad mode {mode!r}")
        if left < 0 or right < 0:
            raise ParameterError("pad widths must be >= 0")
        if any(i < 0 for i in self.indices):
            raise ParameterError("map indices must be >= 0")

    def __len__(self) -> int:
        return len(self.indices)

    def fold(self, K: int) -> np.ndarray:
        """Real frame index for each (padded) map index.

        Replicate padding folds indices beyond the real range onto the
        nearest edge frame.
        """
        left, right, _ = self.pad
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and idx.max() >= K + left + right:
            raise ShapeError(
                f"map index {int(idx.max())} outside padded range "
                f"[0, {K + left + right})"
            )
        return np.clip(idx - left, 0, K - 1)


@dataclass(frozen=True)
class WeightProfile:
    """Per-clip-frame non-negative blending weights."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        if vals.ndim != 1 or vals.size < 1:
            raise ParameterError("weight profile must be a non-empty 1-D vector")
        if np.any(vals < 0) or not np.any(vals > 0):
            raise ParameterError("weights must be >= 0 with at least one positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


UNIFORM = "uniform"
TRIANGULAR = "triangular"


def clip_weights(L: int, profile: str = UNIFORM) -> WeightProfile:
    """Uniform: all ones.  Triangular: symmetric ramp (2*min(j, L-1-j)+1)/L,
    endpoints 1/L, peak at mid-clip."""
    if L < 1:
        raise ParameterError(f"L must be >= 1, got {L}")
    if profile == UNIFORM:
        return WeightProfile(np.ones(L, dtype=np.float32))
    if profile == TRIANGULAR:
        j = np.arange(L)
        vals = (2 * np.minimum(j, L - 1 - j) + 1) / float(L)
        return WeightProfile(vals.astype(np.float32))
    raise ParameterError(f"unknown weight profile {profile!r}")


@dataclass(frozen=True)
class ShiftPlan:
    """Deterministic per-timestep window shifts derived from a seed.

    The default draws one shift shared by every window of a timestep;
    ``per_clip=True`` draws independently per window index.
    """

    seed: int
    per_clip: bool = False

    def shift(self, t: int, stride: int, clip_index: int = 0) -> int:
        if stride < 1:
            raise ParameterError("stride must be >= 1")
        key = [self.seed & 0xFFFFFFFFFFFFFFFF, t]
        if self.per_clip:
            key.append(clip_index)
        rng = np.random.default_rng(key)
        return int(rng.integers(0, stride))


def make_global_maps(
    K: int, L: int, d: int, max_padded: int | None = None
) -> list[ClipMap]:
    """d dilated maps with start offsets 0..d-1 and stride d.

    Together the maps cover every padded index exactly once, so every real
    frame lands in exactly one map.  Requires K <= d*L; the tail
    d*L - K, if positive, is replicate padding on the right.
    """
    if K < 1 or L < 1 or d < 1:
        raise ParameterError("K, L and d must all be >= 1")
    padded = d * L
    if padded < K:
        raise ConfigError(
            f"dilation {d} with clip length {L} covers only {padded} frames "
            f"but K={K}; increase d or L"
        )
    if max_padded is not None and padded > max_padded:
        raise ConfigError(
            f"padded length {padded} exceeds configured maximum {max_padded}"
        )
    right = padded - K
    maps = []
    for i in range(d):
        idx = tuple(i + d * j for j in range(L))
        maps.append(ClipMap(idx, GLOBAL, i, (0, right, PAD_REPLICATE)))
    return maps


def local_starts(K: int, L: int, stride: int, shift: int) -> list[int]:
    """Window starts: the stride grid offset by ``shift``, clamped into
    [0, K-L], with 0 and K-L always included; sorted, deduplicated."""
    if not 1 <= L <= K:
        raise ParameterError(f"need 1 <= L <= K, got L={L}, K={K}")
    if not 1 <= stride <= L:
        raise ParameterError(f"need 1 <= stride <= L, got stride={stride}")
    if not 0 <= shift < stride:
        raise ParameterError(f"shift must be in [0, {stride}), got {shift}")
    last = K - L
    starts = {min(base + shift, last) for base in range(0, last + 1, stride)}
    starts |= {0, last}
    ordered = sorted(starts)
    # Coverage repair: with per-window shifts consecutive starts can drift
    # more than L apart; insert windows until every gap is <= L.
    i = 0
    while i + 1 < len(ordered):
        if ordered[i + 1] - ordered[i] > L:
            ordered.insert(i + 1, ordered[i] + L)
        else:
            i += 1
    return ordered


def make_local_maps(
    K: int, L: int, stride: int, t: int, plan: ShiftPlan
) -> list[ClipMap]:
    """Consecutive-frame windows for timestep ``t`` with the plan's shift."""
    if plan.per_clip:
        last = K - L
        starts = set()
        for i, base in enumerate(range(0, last + 1, stride)):
            starts.add(min(base + plan.shift(t, stride, i), last))
        starts |= {0, last}
        ordered = sorted(starts)
        i = 0
        while i + 1 < len(ordered):
            if ordered[i + 1] - ordered[i] > L:
                ordered.insert(i + 1, ordered[i] + L)
            else:
                i += 1
    else:
        ordered = local_starts(K, L, stride, plan.shift(t, stride))
    return [
        ClipMap(tuple(range(s, s + L)), LOCAL, i, (0, 0, PAD_REPLICATE))
        for i, s in enumerate(ordered)
    ]


def gather(z: LatentVideo, cmap: ClipMap) -> LatentVideo:
    """Extract the clip selected by ``cmap`` (padding realized on the fly)."""
    folded = cmap.fold(z.frames)
    return LatentVideo(z.data[folded])


def scatter_accumulate(
    num: np.ndarray,
    den: np.ndarray,
    clip: LatentVideo,
    cmap: ClipMap,
    w: WeightProfile,
) -> None:
    """Accumulate ``w[j] * clip[j]`` into ``num`` and ``w[j]`` into ``den``
    at each mapped real frame.  Padded indices fold onto the edge frame.

    ``num`` has the full latent shape (K,C,H,W); ``den`` has shape (K,).
    Both are mutated in place; the caller owns synchronization.
    """
    K = num.shape[0]
    if den.shape != (K,):
        raise ShapeError(f"den must have shape ({K},), got {den.shape}")
    if len(cmap) != clip.frames or len(cmap) != w.values.size:
        raise ShapeError(
            f"map length {len(cmap)}, clip frames {clip.frames} and weight "
            f"length {w.values.size} must agree"
        )
    if num.shape[1:] != clip.shape[1:]:
        raise ShapeError(
            f"frame shape mismatch: accumulator {num.shape[1:]} vs clip "
            f"{clip.shape[1:]}"
        )
    folded = cmap.fold(K)
    wv = w.values.astype(num.dtype)
    np.add.at(num, folded, wv[:, None, None, None] * clip.data)
    np.add.at(den, folded, wv)
