"""Pluggable noise-prediction contract plus built-in reference denoisers.

The engine never touches model internals: a denoiser receives a clip, a
timestep, and opaque conditioning, and returns a noise prediction of the
same shape.  The built-ins exist so every orchestration mechanism can be
exercised and verified at desk scale:

* ``zero``            -- predicts no noise; DDIM reduces to pure rescaling.
* ``linear_gaussian`` -- exact posterior-mean prediction when the clean
                         data is i.i.d. Gaussian; lets full trajectories
                         be checked against closed-form behavior.
* ``seeded_noisy``    -- zero plus a seeded Gaussian perturbation, for
                         determinism and diagnostics tests.
* ``toy_attention``   -- a one-head attention block over frames so the
                         anchor key/value blending path runs end to end.
                         Not a generative model.

Anchored attention: the first clip of a path donates its key/value tokens
at each timestep; later clips blend their own tokens toward the anchor's.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .clips import GLOBAL, LOCAL
from .exceptions import DenoiserError, ParameterError, ShapeError
from .latent import DenoisePrediction, DenoiseSchedule, LatentVideo


@dataclass(frozen=True)
class DenoiserCapabilities:
    concurrent_safe: bool = False
    deterministic: bool = False
    exposes_attention: bool = False


@dataclass(frozen=True)
class AnchorKV:
    """Key/value tokens captured from a path's first clip, one row per
    frame position, plus the blend factor (1 keeps the original tokens,
    0 replaces them with the anchor's)."""

    k: np.ndarray
    v: np.ndarray
    lam: float = 0.1

    def __post_init__(self):
        if self.k.shape != self.v.shape:
            raise ShapeError(
                f"anchor K shape {self.k.shape} != V shape {self.v.shape}"
            )
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class DenoiseRequest:
    clip: LatentVideo
    t: int
    conditioning: str = ""
    clip_id: int = 0
    path: str = LOCAL
    anchor_kv: AnchorKV | None = None


class Denoiser(ABC):
    """Noise-prediction contract: same-shape eps for a clip at a timestep."""

    capabilities = DenoiserCapabilities()

    @abstractmethod
    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        ...

    def close(self):
        pass


def blend_anchor_kv(
    k_orig: np.ndarray, v_orig: np.ndarray, anchor: AnchorKV
) -> tuple[np.ndarray, np.ndarray]:
    """K = lam*K_orig + (1-lam)*K_anchor, likewise for V."""
    if k_orig.shape != anchor.k.shape or v_orig.shape != anchor.v.shape:
        raise ShapeError(
            f"token shapes {k_orig.shape}/{v_orig.shape} do not match anchor "
            f"{anchor.k.shape}"
        )
    lam = anchor.lam
    return (
        lam * k_orig + (1.0 - lam) * anchor.k,
        lam * v_orig + (1.0 - lam) * anchor.v,
    )


@dataclass(frozen=True)
class AttentionParams:
    """Fixed single-head projections; frames are tokens, per-frame
    mean-pooled channel features are the embeddings."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    @classmethod
    def seeded(cls, channels: int, seed: int) -> "AttentionParams":
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, channels])
        scale = 1.0 / math.sqrt(channels)
        mats = [rng.standard_normal((channels, channels)) * scale for _ in range(3)]
        return cls(*mats)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def frame_tokens(clip: LatentVideo) -> np.ndarray:
    """Mean-pool each frame over (H, W): (L, C) token matrix."""
    return clip.data.mean(axis=(2, 3)).astype(np.float64)


def attention_tokens(
    clip: LatentVideo, params: AttentionParams, anchor: AnchorKV | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(output tokens, attention matrix, K tokens, V tokens) for a clip.

    With an anchor, K/V are blended toward the anchor tokens before the
    softmax; Q always comes from the clip itself.
    """
    tokens = frame_tokens(clip)
    q = tokens @ params.wq
    k = tokens @ params.wk
    v = tokens @ params.wv
    if anchor is not None:
        k, v = blend_anchor_kv(k, v, anchor)
    scores = q @ k.T / math.sqrt(tokens.shape[1])
    attn = _softmax(scores)
    return attn @ v, attn, k, v


def toy_attention_forward(
    clip: LatentVideo, params: AttentionParams, anchor: AnchorKV | None = None
) -> LatentVideo:
    """Scaled dot-product attention over frames, residual-added to the
    clip (broadcast over spatial positions)."""
    out_tokens, _, _, _ = attention_tokens(clip, params, anchor)
    return LatentVideo(clip.data + out_tokens.astype(np.float32)[:, :, None, None])


class ZeroDenoiser(Denoiser):
    """Predicts eps = 0 for every request."""

    capabilities = DenoiserCapabilities(concurrent_safe=True, deterministic=True)

    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        return DenoisePrediction(LatentVideo.zeros(req.clip.shape), req.t)


class LinearGaussianDenoiser(Denoiser):
    """Exact posterior-mean noise prediction for clean data z0 ~ N(mu, sigma^2 I):

        eps(z, t) = (z - sqrt(abar_t) * mu) * sqrt(1 - abar_t)
                    / (1 - abar_t * (1 - sigma^2))

    ``mu`` may be a scalar or a (C, H, W) array broadcast across frames.
    """

    capabilities = DenoiserCapabilities(concurrent_safe=True, deterministic=True)

    def __init__(self, sched: DenoiseSchedule, mu=0.0, sigma: float = 1.0):
        if sigma <= 0:
            raise ParameterError(f"sigma must be > 0, got {sigma}")
        self.sched = sched
        self.mu = np.asarray(mu, dtype=np.float32)
        self.sigma = float(sigma)

    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        a = self.sched.abar(req.t)
        denom = 1.0 - a * (1.0 - self.sigma**2)
        coef = np.float32(math.sqrt(1.0 - a) / denom)
        eps = coef * (req.clip.data - np.float32(math.sqrt(a)) * self.mu)
        return DenoisePrediction(LatentVideo(eps), req.t)


_PATH_CODE = {GLOBAL: 0, LOCAL: 1}


class SeededNoisyDenoiser(Denoiser):
    """Zero prediction plus a seeded Gaussian perturbation, keyed on
    (seed, timestep, clip id, path) so identical requests repeat exactly."""

    capabilities = DenoiserCapabilities(concurrent_safe=True, deterministic=True)

    def __init__(self, seed: int, scale: float = 0.05):
        self.seed = int(seed)
        self.scale = float(scale)

    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        rng = np.random.default_rng(
            [self.seed & 0xFFFFFFFFFFFFFFFF, req.t, req.clip_id,
             _PATH_CODE.get(req.path, 2)]
        )
        eps = self.scale * rng.standard_normal(req.clip.shape)
        return DenoisePrediction(LatentVideo(eps.astype(np.float32)), req.t)


class ToyAttentionDenoiser(Denoiser):
    """Noise prediction from the attention residual, so the anchor blend
    is exercised end to end.  Explicitly not a generative model."""

    capabilities = DenoiserCapabilities(
        concurrent_safe=True, deterministic=True, exposes_attention=True
    )

    def __init__(self, seed: int = 0, anchor_lambda: float = 0.1):
        if not 0.0 <= anchor_lambda <= 1.0:
            raise ParameterError(f"anchor_lambda must be in [0, 1]")
        self.seed = int(seed)
        self.anchor_lambda = float(anchor_lambda)

    def params_for(self, channels: int) -> AttentionParams:
        return AttentionParams.seeded(channels, self.seed)

    def capture_anchor(self, clip: LatentVideo) -> AnchorKV:
        params = self.params_for(clip.shape[1])
        tokens = frame_tokens(clip)
        return AnchorKV(tokens @ params.wk, tokens @ params.wv, self.anchor_lambda)

    def denoise(self, req: DenoiseRequest) -> DenoisePrediction:
        params = self.params_for(req.clip.shape[1])
        out = toy_attention_forward(req.clip, params, req.anchor_kv)
        return DenoisePrediction(LatentVideo(out.data - req.clip.data), req.t)


@dataclass
class AnchorStore:
    """Single-timestep anchor registry: capture once per (timestep, path),
    read many; capturing at a new timestep discards previous anchors."""

    _t: int | None = None
    _anchors: dict = field(default_factory=dict)

    def capture(self, t: int, path: str, kv: AnchorKV):
        if t != self._t:
            self._t = t
            self._anchors = {}
        self._anchors[path] = kv

    def get(self, t: int, path: str) -> AnchorKV:
        if t != self._t or path not in self._anchors:
            raise DenoiserError(
                f"anchor for path {path!r} requested at t={t} before capture"
            )
        return self._anchors[path]


DENOISER_NAMES = ("zero", "linear_gaussian", "seeded_noisy", "toy_attention", "bridge")


def make_denoiser(
    name: str,
    sched: DenoiseSchedule,
    seed: int = 0,
    mu=0.0,
    sigma: float = 1.0,
    noise_scale: float = 0.05,
    anchor_lambda: float = 0.1,
    bridge_endpoint: str | None = None,
) -> Denoiser:
    """Resolve a denoiser by config name."""
    if name == "zero":
        return ZeroDenoiser()
    if name == "linear_gaussian":
        return LinearGaussianDenoiser(sched, mu=mu, sigma=sigma)
    if name == "seeded_noisy":
        return SeededNoisyDenoiser(seed, scale=noise_scale)
    if name == "toy_attention":
        return ToyAttentionDenoiser(seed, anchor_lambda=anchor_lambda)
    if name == "bridge":
        from .bridge import BridgeDenoiser

        if not bridge_endpoint:
            raise ParameterError("bridge denoiser requires bridge_endpoint")
        return BridgeDenoiser(bridge_endpoint)
    raise ParameterError(f"unknown denoiser {name!r}; expected one of {DENOISER_NAMES}")
