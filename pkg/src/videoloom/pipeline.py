"""End-to-end denoising loop.

Per run: draw seeded noise, shuffle and spectrally blend it into the
initial latent, then walk the DDIM schedule.  Each timestep gathers
dilated (long-range) clips and shifted consecutive windows, denoises every
clip, collapses each path by weighted averaging, blends the two paths with
the annealed coefficient, and optionally applies a motion-consistency
gradient step to the fused latent.

Clips are processed in a fixed order; every random draw is keyed on the
run seed, so identical configurations reproduce bit-identical results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import clips as cp
from .denoisers import (
    DENOISER_NAMES,
    AnchorStore,
    Denoiser,
    DenoiseRequest,
    make_denoiser,
)
from .exceptions import ConfigError, DenoiserError, ParameterError
from .fusion import AnnealParams, annealing_gamma, fuse_path, glcd_fuse, path_residual
from .latent import (
    DenoisePrediction,
    DenoiseSchedule,
    LatentVideo,
    alpha_schedule,
    ddim_step,
)
from .motion import LossReport, VmcrParams, vmcr_refine
from .noise import (
    FILTER_KINDS,
    NoiseInit,
    frequency_fuse,
    local_noise_shuffle,
    make_lpf,
)

ABAM_MODES = ("off", "local", "both")


@dataclass
class PipelineConfig:
    """Every knob of the engine.  Unset stride and shuffle_window resolve
    from the clip length (stride = L // 2, shuffle_window = L)."""

    # geometry
    frames: int = 24            # K
    channels: int = 2
    height: int = 8
    width: int = 8
    clip_length: int = 8        # L
    dilation: int = 3           # d, also the number of dilated clips
    stride: int | None = None
    max_padded_frames: int = 4096

    # schedule
    num_steps: int = 50         # T, visited DDIM steps
    base_timesteps: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012

    # run
    seed: int = 0
    denoiser: str = "zero"
    conditioning: str = ""

    # path blending
    gamma0: float = 0.005
    beta_anneal: float = 0.0005
    force_gamma: float | None = None
    weight_profile: str = cp.UNIFORM

    # anchor attention
    abam: str = "local"
    anchor_lambda: float = 0.1

    # motion refinement
    enable_vmcr: bool = True
    lambda_f: float = 0.2
    lambda_mse: float = 0.001
    lambda_phase: float = 1.0
    omega_motion: float = 2e-5
    n_iters: int = 1

    # noise reinitialization
    enable_shuffle: bool = True
    enable_freq: bool = True
    filter_kind: str = "gaussian"
    filter_cutoff: float = 0.25
    shuffle_window: int | None = None
    per_clip_shift: bool = False

    # denoiser knobs
    denoiser_mu: float = 0.0
    denoiser_sigma: float = 1.0
    noise_scale: float = 0.05
    bridge_endpoint: str = ""

    def __post_init__(self):
        if self.stride is None:
            self.stride = max(1, self.clip_length // 2)
        if self.shuffle_window is None:
            self.shuffle_window = self.clip_length
        self.validate()

    def validate(self):
        c = self
        checks = [
            (c.frames >= 1, "frames", "must be >= 1"),
            (c.channels >= 1, "channels", "must be >= 1"),
            (c.height >= 1, "height", "must be >= 1"),
            (c.width >= 1, "width", "must be >= 1"),
            (1 <= c.clip_length <= c.frames, "clip_length",
             f"must be in [1, frames={c.frames}]"),
            (c.dilation >= 1, "dilation", "must be >= 1"),
            (c.dilation * c.clip_length >= c.frames, "dilation",
             "dilation * clip_length must cover all frames"),
            (1 <= c.stride <= c.clip_length, "stride",
             f"must be in [1, clip_length={c.clip_length}]"),
            (1 <= c.num_steps <= c.base_timesteps, "num_steps",
             f"must be in [1, base_timesteps={c.base_timesteps}]"),
            (0.0 < c.beta_start <= c.beta_end < 1.0, "beta_start",
             "need 0 < beta_start <= beta_end < 1"),
            (0.0 < c.gamma0 <= 1.0, "gamma0", "must be in (0, 1]"),
            (c.beta_anneal >= 0.0, "beta_anneal", "must be >= 0"),
            (c.force_gamma is None or 0.0 <= c.force_gamma <= 1.0,
             "force_gamma", "must be in [0, 1]"),
            (c.weight_profile in (cp.UNIFORM, cp.TRIANGULAR), "weight_profile",
             f"must be one of {(cp.UNIFORM, cp.TRIANGULAR)}"),
            (c.abam in ABAM_MODES, "abam", f"must be one of {ABAM_MODES}"),
            (0.0 <= c.anchor_lambda <= 1.0, "anchor_lambda", "must be in [0, 1]"),
            (c.lambda_f >= 0, "lambda_f", "must be >= 0"),
            (c.lambda_mse >= 0, "lambda_mse", "must be >= 0"),
            (c.lambda_phase >= 0, "lambda_phase", "must be >= 0"),
            (c.omega_motion >= 0, "omega_motion", "must be >= 0"),
            (c.n_iters >= 0, "n_iters", "must be >= 0"),
            (not c.enable_vmcr or c.frames >= 3, "enable_vmcr",
             "needs at least 3 frames"),
            (c.filter_kind in FILTER_KINDS, "filter_kind",
             f"must be one of {FILTER_KINDS}"),
            (0.0 < c.filter_cutoff <= 0.5, "filter_cutoff", "must be in (0, 0.5]"),
            (c.shuffle_window >= 1, "shuffle_window", "must be >= 1"),
            (c.denoiser in DENOISER_NAMES, "denoiser",
             f"must be one of {DENOISER_NAMES}"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"invalid value for {key}: {msg}")

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def vmcr_params(self) -> VmcrParams:
        return VmcrParams(
            lambda_f=self.lambda_f,
            lambda_mse=self.lambda_mse,
            lambda_phase=self.lambda_phase,
            omega_motion=self.omega_motion,
            n_iters=self.n_iters,
        )

    def anneal_params(self) -> AnnealParams:
        return AnnealParams(self.gamma0, self.beta_anneal)

    def schedule(self) -> DenoiseSchedule:
        table = alpha_schedule(self.base_timesteps, self.beta_start, self.beta_end)
        return table.with_steps(self.num_steps)


@dataclass(frozen=True)
class StepReport:
    t_from: int
    t_to: int
    gamma: float
    residual_global: float
    residual_local: float
    vmcr: LossReport | None
    wall_time_s: float


@dataclass(frozen=True)
class RunResult:
    z0: LatentVideo
    reports: tuple[StepReport, ...]
    seed: int


@dataclass
class PipelineState:
    """Mutable loop state owned by a single driver."""

    cfg: PipelineConfig
    sched: DenoiseSchedule
    z: LatentVideo
    plan: cp.ShiftPlan
    weights: cp.WeightProfile
    global_maps: list[cp.ClipMap]
    anchors: AnchorStore = field(default_factory=AnchorStore)
    last_report: StepReport | None = None


def initial_latent(cfg: PipelineConfig) -> tuple[LatentVideo, NoiseInit]:
    """Construct the starting latent per the reinitialization flags."""
    init = NoiseInit.sample(cfg.frames, cfg.frame_shape, cfg.seed, cfg.shuffle_window)
    if cfg.enable_shuffle:
        z = local_noise_shuffle(init, cfg.frames)
    else:
        rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0])
        z = LatentVideo.standard_normal((cfg.frames,) + cfg.frame_shape, rng)
    if cfg.enable_freq:
        filt = make_lpf(
            (cfg.frames, cfg.height, cfg.width), cfg.filter_kind, cfg.filter_cutoff
        )
        z = frequency_fuse(z, init.eta, filt)
    return z, init


def make_state(cfg: PipelineConfig) -> PipelineState:
    z, _ = initial_latent(cfg)
    return PipelineState(
        cfg=cfg,
        sched=cfg.schedule(),
        z=z,
        plan=cp.ShiftPlan(cfg.seed, per_clip=cfg.per_clip_shift),
        weights=cp.clip_weights(cfg.clip_length, cfg.weight_profile),
        global_maps=cp.make_global_maps(
            cfg.frames, cfg.clip_length, cfg.dilation, cfg.max_padded_frames
        ),
    )


def _denoise_clip(
    denoiser: Denoiser, clip: LatentVideo, t: int, cmap: cp.ClipMap, cfg, anchor
) -> DenoisePrediction:
    req = DenoiseRequest(clip, t, cfg.conditioning, cmap.clip_id, cmap.path, anchor)
    try:
        pred = denoiser.denoise(req)
    except Exception as e:
        raise DenoiserError(
            f"denoiser failed at t={t}, path={cmap.path}, clip={cmap.clip_id}: {e}"
        ) from e
    if pred.eps.shape != clip.shape:
        raise DenoiserError(
            f"denoiser returned shape {pred.eps.shape} for clip shape "
            f"{clip.shape} at t={t}, clip={cmap.clip_id}"
        )
    return pred


def _denoise_path(
    state: PipelineState, maps: list[cp.ClipMap], t_from: int, t_to: int,
    denoiser: Denoiser,
) -> tuple[LatentVideo, float]:
    cfg = state.cfg
    path = maps[0].path
    use_anchor = (
        denoiser.capabilities.exposes_attention
        and cfg.abam != "off"
        and (cfg.abam == "both" or path == cp.LOCAL)
        and len(maps) > 1
    )
    if use_anchor:
        state.anchors.capture(
            t_from, path, denoiser.capture_anchor(cp.gather(state.z, maps[0]))
        )
    stepped = []
    for cmap in maps:
        clip = cp.gather(state.z, cmap)
        anchor = None
        if use_anchor and cmap.clip_id > 0:
            anchor = state.anchors.get(t_from, path)
        pred = _denoise_clip(denoiser, clip, t_from, cmap, cfg, anchor)
        stepped.append(ddim_step(clip, pred, t_from, t_to, state.sched))
    weights = [state.weights] * len(maps)
    fused = fuse_path(stepped, maps, weights, cfg.frames)
    residual = path_residual(fused, stepped, maps, weights)
    return fused, residual


def _tiled_eps(
    state: PipelineState, maps: list[cp.ClipMap], t: int, denoiser: Denoiser
) -> LatentVideo:
    """Full-sequence noise prediction assembled from per-window calls,
    averaged with unit weights where windows overlap."""
    cfg = state.cfg
    preds = []
    for cmap in maps:
        clip = cp.gather(state.z, cmap)
        preds.append(_denoise_clip(denoiser, clip, t, cmap, cfg, None).eps)
    unit = cp.clip_weights(cfg.clip_length, cp.UNIFORM)
    return fuse_path(preds, maps, [unit] * len(maps), cfg.frames)


def step(
    state: PipelineState, t_from: int, t_to: int, denoiser: Denoiser
) -> PipelineState:
    """Advance the latent one schedule transition in place."""
    cfg = state.cfg
    t0 = time.perf_counter()

    g_latent, g_res = _denoise_path(state, state.global_maps, t_from, t_to, denoiser)
    l_maps = cp.make_local_maps(
        cfg.frames, cfg.clip_length, cfg.stride, t_from, state.plan
    )
    l_latent, l_res = _denoise_path(state, l_maps, t_from, t_to, denoiser)

    if cfg.force_gamma is not None:
        gamma = cfg.force_gamma
    else:
        gamma = annealing_gamma(t_from, cfg.anneal_params())
    fused = glcd_fuse(g_latent, l_latent, gamma, (g_res, l_res))
    state.z = fused.latent

    vmcr_report = None
    if cfg.enable_vmcr and cfg.n_iters > 0:
        eps_full = _tiled_eps(state, l_maps, t_to, denoiser)
        state.z, vmcr_report = vmcr_refine(
            state.z, DenoisePrediction(eps_full, t_to), t_to, state.sched,
            cfg.vmcr_params(),
        )

    state.last_report = StepReport(
        t_from, t_to, gamma, g_res, l_res, vmcr_report,
        time.perf_counter() - t0,
    )
    return state


def diagnostics(state: PipelineState) -> StepReport:
    """Latest step report (pure read)."""
    if state.last_report is None:
        raise ParameterError("no step has run yet")
    return state.last_report


def run(cfg: PipelineConfig, denoiser: Denoiser | None = None) -> RunResult:
    """Execute the full denoising loop and return the final latent with
    one report per schedule transition.  On failure the raised error
    carries the reports accumulated so far in ``partial_reports``."""
    state = make_state(cfg)
    own_denoiser = denoiser is None
    if denoiser is None:
        denoiser = make_denoiser(
            cfg.denoiser,
            state.sched,
            seed=cfg.seed,
            mu=cfg.denoiser_mu,
            sigma=cfg.denoiser_sigma,
            noise_scale=cfg.noise_scale,
            anchor_lambda=cfg.anchor_lambda,
            bridge_endpoint=cfg.bridge_endpoint or None,
        )
    reports: list[StepReport] = []
    try:
        for t_from, t_to in state.sched.transitions():
            step(state, t_from, t_to, denoiser)
            reports.append(state.last_report)
    except Exception as e:
        e.partial_reports = tuple(reports)
        raise
    finally:
        if own_denoiser:
            denoiser.close()
    return RunResult(state.z, tuple(reports), cfg.seed)
