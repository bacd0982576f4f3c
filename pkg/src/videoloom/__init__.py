"""Sliding-window latent diffusion orchestration for long video sequences.

The engine splits a long latent video into short clips along two
complementary samplings (dilated long-range clips and randomly shifted
consecutive windows), denoises every clip with a pluggable noise
predictor, fuses the results back by weighted least squares with an
annealed global/local blend, and optionally refines each step's output
with an analytic motion-consistency gradient.  Initial noise is built by
windowed frame shuffling plus a 3-D spectral blend with fresh noise.

Everything is verifiable at desk scale: analytic reference denoisers,
brute-force fusion solvers, and finite-difference gradient oracles ship
with the package (see ``videoloom.selfcheck`` and the ``check`` CLI).
"""

from .exceptions import (
    BridgeError,
    ConfigError,
    CoverageError,
    DenoiserError,
    FormatError,
    NumericError,
    ParameterError,
    ScheduleError,
    ShapeError,
    VideoloomError,
)
from .latent import (
    DenoisePrediction,
    DenoiseSchedule,
    LatentVideo,
    alpha_schedule,
    ddim_step,
    predict_z0,
    renoise,
)
from .clips import (
    ClipMap,
    ShiftPlan,
    WeightProfile,
    clip_weights,
    gather,
    local_starts,
    make_global_maps,
    make_local_maps,
    scatter_accumulate,
)
from .fusion import (
    AnnealParams,
    FusedStep,
    annealing_gamma,
    brute_force_fuse,
    fuse_path,
    glcd_fuse,
    path_residual,
)
from .noise import (
    FrequencyFilter,
    NoiseInit,
    frequency_fuse,
    local_noise_shuffle,
    make_lpf,
)
from .motion import (
    LossReport,
    MotionVectors,
    VmcrParams,
    freq_loss,
    motion_loss,
    motion_loss_grad,
    motion_vectors,
    pixel_loss,
    vmcr_refine,
    wrap_angle,
)
from .denoisers import (
    AnchorKV,
    AnchorStore,
    AttentionParams,
    Denoiser,
    DenoiserCapabilities,
    DenoiseRequest,
    LinearGaussianDenoiser,
    SeededNoisyDenoiser,
    ToyAttentionDenoiser,
    ZeroDenoiser,
    blend_anchor_kv,
    make_denoiser,
    toy_attention_forward,
)
from .pipeline import (
    PipelineConfig,
    PipelineState,
    RunResult,
    StepReport,
    diagnostics,
    initial_latent,
    make_state,
    run,
    step,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
