"""Initial-latent construction: tiled noise with windowed frame shuffling,
then a 3-D spectral blend that keeps the low frequencies of the shuffled
latent and takes high frequencies from an independent Gaussian draw.

The spectral blend transforms over (frames, height, width) per channel.
Masks are built conjugate-symmetric so real inputs come back real up to
floating-point residue; the transform runs in float64 internally and the
result is cast back to float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, ParameterError, ShapeError
from .latent import LatentVideo

GAUSSIAN_LP = "gaussian"
IDEAL_BOX_LP = "ideal_box"
ALL_PASS = "all_pass"
ALL_STOP = "all_stop"

FILTER_KINDS = (GAUSSIAN_LP, IDEAL_BOX_LP, ALL_PASS, ALL_STOP)

IMAG_RESIDUE_TOL = 1e-5


@dataclass(frozen=True)
class FrequencyFilter:
    """Low-pass mask over unshifted FFT bins of shape (K, H, W), applied
    per channel.  Values lie in [0, 1] and the mask is symmetric under
    frequency conjugation."""

    mask: np.ndarray
    kind: str
    cutoff: float

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=np.float64)
        if m.ndim != 3:
            raise ShapeError(f"mask must be 3-D (K,H,W), got shape {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise ParameterError("mask values must lie in [0, 1]")
        conj = m
        for ax in range(3):
            conj = np.roll(np.flip(conj, axis=ax), 1, axis=ax)
        if not np.allclose(m, conj, atol=1e-12):
            raise ParameterError("mask is not conjugate-symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)


def make_lpf(shape: tuple[int, int, int], kind: str, cutoff: float = 0.25) -> FrequencyFilter:
    """Build a low-pass mask over normalized frequencies in [-0.5, 0.5).

    gaussian:  exp(-||f||^2 / (2 cutoff^2)) on the 3-D frequency radius
    ideal_box: 1 where max-axis |f| <= cutoff
    all_pass / all_stop: constant 1 / 0
    """
    if len(shape) != 3 or any(s < 1 for s in shape):
        raise ShapeError(f"filter shape must be 3 positive extents, got {shape}")
    if kind not in FILTER_KINDS:
        raise ParameterError(f"unknown filter kind {kind!r}; expected {FILTER_KINDS}")
    if not 0.0 < cutoff <= 0.5:
        raise ParameterError(f"cutoff must be in (0, 0.5], got {cutoff}")
    K, H, W = shape
    ft, fh, fw = np.meshgrid(
        np.fft.fftfreq(K), np.fft.fftfreq(H), np.fft.fftfreq(W), indexing="ij"
    )
    if kind == GAUSSIAN_LP:
        r2 = ft**2 + fh**2 + fw**2
        mask = np.exp(-r2 / (2.0 * cutoff**2))
    elif kind == IDEAL_BOX_LP:
        linf = np.maximum(np.abs(ft), np.maximum(np.abs(fh), np.abs(fw)))
        mask = (linf <= cutoff).astype(np.float64)
    elif kind == ALL_PASS:
        mask = np.ones(shape)
    else:
        mask = np.zeros(shape)
    return FrequencyFilter(mask, kind, cutoff)


@dataclass(frozen=True)
class NoiseInit:
    """Seeded noise sources for initialization: a short unit to tile and
    shuffle, plus an independent full-length draw for high frequencies."""

    eps_unit: LatentVideo
    eta: LatentVideo
    seed: int
    shuffle_window: int

    def __post_init__(self):
        if self.shuffle_window < 1:
            raise ParameterError("shuffle_window must be >= 1")
        if self.eps_unit.frames != self.shuffle_window:
            raise ShapeError(
                f"eps_unit has {self.eps_unit.frames} frames, expected "
                f"shuffle_window={self.shuffle_window}"
            )
        if self.eps_unit.shape[1:] != self.eta.shape[1:]:
            raise ShapeError("eps_unit and eta frame shapes must match")

    @classmethod
    def sample(
        cls, K: int, frame_shape: tuple[int, int, int], seed: int, shuffle_window: int
    ) -> "NoiseInit":
        """Draw both sources from independent sub-streams of ``seed``."""
        unit_rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0])
        eta_rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 1])
        eps_unit = LatentVideo.standard_normal((shuffle_window,) + frame_shape, unit_rng)
        eta = LatentVideo.standard_normal((K,) + frame_shape, eta_rng)
        return cls(eps_unit, eta, seed, shuffle_window)


def local_noise_shuffle(init: NoiseInit, K: int) -> LatentVideo:
    """Tile the noise unit out to K frames, then permute frame order inside
    each consecutive window of ``shuffle_window`` frames (seeded, one
    permutation per window).  Frame multisets per window are preserved."""
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    sw = init.shuffle_window
    tiled = init.eps_unit.data[np.arange(K) % sw]
    out = tiled.copy()
    for w, start in enumerate(range(0, K, sw)):
        stop = min(start + sw, K)
        rng = np.random.default_rng([init.seed & 0xFFFFFFFFFFFFFFFF, 2, w])
        perm = rng.permutation(stop - start)
        out[start:stop] = tiled[start:stop][perm]
    return LatentVideo(out)


def frequency_fuse(
    z_T: LatentVideo, eta: LatentVideo, filt: FrequencyFilter
) -> LatentVideo:
    """Spectral blend: IFFT3D(FFT3D(z_T)*H + FFT3D(eta)*(1-H)) per channel.

    All-pass and all-stop masks short-circuit to exact copies of the
    corresponding input.  The imaginary residue left after masking must
    stay below ``IMAG_RESIDUE_TOL`` or the mask is considered asymmetric.
    """
    if z_T.shape != eta.shape:
        raise ShapeError(f"shape mismatch: {z_T.shape} vs {eta.shape}")
    K, C, H, W = z_T.shape
    if filt.mask.shape != (K, H, W):
        raise ShapeError(
            f"filter shape {filt.mask.shape} does not match latent (K,H,W) "
            f"({K}, {H}, {W})"
        )
    if filt.kind == ALL_PASS:
        return LatentVideo(z_T.data.copy())
    if filt.kind == ALL_STOP:
        return LatentVideo(eta.data.copy())
    axes = (0, 2, 3)
    mask = filt.mask[:, None, :, :]
    zf = np.fft.fftn(z_T.data.astype(np.float64), axes=axes)
    ef = np.fft.fftn(eta.data.astype(np.float64), axes=axes)
    mixed = np.fft.ifftn(zf * mask + ef * (1.0 - mask), axes=axes)
    residue = float(np.abs(mixed.imag).max())
    if residue > IMAG_RESIDUE_TOL:
        raise NumericError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL}; "
            "filter mask is not conjugate-symmetric"
        )
    return LatentVideo(mixed.real.astype(np.float32))
