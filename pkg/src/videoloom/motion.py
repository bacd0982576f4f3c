"""Motion-consistency refinement of a latent by gradient descent.

The refiner looks at the current estimate of the fully denoised video,
forms frame-to-frame difference vectors, and penalizes disagreement
between adjacent difference vectors in two ways:

* pixel domain: (1 - cosine similarity) plus a small squared-error term;
* frequency domain: L1 distance of 2-D FFT amplitudes plus L1 distance of
  wrapped phase angles, per channel.

The gradient with respect to the latent is analytic.  The denoised
estimate is affine in the latent when the noise prediction is held fixed,
so the chain rule passes through the frame differences, the cosine and
squared-norm terms, and the FFT amplitude/phase terms.  Internals run in
float64; returned tensors are float32.

All losses are sums, not means, so the descent step size scales with
instance size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NumericError, ParameterError
from .latent import DenoisePrediction, DenoiseSchedule, LatentVideo, predict_z0


@dataclass(frozen=True)
class VmcrParams:
    lambda_f: float = 0.2        # frequency loss weight
    lambda_mse: float = 0.001    # squared-error weight inside the pixel loss
    lambda_phase: float = 1.0    # phase weight inside the frequency loss
    omega_motion: float = 2e-5   # gradient step size
    n_iters: int = 1
    eps_guard: float = 1e-8      # cosine terms vanish below this delta norm
    wrap_phase: bool = True      # False keeps raw angle differences

    def __post_init__(self):
        for name in ("lambda_f", "lambda_mse", "lambda_phase", "omega_motion"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.n_iters < 0:
            raise ParameterError("n_iters must be >= 0")
        if self.eps_guard <= 0:
            raise ParameterError("eps_guard must be > 0")


@dataclass(frozen=True)
class MotionVectors:
    """Adjacent-frame differences of the denoised estimate: K-1 tensors of
    frame shape (C, H, W)."""

    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas)
        if d.ndim != 4 or d.shape[0] < 1:
            raise ParameterError("deltas must be a non-empty (K-1,C,H,W) stack")
        if not np.isfinite(d).all():
            raise NumericError("motion vectors contain NaN or Inf")
        object.__setattr__(self, "deltas", d)

    def __len__(self) -> int:
        return self.deltas.shape[0]


@dataclass(frozen=True)
class LossReport:
    total: float
    pixel: float
    freq: float
    amplitude: float
    phase: float
    grad_norm: float = 0.0

    def __post_init__(self):
        vals = (self.total, self.pixel, self.freq, self.amplitude,
                self.phase, self.grad_norm)
        if not all(math.isfinite(v) for v in vals):
            raise NumericError(f"loss report contains non-finite values: {vals}")


def motion_vectors(z0_hat: LatentVideo) -> MotionVectors:
    """delta_i = frame(i+1) - frame(i) in float64."""
    if z0_hat.frames < 2:
        raise ParameterError(f"need at least 2 frames, got {z0_hat.frames}")
    d = np.diff(z0_hat.data.astype(np.float64), axis=0)
    return MotionVectors(d)


def wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    out = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out


def _pair_iter(deltas: np.ndarray):
    for i in range(deltas.shape[0] - 1):
        yield i, deltas[i], deltas[i + 1]


def pixel_loss(mv: MotionVectors, p: VmcrParams) -> float:
    """Sum over adjacent delta pairs of (1 - cos) + lambda_mse * ||diff||^2.

    Cosines are taken over flattened frames; a pair whose either member has
    norm below ``eps_guard`` contributes nothing to the cosine part.
    """
    if len(mv) < 2:
        raise ParameterError("pixel loss needs at least 2 motion vectors")
    total = 0.0
    for _, u, v in _pair_iter(mv.deltas):
        uf, vf = u.ravel(), v.ravel()
        nu, nv = np.linalg.norm(uf), np.linalg.norm(vf)
        if nu >= p.eps_guard and nv >= p.eps_guard:
            total += 1.0 - float(uf @ vf) / (nu * nv)
        total += p.lambda_mse * float(np.sum((uf - vf) ** 2))
    return total


def freq_loss(mv: MotionVectors, p: VmcrParams) -> tuple[float, float]:
    """(amplitude, phase) sums over adjacent delta pairs, 2-D FFT over
    (H, W) per channel.  Phase differences are wrapped into (-pi, pi]
    unless ``wrap_phase`` is off."""
    if len(mv) < 2:
        raise ParameterError("frequency loss needs at least 2 motion vectors")
    amp = 0.0
    phase = 0.0
    for _, u, v in _pair_iter(mv.deltas):
        U = np.fft.fft2(u, axes=(-2, -1))
        V = np.fft.fft2(v, axes=(-2, -1))
        amp += float(np.sum(np.abs(np.abs(U) - np.abs(V))))
        dphi = np.angle(U) - np.angle(V)
        if p.wrap_phase:
            dphi = wrap_angle(dphi)
        phase += float(np.sum(np.abs(dphi)))
    return amp, phase


def motion_loss(mv: MotionVectors, p: VmcrParams) -> LossReport:
    """Composite loss: pixel + lambda_f * (amplitude + lambda_phase * phase)."""
    px = pixel_loss(mv, p)
    amp, ph = freq_loss(mv, p)
    freq = amp + p.lambda_phase * ph
    return LossReport(px + p.lambda_f * freq, px, freq, amp, ph)


def _grad_wrt_deltas(deltas: np.ndarray, p: VmcrParams) -> np.ndarray:
    """Gradient of the composite loss with respect to each delta tensor."""
    g = np.zeros_like(deltas)
    n_spatial = deltas.shape[-2] * deltas.shape[-1]
    for i, u, v in _pair_iter(deltas):
        uf, vf = u.ravel(), v.ravel()
        nu, nv = np.linalg.norm(uf), np.linalg.norm(vf)

        # pixel: d(1 - cos)/du = dot*u/(nu^3 nv) - v/(nu nv), symmetric in v
        if nu >= p.eps_guard and nv >= p.eps_guard:
            dot = float(uf @ vf)
            g[i] += (dot * u / (nu**3 * nv) - v / (nu * nv))
            g[i + 1] += (dot * v / (nv**3 * nu) - u / (nu * nv))

        # pixel: lambda_mse * ||u - v||^2
        diff = 2.0 * p.lambda_mse * (u - v)
        g[i] += diff
        g[i + 1] -= diff

        # frequency terms, per channel 2-D FFT; bins below the guard have
        # numerically meaningless direction/angle, so their subgradient is 0
        U = np.fft.fft2(u, axes=(-2, -1))
        V = np.fft.fft2(v, axes=(-2, -1))
        absU, absV = np.abs(U), np.abs(V)
        okU, okV = absU > p.eps_guard, absV > p.eps_guard
        s = np.sign(absU - absV)
        gU = p.lambda_f * s * np.divide(
            U, absU, out=np.zeros_like(U), where=okU
        )
        gV = -p.lambda_f * s * np.divide(
            V, absV, out=np.zeros_like(V), where=okV
        )
        if p.lambda_phase > 0:
            dphi = np.angle(U) - np.angle(V)
            if p.wrap_phase:
                dphi = wrap_angle(dphi)
            sphi = np.sign(dphi)
            coef = p.lambda_f * p.lambda_phase * sphi
            gU += coef * 1j * np.divide(
                U, absU**2, out=np.zeros_like(U), where=okU
            )
            gV += -coef * 1j * np.divide(
                V, absV**2, out=np.zeros_like(V), where=okV
            )
        # adjoint of the real-input FFT: grad_u = N * Re(ifft2(gU))
        g[i] += n_spatial * np.fft.ifft2(gU, axes=(-2, -1)).real
        g[i + 1] += n_spatial * np.fft.ifft2(gV, axes=(-2, -1)).real
    return g


def _deltas_to_frames(g_delta: np.ndarray, K: int) -> np.ndarray:
    """Adjoint of the frame-difference map: grad_frame[f] = g[f-1] - g[f]."""
    g_frames = np.zeros((K,) + g_delta.shape[1:], dtype=g_delta.dtype)
    g_frames[1:] += g_delta
    g_frames[:-1] -= g_delta
    return g_frames


def motion_loss_grad(
    z_t: LatentVideo,
    pred: DenoisePrediction,
    t: int,
    sched: DenoiseSchedule,
    p: VmcrParams,
) -> LatentVideo:
    """Analytic gradient of the composite loss with respect to ``z_t``.

    The noise prediction is held fixed, so the denoised estimate is affine
    in ``z_t`` with elementwise factor 1/sqrt(abar_t).
    """
    if z_t.frames < 3:
        raise ParameterError(f"need at least 3 frames, got {z_t.frames}")
    z0 = predict_z0(z_t, pred, t, sched)
    mv = motion_vectors(z0)
    g_delta = _grad_wrt_deltas(mv.deltas, p)
    g_frames = _deltas_to_frames(g_delta, z_t.frames)
    grad = g_frames / math.sqrt(sched.abar(t))
    if not np.isfinite(grad).all():
        raise NumericError(f"non-finite motion gradient at t={t}")
    return LatentVideo(grad.astype(np.float32))


def vmcr_refine(
    z: LatentVideo,
    pred: DenoisePrediction,
    t: int,
    sched: DenoiseSchedule,
    p: VmcrParams,
) -> tuple[LatentVideo, LossReport]:
    """Run ``n_iters`` gradient steps z <- z - omega * grad and return the
    refined latent with the post-update loss report."""
    grad_norm = 0.0
    for _ in range(p.n_iters):
        grad = motion_loss_grad(z, pred, t, sched, p)
        grad_norm = float(np.linalg.norm(grad.data))
        z = LatentVideo(z.data - np.float32(p.omega_motion) * grad.data)
    z0 = predict_z0(z, pred, t, sched)
    report = motion_loss(motion_vectors(z0), p)
    if not math.isfinite(report.total):
        raise NumericError(f"motion loss diverged at t={t}")
    return z, replace(report, grad_norm=grad_norm)
