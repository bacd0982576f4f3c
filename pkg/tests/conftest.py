"""Shared test oracles, all independent of the production code paths they
check: dense least-squares fusion, a float64 motion-loss restatement, and
small helpers for random geometry."""

import math

import numpy as np

from videoloom import clips as cp


def dense_lsq_fuse(clips, maps, weights, gamma, K):
    """Stack every weighted clip equation into one lstsq system (shared
    coefficients across pixels, one RHS column per pixel)."""
    frame_shape = clips[0].shape[1:]
    n_px = int(np.prod(frame_shape))
    rows = sum(len(m) for m in maps)
    A = np.zeros((rows, K))
    B = np.zeros((rows, n_px))
    r = 0
    for clip, cmap, w in zip(clips, maps, weights):
        scale = math.sqrt(gamma) if cmap.path == cp.GLOBAL else math.sqrt(1.0 - gamma)
        folded = cmap.fold(K)
        for j in range(len(cmap)):
            wj = scale * float(w.values[j])
            A[r, folded[j]] = wj
            B[r] = wj * clip.data[j].astype(np.float64).ravel()
            r += 1
    sol, *_ = np.linalg.lstsq(A, B, rcond=None)
    return sol.reshape((K,) + frame_shape)


def ref_motion_loss(z, eps, abar_t, lambda_f=0.2, lambda_mse=0.001,
                    lambda_phase=1.0, guard=1e-8):
    """Float64 restatement of the composite motion loss from raw arrays."""
    z = np.asarray(z, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    z0 = (z - math.sqrt(1.0 - abar_t) * eps) / math.sqrt(abar_t)
    deltas = np.diff(z0, axis=0)
    total = 0.0
    for i in range(deltas.shape[0] - 1):
        u, v = deltas[i], deltas[i + 1]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu >= guard and nv >= guard:
            total += 1.0 - float(u.ravel() @ v.ravel()) / (nu * nv)
        total += lambda_mse * float(np.sum((u - v) ** 2))
        U = np.fft.fft2(u, axes=(-2, -1))
        V = np.fft.fft2(v, axes=(-2, -1))
        amp = float(np.sum(np.abs(np.abs(U) - np.abs(V))))
        dphi = np.angle(U) - np.angle(V)
        dphi = np.mod(dphi + np.pi, 2 * np.pi) - np.pi
        total += lambda_f * (amp + lambda_phase * float(np.sum(np.abs(dphi))))
    return total


def random_dual_path_instance(rng, K_max=32, L_max=8):
    """Random latent geometry with clips on both paths and random values."""
    from videoloom import LatentVideo

    K = int(rng.integers(2, K_max + 1))
    L = int(rng.integers(1, min(L_max, K) + 1))
    d = int(rng.integers(math.ceil(K / L), math.ceil(K / L) + 2))
    stride = int(rng.integers(1, L + 1))
    C = int(rng.integers(1, 3))
    shape = (K, C, 4, 4)
    gmaps = cp.make_global_maps(K, L, d)
    lmaps = cp.make_local_maps(
        K, L, stride, int(rng.integers(0, 1000)),
        cp.ShiftPlan(int(rng.integers(0, 2**62))),
    )
    maps = gmaps + lmaps
    clips = [
        LatentVideo(rng.standard_normal((L,) + shape[1:]).astype(np.float32))
        for _ in maps
    ]
    return K, L, maps, clips
