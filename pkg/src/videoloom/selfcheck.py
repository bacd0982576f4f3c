"""Built-in invariant suites for the ``check`` CLI subcommand.

Each suite re-derives a core property from first principles at reduced
scale (dense least-squares fusion, spectral splits, finite-difference
gradients, coverage counting) and compares the production path against
it.  The pytest suite runs the same properties at full scale; these exist
so a deployed build can be probed without a test checkout.
"""

from __future__ import annotations

import math

import numpy as np

from . import clips as cp
from .fusion import annealing_gamma, AnnealParams, brute_force_fuse, fuse_path, glcd_fuse
from .latent import (
    DenoisePrediction,
    LatentVideo,
    alpha_schedule,
    ddim_step,
    predict_z0,
    renoise,
)
from .motion import VmcrParams, motion_loss_grad
from .noise import ALL_PASS, ALL_STOP, GAUSSIAN_LP, frequency_fuse, make_lpf


class CheckFailure(AssertionError):
    pass


def _expect(cond: bool, label: str, detail: str = ""):
    if not cond:
        raise CheckFailure(f"{label}: {detail}" if detail else label)


def _random_instance(rng, K_max=16, L_max=8):
    """Random dual-path clip set over a small latent."""
    K = int(rng.integers(2, K_max + 1))
    L = int(rng.integers(1, min(L_max, K) + 1))
    d = int(rng.integers(math.ceil(K / L), math.ceil(K / L) + 2))
    stride = int(rng.integers(1, L + 1))
    shape = (K, int(rng.integers(1, 3)), 4, 4)
    z = LatentVideo(rng.standard_normal(shape).astype(np.float32))
    gmaps = cp.make_global_maps(K, L, d)
    lmaps = cp.make_local_maps(K, L, stride, int(rng.integers(0, 50)),
                               cp.ShiftPlan(int(rng.integers(0, 2**31))))
    maps = gmaps + lmaps
    clips = [LatentVideo(rng.standard_normal((L,) + shape[1:]).astype(np.float32))
             for _ in maps]
    profile = cp.UNIFORM if rng.random() < 0.5 else cp.TRIANGULAR
    weights = [cp.clip_weights(L, profile) for _ in maps]
    return K, z, maps, clips, weights


def dense_lsq_fuse(clips, maps, weights, gamma: float, K: int) -> np.ndarray:
    """Reference fusion: stack every weighted clip equation into one dense
    least-squares system per pixel and solve with lstsq."""
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


def check_schedule() -> list[tuple[str, str]]:
    results = []
    sched = alpha_schedule(1000, 0.00085, 0.012)
    ab = sched.alpha_bar
    _expect(bool(np.all(np.diff(ab) < 0)), "alpha_bar strictly decreasing")
    _expect(bool(np.all((ab > 0) & (ab <= 1))), "alpha_bar in (0,1]")
    results.append(("schedule.monotone", "1000-step table decreasing in (0,1]"))

    rng = np.random.default_rng(7)
    z = LatentVideo(rng.standard_normal((3, 2, 4, 4)).astype(np.float32))
    eps = DenoisePrediction(
        LatentVideo(rng.standard_normal((3, 2, 4, 4)).astype(np.float32)), 600
    )
    same = ddim_step(z, eps, 600, 600, sched)
    _expect(np.array_equal(same.data, z.data), "ddim identity at t_to == t_from")
    z0 = predict_z0(z, eps, 600, sched)
    back = renoise(z0, eps, 600, sched)
    err = float(np.abs(back.data - z.data).max())
    _expect(err <= 1e-6, "predict_z0 round trip", f"max err {err:.2e}")
    results.append(("schedule.ddim", f"identity exact, round trip {err:.2e}"))
    return results


def check_coverage(n: int = 300) -> list[tuple[str, str]]:
    rng = np.random.default_rng(11)
    for _ in range(n):
        K = int(rng.integers(1, 40))
        L = int(rng.integers(1, K + 1))
        stride = int(rng.integers(1, L + 1))
        t = int(rng.integers(0, 1001))
        seed = int(rng.integers(0, 2**62))
        lmaps = cp.make_local_maps(K, L, stride, t, cp.ShiftPlan(seed))
        covered = np.zeros(K, dtype=int)
        for m in lmaps:
            covered[m.fold(K)] += 1
        _expect(bool(np.all(covered >= 1)), "local coverage",
                f"K={K} L={L} stride={stride} t={t} seed={seed}")
        again = cp.make_local_maps(K, L, stride, t, cp.ShiftPlan(seed))
        _expect([m.indices for m in lmaps] == [m.indices for m in again],
                "local determinism")
        d = int(rng.integers(math.ceil(K / L), math.ceil(K / L) + 3))
        gmaps = cp.make_global_maps(K, L, d)
        gcount = np.zeros(K, dtype=int)
        for m in gmaps:
            real = [i for i in m.indices if i < K]
            gcount[real] += 1
        _expect(bool(np.all(gcount == 1)), "global exact cover",
                f"K={K} L={L} d={d}")
    return [("coverage.random", f"{n} random geometry tuples covered")]


def check_fusion(n: int = 12) -> list[tuple[str, str]]:
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(n):
        K, _, maps, clips, weights = _random_instance(rng)
        gamma = float(rng.choice([0.005, 0.5, 0.9]))
        got = brute_force_fuse(clips, maps, weights, gamma, K).data
        want = dense_lsq_fuse(clips, maps, weights, gamma, K)
        err = float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want))))
        worst = max(worst, err)
        _expect(err <= 1e-5, "brute force vs dense lstsq", f"err {err:.2e}")
    # blend of per-path solutions agrees with the joint solve where unit
    # weights give both paths equal pixel coverage
    rng2 = np.random.default_rng(29)
    K, _, maps, clips, _ = _random_instance(rng2)
    L = len(maps[0])
    unit = [cp.clip_weights(L, cp.UNIFORM) for _ in maps]
    gmaps = [m for m in maps if m.path == cp.GLOBAL]
    lmaps = [m for m in maps if m.path == cp.LOCAL]
    gclips = [c for c, m in zip(clips, maps) if m.path == cp.GLOBAL]
    lclips = [c for c, m in zip(clips, maps) if m.path == cp.LOCAL]
    cover_g = np.zeros(K)
    cover_l = np.zeros(K)
    for m in gmaps:
        np.add.at(cover_g, m.fold(K), 1.0)
    for m in lmaps:
        np.add.at(cover_l, m.fold(K), 1.0)
    eq = cover_g == cover_l
    if eq.any():
        gamma = 0.25
        blend = glcd_fuse(
            fuse_path(gclips, gmaps, unit[: len(gmaps)], K),
            fuse_path(lclips, lmaps, unit[: len(lmaps)], K),
            gamma,
        ).latent.data
        joint = brute_force_fuse(clips, maps, unit, gamma, K).data
        err = float(np.max(np.abs(blend[eq] - joint[eq])))
        _expect(err <= 1e-5, "path blend vs joint solve", f"err {err:.2e}")
    g = annealing_gamma(1000, AnnealParams(0.005, 0.0005))
    _expect(abs(g - 0.005 * math.exp(0.5)) < 1e-12, "anneal value at t=1000")
    return [("fusion.oracle", f"{n} instances, worst rel err {worst:.2e}")]


def check_spectral() -> list[tuple[str, str]]:
    rng = np.random.default_rng(31)
    shape = (12, 3, 8, 8)
    z = LatentVideo(rng.standard_normal(shape).astype(np.float32))
    eta = LatentVideo(rng.standard_normal(shape).astype(np.float32))
    x = z.data.astype(np.float64)
    rt = np.fft.ifftn(np.fft.fftn(x, axes=(0, 2, 3)), axes=(0, 2, 3)).real
    err = float(np.abs(rt - x).max())
    _expect(err <= 1e-5, "fft round trip", f"err {err:.2e}")
    ap = frequency_fuse(z, eta, make_lpf(shape[:1] + shape[2:], ALL_PASS))
    _expect(float(np.abs(ap.data - z.data).max()) <= 1e-5, "all-pass identity")
    st = frequency_fuse(z, eta, make_lpf(shape[:1] + shape[2:], ALL_STOP))
    _expect(float(np.abs(st.data - eta.data).max()) <= 1e-5, "all-stop identity")
    filt = make_lpf(shape[:1] + shape[2:], GAUSSIAN_LP, 0.25)
    fused = frequency_fuse(z, eta, filt)
    axes = (0, 2, 3)
    lhs = np.fft.fftn(fused.data.astype(np.float64), axes=axes)
    mask = filt.mask[:, None, :, :]
    rhs = (np.fft.fftn(z.data.astype(np.float64), axes=axes) * mask
           + np.fft.fftn(eta.data.astype(np.float64), axes=axes) * (1 - mask))
    scale = float(np.abs(rhs).max())
    err = float(np.abs(lhs - rhs).max()) / max(1.0, scale)
    _expect(err <= 1e-5, "spectral split", f"rel err {err:.2e}")
    return [("spectral.split", f"round trip and per-bin split within 1e-5")]


def ref_motion_loss64(z: np.ndarray, eps: np.ndarray, abar_t: float,
                      p: VmcrParams) -> float:
    """Float64 restatement of the motion loss for finite differencing."""
    z0 = (z - math.sqrt(1.0 - abar_t) * eps) / math.sqrt(abar_t)
    deltas = np.diff(z0, axis=0)
    total = 0.0
    for i in range(deltas.shape[0] - 1):
        u, v = deltas[i], deltas[i + 1]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu >= p.eps_guard and nv >= p.eps_guard:
            total += 1.0 - float(u.ravel() @ v.ravel()) / (nu * nv)
        total += p.lambda_mse * float(np.sum((u - v) ** 2))
        U = np.fft.fft2(u, axes=(-2, -1))
        V = np.fft.fft2(v, axes=(-2, -1))
        amp = float(np.sum(np.abs(np.abs(U) - np.abs(V))))
        dphi = np.angle(U) - np.angle(V)
        dphi = np.mod(dphi + np.pi, 2 * np.pi) - np.pi
        total += p.lambda_f * (amp + p.lambda_phase * float(np.sum(np.abs(dphi))))
    return total


def check_gradient(n: int = 5) -> list[tuple[str, str]]:
    rng = np.random.default_rng(37)
    sched = alpha_schedule(1000, 0.00085, 0.012)
    p = VmcrParams()
    worst = 0.0
    for _ in range(n):
        K = int(rng.integers(3, 6))
        shape = (K, 1, 4, 4)
        z = rng.standard_normal(shape)
        eps = rng.standard_normal(shape)
        t = int(rng.integers(100, 1000))
        pred = DenoisePrediction(LatentVideo(eps.astype(np.float32)), t)
        grad = motion_loss_grad(
            LatentVideo(z.astype(np.float32)), pred, t, sched, p
        ).data.astype(np.float64)
        abar_t = sched.abar(t)
        eps64 = pred.eps.data.astype(np.float64)

        h = 1e-3
        fd = np.zeros(shape)
        flat = z.reshape(-1)
        fdf = fd.reshape(-1)
        for i in range(flat.size):
            zp = flat.copy(); zp[i] += h
            zm = flat.copy(); zm[i] -= h
            fdf[i] = (
                ref_motion_loss64(zp.reshape(shape), eps64, abar_t, p)
                - ref_motion_loss64(zm.reshape(shape), eps64, abar_t, p)
            ) / (2 * h)
        denom = max(1e-12, float(np.abs(fd).max()))
        err = float(np.abs(grad - fd).max()) / denom
        worst = max(worst, err)
        _expect(err < 1e-3, "finite-difference gradient", f"rel err {err:.2e}")
    return [("gradient.fd", f"{n} instances, worst rel err {worst:.2e}")]


SUITES = {
    "schedule": check_schedule,
    "coverage": check_coverage,
    "fusion": check_fusion,
    "spectral": check_spectral,
    "gradient": check_gradient,
}


def run_checks(name_filter: str | None = None):
    """Run matching suites; yields (suite, ok, detail) triples."""
    for name, fn in SUITES.items():
        if name_filter and name_filter not in name:
            continue
        try:
            for label, detail in fn():
                yield label, True, detail
        except CheckFailure as e:
            yield name, False, str(e)
