import math

import numpy as np
import pytest
from conftest import dense_lsq_fuse, random_dual_path_instance

from videoloom import (
    AnnealParams,
    ClipMap,
    CoverageError,
    LatentVideo,
    ParameterError,
    WeightProfile,
    annealing_gamma,
    brute_force_fuse,
    clip_weights,
    fuse_path,
    glcd_fuse,
)
from videoloom.clips import GLOBAL, LOCAL


def const_clip(L, value, frame=(1, 2, 2)):
    return LatentVideo(np.full((L,) + frame, value, dtype=np.float32))


class TestAnnealingGamma:
    def test_at_zero(self):
        assert annealing_gamma(0, AnnealParams(0.005, 0.0005)) == 0.005

    def test_direct_evaluation(self):
        got = annealing_gamma(1000, AnnealParams(0.005, 0.0005))
        assert got == pytest.approx(0.005 * math.exp(0.5), rel=1e-12)
        assert got == pytest.approx(0.0082436, abs=1e-7)

    def test_clamped_to_one(self):
        assert annealing_gamma(1000, AnnealParams(0.5, 0.01)) == 1.0

    def test_monotone_in_t(self):
        p = AnnealParams(0.005, 0.0005)
        vals = [annealing_gamma(t, p) for t in range(0, 2000, 50)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_param_validation(self):
        with pytest.raises(ParameterError):
            AnnealParams(0.0, 0.1)
        with pytest.raises(ParameterError):
            AnnealParams(0.5, -0.1)


class TestFusePath:
    def test_single_identity_clip(self):
        clip = const_clip(4, 3.0)
        m = ClipMap(tuple(range(4)), LOCAL, 0)
        out = fuse_path([clip], [m], [clip_weights(4)], 4)
        np.testing.assert_array_equal(out.data, clip.data)

    def test_two_full_cover_clips_average(self):
        a, b = const_clip(4, 1.0), const_clip(4, 3.0)
        m = ClipMap(tuple(range(4)), LOCAL, 0)
        out = fuse_path([a, b], [m, m], [clip_weights(4)] * 2, 4)
        np.testing.assert_allclose(out.data, 2.0)

    def test_disjoint_clips_concatenate(self):
        a, b = const_clip(2, 1.0), const_clip(2, 5.0)
        m0 = ClipMap((0, 1), LOCAL, 0)
        m1 = ClipMap((2, 3), LOCAL, 1)
        out = fuse_path([a, b], [m0, m1], [clip_weights(2)] * 2, 4)
        np.testing.assert_array_equal(out.data[:, 0, 0, 0], [1, 1, 5, 5])

    def test_uncovered_frame_reports_index(self):
        clip = const_clip(2, 1.0)
        m = ClipMap((0, 1), LOCAL, 0)
        with pytest.raises(CoverageError, match=r"\[2\]"):
            fuse_path([clip], [m], [clip_weights(2)], 3)

    def test_invariant_under_weight_rescaling(self):
        rng = np.random.default_rng(0)
        K, L = 10, 4
        maps = [ClipMap(tuple(range(s, s + L)), LOCAL, i)
                for i, s in enumerate([0, 3, 6])]
        clips = [LatentVideo(rng.standard_normal((L, 2, 3, 3)).astype(np.float32))
                 for _ in maps]
        w = clip_weights(L, "triangular")
        w_scaled = WeightProfile(w.values * 17.0)
        a = fuse_path(clips, maps, [w] * 3, K)
        b = fuse_path(clips, maps, [w_scaled] * 3, K)
        np.testing.assert_allclose(a.data, b.data, rtol=1e-6, atol=1e-6)


class TestGlcdFuse:
    def test_gamma_zero_returns_local_bitwise(self):
        rng = np.random.default_rng(1)
        g = LatentVideo(rng.standard_normal((3, 1, 2, 2)).astype(np.float32))
        l = LatentVideo(rng.standard_normal((3, 1, 2, 2)).astype(np.float32))
        out = glcd_fuse(g, l, 0.0)
        assert np.array_equal(out.latent.data, l.data)
        assert out.gamma_used == 0.0

    def test_gamma_one_returns_global_bitwise(self):
        rng = np.random.default_rng(2)
        g = LatentVideo(rng.standard_normal((3, 1, 2, 2)).astype(np.float32))
        l = LatentVideo(rng.standard_normal((3, 1, 2, 2)).astype(np.float32))
        assert np.array_equal(glcd_fuse(g, l, 1.0).latent.data, g.data)

    def test_hand_arithmetic(self):
        g = const_clip(2, 4.0)
        l = const_clip(2, 0.0)
        out = glcd_fuse(g, l, 0.25)
        np.testing.assert_allclose(out.latent.data, 1.0, rtol=1e-6)

    def test_identical_paths_pass_through_bitwise(self):
        rng = np.random.default_rng(3)
        x = LatentVideo(rng.standard_normal((4, 2, 3, 3)).astype(np.float32))
        out = glcd_fuse(x, LatentVideo(x.data.copy()), 0.005)
        assert np.array_equal(out.latent.data, x.data)

    def test_convex_bounds(self):
        rng = np.random.default_rng(4)
        g = LatentVideo(rng.standard_normal((5, 2, 4, 4)).astype(np.float32))
        l = LatentVideo(rng.standard_normal((5, 2, 4, 4)).astype(np.float32))
        for gamma in (0.0, 0.1, 0.5, 0.9, 1.0):
            out = glcd_fuse(g, l, gamma).latent.data
            lo = np.minimum(g.data, l.data)
            hi = np.maximum(g.data, l.data)
            slack = 1e-6 * (1.0 + np.abs(hi))
            assert np.all(out >= lo - slack) and np.all(out <= hi + slack)

    def test_shape_mismatch_rejected(self):
        from videoloom import ShapeError

        with pytest.raises(ShapeError):
            glcd_fuse(const_clip(2, 0.0), const_clip(3, 0.0), 0.5)


class TestBruteForceFuse:
    def test_single_path_with_unit_weights_reduces_to_path_average(self):
        rng = np.random.default_rng(5)
        K, L = 8, 4
        maps = [ClipMap(tuple(range(s, s + L)), LOCAL, i)
                for i, s in enumerate([0, 2, 4])]
        clips = [LatentVideo(rng.standard_normal((L, 1, 2, 2)).astype(np.float32))
                 for _ in maps]
        unit = [clip_weights(L)] * len(maps)
        got = brute_force_fuse(clips, maps, unit, gamma=0.3, K=K)
        want = fuse_path(clips, maps, unit, K)
        np.testing.assert_allclose(got.data, want.data, rtol=1e-5, atol=1e-6)

    def test_symmetric_coverage_gamma_half_is_plain_mean(self):
        # same map on both paths, unit weights: every contribution weighs
        # 0.5 so the solution is the unweighted mean
        rng = np.random.default_rng(6)
        L = 4
        mg = ClipMap(tuple(range(L)), GLOBAL, 0)
        ml = ClipMap(tuple(range(L)), LOCAL, 0)
        a = LatentVideo(rng.standard_normal((L, 1, 2, 2)).astype(np.float32))
        b = LatentVideo(rng.standard_normal((L, 1, 2, 2)).astype(np.float32))
        got = brute_force_fuse([a, b], [mg, ml], [clip_weights(L)] * 2, 0.5, L)
        np.testing.assert_allclose(
            got.data, (a.data + b.data) / 2.0, rtol=1e-5, atol=1e-6
        )

    def test_matches_dense_lstsq_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            K, L, maps, clips = random_dual_path_instance(rng, K_max=16, L_max=6)
            profile = "uniform" if rng.random() < 0.5 else "triangular"
            weights = [clip_weights(L, profile) for _ in maps]
            gamma = float(rng.choice([0.005, 0.25, 0.5, 0.9]))
            got = brute_force_fuse(clips, maps, weights, gamma, K).data
            want = dense_lsq_fuse(clips, maps, weights, gamma, K)
            np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_zero_combined_weight_rejected(self):
        L = 2
        mg = ClipMap((0, 1), GLOBAL, 0)
        clip = const_clip(L, 1.0)
        # gamma = 0 zeroes the only (global) contribution
        with pytest.raises(CoverageError):
            brute_force_fuse([clip], [mg], [clip_weights(L)], 0.0, 2)


class TestBlendVsJointSolve:
    def test_agreement_at_equal_coverage_pixels(self):
        # with unit weights on both paths, the two-stage blend equals the
        # joint solve exactly at frames whose per-path coverage counts match
        rng = np.random.default_rng(8)
        checked = 0
        for _ in range(40):
            K, L, maps, clips = random_dual_path_instance(rng, K_max=16, L_max=6)
            unit = [clip_weights(L)] * len(maps)
            gsel = [(c, m) for c, m in zip(clips, maps) if m.path == GLOBAL]
            lsel = [(c, m) for c, m in zip(clips, maps) if m.path == LOCAL]
            cover_g, cover_l = np.zeros(K), np.zeros(K)
            for _, m in gsel:
                np.add.at(cover_g, m.fold(K), 1.0)
            for _, m in lsel:
                np.add.at(cover_l, m.fold(K), 1.0)
            eq = cover_g == cover_l
            if not eq.any():
                continue
            for gamma in (0.0, 0.005, 0.5, 1.0):
                g_lat = fuse_path(*zip(*gsel), [clip_weights(L)] * len(gsel), K)
                l_lat = fuse_path(*zip(*lsel), [clip_weights(L)] * len(lsel), K)
                blend = glcd_fuse(g_lat, l_lat, gamma).latent.data
                joint = brute_force_fuse(clips, maps, unit, gamma, K).data
                np.testing.assert_allclose(
                    blend[eq], joint[eq], rtol=1e-5, atol=1e-5
                )
                checked += 1
        assert checked > 0
