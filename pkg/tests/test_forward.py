import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from foursim.forward import (NoiseSpec, PhantomSpec, RawFrameSet, add_noise, filaments,
                             phantom_two_layer, resolution_chart, simulate_conventional_frames,
                             simulate_frames, simulate_widefield)
from foursim.illum import (IlluminationParams, TwoBeamParams, component_shifts,
                           default_phase_table, mixing_matrix)
from foursim.optics import OpticalConfig, defocus_otf, freq_grid


def spec(n):
    return PhantomSpec(grid_xy=n)


@pytest.fixture(scope="module")
def setup64():
    cfg = OpticalConfig(grid_xy=64)
    ph = phantom_two_layer(spec(64))
    p = IlluminationParams.orthogonal(0.45 * cfg.cutoff, 0.2, m1_u=0.9, m1_v=0.8,
                                      m2_u=0.5, m2_v=0.4, phi1_u=0.3, phi2_v=1.2)
    return cfg, ph, p


class TestPhantom:
    def test_chart_is_binary_and_not_quarter_symmetric(self):
        c = resolution_chart(128)
        assert set(np.unique(c)) <= {0.0, 1.0}
        assert np.abs(c - np.rot90(c)).sum() > 0.1 * c.sum()

    def test_two_layers(self):
        s = phantom_two_layer(spec(64))
        assert s.shape == (64, 64, 9)
        assert np.array_equal(s[:, :, 8], np.rot90(s[:, :, 0]))
        assert not s[:, :, 1:8].any()

    @given(st.integers(0, 3))
    def test_rotation_preserves_mass(self, k):
        img = filaments(32, count=5, seed=k)
        s = phantom_two_layer(PhantomSpec(grid_xy=32, layers=[(2, img, k * np.pi / 2)]))
        assert s.sum() == pytest.approx(img.sum(), rel=1e-12)

    def test_filaments_deterministic_and_normalized(self):
        a, b = filaments(64, seed=3), filaments(64, seed=3)
        assert np.array_equal(a, b) and a.max() == 1.0 and a.min() >= 0

    @pytest.mark.parametrize("layers, msg", [
        ([(9, "chart", 0.0)], "outside grid_z"),
    ])
    def test_spec_validation(self, layers, msg):
        with pytest.raises(ValueError, match=msg):
            PhantomSpec(grid_xy=32, layers=layers)

    def test_layer_validation(self):
        with pytest.raises(ValueError, match="multiples"):
            phantom_two_layer(PhantomSpec(grid_xy=32, layers=[(0, "chart", 0.3)]))
        with pytest.raises(ValueError, match="nonnegative"):
            phantom_two_layer(PhantomSpec(grid_xy=4, layers=[(0, -np.ones((4, 4)), 0.0)]))
        with pytest.raises(ValueError, match="does not match"):
            phantom_two_layer(PhantomSpec(grid_xy=8, layers=[(0, np.ones((4, 4)), 0.0)]))


class TestFourBeamFrames:
    def test_against_explicit_component_sum(self):
        # frame_n = Σ_j M[n, j] · C_j with C_j built from explicit exponentials and matrix DFTs
        n = 256
        cfg = OpticalConfig(grid_xy=n)
        ph = phantom_two_layer(spec(n))
        p = IlluminationParams.orthogonal(0.45 * cfg.cutoff, 0.37, m1_u=0.9, m1_v=0.7,
                                          m2_u=0.6, m2_v=0.4, phi1_v=0.5, phi2_u=2.0)
        t = default_phase_table()
        frames = simulate_frames(ph, p, t, cfg).frames
        otfs = {z: defocus_otf(cfg, z * cfg.z_step) for z in (0, 8)}
        comps = oracles.direct_components(ph, component_shifts(p) * cfg.pixel_size, otfs)
        m = mixing_matrix(p, t).values
        scale = np.abs(comps[0]).max()
        for i in (0, 4, 8):
            expected = np.tensordot(m[i], comps, axes=1)
            got = oracles.dft2(frames[i])
            assert np.abs(got - expected).max() / scale < 1e-10

    def test_mean_frame_is_widefield(self, setup64):
        # the default table cancels every modulated term on average
        cfg, ph, p = setup64
        f = simulate_frames(ph, p, default_phase_table(), cfg)
        assert np.abs(f.widefield - simulate_widefield(ph, cfg)).max() < 1e-12

    def test_zero_depth_gives_identical_frames(self, setup64):
        cfg, ph, p = setup64
        tiny = p.with_depths(1e-12, 1e-12)
        f = simulate_frames(ph, tiny, default_phase_table(), cfg).frames
        assert np.abs(f - f[0]).max() < 1e-9

    def test_grid_mismatch(self, setup64):
        cfg, _, p = setup64
        with pytest.raises(ValueError, match="grid"):
            simulate_frames(np.zeros((32, 32, 9)), p, default_phase_table(), cfg)

    def test_frame_count(self):
        with pytest.raises(ValueError, match="expected 9 frames, got 8"):
            RawFrameSet(np.zeros((8, 4, 4)), None)

    def test_deep_layer_is_blurred(self):
        # 1.6 µm out of focus, little transfer above a quarter of the cutoff
        cfg = OpticalConfig(grid_xy=256)
        h = defocus_otf(cfg, 8 * cfg.z_step)
        fy, fx = freq_grid(256, cfg.pixel_size)
        assert np.abs(h[np.hypot(fx, fy) > 0.25 * cfg.cutoff]).max() < 1e-2

    def test_linearity(self, setup64, rng):
        cfg, ph, p = setup64
        other = rng.uniform(size=ph.shape) * (ph > 0)
        t = default_phase_table()
        lhs = simulate_frames(2 * ph + 3 * other, p, t, cfg).frames
        rhs = 2 * simulate_frames(ph, p, t, cfg).frames + 3 * simulate_frames(other, p, t, cfg).frames
        assert np.abs(lhs - rhs).max() < 1e-10


class TestConventionalFrames:
    def test_mean_is_widefield(self, setup64):
        cfg, ph, _ = setup64
        f = simulate_conventional_frames(ph, TwoBeamParams(0.9 * cfg.cutoff), cfg)
        assert f.mode == "conventional"
        for o in range(3):
            assert np.abs(f.frames[3 * o:3 * o + 3].mean(0) - simulate_widefield(ph, cfg)).max() < 1e-12


class TestNoise:
    def test_deterministic(self):
        img = np.ones((2, 8, 8))
        assert np.array_equal(add_noise(img, 50, 1.0, seed=7), add_noise(img, 50, 1.0, seed=7))
        assert not np.array_equal(add_noise(img, 50, seed=7), add_noise(img, 50, seed=8))

    def test_large_budget_converges(self, rng):
        img = rng.uniform(0.1, 1, size=(3, 16, 16))
        noisy = add_noise(img, 1e8, seed=1) / 1e8
        assert np.abs(noisy - img / img.max()).max() < 1e-3

    def test_zero_image(self):
        assert not add_noise(np.zeros((2, 4, 4)), 100, seed=0).any()

    def test_rejects_bad_budget(self):
        with pytest.raises(ValueError):
            add_noise(np.ones((1, 2, 2)), 0)

    def test_mean_is_linear_in_signal(self):
        # Monte-Carlo: E[counts] = budget · x / max(x)
        img = np.linspace(0.1, 1, 64).reshape(1, 8, 8)
        draws = np.mean([add_noise(img, 200, seed=s) for s in range(400)], axis=0)
        se = np.sqrt(200 * img / 400)
        assert np.all(np.abs(draws - 200 * img) < 5 * se + 1e-9)

    def test_simulate_records_noise(self, setup64):
        cfg, ph, p = setup64
        f = simulate_frames(ph, p, default_phase_table(), cfg, NoiseSpec(100, 0.5, 3))
        assert f.noise_meta == {"photon_budget": 100, "read_noise_sd": 0.5, "seed": 3}
