import numpy as np
import pytest
from hypothesis import given, strategies as st

from foursim.demod import ComponentSet, separate_components
from foursim.experiment import Comparison
from foursim.forward import PhantomSpec, phantom_two_layer, simulate_frames
from foursim.illum import IlluminationParams, component_shifts, default_phase_table, mixing_matrix
from foursim.metrics import band_limit, leakage
from foursim.optics import OpticalConfig, OtfModel, freq_grid
from foursim.recon import (COMPENSATING_GROUP, MISSING_CONE_GROUP, ReconConfig, apodize, embed,
                           effective_otfs, place_component, reconstruct, required_upsample,
                           shift_spectrum, wiener_widefield)

import phantom_runs


@pytest.fixture(scope="module")
def two_layer128():
    cfg = OpticalConfig(grid_xy=128)
    otfs = OtfModel(cfg)
    ph = phantom_two_layer(PhantomSpec(grid_xy=128))
    p = IlluminationParams.orthogonal(0.45 * cfg.cutoff, 0.0)
    frames = simulate_frames(ph, p, default_phase_table(), cfg)
    comps = separate_components(frames, mixing_matrix(p, frames.table), p)
    return cfg, otfs, ph, comps


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(w_mis=0), dict(w_com=-1), dict(upsample=1),
                                    dict(apodization="hann"), dict(mode="x")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ReconConfig(**kw)


class TestPlacement:
    def test_embed_keeps_samples(self, rng):
        img = rng.normal(size=(32, 32))
        up = np.fft.ifft2(embed(np.fft.fft2(img), 2))
        assert np.abs(up.imag).max() < 1e-12
        assert np.abs(4 * up.real[::2, ::2] - img).max() < 1e-12

    def test_zero_shift_is_embedding(self, rng):
        s = np.fft.fft2(rng.normal(size=(16, 16)))
        assert np.array_equal(place_component(s, (0.0, 0.0), 2, 65.0), embed(s, 2))

    @given(st.integers(-10, 10), st.integers(-10, 10))
    def test_integer_shift_is_roll(self, ix, iy):
        rng = np.random.default_rng(abs(ix * 31 + iy))
        s = np.fft.fft2(rng.normal(size=(16, 16)))
        sr_df = 1.0 / (32 * 32.5)
        placed = place_component(s, (ix * sr_df, iy * sr_df), 2, 65.0)
        rolled = np.roll(embed(s, 2), (-iy, -ix), axis=(0, 1))
        assert np.abs(placed - rolled).max() < 1e-10 * np.abs(s).max()

    @given(st.floats(-0.004, 0.004), st.floats(-0.004, 0.004))
    def test_shift_then_back(self, sx, sy):
        s = np.fft.fft2(np.random.default_rng(0).normal(size=(32, 32)))
        there = shift_spectrum(s, (sx, sy), 32.5)
        back = shift_spectrum(there, (-sx, -sy), 32.5)
        assert np.abs(back - s).max() < 1e-9 * np.abs(s).max()

    def test_beyond_nyquist(self):
        with pytest.raises(ValueError, match="SR Nyquist"):
            place_component(np.zeros((16, 16)), (0.5 / 32.5, 0.0), 2, 65.0)

    def test_required_upsample(self):
        cut = 2 * 1.45 / 561
        assert required_upsample([(0.9 * cut, 0)], cut, 65.0) == 2
        assert required_upsample([(3.0 * cut, 0)], cut, 65.0) == 3
        assert required_upsample([(0.0, 0.0)], cut, 65.0, minimum=4) == 4


class TestEffectiveOtfs:
    def test_zero_shift_is_widefield(self, two_layer128):
        cfg, otfs, _, _ = two_layer128
        e = effective_otfs(otfs, np.zeros((1, 2)), 256, 32.5)[0]
        assert np.abs(e - otfs.effective((0.0, 0.0), 256, 32.5)).max() < 1e-12

    def test_first_orders_weaker_at_origin(self, two_layer128):
        cfg, otfs, _, comps = two_layer128
        e = effective_otfs(otfs, comps.shifts, 256, 32.5)
        for j in COMPENSATING_GROUP:
            assert abs(e[j][0, 0]) < abs(e[0][0, 0])

    def test_conjugate_pairs(self, two_layer128):
        cfg, otfs, _, comps = two_layer128
        e = effective_otfs(otfs, comps.shifts, 256, 32.5)
        keep = np.ones((256, 256), bool)
        keep[128, :] = keep[:, 128] = False
        for j in range(1, 9, 2):
            mirrored = np.roll(e[j + 1][::-1, ::-1], 1, axis=(0, 1))
            assert np.abs(e[j] - np.conj(mirrored))[keep].max() < 1e-9


class TestApodize:
    def test_none_is_identity(self, rng):
        s = rng.normal(size=(16, 16))
        assert apodize(s, 1.0, "none") is s

    @pytest.mark.parametrize("kind", ["triangle", "raised-cosine"])
    def test_window_shape(self, kind):
        w = apodize(np.ones((64, 64)), 1.0, kind, cutoff=0.25)
        fy, fx = freq_grid(64, 1.0)
        r = np.hypot(fx, fy)
        assert w[0, 0] == 1.0
        assert np.all(w[r >= 0.25] == 0)
        order = np.argsort(r.ravel())
        assert np.all(np.diff(w.ravel()[order]) <= 1e-15)

    def test_needs_cutoff(self):
        with pytest.raises(ValueError):
            apodize(np.ones((4, 4)), 1.0, "triangle", None)


class TestReconstruct:
    def test_output_grid_and_provenance(self, two_layer128):
        _, otfs, _, comps = two_layer128
        sr = reconstruct(comps, otfs, ReconConfig())
        assert sr.pixels.shape == (256, 256) and sr.pixel_size == 32.5
        assert sr.provenance["upsample"] == 2 and sr.provenance["mode"] == "full_4i"
        assert np.all(np.isfinite(sr.pixels))

    @given(st.floats(0.01, 100.0))
    def test_linearity(self, two_layer128, a):
        _, otfs, _, comps = two_layer128
        base = reconstruct(comps, otfs, ReconConfig()).pixels
        scaled = ComponentSet(a * comps.spectra, comps.shifts, comps.params_used)
        assert np.abs(reconstruct(scaled, otfs, ReconConfig()).pixels - a * base).max() < 1e-9 * a * np.abs(base).max()

    def test_missing_components(self, two_layer128):
        _, otfs, _, comps = two_layer128
        spectra = comps.spectra.copy()
        spectra[6] = np.nan
        with pytest.raises(ValueError, match="missing components"):
            reconstruct(ComponentSet(spectra, comps.shifts), otfs, ReconConfig(mode="second_only"))
        # first_only does not need order 6
        reconstruct(ComponentSet(spectra, comps.shifts), otfs, ReconConfig(mode="first_only"))

    def test_widefield_wiener(self, two_layer128):
        cfg, otfs, _, comps = two_layer128
        image = np.fft.ifft2(comps.spectra[0]).real
        h = otfs.effective((0.0, 0.0), 256, 32.5)
        spec = embed(np.fft.fft2(image), 2) * np.conj(h) / (np.abs(h) ** 2 + 0.05**2)
        expected = np.fft.ifft2(apodize(spec, 32.5, "triangle", cfg.cutoff)).real
        got = wiener_widefield(image, otfs, ReconConfig()).pixels
        assert np.abs(got - expected).max() < 1e-10 * np.abs(expected).max()

    def test_weak_modulation_approaches_widefield_wiener(self, two_layer128):
        # orders 1..8 carry nothing: the first-order group vanishes and the
        # second-order group reduces to the zeroth order with extra denominator terms
        cfg, otfs, _, comps = two_layer128
        only0 = np.zeros_like(comps.spectra)
        only0[0] = comps.spectra[0]
        got = reconstruct(ComponentSet(only0, comps.shifts), otfs, ReconConfig(mode="first_only")).pixels
        assert np.abs(got).max() < 1e-12
        full = reconstruct(ComponentSet(only0, comps.shifts), otfs, ReconConfig(apod_cutoff=cfg.cutoff)).pixels
        wf = wiener_widefield(np.fft.ifft2(comps.spectra[0]).real, otfs, ReconConfig()).pixels
        assert np.corrcoef(full.ravel(), wf.ravel())[0, 1] > 0.95

    def test_group_weighting(self, two_layer128):
        # the first-order group passes less of its own DC, yet sections better
        cfg, otfs, ph, comps = two_layer128
        e = effective_otfs(otfs, comps.shifts, 256, 32.5)
        w = 0.05

        def passthrough(group):
            g = sum(abs(e[j][0, 0]) ** 2 for j in group)
            return g / (g + w * w)

        com = max(abs(e[j][0, 0]) for j in COMPENSATING_GROUP)
        mis = max(abs(e[j][0, 0]) for j in MISSING_CONE_GROUP)
        assert com < mis
        assert passthrough(COMPENSATING_GROUP) < passthrough(MISSING_CONE_GROUP)
        truth = band_limit(ph[:, :, 8], cfg.pixel_size, cfg.cutoff, 2)
        l_first = leakage(reconstruct(comps, otfs, ReconConfig(mode="first_only")).pixels, truth)
        l_second = leakage(reconstruct(comps, otfs, ReconConfig(mode="second_only")).pixels, truth)
        assert l_first < l_second


@pytest.mark.slow
class TestPhantomResolution:
    @pytest.mark.xfail(strict=True, reason="full_4i resolves about 17 % finer than second_only "
                                           "on the simulated chart (about 183 nm vs 219 nm)")
    def test_full_matches_second_order(self):
        t = phantom_runs.chart_scores()
        assert t["full_4i"]["rfrc_independent"] == pytest.approx(t["second_only"]["rfrc_independent"], rel=0.10)

    @pytest.mark.xfail(strict=True, reason="first-order-only reconstruction resolves finer than full_4i "
                                           "on the simulated chart (about 103 nm vs 183 nm)")
    def test_full_finer_than_first_order(self):
        t = phantom_runs.chart_scores()
        assert t["full_4i"]["rfrc_independent"] < t["first_only"]["rfrc_independent"]
