import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from foursim.illum import (COMPONENT_ORDER, IlluminationParams, PhaseTable, TwoBeamParams,
                           character_matrix, component_shifts, default_phase_table,
                           mixing_matrix, pattern, two_beam_matrix, two_beam_pattern)

TWO_PI = 2 * np.pi
angles = st.floats(0, TWO_PI)


def params(mag=0.0023, angle=0.3, **kw):
    return IlluminationParams.orthogonal(mag, angle, **kw)


class TestPattern:
    @given(angles, angles, st.floats(0, np.pi / 2))
    def test_matches_interference_oracle(self, pu, pv, angle):
        p = params(angle=angle, m1_u=1, m1_v=1, m2_u=0.5, m2_v=0.5)
        y, x = np.mgrid[0:48, 0:48] * 65.0
        ref = oracles.four_beam_intensity(p.k_u, p.k_v, pu, pv, x, y)
        assert np.abs(pattern(p, (pu, pv), 48, 65.0) - ref).max() < 1e-12

    def test_nonnegative_at_full_depth(self):
        p = params()
        for entry in default_phase_table().entries:
            assert pattern(p, entry, 64, 65.0).min() > -1e-12

    def test_mean_is_one_over_whole_periods(self):
        # |k| chosen so every term completes an integer number of cycles on the grid
        n, px = 64, 65.0
        p = IlluminationParams(k_u=(4 / (n * px), 0), k_v=(0, 4 / (n * px)))
        for entry in default_phase_table().entries:
            assert pattern(p, entry, n, px).mean() == pytest.approx(1.0, abs=1e-12)

    def test_zero_depth_switch(self):
        assert np.all(pattern(params(), (0.3, 1.1), 16, 65.0, depths_zero=True) == 1)

    def test_aliasing_rejected(self):
        with pytest.raises(ValueError, match="pattern aliased"):
            pattern(params(mag=0.26 / 65.0, angle=0), (0, 0), 16, 65.0)
        with pytest.raises(ValueError, match="pattern aliased"):
            two_beam_pattern(TwoBeamParams(0.51 / 65.0), 0, 0, 16, 65.0)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(m1_u=0), dict(m2_v=1.6), dict(m1_v=-0.1)])
    def test_depth_range(self, kw):
        with pytest.raises(ValueError):
            params(**kw)

    def test_zero_wavevector(self):
        with pytest.raises(ValueError):
            IlluminationParams(k_u=(0, 0), k_v=(0, 1e-3))

    def test_non_orthogonal_warns(self):
        with pytest.warns(UserWarning, match="orthogonal"):
            IlluminationParams(k_u=(1e-3, 0), k_v=(1e-4, 1e-3))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            params()

    def test_phase_wrapping_and_roundtrip(self):
        p = params(phi1_u=7.0, phi2_v=-1.0)
        assert 0 <= p.phi1_u < TWO_PI and p.phi2_v == pytest.approx(TWO_PI - 1)
        assert IlluminationParams.from_dict(p.to_dict()) == p


class TestMixingMatrix:
    def test_first_row_default_table(self):
        m = mixing_matrix(params(phi1_u=0, phi1_v=0, phi2_u=0, phi2_v=0), default_phase_table()).values
        half = 0.5
        expected = [1, half, half, -half, -half, -0.25, -0.25, -0.25, -0.25]
        assert np.allclose(m[0], expected, atol=1e-12)

    def test_character_matrix_first_row(self):
        c = character_matrix(default_phase_table())
        assert np.allclose(c[0], [1, 1, 1, -1, -1, -1, -1, -1, -1], atol=1e-12)

    def test_character_matrix_is_scaled_unitary(self):
        c = character_matrix(default_phase_table())
        assert np.allclose(c.conj().T @ c, 9 * np.eye(9), atol=1e-10)
        assert np.linalg.cond(c) == pytest.approx(1.0, abs=1e-9)

    def test_condition_with_half_weights(self):
        # the m/2 factors on the shifted columns make cond = 2 for unit depths
        p = params(m1_u=1, m1_v=1, m2_u=1, m2_v=1)
        assert np.linalg.cond(mixing_matrix(p, default_phase_table()).values) == pytest.approx(2.0, rel=1e-9)

    @given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), angles, angles)
    def test_inverse(self, m1, m2, a, b):
        p = params(m1_u=m1, m1_v=m1, m2_u=m2, m2_v=m2, phi1_u=a, phi2_v=b)
        m = mixing_matrix(p, default_phase_table()).values
        assert np.abs(m @ np.linalg.inv(m) - np.eye(9)).max() < 1e-9

    @given(st.floats(0.1, 1.5), st.floats(0.1, 1.5))
    def test_depth_scales_columns(self, m1, m2):
        t = default_phase_table()
        base = mixing_matrix(params(m1_u=1, m1_v=1, m2_u=1, m2_v=1), t).values
        m = mixing_matrix(params(m1_u=m1, m1_v=m1, m2_u=m2, m2_v=m2), t).values
        assert np.allclose(m[:, 0], base[:, 0])
        assert np.allclose(m[:, 1:5], m1 * base[:, 1:5])
        assert np.allclose(m[:, 5:], m2 * base[:, 5:])

    def test_rows_reproduce_pattern(self):
        # pattern(r) = Σ_j M[n, j] exp(i2π p_j·r)
        p = params(m1_u=0.8, m1_v=0.6, m2_u=0.4, m2_v=0.3, phi1_u=0.2, phi1_v=1.0, phi2_u=2.0, phi2_v=3.0)
        t = default_phase_table()
        m = mixing_matrix(p, t).values
        shifts = component_shifts(p)
        y, x = np.mgrid[0:32, 0:32] * 65.0
        for n, entry in enumerate(t.entries):
            synth = sum(m[n, j] * np.exp(TWO_PI * 1j * (shifts[j, 0] * x + shifts[j, 1] * y)) for j in range(9))
            assert np.abs(synth - pattern(p, entry, 32, 65.0)).max() < 1e-12

    def test_u_v_swap_permutes_columns(self):
        t = default_phase_table()
        p = params(phi1_u=0, phi1_v=0, phi2_u=0, phi2_v=0)
        swapped = PhaseTable(t.entries[:, ::-1])
        q = IlluminationParams(k_u=p.k_v, k_v=p.k_u)
        a = mixing_matrix(p, t).values
        b = mixing_matrix(q, swapped).values
        # u-v flips sign (columns 1,2 swap), u+v and the second orders trade u for v
        perm = [0, 2, 1, 3, 4, 7, 8, 5, 6]
        assert np.allclose(a, b[:, perm], atol=1e-12)

    def test_degenerate_table(self):
        with pytest.raises(np.linalg.LinAlgError, match="degenerate"):
            mixing_matrix(params(), PhaseTable(np.zeros((9, 2))))

    def test_component_order_labels(self):
        assert COMPONENT_ORDER[0] == "0" and len(COMPONENT_ORDER) == 9
        s = component_shifts(params())
        assert np.allclose(s[1::2] + s[2::2], 0)
        assert np.allclose(s[6], 2 * np.asarray(params().k_u))


class TestTwoBeam:
    def test_condition_numbers(self):
        full = two_beam_matrix(1.0, 0.0)
        assert np.linalg.cond(full) == pytest.approx(2.0, rel=1e-9)
        unit = full.copy()
        unit[:, 1:] *= 2
        assert np.linalg.cond(unit) == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(0.1, 1.0), angles)
    def test_matrix_reproduces_pattern(self, depth, phase):
        p = TwoBeamParams(0.004, depths=(depth,) * 3, phases=(phase,) * 3)
        k = p.wavevectors()[1]
        m = two_beam_matrix(depth, phase, p.steps)
        y, x = np.mgrid[0:16, 0:16] * 65.0
        e = np.exp(TWO_PI * 1j * (k[0] * x + k[1] * y))
        for s in range(3):
            synth = m[s, 0] + m[s, 1] / e + m[s, 2] * e
            assert np.abs(synth - two_beam_pattern(p, 1, s, 16, 65.0)).max() < 1e-12

    def test_orientations(self):
        k = TwoBeamParams(1.0).wavevectors()
        assert np.allclose(np.linalg.norm(k, axis=1), 1)
        assert np.degrees(np.arctan2(k[2, 1], k[2, 0])) == pytest.approx(120)
