import numpy as np
import pytest

from stipt.scenario import SPEED_OF_LIGHT, default_desk_scenario, make_scenario
from stipt.thz_channel import (GeometryError, build_channels, cascade_gain,
                               harvested_powers, los_gain,
                               ris_input_output_powers, steering_phase,
                               steering_vector)


class TestSteeringPhase:
    def test_zero_offset(self):
        assert steering_phase(np.array([1.0, 2.0, 3.0]), np.zeros(3), 1e-3) == 0.0

    def test_quarter_wavelength_parallel(self):
        lam = 1e-3
        d = np.array([2.0, 0.0, 0.0])
        off = np.array([lam / 4.0, 0.0, 0.0])
        assert steering_phase(d, off, lam) == pytest.approx(np.pi / 2.0, rel=1e-12)

    def test_perpendicular_offset(self):
        d = np.array([1.0, 0.0, 0.0])
        off = np.array([0.0, 5e-4, 0.0])
        assert steering_phase(d, off, 1e-3) == 0.0

    def test_zero_direction_rejected(self):
        with pytest.raises(GeometryError):
            steering_phase(np.zeros(3), np.ones(3), 1e-3)


class TestLosGain:
    def test_reference_magnitude(self):
        # oracle: direct evaluation of g_r*g_t*lambda/(4 pi d)
        lam = SPEED_OF_LIGHT / 310e9
        expected = 6.0 * 15.0 * lam / (4.0 * np.pi * 1.0)
        h = los_gain(1.0, lam, 0.0, g_t=15.0, g_r=6.0)
        assert abs(h) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(6.93e-3, rel=1e-3)

    def test_absorption_decay_monotone(self):
        lam = 1e-3
        mags = [abs(los_gain(2.0, lam, kf, 1.0, 1.0)) for kf in (0.0, 0.1, 1.0, 10.0)]
        assert all(a > b for a, b in zip(mags, mags[1:]))
        assert abs(los_gain(2.0, lam, 50.0, 1.0, 1.0)) < 1e-20

    def test_phase_periodicity(self):
        lam = 1e-3
        h = los_gain(lam, lam, 0.0, 1.0, 1.0)
        assert np.angle(h) == pytest.approx(0.0, abs=1e-9)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(GeometryError):
            los_gain(0.0, 1e-3, 0.0, 1.0, 1.0)


class TestCascadeGain:
    def test_reference_magnitude(self):
        g = cascade_gain(1.0, 1.0, 1e-3, 0.0, 1.0, 1.0)
        expected = 1e-3 / (8.0 * np.sqrt(np.pi ** 3))
        assert abs(g) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(2.244e-5, rel=1e-3)

    def test_swap_symmetry(self):
        a = cascade_gain(1.3, 0.4, 1e-3, 0.27, 2.0, 3.0)
        b = cascade_gain(0.4, 1.3, 1e-3, 0.27, 2.0, 3.0)
        assert a == pytest.approx(b, rel=1e-15)

    def test_absorption_law(self):
        base = cascade_gain(1.5, 2.5, 1e-3, 0.0, 1.0, 1.0)
        kf = 0.3
        attenuated = cascade_gain(1.5, 2.5, 1e-3, kf, 1.0, 1.0)
        assert abs(attenuated) == pytest.approx(
            abs(base) * np.exp(-0.5 * kf * 4.0), rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(GeometryError):
            cascade_gain(-1.0, 1.0, 1e-3, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def desk():
    scn = default_desk_scenario(seed=5)
    return scn


class TestBuildChannels:
    def test_dark_ris_composite_equals_direct(self, desk):
        ch = build_channels(desk, desk.ris.reference, np.zeros(desk.n_ris, complex))
        np.testing.assert_allclose(ch.Z, ch.H_direct, rtol=0, atol=0)
        np.testing.assert_array_equal(ch.G, 0.0)

    def test_single_element_phase_linearity(self):
        scn = make_scenario(seed=2, ris_grid=(1, 1), ap_grid=(2, 2))
        mags, phases = [], []
        for psi in (0.0, 0.7, 1.9):
            ch = build_channels(scn, scn.ris.reference,
                                np.array([np.exp(1j * psi)]))
            mags.append(np.abs(ch.G[0, 0, 0, 0]))
            phases.append(np.angle(ch.G[0, 0, 0, 0]))
        np.testing.assert_allclose(mags, mags[0], rtol=1e-12)
        diffs = np.mod(np.diff(phases) - np.diff([0.0, 0.7, 1.9]), 2 * np.pi)
        np.testing.assert_allclose(np.minimum(diffs, 2 * np.pi - diffs), 0.0,
                                   atol=1e-10)

    def test_cascade_rank_one(self, desk):
        rng = np.random.default_rng(0)
        phi = rng.uniform(0.2, 0.9, desk.n_ris) * np.exp(
            1j * rng.uniform(0, 2 * np.pi, desk.n_ris))
        ch = build_channels(desk, np.array([1.7, 0.0, 1.0]), phi)
        for k in range(ch.n_subbands):
            for u in range(ch.n_users):
                sv = np.linalg.svd(ch.G[k, u], compute_uv=False)
                assert sv[0] > 0
                assert sv[1] / sv[0] < 1e-12

    def test_unit_modulus_vectors(self, desk):
        ch = build_channels(desk, desk.ris.reference,
                            0.5 * np.ones(desk.n_ris, complex))
        for arr in (ch.v_dir, ch.r_dir, ch.v_ris, ch.e_ris, ch.e_out, ch.r_ris,
                    ch.u_row):
            np.testing.assert_allclose(np.abs(arr), 1.0, atol=1e-12)
        # first element is the reference: entry 1 equals 1 + 0j
        assert np.all(ch.v_dir[..., 0] == 1.0)
        assert np.all(ch.e_ris[..., 0] == 1.0)

    def test_composite_rebuilds_from_parts(self, desk):
        rng = np.random.default_rng(3)
        phi = rng.uniform(0, 1, desk.n_ris) * np.exp(
            1j * rng.uniform(0, 2 * np.pi, desk.n_ris))
        ch = build_channels(desk, np.array([2.5, 0.0, 1.0]), phi)
        for k in range(ch.n_subbands):
            for u in range(ch.n_users):
                G = ch.g_cascade[k, u] * (ch.u_row[k, u] @ phi) * np.outer(
                    ch.r_ris[k, u], np.conj(ch.v_ris[k]))
                np.testing.assert_allclose(ch.Z[k, u], ch.H_direct[k, u] + G,
                                           rtol=1e-12, atol=0)

    def test_coincident_coordinates_rejected(self, desk):
        with pytest.raises(GeometryError):
            build_channels(desk, desk.ap.reference, np.zeros(desk.n_ris, complex))


def _uniform_precoders(scn, power):
    K = scn.radio.subband_count
    iu = scn.iu_indices
    d = scn.stream_count(iu[0])
    per = np.sqrt(power / (K * len(iu) * d))
    F = []
    for k in range(K):
        F.append([per * np.eye(scn.n_t, d, dtype=complex) for _ in iu])
    return F


class TestHarvestedPowers:
    def test_full_reflection_harvests_nothing(self, desk):
        phi = np.exp(1j * np.linspace(0, 3, desk.n_ris))
        ch = build_channels(desk, desk.ris.reference, phi)
        F = _uniform_precoders(desk, 9.0)
        p_ris, _ = harvested_powers(ch, F, phi, np.array(desk.radio.eta), desk)
        assert p_ris == pytest.approx(0.0, abs=1e-18)

    def test_dark_ris_harvests_everything(self, desk):
        phi = np.zeros(desk.n_ris, complex)
        ch = build_channels(desk, desk.ris.reference, phi)
        F = _uniform_precoders(desk, 9.0)
        q_in, q_out = ris_input_output_powers(ch, F, phi)
        np.testing.assert_array_equal(q_out, 0.0)
        p_ris, _ = harvested_powers(ch, F, phi, np.array(desk.radio.eta), desk)
        assert p_ris == pytest.approx(float(np.sum(desk.radio.eta * q_in)), rel=1e-12)

    def test_scalar_capture(self):
        # single transmit antenna, one sub-band: P_RIS = eta * |H p|^2 * N
        scn = make_scenario(seed=4, ap_grid=(1, 1), ris_grid=(2, 2), iu_count=1,
                            eu_count=1, streams=1, subband_count=1,
                            absorption=(0.0,), eta=1.0)
        phi = np.zeros(scn.n_ris, complex)
        ch = build_channels(scn, scn.ris.reference, phi)
        p = 0.37
        F = [[np.array([[p + 0.0j]])]]
        p_ris, _ = harvested_powers(ch, F, phi, np.array(scn.radio.eta), scn)
        expected = abs(ch.H_ap_ris_gain[0] * p) ** 2 * scn.n_ris
        assert p_ris == pytest.approx(expected, rel=1e-12)

    def test_partial_absorption_psd(self, desk):
        # q_in - q_out >= 0 whenever all |phi_n| <= 1
        rng = np.random.default_rng(11)
        F = _uniform_precoders(desk, 10.0)
        ch0 = build_channels(desk, desk.ris.reference, np.zeros(desk.n_ris, complex))
        for _ in range(1000):
            phi = rng.uniform(0, 1, desk.n_ris) * np.exp(
                1j * rng.uniform(0, 2 * np.pi, desk.n_ris))
            q_in, q_out = ris_input_output_powers(ch0, F, phi)
            assert np.all(q_in - q_out >= -1e-18)

    def test_eu_power_positive(self, desk):
        phi = 0.5 * np.ones(desk.n_ris, complex)
        ch = build_channels(desk, desk.ris.reference, phi)
        F = _uniform_precoders(desk, 10.0)
        _, p_eu = harvested_powers(ch, F, phi, np.array(desk.radio.eta), desk)
        assert p_eu.shape == (len(desk.eu_indices),)
        assert np.all(p_eu > 0)


class TestScalarExpansion:
    def test_ap_ris_power_rebuild(self, desk):
        # tr(F^H Hk^H Hk F) == |Hk|^2 * N * ||v^H F||^2
        ch = build_channels(desk, desk.ris.reference, np.zeros(desk.n_ris, complex))
        rng = np.random.default_rng(9)
        F = rng.standard_normal((desk.n_t, 2)) + 1j * rng.standard_normal((desk.n_t, 2))
        for k in range(ch.n_subbands):
            direct = float(np.sum(np.abs(ch.H_ap_ris[k] @ F) ** 2))
            vhF = np.conj(ch.v_ris[k]) @ F
            scalar = abs(ch.H_ap_ris_gain[k]) ** 2 * desk.n_ris \
                * float(np.sum(np.abs(vhF) ** 2))
            assert direct == pytest.approx(scalar, rel=1e-10)

    def test_cascade_magnitude_matches_placement(self, desk):
        ch = build_channels(desk, np.array([1.2, 0.0, 1.0]),
                            np.zeros(desk.n_ris, complex))
        lam = ch.wavelengths[0]
        kf = desk.radio.absorption[0]
        for u in range(ch.n_users):
            expected = desk.radio.g_t * desk.radio.g_r * lam \
                / (8.0 * np.sqrt(np.pi ** 3) * ch.r_u[u] * ch.d0) \
                * np.exp(-0.5 * kf * (ch.r_u[u] + ch.d0))
            assert abs(ch.g_cascade[0, u]) == pytest.approx(expected, rel=1e-12)
