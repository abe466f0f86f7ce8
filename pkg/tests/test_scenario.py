import json

import numpy as np
import pytest

from stipt.scenario import (SPEED_OF_LIGHT, Scenario, ScenarioError,
                            default_desk_scenario, default_paper_scenario,
                            load_scenario, make_scenario, save_scenario,
                            scenario_from_dict, scenario_to_dict, upa_offsets)


def _base_config():
    return {
        "schema": "stipt-v1",
        "radio": {
            "band_start_hz": 300e9, "band_end_hz": 340e9, "subband_count": 2,
            "absorption": [0.0033, 0.0052], "eta": [0.7, 0.7],
            "noise_power_w": 1e-11, "g_t": 15.0, "g_r": 6.0,
        },
        "ap": {"reference": [0.0, 0.0, 2.0],
               "upa": {"rows": 2, "cols": 2, "pitch_m": 1e-4}},
        "ris": {"reference": [2.0, 0.0, 1.0],
                "upa": {"rows": 2, "cols": 2, "pitch_m": 1e-4, "axes": ["x", "z"]}},
        "users": [
            {"kind": "iu", "reference": [1.0, 1.5, 1.0],
             "upa": {"rows": 1, "cols": 2, "pitch_m": 1e-4, "axes": ["z", "x"]},
             "stream_count": 2},
            {"kind": "eu", "reference": [2.5, 1.0, 1.0],
             "upa": {"rows": 1, "cols": 2, "pitch_m": 1e-4, "axes": ["z", "x"]},
             "power_req_w": 1e-4},
        ],
        "p_t_max_w": 10.0,
        "p_ris_req_w": 1e-4,
        "ris_box": {"min": [0.25, 0.0, 1.0], "max": [6.0, 0.0, 1.0]},
        "penalty_fraction": 0.01,
        "rng_seed": 7,
    }


class TestLoad:
    def test_subband_centers_20ghz_bands(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(_base_config()))
        scn = load_scenario(str(path))
        np.testing.assert_allclose(scn.radio.subband_centers_hz,
                                   [310e9, 330e9], rtol=0, atol=0)

    def test_eta_out_of_range_names_field(self, tmp_path):
        cfg = _base_config()
        cfg["radio"]["eta"] = [1.5, 0.7]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(cfg))
        with pytest.raises(ScenarioError, match=r"eta\[0\]"):
            load_scenario(str(path))

    def test_single_band_wavelength_exact(self):
        cfg = _base_config()
        cfg["radio"]["subband_count"] = 1
        cfg["radio"]["absorption"] = [0.0]
        cfg["radio"]["eta"] = [0.7]
        scn = scenario_from_dict(cfg)
        f1 = scn.radio.subband_centers_hz[0]
        assert scn.radio.wavelengths_m[0] == SPEED_OF_LIGHT / f1

    def test_parse_failure(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="not valid JSON"):
            load_scenario(str(path))

    def test_missing_schema_tag(self):
        cfg = _base_config()
        cfg["schema"] = "other"
        with pytest.raises(ScenarioError, match="schema"):
            scenario_from_dict(cfg)

    def test_stream_count_bound(self):
        cfg = _base_config()
        cfg["users"][0]["stream_count"] = 5  # exceeds the two receive antennas
        with pytest.raises(ScenarioError, match=r"users\[0\].stream_count"):
            scenario_from_dict(cfg)

    def test_box_must_contain_initial_coordinate(self):
        cfg = _base_config()
        cfg["ris_box"] = {"min": [3.0, 0.0, 1.0], "max": [6.0, 0.0, 1.0]}
        with pytest.raises(ScenarioError, match="ris_box"):
            scenario_from_dict(cfg)


class TestRoundTrip:
    def test_serialize_parse_identical(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(_base_config()))
        scn = load_scenario(str(path))
        out = tmp_path / "echo.json"
        save_scenario(scn, str(out))
        again = load_scenario(str(out))
        assert scenario_to_dict(scn) == scenario_to_dict(again)

    def test_roundtrip_generated_scenario(self, tmp_path):
        scn = default_desk_scenario(seed=3)
        out = tmp_path / "gen.json"
        save_scenario(scn, str(out))
        again = load_scenario(str(out))
        assert scenario_to_dict(scn) == scenario_to_dict(again)


class TestDefaults:
    def test_power_budget(self):
        scn = default_paper_scenario()
        assert scn.p_t_max_w == 10.0

    def test_antenna_gains(self):
        scn = default_paper_scenario()
        assert scn.radio.g_t == 15.0
        assert scn.radio.g_r == 6.0

    def test_ap_grid_50_elements(self):
        scn = default_paper_scenario()
        off = scn.ap.offsets
        assert off.shape == (50, 3)
        assert np.all(off[0] == 0.0)
        # 5x10 grid: consecutive elements along the fast axis are one pitch apart
        gaps = np.linalg.norm(np.diff(off.reshape(5, 10, 3), axis=1), axis=-1)
        np.testing.assert_allclose(gaps, 1e-4, rtol=1e-12)

    def test_harvest_requirements(self):
        scn = default_paper_scenario()
        assert scn.p_ris_req_w == 1e-4
        np.testing.assert_allclose(scn.eu_power_req(), 1e-4)

    def test_desk_scale(self):
        scn = default_desk_scenario()
        assert scn.n_t == 16
        assert scn.n_ris == 64

    def test_seeded_placement_reproducible(self):
        a = make_scenario(seed=11)
        b = make_scenario(seed=11)
        assert scenario_to_dict(a) == scenario_to_dict(b)
        c = make_scenario(seed=12)
        assert scenario_to_dict(a) != scenario_to_dict(c)


class TestUpa:
    def test_first_offset_zero_and_pitch(self):
        off = upa_offsets(3, 4, 2e-4, axes=("y", "z"))
        assert np.all(off[0] == 0.0)
        grid = off.reshape(3, 4, 3)
        np.testing.assert_allclose(
            np.linalg.norm(np.diff(grid, axis=0), axis=-1), 2e-4, rtol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(np.diff(grid, axis=1), axis=-1), 2e-4, rtol=1e-12)
