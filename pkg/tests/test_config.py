"""Experiment-file loading and validation."""

import copy
import json

import numpy as np
import pytest

from dampc.config import (SCHEMA_VERSION, ConfigError, ExperimentConfig,
                          config_from_dict, load_config)

from conftest import CONFIG_PATH


@pytest.fixture()
def doc():
    with open(CONFIG_PATH) as f:
        return json.load(f)


class TestBundledConfig:
    def test_loads(self, bench_cfg):
        cfg = bench_cfg
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.system.n == 2 and cfg.system.m == 2 and cfg.system.p == 2
        assert cfg.N == 8 and cfg.n_hat == (2, 5)
        assert cfg.n_theta == 58 and cfg.H_theta is None
        assert cfg.window == 10 and cfg.mu0 == 0.5
        assert cfg.T == 10 and len(cfg.seeds) == 20
        assert cfg.disturbance == "uniform"
        assert np.allclose(cfg.theta_star, [0.95, 0.3])
        assert np.allclose(cfg.x0, [0.2, 1.3])
        assert cfg.source is not None and cfg.source.endswith(".json")

    def test_round_trip_through_dict(self, doc, bench_cfg):
        cfg = config_from_dict(doc)
        assert cfg.source is None
        assert np.array_equal(cfg.K, bench_cfg.K)
        assert cfg.seeds == bench_cfg.seeds


def _expect_error(doc, fragment):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(doc)
    assert fragment in str(exc.value)


class TestValidation:
    def test_not_a_mapping(self):
        _expect_error([1, 2], "JSON object")

    def test_wrong_version(self, doc):
        doc["version"] = SCHEMA_VERSION + 1
        _expect_error(doc, "schema version")

    def test_missing_section(self, doc):
        del doc["tube"]
        _expect_error(doc, "missing section 'tube'")

    def test_missing_field(self, doc):
        del doc["run"]["x0"]
        _expect_error(doc, "run.x0")

    def test_non_numeric_matrix(self, doc):
        doc["weights"]["Q"] = [["a", 0], [0, 1]]
        _expect_error(doc, "weights.Q")

    def test_non_finite_entry(self, doc):
        doc["run"]["x0"] = [float("nan"), 0.0]
        _expect_error(doc, "run.x0")

    def test_mismatched_system(self, doc):
        doc["system"]["B"] = doc["system"]["B"][:2]
        _expect_error(doc, "system")

    def test_vertex_outside_cross_section(self, doc):
        doc["tube"]["vertices"][0] = [2.0, 0.0]
        _expect_error(doc, "outside X0")

    def test_bad_horizon(self, doc):
        doc["tube"]["N"] = 0
        _expect_error(doc, "tube.N")

    def test_prediction_exceeds_horizon(self, doc):
        doc["tube"]["n_hat"] = [2, 9]
        _expect_error(doc, "tube.n_hat")

    def test_both_direction_specs(self, doc):
        doc["identification"]["H_theta"] = [[1.0, 0.0], [-1.0, 0.0],
                                            [0.0, 1.0], [0.0, -1.0]]
        _expect_error(doc, "exactly one")

    def test_neither_direction_spec(self, doc):
        del doc["identification"]["n_theta"]
        _expect_error(doc, "exactly one")

    def test_too_few_directions(self, doc):
        doc["identification"]["n_theta"] = 3
        _expect_error(doc, "n_theta")

    def test_explicit_directions_accepted(self, doc):
        del doc["identification"]["n_theta"]
        doc["identification"]["H_theta"] = [[1.0, 0.0], [-1.0, 0.0],
                                            [0.0, 1.0], [0.0, -1.0]]
        cfg = config_from_dict(doc)
        assert cfg.H_theta.shape == (4, 2) and cfg.n_theta is None

    def test_estimate_outside_set(self, doc):
        doc["identification"]["theta_hat0"] = [1.5, 0.0]
        _expect_error(doc, "theta_hat0")

    def test_truth_outside_set(self, doc):
        doc["truth"]["theta_star"] = [0.0, -2.0]
        _expect_error(doc, "theta_star")

    def test_negative_run_length(self, doc):
        doc["run"]["T"] = -1
        _expect_error(doc, "run.T")

    def test_empty_seeds(self, doc):
        doc["run"]["seeds"] = []
        _expect_error(doc, "run.seeds")

    def test_unknown_disturbance_law(self, doc):
        doc["run"]["disturbance"] = "gaussian"
        _expect_error(doc, "run.disturbance")

    def test_indefinite_weight(self, doc):
        doc["weights"]["R"] = [[1.0, 0.0], [0.0, -1.0]]
        _expect_error(doc, "weights.R")

    def test_asymmetric_weight(self, doc):
        doc["weights"]["Q"] = [[1.0, 0.5], [0.0, 1.0]]
        _expect_error(doc, "weights.Q")


class TestLoadErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(tmp_path / "nope.json")
        assert "cannot read" in str(exc.value)

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError) as exc:
            load_config(bad)
        assert "not valid JSON" in str(exc.value)
