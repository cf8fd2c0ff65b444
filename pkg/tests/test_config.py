import numpy as np
import pytest
import yaml

from bilinq.config import config_from_dict, example_registry, load_config
from bilinq.errors import ConfigError
from bilinq.excitation import SignalKind


class TestExamples:
    def test_hydraulic(self):
        sys, cfg = example_registry("hydraulic")
        assert (sys.n, sys.m, cfg.N) == (3, 3, 15)
        np.testing.assert_array_equal(sys.A, np.diag([0.99997, -0.99997, 0.99997]))
        np.testing.assert_array_equal(sys.B, np.diag([200.0, 6.0, 10.0]))
        np.testing.assert_array_equal(sys.D[0], [[0, 0, 0], [0, 0, 0], [0, 0.03, 0.03]])
        np.testing.assert_array_equal(sys.D[1], [[0, -0.00007, 0], [0, 0, 0], [0, 0, 0]])
        np.testing.assert_array_equal(sys.D[2], [[0, 0, -0.00007], [0, 0, 0], [0, 0, 0]])
        np.testing.assert_array_equal(cfg.cost.Lambda, np.eye(6))
        assert cfg.cost.gamma == 0.9 and cfg.horizon == 2000 and cfg.signal.kind is SignalKind.PRBS

    def test_nuclear(self):
        sys, cfg = example_registry("nuclear")
        assert (sys.n, sys.m, cfg.N) == (2, 1, 5)
        ts, beta, l, lam = 0.001, 0.157e-3, 8.36e-4, 0.0120
        assert sys.A[0, 0] == pytest.approx(1194.976, abs=1e-3)
        np.testing.assert_allclose(sys.A, [[(1 - ts) / l, lam * ts], [0, 1 - lam * ts]], rtol=1e-15)
        np.testing.assert_allclose(sys.D[0][:, 0], np.array([(1 - beta) / l, beta / l]) * ts, rtol=1e-15)
        np.testing.assert_array_equal(sys.D[1], 0.0)
        np.testing.assert_array_equal(sys.B, 0.0)
        np.testing.assert_array_equal(cfg.cost.Lambda, np.diag([1.0, 0.0, 0.1]))

    def test_unknown(self):
        with pytest.raises(ConfigError):
            example_registry("tokamak")

    def test_override(self):
        sys, _ = example_registry("nuclear", plant={"example": "nuclear", "overrides": {"A[0,0]": 0.5, "D[0,1,0]": 2}})
        assert sys.A[0, 0] == 0.5 and sys.D[0, 1, 0] == 2.0


class TestValidation:
    def base(self, **kw):
        raw = {"plant": {"A": [[0.5]], "B": [[1.0]], "D": [[[0.1]]]}, "cost": {"diag": [1, 1]}, "x0": [1.0]}
        raw.update(kw)
        return raw

    def test_inline_plant(self):
        cfg = config_from_dict(self.base())
        assert cfg.plant.build().D[0, 0, 0] == 0.1 and cfg.N == 3

    @pytest.mark.parametrize("kw", [
        dict(horizon=3),
        dict(mode="sideways"),
        dict(x0=[1.0, 2.0]),
        dict(cost={"diag": [1, 1, 1]}),
        dict(cost={"diag": [1, 0]}),
        dict(cost={"diag": [1, 1], "gamma": 1.0}),
        dict(signal={"amplitude": 0.0}),
        dict(signal={"kind": "Chirp"}),
        dict(signal={"kind": "GBN", "switch_probability": 2}),
        dict(signal={"kind": "SumOfSinusoids", "sinusoids": [[0.1, 1, 0]]}),
        dict(iteration={"epsilon": -1}),
        dict(plant={"A": [[1.0, 0.0]], "B": [[1.0]]}),
        dict(plant={"example": "nuclear", "overrides": {"Q[0]": 1}}),
        dict(plant={"example": "nuclear", "overrides": {"A[5,5]": 1}}),
    ])
    def test_rejected(self, kw):
        with pytest.raises(ConfigError):
            config_from_dict(self.base(**kw))

    def test_sinusoid_count_ok(self):
        cfg = config_from_dict(self.base(signal={"kind": "SumOfSinusoids", "sinusoids": [[0.1, 1, 0], [0.3, 1, 1]]}))
        assert cfg.signal.distinct_frequencies() == 2


def test_yaml_round_trip(tmp_path):
    _, cfg = example_registry("hydraulic", seed=7, signal={"kind": "GBN", "switch_probability": 0.3})
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()
    assert load_config(path, seed=9).signal.seed == 9


def test_bad_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("plant: [unclosed")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_emitted_example_is_valid_yaml():
    _, cfg = example_registry("nuclear")
    raw = yaml.safe_load(cfg.to_yaml())
    assert raw["plant"] == {"example": "nuclear"} and raw["x0"] == [1.0, 1.0]
