import numpy as np
import pytest

import oblivforest as of


@pytest.fixture(scope="module")
def forest():
    return of.generate_forest(4, 60, [1] * 9, seed=3)


def test_generated_shapes(forest):
    assert forest.num_float_features == 4
    assert forest.num_binary_features == 60
    assert forest.num_trees == 9
    x = of.generate_features(37, 4, seed=1)
    assert x.shape == (37, 4)
    assert x.dtype == np.float32


def test_every_shipped_config_matches_naive(forest):
    x = of.generate_features(130, 4, seed=2)
    want = of.evaluate_sums(forest, x)
    configs = of.shipped_configs()
    assert len(configs) == 134
    for config in configs:
        np.testing.assert_array_equal(of.evaluate_sums(forest, x, config), want, err_msg=config)
    assert of.verify(forest, x) == []


def test_scores_apply_scale_and_bias(forest):
    x = of.generate_features(10, 4, seed=4)
    sums = of.evaluate_sums(forest, x).astype(np.float64)
    forest.scale = 0.25
    forest.bias = 2.0
    scores = of.evaluate(forest, x, "mx256:grouped-gather@256")
    np.testing.assert_allclose(scores, (sums - 2.0**31) * 0.25 + 2.0)


def test_round_trips(forest, tmp_path):
    assert of.forest_from_bytes(forest.to_bytes()) == forest
    path = str(tmp_path / "m.obfv")
    forest.save(path)
    assert of.load_forest(path) == forest
    x = of.generate_features(20, 4, seed=5)
    of.save_features(str(tmp_path / "d.obfx"), x)
    np.testing.assert_array_equal(of.load_features(str(tmp_path / "d.obfx")), x)


def test_errors_map_to_exceptions(forest):
    with pytest.raises(of.ConfigError):
        of.evaluate(forest, of.generate_features(3, 4), "mx999:naive")
    with pytest.raises(of.DimensionError):
        of.evaluate(forest, of.generate_features(3, 5))
    with pytest.raises(of.FormatError):
        of.forest_from_bytes(b"nope")
    assert issubclass(of.FormatError, of.Error)


def test_bench_record(forest):
    x = of.generate_features(64, 4, seed=6)
    r = of.bench(forest, x, "ord32:grouped-batch4@256", phase="apply", threads=2, reps=2)
    assert r["config"] == "ord32:grouped-batch4@256"
    assert r["phase"] == "apply"
    assert r["threads"] == 2
    assert r["mean_ns"] > 0
    assert r["stable"] in ("pass", "fail")
