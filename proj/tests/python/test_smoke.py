import json
import math

import numpy as np
import pytest

import hubbind


def small_config(seed=0):
    cfg = hubbind.with_seed(hubbind.desk_config(), seed)
    cfg["train"]["epochs"] = 2
    cfg["train"]["steps_per_epoch"] = 10
    cfg["eval"]["n_per_class"] = 20
    return cfg


def test_desk_config_round_trips():
    cfg = hubbind.desk_config()
    assert cfg["world"]["num_classes"] == 10
    assert hubbind.config_hash(cfg) == hubbind.config_hash(json.dumps(cfg))
    assert hubbind.config_hash(hubbind.with_seed(cfg, 3)) != hubbind.config_hash(cfg)


def test_make_world_is_seeded():
    a, b = hubbind.make_world(seed=1), hubbind.make_world(seed=1)
    assert a == b
    assert a != hubbind.make_world(seed=2)
    assert [m["name"] for m in a["modalities"]] == ["hub", "T", "M1", "M2"]


def test_info_nce_matches_a_numpy_reference():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(5, 8))
    k = rng.normal(size=(5, 8))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    k /= np.linalg.norm(k, axis=1, keepdims=True)
    logits = q @ k.T / 0.2
    ref = np.mean(np.log(np.exp(logits).sum(axis=1)) - np.diag(logits))
    loss, gq, gk = hubbind.info_nce(q, k, 0.2)
    assert math.isclose(loss, ref, rel_tol=0, abs_tol=1e-12)
    assert gq.shape == (5, 8) and gk.shape == (5, 8)

    one = q[:1]
    assert hubbind.info_nce(one, k[:1], 0.07)[0] == 0.0


def test_train_and_evaluate(tmp_path):
    cfg = small_config()
    ckpt = tmp_path / "ckpt.json"
    report = hubbind.train(cfg, ckpt)
    assert ckpt.is_file()
    assert report["meta"]["config_hash"] == hubbind.config_hash(cfg)
    assert report["metrics"]["train.M1.loss_last"] < report["metrics"]["train.M1.loss_first"]

    trained = hubbind.evaluate(cfg, ckpt)
    assert trained == hubbind.evaluate(cfg, ckpt)
    assert trained["flags"]["zeroshot.M1_vs_T.emergent"] is True
    fresh = hubbind.evaluate(cfg)
    assert fresh["metrics"]["zeroshot.M1_vs_T.accuracy"] != trained["metrics"]["zeroshot.M1_vs_T.accuracy"]


def test_run_experiment_is_deterministic():
    cfg = small_config()
    assert hubbind.run_experiment(cfg) == hubbind.run_experiment(cfg)


def test_errors_map_to_python_exceptions(tmp_path):
    cfg = small_config()
    del cfg["train"]["epochs"]
    with pytest.raises(hubbind.ConfigError, match="train.epochs"):
        hubbind.train(cfg)
    with pytest.raises(ValueError):
        hubbind.info_nce(np.zeros((2, 3)), np.zeros((3, 3)), 0.1)
    with pytest.raises(OSError):
        hubbind.evaluate(small_config(), tmp_path / "missing.json")
