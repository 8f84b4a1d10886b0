import json

import pytest

from aimspose.config import ExperimentConfig, pipeline_fit_config
from aimspose.errors import ConfigError


def test_defaults_valid_and_round_trip(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.fit == pipeline_fit_config()
    path = tmp_path / "c.json"
    cfg.save(path)
    assert ExperimentConfig.load(path) == cfg
    assert "shift" in json.loads(path.read_text())


def test_partial_document_merges_defaults():
    cfg = ExperimentConfig.from_dict({"fit": {"max_iters": 7}, "shift": {"keypoint_noise_px": 3.0}, "seeds": [1, 2]})
    assert cfg.fit.max_iters == 7 and cfg.fit.multi_start_count == pipeline_fit_config().multi_start_count
    assert cfg.shift.keypoint_noise_px == 3.0 and cfg.seeds == (1, 2)


def test_hash_ignores_seeds_and_output():
    a = ExperimentConfig()
    assert a.hash() == ExperimentConfig(seeds=(3, 4), out_dir="elsewhere").hash()
    assert a.hash() != ExperimentConfig.from_dict({"train": {"epochs": 2}}).hash()


@pytest.mark.parametrize(
    "doc",
    [
        {"seeds": []},
        {"seeds": [1, 1]},
        {"source_domains": ["Real"]},
        {"lambdas": [0.5, 0.0]},
        {"unknown": 1},
        {"train": {"epochs": -1}},
        {"lmmd": {"kernel": "cosine"}},
        {"fit": {"method": "newton"}},
        {"hipc": {"bogus": True}},
        {"dataset": {"per_class": 0}},
        [1, 2],
    ],
)
def test_invalid_documents(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        ExperimentConfig.load(bad)
