import numpy as np
import pytest

from partseg.config import (ConfigError, ExperimentConfig, apply_overrides, format_config, load_config,
                            parse_config, save_config, synthetic_config)
from partseg.dataset import DatasetError, load_dataset, save_dataset
from partseg.synthetic import make_dataset


def test_config_round_trip(tmp_path):
    cfg = apply_overrides(synthetic_config(seed=7), spin_only=True, oracle_labels=True)
    path = tmp_path / "exp.ini"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert format_config(back) == format_config(cfg)
    assert back.descriptor_config().spin_only and back.teacher_config().seed == 7


def test_missing_keys_keep_defaults():
    cfg = parse_config("[hdp]\ngamma = 2.5\n")
    assert cfg.hdp.gamma == 2.5
    assert cfg.descriptor == ExperimentConfig().descriptor


@pytest.mark.parametrize("text, fragment", [
    ("[hdp]\nbogus = 1\n", "unknown key hdp.bogus"),
    ("[nope]\nx = 1\n", "unknown section"),
    ("[run]\nspin_only = maybe\n", "run.spin_only"),
    ("[hdp]\nK = 1\n", "[hdp]"),
    ("[descriptor]\nspin_only = true\n", "unknown key descriptor.spin_only"),
])
def test_bad_config(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "x.ini")
    assert fragment in str(info.value)


def test_optional_values_parse_none():
    cfg = parse_config("[descriptor]\nspin_radius = none\n")
    assert cfg.descriptor.spin_radius is None


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_dataset_round_trip(tmp_path):
    clouds = make_dataset(2, seed=0, n_points=64)
    save_dataset(clouds, tmp_path)
    back = load_dataset(tmp_path)
    key = lambda c: (c.category, c.points[0].tolist())
    for a, b in zip(sorted(clouds, key=key), sorted(back, key=key)):
        assert a.category == b.category
        np.testing.assert_array_equal(a.points, b.points)
        assert a.part_labels.tolist() == b.part_labels.tolist()


def test_dataset_without_part_names(tmp_path):
    (tmp_path / "box").mkdir()
    (tmp_path / "box" / "b0.txt").write_text("0 0 0 1\n1 0 0 2\n")
    (cloud,) = load_dataset(tmp_path)
    assert cloud.part_labels.tolist() == ["box_1", "box_2"]
    assert cloud.category == "box"


def test_dataset_errors_name_the_file(tmp_path):
    with pytest.raises(DatasetError, match="not a directory"):
        load_dataset(tmp_path / "missing")
    with pytest.raises(DatasetError, match="no clouds"):
        load_dataset(tmp_path)
    (tmp_path / "box").mkdir()
    (tmp_path / "box" / "bad.txt").write_text("0 0 0 1\n0 0\n")
    with pytest.raises(DatasetError, match="bad.txt"):
        load_dataset(tmp_path)
    (tmp_path / "box" / "bad.txt").write_text("0 0 0 5\n")
    (tmp_path / "box" / "parts.txt").write_text("1 lid\n")
    with pytest.raises(DatasetError, match="not listed"):
        load_dataset(tmp_path)
