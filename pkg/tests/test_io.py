import json
import struct

import numpy as np
import pytest

from robustdata.config import ExperimentConfig
from robustdata.datafile import read_dataset, write_dataset
from robustdata.dataset import Dataset
from robustdata.errors import FormatError, ParameterError
from robustdata.rng import RngStream
from robustdata.theory import DistributionSpec, sample


def synthetic(n=20, m=3, value_range=None):
    rng = RngStream(0)
    X = rng.normal(0, 1, (n, m))
    if value_range is not None:
        X = np.clip(X, *value_range)
    y = np.where(rng.uniform(0, 1, n) < 0.5, 1, -1)
    return Dataset(X, y, value_range, {"generator": "test", "seed": 0})


def test_roundtrip_exact(tmp_path):
    ds = synthetic()
    path = tmp_path / "d.rds"
    write_dataset(path, ds)
    loaded = read_dataset(path)
    np.testing.assert_array_equal(loaded.features, ds.features)
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    assert loaded.value_range == ds.value_range
    assert loaded.provenance == ds.provenance


def test_roundtrip_byte_identical(tmp_path):
    ds = sample(DistributionSpec(d=5, mu=0.3, p=0.9), 64, RngStream(3))
    p1, p2 = tmp_path / "a.rds", tmp_path / "b.rds"
    write_dataset(p1, ds)
    write_dataset(p2, read_dataset(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_roundtrip_with_value_range(tmp_path):
    ds = synthetic(value_range=(-2.0, 2.0))
    path = tmp_path / "r.rds"
    write_dataset(path, ds)
    assert read_dataset(path).value_range == (-2.0, 2.0)


def test_single_row_file_size(tmp_path):
    ds = Dataset(np.array([[0.5]]), np.array([1]), None, {})
    path = tmp_path / "one.rds"
    write_dataset(path, ds)
    header = 4 + 2 + 4 + 4 + 4 + 1 + 8 + 8
    meta = len(json.dumps({}, sort_keys=True, separators=(",", ":")).encode())
    assert path.stat().st_size == header + 8 + 4 + 4 + meta


def test_corrupt_magic_reports_offset_zero(tmp_path):
    path = tmp_path / "bad.rds"
    ds = synthetic()
    write_dataset(path, ds)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as err:
        read_dataset(path)
    assert err.value.offset == 0


def test_bad_version_reports_offset(tmp_path):
    path = tmp_path / "ver.rds"
    write_dataset(path, synthetic())
    blob = bytearray(path.read_bytes())
    blob[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as err:
        read_dataset(path)
    assert err.value.offset == 4


def test_truncation_detected(tmp_path):
    path = tmp_path / "trunc.rds"
    write_dataset(path, synthetic())
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError):
        read_dataset(path)


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------


def test_config_defaults_fill_in():
    cfg = ExperimentConfig({})
    assert cfg.section("distribution")["d"] == 100
    assert cfg.attack_config().eps == 0.8
    assert cfg.train_config(3).seed == 3


def test_config_rejects_unknown_section():
    with pytest.raises(ParameterError):
        ExperimentConfig({"bogus": {}})


def test_config_rejects_unknown_key():
    with pytest.raises(ParameterError):
        ExperimentConfig({"attack": {"epsilon": 0.1}})


def test_config_hash_key_order_invariant():
    a = ExperimentConfig({"distribution": {"d": 50, "mu": 0.3}})
    b = ExperimentConfig({"distribution": {"mu": 0.3, "d": 50}})
    assert a.config_hash() == b.config_hash()


def test_config_hash_spelling_out_defaults_is_invariant():
    a = ExperimentConfig({})
    b = ExperimentConfig({"train": {"lr": 0.01}})  # the default value, made explicit
    assert a.config_hash() == b.config_hash()


def test_config_hash_changes_with_values():
    a = ExperimentConfig({})
    b = ExperimentConfig({"train": {"lr": 0.02}})
    assert a.config_hash() != b.config_hash()


def test_config_from_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"distribution": {"d": 10}}))
    cfg = ExperimentConfig.from_file(path)
    assert cfg.distribution_spec().d == 10
