import numpy as np
import pytest

from robustdata.dataset import Dataset, subsample
from robustdata.errors import DataError, ParameterError
from robustdata.rng import RngStream


def make_balanced(n=100):
    rng = RngStream(0)
    X = rng.normal(0, 1, (n, 3))
    y = np.array([1, -1] * (n // 2))
    return Dataset(X, y)


def test_shape_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((4, 2)), np.zeros(3, dtype=int))
    with pytest.raises(DataError):
        Dataset(np.zeros(4), np.zeros(4, dtype=int))


def test_value_range_enforced():
    with pytest.raises(DataError):
        Dataset(np.array([[2.0]]), np.array([1]), value_range=(0.0, 1.0))
    ds = Dataset(np.array([[0.5]]), np.array([1]), value_range=(0.0, 1.0))
    assert ds.value_range == (0.0, 1.0)


def test_non_finite_features_rejected():
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), np.array([1]))


def test_replace_features_keeps_labels():
    ds = make_balanced()
    out = ds.replace_features(ds.features * 2.0)
    np.testing.assert_array_equal(out.labels, ds.labels)


def test_subsample_full_fraction_is_identity():
    ds = make_balanced()
    out = subsample(ds, 1.0, RngStream(1))
    assert out.n == ds.n
    np.testing.assert_array_equal(np.sort(out.labels), np.sort(ds.labels))
    # same rows, possibly reordered
    assert sorted(map(tuple, out.features.tolist())) == sorted(map(tuple, ds.features.tolist()))


def test_subsample_stratified():
    ds = make_balanced(100)
    out = subsample(ds, 0.5, RngStream(2))
    assert out.n == 50
    per_class = [(out.labels == c).sum() for c in (-1, 1)]
    assert all(abs(k - 25) <= 1 for k in per_class)


def test_subsample_rounding_within_one_per_class():
    rng = RngStream(3)
    y = np.array([1] * 70 + [-1] * 30)
    ds = Dataset(rng.normal(0, 1, (100, 2)), y)
    out = subsample(ds, 0.33, rng)
    assert out.n == 33
    assert abs((out.labels == 1).sum() - 0.33 * 70) <= 1
    assert abs((out.labels == -1).sum() - 0.33 * 30) <= 1


def test_subsample_rejects_bad_fraction():
    ds = make_balanced()
    for frac in (0.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            subsample(ds, frac, RngStream(0))


def test_subsample_deterministic():
    ds = make_balanced()
    a = subsample(ds, 0.3, RngStream(7))
    b = subsample(ds, 0.3, RngStream(7))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
