import math

import numpy as np
import pytest

from neuromia.data import (
    Dataset,
    FormatError,
    ParseError,
    load_idx,
    load_iris,
    load_wdbc,
    make_split_plan,
    normalize,
    split_plan_from_partition,
    write_idx,
)


def test_iris_shape_and_histogram(data_dir):
    ds = load_iris(data_dir / "iris.data")
    assert ds.features.shape == (150, 4) and ds.num_classes == 3
    assert np.bincount(ds.labels).tolist() == [50, 50, 50]
    assert ds.class_names == ("Iris-setosa", "Iris-versicolor", "Iris-virginica")


def test_wdbc_shape_and_histogram(data_dir):
    ds = load_wdbc(data_dir / "wdbc.data")
    assert ds.features.shape == (569, 30) and ds.num_classes == 2
    assert int(ds.labels.sum()) == 212 and int((ds.labels == 0).sum()) == 357


def test_iris_malformed_row_names_line(tmp_path, data_dir):
    lines = (data_dir / "iris.data").read_text().splitlines()
    lines[6] = "5.1,3.5,1.4"
    p = tmp_path / "bad.data"
    p.write_text("\n".join(lines))
    with pytest.raises(ParseError, match=r"bad.data:7"):
        load_iris(p)


def test_iris_wrong_class_count(tmp_path):
    p = tmp_path / "two.data"
    p.write_text("1,2,3,4,a\n1,2,3,4,b\n")
    with pytest.raises(ParseError, match="3 classes"):
        load_iris(p)


def test_wdbc_bad_diagnosis(tmp_path):
    p = tmp_path / "bad.data"
    p.write_text("1,X," + ",".join(["0.5"] * 30) + "\n")
    with pytest.raises(ParseError, match="M or B"):
        load_wdbc(p)


def test_idx_loading(data_dir):
    m = data_dir / "mnist"
    ds = load_idx(m / "train-images-idx3-ubyte", m / "train-labels-idx1-ubyte", limit=1000)
    assert ds.features.shape == (1000, 784) and ds.num_classes == 10
    assert 0.0 <= ds.features.min() and ds.features.max() <= 1.0


def test_idx_roundtrip_and_scaling(tmp_path):
    imgs = np.zeros((3, 2, 2), dtype=np.uint8)
    imgs[1, 0, 1] = 255
    write_idx(tmp_path / "i", imgs)
    write_idx(tmp_path / "l", np.array([0, 9, 4], dtype=np.uint8))
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.features.shape == (3, 4)
    assert ds.features[1, 1] == 1.0 and ds.labels.tolist() == [0, 9, 4]


def test_idx_wrong_magic_and_count(tmp_path):
    write_idx(tmp_path / "l", np.array([1, 2], dtype=np.uint8))
    write_idx(tmp_path / "i", np.zeros((3, 2, 2), dtype=np.uint8))
    with pytest.raises(FormatError, match="magic"):
        load_idx(tmp_path / "l", tmp_path / "l")
    with pytest.raises(FormatError, match="count"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_truncated_payload(tmp_path):
    write_idx(tmp_path / "i", np.zeros((3, 2, 2), dtype=np.uint8))
    raw = (tmp_path / "i").read_bytes()
    (tmp_path / "t").write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        load_idx(tmp_path / "t", tmp_path / "i")


def _toy(features):
    x = np.array(features, dtype=np.float64)
    return Dataset("toy", x, np.zeros(len(x), dtype=np.int64), 1)


def test_normalize_examples():
    ds = normalize(_toy([[2, 0], [2, 5], [2, 10]]))
    assert ds.features[:, 0].tolist() == [0, 0, 0]
    assert ds.features[:, 1].tolist() == [0, 0.5, 1]
    again = normalize(ds)
    assert np.array_equal(again.features, ds.features)


def test_normalized_real_data_in_unit_range(iris, wdbc):
    for ds in (iris, wdbc):
        assert ds.features.min() >= 0 and ds.features.max() <= 1


def test_split_plan_sizes(iris):
    plan = make_split_plan(iris, 0.2, 1)
    assert (len(plan.target_train), len(plan.target_test), len(plan.shadow_train)) == (120, 30, 96)
    assert np.array_equal(plan.shadow_test, plan.target_test)
    plan.check()


def test_split_plan_deterministic(iris):
    a, b = make_split_plan(iris, 0.2, 7), make_split_plan(iris, 0.2, 7)
    for f in ("target_train", "target_test", "shadow_train", "shadow_test"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_split_plan_invariants_over_seeds(wdbc):
    for seed in range(100):
        plan = make_split_plan(wdbc, 0.2, seed)
        tt, te = set(plan.target_train), set(plan.target_test)
        assert not tt & te and len(tt | te) == wdbc.n_samples
        st = set(plan.shadow_train)
        assert st <= tt and len(st) == math.ceil(0.8 * len(tt))
        assert not st & set(plan.shadow_test)


def test_split_plan_errors(iris):
    with pytest.raises(ValueError):
        make_split_plan(iris, 0.0, 1)
    with pytest.raises(ValueError):
        make_split_plan(iris.subset([0, 1]), 0.5, 1)


def test_partition_plan():
    plan = split_plan_from_partition(np.arange(10), np.arange(10, 13), 3)
    assert len(plan.shadow_train) == 8
    plan.check()
