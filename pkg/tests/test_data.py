"""Dataset plumbing: quantization, normalization, CSV, schedules, folds."""

import numpy as np
import pytest

from secregress.data import (
    build_batch_schedule,
    kfold,
    load_csv,
    make_classification_data,
    make_regression_data,
    minmax_normalize,
    quantize,
)
from secregress.errors import (
    EmptyInput,
    MissingLabelColumn,
    ParseError,
    TooFewRows,
)
from secregress.ring import decode_raw, encode_raw


def test_quantize_matches_encoder_rounding():
    vals = [0.0, 1.5, -1.5, 0.1, -0.1, 2.0 ** -21, -(2.0 ** -21),
            3 * 2.0 ** -21, 123.456, -99.999]
    q = quantize(vals)
    for v, qq in zip(vals, q):
        assert qq == decode_raw(encode_raw(v))
    # quantized values encode without further rounding
    assert np.array_equal(quantize(q), q)


def test_quantize_grid():
    assert quantize(0.5 * 2.0 ** -20) == 2.0 ** -20          # half away from 0
    assert quantize(-0.5 * 2.0 ** -20) == -(2.0 ** -20)
    assert quantize(0.49 * 2.0 ** -20) == 0.0


def test_minmax_normalize():
    X = np.array([[1.0, 5.0, 7.0], [3.0, 5.0, 3.0], [2.0, 5.0, 5.0]])
    Xn = minmax_normalize(X)
    assert Xn.min() >= 0.0 and Xn.max() <= 1.0
    assert np.array_equal(Xn[:, 1], np.zeros(3))      # constant column
    assert Xn[0, 0] == 0.0 and Xn[1, 0] == 1.0

    y = np.array([10.0, 30.0, 20.0])
    _, yn = minmax_normalize(X, scale_labels=True, y=y)
    assert yn.tolist() == [0.0, 1.0, 0.5]
    _, same = minmax_normalize(X, scale_labels=False, y=y)
    assert np.array_equal(same, y)


def test_regression_data_deterministic_and_on_grid():
    X1, y1 = make_regression_data(50, 4, seed=7)
    X2, y2 = make_regression_data(50, 4, seed=7)
    X3, _ = make_regression_data(50, 4, seed=8)
    assert np.array_equal(X1, X2) and np.array_equal(y1, y2)
    assert not np.array_equal(X1, X3)
    assert X1.shape == (50, 4)
    assert np.array_equal(quantize(X1), X1)
    assert np.array_equal(quantize(y1), y1)
    assert X1.min() >= 0.0 and X1.max() <= 1.0
    assert y1.min() >= 0.0 and y1.max() <= 1.0


def test_classification_data_two_classes_on_grid():
    X, y = make_classification_data(120, 5, seed=3)
    assert set(np.unique(y)) == {0.0, 1.0}
    assert np.array_equal(quantize(X), X)
    assert 0.2 < y.mean() < 0.8     # reasonably balanced


def test_load_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,target\n1,2,3\n4,5,6\n7,8,9\n")
    X, y, names = load_csv(str(p), "target")
    assert names == ["a", "b"]
    assert X.tolist() == [[1, 2], [4, 5], [7, 8]]
    assert y.tolist() == [3, 6, 9]

    p.write_text("a,b\n1,2\n")
    with pytest.raises(MissingLabelColumn):
        load_csv(str(p), "target")
    p.write_text("a,target\n1\n2,3\n")
    with pytest.raises(ParseError):
        load_csv(str(p), "target")
    p.write_text("a,target\nx,1\n2,3\n")
    with pytest.raises(ParseError):
        load_csv(str(p), "target")
    p.write_text("")
    with pytest.raises(EmptyInput):
        load_csv(str(p), "target")
    p.write_text("a,target\n1,2\n")
    with pytest.raises(TooFewRows):
        load_csv(str(p), "target")


def test_batch_schedule():
    sched = build_batch_schedule(100, 8, 10, seed=5)
    assert len(sched) == 10
    for batch in sched:
        assert len(batch) == 8
        assert len(set(batch)) == 8
        assert all(0 <= i < 100 for i in batch)
    assert sched == build_batch_schedule(100, 8, 10, seed=5)
    assert sched != build_batch_schedule(100, 8, 10, seed=6)
    assert sched[0] != sched[1]
    with pytest.raises(ValueError):
        build_batch_schedule(5, 6, 1, seed=0)


def test_kfold():
    folds = kfold(23, 5, seed=1)
    assert len(folds) == 5
    all_test = sorted(i for _, test in folds for i in test)
    assert all_test == list(range(23))
    for train, test in folds:
        assert not set(train) & set(test)
        assert sorted(train + test) == list(range(23))
    assert folds == kfold(23, 5, seed=1)
    with pytest.raises(ValueError):
        kfold(10, 1, seed=0)
    with pytest.raises(ValueError):
        kfold(3, 4, seed=0)
