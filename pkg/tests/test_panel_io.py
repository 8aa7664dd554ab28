import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxfactors.errors import InputError
from proxfactors.panel_io import (
    Panel,
    TransformCode,
    apply_transform,
    load_csv,
    load_fred_md,
    read_matrix,
    split_train_test,
    standardize,
    write_csv,
    write_matrix,
)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_simple_csv(tmp_path):
    p = _write(tmp_path / "x.csv", "date,a,b,c\n1,1.0,2.0,3.0\n2,4,5,6\n3,7,8,9\n4,1,1,2\n")
    panel = load_csv(p)
    assert (panel.N, panel.T) == (3, 4)
    assert panel.unit_ids == ("a", "b", "c")
    np.testing.assert_array_equal(panel.values[1], [2, 5, 8, 1])


def test_units_in_rows(tmp_path):
    p = _write(tmp_path / "x.csv", "unit,t1,t2\na,1,2\nb,3,4\n")
    panel = load_csv(p, orientation="units-in-rows")
    assert panel.unit_ids == ("a", "b")
    np.testing.assert_array_equal(panel.values, [[1, 2], [3, 4]])


def test_missing_drops_unit_with_report(tmp_path):
    p = _write(tmp_path / "x.csv", "date,a,b\n1,1,NA\n2,2,3\n3,4,5\n")
    panel = load_csv(p, missing="drop-unit")
    assert panel.unit_ids == ("a",)
    assert any("'b'" in line for line in panel.report)


def test_missing_drop_time_and_error(tmp_path):
    p = _write(tmp_path / "x.csv", "date,a,b\n1,1,NA\n2,2,3\n3,4,5\n")
    assert load_csv(p, missing="drop-time").time_ids == ("2", "3")
    with pytest.raises(InputError, match="missing value"):
        load_csv(p, missing="error")


def test_unparseable_cell_names_location(tmp_path):
    p = _write(tmp_path / "x.csv", "date,a,b\n1,1,2\n2,oops,3\n")
    with pytest.raises(InputError, match=r"'oops'.*row '2'.*column 'a'"):
        load_csv(p)


def test_empty_table(tmp_path):
    with pytest.raises(InputError, match="empty"):
        load_csv(_write(tmp_path / "x.csv", "date,a\n"))


def test_fred_md_file_rejected_by_plain_loader(tmp_path):
    p = _write(tmp_path / "f.csv", "sasdate,A,B\nTransform:,1,5\n1/1/2000,1,2\n2/1/2000,2,3\n")
    with pytest.raises(InputError, match="load_fred_md"):
        load_csv(p)


def test_log_difference_code():
    out = apply_transform([100.0, 110.0, 121.0], 5)
    assert math.isnan(out[0])
    np.testing.assert_allclose(out[1:], [math.log(1.1)] * 2, atol=1e-12)
    assert abs(out[1] - 0.09531) < 1e-5


def test_level_code_is_identity():
    np.testing.assert_array_equal(apply_transform([3.0, 1.0, 2.0], 1), [3.0, 1.0, 2.0])


def test_transform_codes():
    with pytest.raises(InputError):
        TransformCode.parse("9")
    assert [TransformCode(c).order for c in range(1, 8)] == [0, 1, 2, 0, 1, 2, 2]
    with pytest.raises(InputError, match="non-positive"):
        apply_transform([1.0, -1.0, 2.0], 4)


def _fred_fixture(tmp_path, codes):
    T = 8
    rng = np.random.default_rng(0)
    cols = [np.exp(np.cumsum(rng.normal(0.01, 0.02, T))) * 100 for _ in codes]
    lines = ["sasdate," + ",".join(f"S{i}" for i in range(len(codes))),
             "Transform:," + ",".join(str(c) for c in codes)]
    for t in range(T):
        lines.append(f"{t + 1}/1/2000," + ",".join(repr(float(c[t])) for c in cols))
    return _write(tmp_path / "fred.csv", "\n".join(lines) + "\n"), cols, T


def test_fred_md_alignment_first_differences(tmp_path):
    p, cols, T = _fred_fixture(tmp_path, (1, 2, 5))
    panel, codes = load_fred_md(p, standardize_mode="none")
    assert panel.T == T - 1
    assert [int(c) for c in codes] == [1, 2, 5]
    # the hand-built oracle: drop one leading row from every series
    np.testing.assert_allclose(panel.values[0], cols[0][1:])
    np.testing.assert_allclose(panel.values[1], np.diff(cols[1]))
    np.testing.assert_allclose(panel.values[2], np.diff(np.log(cols[2])))


def test_fred_md_alignment_with_second_difference(tmp_path):
    p, cols, T = _fred_fixture(tmp_path, (1, 3, 5))
    panel, _ = load_fred_md(p, standardize_mode="none")
    assert panel.T == T - 2
    np.testing.assert_allclose(panel.values[2], np.diff(np.log(cols[2]))[1:])


def test_fred_md_standardized_and_constant_dropped(tmp_path):
    lines = ["sasdate,A,B,C", "Transform:,1,2,1"]
    for t in range(6):
        lines.append(f"{t + 1}/1/2000,{t * t},{5.0},{(-1) ** t}")
    p = _write(tmp_path / "f.csv", "\n".join(lines) + "\n")
    panel, codes = load_fred_md(p)
    assert panel.unit_ids == ("A", "C")
    assert any("'B'" in r and "constant" in r for r in panel.report)
    np.testing.assert_allclose(panel.values.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(panel.values.std(axis=1, ddof=1), 1, atol=1e-12)


def test_fred_md_unknown_code(tmp_path):
    p = _write(tmp_path / "f.csv", "sasdate,A\nTransform:,8\n1/1/2000,1\n2/1/2000,2\n3/1/2000,3\n")
    with pytest.raises(InputError, match="unknown transform code"):
        load_fred_md(p)


def test_panel_invariants():
    with pytest.raises(InputError):
        Panel.from_array(np.ones((2, 1)))
    with pytest.raises(InputError, match="distinct"):
        Panel(np.ones((2, 3)), ("a", "a"), ("1", "2", "3"))
    with pytest.raises(InputError, match="chronological"):
        Panel(np.ones((1, 3)), ("a",), ("3", "2", "1"))
    with pytest.raises(InputError, match="non-finite"):
        Panel.from_array(np.array([[1.0, np.nan]]))


def test_standardize_zero_variance_named():
    panel = Panel(np.array([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]), ("a", "flat"), ("1", "2", "3"))
    with pytest.raises(InputError, match="'flat'"):
        standardize(panel, "zscore")


def test_split_uses_training_scaling():
    X = np.arange(20, dtype=float).reshape(2, 10) ** 1.5
    train, test = split_train_test(Panel.from_array(X), 0.5, standardize_mode="zscore")
    assert (train.T, test.T) == (5, 5)
    mu = X[:, :5].mean(axis=1)
    sd = X[:, :5].std(axis=1, ddof=1)
    np.testing.assert_allclose(test.values, (X[:, 5:] - mu[:, None]) / sd[:, None])
    with pytest.raises(InputError):
        split_train_test(Panel.from_array(X[:, :3]), 0.5)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_csv_round_trip(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    panel = Panel.from_array(X)
    write_csv(panel, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.values, panel.values)
    assert back.unit_ids == panel.unit_ids


def test_matrix_round_trip(tmp_path, rng):
    M = rng.standard_normal((4, 3))
    write_matrix(tmp_path / "m.csv", M, ["a", "b", "c", "d"])
    ids, back = read_matrix(tmp_path / "m.csv")
    assert ids == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(back, M)
