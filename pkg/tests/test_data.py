import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from egattack import data as dp
from egattack.errors import DataError

from conftest import make_dataset


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_csv_basic(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["a,b,bug,c"] + [f"{rng.random()},{rng.random()},{i % 2},{rng.random()}" for i in range(100)]
    ds = dp.load_csv(write(tmp_path, "\n".join(lines) + "\n"), "bug")
    assert ds.rows.shape == (100, 3)
    assert ds.schema.names == ("a", "b", "c")
    assert ds.schema.non_negative == (True, True, True)
    assert list(ds.labels[:4]) == [0, 1, 0, 1]


def test_load_csv_empty_cell_names_row_and_column(tmp_path):
    lines = ["x,y,label"] + ["1,2,0"] * 6 + ["1,,1"] + ["3,4,1"]
    with pytest.raises(DataError, match=r"row 7, column 'y'"):
        dp.load_csv(write(tmp_path, "\n".join(lines)), "label")


def test_load_csv_rejects_non_binary_label(tmp_path):
    with pytest.raises(DataError, match="non-binary"):
        dp.load_csv(write(tmp_path, "x,label\n1,0\n2,2\n"), "label")


def test_load_csv_missing_label_and_file(tmp_path):
    with pytest.raises(DataError, match="label column"):
        dp.load_csv(write(tmp_path, "x,y\n1,0\n"), "label")
    with pytest.raises(DataError, match="not found"):
        dp.load_csv(str(tmp_path / "nope.csv"), "label")


def test_load_csv_rejects_negative_on_flagged_column(tmp_path):
    with pytest.raises(DataError):
        dp.load_csv(write(tmp_path, "x,label\n-1,0\n2,1\n"), "label")
    ds = dp.load_csv(write(tmp_path, "x,y,label\n-1,3,0\n2,1,1\n"), "label", "infer-from-data")
    assert ds.schema.non_negative == (False, True)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    ds = make_dataset(rng.normal(size=(30, 4)) * 1e3, rng.integers(0, 2, 30))
    path = str(tmp_path / "rt.csv")
    dp.write_csv(ds, path)
    back = dp.load_csv(path, "label", "all-false")
    assert np.array_equal(back.rows, ds.rows)
    assert np.array_equal(back.labels, ds.labels)


def test_schema_validation():
    with pytest.raises(DataError):
        dp.FeatureSchema(("a", "a"), (True, True), "y")
    with pytest.raises(DataError):
        dp.FeatureSchema(("a", ""), (True, True), "y")
    with pytest.raises(DataError):
        dp.FeatureSchema(("a", "b"), (True,), "y")


def test_split_sizes_and_partition():
    ds = make_dataset(np.arange(1000.0)[:, None], np.arange(1000) % 2)
    tr, te = dp.split(ds, dp.SplitConfig(0.9, seed=42))
    assert (len(tr), len(te)) == (900, 100)
    vals = np.concatenate([tr.rows[:, 0], te.rows[:, 0]])
    assert np.array_equal(np.sort(vals), np.arange(1000.0))
    tr2, te2 = dp.split(ds, dp.SplitConfig(0.9, seed=42))
    assert np.array_equal(tr.rows, tr2.rows) and np.array_equal(te.rows, te2.rows)


def test_split_stratified_keeps_class_shares():
    labels = np.r_[np.zeros(800, int), np.ones(200, int)]
    ds = make_dataset(np.arange(1000.0)[:, None], labels)
    tr, te = dp.split(ds, dp.SplitConfig(0.9, seed=0, stratify=True))
    assert tr.class_counts() == (720, 180)
    assert te.class_counts() == (80, 20)


def test_split_rejects_single_row():
    with pytest.raises(DataError):
        dp.split(make_dataset([[1.0]], [1]), dp.SplitConfig())


def test_spearman_filter_identical_columns_drops_later():
    a = np.arange(20.0)
    ds = make_dataset(np.column_stack([a, a]), np.arange(20) % 2, names=("a", "b"))
    reduced, dropped = dp.spearman_filter(ds, 0.7)
    assert dropped == ["b"] and reduced.schema.names == ("a",)


def test_spearman_filter_keeps_weak_pair():
    a, b = np.array([1.0, 2, 3, 4]), np.array([4.0, 1, 3, 2])
    rho = spearmanr(a, b)[0]
    assert rho == pytest.approx(-0.4)
    reduced, dropped = dp.spearman_filter(make_dataset(np.column_stack([a, b]), [0, 1, 0, 1]), 0.7)
    assert dropped == [] and reduced.n_features == 2


def test_spearman_constant_column_kept_and_zero():
    rng = np.random.default_rng(2)
    rows = np.column_stack([rng.random(30), np.full(30, 5.0), rng.random(30)])
    rho = dp.spearman_matrix(rows)
    assert rho[1, 0] == 0 and rho[1, 2] == 0
    _, dropped = dp.spearman_filter(make_dataset(rows, np.arange(30) % 2), 0.7)
    assert dropped == []


def test_spearman_matrix_matches_scipy():
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 5, size=(50, 4)).astype(float)
    rows[:, 3] = rows[:, 0] + rng.random(50)
    assert np.allclose(dp.spearman_matrix(rows), spearmanr(rows).statistic, atol=1e-12)


def test_spearman_filter_is_idempotent_and_satisfies_threshold():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(200, 3))
    rows = np.column_stack([z, z[:, 0] + 0.1 * rng.normal(size=200), z[:, 1] * 2 + 0.2 * rng.normal(size=200)])
    ds = make_dataset(rows, np.arange(200) % 2)
    reduced, dropped = dp.spearman_filter(ds, 0.7)
    assert len(dropped) == 2
    rho = np.abs(dp.spearman_matrix(reduced.rows))
    np.fill_diagonal(rho, 0)
    assert rho.max() < 0.7
    assert dp.spearman_filter(reduced, 0.7)[1] == []


def test_smote_balances_and_interpolates():
    rng = np.random.default_rng(5)
    rows = np.vstack([rng.normal(size=(90, 3)), rng.normal(3, 1, size=(10, 3))])
    labels = np.r_[np.zeros(90, int), np.ones(10, int)]
    out = dp.smote(make_dataset(rows, labels), k_neighbors=5, seed=1)
    assert out.class_counts() == (90, 90)
    assert np.array_equal(out.rows[:100], rows)


def test_smote_segment_fixture():
    ds = make_dataset([[0.0, 0.0], [2.0, 2.0], [9, 9], [8, 8], [7, 7]], [1, 1, 0, 0, 0])
    out = dp.smote(ds, k_neighbors=1, seed=0)
    synth = out.rows[5:]
    assert len(synth) == 1
    assert synth[0, 0] == synth[0, 1] and 0 <= synth[0, 0] <= 2


def test_smote_errors():
    with pytest.raises(DataError):
        dp.smote(make_dataset([[0.0], [1.0], [2.0]], [1, 0, 0]))
    with pytest.raises(DataError):
        dp.smote(make_dataset([[0.0], [1.0]], [1, 1]))


def test_undersample_counts_and_order():
    labels = np.r_[np.zeros(1524, int), np.ones(520, int)]
    ds = make_dataset(np.arange(len(labels), dtype=float)[:, None], labels)
    out = dp.undersample_test(ds, seed=0)
    assert out.class_counts() == (520, 520)
    assert np.all(np.diff(out.rows[:, 0]) > 0)
    assert set(out.rows[out.labels == 1, 0]) == set(ds.rows[ds.labels == 1, 0])


def test_undersample_balanced_noop_and_error():
    ds = make_dataset(np.arange(10.0)[:, None], np.arange(10) % 2)
    assert np.array_equal(dp.undersample_test(ds).rows, ds.rows)
    with pytest.raises(DataError):
        dp.undersample_test(make_dataset([[1.0], [2.0]], [1, 1]))


def test_feature_stats_closed_forms():
    st = dp.feature_stats(make_dataset([[0.0, 5.0], [2.0, 5.0]], [0, 1], names=("nd", "c")))
    assert st.std_of("nd") == pytest.approx(math.sqrt(2))
    assert st.std_of("c") == 0.0
    with pytest.raises(DataError):
        dp.feature_stats(make_dataset([[1.0]], [0]))


def test_feature_stats_two_pass_oracle():
    rng = np.random.default_rng(6)
    rows = rng.normal(100, 3, size=(57, 5))
    st = dp.feature_stats(make_dataset(rows, np.arange(57) % 2))
    for j in range(5):
        col = rows[:, j]
        mean = sum(col) / len(col)
        var = sum((v - mean) ** 2 for v in col) / (len(col) - 1)
        assert st.std[j] == pytest.approx(math.sqrt(var), rel=1e-9)


def test_prepare_stats_use_pre_smote_rows():
    rng = np.random.default_rng(7)
    rows = np.abs(rng.normal(size=(300, 3)))
    labels = (rng.random(300) < 0.2).astype(int)
    prep = dp.prepare(make_dataset(rows, labels), dp.SplitConfig(0.9, seed=1), filter_threshold=None,
                      smote_seed=2)
    n_raw = sum(prep.train_raw_counts)
    assert np.allclose(prep.stats.std, prep.train.rows[:n_raw].std(axis=0, ddof=1))
    n0, n1 = prep.train.class_counts()
    assert n0 == n1


def test_stats_serialise():
    st = dp.FeatureStats(("a", "b"), np.array([1.5, 0.1]), np.array([0.0, 2.0]))
    back = dp.FeatureStats.from_dict(st.to_dict())
    assert np.array_equal(back.std, st.std) and back.names == st.names
