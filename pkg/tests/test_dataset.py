import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalmi.dataset import (
    Dataset,
    DatasetError,
    SplitPlan,
    bootstrap_resample,
    cv_splits,
    load_traces,
    read_traces,
    standardize,
    write_traces,
)


def make(n, cols=("a", "b"), seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(cols, rng.normal(size=(n, len(cols))))


finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def datasets(draw, min_rows=1, max_rows=30):
    n = draw(st.integers(min_rows, max_rows))
    k = draw(st.integers(1, 4))
    rows = draw(arrays(np.float64, (n, k), elements=finite))
    return Dataset(tuple(f"c{i}" for i in range(k)), rows)


class TestLoad:
    def test_minimal_file(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1.0,2.0\n")
        d = load_traces(p)
        assert d.columns == ("a", "b")
        np.testing.assert_array_equal(d.rows, [[1.0, 2.0]])

    def test_ragged_row_names_line(self):
        with pytest.raises(DatasetError, match="line 2.*ragged"):
            read_traces("a,b\n1.0\n")

    def test_duplicate_column(self):
        with pytest.raises(DatasetError, match="duplicate column 'a'"):
            read_traces("a,a\n1,2\n")

    def test_non_numeric_cell_located(self):
        with pytest.raises(DatasetError, match=r"line 3, column 'b'.*'x'"):
            read_traces("a,b\n1,2\n3,x\n")

    def test_missing_value(self):
        with pytest.raises(DatasetError, match="missing value"):
            read_traces("a,b\n1,\n")

    def test_non_finite_rejected(self):
        with pytest.raises(DatasetError, match="non-finite"):
            read_traces("a,b\n1,nan\n")

    def test_empty_file(self):
        with pytest.raises(DatasetError, match="header"):
            read_traces("")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="no such file"):
            load_traces(tmp_path / "nope.csv")

    def test_header_only_gives_empty_table(self):
        d = read_traces("a,b\n")
        assert d.n_rows == 0 and d.n_cols == 2

    def test_column_names_with_dashes(self):
        d = read_traces("MLLeakAcc-l,x\n0.5,1\n")
        assert d.column("MLLeakAcc-l")[0] == 0.5

    @given(datasets())
    def test_write_load_round_trip(self, tmp_path_factory, d):
        p = tmp_path_factory.mktemp("rt") / "d.csv"
        write_traces(d, p)
        back = load_traces(p)
        assert back.columns == d.columns
        np.testing.assert_array_equal(back.rows, d.rows)


class TestDataset:
    def test_rows_read_only(self):
        d = make(3)
        with pytest.raises(ValueError):
            d.rows[0, 0] = 1.0

    def test_empty_name_rejected(self):
        with pytest.raises(DatasetError):
            Dataset(("a", ""), np.zeros((1, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DatasetError):
            Dataset(("a",), np.zeros((2, 2)))

    def test_with_column_appends_and_replaces(self):
        d = make(4)
        d2 = d.with_column("c", np.arange(4.0))
        assert d2.columns == ("a", "b", "c")
        d3 = d2.with_column("a", np.zeros(4))
        assert d3.columns == d2.columns and np.all(d3.column("a") == 0)

    def test_unknown_column(self):
        with pytest.raises(KeyError):
            make(2).column("zzz")


class TestBootstrap:
    def test_single_row_is_identity(self):
        d = make(1)
        for seed in range(5):
            np.testing.assert_array_equal(bootstrap_resample(d, seed).rows, d.rows)

    def test_deterministic(self):
        d = make(100)
        a, b = bootstrap_resample(d, 7), bootstrap_resample(d, 7)
        assert a.rows.tobytes() == b.rows.tobytes()

    def test_inclusion_fraction(self):
        # Oracle: P(row drawn at least once) = 1 - (1 - 1/n)^n, about 1 - 1/e.
        n = 1000
        d = Dataset(("id",), np.arange(n, dtype=float)[:, None])
        fracs = [np.unique(bootstrap_resample(d, s).column("id")).size / n for s in range(50)]
        expected = 1 - (1 - 1 / n) ** n
        assert abs(np.mean(fracs) - expected) < 0.05
        assert abs(expected - (1 - np.exp(-1))) < 1e-3

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            bootstrap_resample(Dataset(("a",), np.zeros((0, 1))), 0)

    @given(datasets(), st.integers(0, 2**32 - 1))
    def test_preserves_shape_and_rows(self, d, seed):
        r = bootstrap_resample(d, seed)
        assert r.columns == d.columns and r.n_rows == d.n_rows
        originals = {row.tobytes() for row in d.rows}
        assert all(row.tobytes() in originals for row in r.rows)


class TestSplits:
    def test_sizes_and_disjoint(self):
        d = Dataset(("id",), np.arange(10.0)[:, None])
        for train, test in cv_splits(d, SplitPlan(runs=5, train_fraction=0.8, seed=1)):
            assert train.n_rows == 8 and test.n_rows == 2
            assert not set(train.column("id")) & set(test.column("id"))

    def test_default_twenty_runs(self):
        assert len(cv_splits(make(20), SplitPlan())) == 20

    def test_deterministic(self):
        d = make(30)
        a = cv_splits(d, SplitPlan(seed=3))
        b = cv_splits(d, SplitPlan(seed=3))
        assert all(x[0].rows.tobytes() == y[0].rows.tobytes() for x, y in zip(a, b))

    def test_run_depends_only_on_seed_and_index(self):
        d = make(30)
        short = cv_splits(d, SplitPlan(runs=2, seed=5))
        long = cv_splits(d, SplitPlan(runs=6, seed=5))
        assert short[1][1].rows.tobytes() == long[1][1].rows.tobytes()

    def test_too_few_rows(self):
        with pytest.raises(DatasetError):
            cv_splits(make(4), SplitPlan())

    @pytest.mark.parametrize("kw", [{"runs": 0}, {"train_fraction": 0.0}, {"train_fraction": 1.0}, {"seed": -1}])
    def test_plan_validation(self, kw):
        with pytest.raises(ValueError):
            SplitPlan(**kw)

    @given(st.integers(5, 60), st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_partition_property(self, n, frac, seed):
        d = Dataset(("id",), np.arange(n, dtype=float)[:, None])
        for train, test in cv_splits(d, SplitPlan(runs=3, train_fraction=frac, seed=seed)):
            ids = np.concatenate([train.column("id"), test.column("id")])
            assert sorted(ids) == list(range(n))
            assert train.n_rows == min(max(int(round(frac * n)), 1), n - 1)


class TestStandardize:
    def test_hand_example(self):
        s, tr = standardize(Dataset(("x",), np.array([[1.0], [2.0], [3.0]])))
        np.testing.assert_allclose(s.column("x"), [-1.0, 0.0, 1.0])
        assert tr.mean[0] == 2.0 and tr.std[0] == 1.0

    def test_constant_column_flagged(self):
        d = Dataset(("c", "x"), np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
        s, tr = standardize(d)
        np.testing.assert_array_equal(s.column("c"), [5.0, 5.0, 5.0])
        assert tr.constant == ("c",)

    @given(datasets(min_rows=3))
    def test_round_trip_and_moments(self, d):
        s, tr = standardize(d)
        back = tr.invert(s)
        np.testing.assert_allclose(back.rows, d.rows, rtol=1e-9, atol=1e-9 * (1 + np.abs(d.rows).max()))
        for j, c in enumerate(d.columns):
            if c not in tr.constant and tr.std[j] > 1e-6 * (1 + abs(tr.mean[j])):
                assert abs(s.column(c).mean()) < 1e-9
                assert abs(s.column(c).std(ddof=1) - 1.0) < 1e-9
