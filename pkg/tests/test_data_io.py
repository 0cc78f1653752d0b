import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aime.data_io import (
    LabeledMatrix,
    align_samples,
    cv_filter,
    read_labeled,
    sd_filter,
    write_labeled,
)
from aime.errors import (
    AlignmentError,
    DomainError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)


def lm(values, samples=None, features=None):
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    samples = samples or [f"s{i}" for i in range(n)]
    features = features or [f"f{j}" for j in range(p)]
    return LabeledMatrix(values, samples, features)


class TestLabeledMatrix:
    def test_valid_construction(self):
        m = lm([[1.0, 2.0], [3.0, 4.0]])
        assert m.n_samples == 2
        assert m.n_features == 2

    def test_duplicate_sample_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate sample id 'a'"):
            lm([[1.0], [2.0]], samples=["a", "a"])

    def test_duplicate_feature_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate feature id"):
            lm([[1.0, 2.0]], features=["x", "x"])

    def test_label_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            lm([[1.0, 2.0]], samples=["a", "b"])

    def test_select_features_keeps_order(self):
        m = lm([[1.0, 2.0, 3.0]], features=["a", "b", "c"])
        out = m.select_features([0, 2])
        assert out.feature_ids == ["a", "c"]
        assert out.values.tolist() == [[1.0, 3.0]]


class TestReadLabeled:
    def test_hand_file(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("id\tg1\tg2\ns1\t1.5\t2\ns2\t-3\t0.25\n")
        m = read_labeled(path)
        assert m.sample_ids == ["s1", "s2"]
        assert m.feature_ids == ["g1", "g2"]
        assert m.values.tolist() == [[1.5, 2.0], [-3.0, 0.25]]

    def test_comma_delimiter(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("id,a\nr1,7.5\n")
        m = read_labeled(path, delimiter="comma")
        assert m.values.tolist() == [[7.5]]

    def test_features_in_rows_is_transpose(self, tmp_path):
        wide = tmp_path / "wide.tsv"
        wide.write_text("id\tg1\tg2\ns1\t1\t2\ns2\t3\t4\n")
        tall = tmp_path / "tall.tsv"
        tall.write_text("id\ts1\ts2\ng1\t1\t3\ng2\t2\t4\n")
        a = read_labeled(wide)
        b = read_labeled(tall, orientation="features_in_rows")
        assert a.sample_ids == b.sample_ids
        assert a.feature_ids == b.feature_ids
        assert np.array_equal(a.values, b.values)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\ta\tb\ns1\t1\t2\ns2\t3\n")
        with pytest.raises(ParseError, match="line 3 has 2 fields, expected 3"):
            read_labeled(path)

    def test_na_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\ta\tb\ns1\t1\tNA\n")
        with pytest.raises(ParseError, match="line 2, column 3.*'NA'"):
            read_labeled(path)

    def test_inf_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\ta\ns1\tinf\n")
        with pytest.raises(ParseError, match="non-finite"):
            read_labeled(path)

    def test_underscore_literal_rejected(self, tmp_path):
        # float("1_0") parses in Python; a data file saying that is a typo
        path = tmp_path / "bad.tsv"
        path.write_text("id\ta\ns1\t1_0\n")
        with pytest.raises(ParseError, match="non-numeric"):
            read_labeled(path)

    def test_duplicate_ids_in_file(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\ta\ns1\t1\ns1\t2\n")
        with pytest.raises(ValidationError, match="duplicate sample id"):
            read_labeled(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("id\ta\n")
        with pytest.raises(ParseError):
            read_labeled(path)

    def test_unknown_delimiter(self, tmp_path):
        with pytest.raises(DomainError, match="semicolon"):
            read_labeled(tmp_path / "x", delimiter="semicolon")


class TestRoundTrip:
    def test_hand_round_trip_bitwise(self, tmp_path):
        m = lm([[0.1, -0.0], [1e-300, 12345678.9]])
        path = tmp_path / "rt.tsv"
        write_labeled(m, path)
        back = read_labeled(path)
        assert back.sample_ids == m.sample_ids
        assert back.feature_ids == m.feature_ids
        assert np.array_equal(
            back.values.view(np.uint64), m.values.view(np.uint64)
        )

    def test_written_bytes_are_canonical(self, tmp_path):
        m = lm([[1.5]], samples=["s1"], features=["g1"])
        path = tmp_path / "rt.tsv"
        write_labeled(m, path)
        assert path.read_bytes() == b"id\tg1\ns1\t1.5\n"

    def test_features_in_rows_round_trip(self, tmp_path):
        m = lm([[1.0, 2.0], [3.0, 4.0]])
        path = tmp_path / "rt.tsv"
        write_labeled(m, path, orientation="features_in_rows")
        back = read_labeled(path, orientation="features_in_rows")
        assert np.array_equal(back.values, m.values)
        assert back.sample_ids == m.sample_ids

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(
            st.lists(
                st.floats(
                    allow_nan=False,
                    allow_infinity=False,
                    width=64,
                ),
                min_size=3,
                max_size=3,
            ),
            min_size=1,
            max_size=6,
        )
    )
    def test_round_trip_property(self, tmp_path_factory, rows):
        m = lm(rows)
        path = tmp_path_factory.mktemp("rt") / "m.tsv"
        write_labeled(m, path, delimiter="comma")
        back = read_labeled(path, delimiter="comma")
        assert np.array_equal(
            back.values.view(np.uint64), m.values.view(np.uint64)
        )


class TestAlignSamples:
    def test_reorders_b_to_a(self):
        a = lm([[1.0], [2.0]], samples=["s1", "s2"])
        b = lm([[20.0], [10.0]], samples=["s2", "s1"])
        a2, b2 = align_samples(a, b)
        assert a2.sample_ids == ["s1", "s2"]
        assert b2.sample_ids == ["s1", "s2"]
        assert b2.values.tolist() == [[10.0], [20.0]]

    def test_partial_overlap(self):
        a = lm(np.arange(5.0)[:, None], samples=list("abcde"))
        b = lm(np.arange(3.0)[:, None] + 10, samples=["e", "c", "a"])
        a2, b2 = align_samples(a, b)
        assert a2.sample_ids == ["a", "c", "e"]
        assert a2.values[:, 0].tolist() == [0.0, 2.0, 4.0]
        assert b2.values[:, 0].tolist() == [12.0, 11.0, 10.0]

    def test_disjoint_raises_with_examples(self):
        a = lm([[1.0]], samples=["left1"])
        b = lm([[2.0]], samples=["right1"])
        with pytest.raises(AlignmentError, match="left1.*right1"):
            align_samples(a, b)

    def test_idempotent(self):
        a = lm([[1.0], [2.0]], samples=["x", "y"])
        b = lm([[3.0], [4.0]], samples=["y", "x"])
        a2, b2 = align_samples(a, b)
        a3, b3 = align_samples(a2, b2)
        assert a3.sample_ids == a2.sample_ids
        assert np.array_equal(a3.values, a2.values)
        assert np.array_equal(b3.values, b2.values)


class TestFilters:
    def test_constant_feature_dropped_by_cv(self):
        m = lm([[10.0, 1.0], [10.0, 2.0], [10.0, 3.0]], features=["flat", "var"])
        out = cv_filter(m, 0.05)
        assert out.feature_ids == ["var"]

    def test_cv_kept_at_mean_ten_sd_one(self):
        rows = [[9.0], [10.0], [11.0]]  # mean 10, sd 1, cv 0.1
        out = cv_filter(lm(rows), 0.05)
        assert out.n_features == 1

    def test_near_zero_mean_dropped_with_warning(self):
        m = lm([[1.0, 1.0], [-1.0, 2.0]], features=["zero_mean", "ok"])
        with pytest.warns(UserWarning, match="near-zero mean"):
            out = cv_filter(m, 0.05)
        assert out.feature_ids == ["ok"]

    def test_sd_filter_constant_dropped(self):
        m = lm([[5.0], [5.0]])
        with pytest.warns(UserWarning, match="removed every feature"):
            assert sd_filter(m, 0.001).n_features == 0

    def test_sd_filter_hand_value(self):
        # sd of (0, 2.5) with n-1 divisor is 2.5/sqrt(2) = 1.7678
        m = lm([[0.0], [2.5]])
        assert sd_filter(m, 1.25).n_features == 1
        with pytest.warns(UserWarning, match="removed every feature"):
            assert sd_filter(m, 1.77).n_features == 0

    def test_empty_result_warns(self):
        m = lm([[1.0], [1.1]])
        with pytest.warns(UserWarning, match="removed every feature"):
            sd_filter(m, 1e9)

    def test_single_row_rejected(self):
        m = lm([[1.0, 2.0]])
        with pytest.raises(InsufficientDataError):
            sd_filter(m, 0.1)

    def test_cv_filter_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        vals = rng.normal(loc=2.0, scale=1.0, size=(30, 100))
        m = lm(vals)
        out = cv_filter(m, 0.5)
        expected = []
        for j in range(100):
            col = vals[:, j]
            mean = sum(col) / len(col)
            var = sum((v - mean) ** 2 for v in col) / (len(col) - 1)
            if abs(mean) >= 1e-12 and (var**0.5) / abs(mean) > 0.5:
                expected.append(f"f{j}")
        assert out.feature_ids == expected

    def test_sd_filter_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        vals = rng.normal(scale=1.3, size=(25, 80))
        m = lm(vals)
        out = sd_filter(m, 1.25)
        expected = []
        for j in range(80):
            col = vals[:, j]
            mean = sum(col) / len(col)
            var = sum((v - mean) ** 2 for v in col) / (len(col) - 1)
            if var**0.5 > 1.25:
                expected.append(f"f{j}")
        assert out.feature_ids == expected

    def test_filters_preserve_order(self):
        rng = np.random.default_rng(9)
        m = lm(rng.normal(size=(10, 20)))
        out = sd_filter(m, 0.5)
        positions = [m.feature_ids.index(f) for f in out.feature_ids]
        assert positions == sorted(positions)
