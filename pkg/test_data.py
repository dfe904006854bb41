import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from data.dataset_loader import (
    describe,
    load_dataset,
    parse_csv,
    parse_libsvm,
    row_l2_normalize,
    serialize_libsvm,
    train_test_split,
)
from models.exceptions import DatasetParseError, EmptyDatasetError, SplitError
from models.models import DataFormat, Dataset, FeatureRow, SplitSpec


class TestParseLibsvm:
    def test_two_records(self):
        ds = parse_libsvm(b"+1 1:0.5 3:2.0\n-1 2:1.0")
        assert (ds.n, ds.p, ds.num_classes) == (2, 3, 2)
        assert ds.labels.tolist() == [1, 0]
        assert ds.row(0).to_dense().tolist() == [0.5, 0.0, 2.0]
        assert ds.row(1) == FeatureRow(indices=(1,), values=(1.0,), dim=3)
        assert ds.label_values == (-1.0, 1.0)

    def test_blank_lines_are_skipped(self):
        ds = parse_libsvm(b"\n+1 1:1\n\n-1 2:1\n\n")
        assert ds.n == 2

    def test_empty_stream(self):
        with pytest.raises(EmptyDatasetError):
            parse_libsvm(b"")
        with pytest.raises(EmptyDatasetError):
            parse_libsvm(b"\n  \n")

    def test_bad_index_reports_line(self):
        with pytest.raises(DatasetParseError) as info:
            parse_libsvm(b"+1 1:0.5\n-1 x:1.0\n")
        assert info.value.line_number == 2
        assert "line 2" in str(info.value)

    @pytest.mark.parametrize("line", [b"-1 0:1.0", b"-1 3:1 2:1", b"-1 2:nan", b"-1 2:inf", b"-1 2", b"abc 1:1"])
    def test_malformed_lines(self, line):
        with pytest.raises(DatasetParseError) as info:
            parse_libsvm(b"+1 1:1\n" + line)
        assert info.value.line_number == 2

    def test_single_class_is_rejected(self):
        with pytest.raises(DatasetParseError):
            parse_libsvm(b"+1 1:1\n+1 2:1\n")

    def test_zero_values_are_dropped(self):
        ds = parse_libsvm(b"+1 1:0 2:1.5\n-1 1:1")
        assert ds.features.nnz == 2
        assert ds.row(0).indices == (1,)

    def test_p_hint(self):
        ds = parse_libsvm(b"+1 1:1\n-1 2:1", p_hint=10)
        assert ds.p == 10
        # hint smaller than the largest index is ignored
        assert parse_libsvm(b"+1 4:1\n-1 2:1", p_hint=2).p == 4

    def test_multiclass_labels_follow_sorted_raw_order(self):
        ds = parse_libsvm(b"3 1:1\n1 1:1\n2 2:1\n")
        assert ds.num_classes == 3
        assert ds.labels.tolist() == [2, 0, 1]

    def test_file_object(self, tmp_path, toy_bytes):
        path = tmp_path / "toy.libsvm"
        path.write_bytes(toy_bytes)
        ds = load_dataset(path)
        assert ds.name == "toy"
        assert (ds.n, ds.p) == (6, 3)


class TestSerializeLibsvm:
    def test_round_trip(self, toy_binary):
        again = parse_libsvm(serialize_libsvm(toy_binary))
        assert (again.features != toy_binary.features).nnz == 0
        assert again.labels.tolist() == toy_binary.labels.tolist()
        assert again.label_values == toy_binary.label_values

    def test_integer_labels_are_written_plainly(self):
        text = serialize_libsvm(parse_libsvm(b"+1 1:0.5\n-1 2:1")).decode()
        assert text == "1 1:0.5\n-1 2:1.0\n"


class TestParseCsv:
    def test_header_and_label_column(self):
        ds = parse_csv(b"a,b,label\n1.0,0,1\n0,2.0,0\n", has_header=True)
        assert (ds.n, ds.p) == (2, 2)
        assert ds.labels.tolist() == [1, 0]
        assert ds.features.nnz == 2

    def test_ragged_row(self):
        with pytest.raises(DatasetParseError) as info:
            parse_csv(b"1,2,0\n1,1\n")
        assert info.value.line_number == 2

    def test_non_numeric_cell(self):
        with pytest.raises(DatasetParseError):
            parse_csv(b"1,2,0\n1,x,1\n")

    def test_load_csv(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_bytes(b"x,y\n0.5,1\n-0.5,0\n")
        ds = load_dataset(path, DataFormat.CSV, csv_header=True)
        assert (ds.n, ds.p) == (2, 1)


class TestSplit:
    @staticmethod
    def _indexed(n):
        features = sparse.csr_matrix(np.arange(1, n + 1, dtype=float)[:, None])
        return Dataset(features=features, labels=np.arange(n) % 2, num_classes=2, name="indexed")

    def test_sizes(self):
        train, test = train_test_split(self._indexed(10), SplitSpec(train_fraction=0.8, seed=3))
        assert (train.n, test.n) == (8, 2)
        assert (train.split, test.split) == ("train", "test")

    def test_deterministic_partition(self):
        ds = self._indexed(10)
        train, test = train_test_split(ds, SplitSpec(seed=7))
        again, _ = train_test_split(ds, SplitSpec(seed=7))
        assert train.features.toarray().ravel().tolist() == again.features.toarray().ravel().tolist()
        ids = np.concatenate([train.features.toarray().ravel(), test.features.toarray().ravel()])
        assert sorted(ids.tolist()) == list(range(1, 11))

    def test_seed_changes_split(self):
        ds = self._indexed(50)
        a, _ = train_test_split(ds, SplitSpec(seed=0))
        b, _ = train_test_split(ds, SplitSpec(seed=1))
        assert a.features.toarray().ravel().tolist() != b.features.toarray().ravel().tolist()

    def test_empty_side(self):
        with pytest.raises(SplitError):
            train_test_split(self._indexed(2), SplitSpec(train_fraction=0.4))


class TestNormalize:
    def test_unit_rows_and_zero_row(self):
        ds = Dataset(features=[[3.0, 4.0], [0.0, 0.0]], labels=[0, 1], num_classes=2)
        out = row_l2_normalize(ds)
        assert np.allclose(out.features.toarray(), [[0.6, 0.8], [0.0, 0.0]])
        assert out.labels.tolist() == [0, 1]

    def test_idempotent(self, make_dataset):
        once = row_l2_normalize(make_dataset(n=20, p=4, unit_rows=False))
        twice = row_l2_normalize(once)
        assert np.allclose(once.features.toarray(), twice.features.toarray(), rtol=0, atol=1e-15)

    @settings(deadline=None, max_examples=50)
    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.1, max_value=1.0))
    def test_norms_are_one_or_zero(self, seed, density):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((12, 5)) * 10 * (rng.random((12, 5)) < density)
        ds = Dataset(features=x, labels=np.arange(12) % 2, num_classes=2)
        norms = row_l2_normalize(ds).row_norms
        assert np.all((np.abs(norms - 1.0) < 1e-12) | (norms == 0.0))


class TestDescribe:
    def test_statistics(self, toy_binary):
        stats = describe(toy_binary)
        assert stats["n"] == 6 and stats["p"] == 3
        assert stats["class_counts"] == [3, 3]
        assert stats["nnz"] == 12
        assert stats["density"] == pytest.approx(12 / 18)


class TestFeatureRow:
    def test_dataset_rows_are_canonical(self):
        ds = Dataset(features=np.array([[0.0, 2.0, 0.0, -1.0], [1.0, 0.0, 0.0, 0.0]]), labels=[0, 1], num_classes=2)
        row = ds.row(0)
        assert row.indices == (1, 3) and row.values == (2.0, -1.0) and row.dim == 4
        assert np.linalg.norm(row.to_dense()) == pytest.approx(ds.row_norms[0])

    @pytest.mark.parametrize("indices,values", [((1, 0), (1.0, 1.0)), ((0,), (0.0,)), ((5,), (1.0,)), ((0,), ())])
    def test_non_canonical_rows(self, indices, values):
        with pytest.raises(ValueError):
            FeatureRow(indices=indices, values=values, dim=3)
