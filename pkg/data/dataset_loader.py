"""
Dataset Loading and Splitting.

This module ingests LIBSVM and CSV datasets into immutable sparse Dataset
objects, produces deterministic train/test splits and computes the dataset
statistics the rest of the bench relies on.

Functions:
    parse_libsvm: Parse a LIBSVM byte stream (1-based indices).
    serialize_libsvm: Write a Dataset back to LIBSVM bytes.
    parse_csv: Parse a numeric CSV stream whose last column is the label.
    load_dataset: Open and parse a dataset file.
    train_test_split: Seeded permutation split.
    row_l2_normalize: Scale every nonzero row to unit L2 norm.
    describe: Dataset statistics for logs and manifests.

Example:
    >>> ds = parse_libsvm(b"+1 1:0.5 3:2.0\\n-1 2:1.0")
    >>> (ds.n, ds.p, ds.num_classes, ds.labels.tolist())
    (2, 3, 2, [1, 0])
"""

import csv
import io
import logging
import math
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from models.exceptions import DatasetParseError, EmptyDatasetError, SplitError
from models.models import DataFormat, Dataset, SplitSpec


logger = logging.getLogger(__name__)

ByteSource = Union[bytes, BinaryIO]


def _read_text(stream: ByteSource) -> str:
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        return bytes(raw).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetParseError(f"stream is not valid UTF-8: {e}") from e


def _parse_number(token: str, line_number: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DatasetParseError(f"bad {what} {token!r}", line_number) from None
    if not math.isfinite(value):
        raise DatasetParseError(f"non-finite {what} {token!r}", line_number)
    return value


def _assemble(
    row_ids: List[int],
    col_ids: List[int],
    values: List[float],
    raw_labels: List[float],
    p: int,
    name: str,
) -> Dataset:
    """Remap raw labels to 0..K-1 by sorted order and build the CSR dataset."""
    if not raw_labels:
        raise EmptyDatasetError()
    distinct = sorted(set(raw_labels))
    if len(distinct) < 2:
        raise DatasetParseError(f"need at least two distinct labels, found {distinct}")
    if p <= 0:
        raise DatasetParseError("feature dimension is zero")
    class_of = {raw: k for k, raw in enumerate(distinct)}
    features = sparse.csr_matrix(
        (np.asarray(values, dtype=float), (np.asarray(row_ids, dtype=np.int64), np.asarray(col_ids, dtype=np.int64))),
        shape=(len(raw_labels), p),
    )
    ds = Dataset(
        features=features,
        labels=[class_of[raw] for raw in raw_labels],
        num_classes=len(distinct),
        label_values=tuple(distinct),
        name=name,
    )
    logger.info("Loaded %s: n=%d p=%d K=%d", name, ds.n, ds.p, ds.num_classes)
    return ds


def parse_libsvm(stream: ByteSource, p_hint: Optional[int] = None, name: str = "dataset") -> Dataset:
    """
    Parse a LIBSVM stream.

    Each non-empty line is ``<label> <idx>:<val> ...`` with 1-based indices in
    strictly increasing order. Indices are shifted to 0-based, zero values are
    dropped and p is the larger of the maximum index and ``p_hint``.

    Args:
        stream: Bytes or a binary file object.
        p_hint: Minimum feature dimension (keeps train/test files aligned).
        name: Dataset identifier.

    Returns:
        Dataset with labels remapped to 0..K-1 by sorted distinct raw label.

    Raises:
        EmptyDatasetError: No records in the stream.
        DatasetParseError: Malformed line or non-finite value (with line number).
    """
    row_ids: List[int] = []
    col_ids: List[int] = []
    values: List[float] = []
    raw_labels: List[float] = []
    max_index = 0

    for line_number, line in enumerate(_read_text(stream).splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        label = _parse_number(tokens[0], line_number, "label")
        previous = 0
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise DatasetParseError(f"expected <idx>:<val>, got {token!r}", line_number)
            try:
                index = int(index_text)
            except ValueError:
                raise DatasetParseError(f"bad index {index_text!r}", line_number) from None
            if index < 1:
                raise DatasetParseError(f"index {index} is not 1-based", line_number)
            if index <= previous:
                raise DatasetParseError("indices must be strictly increasing", line_number)
            previous = index
            value = _parse_number(value_text, line_number, "value")
            if value != 0.0:
                row_ids.append(len(raw_labels))
                col_ids.append(index - 1)
                values.append(value)
            max_index = max(max_index, index)
        raw_labels.append(label)

    return _assemble(row_ids, col_ids, values, raw_labels, max(max_index, p_hint or 0), name)


def _format_label(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def serialize_libsvm(ds: Dataset) -> bytes:
    """Write ``ds`` as LIBSVM text; values use round-trip float formatting."""
    label_values = ds.label_values or tuple(float(k) for k in range(ds.num_classes))
    lines = []
    for i in range(ds.n):
        start, stop = ds.features.indptr[i], ds.features.indptr[i + 1]
        entries = " ".join(
            f"{j + 1}:{float(v)!r}" for j, v in zip(ds.features.indices[start:stop], ds.features.data[start:stop])
        )
        label = _format_label(label_values[ds.labels[i]])
        lines.append(f"{label} {entries}".rstrip())
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_csv(
    stream: ByteSource,
    has_header: bool = False,
    p_hint: Optional[int] = None,
    name: str = "dataset",
) -> Dataset:
    """
    Parse a numeric CSV stream; the last column is the label.

    Raises:
        EmptyDatasetError: No records.
        DatasetParseError: Ragged rows or non-numeric/non-finite cells.
    """
    reader = csv.reader(io.StringIO(_read_text(stream)))
    row_ids: List[int] = []
    col_ids: List[int] = []
    values: List[float] = []
    raw_labels: List[float] = []
    width = None

    for line_number, cells in enumerate(reader, 1):
        if has_header and line_number == 1:
            continue
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) < 2:
            raise DatasetParseError("need at least one feature and a label", line_number)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DatasetParseError(f"expected {width} columns, got {len(cells)}", line_number)
        for j, cell in enumerate(cells[:-1]):
            value = _parse_number(cell.strip(), line_number, "value")
            if value != 0.0:
                row_ids.append(len(raw_labels))
                col_ids.append(j)
                values.append(value)
        raw_labels.append(_parse_number(cells[-1].strip(), line_number, "label"))

    p = max((width or 1) - 1, p_hint or 0)
    return _assemble(row_ids, col_ids, values, raw_labels, p, name)


def load_dataset(
    path: Union[str, Path],
    fmt: DataFormat = DataFormat.LIBSVM,
    csv_header: bool = False,
    p_hint: Optional[int] = None,
    name: Optional[str] = None,
) -> Dataset:
    path = Path(path)
    name = name or path.stem
    logger.info("Reading %s dataset from %s", DataFormat(fmt).value, path)
    with open(path, "rb") as f:
        if DataFormat(fmt) is DataFormat.CSV:
            return parse_csv(f, has_header=csv_header, p_hint=p_hint, name=name)
        return parse_libsvm(f, p_hint=p_hint, name=name)


def train_test_split(ds: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """
    Deterministic split: the first floor(train_fraction * n) records of a
    seeded permutation form the training set, the rest the test set.

    Raises:
        SplitError: Either side would be empty.
    """
    n_train = math.floor(spec.train_fraction * ds.n)
    if n_train < 1 or ds.n - n_train < 1:
        raise SplitError(f"split of n={ds.n} at {spec.train_fraction} leaves an empty side")
    permutation = np.random.default_rng(spec.seed).permutation(ds.n)
    train = ds.subset(permutation[:n_train], split="train")
    test = ds.subset(permutation[n_train:], split="test")
    logger.info("Split %s: train n=%d, test n=%d (seed=%d)", ds.name, train.n, test.n, spec.seed)
    return train, test


def row_l2_normalize(ds: Dataset) -> Dataset:
    """Scale each nonzero row to unit L2 norm; zero rows are unchanged."""
    norms = ds.row_norms
    scale = np.ones_like(norms)
    nonzero = norms > 0
    scale[nonzero] = 1.0 / norms[nonzero]
    return Dataset(
        features=sparse.diags(scale) @ ds.features,
        labels=ds.labels,
        num_classes=ds.num_classes,
        label_values=ds.label_values,
        name=ds.name,
        split=ds.split,
    )


def describe(ds: Dataset) -> Dict[str, object]:
    """Dataset statistics used in logs and run manifests."""
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    return {
        "name": ds.name,
        "n": ds.n,
        "p": ds.p,
        "num_classes": ds.num_classes,
        "nnz": int(ds.features.nnz),
        "density": float(ds.features.nnz) / (ds.n * ds.p),
        "class_counts": counts.tolist(),
        "max_row_norm": float(ds.row_norms.max()),
    }
