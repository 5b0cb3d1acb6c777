"""Two-way clustered datasets.

Observations carry a double cluster index ``(i, j)`` plus a within-cell
position. Cells are stored sparsely: a cell with no observations simply has
no entry. Cluster indices are 0-based inside the library; the original labels
read from a file are kept in ``labels1`` / ``labels2``.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import EmptyDatasetError, InputError, ParseError, SchemaError

DEFAULT_MAX_CELL_SIZE = 2**32 - 1

_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")


def _frozen(a, ndim):
    a = np.array(a, dtype=float, ndmin=ndim)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CellBlock:
    """Observations of one cell: outcome, treatment and covariate rows."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = _frozen(self.y, 1)
        d = _frozen(self.d, 1)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(len(y), 0)
        x = _frozen(x, 2)
        if y.ndim != 1 or d.ndim != 1 or x.ndim != 2:
            raise InputError("cell block expects y, d as vectors and x as a matrix")
        if not (len(y) == len(d) == x.shape[0]):
            raise InputError(
                f"cell block length mismatch: y={len(y)}, d={len(d)}, x={x.shape[0]}"
            )
        if not (np.isfinite(y).all() and np.isfinite(d).all() and np.isfinite(x).all()):
            raise InputError("cell block contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return len(self.y)


class FlatView(NamedTuple):
    """Pooled regression view of a dataset, rows in lexicographic (i, j, l) order.

    ``cell_i[r], cell_j[r]`` is the cell of row ``r``.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    cell_i: np.ndarray
    cell_j: np.ndarray

    def cell_of(self, row: int) -> tuple[int, int]:
        return int(self.cell_i[row]), int(self.cell_j[row])


@dataclass(frozen=True)
class ColumnSchema:
    """Column roles for CSV ingestion.

    ``x=None`` means every remaining numeric column is a covariate.
    """

    y: str
    d: str
    cluster1: str
    cluster2: str
    x: Sequence[str] | None = None


class ClusteredDataset:
    """Immutable two-way clustered sample.

    Parameters
    ----------
    n1, n2 : int
        Number of clusters ``N`` and ``M`` in each dimension.
    cells : mapping
        ``(i, j) -> CellBlock`` with ``0 <= i < n1`` and ``0 <= j < n2``.
        Missing keys (and empty blocks) are cells with no observations.
    p : int
        Number of covariates.
    """

    def __init__(
        self,
        n1: int,
        n2: int,
        cells: Mapping[tuple[int, int], CellBlock],
        p: int,
        *,
        max_cell_size: int = DEFAULT_MAX_CELL_SIZE,
        labels1: Sequence | None = None,
        labels2: Sequence | None = None,
        x_names: Sequence[str] | None = None,
    ):
        n1, n2, p = int(n1), int(n2), int(p)
        if n1 < 1 or n2 < 1:
            raise InputError("cluster counts must be positive")
        if p < 0:
            raise InputError("p must be nonnegative")
        kept = {}
        for key in sorted(cells):
            i, j = int(key[0]), int(key[1])
            if not (0 <= i < n1 and 0 <= j < n2):
                raise InputError(f"cell {key} outside the {n1}x{n2} grid")
            block = cells[key]
            if not isinstance(block, CellBlock):
                block = CellBlock(*block)
            if block.x.shape[1] != p:
                raise InputError(
                    f"cell {key} has {block.x.shape[1]} covariate columns, expected {p}"
                )
            if len(block) > max_cell_size:
                raise InputError(f"cell {key} exceeds the size cap {max_cell_size}")
            if len(block):
                kept[(i, j)] = block
        if not kept:
            raise EmptyDatasetError("dataset has no observations")
        self.n1 = n1
        self.n2 = n2
        self.p = p
        self.cells = MappingProxyType(kept)
        self.labels1 = tuple(labels1) if labels1 is not None else tuple(range(1, n1 + 1))
        self.labels2 = tuple(labels2) if labels2 is not None else tuple(range(1, n2 + 1))
        if x_names is None:
            x_names = [f"x{k + 1}" for k in range(p)]
        self.x_names = tuple(x_names)
        self._flat = self._build_flat()

    @classmethod
    def from_arrays(cls, y, d, x, ids1, ids2, n1=None, n2=None, **kwargs):
        """Build a dataset from pooled arrays and 0-based cluster indices.

        Rows with the same ``(i, j)`` keep their relative order.
        """
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(y), -1)
        ids1 = np.asarray(ids1, dtype=np.int64)
        ids2 = np.asarray(ids2, dtype=np.int64)
        if len(y) == 0:
            raise EmptyDatasetError("dataset has no observations")
        n1 = int(ids1.max()) + 1 if n1 is None else n1
        n2 = int(ids2.max()) + 1 if n2 is None else n2
        order = np.lexsort((ids2, ids1))
        i_sorted, j_sorted = ids1[order], ids2[order]
        key = i_sorted * n2 + j_sorted
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        stops = np.r_[starts[1:], len(key)]
        cells = {}
        for a, b in zip(starts, stops):
            rows = order[a:b]
            cells[(int(i_sorted[a]), int(j_sorted[a]))] = CellBlock(y[rows], d[rows], x[rows])
        return cls(n1, n2, cells, x.shape[1], **kwargs)

    def _build_flat(self) -> FlatView:
        blocks = list(self.cells.values())
        sizes = np.array([len(b) for b in blocks], dtype=np.int64)
        keys = np.array(list(self.cells.keys()), dtype=np.int64).reshape(-1, 2)
        y = np.concatenate([b.y for b in blocks])
        d = np.concatenate([b.d for b in blocks])
        x = np.concatenate([b.x for b in blocks], axis=0)
        cell_i = np.repeat(keys[:, 0], sizes)
        cell_j = np.repeat(keys[:, 1], sizes)
        for a in (y, d, x, cell_i, cell_j):
            a.setflags(write=False)
        return FlatView(y, d, x, cell_i, cell_j)

    # sizes -----------------------------------------------------------------
    @property
    def n_obs(self) -> int:
        return len(self._flat.y)

    @property
    def n_cells(self) -> int:
        """Cell-grid count ``N * M``, including empty cells."""
        return self.n1 * self.n2

    @property
    def c_min(self) -> int:
        """Effective sample size ``min(N, M)``."""
        return min(self.n1, self.n2)

    @property
    def mu_n(self) -> float:
        return self.c_min / self.n1

    @property
    def mu_m(self) -> float:
        return self.c_min / self.n2

    @property
    def a(self) -> int:
        return max(self.p, self.n_cells)

    def cell_sizes(self) -> np.ndarray:
        out = np.zeros((self.n1, self.n2), dtype=np.int64)
        for (i, j), block in self.cells.items():
            out[i, j] = len(block)
        return out

    def is_balanced_singleton(self) -> bool:
        """True when every cell holds exactly one observation."""
        return self.n_obs == self.n_cells and len(self.cells) == self.n_cells

    def flatten(self) -> FlatView:
        return self._flat

    def regroup(self, values) -> dict[tuple[int, int], np.ndarray]:
        """Split a flattened per-row vector back into per-cell vectors."""
        values = np.asarray(values)
        if len(values) != self.n_obs:
            raise InputError("vector length does not match the number of observations")
        out = {}
        start = 0
        for key, block in self.cells.items():
            out[key] = values[start : start + len(block)]
            start += len(block)
        return out

    def __repr__(self):
        return (
            f"ClusteredDataset(N={self.n1}, M={self.n2}, p={self.p}, "
            f"n_obs={self.n_obs}, nonempty_cells={len(self.cells)})"
        )


def flatten(ds: ClusteredDataset) -> FlatView:
    return ds.flatten()


def _parse_number(text, row, column):
    s = text.strip()
    if not _NUMBER.match(s):
        raise ParseError(f"non-numeric value {text!r} in column {column!r}", row=row)
    return float(s)


def from_csv(path, schema: ColumnSchema, *, max_cell_size: int = DEFAULT_MAX_CELL_SIZE):
    """Read a UTF-8 CSV with a header row into a :class:`ClusteredDataset`.

    Cluster ids may be any strings; they are re-indexed densely in order of
    first appearance. Row numbers in error messages count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        records = [r for r in reader if any(field.strip() for field in r)]

    header = [h.strip() for h in header]
    index = {name: k for k, name in enumerate(header)}
    reserved = [schema.y, schema.d, schema.cluster1, schema.cluster2]
    for name in reserved:
        if name not in index:
            raise SchemaError(f"column {name!r} not found in {path}")
    if len(set(reserved)) != 4:
        raise SchemaError("outcome, treatment and cluster columns must be distinct")
    if not records:
        raise EmptyDatasetError(f"{path}: no data rows")
    for n, rec in enumerate(records):
        if len(rec) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(rec)}", row=n + 2
            )

    if schema.x is not None:
        x_cols = list(schema.x)
        for name in x_cols:
            if name not in index:
                raise SchemaError(f"covariate column {name!r} not found in {path}")
            if name in reserved:
                raise SchemaError(f"column {name!r} cannot be both a covariate and reserved")
    else:
        x_cols = [
            name
            for name in header
            if name not in reserved
            and all(_NUMBER.match(rec[index[name]].strip()) for rec in records)
        ]

    n = len(records)
    y = np.empty(n)
    d = np.empty(n)
    x = np.empty((n, len(x_cols)))
    ids1 = np.empty(n, dtype=np.int64)
    ids2 = np.empty(n, dtype=np.int64)
    labels1: dict[str, int] = {}
    labels2: dict[str, int] = {}
    for r, rec in enumerate(records):
        row = r + 2
        y[r] = _parse_number(rec[index[schema.y]], row, schema.y)
        d[r] = _parse_number(rec[index[schema.d]], row, schema.d)
        for k, name in enumerate(x_cols):
            x[r, k] = _parse_number(rec[index[name]], row, name)
        ids1[r] = labels1.setdefault(rec[index[schema.cluster1]].strip(), len(labels1))
        ids2[r] = labels2.setdefault(rec[index[schema.cluster2]].strip(), len(labels2))

    return ClusteredDataset.from_arrays(
        y,
        d,
        x,
        ids1,
        ids2,
        len(labels1),
        len(labels2),
        max_cell_size=max_cell_size,
        labels1=list(labels1),
        labels2=list(labels2),
        x_names=x_cols,
    )


def to_csv(ds: ClusteredDataset, path, *, cluster1="cluster1", cluster2="cluster2",
           y="y", d="d"):
    """Write ``ds`` in the layout read by :func:`from_csv`.

    Floats are written with ``repr`` so a round trip is bit-exact.
    """
    flat = ds.flatten()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([y, d, cluster1, cluster2, *ds.x_names])
        for r in range(ds.n_obs):
            w.writerow(
                [
                    repr(float(flat.y[r])),
                    repr(float(flat.d[r])),
                    ds.labels1[flat.cell_i[r]],
                    ds.labels2[flat.cell_j[r]],
                    *(repr(float(v)) for v in flat.x[r]),
                ]
            )
