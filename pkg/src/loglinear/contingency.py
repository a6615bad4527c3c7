"""
Immutable multiway contingency tables.

A table is a dense array over the cross-product of its factors' levels,
stored row-major in the declared factor order (the last factor varies
fastest).  Integer tables hold observed counts; real-valued tables of the
same shape hold fitted means.
"""

import csv
import io
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Factor",
    "ContingencyTable",
    "build_table",
    "margin",
    "collapse",
    "conditional_odds_ratios",
]


@dataclass(frozen=True)
class Factor:
    """A categorical factor with an explicit level order.

    The first level is the default baseline for treatment coding.
    """

    name: str
    levels: tuple

    def __post_init__(self):
        levels = tuple(str(level) for level in self.levels)
        object.__setattr__(self, "levels", levels)
        if not self.name:
            raise ValueError("factor name must be non-empty")
        if len(levels) < 2:
            raise ValueError(f"factor {self.name!r} needs at least 2 levels")
        if len(set(levels)) != len(levels):
            raise ValueError(f"factor {self.name!r} has duplicate level labels")

    def __len__(self):
        return len(self.levels)

    @property
    def baseline(self):
        return self.levels[0]

    def index(self, level):
        try:
            return self.levels.index(level)
        except ValueError:
            raise ValueError(
                f"unknown level {level!r} for factor {self.name!r}"
            ) from None


class ContingencyTable:
    """Cell values over the full cross-classification of ``factors``.

    Parameters
    ----------
    factors : sequence of Factor
    values : array_like
        Either shaped like the cross-product or flat in row-major order.
        Integer input is kept as counts (int64); anything else becomes a
        real-valued table.  All cells must be nonnegative.
    """

    def __init__(self, factors: Sequence[Factor], values):
        factors = tuple(factors)
        names = [f.name for f in factors]
        if not factors:
            raise ValueError("a table needs at least one factor")
        if len(set(names)) != len(names):
            raise ValueError("duplicate factor names")
        shape = tuple(len(f) for f in factors)
        arr = np.asarray(values)
        if arr.dtype == bool or arr.dtype.kind not in "iuf":
            raise TypeError("cell values must be numeric")
        if arr.dtype.kind in "iu":
            arr = arr.astype(np.int64)
        else:
            arr = arr.astype(np.float64)
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"expected {int(np.prod(shape))} cells for shape {shape}, got {arr.size}"
            )
        arr = arr.reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise ValueError("cell values must be finite")
        if np.any(arr < 0):
            raise ValueError("cell values must be nonnegative")
        arr.flags.writeable = False
        self._factors = factors
        self._values = arr

    # -- basic accessors -------------------------------------------------

    @property
    def factors(self):
        return self._factors

    @property
    def names(self):
        return tuple(f.name for f in self._factors)

    @property
    def shape(self):
        return self._values.shape

    @property
    def values(self):
        """Read-only ndarray of cell values, shaped like the table."""
        return self._values

    @property
    def counts(self):
        """Flat row-major cell values."""
        return self._values.ravel()

    @property
    def n_cells(self):
        return self._values.size

    @property
    def is_integer(self):
        return self._values.dtype.kind == "i"

    @property
    def total(self):
        total = self._values.sum()
        return int(total) if self.is_integer else float(total)

    def factor(self, name) -> Factor:
        for f in self._factors:
            if f.name == name:
                return f
        raise ValueError(f"unknown factor {name!r}; table has {self.names}")

    def axis(self, name):
        self.factor(name)
        return self.names.index(name)

    def cells(self):
        """Yield ``(level_tuple, value)`` pairs in storage order."""
        for labels, value in zip(
            itertools.product(*(f.levels for f in self._factors)), self.counts
        ):
            yield labels, (int(value) if self.is_integer else float(value))

    def __getitem__(self, labels):
        if isinstance(labels, Mapping):
            labels = tuple(labels[n] for n in self.names)
        if not isinstance(labels, tuple):
            labels = (labels,)
        if len(labels) != len(self._factors):
            raise KeyError(labels)
        idx = tuple(f.index(lv) for f, lv in zip(self._factors, labels))
        value = self._values[idx]
        return int(value) if self.is_integer else float(value)

    def __eq__(self, other):
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return (
            self._factors == other._factors
            and self._values.dtype.kind == other._values.dtype.kind
            and np.array_equal(self._values, other._values)
        )

    def __hash__(self):
        return hash((self._factors, self._values.tobytes()))

    def __repr__(self):
        dims = "x".join(str(n) for n in self.shape)
        return f"ContingencyTable({'*'.join(self.names)}, {dims}, total={self.total})"

    def with_values(self, values):
        """A table with the same factors and new cell values."""
        return ContingencyTable(self._factors, values)

    # -- serialization ---------------------------------------------------

    def to_csv(self, value_column="count"):
        """Flat CSV text: one row per cell (level labels, then the value)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*self.names, value_column])
        for labels, value in self.cells():
            writer.writerow([*labels, value if self.is_integer else repr(value)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        """Inverse of :meth:`to_csv`.

        Level order is recovered from first appearance, which matches the
        declared order because rows are written in storage order.
        """
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty table CSV")
        header, body = rows[0], [r for r in rows[1:] if r]
        names = header[:-1]
        levels = [dict() for _ in names]
        for row in body:
            if len(row) != len(header):
                raise ValueError(f"malformed table row {row!r}")
            for seen, label in zip(levels, row[:-1]):
                seen.setdefault(label, None)
        factors = [Factor(n, tuple(lv)) for n, lv in zip(names, levels)]
        raw = [row[-1] for row in body]
        if all(_is_int(v) for v in raw):
            cells = [(tuple(row[:-1]), int(row[-1])) for row in body]
            return build_table(factors, cells)
        table = np.zeros([len(f) for f in factors])
        for row in body:
            idx = tuple(f.index(lv) for f, lv in zip(factors, row[:-1]))
            table[idx] = float(row[-1])
        return cls(factors, table)

    def to_dict(self):
        return {
            "factors": [{"name": f.name, "levels": list(f.levels)} for f in self._factors],
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        factors = [Factor(f["name"], tuple(f["levels"])) for f in data["factors"]]
        counts = data["counts"]
        if all(isinstance(c, int) for c in counts):
            return cls(factors, np.array(counts, dtype=np.int64))
        return cls(factors, np.array(counts, dtype=np.float64))

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _is_int(text):
    try:
        int(text)
    except ValueError:
        return False
    return True


def build_table(factors: Sequence[Factor], cells: Iterable) -> ContingencyTable:
    """Build an integer table from ``(level_tuple, count)`` pairs.

    Unmentioned cells are zero.

    Raises
    ------
    ValueError
        On an unknown level label, a duplicated cell, or a negative or
        non-integer count.
    """
    factors = tuple(factors)
    counts = np.zeros([len(f) for f in factors], dtype=np.int64)
    seen = set()
    for labels, count in cells:
        labels = tuple(labels)
        if len(labels) != len(factors):
            raise ValueError(f"cell {labels!r} does not match {len(factors)} factors")
        idx = tuple(f.index(lv) for f, lv in zip(factors, labels))
        if idx in seen:
            raise ValueError(f"duplicate cell {labels!r}")
        seen.add(idx)
        if isinstance(count, (bool, np.bool_)) or int(count) != count:
            raise ValueError(f"count for {labels!r} must be an integer, got {count!r}")
        if count < 0:
            raise ValueError(f"negative count {count} for {labels!r}")
        counts[idx] = int(count)
    return ContingencyTable(factors, counts)


def margin(table: ContingencyTable, keep) -> ContingencyTable:
    """Sum over every factor not named in ``keep``.

    The kept factors retain their order in ``table``.
    """
    if isinstance(keep, str):
        keep = [keep]
    keep = set(keep)
    if not keep:
        raise ValueError("margin needs at least one factor to keep")
    for name in keep:
        table.factor(name)
    drop = tuple(i for i, n in enumerate(table.names) if n not in keep)
    factors = [f for f in table.factors if f.name in keep]
    return ContingencyTable(factors, table.values.sum(axis=drop))


def collapse(table: ContingencyTable, factor, mapping: Mapping) -> ContingencyTable:
    """Merge levels of ``factor`` according to ``mapping`` (old -> new).

    New levels are ordered by first occurrence among the mapping's values.
    """
    old = table.factor(factor)
    unknown = [lv for lv in mapping if lv not in old.levels]
    if unknown:
        raise ValueError(f"mapping refers to unknown levels of {factor!r}: {unknown}")
    missing = [lv for lv in old.levels if lv not in mapping]
    if missing:
        raise ValueError(f"unmapped levels of {factor!r}: {missing}")
    new_levels = list(dict.fromkeys(str(v) for v in mapping.values()))
    axis = table.axis(factor)
    shape = list(table.shape)
    shape[axis] = len(new_levels)
    out = np.zeros(shape, dtype=table.values.dtype)
    for i, lv in enumerate(old.levels):
        j = new_levels.index(str(mapping[lv]))
        src = np.take(table.values, i, axis=axis)
        dst = [slice(None)] * len(shape)
        dst[axis] = j
        out[tuple(dst)] += src
    if len(new_levels) < 2:
        raise ValueError("collapsing to a single level is not supported")
    factors = list(table.factors)
    factors[axis] = Factor(old.name, tuple(new_levels))
    return ContingencyTable(factors, out)


def conditional_odds_ratios(table: ContingencyTable, pair, given, baselines=None):
    """Baseline-referenced 2x2 odds ratios of ``pair`` within each stratum.

    For factors X, Y with baselines x0, y0 the odds ratio at (x, y) is
    ``m[x, y] m[x0, y0] / (m[x, y0] m[x0, y])`` evaluated inside every level
    of ``given``.  Any remaining factors are summed out first.

    Returns
    -------
    dict
        Stratum level -> ndarray of shape ``(len(X) - 1, len(Y) - 1)``.

    Raises
    ------
    ValueError
        If any cell entering a ratio is zero.
    """
    x_name, y_name = pair
    if len({x_name, y_name, given}) != 3:
        raise ValueError("pair and conditioning factor must be three distinct factors")
    sub = margin(table, [x_name, y_name, given])
    order = [sub.axis(x_name), sub.axis(y_name), sub.axis(given)]
    m = np.transpose(sub.values, order).astype(float)
    baselines = dict(baselines or {})
    fx, fy, fz = sub.factor(x_name), sub.factor(y_name), sub.factor(given)
    bx = fx.index(baselines.get(x_name, fx.baseline))
    by = fy.index(baselines.get(y_name, fy.baseline))
    xs = [i for i in range(len(fx)) if i != bx]
    ys = [j for j in range(len(fy)) if j != by]
    result = {}
    for k, level in enumerate(fz.levels):
        s = m[:, :, k]
        used = s[np.ix_(xs + [bx], ys + [by])]
        if np.any(used == 0):
            raise ValueError(f"zero cell in stratum {given}={level!r}")
        ratios = (
            s[np.ix_(xs, ys)] * s[bx, by]
            / (s[np.ix_(xs, [by])] * s[np.ix_([bx], ys)])
        )
        result[level] = ratios
    return result
