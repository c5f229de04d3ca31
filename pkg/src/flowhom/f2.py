"""Dense F2 linear algebra on Python-int bit rows.

Rows are arbitrary-precision integers, bit i = column i.  XOR gives
row addition, so elimination runs at C speed even for a few * 10^5
columns.  Pivoting is deterministic (lowest column index first) so
homology generator representatives are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class F2Matrix:
    """Matrix over F2 with rows stored as int bitmasks."""

    rows: list[int]
    ncols: int

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> "F2Matrix":
        return cls([0] * nrows, ncols)

    @classmethod
    def identity(cls, n: int) -> "F2Matrix":
        return cls([1 << i for i in range(n)], n)

    @classmethod
    def from_array(cls, a) -> "F2Matrix":
        a = np.asarray(a, dtype=np.int64) % 2
        if a.ndim != 2:
            raise ValueError("need a 2-d array")
        rows = []
        for r in a:
            bits = 0
            for j in np.flatnonzero(r):
                bits |= 1 << int(j)
            rows.append(bits)
        return cls(rows, a.shape[1])

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols), dtype=np.uint8)
        for i, r in enumerate(self.rows):
            j = 0
            while r:
                if r & 1:
                    out[i, j] = 1
                r >>= 1
                j += 1
        return out

    # -- basic protocol ------------------------------------------------

    @property
    def nrows(self) -> int:
        return len(self.rows)

    def __getitem__(self, key: tuple[int, int]) -> int:
        i, j = key
        return (self.rows[i] >> j) & 1

    def __setitem__(self, key: tuple[int, int], value: int) -> None:
        i, j = key
        if value & 1:
            self.rows[i] |= 1 << j
        else:
            self.rows[i] &= ~(1 << j)

    def __eq__(self, other) -> bool:
        return (isinstance(other, F2Matrix) and self.ncols == other.ncols
                and self.rows == other.rows)

    def copy(self) -> "F2Matrix":
        return F2Matrix(list(self.rows), self.ncols)

    def is_zero(self) -> bool:
        return all(r == 0 for r in self.rows)

    # -- algebra --------------------------------------------------------

    def __add__(self, other: "F2Matrix") -> "F2Matrix":
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            raise ValueError("shape mismatch in F2 addition")
        return F2Matrix([a ^ b for a, b in zip(self.rows, other.rows)], self.ncols)

    def __matmul__(self, other: "F2Matrix") -> "F2Matrix":
        if self.ncols != other.nrows:
            raise ValueError("shape mismatch in F2 product")
        out = []
        for r in self.rows:
            acc = 0
            rr = r
            i = 0
            while rr:
                if rr & 1:
                    acc ^= other.rows[i]
                rr >>= 1
                i += 1
            out.append(acc)
        return F2Matrix(out, other.ncols)

    def transpose(self) -> "F2Matrix":
        cols = [0] * self.ncols
        for i, r in enumerate(self.rows):
            j = 0
            while r:
                if r & 1:
                    cols[j] |= 1 << i
                r >>= 1
                j += 1
        return F2Matrix(cols, self.nrows)

    def apply(self, vec: int) -> int:
        """Matrix * column vector, the vector given as a bitmask over columns."""
        acc = 0
        for i, r in enumerate(self.rows):
            if bin(r & vec).count("1") & 1:
                acc |= 1 << i
        return acc

    # -- elimination -----------------------------------------------------

    def rref(self) -> tuple["F2Matrix", list[int]]:
        """Reduced row echelon form and the list of pivot columns."""
        rows = list(self.rows)
        pivots: list[int] = []
        rank = 0
        for col in range(self.ncols):
            mask = 1 << col
            sel = None
            for i in range(rank, len(rows)):
                if rows[i] & mask:
                    sel = i
                    break
            if sel is None:
                continue
            rows[rank], rows[sel] = rows[sel], rows[rank]
            for i in range(len(rows)):
                if i != rank and rows[i] & mask:
                    rows[i] ^= rows[rank]
            pivots.append(col)
            rank += 1
        return F2Matrix(rows, self.ncols), pivots

    def rank(self) -> int:
        _, pivots = self.rref()
        return len(pivots)

    def kernel_basis(self) -> list[int]:
        """Basis of the right kernel, each vector as a column bitmask."""
        red, pivots = self.rref()
        pivot_set = set(pivots)
        free = [c for c in range(self.ncols) if c not in pivot_set]
        basis = []
        for f in free:
            vec = 1 << f
            for r, p in zip(red.rows, pivots):
                if (r >> f) & 1:
                    vec |= 1 << p
            basis.append(vec)
        return basis

    def solve(self, target: int) -> int | None:
        """One solution x of A x = target (bitmask over rows), or None."""
        aug = F2Matrix(
            [r | (((target >> i) & 1) << self.ncols) for i, r in enumerate(self.rows)],
            self.ncols + 1,
        )
        red, pivots = aug.rref()
        x = 0
        for r, p in zip(red.rows, pivots):
            if p == self.ncols:
                return None
            if (r >> self.ncols) & 1:
                x |= 1 << p
        return x


def rank_sparse(columns: list[int]) -> int:
    """Rank of a matrix given as column bitmasks (persistence-style reduction).

    Columns are reduced against a pivot table keyed by highest set bit;
    boundary matrices of cell complexes reduce with little fill-in.
    """
    table: dict[int, int] = {}
    cols = list(columns)
    for j in range(len(cols)):
        col = cols[j]
        while col:
            low = col.bit_length() - 1
            other = table.get(low)
            if other is None:
                table[low] = j
                cols[j] = col
                break
            col ^= cols[other]
        else:
            cols[j] = 0
    return len(table)


def vec_from_indices(indices, n: int) -> int:
    """Column bitmask with the given bits set (n kept for interface clarity)."""
    v = 0
    for i in indices:
        if i >= n:
            raise IndexError("index beyond vector length")
        v |= 1 << i
    return v


def vec_indices(vec: int) -> list[int]:
    out = []
    i = 0
    while vec:
        if vec & 1:
            out.append(i)
        vec >>= 1
        i += 1
    return out
