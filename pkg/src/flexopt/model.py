"""Solver-agnostic MILP container.

Variables are created in blocks keyed by ``(symbol, tech, mode)``; a block
is either a scalar or a vector over the time index. Constraints are stored
in named blocks of sparse rows. The objective is always minimized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from flexopt.core_types import FlexoptError

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)
CONTINUOUS, BINARY = 0, 1

_NAME_RE = re.compile(r"^([^\[]+)\[([^|\]]*)\|([^|\]]*)\|([^\]]*)\]$")


class ModelError(FlexoptError):
    pass


@dataclass(frozen=True)
class VarBlock:
    symbol: str
    tech: str | None
    mode: str | None
    start: int
    size: int
    scalar: bool

    @property
    def key(self) -> tuple:
        return (self.symbol, self.tech, self.mode)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)


@dataclass(frozen=True)
class ConBlock:
    name: str
    start: int
    size: int


def _fmt_key(symbol: str, tech: str | None, mode: str | None, t: int | None) -> str:
    return f"{symbol}[{tech or ''}|{mode or ''}|{'' if t is None else t}]"


class ModelInstance:
    """Linear objective, linear rows, bounded variables, binaries."""

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.meta: dict = {}
        self._blocks: dict[tuple, VarBlock] = {}
        self._block_list: list[VarBlock] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._integ: list[np.ndarray] = []
        self.n_vars = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.con_blocks: list[ConBlock] = []
        self.n_cons = 0
        self._obj_cols: list[np.ndarray] = []
        self._obj_vals: list[np.ndarray] = []
        self.obj_constant = 0.0
        self._cache: dict = {}

    # -- variables ------------------------------------------------------------

    def add_vars(
        self,
        symbol: str,
        tech: str | None = None,
        mode: str | None = None,
        size: int | None = None,
        lb: float | np.ndarray = 0.0,
        ub: float | np.ndarray = np.inf,
        binary: bool = False,
    ) -> np.ndarray | int:
        """Declare a block; ``size=None`` makes a scalar and returns its index."""
        key = (symbol, tech, mode)
        if key in self._blocks:
            raise ModelError(f"variable block {key} declared twice")
        n = 1 if size is None else int(size)
        lo = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        if binary:
            lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
        if np.any(lo > hi):
            raise ModelError(f"{key}: lower bound above upper bound")
        block = VarBlock(symbol, tech, mode, self.n_vars, n, size is None)
        self._blocks[key] = block
        self._block_list.append(block)
        self._lb.append(lo)
        self._ub.append(hi)
        self._integ.append(np.full(n, BINARY if binary else CONTINUOUS, dtype=np.int8))
        self.n_vars += n
        self._cache.clear()
        return block.start if size is None else block.indices

    def has(self, symbol: str, tech: str | None = None, mode: str | None = None) -> bool:
        return (symbol, tech, mode) in self._blocks

    def var(self, symbol: str, tech: str | None = None, mode: str | None = None):
        try:
            block = self._blocks[(symbol, tech, mode)]
        except KeyError:
            raise ModelError(f"no variable block {(symbol, tech, mode)}") from None
        return block.start if block.scalar else block.indices

    def blocks(self, symbol: str | None = None) -> list[VarBlock]:
        return [b for b in self._block_list if symbol is None or b.symbol == symbol]

    def index(self, symbol: str, tech: str | None = None, t: int | None = None, mode: str | None = None) -> int:
        block = self._blocks.get((symbol, tech, mode))
        if block is None:
            raise ModelError(f"no variable {_fmt_key(symbol, tech, mode, t)}")
        if block.scalar:
            if t is not None:
                raise ModelError(f"{block.key} is scalar")
            return block.start
        if t is None or not 0 <= t < block.size:
            raise ModelError(f"time index {t} out of range for {block.key}")
        return block.start + t

    def _block_of(self, i: int) -> VarBlock:
        starts = self._cache.get("starts")
        if starts is None:
            starts = np.array([b.start for b in self._block_list])
            self._cache["starts"] = starts
        return self._block_list[int(np.searchsorted(starts, i, side="right")) - 1]

    def variable_name(self, i: int) -> str:
        if not 0 <= i < self.n_vars:
            raise ModelError(f"variable index {i} out of range")
        b = self._block_of(i)
        return _fmt_key(b.symbol, b.tech, b.mode, None if b.scalar else i - b.start)

    def variable_names(self) -> list[str]:
        names = []
        for b in self._block_list:
            if b.scalar:
                names.append(_fmt_key(b.symbol, b.tech, b.mode, None))
            else:
                names.extend(_fmt_key(b.symbol, b.tech, b.mode, t) for t in range(b.size))
        return names

    def name_to_index(self, name: str) -> int:
        m = _NAME_RE.match(name)
        if not m:
            raise ModelError(f"malformed variable name {name!r}")
        symbol, tech, mode, t = m.groups()
        return self.index(symbol, tech or None, int(t) if t else None, mode or None)

    def fix(self, idx: np.ndarray | int, value: float | np.ndarray) -> None:
        """Pin variables to values by tightening both bounds."""
        lb, ub = self.lb, self.ub
        lb[idx] = value
        ub[idx] = value
        self._set_bounds(lb, ub)

    def set_upper(self, idx: np.ndarray | int, value: float | np.ndarray) -> None:
        lb, ub = self.lb, self.ub
        ub[idx] = value
        if np.any(lb > ub):
            raise ModelError("upper bound below lower bound")
        self._set_bounds(lb, ub)

    def _set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        self._lb, self._ub = [lb.copy()], [ub.copy()]
        self._cache.pop("lb", None)
        self._cache.pop("ub", None)

    # -- constraints ------------------------------------------------------------

    def add_rows(
        self,
        name: str,
        n: int,
        terms: Sequence[tuple],
        sense: str,
        rhs: float | np.ndarray = 0.0,
    ) -> np.ndarray:
        """Add ``n`` rows ``sum_j coef_j[k] * x[cols_j[k]] (sense) rhs[k]``.

        Each term is ``(cols, coefs)``; scalars broadcast over the ``n`` rows,
        so a scalar column links the same variable into every row.
        """
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        rows, cols, vals = [], [], []
        local = np.arange(n)
        for c, v in terms:
            c = np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))
            v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
            keep = v != 0.0
            rows.append(local[keep])
            cols.append(c[keep])
            vals.append(v[keep])
        r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        if c.size and (c.min() < 0 or c.max() >= self.n_vars):
            raise ModelError(f"{name}: references an undeclared variable")
        start = self.n_cons
        self._rows.append(r + start)
        self._cols.append(c)
        self._vals.append(np.concatenate(vals) if vals else np.zeros(0))
        self._sense.append(np.full(n, SENSES.index(sense), dtype=np.int8))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (n,)).copy())
        self.con_blocks.append(ConBlock(name, start, n))
        self.n_cons += n
        self._cache.clear()
        return np.arange(start, start + n)

    def add_row(self, name: str, terms: Sequence[tuple], sense: str, rhs: float = 0.0) -> int:
        """Add one row; each term's ``cols``/``coefs`` arrays are summed into it.

        Repeated columns are summed when the matrix is assembled.
        """
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        cols = [np.atleast_1d(np.asarray(c, dtype=np.int64)) for c, _ in terms]
        coefs = [np.broadcast_to(np.asarray(v, dtype=float), c.shape) for c, (_, v) in zip(cols, terms)]
        cols_a = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        coefs_a = np.concatenate(coefs) if coefs else np.zeros(0)
        if cols_a.size and (cols_a.min() < 0 or cols_a.max() >= self.n_vars):
            raise ModelError(f"{name}: references an undeclared variable")
        keep = coefs_a != 0.0
        start = self.n_cons
        self._rows.append(np.full(int(keep.sum()), start, dtype=np.int64))
        self._cols.append(cols_a[keep])
        self._vals.append(coefs_a[keep])
        self._sense.append(np.array([SENSES.index(sense)], dtype=np.int8))
        self._rhs.append(np.array([float(rhs)]))
        self.con_blocks.append(ConBlock(name, start, 1))
        self.n_cons += 1
        self._cache.clear()
        return start

    def constraint_name(self, r: int) -> str:
        for b in self.con_blocks:
            if b.start <= r < b.start + b.size:
                return b.name if b.size == 1 else f"{b.name}[{r - b.start}]"
        raise ModelError(f"constraint index {r} out of range")

    # -- objective --------------------------------------------------------------

    def add_objective(self, cols, coefs) -> None:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape)
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ModelError("objective references an undeclared variable")
        self._obj_cols.append(cols)
        self._obj_vals.append(coefs.copy())
        self._cache.pop("c", None)

    # -- assembled arrays -------------------------------------------------------

    def _cat(self, key: str, parts: list[np.ndarray], dtype) -> np.ndarray:
        arr = self._cache.get(key)
        if arr is None:
            arr = np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)
            self._cache[key] = arr
        return arr

    @property
    def lb(self) -> np.ndarray:
        return self._cat("lb", self._lb, float).copy()

    @property
    def ub(self) -> np.ndarray:
        return self._cat("ub", self._ub, float).copy()

    @property
    def integrality(self) -> np.ndarray:
        return self._cat("integ", self._integ, np.int8)

    @property
    def sense(self) -> np.ndarray:
        return self._cat("sense", self._sense, np.int8)

    @property
    def rhs(self) -> np.ndarray:
        return self._cat("rhs", self._rhs, float)

    @property
    def c(self) -> np.ndarray:
        vec = self._cache.get("c")
        if vec is None:
            vec = np.zeros(self.n_vars)
            for cols, vals in zip(self._obj_cols, self._obj_vals):
                np.add.at(vec, cols, vals)
            self._cache["c"] = vec
        return vec

    @property
    def A(self) -> sp.csr_matrix:
        mat = self._cache.get("A")
        if mat is None:
            rows = self._cat("rows", self._rows, np.int64)
            cols = self._cat("cols", self._cols, np.int64)
            vals = self._cat("vals", self._vals, float)
            mat = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_cons, self.n_vars)).tocsr()
            mat.sum_duplicates()
            mat.eliminate_zeros()
            self._cache["A"] = mat
        return mat

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        s, r = self.sense, self.rhs
        lo = np.where(s == SENSES.index(LE), -np.inf, r)
        hi = np.where(s == SENSES.index(GE), np.inf, r)
        return lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.obj_constant

    # -- introspection ----------------------------------------------------------

    def variables(self) -> Iterator[tuple[str, float, float, str]]:
        lb, ub, integ = self.lb, self.ub, self.integrality
        for i, name in enumerate(self.variable_names()):
            yield name, lb[i], ub[i], "binary" if integ[i] == BINARY else "continuous"

    def constraints(self) -> Iterator[tuple[str, dict[int, float], str, float]]:
        A = self.A
        for r in range(self.n_cons):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()))
            yield self.constraint_name(r), terms, SENSES[self.sense[r]], float(self.rhs[r])

    def block_counts(self) -> tuple[dict[str, int], dict[str, int]]:
        """Variable and constraint counts grouped by symbol / block name."""
        var_counts: dict[str, int] = {}
        for b in self._block_list:
            var_counts[b.symbol] = var_counts.get(b.symbol, 0) + b.size
        con_counts: dict[str, int] = {}
        for b in self.con_blocks:
            base = b.name.split(":")[0]
            con_counts[base] = con_counts.get(base, 0) + b.size
        return var_counts, con_counts

    @property
    def n_binaries(self) -> int:
        return int((self.integrality == BINARY).sum())

    def __repr__(self) -> str:
        return (
            f"ModelInstance({self.name!r}, vars={self.n_vars}, binaries={self.n_binaries}, "
            f"cons={self.n_cons})"
        )
