"""MILP backends, MPS export and independent solution checking.

Two HiGHS front ends are wired: ``scipy`` (``scipy.optimize.milp``) and
``highs`` (the ``highspy`` bindings). ``FLEXOPT_SOLVER`` selects the default.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from flexopt.core_types import FlexoptError
from flexopt.model import BINARY, EQ, GE, LE, SENSES, ModelInstance

log = logging.getLogger(__name__)

DEFAULT_BACKEND = "scipy"
SOLVER_ENV = "FLEXOPT_SOLVER"


class SolverError(FlexoptError):
    pass


class SolverUnavailableError(SolverError):
    pass


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_GAP = "feasible-gap"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIMEOUT = "timeout"

    @property
    def has_solution(self) -> bool:
        return self in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_GAP)


@dataclass(frozen=True)
class SolveOptions:
    mip_gap: float = 0.0
    time_limit_s: float | None = None
    threads: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be non-negative")


@dataclass
class SolveResult:
    status: SolveStatus
    objective: float | None
    x: np.ndarray | None
    gap: float | None = None
    runtime_s: float = 0.0
    backend: str = ""
    names: list[str] = field(default_factory=list, repr=False)

    @property
    def values(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return dict(zip(self.names, self.x.tolist()))

    def value(self, name: str) -> float:
        if self.x is None:
            raise SolverError("result carries no solution")
        return float(self.x[self.names.index(name)])


# -- backends ---------------------------------------------------------------------


def _solve_scipy(model: ModelInstance, options: SolveOptions) -> SolveResult:
    from scipy.optimize import Bounds, LinearConstraint, milp

    opts = {"disp": False, "presolve": True, "mip_rel_gap": options.mip_gap}
    if options.time_limit_s is not None:
        opts["time_limit"] = options.time_limit_s
    cons = []
    if model.n_cons:
        lo, hi = model.row_bounds()
        cons.append(LinearConstraint(model.A, lo, hi))
    res = milp(
        model.c,
        integrality=model.integrality.astype(int),
        bounds=Bounds(model.lb, model.ub),
        constraints=cons,
        options=opts,
    )
    if res.status == 0:
        status = SolveStatus.OPTIMAL
    elif res.status == 1:
        status = SolveStatus.FEASIBLE_GAP if res.x is not None else SolveStatus.TIMEOUT
    elif res.status == 2:
        status = SolveStatus.INFEASIBLE
    elif res.status == 3:
        status = SolveStatus.UNBOUNDED
    else:
        raise SolverError(f"scipy milp failed: {res.message}")
    x = np.asarray(res.x, dtype=float) if status.has_solution else None
    gap = getattr(res, "mip_gap", None)
    obj = model.objective_value(x) if x is not None else None
    return SolveResult(status, obj, x, gap if model.n_binaries else 0.0)


def _solve_highs(model: ModelInstance, options: SolveOptions) -> SolveResult:
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise SolverUnavailableError("highspy is not installed") from exc

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", float(options.mip_gap))
    h.setOptionValue("random_seed", int(options.seed))
    if options.time_limit_s is not None:
        h.setOptionValue("time_limit", float(options.time_limit_s))
    if options.threads is not None:
        h.setOptionValue("threads", int(options.threads))
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_cons
    lp.col_cost_ = model.c
    lp.col_lower_ = model.lb
    lp.col_upper_ = model.ub
    lo, hi = model.row_bounds()
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    lp.offset_ = 0.0
    A = model.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.num_col_ = model.n_vars
    lp.a_matrix_.num_row_ = model.n_cons
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    if model.n_binaries:
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if v == BINARY else highspy.HighsVarType.kContinuous
            for v in model.integrality
        ]
    h.passModel(lp)
    h.run()
    ms = h.getModelStatus()
    M = highspy.HighsModelStatus
    has_primal = h.getInfo().primal_solution_status == 2
    if ms == M.kOptimal:
        status = SolveStatus.OPTIMAL
    elif ms == M.kInfeasible:
        status = SolveStatus.INFEASIBLE
    elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
        status = SolveStatus.UNBOUNDED
    elif ms in (M.kTimeLimit, M.kIterationLimit, M.kSolutionLimit, M.kInterrupt):
        status = SolveStatus.FEASIBLE_GAP if has_primal else SolveStatus.TIMEOUT
    else:
        raise SolverError(f"highs returned model status {h.modelStatusToString(ms)}")
    x = np.asarray(h.getSolution().col_value, dtype=float) if status.has_solution else None
    gap = float(h.getInfo().mip_gap) if model.n_binaries else 0.0
    obj = model.objective_value(x) if x is not None else None
    return SolveResult(status, obj, x, gap)


BACKENDS: dict[str, Callable[[ModelInstance, SolveOptions], SolveResult]] = {
    "scipy": _solve_scipy,
    "highs": _solve_highs,
}


def resolve_backend(name: str | None = None) -> str:
    name = name or os.environ.get(SOLVER_ENV) or DEFAULT_BACKEND
    if name not in BACKENDS:
        raise SolverUnavailableError(f"unknown solver backend {name!r}; available: {sorted(BACKENDS)}")
    return name


def solve(model: ModelInstance, options: SolveOptions | None = None, backend: str | None = None) -> SolveResult:
    """Minimize the model's objective with the selected backend."""
    options = options or SolveOptions()
    name = resolve_backend(backend)
    t0 = time.perf_counter()
    if model.n_vars == 0:
        result = SolveResult(SolveStatus.OPTIMAL, model.obj_constant, np.zeros(0), 0.0)
    else:
        result = BACKENDS[name](model, options)
    result.runtime_s = time.perf_counter() - t0
    result.backend = name
    result.names = model.variable_names()
    log.debug("%s: %s obj=%s in %.2fs", model.name, result.status.value, result.objective, result.runtime_s)
    return result


# -- verification ---------------------------------------------------------------


@dataclass
class VerificationReport:
    max_constraint_violation: float
    worst_constraint: str | None
    max_bound_violation: float
    worst_bound: str | None
    max_integrality_violation: float
    objective_reported: float
    objective_recomputed: float
    objective_abs_diff: float
    objective_rel_diff: float
    violated_constraints: list[str] = field(default_factory=list)
    max_scaled_violation: float = 0.0

    def passed(self, abs_tol: float = 1e-6, rel_tol: float = 1e-9) -> bool:
        feasible = self.max_constraint_violation <= abs_tol or self.max_scaled_violation <= rel_tol
        return (
            feasible
            and self.max_bound_violation <= abs_tol
            and self.max_integrality_violation <= abs_tol
            and self.objective_rel_diff <= 1e-6
        )


def verify_solution(model: ModelInstance, result: SolveResult, tol: float = 1e-6) -> VerificationReport:
    """Substitute the solution back into every row and bound."""
    if result.x is None:
        raise SolverError("result carries no variable values")
    x = np.asarray(result.x, dtype=float)
    if x.shape != (model.n_vars,) or not np.all(np.isfinite(x)):
        raise SolverError("missing variable value")
    A = model.A
    act = A @ x
    rhs, sense = model.rhs, model.sense
    viol = np.zeros(model.n_cons)
    le, eq, ge = (sense == SENSES.index(s) for s in (LE, EQ, GE))
    viol[le] = np.maximum(act[le] - rhs[le], 0.0)
    viol[ge] = np.maximum(rhs[ge] - act[ge], 0.0)
    viol[eq] = np.abs(act[eq] - rhs[eq])
    scale = np.maximum(1.0, np.maximum(np.abs(rhs), abs(A) @ np.abs(x)))
    lb, ub = model.lb, model.ub
    bviol = np.maximum(np.maximum(lb - x, 0.0), np.maximum(x - ub, 0.0))
    integ = model.integrality == BINARY
    iviol = np.abs(x[integ] - np.round(x[integ])) if integ.any() else np.zeros(0)
    recomputed = model.objective_value(x)
    reported = result.objective if result.objective is not None else float("nan")
    diff = abs(reported - recomputed)
    worst_c = int(np.argmax(viol)) if viol.size else None
    worst_b = int(np.argmax(bviol)) if bviol.size else None
    return VerificationReport(
        max_constraint_violation=float(viol.max()) if viol.size else 0.0,
        worst_constraint=model.constraint_name(worst_c) if worst_c is not None and viol[worst_c] > 0 else None,
        max_bound_violation=float(bviol.max()) if bviol.size else 0.0,
        worst_bound=model.variable_name(worst_b) if worst_b is not None and bviol[worst_b] > 0 else None,
        max_integrality_violation=float(iviol.max()) if iviol.size else 0.0,
        objective_reported=reported,
        objective_recomputed=recomputed,
        objective_abs_diff=diff,
        objective_rel_diff=diff / max(1.0, abs(recomputed)),
        violated_constraints=[model.constraint_name(int(r)) for r in np.flatnonzero(viol > tol)[:50]],
        max_scaled_violation=float((viol / scale).max()) if viol.size else 0.0,
    )


# -- MPS ----------------------------------------------------------------------------

_OBJ_ROW = "COST"


def _num(v: float) -> str:
    return repr(float(v))


def _col_name(j: int) -> str:
    return f"C{j:07d}"


def _row_name(i: int) -> str:
    return f"R{i:07d}"


def export_mps(model: ModelInstance, path: str | Path) -> Path:
    """Write the model as fixed-form MPS.

    Columns are named ``C0000000..`` and rows ``R0000000..`` in model order.
    The objective constant is written as the objective row's RHS with the
    sign flipped (``objective = c.x - RHS(COST)``), the common convention of
    HiGHS, CPLEX and Gurobi.
    """
    path = Path(path)
    if model.n_vars > 9_999_999 or model.n_cons > 9_999_999:
        raise SolverError("model too large for 8-character fixed-form names")
    A = model.A.tocsc()
    c = model.c
    integ = model.integrality
    lines = [f"NAME          {model.name.replace(' ', '_')[:40]}", "ROWS", f" N  {_OBJ_ROW}"]
    kind = {SENSES.index(LE): "L", SENSES.index(EQ): "E", SENSES.index(GE): "G"}
    sense = model.sense
    lines += [f" {kind[int(s)]:<2} {_row_name(i)}" for i, s in enumerate(sense)]
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        is_int = integ[j] == BINARY
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            lines.append(f"    M{marker:07d}  'MARKER'                 {tag}")
            marker += 1
            in_int = is_int
        name = _col_name(j)
        entries = []
        if c[j] != 0.0:
            entries.append((_OBJ_ROW, c[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        entries += [(_row_name(int(i)), v) for i, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        if not entries:
            entries.append((_OBJ_ROW, 0.0))
        lines += [f"    {name:<8}  {row:<8}  {_num(v)}" for row, v in entries]
    if in_int:
        lines.append(f"    M{marker:07d}  'MARKER'                 'INTEND'")
    lines.append("RHS")
    if model.obj_constant != 0.0:
        lines.append(f"    {'RHS':<8}  {_OBJ_ROW:<8}  {_num(-model.obj_constant)}")
    rhs = model.rhs
    lines += [f"    {'RHS':<8}  {_row_name(int(i)):<8}  {_num(rhs[i])}" for i in np.flatnonzero(rhs)]
    lines.append("BOUNDS")
    lb, ub = model.lb, model.ub
    for j in range(model.n_vars):
        name = _col_name(j)
        lo, hi = lb[j], ub[j]
        if integ[j] == BINARY and lo == 0.0 and hi == 1.0:
            lines.append(f" BV BND       {name}")
            continue
        if lo == hi:
            lines.append(f" FX BND       {name:<8}  {_num(lo)}")
            continue
        if lo == -np.inf and hi == np.inf:
            lines.append(f" FR BND       {name}")
            continue
        if lo == -np.inf:
            lines.append(f" MI BND       {name}")
        elif lo != 0.0:
            lines.append(f" LO BND       {name:<8}  {_num(lo)}")
        if hi != np.inf:
            lines.append(f" UP BND       {name:<8}  {_num(hi)}")
    lines.append("ENDATA")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise SolverError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass
class MpsSummary:
    n_vars: int
    n_cons: int
    nnz: int
    integer_columns: frozenset
    offset: float
    A: object = field(repr=False)
    c: np.ndarray = field(repr=False)
    col_lower: np.ndarray = field(repr=False)
    col_upper: np.ndarray = field(repr=False)
    row_lower: np.ndarray = field(repr=False)
    row_upper: np.ndarray = field(repr=False)


def read_mps_reference(path: str | Path) -> MpsSummary:
    """Parse an MPS file with HiGHS' reader, independent of the writer above."""
    import highspy
    import scipy.sparse as sp

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    status = h.readModel(str(path))
    if status != highspy.HighsStatus.kOk:
        raise SolverError(f"reference reader rejected {path}: {status}")
    lp = h.getLp()
    a = lp.a_matrix_
    n, m = lp.num_col_, lp.num_row_
    if a.format_ == highspy.MatrixFormat.kColwise:
        A = sp.csc_matrix((np.asarray(a.value_), np.asarray(a.index_), np.asarray(a.start_)), shape=(m, n))
    else:
        A = sp.csr_matrix((np.asarray(a.value_), np.asarray(a.index_), np.asarray(a.start_)), shape=(m, n))
    integ = list(lp.integrality_) if len(lp.integrality_) else []
    ints = frozenset(j for j, v in enumerate(integ) if v == highspy.HighsVarType.kInteger)
    return MpsSummary(
        n_vars=n,
        n_cons=m,
        nnz=int(A.nnz),
        integer_columns=ints,
        offset=float(lp.offset_),
        A=A,
        c=np.asarray(lp.col_cost_),
        col_lower=np.asarray(lp.col_lower_),
        col_upper=np.asarray(lp.col_upper_),
        row_lower=np.asarray(lp.row_lower_),
        row_upper=np.asarray(lp.row_upper_),
    )
