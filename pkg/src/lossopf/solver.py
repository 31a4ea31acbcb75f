"""Formulation-agnostic linear/conic model with incremental constraint addition.

Two engines sit behind one ``Model``: HiGHS (through scipy) for pure LPs and
Clarabel for models carrying rotated-quadratic constraints. A third mode
("static") realizes each rotated-quadratic constraint as a fan of tangent
rows so the model stays an LP on conic-free engines; the per-constraint
under-approximation gap is bounded by ``scale * (spacing/2)**2`` with
``spacing = (hi - lo)/(tangents - 1)``.

Duals are reported for linear constraints as d(objective)/d(rhs) of the
constraint as written (shadow prices for minimization). Conic constraints
carry no dual reporting.

Re-solving after adding constraints is supported and cheap to set up; no
available engine accepts a starting basis, so a supplied warm start is
validated and recorded but does not influence the solve. Models are
single-owner; distinct models may solve concurrently.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

__all__ = ["Model", "Status", "Sense", "SolveResult", "CapabilityError"]


class CapabilityError(RuntimeError):
    """A backend was asked for a constraint class it cannot enforce."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NUMERIC_FAILURE = "numeric-failure"


class Sense(enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    wall_time: float = 0.0
    backend: str = ""
    warm_start_used: bool = False
    detail: str = ""


@dataclass
class _Row:
    indices: np.ndarray
    coefs: np.ndarray
    sense: Sense
    rhs: float


@dataclass
class _Cone:
    quad_var: int
    lin_indices: np.ndarray
    lin_coefs: np.ndarray
    scale: float


def _as_sparse_row(coeffs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(coeffs, dict):
        items = sorted(coeffs.items())
    else:
        items = sorted(coeffs)
    idx = np.array([i for i, _ in items], dtype=np.int64)
    val = np.array([v for _, v in items], dtype=float)
    keep = val != 0.0
    return idx[keep], val[keep]


class Model:
    """Variable/constraint registry with pluggable solve engines.

    ``backend``: "auto" routes to HiGHS for LPs and Clarabel when conic
    constraints are present; "highs" refuses conic constraints loudly;
    "clarabel" always uses the conic engine; "static" linearizes conic
    constraints into tangent rows at add time (``static_tangents`` per
    constraint, spanning the quadratic variable's range).
    """

    def __init__(self, name: str = "model", backend: str = "auto", static_tangents: int = 64):
        if backend not in ("auto", "highs", "clarabel", "static"):
            raise ValueError(f"unknown backend {backend!r}")
        self.name = name
        self.backend = backend
        self.static_tangents = static_tangents
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._cost: list[float] = []
        self._rows: list[_Row] = []
        self._cones: list[_Cone] = []
        self._offset = 0.0
        self._static_groups: list[tuple[int, int]] = []  # (first row id, count)

    # -- variables ------------------------------------------------------
    @property
    def num_variables(self) -> int:
        return len(self._names)

    @property
    def num_linear_constraints(self) -> int:
        return len(self._rows)

    @property
    def num_conic_constraints(self) -> int:
        return len(self._cones)

    def add_variable(self, name: str, lb: float, ub: float, cost: float = 0.0) -> int:
        if lb > ub:
            raise ValueError(f"reversed bounds for {name!r}: [{lb}, {ub}]")
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._cost.append(float(cost))
        return len(self._names) - 1

    def add_variables(self, specs) -> range:
        start = self.num_variables
        for name, lb, ub, cost in specs:
            self.add_variable(name, lb, ub, cost)
        return range(start, self.num_variables)

    def set_cost(self, var: int, cost: float) -> None:
        self._cost[var] = float(cost)

    def add_objective_offset(self, value: float) -> None:
        self._offset += float(value)

    def variable_bounds(self, var: int) -> tuple[float, float]:
        return self._lb[var], self._ub[var]

    # -- constraints ----------------------------------------------------
    def add_linear_constraint(self, coeffs, sense: Sense, rhs: float) -> int:
        idx, val = _as_sparse_row(coeffs)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.num_variables):
            raise ValueError(f"unknown variable index in constraint: {idx}")
        self._rows.append(_Row(idx, val, sense, float(rhs)))
        return len(self._rows) - 1

    def add_rotated_quadratic(self, quad_var: int, linear_expr, scale: float, span=None) -> int:
        """Enforce linear_expr >= scale * quad_var**2 (scale >= 0).

        ``scale == 0`` degenerates to the linear constraint linear_expr >= 0.
        In static mode the constraint is realized immediately as tangent rows
        over ``span`` (defaults to the quadratic variable's bounds, which must
        then be finite).
        """
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        if not 0 <= quad_var < self.num_variables:
            raise ValueError(f"unknown variable index {quad_var}")
        idx, val = _as_sparse_row(linear_expr)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.num_variables):
            raise ValueError(f"unknown variable index in constraint: {idx}")
        if scale == 0.0:
            return self.add_linear_constraint(dict(zip(idx.tolist(), val.tolist())), Sense.GE, 0.0)
        if self.backend == "static":
            return self._expand_static(quad_var, idx, val, scale, span)
        self._cones.append(_Cone(quad_var, idx, val, float(scale)))
        return len(self._cones) - 1

    def _expand_static(self, quad_var, idx, val, scale, span) -> int:
        lo, hi = span if span is not None else (self._lb[quad_var], self._ub[quad_var])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise CapabilityError(
                "static linearization needs a finite span for the quadratic variable"
            )
        h = self.static_tangents
        points = np.linspace(lo, hi, h)
        first = len(self._rows)
        base = dict(zip(idx.tolist(), val.tolist()))
        for p_ref in points:
            # tangent of scale*x^2 at p_ref: linear_expr >= scale*(2*p_ref*x - p_ref^2)
            row = dict(base)
            row[quad_var] = row.get(quad_var, 0.0) - 2.0 * scale * p_ref
            self.add_linear_constraint(row, Sense.GE, -scale * p_ref * p_ref)
        self._static_groups.append((first, h))
        return first

    # -- solving --------------------------------------------------------
    def solve(self, warm_start: SolveResult | None = None) -> SolveResult:
        if warm_start is not None and warm_start.x is not None:
            if len(warm_start.x) > self.num_variables:
                raise ValueError("warm start has more entries than the model has variables")
        trivial = self._trivially_infeasible_row()
        if trivial is not None:
            return SolveResult(
                status=Status.INFEASIBLE,
                backend="presolve",
                detail=f"empty row {trivial} cannot be satisfied",
            )
        if self._cones:
            if self.backend == "highs":
                raise CapabilityError(
                    "backend 'highs' cannot enforce rotated-quadratic constraints; "
                    "use backend 'clarabel' or 'static'"
                )
            return self._solve_clarabel()
        if self.backend == "clarabel":
            return self._solve_clarabel()
        return self._solve_highs()

    def _trivially_infeasible_row(self) -> int | None:
        for i, row in enumerate(self._rows):
            if len(row.indices):
                continue
            ok = (
                (row.sense is Sense.LE and 0.0 <= row.rhs)
                or (row.sense is Sense.GE and 0.0 >= row.rhs)
                or (row.sense is Sense.EQ and row.rhs == 0.0)
            )
            if not ok:
                return i
        return None

    def _matrices(self):
        """Split rows into (A_ub, b_ub, ub_map) and (A_eq, b_eq, eq_map).

        GE rows are negated into <= form; maps carry (constraint id, sign)
        so duals can be translated back to the constraint as written.
        """
        n = self.num_variables
        ub_rows, ub_rhs, ub_map = [], [], []
        eq_rows, eq_rhs, eq_map = [], [], []
        for i, row in enumerate(self._rows):
            vec = (row.indices, row.coefs)
            if row.sense is Sense.EQ:
                eq_rows.append(vec)
                eq_rhs.append(row.rhs)
                eq_map.append((i, 1.0))
            elif row.sense is Sense.LE:
                ub_rows.append(vec)
                ub_rhs.append(row.rhs)
                ub_map.append((i, 1.0))
            else:
                ub_rows.append((row.indices, -row.coefs))
                ub_rhs.append(-row.rhs)
                ub_map.append((i, -1.0))

        def build(rows):
            if not rows:
                return None
            data, ri, ci = [], [], []
            for k, (idx, coef) in enumerate(rows):
                ri.extend([k] * len(idx))
                ci.extend(idx.tolist())
                data.extend(coef.tolist())
            return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

        return build(ub_rows), np.array(ub_rhs), ub_map, build(eq_rows), np.array(eq_rhs), eq_map

    def _solve_highs(self) -> SolveResult:
        t0 = time.perf_counter()
        A_ub, b_ub, ub_map, A_eq, b_eq, eq_map = self._matrices()
        res = linprog(
            c=np.array(self._cost),
            A_ub=A_ub,
            b_ub=b_ub if A_ub is not None else None,
            A_eq=A_eq,
            b_eq=b_eq if A_eq is not None else None,
            bounds=list(zip(self._lb, self._ub)),
            method="highs",
        )
        wall = time.perf_counter() - t0
        status = {
            0: Status.OPTIMAL,
            1: Status.ITERATION_LIMIT,
            2: Status.INFEASIBLE,
            3: Status.UNBOUNDED,
        }.get(res.status, Status.NUMERIC_FAILURE)
        if status is not Status.OPTIMAL:
            return SolveResult(
                status=status, backend="highs", wall_time=wall,
                iterations=int(getattr(res, "nit", 0) or 0), detail=res.message,
            )
        duals = np.zeros(len(self._rows))
        if A_ub is not None:
            for (cid, sign), marg in zip(ub_map, res.ineqlin.marginals):
                duals[cid] = sign * marg
        if A_eq is not None:
            for (cid, _), marg in zip(eq_map, res.eqlin.marginals):
                duals[cid] = marg
        return SolveResult(
            status=Status.OPTIMAL,
            x=res.x.copy(),
            duals=duals,
            objective=float(res.fun) + self._offset,
            iterations=int(getattr(res, "nit", 0) or 0),
            wall_time=wall,
            backend="highs",
        )

    def _solve_clarabel(self) -> SolveResult:
        import clarabel

        t0 = time.perf_counter()
        n = self.num_variables
        rows_i, cols_i, vals_i, rhs = [], [], [], []
        cones = []

        def emit(idx, coef, b):
            k = len(rhs)
            rows_i.extend([k] * len(idx))
            cols_i.extend(np.atleast_1d(idx).tolist())
            vals_i.extend(np.atleast_1d(coef).tolist())
            rhs.append(b)

        # zero cone: equality rows
        eq_map = []
        for i, row in enumerate(self._rows):
            if row.sense is Sense.EQ:
                emit(row.indices, row.coefs, row.rhs)
                eq_map.append(i)
        if eq_map:
            cones.append(clarabel.ZeroConeT(len(eq_map)))

        # nonnegative cone: inequality rows as a.x <= b, then finite bounds
        ineq_map = []
        for i, row in enumerate(self._rows):
            if row.sense is Sense.LE:
                emit(row.indices, row.coefs, row.rhs)
                ineq_map.append((i, -1.0))
            elif row.sense is Sense.GE:
                emit(row.indices, -row.coefs, -row.rhs)
                ineq_map.append((i, 1.0))
        n_bound_rows = 0
        for v in range(n):
            if np.isfinite(self._ub[v]):
                emit(np.array([v]), np.array([1.0]), self._ub[v])
                n_bound_rows += 1
            if np.isfinite(self._lb[v]):
                emit(np.array([v]), np.array([-1.0]), -self._lb[v])
                n_bound_rows += 1
        if ineq_map or n_bound_rows:
            cones.append(clarabel.NonnegativeConeT(len(ineq_map) + n_bound_rows))

        # second-order cones: linear_expr >= scale * x^2 as
        # ((u/s + 1)/2, x, (u/s - 1)/2) in SOC3 with u = linear_expr, s = scale
        for cone in self._cones:
            half = 0.5 / cone.scale
            emit(cone.lin_indices, -half * cone.lin_coefs, 0.5)
            emit(np.array([cone.quad_var]), np.array([-1.0]), 0.0)
            emit(cone.lin_indices, -half * cone.lin_coefs, -0.5)
            cones.append(clarabel.SecondOrderConeT(3))

        A = sparse.csc_matrix((vals_i, (rows_i, cols_i)), shape=(len(rhs), n))
        P = sparse.csc_matrix((n, n))
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        solver = clarabel.DefaultSolver(P, np.array(self._cost), A, np.array(rhs), cones, settings)
        sol = solver.solve()
        wall = time.perf_counter() - t0

        name = str(sol.status)
        mapping = {
            "Solved": Status.OPTIMAL,
            "AlmostSolved": Status.OPTIMAL,
            "PrimalInfeasible": Status.INFEASIBLE,
            "AlmostPrimalInfeasible": Status.INFEASIBLE,
            "DualInfeasible": Status.UNBOUNDED,
            "AlmostDualInfeasible": Status.UNBOUNDED,
            "MaxIterations": Status.ITERATION_LIMIT,
            "MaxTime": Status.ITERATION_LIMIT,
        }
        status = mapping.get(name, Status.NUMERIC_FAILURE)
        if status is not Status.OPTIMAL:
            return SolveResult(
                status=status, backend="clarabel", wall_time=wall,
                iterations=int(sol.iterations), detail=name,
            )
        x = np.array(sol.x)
        z = np.array(sol.z)
        duals = np.zeros(len(self._rows))
        for k, cid in enumerate(eq_map):
            duals[cid] = -z[k]
        base = len(eq_map)
        for k, (cid, sign) in enumerate(ineq_map):
            duals[cid] = sign * z[base + k]
        return SolveResult(
            status=Status.OPTIMAL,
            x=x,
            duals=duals,
            objective=float(np.dot(self._cost, x)) + self._offset,
            iterations=int(sol.iterations),
            wall_time=wall,
            backend="clarabel",
            detail=name,
        )

    # -- export ---------------------------------------------------------
    def to_lp_text(self) -> str:
        """CPLEX-dialect LP text (quadratic constraints use [ x^2 ] blocks)."""

        def term(coef, name, first):
            sign = "-" if coef < 0 else ("" if first else "+ ")
            return f"{sign}{abs(coef):.12g} {name} "

        out = [f"\\ {self.name}", "Minimize", " obj: "]
        line = ""
        first = True
        for v, c in enumerate(self._cost):
            if c != 0.0:
                line += term(c, self._names[v], first)
                first = False
        if self._offset:
            line += f"{'+ ' if not first and self._offset > 0 else ''}{self._offset:.12g} "
        out[-1] += line.strip() or "0"
        out.append("Subject To")
        for i, row in enumerate(self._rows):
            body = ""
            first = True
            for idx, coef in zip(row.indices, row.coefs):
                body += term(coef, self._names[idx], first)
                first = False
            out.append(f" c{i}: {body.strip() or '0'} {row.sense.value} {row.rhs:.12g}")
        for k, cone in enumerate(self._cones):
            body = ""
            first = True
            for idx, coef in zip(cone.lin_indices, cone.lin_coefs):
                body += term(coef, self._names[idx], first)
                first = False
            qname = self._names[cone.quad_var]
            out.append(
                f" qc{k}: {body.strip()} + [ -{cone.scale:.12g} {qname} ^2 ] >= 0"
            )
        out.append("Bounds")
        for v in range(self.num_variables):
            lb, ub = self._lb[v], self._ub[v]
            name = self._names[v]
            if not np.isfinite(lb) and not np.isfinite(ub):
                out.append(f" {name} free")
            elif not np.isfinite(ub):
                out.append(f" {name} >= {lb:.12g}")
            elif not np.isfinite(lb):
                out.append(f" {name} <= {ub:.12g}")
            else:
                out.append(f" {lb:.12g} <= {name} <= {ub:.12g}")
        out.append("End")
        return "\n".join(out) + "\n"
