"""The four dispatch formulations: lossless DC, LLLF, LLQCP, and LLOA.

Losses on a branch are the quadratic ``r * flow**2`` of its forward flow.
The three loss-aware methods differ in how that quadratic enters a linear
dispatch problem:

* LLLF linearizes total losses around a reference point (loss factors, a
  loss offset, and distribution factors that spread the estimate back onto
  the network for flow computation);
* LLQCP keeps a convex per-branch constraint ``p_fwd + p_bwd >= r*p_fwd**2``
  in a phase-angle formulation;
* LLOA replaces that constraint with tangent cuts collected lazily from its
  own iterates (a cutting-plane scheme on LLQCP), so the master problem
  stays linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import SusceptanceSystem, factorize
from .network import PowerNetwork
from .solver import CapabilityError, Model, Sense, SolveResult, Status

__all__ = [
    "DispatchSolution",
    "LossFactorData",
    "CutPool",
    "solve_vanilla_dc",
    "compute_loss_factors",
    "solve_lllf",
    "solve_llqcp",
    "lloa_cut",
    "solve_lloa",
    "solve_method",
    "estimate_true_losses",
    "SoftConfig",
    "InfeasibleError",
]

_FLOW_TOL = 1e-7
DEFAULT_EPSILON = 1e-3
DEFAULT_MAX_LAZY_ROUNDS = 50


class InfeasibleError(RuntimeError):
    """Raised by helpers that need a solved dispatch and got none."""

    def __init__(self, message: str, status: Status):
        super().__init__(message)
        self.status = status


@dataclass
class SoftConfig:
    """Penalty prices turning balance/transmission into soft constraints."""

    balance_penalty: float
    transmission_penalty: float


@dataclass
class DispatchSolution:
    """A solved dispatch with flows, estimated losses, and diagnostics.

    ``p_fwd``/``p_bwd``/``loss_est`` are indexed over in-service branches in
    kernel order; ``pg`` spans all generators (out-of-service entries zero).
    ``solve_seconds`` counts engine time only, excluding model building and
    PTDF work.
    """

    method: str
    status: Status
    objective: float | None = None
    pg: np.ndarray | None = None
    p: np.ndarray | None = None
    p_fwd: np.ndarray | None = None
    p_bwd: np.ndarray | None = None
    loss_est: np.ndarray | None = None
    loss_total: float = 0.0
    theta: np.ndarray | None = None
    bus_price: np.ndarray | None = None
    iterations: int = 1
    solver_iterations: int = 0
    solve_seconds: float = 0.0
    cut_count: int = 0
    flags: list[str] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def require_ok(self) -> "DispatchSolution":
        if not self.ok:
            raise InfeasibleError(
                f"{self.method} solve ended with status {self.status.value}", self.status
            )
        return self

    def to_json_dict(self, net: PowerNetwork) -> dict:
        loss_true, loss_true_total = (
            estimate_true_losses(self, net) if self.p_fwd is not None else (None, None)
        )
        branches = None
        if self.p_fwd is not None:
            branches = [
                {
                    "p_fwd": float(self.p_fwd[e]),
                    "p_bwd": float(self.p_bwd[e]) if self.p_bwd is not None else None,
                    "loss_est": float(self.loss_est[e]) if self.loss_est is not None else 0.0,
                    "loss_true": float(loss_true[e]),
                }
                for e in range(len(self.p_fwd))
            ]
        return {
            "method": self.method,
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "pg": None if self.pg is None else [float(v) for v in self.pg],
            "branches": branches,
            "loss_total": self.loss_total,
            "loss_true_total": loss_true_total,
            "solve_seconds": self.solve_seconds,
            "cut_count": self.cut_count,
            "flags": list(self.flags),
            "trace": [
                {
                    k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                    for k, v in entry.items()
                }
                for entry in self.trace
            ],
        }


# ----------------------------------------------------------------------
# shared building blocks


@dataclass
class _GenBlock:
    gen_ids: list[int]
    pg: list[int]
    offset: float


def _add_generators(model: Model, net: PowerNetwork) -> _GenBlock:
    """Dispatch variable per in-service unit plus convex cost segments."""
    gen_ids, pg_vars = [], []
    offset = 0.0
    for g, gen in net.in_service_generators():
        pg = model.add_variable(f"pg{g}", gen.pmin, gen.pmax)
        widths = gen.cost.segment_widths()
        prices = gen.cost.marginal_prices()
        offset += gen.cost.points[0][1]
        if widths:
            seg_vars = [
                model.add_variable(f"pg{g}s{k}", 0.0, w, cost=m)
                for k, (w, m) in enumerate(zip(widths, prices))
            ]
            row = {pg: 1.0}
            row.update({s: -1.0 for s in seg_vars})
            model.add_linear_constraint(row, Sense.EQ, gen.pmin)
        gen_ids.append(g)
        pg_vars.append(pg)
    model.add_objective_offset(offset)
    return _GenBlock(gen_ids, pg_vars, offset)


def _full_pg(net: PowerNetwork, gens: _GenBlock, x: np.ndarray) -> np.ndarray:
    pg = np.zeros(len(net.generators))
    for g, var in zip(gens.gen_ids, gens.pg):
        pg[g] = x[var]
    return pg


def _bus_injections(net: PowerNetwork, pg: np.ndarray) -> np.ndarray:
    p = -net.pd_vector()
    index = net.bus_index
    for g, gen in net.in_service_generators():
        p[index[gen.bus]] += pg[g]
    return p


def _flow_cap(net: PowerNetwork) -> float:
    """A valid bound on any single branch flow magnitude (for static spans)."""
    cap = sum(gen.pmax for _, gen in net.in_service_generators())
    return max(cap, net.total_load()) + 1.0


@dataclass
class _SoftVars:
    balance_pos: int | None = None
    balance_neg: int | None = None
    flow_viol: dict[int, int] = field(default_factory=dict)  # branch e -> var


@dataclass
class _AngleSkeleton:
    model: Model
    gens: _GenBlock
    theta: list[int]
    f_fwd: list[int]
    f_bwd: list[int] | None
    balance_rows: list[int]
    soft: _SoftVars | None


def _build_angle_skeleton(
    net: PowerNetwork,
    sys: SusceptanceSystem,
    backend: str,
    with_backward: bool,
    soft: SoftConfig | None = None,
    static_tangents: int = 64,
) -> _AngleSkeleton:
    """Phase-angle scaffold shared by vanilla DC, LLQCP, and LLOA."""
    model = Model(name=f"{net.name or 'net'}-angle", backend=backend, static_tangents=static_tangents)
    gens = _add_generators(model, net)
    index = net.bus_index
    inf = math.inf

    theta = [
        model.add_variable(f"th{i}", 0.0, 0.0)
        if i == sys.slack_index
        else model.add_variable(f"th{i}", -inf, inf)
        for i in range(net.n_bus)
    ]

    soft_vars = _SoftVars() if soft is not None else None
    f_fwd, f_bwd = [], []
    for e, (pos, br) in enumerate(net.in_service_branches()):
        limit = sys.rate_branch[e]
        if soft is None or not np.isfinite(limit):
            fw = model.add_variable(f"pf{e}", -limit, limit)
            bw = model.add_variable(f"pb{e}", -limit, limit) if with_backward else None
        else:
            fw = model.add_variable(f"pf{e}", -inf, inf)
            bw = model.add_variable(f"pb{e}", -inf, inf) if with_backward else None
            v = model.add_variable(f"tv{e}", 0.0, inf, cost=soft.transmission_penalty)
            soft_vars.flow_viol[e] = v
            model.add_linear_constraint({fw: 1.0, v: -1.0}, Sense.LE, limit)
            model.add_linear_constraint({fw: 1.0, v: 1.0}, Sense.GE, -limit)
            if with_backward:
                model.add_linear_constraint({bw: 1.0, v: -1.0}, Sense.LE, limit)
                model.add_linear_constraint({bw: 1.0, v: 1.0}, Sense.GE, -limit)
        f_fwd.append(fw)
        if with_backward:
            f_bwd.append(bw)
        b = sys.b_branch[e]
        i, j = index[br.from_bus], index[br.to_bus]
        model.add_linear_constraint({fw: 1.0, theta[i]: -b, theta[j]: b}, Sense.EQ, 0.0)

    if soft is not None:
        soft_vars.balance_pos = model.add_variable("balp", 0.0, inf, cost=soft.balance_penalty)
        soft_vars.balance_neg = model.add_variable("baln", 0.0, inf, cost=soft.balance_penalty)

    balance_rows: list[dict[int, float]] = [dict() for _ in net.buses]
    for g, var in zip(gens.gen_ids, gens.pg):
        i = index[net.generators[g].bus]
        balance_rows[i][var] = balance_rows[i].get(var, 0.0) + 1.0
    for e, (pos, br) in enumerate(net.in_service_branches()):
        i, j = index[br.from_bus], index[br.to_bus]
        balance_rows[i][f_fwd[e]] = balance_rows[i].get(f_fwd[e], 0.0) - 1.0
        if with_backward:
            balance_rows[j][f_bwd[e]] = balance_rows[j].get(f_bwd[e], 0.0) - 1.0
        else:
            balance_rows[j][f_fwd[e]] = balance_rows[j].get(f_fwd[e], 0.0) + 1.0
    if soft is not None:
        srow = balance_rows[sys.slack_index]
        srow[soft_vars.balance_pos] = 1.0
        srow[soft_vars.balance_neg] = -1.0
    row_ids = [
        model.add_linear_constraint(row, Sense.EQ, net.buses[i].pd)
        for i, row in enumerate(balance_rows)
    ]
    return _AngleSkeleton(model, gens, theta, f_fwd, f_bwd if with_backward else None, row_ids, soft_vars)


def _angle_solution(
    method: str,
    net: PowerNetwork,
    sk: _AngleSkeleton,
    res: SolveResult,
    with_backward: bool,
) -> DispatchSolution:
    pg = _full_pg(net, sk.gens, res.x)
    p_fwd = np.array([res.x[v] for v in sk.f_fwd])
    p_bwd = np.array([res.x[v] for v in sk.f_bwd]) if with_backward else -p_fwd
    loss_est = p_fwd + p_bwd if with_backward else np.zeros_like(p_fwd)
    return DispatchSolution(
        method=method,
        status=res.status,
        objective=res.objective,
        pg=pg,
        p=_bus_injections(net, pg),
        p_fwd=p_fwd,
        p_bwd=p_bwd if with_backward else None,
        loss_est=loss_est,
        loss_total=float(loss_est.sum()),
        theta=np.array([res.x[v] for v in sk.theta]),
        bus_price=np.array([res.duals[r] for r in sk.balance_rows]),
        solver_iterations=res.iterations,
        solve_seconds=res.wall_time,
    )


# ----------------------------------------------------------------------
# vanilla DC


def solve_vanilla_dc(
    net: PowerNetwork,
    variant: str = "angle",
    sys: SusceptanceSystem | None = None,
    backend: str = "auto",
    max_lazy_rounds: int = DEFAULT_MAX_LAZY_ROUNDS,
) -> DispatchSolution:
    """Lossless economic dispatch, either angle-based or PTDF-based.

    Both variants agree on the dispatch for a unique optimum; the PTDF
    variant adds thermal rows lazily.
    """
    if variant not in ("angle", "ptdf"):
        raise ValueError(f"unknown variant {variant!r}")
    sys = sys or factorize(net)
    if variant == "angle":
        sk = _build_angle_skeleton(net, sys, backend, with_backward=False)
        res = sk.model.solve()
        if res.status is not Status.OPTIMAL:
            return DispatchSolution(method="dc", status=res.status, solve_seconds=res.wall_time)
        sol = _angle_solution("dc", net, sk, res, with_backward=False)
        sol.loss_total = 0.0
        return sol
    return _solve_ptdf_dc(net, sys, backend, max_lazy_rounds)


def _solve_ptdf_dc(net, sys, backend, max_lazy_rounds) -> DispatchSolution:
    model = Model(name=f"{net.name or 'net'}-ptdf", backend=backend)
    gens = _add_generators(model, net)
    balance = model.add_linear_constraint(
        {v: 1.0 for v in gens.pg}, Sense.EQ, net.total_load()
    )
    index = net.bus_index
    pd = net.pd_vector()
    thermal_rows: list[tuple[int, int, float]] = []  # (branch e, row id, sign)

    def add_thermal(e: int, upper: bool):
        row_vec = sys.ptdf_row(e)
        row = {}
        for g, var in zip(gens.gen_ids, gens.pg):
            c = row_vec[index[net.generators[g].bus]]
            if c != 0.0:
                row[var] = row.get(var, 0.0) + c
        shift = float(row_vec @ pd)
        limit = sys.rate_branch[e]
        if upper:
            rid = model.add_linear_constraint(row, Sense.LE, limit + shift)
        else:
            rid = model.add_linear_constraint(row, Sense.GE, -limit + shift)
        thermal_rows.append((e, rid, 1.0 if upper else -1.0))

    seconds = 0.0
    iters = 0
    rounds = 0
    flags: list[str] = []
    while True:
        res = model.solve()
        seconds += res.wall_time
        iters += res.iterations
        if res.status is not Status.OPTIMAL:
            return DispatchSolution(
                method="dc", status=res.status, solve_seconds=seconds, flags=flags
            )
        pg = _full_pg(net, gens, res.x)
        p = _bus_injections(net, pg)
        _, flows = sys.dc_flows(p, slack_absorb=True)
        over = flows - sys.rate_branch
        under = -flows - sys.rate_branch
        violated = [(int(e), True) for e in np.nonzero(over > _FLOW_TOL)[0]]
        violated += [(int(e), False) for e in np.nonzero(under > _FLOW_TOL)[0]]
        rounds += 1
        if not violated or rounds > max_lazy_rounds:
            if violated:
                flags.append("lazy-round-limit")
            break
        for e, upper in violated:
            add_thermal(e, upper)

    price = np.full(net.n_bus, res.duals[balance])
    for e, rid, _sign in thermal_rows:
        row_vec = sys.ptdf_row(e)
        price += res.duals[rid] * row_vec
    return DispatchSolution(
        method="dc",
        status=Status.OPTIMAL,
        objective=res.objective,
        pg=pg,
        p=p,
        p_fwd=flows,
        p_bwd=None,
        loss_est=np.zeros_like(flows),
        loss_total=0.0,
        bus_price=price,
        iterations=rounds,
        solver_iterations=iters,
        solve_seconds=seconds,
        flags=flags,
    )


# ----------------------------------------------------------------------
# loss factors (LLLF inputs)


@dataclass
class LossFactorData:
    """Reference-point linearization of total quadratic losses.

    ``loss_factors`` is the gradient of total losses with respect to nodal
    injections through the PTDF map (slack entry zero); ``loss_offset``
    completes the tangent so that offset + LF.p_ref equals the reference
    losses; ``distribution`` spreads total losses back onto buses, half of
    each adjacent branch's share per endpoint.
    """

    loss_factors: np.ndarray
    loss_offset: float
    distribution: np.ndarray
    ref_flows: np.ndarray
    ref_loss_total: float
    flags: list[str] = field(default_factory=list)


def compute_loss_factors(
    net: PowerNetwork, sys: SusceptanceSystem, p_ref: np.ndarray
) -> LossFactorData:
    """Loss factors, offset, and distribution factors at a reference injection.

    Any injection imbalance in ``p_ref`` is absorbed by the slack bus when
    computing reference flows.
    """
    p_ref = np.asarray(p_ref, dtype=float)
    _, ref_flows = sys.dc_flows(p_ref, slack_absorb=True)
    w = sys.r_branch * ref_flows
    ref_losses = sys.r_branch * ref_flows**2
    total = float(ref_losses.sum())

    # LF = 2 * Phi^T (r . flows); one symmetric backsolve instead of E rows
    rhs = np.asarray((sys.incidence.T @ (sys.b_branch * w)))[sys._keep]
    lf = np.zeros(net.n_bus)
    lf[sys._keep] = 2.0 * sys.solve_reduced(rhs)

    offset = -float(lf @ p_ref) + total

    flags: list[str] = []
    dist = np.zeros(net.n_bus)
    if total > 0.0:
        index = net.bus_index
        for e, (_, br) in enumerate(net.in_service_branches()):
            share = 0.5 * ref_losses[e] / total
            dist[index[br.from_bus]] += share
            dist[index[br.to_bus]] += share
    else:
        dist[:] = 1.0 / net.n_bus
        flags.append("zero-reference-losses")
    return LossFactorData(lf, offset, dist, ref_flows, total, flags)


def solve_lllf(
    net: PowerNetwork,
    sys: SusceptanceSystem | None = None,
    lf: LossFactorData | None = None,
    monitored: str | list[int] = "lazy",
    backend: str = "auto",
    max_lazy_rounds: int = DEFAULT_MAX_LAZY_ROUNDS,
    soft: SoftConfig | None = None,
) -> DispatchSolution:
    """Loss-factor dispatch (PTDF-based) with lazily added thermal rows.

    ``lf`` defaults to loss factors computed at the lossless DC dispatch.
    Total losses enter the system balance; thermal rows constrain
    ``Phi (p - loss_total * D)`` and are separated by angle-space flow
    evaluation, materializing a PTDF row only when violated.
    """
    sys = sys or factorize(net)
    if lf is None:
        seed = solve_vanilla_dc(net, variant="ptdf", sys=sys, backend=backend)
        if not seed.ok:
            return DispatchSolution(method="lllf", status=seed.status, flags=["seed-failed"])
        lf = compute_loss_factors(net, sys, seed.p)

    model = Model(name=f"{net.name or 'net'}-lllf", backend=backend)
    gens = _add_generators(model, net)
    index = net.bus_index
    pd = net.pd_vector()
    inf = math.inf

    # total losses are clamped nonnegative; a flag records when that binds
    ell = model.add_variable("ltot", 0.0, inf)

    soft_vars = _SoftVars() if soft is not None else None
    balance_row = {v: 1.0 for v in gens.pg}
    balance_row[ell] = -1.0
    if soft is not None:
        soft_vars.balance_pos = model.add_variable("balp", 0.0, inf, cost=soft.balance_penalty)
        soft_vars.balance_neg = model.add_variable("baln", 0.0, inf, cost=soft.balance_penalty)
        balance_row[soft_vars.balance_pos] = 1.0
        balance_row[soft_vars.balance_neg] = -1.0
    balance = model.add_linear_constraint(balance_row, Sense.EQ, net.total_load())

    loss_row = {ell: 1.0}
    for g, var in zip(gens.gen_ids, gens.pg):
        c = lf.loss_factors[index[net.generators[g].bus]]
        if c != 0.0:
            loss_row[var] = loss_row.get(var, 0.0) - c
    loss_rhs = lf.loss_offset - float(lf.loss_factors @ pd)
    loss_def = model.add_linear_constraint(loss_row, Sense.EQ, loss_rhs)

    thermal_rows: list[tuple[int, int]] = []

    def add_thermal(e: int, upper: bool):
        limit = sys.rate_branch[e]
        if not np.isfinite(limit):
            return
        row_vec = sys.ptdf_row(e)
        row: dict[int, float] = {}
        for g, var in zip(gens.gen_ids, gens.pg):
            c = row_vec[index[net.generators[g].bus]]
            if c != 0.0:
                row[var] = row.get(var, 0.0) + c
        row[ell] = row.get(ell, 0.0) - float(row_vec @ lf.distribution)
        shift = float(row_vec @ pd)
        if soft is not None:
            v = soft_vars.flow_viol.get(e)
            if v is None:
                v = model.add_variable(f"tv{e}", 0.0, inf, cost=soft.transmission_penalty)
                soft_vars.flow_viol[e] = v
            row[v] = -1.0 if upper else 1.0
        if upper:
            rid = model.add_linear_constraint(row, Sense.LE, limit + shift)
        else:
            rid = model.add_linear_constraint(row, Sense.GE, -limit + shift)
        thermal_rows.append((e, rid))

    if isinstance(monitored, (list, tuple, set)):
        for e in monitored:
            add_thermal(int(e), True)
            add_thermal(int(e), False)
        lazy = False
    else:
        lazy = True

    seconds = 0.0
    iters = 0
    rounds = 0
    flags = list(lf.flags)
    while True:
        res = model.solve()
        seconds += res.wall_time
        iters += res.iterations
        if res.status is not Status.OPTIMAL:
            return DispatchSolution(
                method="lllf", status=res.status, solve_seconds=seconds, flags=flags
            )
        pg = _full_pg(net, gens, res.x)
        p = _bus_injections(net, pg)
        ell_val = res.x[ell]
        _, flows = sys.dc_flows(p - ell_val * lf.distribution, slack_absorb=True)
        rounds += 1
        if not lazy:
            break
        viol_vals = {}
        if soft is not None:
            # soft rows absorb overloads; separation only materializes rows
            viol_vals = {e: res.x[v] for e, v in soft_vars.flow_viol.items()}
        over = flows - sys.rate_branch
        under = -flows - sys.rate_branch
        violated = []
        for e in np.nonzero(over > _FLOW_TOL)[0]:
            if over[e] > viol_vals.get(int(e), 0.0) + _FLOW_TOL:
                violated.append((int(e), True))
        for e in np.nonzero(under > _FLOW_TOL)[0]:
            if under[e] > viol_vals.get(int(e), 0.0) + _FLOW_TOL:
                violated.append((int(e), False))
        if not violated or rounds > max_lazy_rounds:
            if violated:
                flags.append("lazy-round-limit")
            break
        for e, upper in violated:
            add_thermal(e, upper)

    if ell_val < 1e-9 and lf.loss_offset + float(lf.loss_factors @ p) < -1e-9:
        flags.append("loss-clamp-active")

    price = np.full(net.n_bus, res.duals[balance])
    price -= res.duals[loss_def] * lf.loss_factors
    for e, rid in thermal_rows:
        price += res.duals[rid] * sys.ptdf_row(e)
    return DispatchSolution(
        method="lllf",
        status=Status.OPTIMAL,
        objective=res.objective,
        pg=pg,
        p=p,
        p_fwd=flows,
        p_bwd=None,
        loss_est=sys.r_branch * flows**2,
        loss_total=float(ell_val),
        bus_price=price,
        iterations=rounds,
        solver_iterations=iters,
        solve_seconds=seconds,
        flags=flags,
    )


# ----------------------------------------------------------------------
# LLQCP


def solve_llqcp(
    net: PowerNetwork,
    sys: SusceptanceSystem | None = None,
    backend: str = "auto",
    static_tangents: int = 64,
    soft: SoftConfig | None = None,
) -> DispatchSolution:
    """Angle-based dispatch with convex per-branch loss constraints.

    With ``backend="static"`` the quadratic constraints become dense tangent
    fans (``static_tangents`` rows per branch spanning the thermal range),
    keeping the model solvable by LP-only engines at a documented
    approximation error.
    """
    sys = sys or factorize(net)
    sk = _build_angle_skeleton(
        net, sys, backend, with_backward=True, soft=soft, static_tangents=static_tangents
    )
    cap = _flow_cap(net)
    for e in range(sys.n_branch):
        limit = sys.rate_branch[e]
        span_half = limit if np.isfinite(limit) else cap
        sk.model.add_rotated_quadratic(
            sk.f_fwd[e],
            {sk.f_fwd[e]: 1.0, sk.f_bwd[e]: 1.0},
            sys.r_branch[e],
            span=(-span_half, span_half),
        )
    res = sk.model.solve()
    if res.status is not Status.OPTIMAL:
        return DispatchSolution(method="llqcp", status=res.status, solve_seconds=res.wall_time)
    sol = _angle_solution("llqcp", net, sk, res, with_backward=True)
    sol.method = "llqcp"
    if backend == "static":
        sol.cut_count = sys.n_branch * static_tangents
        sol.flags.append("static-linearization")
    return sol


# ----------------------------------------------------------------------
# LLOA


def lloa_cut(r: float, p_ref: float) -> tuple[float, float]:
    """Tangent-cut coefficients at a reference flow: (slope, intercept).

    The cut reads ``p_fwd + p_bwd >= slope * p_fwd + intercept`` and touches
    the quadratic loss exactly at ``p_ref`` while under-estimating it
    everywhere else.
    """
    return 2.0 * r * p_ref, -r * p_ref * p_ref


@dataclass
class CutPool:
    """Accumulated linearization points and the cuts they induce."""

    n_branch: int
    max_points: int
    points: list[np.ndarray] = field(default_factory=list)

    def add(self, flows: np.ndarray) -> bool:
        if len(self.points) >= self.max_points:
            return False
        self.points.append(np.asarray(flows, dtype=float).copy())
        return True

    @property
    def cut_count(self) -> int:
        return self.n_branch * len(self.points)


def _install_cuts(sk: _AngleSkeleton, sys: SusceptanceSystem, flows: np.ndarray) -> None:
    for e in range(sys.n_branch):
        slope, intercept = lloa_cut(sys.r_branch[e], float(flows[e]))
        sk.model.add_linear_constraint(
            {sk.f_fwd[e]: 1.0 - slope, sk.f_bwd[e]: 1.0}, Sense.GE, intercept
        )


def solve_lloa(
    net: PowerNetwork,
    sys: SusceptanceSystem | None = None,
    epsilon: float = DEFAULT_EPSILON,
    seed_points: str | list | None = "dc",
    max_iter: int = 25,
    backend: str = "auto",
    soft: SoftConfig | None = None,
) -> DispatchSolution:
    """Lazy linear outer approximation of LLQCP (cutting-plane loop).

    Each iteration solves the linear master, measures the relative objective
    change against the previous iterate, and tangent-cuts every branch at the
    current flows. With ``seed_points="dc"`` the pool starts from a lossless
    DC solve's flows; ``None`` starts cold. Either way the first delta is
    infinite, so at least two solves happen. Base cuts
    ``p_fwd + p_bwd >= 0`` are always installed, which makes the cold first
    iterate exactly the lossless dispatch.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    sys = sys or factorize(net)
    sk = _build_angle_skeleton(net, sys, backend, with_backward=True, soft=soft)
    for e in range(sys.n_branch):
        sk.model.add_linear_constraint(
            {sk.f_fwd[e]: 1.0, sk.f_bwd[e]: 1.0}, Sense.GE, 0.0
        )

    pool = CutPool(n_branch=sys.n_branch, max_points=max_iter)
    flags: list[str] = []
    z_prev = math.inf  # strict initialization: the first delta is infinite

    if seed_points == "dc":
        seed = solve_vanilla_dc(net, variant="angle", sys=sys, backend=backend)
        if not seed.ok:
            return DispatchSolution(method="lloa", status=seed.status, flags=["seed-failed"])
        pool.add(seed.p_fwd)
        _install_cuts(sk, sys, seed.p_fwd)
    elif seed_points:
        for flows in seed_points:
            if pool.add(np.asarray(flows, dtype=float)):
                _install_cuts(sk, sys, np.asarray(flows, dtype=float))

    seconds = 0.0
    solver_iters = 0
    trace: list[dict] = []
    res = None
    iterations = 0
    while iterations < max_iter:
        res = sk.model.solve(warm_start=res)
        seconds += res.wall_time
        solver_iters += res.iterations
        if res.status is not Status.OPTIMAL:
            return DispatchSolution(
                method="lloa", status=res.status, solve_seconds=seconds,
                flags=flags, trace=trace,
            )
        iterations += 1
        z = res.objective
        if math.isinf(z_prev):
            delta = math.inf
        elif z_prev == 0.0:
            delta = 0.0 if z == 0.0 else math.inf
        else:
            delta = abs(z - z_prev) / abs(z_prev)
        flows = np.array([res.x[v] for v in sk.f_fwd])
        if not pool.add(flows):
            flags.append("cut-pool-cap")
        else:
            _install_cuts(sk, sys, flows)
        trace.append(
            {"iteration": iterations - 1, "objective": z, "delta": delta, "cuts": pool.cut_count}
        )
        z_prev = z
        if delta <= epsilon:
            break
    else:
        flags.append("max-iterations")

    sol = _angle_solution("lloa", net, sk, res, with_backward=True)
    sol.method = "lloa"
    sol.iterations = iterations
    sol.solver_iterations = solver_iters
    sol.solve_seconds = seconds
    sol.cut_count = pool.cut_count
    sol.flags = flags
    sol.trace = trace
    return sol


# ----------------------------------------------------------------------


def estimate_true_losses(sol: DispatchSolution, net: PowerNetwork):
    """Quadratic loss evaluation r*flow^2 at the solution's flows."""
    if sol.p_fwd is None:
        raise ValueError("solution carries no flows")
    r = np.array([br.r for _, br in net.in_service_branches()])
    per_branch = r * np.asarray(sol.p_fwd) ** 2
    return per_branch, float(per_branch.sum())


def solve_method(
    net: PowerNetwork,
    method: str,
    sys: SusceptanceSystem | None = None,
    **kwargs,
) -> DispatchSolution:
    """Dispatch by method name: dc | lllf | llqcp | lloa."""
    sys = sys or factorize(net)
    if method == "dc":
        return solve_vanilla_dc(net, sys=sys, **kwargs)
    if method == "lllf":
        return solve_lllf(net, sys=sys, **kwargs)
    if method == "llqcp":
        return solve_llqcp(net, sys=sys, **kwargs)
    if method == "lloa":
        return solve_lloa(net, sys=sys, **kwargs)
    raise ValueError(f"unknown method {method!r}")
