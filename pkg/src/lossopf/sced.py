"""Security-constrained economic dispatch wrapper over the four formulations.

Adds system-wide reserve requirements, soft (penalized) balance /
transmission / reserve constraints, and generator-contingency coverage
constraints that are introduced lazily: after each solve, every contingency
is simulated (drop the unit, require surviving reserves to cover its
dispatch) and violated ones become explicit rows before the re-solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formulations import (
    DispatchSolution,
    SoftConfig,
    _angle_solution,
    _build_angle_skeleton,
    _bus_injections,
    _flow_cap,
    _full_pg,
    _install_cuts,
    CutPool,
    compute_loss_factors,
    solve_vanilla_dc,
)
from .kernel import SusceptanceSystem, factorize
from .network import PowerNetwork
from .solver import Model, Sense, Status

__all__ = ["ScedConfig", "ScedSolution", "solve_sced", "check_contingency"]

_TOL = 1e-7


@dataclass
class ScedConfig:
    """Reserve requirement, penalty prices, and the contingency list.

    Penalties are $ per pu of violation per interval; defaults are
    placeholders and fully configurable. ``contingency_set`` holds generator
    indices; ``None`` means the single largest in-service unit.
    """

    reserve_requirement: float = 0.0
    reserve_penalty: float = 1100.0
    balance_penalty: float = 10000.0
    transmission_penalty: float = 2000.0
    contingency_set: list[int] | None = None
    max_lazy_rounds: int = 20
    enforce_penalty_order: bool = True
    ramp_enabled: bool = False
    soft_constraints: bool = True  # False keeps balance/transmission hard

    def validate(self) -> None:
        if self.reserve_requirement < 0:
            raise ValueError("reserve_requirement must be nonnegative")
        for name in ("reserve_penalty", "balance_penalty", "transmission_penalty"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.enforce_penalty_order and self.transmission_penalty > self.balance_penalty:
            raise ValueError(
                "transmission_penalty must not exceed balance_penalty "
                "(set enforce_penalty_order=False to override)"
            )

    def to_dict(self) -> dict:
        return {
            "reserve_requirement": self.reserve_requirement,
            "reserve_penalty": self.reserve_penalty,
            "balance_penalty": self.balance_penalty,
            "transmission_penalty": self.transmission_penalty,
            "contingency_set": self.contingency_set,
            "max_lazy_rounds": self.max_lazy_rounds,
            "enforce_penalty_order": self.enforce_penalty_order,
            "ramp_enabled": self.ramp_enabled,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScedConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sced config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class ScedSolution:
    """Dispatch plus reserves, soft-constraint slacks, and contingency records."""

    dispatch: DispatchSolution
    reserve: np.ndarray
    reserve_shortfall: float
    balance_violation: float
    transmission_violation: float
    contingency: dict[int, float]
    dispatch_cost: float
    penalty_cost: float
    rounds: int
    flags: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.dispatch.ok

    @property
    def objective(self) -> float:
        return self.dispatch.objective

    def to_json_dict(self, net: PowerNetwork) -> dict:
        doc = self.dispatch.to_json_dict(net)
        doc.update(
            {
                "reserve": [float(v) for v in self.reserve],
                "reserve_shortfall": self.reserve_shortfall,
                "balance_violation": self.balance_violation,
                "transmission_violation": self.transmission_violation,
                "contingency": {str(k): v for k, v in self.contingency.items()},
                "dispatch_cost": self.dispatch_cost,
                "penalty_cost": self.penalty_cost,
                "rounds": self.rounds,
            }
        )
        return doc


def _largest_unit(net: PowerNetwork) -> int:
    return max(net.in_service_generators(), key=lambda item: item[1].pmax)[0]


def check_contingency(sol: ScedSolution, gen: int) -> float:
    """Uncovered dispatch if ``gen`` trips: max(0, pg_gen - surviving reserves)."""
    if gen < 0 or gen >= len(sol.dispatch.pg):
        raise IndexError(f"unknown generator {gen}")
    surviving = float(sol.reserve.sum() - sol.reserve[gen])
    return max(0.0, float(sol.dispatch.pg[gen]) - surviving)


def solve_sced(
    net: PowerNetwork,
    method: str,
    cfg: ScedConfig | None = None,
    sys: SusceptanceSystem | None = None,
    epsilon: float = 1e-3,
    backend: str = "auto",
    static_tangents: int = 64,
    ramp_reference: np.ndarray | None = None,
) -> ScedSolution:
    """Reserve- and contingency-aware dispatch for any of the four methods.

    The base formulation is built with soft balance and transmission
    constraints; reserve shortfall is penalized; contingency-coverage rows
    (surviving reserves at least the lost unit's dispatch) are added lazily,
    sharing the incremental-solve contract with the method's own lazy parts
    (LLOA cuts, LLLF thermal rows).
    """
    cfg = cfg or ScedConfig()
    cfg.validate()
    if method not in ("dc", "lllf", "llqcp", "lloa"):
        raise ValueError(f"unknown method {method!r}")
    sys = sys or factorize(net)
    soft = (
        SoftConfig(cfg.balance_penalty, cfg.transmission_penalty)
        if cfg.soft_constraints
        else None
    )
    inf = math.inf

    lllf_ctx = None
    if method == "lllf":
        model, gens, lllf_ctx = _build_lllf_soft(net, sys, backend, soft)
        skeleton = None
    else:
        skeleton = _build_angle_skeleton(
            net, sys, backend,
            with_backward=(method != "dc"),
            soft=soft,
            static_tangents=static_tangents,
        )
        model, gens = skeleton.model, skeleton.gens
        if method == "llqcp":
            cap = _flow_cap(net)
            for e in range(sys.n_branch):
                limit = sys.rate_branch[e]
                half = limit if np.isfinite(limit) else cap
                model.add_rotated_quadratic(
                    skeleton.f_fwd[e],
                    {skeleton.f_fwd[e]: 1.0, skeleton.f_bwd[e]: 1.0},
                    sys.r_branch[e],
                    span=(-half, half),
                )
        elif method == "lloa":
            for e in range(sys.n_branch):
                model.add_linear_constraint(
                    {skeleton.f_fwd[e]: 1.0, skeleton.f_bwd[e]: 1.0}, Sense.GE, 0.0
                )

    # reserves: r_g in [0, headroom] via pg_g + r_g <= pmax_g
    reserve_vars: dict[int, int] = {}
    for g, var in zip(gens.gen_ids, gens.pg):
        gen = net.generators[g]
        if not gen.reserve_capable:
            continue
        r = model.add_variable(f"r{g}", 0.0, inf)
        model.add_linear_constraint({var: 1.0, r: 1.0}, Sense.LE, gen.pmax)
        reserve_vars[g] = r
    shortfall = model.add_variable("rshort", 0.0, inf, cost=cfg.reserve_penalty)
    req_row = {r: 1.0 for r in reserve_vars.values()}
    req_row[shortfall] = 1.0
    model.add_linear_constraint(req_row, Sense.GE, cfg.reserve_requirement)

    if cfg.ramp_enabled and ramp_reference is not None:
        for g, var in zip(gens.gen_ids, gens.pg):
            rr = net.generators[g].ramp_rate
            if math.isfinite(rr):
                ref = float(ramp_reference[g])
                model.add_linear_constraint({var: 1.0}, Sense.LE, ref + rr)
                model.add_linear_constraint({var: 1.0}, Sense.GE, ref - rr)

    contingencies = (
        list(cfg.contingency_set) if cfg.contingency_set is not None else [_largest_unit(net)]
    )
    for c in contingencies:
        if c < 0 or c >= len(net.generators):
            raise IndexError(f"unknown generator {c} in contingency set")
    covered: set[int] = set()

    # LLOA state
    pool = None
    if method == "lloa":
        seed = solve_vanilla_dc(net, variant="angle", sys=sys, backend=backend)
        if not seed.ok:
            return _failed(method, seed.status, ["seed-failed"])
        pool = CutPool(n_branch=sys.n_branch, max_points=cfg.max_lazy_rounds + 1)
        pool.add(seed.p_fwd)
        _install_cuts(skeleton, sys, seed.p_fwd)

    z_prev = math.inf
    rounds = 0
    seconds = 0.0
    solver_iters = 0
    flags: list[str] = []
    trace: list[dict] = []
    res = None
    while True:
        res = model.solve(warm_start=res)
        seconds += res.wall_time
        solver_iters += res.iterations
        rounds += 1
        if res.status is not Status.OPTIMAL:
            return _failed(method, res.status, flags, seconds)
        z = res.objective
        dirty = False

        if method == "lloa":
            delta = math.inf if math.isinf(z_prev) else (
                abs(z - z_prev) / abs(z_prev) if z_prev != 0.0 else (0.0 if z == 0.0 else math.inf)
            )
            flows = np.array([res.x[v] for v in skeleton.f_fwd])
            if delta > epsilon:
                if pool.add(flows):
                    _install_cuts(skeleton, sys, flows)
                    dirty = True
                else:
                    flags.append("cut-pool-cap")
            trace.append({"round": rounds - 1, "objective": z, "delta": delta,
                          "cuts": pool.cut_count})
            z_prev = z
        else:
            trace.append({"round": rounds - 1, "objective": z})

        if method == "lllf":
            if _separate_lllf_thermal(net, sys, model, gens, lllf_ctx, res, soft):
                dirty = True

        pg = _full_pg(net, gens, res.x)
        for c in contingencies:
            if c in covered:
                continue
            surviving = sum(
                res.x[r] for g, r in reserve_vars.items() if g != c
            )
            if pg[c] - surviving > _TOL:
                row = {r: 1.0 for g, r in reserve_vars.items() if g != c}
                if c in gens.gen_ids:
                    pgvar = gens.pg[gens.gen_ids.index(c)]
                    row[pgvar] = row.get(pgvar, 0.0) - 1.0
                model.add_linear_constraint(row, Sense.GE, 0.0)
                covered.add(c)
                dirty = True

        if not dirty:
            break
        if rounds >= cfg.max_lazy_rounds:
            flags.append("round-limit")
            break

    # extraction
    if method == "lllf":
        dispatch = _extract_lllf(net, sys, gens, lllf_ctx, res)
    else:
        dispatch = _angle_solution(method, net, skeleton, res, with_backward=(method != "dc"))
        if method == "dc":
            dispatch.loss_total = 0.0
    dispatch.method = method
    dispatch.iterations = rounds
    dispatch.solver_iterations = solver_iters
    dispatch.solve_seconds = seconds
    dispatch.trace = trace
    if pool is not None:
        dispatch.cut_count = pool.cut_count

    reserve = np.zeros(len(net.generators))
    for g, r in reserve_vars.items():
        reserve[g] = res.x[r]
    short_val = float(res.x[shortfall])
    bal = trans = 0.0
    soft_vars = lllf_ctx["soft_vars"] if method == "lllf" else skeleton.soft
    if soft_vars is not None:
        if soft_vars.balance_pos is not None:
            bal = float(res.x[soft_vars.balance_pos] + res.x[soft_vars.balance_neg])
        trans = float(sum(res.x[v] for v in soft_vars.flow_viol.values()))

    dispatch_cost = float(net.dispatch_cost(dispatch.pg))
    penalty_cost = (
        cfg.reserve_penalty * short_val
        + cfg.balance_penalty * bal
        + cfg.transmission_penalty * trans
    )
    sol = ScedSolution(
        dispatch=dispatch,
        reserve=reserve,
        reserve_shortfall=short_val,
        balance_violation=bal,
        transmission_violation=trans,
        contingency={},
        dispatch_cost=dispatch_cost,
        penalty_cost=penalty_cost,
        rounds=rounds,
        flags=flags,
    )
    sol.contingency = {c: check_contingency(sol, c) for c in contingencies}
    return sol


def _failed(method, status, flags, seconds=0.0) -> ScedSolution:
    return ScedSolution(
        dispatch=DispatchSolution(method=method, status=status, solve_seconds=seconds),
        reserve=np.zeros(0),
        reserve_shortfall=0.0,
        balance_violation=0.0,
        transmission_violation=0.0,
        contingency={},
        dispatch_cost=0.0,
        penalty_cost=0.0,
        rounds=0,
        flags=list(flags),
    )


# ----------------------------------------------------------------------
# LLLF scaffolding with soft constraints (mirrors formulations.solve_lllf)


def _build_lllf_soft(net, sys, backend, soft):
    from .formulations import _add_generators, _SoftVars

    seed = solve_vanilla_dc(net, variant="ptdf", sys=sys, backend=backend)
    seed.require_ok()
    lf = compute_loss_factors(net, sys, seed.p)

    model = Model(name=f"{net.name or 'net'}-lllf-sced", backend=backend)
    gens = _add_generators(model, net)
    index = net.bus_index
    pd = net.pd_vector()
    inf = math.inf

    ell = model.add_variable("ltot", 0.0, inf)
    soft_vars = _SoftVars() if soft is not None else None
    balance_row = {v: 1.0 for v in gens.pg}
    balance_row[ell] = -1.0
    if soft is not None:
        soft_vars.balance_pos = model.add_variable("balp", 0.0, inf, cost=soft.balance_penalty)
        soft_vars.balance_neg = model.add_variable("baln", 0.0, inf, cost=soft.balance_penalty)
        balance_row[soft_vars.balance_pos] = 1.0
        balance_row[soft_vars.balance_neg] = -1.0
    model.add_linear_constraint(balance_row, Sense.EQ, net.total_load())

    loss_row = {ell: 1.0}
    for g, var in zip(gens.gen_ids, gens.pg):
        c = lf.loss_factors[index[net.generators[g].bus]]
        if c != 0.0:
            loss_row[var] = loss_row.get(var, 0.0) - c
    model.add_linear_constraint(loss_row, Sense.EQ, lf.loss_offset - float(lf.loss_factors @ pd))

    ctx = {"lf": lf, "ell": ell, "soft_vars": soft_vars, "pd": pd}
    return model, gens, ctx


def _separate_lllf_thermal(net, sys, model, gens, ctx, res, soft) -> bool:
    lf, ell = ctx["lf"], ctx["ell"]
    index = net.bus_index
    pd = ctx["pd"]
    pg = _full_pg(net, gens, res.x)
    p = _bus_injections(net, pg)
    ell_val = res.x[ell]
    _, flows = sys.dc_flows(p - ell_val * lf.distribution, slack_absorb=True)
    soft_vars = ctx["soft_vars"]
    viol_vals = (
        {e: res.x[v] for e, v in soft_vars.flow_viol.items()} if soft_vars is not None else {}
    )
    over = flows - sys.rate_branch
    under = -flows - sys.rate_branch
    added = False
    for e_arr, upper in ((np.nonzero(over > _TOL)[0], True), (np.nonzero(under > _TOL)[0], False)):
        for e in e_arr:
            e = int(e)
            excess = (over if upper else under)[e]
            if excess <= viol_vals.get(e, 0.0) + _TOL:
                continue
            row_vec = sys.ptdf_row(e)
            row: dict[int, float] = {}
            for g, var in zip(gens.gen_ids, gens.pg):
                c = row_vec[index[net.generators[g].bus]]
                if c != 0.0:
                    row[var] = row.get(var, 0.0) + c
            row[ell] = row.get(ell, 0.0) - float(row_vec @ lf.distribution)
            shift = float(row_vec @ pd)
            limit = sys.rate_branch[e]
            if soft_vars is not None:
                v = soft_vars.flow_viol.get(e)
                if v is None:
                    v = model.add_variable(f"tv{e}", 0.0, math.inf, cost=soft.transmission_penalty)
                    soft_vars.flow_viol[e] = v
                row[v] = -1.0 if upper else 1.0
            if upper:
                model.add_linear_constraint(row, Sense.LE, limit + shift)
            else:
                model.add_linear_constraint(row, Sense.GE, -limit + shift)
            added = True
    return added


def _extract_lllf(net, sys, gens, ctx, res) -> DispatchSolution:
    lf, ell = ctx["lf"], ctx["ell"]
    pg = _full_pg(net, gens, res.x)
    p = _bus_injections(net, pg)
    ell_val = float(res.x[ell])
    _, flows = sys.dc_flows(p - ell_val * lf.distribution, slack_absorb=True)
    return DispatchSolution(
        method="lllf",
        status=Status.OPTIMAL,
        objective=res.objective,
        pg=pg,
        p=p,
        p_fwd=flows,
        loss_est=sys.r_branch * flows**2,
        loss_total=ell_val,
        flags=list(lf.flags),
    )
