"""Newton-Raphson AC power flow with PV-PQ switching and violation reports.

Recovers an AC operating point from a DC-based dispatch: non-slack active
dispatch is held fixed (bitwise), the slack generator absorbs the active
mismatch, PV buses hold their voltage setpoints until a reactive limit
binds, at which point the bus is switched to PQ with reactive output pinned
at the limit (switching back once per bus is allowed when the limit
unbinds). The engine does not enforce operating or thermal limits; those are
tallied afterwards in a four-section violation report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .network import BusKind, PowerNetwork

__all__ = [
    "PowerFlowState",
    "ViolationReport",
    "ViolationSection",
    "build_ybus",
    "run_power_flow",
    "assess_violations",
    "restore_and_compare",
]


def build_ybus(net: PowerNetwork) -> np.ndarray:
    """Dense complex bus admittance matrix (pi-model, taps, shifts, shunts)."""
    n = net.n_bus
    idx = net.bus_index
    Y = np.zeros((n, n), dtype=complex)
    for _, br in net.in_service_branches():
        y = 1.0 / (br.r + 1j * br.x)
        bc = 1j * br.b_charge / 2.0
        t = br.tap * np.exp(1j * br.shift)
        i, j = idx[br.from_bus], idx[br.to_bus]
        Y[i, i] += (y + bc) / (br.tap**2)
        Y[j, j] += y + bc
        Y[i, j] += -y / np.conj(t)
        Y[j, i] += -y / t
    for i, b in enumerate(net.buses):
        Y[i, i] += b.gs + 1j * b.bs
    return Y


def _ds_dv(Y: np.ndarray, V: np.ndarray):
    """Partial derivatives of complex injections w.r.t. angle and magnitude."""
    I = Y @ V
    diagV = np.diag(V)
    diagI = np.diag(I)
    diagVnorm = np.diag(V / np.abs(V))
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    dS_dVm = diagV @ np.conj(Y @ diagVnorm) + np.conj(diagI) @ diagVnorm
    return dS_dVa, dS_dVm


def _newton(Y, V0, p_spec, q_spec, pv, pq, slack, tol, max_iter):
    """Polar Newton-Raphson. Returns (V, iterations, final mismatch, ok)."""
    V = V0.copy()
    pvpq = np.concatenate([pv, pq])
    for it in range(max_iter + 1):
        S = V * np.conj(Y @ V)
        dP = p_spec[pvpq] - S.real[pvpq]
        dQ = q_spec[pq] - S.imag[pq]
        F = np.concatenate([dP, dQ])
        norm = float(np.abs(F).max()) if len(F) else 0.0
        if norm <= tol:
            return V, it, norm, True
        if it == max_iter:
            return V, it, norm, False
        dS_dVa, dS_dVm = _ds_dv(Y, V)
        J11 = dS_dVa[np.ix_(pvpq, pvpq)].real
        J12 = dS_dVm[np.ix_(pvpq, pq)].real
        J21 = dS_dVa[np.ix_(pq, pvpq)].imag
        J22 = dS_dVm[np.ix_(pq, pq)].imag
        J = np.block([[J11, J12], [J21, J22]])
        try:
            dx = spsolve(sparse.csr_matrix(J), F)
        except RuntimeError:
            return V, it, norm, False
        if not np.all(np.isfinite(dx)):
            return V, it, norm, False
        n1 = len(pvpq)
        ang = np.angle(V)
        mag = np.abs(V)
        ang[pvpq] += dx[:n1]
        mag[pq] += dx[n1:]
        V = mag * np.exp(1j * ang)
    return V, max_iter, norm, False


@dataclass
class PowerFlowState:
    """Solved (or best-effort) AC state plus the per-generator dispatch."""

    vm: np.ndarray
    va: np.ndarray
    bus_kind: list[BusKind]
    pg: np.ndarray
    qg: np.ndarray
    mismatch: float
    newton_iterations: int  # iterations of the worst Newton round
    total_newton_iterations: int
    switch_rounds: int
    converged: bool
    switched_buses: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def total_losses(self, net: PowerNetwork) -> float:
        """System active losses: total generation minus total demand."""
        return float(self.pg.sum() - net.total_load())


def run_power_flow(
    net: PowerNetwork,
    dispatch,
    v_setpoints: dict[int, float] | None = None,
    tol: float = 1e-8,
    max_newton: int = 30,
    max_switch_rounds: int = 10,
) -> PowerFlowState:
    """Full AC power flow seeded with a per-generator active dispatch.

    ``dispatch`` spans all generators (out-of-service entries ignored);
    ``v_setpoints`` optionally overrides generator voltage targets by bus id.
    Starts flat (setpoint magnitudes, zero angles). Divergence is reported in
    the returned state, not raised.
    """
    dispatch = np.asarray(dispatch, dtype=float)
    n = net.n_bus
    idx = net.bus_index
    Y = build_ybus(net)
    slack_i = idx[net.slack.id]

    gens_by_bus: dict[int, list[int]] = {}
    for g, gen in net.in_service_generators():
        gens_by_bus.setdefault(idx[gen.bus], []).append(g)

    vset = np.ones(n)
    for i, bus in enumerate(net.buses):
        vset[i] = bus.vm if bus.vm > 0 else 1.0
    for i, gs in gens_by_bus.items():
        vset[i] = net.generators[gs[0]].vg
    if v_setpoints:
        for bus_id, v in v_setpoints.items():
            vset[idx[bus_id]] = v

    pd, qd = net.pd_vector(), net.qd_vector()
    p_spec = -pd.copy()
    for i, gs in gens_by_bus.items():
        p_spec[i] += sum(dispatch[g] for g in gs)
    q_spec = -qd.copy()

    qmin_bus = np.full(n, -np.inf)
    qmax_bus = np.full(n, np.inf)
    for i, gs in gens_by_bus.items():
        qmin_bus[i] = sum(net.generators[g].qmin for g in gs)
        qmax_bus[i] = sum(net.generators[g].qmax for g in gs)

    kinds = [BusKind.PQ] * n
    for i in gens_by_bus:
        kinds[i] = BusKind.PV
    kinds[slack_i] = BusKind.SLACK

    # flat start: setpoint magnitudes at voltage-controlled buses, zero angles
    vm = np.array([vset[i] if kinds[i] is not BusKind.PQ else 1.0 for i in range(n)])
    V = vm * np.exp(1j * 0.0)

    pinned: dict[int, float] = {}  # bus -> pinned total reactive output
    switch_back_used: set[int] = set()
    switched: list[int] = []
    flags: list[str] = []
    total_newton = 0
    worst_newton = 0
    rounds = 0
    converged = False
    norm = np.inf

    while rounds < max_switch_rounds:
        rounds += 1
        pv = np.array([i for i in range(n) if kinds[i] is BusKind.PV], dtype=int)
        pq = np.array([i for i in range(n) if kinds[i] is BusKind.PQ], dtype=int)
        for i in pv:
            V[i] = vset[i] * np.exp(1j * np.angle(V[i]))
        V[slack_i] = vset[slack_i] * np.exp(1j * 0.0)
        q_run = q_spec.copy()
        for i, qpin in pinned.items():
            q_run[i] = qpin - qd[i]
        V, iters, norm, ok = _newton(Y, V, p_spec, q_run, pv, pq, slack_i, tol, max_newton)
        total_newton += iters
        worst_newton = max(worst_newton, iters)
        if not ok:
            flags.append("newton-diverged")
            break

        S = V * np.conj(Y @ V)
        to_switch: list[tuple[int, float]] = []
        for i in pv:
            qg_bus = S.imag[i] + qd[i]
            if qg_bus > qmax_bus[i] + 1e-7:
                to_switch.append((i, qmax_bus[i]))
            elif qg_bus < qmin_bus[i] - 1e-7:
                to_switch.append((i, qmin_bus[i]))
        to_release: list[int] = []
        for i, qpin in pinned.items():
            if i in switch_back_used:
                continue
            if qpin >= qmax_bus[i] and np.abs(V[i]) > vset[i] + 1e-7:
                to_release.append(i)
            elif qpin <= qmin_bus[i] and np.abs(V[i]) < vset[i] - 1e-7:
                to_release.append(i)
        if not to_switch and not to_release:
            converged = True
            break
        for i, lim in to_switch:
            kinds[i] = BusKind.PQ
            pinned[i] = lim
            switched.append(i)
        for i in to_release:
            kinds[i] = BusKind.PV
            del pinned[i]
            switch_back_used.add(i)
    else:
        flags.append("switching-round-limit")

    S = V * np.conj(Y @ V)
    pg = dispatch.copy()
    qg = np.zeros(len(net.generators))
    for i, gs in gens_by_bus.items():
        qg_bus = S.imag[i] + qd[i]
        spans = np.array([net.generators[g].qmax - net.generators[g].qmin for g in gs])
        qmins = np.array([net.generators[g].qmin for g in gs])
        if spans.sum() > 0:
            ratio = (qg_bus - qmins.sum()) / spans.sum()
            alloc = qmins + ratio * spans
        else:
            alloc = qmins + (qg_bus - qmins.sum()) / len(gs)
        for g, q in zip(gs, alloc):
            qg[g] = q
    # slack absorbs active mismatch; other dispatches are preserved bitwise
    slack_gens = gens_by_bus.get(slack_i, [])
    if slack_gens:
        pg_bus = S.real[slack_i] + pd[slack_i]
        caps = np.array([net.generators[g].pmax for g in slack_gens])
        weights = caps / caps.sum() if caps.sum() > 0 else np.full(len(caps), 1 / len(caps))
        for g, wgt in zip(slack_gens, weights):
            pg[g] = pg_bus * wgt

    return PowerFlowState(
        vm=np.abs(V),
        va=np.angle(V),
        bus_kind=kinds,
        pg=pg,
        qg=qg,
        mismatch=float(norm),
        newton_iterations=worst_newton,
        total_newton_iterations=total_newton,
        switch_rounds=rounds,
        converged=converged and norm <= tol,
        switched_buses=switched,
        flags=flags,
    )


# ----------------------------------------------------------------------
# violation accounting


@dataclass
class ViolationSection:
    count: int = 0
    max: float = 0.0

    def add(self, magnitude: float, tol: float) -> None:
        if magnitude > tol:
            self.count += 1
            self.max = max(self.max, magnitude)


@dataclass
class ViolationReport:
    """Counts and largest magnitudes (pu) for the four constraint families."""

    active: ViolationSection
    reactive: ViolationSection
    voltage: ViolationSection
    thermal: ViolationSection
    valid: bool = True

    def as_dict(self) -> dict:
        return {
            "valid": self.valid,
            "active": {"count": self.active.count, "max": self.active.max},
            "reactive": {"count": self.reactive.count, "max": self.reactive.max},
            "voltage": {"count": self.voltage.count, "max": self.voltage.max},
            "thermal": {"count": self.thermal.count, "max": self.thermal.max},
        }


def assess_violations(state: PowerFlowState, net: PowerNetwork, tol: float = 1e-6) -> ViolationReport:
    """Tally active/reactive capacity, voltage, and thermal violations.

    Thermal overloads are measured on apparent power at both branch ends,
    taking the larger end. A non-converged state yields a report flagged
    invalid.
    """
    report = ViolationReport(
        ViolationSection(), ViolationSection(), ViolationSection(), ViolationSection()
    )
    if not state.converged:
        report.valid = False
        return report

    for g, gen in net.in_service_generators():
        report.active.add(max(state.pg[g] - gen.pmax, gen.pmin - state.pg[g]), tol)
        report.reactive.add(max(state.qg[g] - gen.qmax, gen.qmin - state.qg[g]), tol)
    for i, bus in enumerate(net.buses):
        report.voltage.add(max(state.vm[i] - bus.vmax, bus.vmin - state.vm[i]), tol)

    V = state.vm * np.exp(1j * state.va)
    idx = net.bus_index
    for _, br in net.in_service_branches():
        if br.rate <= 0:
            continue
        y = 1.0 / (br.r + 1j * br.x)
        bc = 1j * br.b_charge / 2.0
        t = br.tap * np.exp(1j * br.shift)
        i, j = idx[br.from_bus], idx[br.to_bus]
        vi, vj = V[i], V[j]
        i_f = (y + bc) / (br.tap**2) * vi - y / np.conj(t) * vj
        i_t = (y + bc) * vj - y / t * vi
        s_f, s_t = abs(vi * np.conj(i_f)), abs(vj * np.conj(i_t))
        report.thermal.add(max(s_f, s_t) - br.rate, tol)
    return report


def restore_and_compare(net: PowerNetwork, solutions) -> list[dict]:
    """Power-flow restoration for each dispatch; one report row per method."""
    rows = []
    for sol in solutions:
        if sol.pg is None:
            rows.append({"method": sol.method, "state": None, "report": None,
                         "error": f"no dispatch (status {sol.status.value})"})
            continue
        state = run_power_flow(net, sol.pg)
        report = assess_violations(state, net)
        rows.append({"method": sol.method, "state": state, "report": report, "error": None})
    return rows


def violation_table_text(rows) -> str:
    """Aligned text table: method, then #viol/Max for the four sections."""
    header = (
        f"{'method':<8} {'conv':<5} "
        f"{'P#':>4} {'Pmax':>9} {'Q#':>4} {'Qmax':>9} "
        f"{'V#':>4} {'Vmax':>9} {'T#':>4} {'Tmax':>9}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        if row["report"] is None:
            lines.append(f"{row['method']:<8} {'-':<5} {row['error']}")
            continue
        rep = row["report"]
        conv = "yes" if rep.valid else "no"
        lines.append(
            f"{row['method']:<8} {conv:<5} "
            f"{rep.active.count:>4} {rep.active.max:>9.4f} "
            f"{rep.reactive.count:>4} {rep.reactive.max:>9.4f} "
            f"{rep.voltage.count:>4} {rep.voltage.max:>9.4f} "
            f"{rep.thermal.count:>4} {rep.thermal.max:>9.4f}"
        )
    return "\n".join(lines)


def violation_table_csv(rows) -> str:
    out = ["method,converged,active_count,active_max,reactive_count,reactive_max,"
           "voltage_count,voltage_max,thermal_count,thermal_max"]
    for row in rows:
        rep = row["report"]
        if rep is None:
            out.append(f"{row['method']},error,,,,,,,,")
            continue
        out.append(
            f"{row['method']},{int(rep.valid)},"
            f"{rep.active.count},{rep.active.max:.6g},"
            f"{rep.reactive.count},{rep.reactive.max:.6g},"
            f"{rep.voltage.count},{rep.voltage.max:.6g},"
            f"{rep.thermal.count},{rep.thermal.max:.6g}"
        )
    return "\n".join(out) + "\n"
