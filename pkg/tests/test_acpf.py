import numpy as np
import pytest

from lossopf.acpf import (
    PowerFlowState,
    assess_violations,
    build_ybus,
    restore_and_compare,
    run_power_flow,
    violation_table_csv,
    violation_table_text,
    _ds_dv,
)
from lossopf.formulations import solve_method, solve_vanilla_dc
from lossopf.network import Branch, Bus, BusKind, Generator, PowerNetwork

from conftest import linear_cost, two_bus_network


def test_flat_network_converges_immediately():
    net = two_bus_network(pd=0.0)
    state = run_power_flow(net, np.zeros(1))
    assert state.converged
    assert state.newton_iterations <= 2
    assert state.vm == pytest.approx([1.0, 1.0])
    assert state.va == pytest.approx([0.0, 0.0])


def _two_bus_pf_oracle(r=0.01, x=0.1, pd=1.0, qd=0.0, v1=1.0):
    """Independent oracle: solve the two scalar power-flow equations with
    scipy.optimize.fsolve on a mismatch function written here."""
    from scipy.optimize import fsolve

    y = 1.0 / (r + 1j * x)
    Y = np.array([[y, -y], [-y, y]])

    def mismatch(z):
        v2, th2 = z
        V = np.array([v1, v2 * np.exp(1j * th2)])
        S = V * np.conj(Y @ V)
        return [S[1].real + pd, S[1].imag + qd]

    v2, th2 = fsolve(mismatch, [1.0, 0.0], xtol=1e-12)
    V = np.array([v1, v2 * np.exp(1j * th2)])
    S = V * np.conj(Y @ V)
    slack_pg = S[0].real
    return v2, th2, slack_pg


def test_two_bus_against_fsolve_oracle():
    net = two_bus_network()
    v2, th2, slack_pg = _two_bus_pf_oracle()
    state = run_power_flow(net, np.zeros(1))
    assert state.converged
    assert state.vm[1] == pytest.approx(v2, abs=1e-8)
    assert state.va[1] == pytest.approx(th2, abs=1e-8)
    assert state.pg[0] == pytest.approx(slack_pg, abs=1e-8)
    assert state.vm[1] < 1.0
    assert state.pg[0] > 1.0  # load plus losses


def test_pv_bus_with_zero_q_range_switches():
    # generator at bus 2 cannot produce reactive power; facing reactive load
    # its bus must be switched to PQ with qg pinned at the zero limit
    net = PowerNetwork(
        buses=(
            Bus(id=1, kind=BusKind.SLACK),
            Bus(id=2, kind=BusKind.PV, pd=0.5, qd=0.3),
        ),
        branches=(Branch(from_bus=1, to_bus=2, r=0.01, x=0.1),),
        generators=(
            Generator(bus=1, pmin=0, pmax=2, qmin=-1, qmax=1, cost=linear_cost(10, 2)),
            Generator(bus=2, pmin=0, pmax=1, qmin=0.0, qmax=0.0, cost=linear_cost(20, 1), vg=1.02),
        ),
    )
    state = run_power_flow(net, np.array([0.0, 0.5]))
    assert state.converged
    assert 1 in state.switched_buses
    assert state.bus_kind[1] is BusKind.PQ
    assert state.qg[1] == pytest.approx(0.0, abs=1e-8)


def test_jacobian_matches_finite_differences(net14):
    Y = build_ybus(net14)
    rng = np.random.default_rng(2)
    n = net14.n_bus
    for _ in range(3):
        vm = 1.0 + 0.05 * rng.normal(size=n)
        va = 0.1 * rng.normal(size=n)
        V = vm * np.exp(1j * va)
        dS_dVa, dS_dVm = _ds_dv(Y, V)
        h = 1e-6
        for k in rng.integers(0, n, size=4):
            va_p, va_m = va.copy(), va.copy()
            va_p[k] += h
            va_m[k] -= h
            fd = (vm * np.exp(1j * va_p) * np.conj(Y @ (vm * np.exp(1j * va_p)))
                  - vm * np.exp(1j * va_m) * np.conj(Y @ (vm * np.exp(1j * va_m)))) / (2 * h)
            col = dS_dVa[:, k]
            scale = max(1.0, np.abs(fd).max())
            assert np.abs(col - fd).max() / scale <= 1e-5
            vm_p, vm_m = vm.copy(), vm.copy()
            vm_p[k] += h
            vm_m[k] -= h
            fd = (vm_p * np.exp(1j * va) * np.conj(Y @ (vm_p * np.exp(1j * va)))
                  - vm_m * np.exp(1j * va) * np.conj(Y @ (vm_m * np.exp(1j * va)))) / (2 * h)
            col = dS_dVm[:, k]
            scale = max(1.0, np.abs(fd).max())
            assert np.abs(col - fd).max() / scale <= 1e-5


def test_mismatch_certificate_and_preservation(bundled):
    for name, net, sys in bundled:
        sol = solve_method(net, "lloa", sys=sys)
        state = run_power_flow(net, sol.pg)
        assert state.converged, name
        assert state.mismatch <= 1e-8, name
        slack_gens = set(net.generators_at(net.slack.id))
        for g in range(len(net.generators)):
            if g not in slack_gens:
                assert state.pg[g] == sol.pg[g], (name, g)  # bitwise


def test_divergence_reported_not_raised():
    net = two_bus_network(pd=50.0, rate=0.0)  # far beyond deliverable power
    state = run_power_flow(net, np.array([2.0]))
    assert not state.converged
    assert "newton-diverged" in state.flags
    report = assess_violations(state, net)
    assert not report.valid


def test_assess_violations_clean_and_voltage():
    net = two_bus_network(pd=0.1)
    state = run_power_flow(net, np.array([0.1]))
    report = assess_violations(state, net)
    assert report.valid
    assert report.active.count == 0 and report.thermal.count == 0

    # synthetic state with one undervoltage: 0.93 against vmin 0.94
    state2 = PowerFlowState(
        vm=np.array([1.0, 0.93]),
        va=np.zeros(2),
        bus_kind=[BusKind.SLACK, BusKind.PQ],
        pg=np.array([0.1]),
        qg=np.array([0.0]),
        mismatch=0.0,
        newton_iterations=1,
        total_newton_iterations=1,
        switch_rounds=1,
        converged=True,
    )
    report2 = assess_violations(state2, net)
    assert report2.voltage.count == 1
    assert report2.voltage.max == pytest.approx(0.01, abs=1e-12)


def test_thermal_violation_uses_apparent_power_max_end():
    net = two_bus_network(rate=0.5)
    state = run_power_flow(net, np.zeros(1))  # slack serves 1.0 over a 0.5 line
    report = assess_violations(state, net)
    assert report.thermal.count == 1
    assert report.thermal.max > 0.5  # |S| well above the 0.5 pu rating


def test_restore_and_compare_table(net30, sys30):
    sols = [solve_method(net30, m, sys=sys30) for m in ("dc", "lllf", "llqcp", "lloa")]
    rows = restore_and_compare(net30, sols)
    assert [r["method"] for r in rows] == ["dc", "lllf", "llqcp", "lloa"]
    text = violation_table_text(rows)
    assert text.count("\n") >= 5
    csv = violation_table_csv(rows)
    assert csv.startswith("method,converged")
    assert len(csv.strip().split("\n")) == 5

    single = restore_and_compare(net30, sols[:1])
    assert len(single) == 1
    assert restore_and_compare(net30, []) == []


def test_restoration_pattern_case118(net118, sys118):
    dc = solve_vanilla_dc(net118, "angle", sys118)
    rows = restore_and_compare(
        net118,
        [dc] + [solve_method(net118, m, sys=sys118) for m in ("lllf", "llqcp", "lloa")],
    )
    by_method = {r["method"]: r for r in rows}
    dc_active = by_method["dc"]["report"].active.max
    for m in ("lllf", "llqcp", "lloa"):
        assert by_method[m]["report"].active.max < dc_active
    # the slack generator absorbs all losses under vanilla DC
    losses = by_method["dc"]["state"].total_losses(net118)
    assert dc_active == pytest.approx(losses, rel=0.2)
