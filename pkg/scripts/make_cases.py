#!/usr/bin/env python3
"""Generate the synthetic 30- and 118-bus bundled cases.

Builds a meshed network over a random planar layout (spanning tree plus
nearest-neighbour chords), assigns realistic impedances, loads, generators,
and costs, then validates the result against the properties the test suite
relies on: DC feasibility, Newton convergence from flat start, quick LLOA
convergence when warm-started, and (for the 118-bus system) a cheap
saturated slack unit so the vanilla-DC restoration pattern appears.

Run from the repository root:  python3 scripts/make_cases.py
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lossopf import parse_case  # noqa: E402
from lossopf.acpf import run_power_flow  # noqa: E402
from lossopf.formulations import solve_lloa, solve_llqcp, solve_vanilla_dc  # noqa: E402
from lossopf.kernel import factorize  # noqa: E402


def build_case(
    n_bus: int,
    n_gen: int,
    total_load: float,
    seed: int,
    cheap_small_slack: bool,
    name: str,
) -> str:
    rng = np.random.default_rng(seed)
    pts = rng.random((n_bus, 2))

    # spanning tree by randomized nearest-neighbour growth
    in_tree = [0]
    edges: list[tuple[int, int]] = []
    remaining = list(range(1, n_bus))
    rng.shuffle(remaining)
    for j in remaining:
        d = [np.hypot(*(pts[j] - pts[i])) for i in in_tree]
        order = np.argsort(d)
        pick = in_tree[order[min(int(rng.integers(0, 2)), len(order) - 1)]]
        edges.append((pick, j))
        in_tree.append(j)

    # chords: connect close pairs until E ~ 1.5 N
    target_e = int(round(1.5 * n_bus))
    have = {tuple(sorted(e)) for e in edges}
    cand = []
    for i in range(n_bus):
        for j in range(i + 1, n_bus):
            if (i, j) not in have:
                cand.append((np.hypot(*(pts[j] - pts[i])), i, j))
    cand.sort()
    k = 0
    while len(edges) < target_e and k < len(cand):
        _, i, j = cand[k]
        k += 1
        if rng.random() < 0.75:
            edges.append((i, j))
            have.add((i, j))

    # impedances from length; roughly one branch in ten is a transformer
    branch_rows = []
    for i, j in edges:
        length = np.hypot(*(pts[j] - pts[i])) + 0.02
        if rng.random() < 0.1:
            x = rng.uniform(0.05, 0.12)
            r = x * rng.uniform(0.03, 0.08)
            b = 0.0
            tap = rng.uniform(0.97, 1.03)
        else:
            x = 0.015 + 0.10 * length
            r = x * rng.uniform(0.15, 0.3)
            b = x * rng.uniform(0.2, 0.5)
            tap = 0.0
        branch_rows.append([i + 1, j + 1, r, x, b, 0.0, 0, 0, tap, 0, 1, -360, 360])

    # loads on about two thirds of the buses
    pd = np.zeros(n_bus)
    load_buses = rng.choice(n_bus, size=int(0.65 * n_bus), replace=False)
    raw = np.minimum(rng.lognormal(0.0, 0.45, size=len(load_buses)), 3.0)
    pd[load_buses] = raw / raw.sum() * total_load
    power_factor = rng.uniform(0.95, 0.99, size=n_bus)
    qd = pd * np.tan(np.arccos(power_factor))

    # generators: spread over the network, one clearly largest unit
    gen_buses = list(rng.choice(n_bus, size=n_gen, replace=False))
    slack_bus = gen_buses[0]
    caps = rng.lognormal(0.0, 0.5, size=n_gen)
    caps = caps / caps.sum() * (1.7 * total_load)
    caps[1] = caps.max() * 1.6  # the distinct largest unit (SCED contingency)
    if cheap_small_slack:
        caps[0] = 0.085 * total_load  # small cheap slack saturates in DC
    c1 = rng.uniform(8.0, 45.0, size=n_gen)
    c2 = rng.uniform(0.002, 0.02, size=n_gen) * 100.0 / caps  # $/MW^2 scaled
    if cheap_small_slack:
        c1[0] = 5.0
    vg = rng.uniform(1.0, 1.04, size=n_gen)

    bus_rows = []
    for i in range(n_bus):
        kind = 3 if i == slack_bus else (2 if i in gen_buses else 1)
        bus_rows.append(
            [i + 1, kind, pd[i] * 100.0, qd[i] * 100.0, 0, 0, 1,
             1.0, 0, 138, 1, 1.06, 0.94]
        )

    gen_rows, cost_rows = [], []
    for g, bus in enumerate(gen_buses):
        pmax = caps[g] * 100.0
        qmax = (0.8 * caps[g] + 0.3) * 100.0
        qmin = -(0.5 * caps[g] + 0.3) * 100.0
        gen_rows.append(
            [bus + 1, 0, 0, qmax, qmin, vg[g], 100, 1, pmax, 0.0,
             0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        )
        cost_rows.append([2, 0, 0, 3, c2[g], c1[g], 0.0])

    def fmt(rows):
        return "\n".join("\t" + "\t".join(f"{v:.6g}" for v in row) + ";" for row in rows)

    text = (
        f"function mpc = {name}\n"
        f"% Synthetic {n_bus}-bus test system (seed {seed}).\n"
        "mpc.version = '2';\n"
        "mpc.baseMVA = 100;\n\n"
        "mpc.bus = [\n" + fmt(bus_rows) + "\n];\n\n"
        "mpc.gen = [\n" + fmt(gen_rows) + "\n];\n\n"
        "mpc.branch = [\n" + fmt(branch_rows) + "\n];\n\n"
        "mpc.gencost = [\n" + fmt(cost_rows) + "\n];\n"
    )
    return text


def add_rates(text: str, name: str, rng: np.random.Generator) -> str:
    """Give ~30% of branches finite limits around 1.3x their DC flows.

    Two of the most-loaded picks are set below their unconstrained flow so
    thermal limits genuinely bind and the lazy-row machinery exercises.
    """
    net = parse_case(text, name=name)
    sys = factorize(net)
    dc = solve_vanilla_dc(net, "angle", sys).require_ok()
    flows = np.abs(dc.p_fwd)
    scale = np.maximum(flows, 0.05 * flows.max())
    lines = text.splitlines()
    start = lines.index("mpc.branch = [") + 1
    n_e = len(net.branches)
    picks = rng.choice(n_e, size=int(0.3 * n_e), replace=False)
    by_load = sorted(picks, key=lambda e: -flows[e])
    tight = set(by_load[:2])
    for e in picks:
        factor = 0.93 if e in tight else rng.uniform(1.3, 2.0)
        rate_mw = float(scale[e] * factor * 100.0)
        cols = lines[start + e].strip().rstrip(";").split("\t")
        cols[5] = f"{rate_mw:.6g}"
        lines[start + e] = "\t" + "\t".join(cols) + ";"
    return "\n".join(lines) + "\n"


def validate(text: str, name: str, expect_saturated_slack: bool) -> dict:
    net = parse_case(text, name=name)
    sys = factorize(net)
    dc = solve_vanilla_dc(net, "angle", sys).require_ok()
    dcp = solve_vanilla_dc(net, "ptdf", sys).require_ok()
    from lossopf.formulations import solve_lllf

    ll = solve_lllf(net, sys).require_ok()
    q = solve_llqcp(net, sys).require_ok()
    oa = solve_lloa(net, sys, epsilon=1e-3).require_ok()
    oa6 = solve_lloa(net, sys, epsilon=1e-6, max_iter=40).require_ok()
    state = run_power_flow(net, oa.pg)
    st_dc = run_power_flow(net, dc.pg)
    st_q = run_power_flow(net, q.pg)
    st_ll = run_power_flow(net, ll.pg)
    from lossopf.sced import ScedConfig, solve_sced

    sced_soft = solve_sced(net, "dc", ScedConfig(), sys=sys)
    slack_gen = net.generators_at(net.slack.id)[0]
    info = {
        "dc_obj": dc.objective,
        "dc_agree": float(np.abs(dc.pg - dcp.pg).max()),
        "llqcp_obj": q.objective,
        "lloa_iters_warm": oa.iterations,
        "lloa6_rel": abs(oa6.objective - q.objective) / abs(q.objective),
        "newton_iters": max(s.newton_iterations for s in (state, st_dc, st_q, st_ll)),
        "converged": all(s.converged for s in (state, st_dc, st_q, st_ll)),
        "congested": dcp.iterations >= 2,
        "soft_clean": sced_soft.balance_violation + sced_soft.transmission_violation < 1e-9,
        "slack_sat": dc.pg[slack_gen] >= net.generators[slack_gen].pmax - 1e-7,
        "dc_slack_pickup": st_dc.pg[slack_gen] - net.generators[slack_gen].pmax,
        "ac_losses_dc": st_dc.total_losses(net),
        "est_loss_lloa": oa.loss_total,
    }
    ok = (
        info["dc_agree"] < 1e-6
        and info["lloa_iters_warm"] <= 3
        and info["lloa6_rel"] < 1e-4
        and info["newton_iters"] <= 10
        and info["converged"]
        and info["congested"]
        and info["soft_clean"]
        and (not expect_saturated_slack or info["slack_sat"])
    )
    if expect_saturated_slack and ok:
        pickup, losses = info["dc_slack_pickup"], info["ac_losses_dc"]
        ok = pickup > 0 and abs(pickup - losses) / losses <= 0.2
    info["ok"] = ok
    return info


def main():
    out = Path(__file__).resolve().parent.parent / "src" / "lossopf" / "cases"
    specs = [
        ("case30", 30, 6, 2.8, False),
        ("case118", 118, 30, 42.0, True),
    ]
    for name, n_bus, n_gen, load, sat in specs:
        for seed in range(200):
            text = build_case(n_bus, n_gen, load, seed, cheap_small_slack=sat, name=name)
            try:
                text = add_rates(text, name, np.random.default_rng(seed + 10_000))
                info = validate(text, name, expect_saturated_slack=sat)
            except Exception as exc:
                print(f"{name} seed {seed}: rejected ({exc})")
                continue
            print(f"{name} seed {seed}: {info}")
            if info["ok"]:
                (out / f"{name}.m").write_text(text)
                print(f"wrote {out / (name + '.m')}")
                break
        else:
            raise SystemExit(f"no viable seed found for {name}")


if __name__ == "__main__":
    main()
