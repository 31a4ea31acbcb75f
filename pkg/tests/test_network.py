import math
import re

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossopf import (
    CaseSemanticError,
    CaseSyntaxError,
    CostCurve,
    net_injection_bounds,
    parse_case,
    parse_json,
    validate_connectivity,
)
from lossopf.cases import BUNDLED, case_text, load_case
from lossopf.network import Branch, Bus, BusKind, Generator, PowerNetwork

from conftest import TWO_BUS_CASE, linear_cost


def test_two_bus_per_unit_conversion():
    net = parse_case(TWO_BUS_CASE)
    assert net.n_bus == 2
    assert net.buses[1].pd == pytest.approx(1.0)
    assert net.branches[0].r == 0.01
    assert net.buses[0].kind is BusKind.SLACK
    assert net.generators[0].pmax == pytest.approx(2.0)


def test_multiple_slack_rejected():
    text = TWO_BUS_CASE.replace("2 1 100", "2 3 100")
    with pytest.raises(CaseSemanticError, match="multiple slack"):
        parse_case(text)


def _count_rows_independent(text: str, table: str) -> int:
    """Independent row counter: grab the bracketed block, count ';' rows."""
    m = re.search(rf"mpc\.{table}\s*=\s*\[(.*?)\];", text, re.S)
    body = m.group(1)
    rows = [ln for ln in body.split(";") if ln.strip()]
    return len(rows)


def test_case14_table_sizes_match_independent_count():
    text = case_text("case14")
    net = parse_case(text)
    assert net.n_bus == _count_rows_independent(text, "bus") == 14
    assert len(net.branches) == _count_rows_independent(text, "branch") == 20
    assert len(net.generators) == _count_rows_independent(text, "gen") == 5


def test_syntax_error_carries_line_number():
    bad = TWO_BUS_CASE.replace("1 2 0.01 0.1", "1 2 bogus 0.1")
    with pytest.raises(CaseSyntaxError, match="line"):
        parse_case(bad)


def test_unterminated_matrix():
    bad = TWO_BUS_CASE.replace("];\nmpc.gencost", "\nmpc.gencost", 1)
    with pytest.raises(CaseSyntaxError):
        parse_case(bad)


def test_zero_reactance_rejected():
    bad = TWO_BUS_CASE.replace("1 2 0.01 0.1", "1 2 0.01 0.0")
    with pytest.raises(CaseSemanticError, match="zero reactance"):
        parse_case(bad)


def test_out_of_service_branch_kept_but_disconnects():
    bad = TWO_BUS_CASE.replace("0 0 1 -360 360", "0 0 0 -360 360")
    with pytest.raises(CaseSemanticError, match="island"):
        parse_case(bad)


def test_no_generator_rejected():
    bad = TWO_BUS_CASE.replace("100 1 200 0", "100 0 200 0")
    with pytest.raises(CaseSemanticError, match="no in-service generator"):
        parse_case(bad)


# ----------------------------------------------------------------------
# connectivity


def test_triangle_fully_connected():
    from conftest import triangle_network

    assert validate_connectivity(triangle_network()) == []


def test_two_islands_reported():
    net = PowerNetwork(
        buses=(
            Bus(id=1, kind=BusKind.SLACK),
            Bus(id=2, kind=BusKind.PQ),
            Bus(id=3, kind=BusKind.PQ),
            Bus(id=4, kind=BusKind.PQ),
        ),
        branches=(
            Branch(from_bus=1, to_bus=2, r=0.0, x=0.1),
            Branch(from_bus=3, to_bus=4, r=0.0, x=0.1),
        ),
        generators=(Generator(bus=1, pmin=0, pmax=1, qmin=0, qmax=0, cost=linear_cost(1, 1)),),
    )
    islands = validate_connectivity(net)
    assert sorted(map(sorted, islands)) == [[1, 2], [3, 4]]


def _bfs_components(net):
    """Independent breadth-first-search oracle over in-service branches."""
    from collections import deque

    idx = net.bus_index
    adj = {b.id: set() for b in net.buses}
    for _, br in net.in_service_branches():
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen, comps = set(), []
    for b in net.buses:
        if b.id in seen:
            continue
        q, comp = deque([b.id]), set()
        seen.add(b.id)
        while q:
            u = q.popleft()
            comp.add(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    q.append(v)
        comps.append(comp)
    return comps


def test_case14_minus_first_branch_still_connected(net14):
    branches = list(net14.branches)
    branches[0] = Branch(
        from_bus=branches[0].from_bus, to_bus=branches[0].to_bus,
        r=branches[0].r, x=branches[0].x, status=False,
    )
    net = PowerNetwork(
        buses=net14.buses, branches=tuple(branches), generators=net14.generators
    )
    assert validate_connectivity(net) == []
    assert len(_bfs_components(net)) == 1


# ----------------------------------------------------------------------
# injection bounds


def test_injection_bounds_examples():
    from conftest import two_bus_network

    net = two_bus_network(pd=0.5)
    lo, hi = net_injection_bounds(net)
    assert lo[0] == pytest.approx(0.0) and hi[0] == pytest.approx(2.0)
    assert lo[1] == pytest.approx(-0.5) and hi[1] == pytest.approx(-0.5)


def test_injection_bounds_two_gens_one_bus():
    net = PowerNetwork(
        buses=(Bus(id=1, kind=BusKind.SLACK), Bus(id=2, kind=BusKind.PQ, pd=0.0)),
        branches=(Branch(from_bus=1, to_bus=2, r=0.0, x=0.1),),
        generators=(
            Generator(bus=1, pmin=0.0, pmax=1.0, qmin=0, qmax=0, cost=linear_cost(1, 1)),
            Generator(bus=1, pmin=0.2, pmax=0.8, qmin=0, qmax=0, cost=linear_cost(1, 1)),
        ),
    )
    lo, hi = net_injection_bounds(net)
    assert lo[0] == pytest.approx(0.2) and hi[0] == pytest.approx(1.8)


@given(
    st.floats(0, 2), st.floats(0, 2), st.floats(0, 3), st.floats(0, 3),
)
def test_injection_bounds_monotone_in_generator_bounds(pmin, pmax, widen_lo, widen_hi):
    if pmin > pmax:
        pmin, pmax = pmax, pmin
    from conftest import two_bus_network

    base = two_bus_network()
    g = base.generators[0]
    net_a = PowerNetwork(
        buses=base.buses, branches=base.branches,
        generators=(Generator(bus=1, pmin=pmin, pmax=pmax, qmin=0, qmax=0, cost=g.cost),),
    )
    net_b = PowerNetwork(
        buses=base.buses, branches=base.branches,
        generators=(
            Generator(bus=1, pmin=pmin - widen_lo, pmax=pmax + widen_hi, qmin=0, qmax=0, cost=g.cost),
        ),
    )
    lo_a, hi_a = net_injection_bounds(net_a)
    lo_b, hi_b = net_injection_bounds(net_b)
    assert (lo_b <= lo_a + 1e-12).all() and (hi_b >= hi_a - 1e-12).all()


# ----------------------------------------------------------------------
# serialization round trip and sanity gates


@pytest.mark.parametrize("name", BUNDLED)
def test_json_round_trip(name):
    net = load_case(name)
    again = parse_json(net.to_json())
    assert again == net


@pytest.mark.parametrize("name", BUNDLED)
def test_per_unit_closure(name):
    net = load_case(name)
    assert max(abs(b.pd) for b in net.buses) <= 1e3
    assert all(0 <= br.rate <= 1e3 for br in net.branches)


# ----------------------------------------------------------------------
# cost curves


def test_quadratic_cost_sampling_is_exact_at_breakpoints(net14):
    # gen 1 of case14: 0.25 p^2 + 20 p in MW
    gen = net14.generators[1]
    for p_pu, cost in gen.cost.points:
        p_mw = p_pu * 100.0
        assert cost == pytest.approx(0.25 * p_mw**2 + 20 * p_mw, abs=1e-9)


def test_cost_curve_convexity_enforced():
    with pytest.raises(CaseSemanticError, match="convex"):
        CostCurve(((0.0, 0.0), (1.0, 10.0), (2.0, 12.0)))


def test_cost_curve_evaluation_interpolates():
    c = CostCurve(((0.0, 0.0), (1.0, 10.0), (2.0, 30.0)))
    assert c(0.5) == pytest.approx(5.0)
    assert c(1.5) == pytest.approx(20.0)
    assert c.marginal_prices() == pytest.approx((10.0, 20.0))


def test_piecewise_gencost_parsed():
    text = TWO_BUS_CASE.replace("2 0 0 2 10 0;", "1 0 0 3 0 0 100 1000 200 3000;")
    net = parse_case(text)
    prices = net.generators[0].cost.marginal_prices()
    # (100 MW, $1000) and (200 MW, $3000) -> 1000 and 2000 $/pu segments
    assert prices == pytest.approx((1000.0, 2000.0))


def test_stagger_keeps_identical_gencosts_distinct(net14):
    # case14 units 2..4 share a cost row; staggered breakpoints must differ
    pts3 = net14.generators[2].cost.points
    pts4 = net14.generators[3].cost.points
    assert pts3 != pts4
