import math

import pytest

from lossopf.cases import load_case
from lossopf.kernel import factorize
from lossopf.network import (
    Branch,
    Bus,
    BusKind,
    CostCurve,
    Generator,
    PowerNetwork,
)

TWO_BUS_CASE = """
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0   0 0 0 1 1.0 0 0 1 1.06 0.94;
 2 1 100 0 0 0 1 1.0 0 0 1 1.06 0.94;
];
mpc.gen = [
 1 0 0 50 -50 1.0 100 1 200 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
 1 2 0.01 0.1 0 150 0 0 0 0 1 -360 360;
];
mpc.gencost = [
 2 0 0 2 10 0;
];
"""


def linear_cost(price_per_pu: float, pmax: float, c0: float = 0.0) -> CostCurve:
    return CostCurve(((0.0, c0), (pmax, c0 + price_per_pu * pmax)))


def two_bus_network(
    r=0.01, x=0.1, rate=1.5, pd=1.0, price=10.0, pmax=2.0, slack_bus=1
) -> PowerNetwork:
    """Single line, one generator at bus 1, load at bus 2. Costs are $/pu."""
    kinds = {slack_bus: BusKind.SLACK}
    return PowerNetwork(
        buses=(
            Bus(id=1, kind=kinds.get(1, BusKind.PV), vmin=0.94, vmax=1.06),
            Bus(id=2, kind=kinds.get(2, BusKind.PQ), pd=pd, vmin=0.94, vmax=1.06),
        ),
        branches=(Branch(from_bus=1, to_bus=2, r=r, x=x, rate=rate),),
        generators=(
            Generator(
                bus=1, pmin=0.0, pmax=pmax, qmin=-0.5, qmax=0.5,
                cost=linear_cost(price, pmax),
            ),
        ),
        name="two-bus",
    )


def triangle_network(rates=(0.0, 0.0, 0.0)) -> PowerNetwork:
    """Three buses in a ring, generators at 1 and 2, load at 3. Costs $/pu."""
    return PowerNetwork(
        buses=(
            Bus(id=1, kind=BusKind.SLACK),
            Bus(id=2, kind=BusKind.PV),
            Bus(id=3, kind=BusKind.PQ, pd=1.0),
        ),
        branches=(
            Branch(from_bus=1, to_bus=2, r=0.01, x=1.0, rate=rates[0]),
            Branch(from_bus=2, to_bus=3, r=0.01, x=1.0, rate=rates[1]),
            Branch(from_bus=1, to_bus=3, r=0.01, x=1.0, rate=rates[2]),
        ),
        generators=(
            Generator(bus=1, pmin=0.0, pmax=2.0, qmin=-1, qmax=1, cost=linear_cost(10.0, 2.0)),
            Generator(bus=2, pmin=0.0, pmax=2.0, qmin=-1, qmax=1, cost=linear_cost(25.0, 2.0)),
        ),
        name="triangle",
    )


@pytest.fixture(scope="session")
def net14():
    return load_case("case14")


@pytest.fixture(scope="session")
def sys14(net14):
    return factorize(net14)


@pytest.fixture(scope="session")
def net30():
    return load_case("case30")


@pytest.fixture(scope="session")
def sys30(net30):
    return factorize(net30)


@pytest.fixture(scope="session")
def net118():
    return load_case("case118")


@pytest.fixture(scope="session")
def sys118(net118):
    return factorize(net118)


@pytest.fixture(scope="session")
def bundled(net14, sys14, net30, sys30, net118, sys118):
    return [("case14", net14, sys14), ("case30", net30, sys30), ("case118", net118, sys118)]
