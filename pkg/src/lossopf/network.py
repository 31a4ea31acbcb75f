"""Grid data model and MATPOWER-style case parser.

All quantities are stored per-unit on ``base_mva`` (100 MVA by convention).
Networks are immutable after construction and safe to share between
concurrent solves.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field, replace

__all__ = [
    "BusKind",
    "Bus",
    "Branch",
    "Generator",
    "CostCurve",
    "PowerNetwork",
    "CaseError",
    "CaseSyntaxError",
    "CaseSemanticError",
    "parse_case",
    "parse_json",
    "validate_connectivity",
    "net_injection_bounds",
]

# sanity gate against MW/pu mix-ups
_PU_CLOSURE = 1e3


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseSyntaxError(CaseError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseSemanticError(CaseError):
    def __init__(self, message: str, element: str | None = None):
        self.element = element
        if element is not None:
            message = f"{message} ({element})"
        super().__init__(message)


class BusKind(enum.Enum):
    PQ = 1
    PV = 2
    SLACK = 3


@dataclass(frozen=True)
class Bus:
    """A network node. ``pd``/``qd`` are fixed demand, ``gs``/``bs`` shunts (pu)."""

    id: int
    kind: BusKind
    pd: float = 0.0
    qd: float = 0.0
    gs: float = 0.0
    bs: float = 0.0
    base_kv: float = 0.0
    vmin: float = 0.9
    vmax: float = 1.1
    vm: float = 1.0
    va: float = 0.0


@dataclass(frozen=True)
class Branch:
    """Series impedance r + jx, charging susceptance b_charge, thermal ``rate``.

    ``rate == 0`` means unlimited (MATPOWER convention). The DC series
    susceptance is ``1/x``; taps and shifts are used only by the AC model.
    """

    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float = 0.0
    rate: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    status: bool = True

    @property
    def susceptance(self) -> float:
        return 1.0 / self.x

    @property
    def unlimited(self) -> bool:
        return self.rate == 0.0


@dataclass(frozen=True)
class CostCurve:
    """Convex piecewise-linear cost: ascending (power pu, cost $) points.

    Quadratic gencost rows are sampled onto this representation at parse
    time, so every formulation stays LP-representable.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ps = [p for p, _ in self.points]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise CaseSemanticError("cost breakpoints must be strictly increasing")
        slopes = self.marginal_prices()
        for a, b in zip(slopes, slopes[1:]):
            if b < a - 1e-9 * max(1.0, abs(a)):
                raise CaseSemanticError("piecewise cost is not convex")

    def marginal_prices(self) -> tuple[float, ...]:
        pts = self.points
        return tuple(
            (c1 - c0) / (p1 - p0) for (p0, c0), (p1, c1) in zip(pts, pts[1:])
        )

    def segment_widths(self) -> tuple[float, ...]:
        ps = [p for p, _ in self.points]
        return tuple(b - a for a, b in zip(ps, ps[1:]))

    def __call__(self, p: float) -> float:
        pts = self.points
        if len(pts) == 1:
            return pts[0][1]
        if p <= pts[0][0]:
            # extrapolate with the first segment slope
            m = self.marginal_prices()[0]
            return pts[0][1] + m * (p - pts[0][0])
        for (p0, c0), (p1, c1) in zip(pts, pts[1:]):
            if p <= p1:
                return c0 + (c1 - c0) * (p - p0) / (p1 - p0)
        m = self.marginal_prices()[-1]
        return pts[-1][1] + m * (p - pts[-1][0])


@dataclass(frozen=True)
class Generator:
    """A dispatchable unit. Bounds and ramp are per-unit on the system base."""

    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    cost: CostCurve
    vg: float = 1.0
    status: bool = True
    reserve_capable: bool = True
    ramp_rate: float = math.inf


@dataclass(frozen=True)
class PowerNetwork:
    """Validated per-unit grid description.

    External bus ids map to contiguous 0-based indices (``bus_index``);
    everything reported back to callers uses external ids.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    name: str = ""

    # ------------------------------------------------------------------
    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind is BusKind.SLACK)

    def in_service_branches(self) -> list[tuple[int, Branch]]:
        """(original position, branch) for every in-service branch."""
        return [(k, br) for k, br in enumerate(self.branches) if br.status]

    def in_service_generators(self) -> list[tuple[int, Generator]]:
        return [(g, gen) for g, gen in enumerate(self.generators) if gen.status]

    def generators_at(self, bus_id: int) -> list[int]:
        return [g for g, gen in enumerate(self.generators) if gen.bus == bus_id and gen.status]

    def pd_vector(self):
        import numpy as np

        return np.array([b.pd for b in self.buses])

    def qd_vector(self):
        import numpy as np

        return np.array([b.qd for b in self.buses])

    def total_load(self) -> float:
        return sum(b.pd for b in self.buses)

    def dispatch_cost(self, pg) -> float:
        """Evaluate the (piecewise) cost of a per-generator dispatch vector."""
        total = 0.0
        for (g, gen), p in zip(enumerate(self.generators), pg):
            if gen.status:
                total += gen.cost(float(p))
        return total

    def with_loads_scaled(self, factors) -> "PowerNetwork":
        """New network with per-bus multiplicative load factors (pd and qd)."""
        buses = tuple(
            replace(b, pd=b.pd * f, qd=b.qd * f) for b, f in zip(self.buses, factors)
        )
        return replace(self, buses=buses)

    # ------------------------------------------------------------------
    def to_json(self) -> str:
        """Canonical per-unit JSON dump (documented in the README)."""
        doc = {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [
                {
                    "id": b.id,
                    "kind": b.kind.name,
                    "pd": b.pd,
                    "qd": b.qd,
                    "gs": b.gs,
                    "bs": b.bs,
                    "base_kv": b.base_kv,
                    "vmin": b.vmin,
                    "vmax": b.vmax,
                    "vm": b.vm,
                    "va": b.va,
                }
                for b in self.buses
            ],
            "branches": [
                {
                    "from_bus": br.from_bus,
                    "to_bus": br.to_bus,
                    "r": br.r,
                    "x": br.x,
                    "b_charge": br.b_charge,
                    "rate": br.rate,
                    "tap": br.tap,
                    "shift": br.shift,
                    "status": br.status,
                }
                for br in self.branches
            ],
            "generators": [
                {
                    "bus": g.bus,
                    "pmin": g.pmin,
                    "pmax": g.pmax,
                    "qmin": g.qmin,
                    "qmax": g.qmax,
                    "vg": g.vg,
                    "status": g.status,
                    "reserve_capable": g.reserve_capable,
                    "ramp_rate": None if math.isinf(g.ramp_rate) else g.ramp_rate,
                    "cost_points": list(map(list, g.cost.points)),
                }
                for g in self.generators
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def parse_json(text: str) -> PowerNetwork:
    """Inverse of :meth:`PowerNetwork.to_json`."""
    doc = json.loads(text)
    buses = tuple(
        Bus(
            id=int(b["id"]),
            kind=BusKind[b["kind"]],
            pd=b["pd"],
            qd=b["qd"],
            gs=b["gs"],
            bs=b["bs"],
            base_kv=b["base_kv"],
            vmin=b["vmin"],
            vmax=b["vmax"],
            vm=b["vm"],
            va=b["va"],
        )
        for b in doc["buses"]
    )
    branches = tuple(
        Branch(
            from_bus=int(br["from_bus"]),
            to_bus=int(br["to_bus"]),
            r=br["r"],
            x=br["x"],
            b_charge=br["b_charge"],
            rate=br["rate"],
            tap=br["tap"],
            shift=br["shift"],
            status=bool(br["status"]),
        )
        for br in doc["branches"]
    )
    gens = tuple(
        Generator(
            bus=int(g["bus"]),
            pmin=g["pmin"],
            pmax=g["pmax"],
            qmin=g["qmin"],
            qmax=g["qmax"],
            cost=CostCurve(tuple((float(p), float(c)) for p, c in g["cost_points"])),
            vg=g["vg"],
            status=bool(g["status"]),
            reserve_capable=bool(g["reserve_capable"]),
            ramp_rate=math.inf if g["ramp_rate"] is None else g["ramp_rate"],
        )
        for g in doc["generators"]
    )
    net = PowerNetwork(
        buses=buses,
        branches=branches,
        generators=gens,
        base_mva=doc["base_mva"],
        name=doc.get("name", ""),
    )
    _validate(net)
    return net


# ----------------------------------------------------------------------
# MATPOWER-style parsing


_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([-\d.eE+]+)\s*;")
_MATRIX_OPEN_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _read_tables(text: str) -> tuple[dict[str, float], dict[str, list[list[float]]], dict[str, int]]:
    """Extract mpc scalars and matrices, remembering the matrix start lines."""
    scalars: dict[str, float] = {}
    matrices: dict[str, list[list[float]]] = {}
    start_lines: dict[str, int] = {}
    lines = text.splitlines()
    current: str | None = None
    for lineno, raw in enumerate(lines, start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            m = _SCALAR_RE.match(line)
            if m:
                scalars[m.group(1)] = float(m.group(2))
                continue
            m = _MATRIX_OPEN_RE.match(line)
            if m:
                current = m.group(1)
                matrices[current] = []
                start_lines[current] = lineno
                line = line[m.end():].strip()
                if not line:
                    continue
            else:
                continue
        # inside a matrix body
        closed = False
        if "]" in line:
            line = line.split("]")[0]
            closed = True
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                row = [float(tok) for tok in chunk.replace(",", " ").split()]
            except ValueError:
                raise CaseSyntaxError(f"bad numeric row in mpc.{current}: {chunk!r}", lineno)
            matrices[current].append(row)
        if closed:
            current = None
    if current is not None:
        raise CaseSyntaxError(f"unterminated matrix mpc.{current}", start_lines[current])
    return scalars, matrices, start_lines


def _quadratic_to_points(
    c2: float, c1: float, c0: float, pmin: float, pmax: float,
    base_mva: float, segments: int, stagger: float,
) -> tuple[tuple[float, float], ...]:
    """Sample a MW-domain polynomial cost onto pu breakpoints.

    Interior breakpoints are shifted by a small generator-dependent stagger so
    that units with identical cost rows still produce distinct marginal-price
    ladders (keeps LP optima unique; the curve still interpolates the exact
    polynomial).
    """

    def cost_at(p_pu: float) -> float:
        p_mw = p_pu * base_mva
        return c2 * p_mw * p_mw + c1 * p_mw + c0

    if pmax - pmin < 1e-12:
        return ((pmin, cost_at(pmin)),)
    if c2 == 0.0:
        return ((pmin, cost_at(pmin)), (pmax, cost_at(pmax)))
    width = (pmax - pmin) / segments
    xs = [pmin + k * width for k in range(segments + 1)]
    for k in range(1, segments):
        xs[k] += stagger * width
    xs[-1] = pmax
    return tuple((x, cost_at(x)) for x in xs)


def _piecewise_to_points(
    pairs: list[float], pmin: float, pmax: float, base_mva: float
) -> tuple[tuple[float, float], ...]:
    pts = [(pairs[2 * k] / base_mva, pairs[2 * k + 1]) for k in range(len(pairs) // 2)]
    pts.sort()
    # extend end segments to cover the generator's operating range
    if len(pts) >= 2:
        (p0, c0), (p1, c1) = pts[0], pts[1]
        if pmin < p0:
            m = (c1 - c0) / (p1 - p0)
            pts.insert(0, (pmin, c0 + m * (pmin - p0)))
        (p0, c0), (p1, c1) = pts[-2], pts[-1]
        if pmax > p1:
            m = (c1 - c0) / (p1 - p0)
            pts.append((pmax, c1 + m * (pmax - p1)))
    return tuple(pts)


def parse_case(
    text: str,
    name: str = "",
    cost_segments: int = 10,
    stagger_costs: bool = True,
) -> PowerNetwork:
    """Parse a MATPOWER-style case (bus, gen, branch, gencost tables).

    MW/MVAr columns are converted to per-unit on ``baseMVA``; out-of-service
    elements are retained with ``status=False``. Raises
    :class:`CaseSyntaxError` with a line number for malformed input and
    :class:`CaseSemanticError` (with the offending element) for invariant
    violations such as multiple slack buses, zero reactance, or islands.
    """
    scalars, matrices, start_lines = _read_tables(text)
    if "baseMVA" not in scalars:
        raise CaseSyntaxError("missing mpc.baseMVA")
    base = scalars["baseMVA"]
    if base <= 0:
        raise CaseSemanticError(f"baseMVA must be positive, got {base}")
    for required in ("bus", "gen", "branch", "gencost"):
        if required not in matrices:
            raise CaseSyntaxError(f"missing mpc.{required} table")

    buses: list[Bus] = []
    for i, row in enumerate(matrices["bus"]):
        if len(row) < 13:
            raise CaseSyntaxError(
                f"bus row {i + 1} has {len(row)} columns, expected >= 13",
                start_lines["bus"],
            )
        kind_code = int(row[1])
        if kind_code not in (1, 2, 3):
            raise CaseSemanticError(
                f"unsupported bus type {kind_code}", element=f"bus {int(row[0])}"
            )
        buses.append(
            Bus(
                id=int(row[0]),
                kind=BusKind(kind_code),
                pd=row[2] / base,
                qd=row[3] / base,
                gs=row[4] / base,
                bs=row[5] / base,
                vm=row[7],
                va=math.radians(row[8]),
                base_kv=row[9],
                vmax=row[11],
                vmin=row[12],
            )
        )

    branches: list[Branch] = []
    for i, row in enumerate(matrices["branch"]):
        if len(row) < 11:
            raise CaseSyntaxError(
                f"branch row {i + 1} has {len(row)} columns, expected >= 11",
                start_lines["branch"],
            )
        tap = row[8] if row[8] != 0.0 else 1.0
        branches.append(
            Branch(
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                r=row[2],
                x=row[3],
                b_charge=row[4],
                rate=row[5] / base,
                tap=tap,
                shift=math.radians(row[9]),
                status=bool(row[10]),
            )
        )

    gencost = matrices["gencost"]
    if len(gencost) < len(matrices["gen"]):
        raise CaseSemanticError(
            f"gencost has {len(gencost)} rows for {len(matrices['gen'])} generators"
        )

    gens: list[Generator] = []
    for g, row in enumerate(matrices["gen"]):
        if len(row) < 10:
            raise CaseSyntaxError(
                f"gen row {g + 1} has {len(row)} columns, expected >= 10",
                start_lines["gen"],
            )
        pmin, pmax = row[9] / base, row[8] / base
        if pmin > pmax:
            raise CaseSemanticError("generator pmin > pmax", element=f"gen {g + 1}")
        cost_row = gencost[g]
        model, ncost = int(cost_row[0]), int(cost_row[3])
        params = cost_row[4:4 + 2 * ncost if model == 1 else 4 + ncost]
        stagger = (0.003 * ((g % 7) + 1)) if stagger_costs else 0.0
        if model == 2:
            if ncost > 3:
                raise CaseSemanticError(
                    f"polynomial cost of degree {ncost - 1} unsupported (max 2)",
                    element=f"gen {g + 1}",
                )
            coefs = [0.0] * (3 - ncost) + list(params[:ncost])
            points = _quadratic_to_points(
                coefs[0], coefs[1], coefs[2], pmin, pmax, base, cost_segments, stagger
            )
        elif model == 1:
            points = _piecewise_to_points(list(params), pmin, pmax, base)
        else:
            raise CaseSemanticError(f"unknown gencost model {model}", element=f"gen {g + 1}")
        ramp = row[17] / base if len(row) > 17 and row[17] > 0 else math.inf
        gens.append(
            Generator(
                bus=int(row[0]),
                pmin=pmin,
                pmax=pmax,
                qmax=row[3] / base,
                qmin=row[4] / base,
                vg=row[5] if row[5] > 0 else 1.0,
                status=bool(row[7]),
                cost=CostCurve(points),
                ramp_rate=ramp,
            )
        )

    net = PowerNetwork(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        base_mva=base,
        name=name,
    )
    _validate(net)
    return net


def _validate(net: PowerNetwork) -> None:
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        raise CaseSemanticError("duplicate bus ids")
    index = net.bus_index

    slacks = [b.id for b in net.buses if b.kind is BusKind.SLACK]
    if len(slacks) > 1:
        raise CaseSemanticError("multiple slack buses", element=f"buses {slacks}")
    if not slacks:
        raise CaseSemanticError("no slack bus")

    for b in net.buses:
        if b.vmin > b.vmax:
            raise CaseSemanticError("vmin > vmax", element=f"bus {b.id}")
        if not (math.isfinite(b.pd) and math.isfinite(b.qd)):
            raise CaseSemanticError("non-finite demand", element=f"bus {b.id}")
        if abs(b.pd) > _PU_CLOSURE:
            raise CaseSemanticError(
                f"demand {b.pd} pu outside the [0, {_PU_CLOSURE}] sanity gate",
                element=f"bus {b.id}",
            )

    for k, br in enumerate(net.branches):
        if br.from_bus == br.to_bus:
            raise CaseSemanticError("branch endpoints coincide", element=f"branch {k + 1}")
        if br.from_bus not in index or br.to_bus not in index:
            raise CaseSemanticError("branch references unknown bus", element=f"branch {k + 1}")
        if br.status and br.x == 0.0:
            raise CaseSemanticError("zero reactance on in-service branch", element=f"branch {k + 1}")
        if br.r < 0:
            raise CaseSemanticError("negative resistance", element=f"branch {k + 1}")
        if br.rate < 0 or br.rate > _PU_CLOSURE:
            raise CaseSemanticError(
                f"rate {br.rate} pu outside the [0, {_PU_CLOSURE}] sanity gate",
                element=f"branch {k + 1}",
            )

    if not any(g.status for g in net.generators):
        raise CaseSemanticError("no in-service generator")
    for g, gen in enumerate(net.generators):
        if gen.bus not in index:
            raise CaseSemanticError("generator references unknown bus", element=f"gen {g + 1}")

    islands = validate_connectivity(net)
    if islands:
        raise CaseSemanticError(
            f"network splits into {len(islands)} islands", element=f"islands {islands}"
        )


def validate_connectivity(net: PowerNetwork) -> list[set[int]]:
    """Connected components over in-service branches.

    An empty list means the network is fully connected; otherwise each
    component is returned as a set of external bus ids.
    """
    index = net.bus_index
    adj: list[list[int]] = [[] for _ in net.buses]
    for _, br in net.in_service_branches():
        i, j = index[br.from_bus], index[br.to_bus]
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * net.n_bus
    components: list[set[int]] = []
    for start in range(net.n_bus):
        if seen[start]:
            continue
        stack, comp = [start], set()
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.add(net.buses[u].id)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        components.append(comp)
    return components if len(components) > 1 else []


def net_injection_bounds(net: PowerNetwork):
    """Per-bus (lower, upper) net active injection bounds, internal order."""
    import numpy as np

    lo = -net.pd_vector()
    hi = -net.pd_vector()
    index = net.bus_index
    for _, gen in net.in_service_generators():
        i = index[gen.bus]
        lo[i] += gen.pmin
        hi[i] += gen.pmax
    return lo, hi
