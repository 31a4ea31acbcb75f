import math

import numpy as np
import pytest

from lossopf.solver import CapabilityError, Model, Sense, Status


def test_add_variables_indices_stable():
    m = Model()
    i = m.add_variable("p1", 0, 2, cost=10.0)
    j = m.add_variable("th1", -math.inf, math.inf)
    rng = m.add_variables((f"f{k}", -1, 1, 0.0) for k in range(100))
    assert i == 0 and j == 1
    assert list(rng) == list(range(2, 102))


def test_reversed_bounds_rejected():
    m = Model()
    with pytest.raises(ValueError, match="reversed"):
        m.add_variable("x", 2.0, 1.0)


def test_unknown_variable_index_rejected():
    m = Model()
    m.add_variable("x", 0, 1)
    with pytest.raises(ValueError, match="unknown variable"):
        m.add_linear_constraint({5: 1.0}, Sense.LE, 1.0)


def test_empty_row_infeasible_flagged():
    m = Model()
    m.add_variable("x", 0, 1, cost=1.0)
    m.add_linear_constraint({}, Sense.GE, 1.0)
    res = m.solve()
    assert res.status is Status.INFEASIBLE
    assert "empty row" in res.detail


def test_duplicate_rows_accepted():
    m = Model()
    x = m.add_variable("x", 0, 2, cost=1.0)
    m.add_linear_constraint({x: 1.0}, Sense.GE, 1.0)
    m.add_linear_constraint({x: 1.0}, Sense.GE, 1.0)
    assert m.num_linear_constraints == 2
    res = m.solve()
    assert res.status is Status.OPTIMAL and res.x[x] == pytest.approx(1.0)


def test_basic_lp_and_duals_highs():
    m = Model(backend="highs")
    x = m.add_variable("x", 0, 2, cost=1.0)
    c = m.add_linear_constraint({x: 1.0}, Sense.GE, 1.0)
    res = m.solve()
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(1.0)
    assert res.duals[c] == pytest.approx(1.0)  # d(obj)/d(rhs)


def test_dual_sign_le_and_eq_match_between_backends():
    for backend in ("highs", "clarabel"):
        m = Model(backend=backend)
        x = m.add_variable("x", -10, 10, cost=-1.0)  # maximize x
        c_le = m.add_linear_constraint({x: 1.0}, Sense.LE, 2.0)
        res = m.solve()
        assert res.objective == pytest.approx(-2.0, abs=1e-7)
        assert res.duals[c_le] == pytest.approx(-1.0, abs=1e-6), backend

        m2 = Model(backend=backend)
        y = m2.add_variable("y", -10, 10, cost=3.0)
        c_eq = m2.add_linear_constraint({y: 1.0}, Sense.EQ, 1.5)
        res2 = m2.solve()
        assert res2.objective == pytest.approx(4.5, abs=1e-6)
        assert res2.duals[c_eq] == pytest.approx(3.0, abs=1e-6), backend


def test_infeasible_and_unbounded():
    m = Model()
    x = m.add_variable("x", -math.inf, math.inf, cost=1.0)
    m.add_linear_constraint({x: 1.0}, Sense.GE, 2.0)
    m.add_linear_constraint({x: 1.0}, Sense.LE, 1.0)
    assert m.solve().status is Status.INFEASIBLE

    m2 = Model()
    m2.add_variable("x", -math.inf, math.inf, cost=1.0)
    assert m2.solve().status is Status.UNBOUNDED


def test_rotated_quadratic_scale_zero_is_linear():
    m = Model()
    u = m.add_variable("u", -5, 5, cost=1.0)
    m.add_rotated_quadratic(u, {u: 1.0}, scale=0.0)
    assert m.num_conic_constraints == 0
    res = m.solve()
    assert res.x[u] == pytest.approx(0.0)
    assert res.backend == "highs"


def test_rotated_quadratic_feasible_at_equality():
    # minimize pb subject to pf fixed at 1: optimum pb = r*pf^2 - pf
    m = Model()
    pf = m.add_variable("pf", 1.0, 1.0)
    pb = m.add_variable("pb", -2.0, 2.0, cost=1.0)
    m.add_rotated_quadratic(pf, {pf: 1.0, pb: 1.0}, scale=0.01)
    res = m.solve()
    assert res.status is Status.OPTIMAL
    assert res.x[pb] == pytest.approx(-0.99, abs=1e-7)


def test_rotated_quadratic_infeasible_point():
    # pf = 1, pb = 0 violates pf + pb >= r pf^2 ... only if r > 1; here pin
    # pb = -1 so the required loss 0.01 cannot be supplied
    m = Model()
    pf = m.add_variable("pf", 1.0, 1.0)
    pb = m.add_variable("pb", -1.0, -1.0)
    m.add_rotated_quadratic(pf, {pf: 1.0, pb: 1.0}, scale=0.01)
    assert m.solve().status is Status.INFEASIBLE


def test_capability_honesty():
    m = Model(backend="highs")
    pf = m.add_variable("pf", 0, 1)
    m.add_rotated_quadratic(pf, {pf: 1.0}, scale=0.5)
    with pytest.raises(CapabilityError):
        m.solve()


def test_static_mode_expands_tangent_rows():
    m = Model(backend="static", static_tangents=16)
    pf = m.add_variable("pf", -2.0, 2.0)
    pb = m.add_variable("pb", -2.0, 2.0, cost=1.0)
    before = m.num_linear_constraints
    m.add_rotated_quadratic(pf, {pf: 1.0, pb: 1.0}, scale=0.5)
    assert m.num_linear_constraints - before == 16
    assert m.num_conic_constraints == 0
    # fix pf = 1; true optimum pb = 0.5*1 - 1; the tangent fan is an outer
    # approximation, so pb may undershoot by at most r*(spacing/2)^2
    m.add_linear_constraint({pf: 1.0}, Sense.EQ, 1.0)
    res = m.solve()
    spacing = 4.0 / 15
    assert res.x[pb] <= -0.5 + 1e-9
    assert res.x[pb] >= -0.5 - 0.5 * (spacing / 2) ** 2 - 1e-9


def test_static_mode_needs_finite_span():
    m = Model(backend="static")
    pf = m.add_variable("pf", -math.inf, math.inf)
    with pytest.raises(CapabilityError, match="finite span"):
        m.add_rotated_quadratic(pf, {pf: 1.0}, scale=0.5)


def test_lazy_addition_objective_monotone():
    m = Model()
    x = m.add_variable("x", 0, 10, cost=1.0)
    y = m.add_variable("y", 0, 10, cost=1.0)
    m.add_linear_constraint({x: 1.0, y: 1.0}, Sense.GE, 1.0)
    z0 = m.solve().objective
    m.add_linear_constraint({x: 1.0}, Sense.GE, 0.8)
    z1 = m.solve().objective
    m.add_linear_constraint({y: 1.0}, Sense.GE, 0.7)
    z2 = m.solve().objective
    assert z1 >= z0 - 1e-9
    assert z2 >= z1 - 1e-9


def test_determinism_identical_sequences():
    def build():
        m = Model()
        xs = [m.add_variable(f"x{k}", 0, 5, cost=1.0 + 0.1 * k) for k in range(20)]
        for k in range(19):
            m.add_linear_constraint({xs[k]: 1.0, xs[k + 1]: 1.0}, Sense.GE, 1.0)
        return m.solve()

    a, b = build(), build()
    assert a.status is b.status
    assert abs(a.objective - b.objective) <= 1e-9
    assert a.x.tobytes() == b.x.tobytes()


def test_warm_start_contract():
    import dataclasses

    m = Model()
    x = m.add_variable("x", 0, 2, cost=1.0)
    m.add_linear_constraint({x: 1.0}, Sense.GE, 1.0)
    first = m.solve()
    m.add_linear_constraint({x: 1.0}, Sense.GE, 1.2)
    second = m.solve(warm_start=first)
    assert second.status is Status.OPTIMAL
    assert second.objective >= first.objective - 1e-9
    assert second.warm_start_used is False  # no engine here accepts a basis

    bad = Model()
    bad.add_variable("x", 0, 1)
    with pytest.raises(ValueError, match="warm start"):
        bad.solve(warm_start=dataclasses.replace(first, x=np.zeros(99)))


def test_objective_offset_in_result():
    m = Model()
    x = m.add_variable("x", 1, 1, cost=2.0)
    m.add_objective_offset(17.0)
    assert m.solve().objective == pytest.approx(19.0)


def test_lp_export_linear_and_quadratic():
    m = Model(name="demo")
    pf = m.add_variable("pf", -1.5, 1.5, cost=0.0)
    pb = m.add_variable("pb", -1.5, 1.5, cost=1.0)
    m.add_linear_constraint({pf: 1.0, pb: -2.0}, Sense.LE, 0.5)
    m.add_rotated_quadratic(pf, {pf: 1.0, pb: 1.0}, scale=0.01)
    text = m.to_lp_text()
    assert "Minimize" in text and "Subject To" in text and "End" in text
    assert "c0:" in text and "<= 0.5" in text
    assert "qc0:" in text and "^2" in text
    assert "-1.5 <= pf <= 1.5" in text


def test_clarabel_pure_lp_agrees_with_highs():
    def build(backend):
        m = Model(backend=backend)
        x = m.add_variable("x", 0, 4, cost=2.0)
        y = m.add_variable("y", 0, 4, cost=3.0)
        m.add_linear_constraint({x: 1.0, y: 1.0}, Sense.GE, 3.0)
        m.add_linear_constraint({x: 1.0, y: -1.0}, Sense.LE, 1.0)
        return m.solve()

    a = build("highs")
    b = build("clarabel")
    assert a.objective == pytest.approx(b.objective, abs=1e-6)
