import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from wavelab.dynamics import simulate
from wavelab.errors import CollisionInWindow, DomainMismatch, PlanInvalid
from wavelab.metric import (LIPSCHITZ_CONSTANT, MetricOptions, MetricPoint, PlanKnots,
                            characteristic_plan, cost, d_diamond, distance, lipschitz_bound,
                            phi_violations, phi_weights, stability_fit)
from wavelab.peakons import MultipeakonState, evaluate_u, evaluate_ux, l1_distance

from conftest import PER, REAL

ONE = MultipeakonState.from_arrays(REAL, [1.0], [0.0])
EMPTY = MultipeakonState.from_arrays(REAL, [], [])


def oracle_cost(u, v, psi, lo=-40.0, hi=40.0):
    """Independent integrand built from evaluate_u/evaluate_ux and scipy quad."""
    def dens(x):
        y = float(psi(x))
        ux = evaluate_ux(u, np.array([x]))[0]
        vx = evaluate_ux(v, np.array([y]))[0]
        mu, mv = 1 + ux * ux, (1 + vx * vx) * float(psi.slope(x))
        a = MetricPoint.of(x, evaluate_u(u, np.array([x]))[0], ux)
        b = MetricPoint.of(y, evaluate_u(v, np.array([y]))[0], vx)
        return d_diamond(a, b) * min(mu, mv) + abs(mu - mv)
    pts = sorted(set(list(psi.x) + list(u.q) + [float(psi.inverse()(q)) for q in v.q]))
    edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
    return sum(integrate.quad(dens, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
               for a, b in zip(edges[:-1], edges[1:]))


@pytest.mark.parametrize("a,b,expected", [
    ((0, 0, 0.3), (0, 0, 0.3), 0.0),
    ((0, 0, 0.1), (0, 0, 2 * math.pi - 0.1), 0.2),
    ((0, 0, 0), (5, 0, 0), 1.0),
    ((0.1, 0.2, 0.0), (0.0, 0.0, 0.3), 0.6),
])
def test_d_diamond_table(a, b, expected):
    assert d_diamond(MetricPoint(*a), MetricPoint(*b)) == pytest.approx(expected, abs=1e-15)


def test_phi_weights():
    psi = PlanKnots.identity(-5, 5)
    p1, p2 = phi_weights(ONE, ONE, psi, np.linspace(-3, 3, 7))
    assert np.all(p1 == 1) and np.all(p2 == 1)
    flat = MultipeakonState.from_arrays(REAL, [], [])
    double = PlanKnots((-5.0, 0.0, 0.5, 5.0), (-5.0, 0.0, 1.0, 5.0))  # slope 2 on (0, 0.5)
    p1, p2 = phi_weights(flat, flat, double, np.array([0.25]))
    assert (p1[0], p2[0]) == (1.0, 0.5)


@given(st.floats(-3, 3), st.floats(0.05, 2.0))
def test_phi_max_is_one(x, slope):
    psi = PlanKnots((-5.0, -4.0, 5.0), (-5.0, -5.0 + slope, 5.0))
    u = MultipeakonState.from_arrays(REAL, [0.8, -0.3], [-1.0, 0.5])
    p1, p2 = phi_weights(u, ONE, psi, np.array([x]))
    assert max(p1[0], p2[0]) == 1.0


@pytest.mark.parametrize("x,y,periodic", [
    ((0.0, 1.0, 2.0), (0.0, 1.5, 1.2), False),       # not monotone
    ((0.0, 1.0), (0.0, 1.1), False),                 # end off the diagonal
    ((0.0, 0.5, 1.0), (0.1, 0.5, 1.2), True),        # wider than one period
    ((0.0, 1.0), (0.0,), False),
])
def test_plan_invalid(x, y, periodic):
    with pytest.raises(PlanInvalid):
        PlanKnots(x, y, periodic)


def test_plan_inverse_compose():
    p = PlanKnots((-2.0, 0.0, 1.0, 2.0), (-2.0, 0.5, 1.2, 2.0))
    s = np.linspace(-3, 3, 31)
    assert np.allclose(p.inverse()(p(s)), s, atol=1e-14)
    q = PlanKnots((-1.0, 0.3, 1.0), (-1.0, -0.2, 1.0))
    assert np.allclose(p.compose(q)(s), q(p(s)), atol=1e-14)
    per = PlanKnots((0.1, 0.4), (0.15, 0.6), True)
    assert np.allclose(per(s + 1) - per(s), 1.0, atol=1e-14)


def test_cost_identity_zero():
    u = MultipeakonState.from_arrays(REAL, [1.0, -0.5], [-1.0, 1.0])
    assert cost(u, u, PlanKnots.identity(-3, 3)) < 1e-12


def test_cost_against_empty():
    val = cost(ONE, EMPTY, PlanKnots.identity(-3, 3))
    assert val == pytest.approx(oracle_cost(ONE, EMPTY, PlanKnots.identity(-3, 3)), rel=1e-9)
    assert val > 1.0  # excess mass int u_x^2 = 1 plus the matched part


def test_cost_shift_plan():
    d = 0.1
    v = MultipeakonState.from_arrays(REAL, [1.0], [d])
    psi = PlanKnots((-2.0, -1.0, 1.0, 2.0), (-2.0, -1.0 + d, 1.0 + d, 2.0))
    val = cost(ONE, v, psi)
    assert val == pytest.approx(oracle_cost(ONE, v, psi), rel=1e-9)
    # where psi is the translation, only |dx| = d contributes: d int (1 + u_x^2)
    core = oracle_cost(ONE, v, psi, -1.0, 1.0)
    assert core == pytest.approx(d * (2.0 + 1.0 - math.exp(-2.0)), rel=1e-9)
    assert val < distance(ONE, v).J + 0.01


def test_cost_periodic_matches_oracle():
    u = MultipeakonState.from_arrays(PER, [1.0, -0.4], [0.2, 0.7])
    v = MultipeakonState.from_arrays(PER, [0.9], [0.3])
    psi = PlanKnots((0.0, 0.5), (0.05, 0.6), True)
    val = cost(u, v, psi)
    assert val == pytest.approx(oracle_cost(u, v, psi, 0.0, 1.0), rel=1e-8)


def test_phi_identity_holds():
    u = MultipeakonState.from_arrays(REAL, [1.0, -0.4], [-0.5, 1.0])
    v = MultipeakonState.from_arrays(REAL, [0.8], [0.2])
    assert phi_violations(u, v, PlanKnots((-3.0, 0.0, 3.0), (-3.0, 0.4, 3.0))) == 0


def test_distance_self_and_empty():
    u = MultipeakonState.from_arrays(REAL, [1.0, -0.5], [-1.0, 1.0])
    assert distance(u, u).J < 1e-9
    assert distance(EMPTY, EMPTY).J == 0.0
    with pytest.raises(DomainMismatch):
        distance(u, MultipeakonState.from_arrays(PER, [1.0], [0.5]))


def test_distance_beats_identity_and_shift():
    v = MultipeakonState.from_arrays(REAL, [1.0], [0.3])
    res = distance(ONE, v)
    assert res.J <= cost(ONE, v, PlanKnots.identity(-5, 5)) + 1e-12
    assert res.J == pytest.approx(cost(ONE, v, res.plan), rel=1e-12)
    assert res.phi_violations == 0
    assert set(res.to_dict()) >= {"J", "plan", "iterations", "phi_violations"}


def test_distance_periodic_shift_is_cheap():
    u = MultipeakonState.from_arrays(PER, [1.0], [0.2])
    v = MultipeakonState.from_arrays(PER, [1.0], [0.25])
    shift = PlanKnots((0.0,), (0.05,), True)
    assert distance(u, v).J <= cost(u, v, shift) * (1 + 1e-9)


def test_distance_symmetric(rng):
    from wavelab.peakons import random_state
    for _ in range(4):
        u, v = random_state(rng, REAL, 3), random_state(rng, REAL, 3)
        assert abs(distance(u, v).J - distance(v, u).J) < 1e-6


def test_sandwich_upper_bound(rng):
    from wavelab.peakons import random_state
    for _ in range(5):
        u = random_state(rng, REAL, 3, energy_max=4.0)
        v = random_state(rng, REAL, 3, energy_max=4.0)
        J = distance(u, v).J
        assert J <= lipschitz_bound(u, v)
        assert l1_distance(u, v) / J < 10.0
    assert LIPSCHITZ_CONSTANT == pytest.approx(8 * math.pi + 3)


def test_characteristic_plan_identity():
    u = MultipeakonState.from_arrays(REAL, [1.0, 0.5], [-1.0, 1.0])
    tr = simulate(u, 1.0)
    psi0 = PlanKnots.identity(-3, 3, 5)
    assert characteristic_plan(tr, tr, psi0, 0.0) == psi0
    psi = characteristic_plan(tr, tr, psi0, 1.0)
    s = np.linspace(-5, 5, 41)
    assert np.allclose(psi(s), s, atol=1e-9)


def test_characteristic_plan_collision():
    tr = simulate(MultipeakonState.from_arrays(REAL, [1.0, -1.0], [-1.0, 1.0]), 3.0)
    with pytest.raises(CollisionInWindow):
        characteristic_plan(tr, tr, PlanKnots.identity(-3, 3), 3.0)


def test_characteristic_cost_grows_exponentially():
    u = MultipeakonState.from_arrays(REAL, [1.0, 0.5], [-1.0, 1.0])
    v = MultipeakonState.from_arrays(REAL, [1.05, 0.5], [-1.0, 1.05])
    tu, tv = simulate(u, 1.0), simulate(v, 1.0)
    psi0 = distance(u, v).plan
    ts = np.linspace(0, 1, 6)
    Js = [cost(tu.state_at(t), tv.state_at(t), characteristic_plan(tu, tv, psi0, t)) for t in ts]
    fit = stability_fit(ts, Js)
    assert math.isfinite(fit["c2"])
    assert all(J <= Js[0] * math.exp(fit["c2"] * t) * (1 + 1e-9) for t, J in zip(ts, Js))


def test_stability_fit_exact_exponential():
    ts = np.linspace(0, 1, 11)
    fit = stability_fit(ts, 0.3 * np.exp(0.7 * ts))
    assert fit["c2"] == pytest.approx(0.7, abs=1e-12)
    assert fit["slope"] == pytest.approx(0.7, abs=1e-12)
    assert fit["residual"] < 1e-12
