import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from wavelab.broadwell import (ORIGINAL, RESCALED, BroadwellConfig, BroadwellGrid, ConstKappa,
                               LogT, RescaleMap, a0_constant, blowup_rate_monitor,
                               collision_term, decay_bounds, epsilon, functional, interp_matrix,
                               q14, q14_bound, read_snapshot, rescale, run_broadwell, step,
                               unrescale, weight_inequality, write_snapshot)
from wavelab.errors import CFLViolation, FrameMismatch, PastBlowup, WeightInvalid

from conftest import mms_error


def test_collision_term_examples():
    assert collision_term(2.0, 2.0, 2.0, 2.0) == (0.0, 0.0, 0.0, 0.0)
    assert collision_term(1, 2, 3, 4) == (5, -5, 5, -5)


def test_collision_term_sums_to_zero(rng):
    w = rng.uniform(0, 10, (4, 10 ** 4))
    g = np.array(collision_term(*w))
    assert np.max(np.abs(g.sum(axis=0))) == 0.0


@pytest.mark.parametrize("order", ["cubic", "linear"])
def test_interp_matrix_reproduces_polynomials(order):
    n, h = 32, 2.0 / 31
    nodes = np.linspace(-1, 1, n)
    frac = np.array([3.3, 10.5, 20.01])
    M = interp_matrix(frac, n, order)
    deg = 3 if order == "cubic" else 1
    for k in range(deg + 1):
        assert np.allclose(M @ nodes ** k, (-1 + frac * h) ** k, atol=1e-13)


def test_interp_rows_sum_to_one_periodic():
    M = interp_matrix(np.array([-0.4, 7.25, 31.9]), 32, "cubic", periodic=True)
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-15)


def test_original_uniform_is_stationary():
    g = BroadwellGrid.uniform(ORIGINAL, 32, 32, [0.7] * 4, periodic=True)
    dt = 0.5 * g.cfl_limit()
    for _ in range(50):
        g = step(g, dt)
    assert np.max(np.abs(g.w - 0.7)) < 1e-13


def test_rescaled_uniform_decays():
    a = 0.8
    g = BroadwellGrid.uniform(RESCALED, 64, 64, [a] * 4)
    n = int(math.ceil(2.0 / g.cfl_limit()))
    for _ in range(n):
        g = step(g, 2.0 / n)
    assert np.max(np.abs(g.w - a * math.exp(-g.t))) < 1e-6 * a


def test_cfl_violation():
    g = BroadwellGrid.uniform(RESCALED, 16, 16, [1.0] * 4)
    with pytest.raises(CFLViolation):
        step(g, 2 * g.cfl_limit())


def test_manufactured_convergence():
    e = [mms_error(n) for n in (16, 32, 64)]
    orders = np.log2(np.array(e[:-1]) / e[1:])
    assert np.all(orders > 1.8)


def test_periodic_mass_conserved(rng):
    g = BroadwellGrid(ORIGINAL, rng.uniform(0.2, 1.0, (4, 24, 24)), periodic=True)
    m0 = g.mass()
    for _ in range(50):
        g = step(g, 0.5 * g.cfl_limit())
    assert abs(g.mass() - m0) < 1e-12 * m0
    assert g.clipped == 0.0


def test_rescale_constant():
    g = BroadwellGrid.uniform(ORIGINAL, 41, 41, [1.0] * 4, t=0.5, bounds=(-2, 2, -2, 2))
    r = rescale(g, RescaleMap(1.0))
    assert r.frame == RESCALED and r.t == pytest.approx(-math.log(0.5))
    assert np.allclose(r.w, 0.5, atol=1e-15)


def test_rescale_round_trip(rng):
    rmap = RescaleMap(1.0, (0.1, -0.2))
    g = BroadwellGrid(RESCALED, rng.uniform(0, 1, (4, 17, 17)), t=0.7)
    back = rescale(unrescale(g, rmap), rmap)
    assert np.max(np.abs(back.w - g.w)) < 1e-12


def test_rescale_time_and_errors():
    rmap = RescaleMap(1.0)
    for tau in (0.0, 0.5, 3.0):
        assert rmap.time(tau) == pytest.approx(1 - math.exp(-tau), abs=1e-15)
    with pytest.raises(PastBlowup):
        rmap.tau(1.0)
    g = BroadwellGrid.uniform(RESCALED, 8, 8, [1.0] * 4)
    with pytest.raises(FrameMismatch):
        rescale(g, rmap)
    with pytest.raises(FrameMismatch):
        unrescale(BroadwellGrid.uniform(ORIGINAL, 8, 8, [1.0] * 4), rmap)


def test_q14_zero_and_closed_form():
    g = BroadwellGrid.uniform(RESCALED, 65, 65, [0.0, 0.3, 0.3, 0.0])
    assert q14(g, 0.0, ConstKappa(1.0)) == 0.0
    c, kappa = 0.4, 1.0
    g = BroadwellGrid.uniform(RESCALED, 257, 65, [c, 0.0, 0.0, c])
    eps = epsilon(kappa)
    exact = c * (4 - 2 * eps * math.sinh(2 * kappa) / kappa)
    quad = c * integrate.quad(lambda x: 2 - eps * (math.exp(2 * kappa * x)
                                                   + math.exp(-2 * kappa * x)), -1, 1)[0]
    assert quad == pytest.approx(exact, rel=1e-13)
    assert q14(g, 0.3, ConstKappa(kappa)) == pytest.approx(exact, rel=1e-4)


def test_q14_weight_invalid():
    g = BroadwellGrid.uniform(RESCALED, 16, 16, [2.0] * 4)
    with pytest.raises(WeightInvalid):
        q14(g, 0.0, ConstKappa(1.0))
    with pytest.raises(WeightInvalid):
        functional(replace(g, t=1.0), "Q14", 0.0, LogT(0.2))


def test_q14_decreases_along_moving_lines():
    a = 0.5
    g = BroadwellGrid.uniform(RESCALED, 48, 48, [a] * 4)
    mode = ConstKappa(a)
    y = -0.5
    vals = [q14(g, y, mode)]
    dt = 0.5 * g.cfl_limit()
    for _ in range(20):
        g = step(g, dt)
        y = -1 + (y + 1) * math.exp(dt)   # dy/dt = y + 1
        vals.append(q14(g, y, mode))
    assert all(b <= a_ + 1e-12 for a_, b in zip(vals, vals[1:]))


def test_decay_bounds_uniform_and_zero():
    cfg = BroadwellConfig(frame=RESCALED, nx=32, ny=32, t_end=1.0, init="uniform",
                          amplitude=0.6, sample_every=5)
    run = run_broadwell(cfg, keep_grids=True)
    assert decay_bounds(run.grids, 0.6).ok
    zero = [BroadwellGrid.uniform(RESCALED, 8, 8, [0.0] * 4)]
    assert decay_bounds(zero, 1.0).ok


def test_a0_constant():
    t0 = math.exp(2.5)
    expected = max(2 * (0.2 * math.log(t0)) * t0 ** 0.2, 8 * 0.4)
    assert a0_constant(0.2, t0) == pytest.approx(expected, rel=1e-15)


def test_weight_inequality_grid():
    x = np.linspace(-1, 1, 1000)
    for k in (0.5, 0.75, 1.0, 3.0, 10.0):
        assert np.all(weight_inequality(k, x))


def test_blowup_monitor_examples():
    s = np.logspace(-2, -300, 400)
    low = blowup_rate_monitor(zip(-s, 1 / s), 0.0)
    assert low.verdict() == "below"
    ll = np.log(np.abs(np.log(s)))
    high = blowup_rate_monitor(zip(-s, ll / (2 * s)), 0.0)
    assert high.verdict() == "exceeds"
    assert np.allclose(high.rate[np.isfinite(high.rate)], 0.5)
    with pytest.raises(PastBlowup):
        blowup_rate_monitor([(1.0, 1.0)], 1.0)


def test_blowup_monitor_decaying_run():
    cfg = BroadwellConfig(frame=RESCALED, nx=24, ny=24, t_end=2.0, sample_every=4)
    run = run_broadwell(cfg)
    # uniform decay: sup w(tau) = e^{-tau}; in original variables sup u = e^{-tau}/(t*-t) = 1
    series = [(1 - math.exp(-r[0]), max(r[2:6]) * math.exp(r[0])) for r in run.rows]
    rep = blowup_rate_monitor(series[1:], 1.0)
    assert rep.verdict() == "below"


def test_snapshot_round_trip(tmp_path, rng):
    g = BroadwellGrid(RESCALED, rng.uniform(0, 1, (4, 9, 7)), t=1.25)
    path = tmp_path / "g.bwg"
    write_snapshot(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"BWG1" and len(raw) == 24 + 8 * 4 * 9 * 7
    back = read_snapshot(path)
    assert back.frame == RESCALED and back.t == 1.25
    assert np.array_equal(back.w, g.w)


def test_run_csv_columns_and_determinism():
    cfg = BroadwellConfig(frame=RESCALED, nx=16, ny=16, t_end=0.5, init="random")
    a = run_broadwell(cfg, np.random.default_rng(3)).to_csv()
    b = run_broadwell(cfg, np.random.default_rng(3)).to_csv()
    assert a == b
    assert a.splitlines()[0].split(",")[-1] == "bound_margin"
