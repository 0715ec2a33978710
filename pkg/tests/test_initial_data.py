import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from wavelab.dynamics import IntegratorConfig, simulate
from wavelab.errors import Diverged, NotInClass
from wavelab.initial_data import (Profile, approximate_multipeakon, cell_strengths,
                                  decay_monitor, h1_error, mollify, truncation_radius,
                                  weighted_energy)
from wavelab.peakons import MultipeakonState, energy, evaluate_u

from conftest import PER, REAL, states

GAUSS = Profile("gaussian")


def test_peakon_profile_gives_single_peakon():
    s = approximate_multipeakon(Profile("peakon"), 1, REAL, radius=5.0)
    assert len(s) == 1
    assert s.q[0] == 0.0
    assert s.p[0] == pytest.approx(1.0, abs=1e-4)  # tails beyond |x| = 5 carry e^{-5}
    wide = cell_strengths(Profile("peakon"), [-40.0, 40.0])
    assert wide[0] == pytest.approx(1.0, abs=1e-14)


def test_constant_periodic_profile():
    c = 0.7
    f = Profile("fourier", a0=c)
    s = approximate_multipeakon(f, 8, PER)
    assert np.allclose(s.p, c / 16, atol=1e-15)
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(evaluate_u(s, x) - c)) < 1e-3 * 10  # Riemann error of chi at N = 8
    fine = approximate_multipeakon(f, 64, PER)
    assert np.max(np.abs(evaluate_u(fine, x) - c)) < 1e-3


def test_gaussian_error_decreases():
    errs = []
    for N in (8, 16, 32, 64):
        s = approximate_multipeakon(GAUSS, N, REAL, tol=1e-3, radius_method="tail")
        errs.append(h1_error(GAUSS, s, -8, 8))
    assert all(b < a * 1.05 for a, b in zip(errs, errs[1:]))
    # first-order Riemann sums: halving h roughly halves the error
    assert errs[-1] / errs[-2] == pytest.approx(0.5, abs=0.1)


def test_h1_error_oracle():
    s = MultipeakonState.from_arrays(REAL, [0.3, 0.2], [-0.5, 0.4])

    def dens(x):
        d = GAUSS(np.array([x]))[0] - evaluate_u(s, np.array([x]))[0]
        h = 1e-6
        dp = (GAUSS(np.array([x + h]))[0] - evaluate_u(s, np.array([x + h]))[0]
              - GAUSS(np.array([x - h]))[0] + evaluate_u(s, np.array([x - h]))[0]) / (2 * h)
        return d * d + dp * dp
    ref = math.sqrt(integrate.quad(dens, -6, 6, points=[-0.5, 0.4], limit=200)[0])
    assert h1_error(GAUSS, s, -6, 6) == pytest.approx(ref, rel=1e-6)


def test_strengths_sum_to_half_integral():
    edges = np.linspace(-6, 6, 33)
    p = cell_strengths(GAUSS, edges)
    assert p.sum() == pytest.approx(0.5 * math.sqrt(math.pi), abs=1e-12)


@pytest.mark.parametrize("kind", ["gaussian", "sech2", "peakon"])
def test_profile_derivatives(kind):
    f = Profile(kind, amplitude=1.3, width=0.7, center=0.2)
    x = np.linspace(-3, 3, 61) + 0.013
    h = 1e-5
    assert np.allclose(f(x, 1), (f(x + h) - f(x - h)) / (2 * h), atol=1e-7)
    if kind != "peakon":
        assert np.allclose(f(x, 2), (f(x + h, 1) - f(x - h, 1)) / (2 * h), atol=1e-6)


def test_profile_dict_round_trip():
    f = Profile("fourier", a0=0.1, cos=(0.5,), sin=(0.0, 0.2))
    assert Profile.from_dict(f.to_dict()) == f
    with pytest.raises(ValueError):
        Profile("triangle")


def test_mollify_converges():
    f = Profile("peakon")
    x = np.linspace(-2, 2, 41)
    e1 = np.max(np.abs(mollify(f, 0.1)(x) - f(x)))
    e2 = np.max(np.abs(mollify(f, 0.05)(x) - f(x)))
    assert e2 < e1 < 0.1


def test_weighted_energy_single_peakon():
    s = MultipeakonState.from_arrays(REAL, [1.0], [0.0])
    assert weighted_energy(s, 0.5) == pytest.approx(2 * 2 / 1.5, rel=1e-14)


@given(states(REAL, 4))
def test_weighted_energy_alpha_zero_is_energy(s):
    assert weighted_energy(s, 0.0) == pytest.approx(energy(s), rel=1e-12, abs=1e-14)


def test_weighted_energy_state_oracle():
    s = MultipeakonState.from_arrays(REAL, [1.0, -0.4, 0.7], [-1.2, 0.3, 2.0])
    from wavelab.peakons import evaluate_ux
    dens = lambda x: (evaluate_u(s, np.array([x]))[0] ** 2
                      + evaluate_ux(s, np.array([x]))[0] ** 2) * math.exp(0.5 * abs(x))
    pts = [-60.0, -1.2, 0.0, 0.3, 2.0, 60.0]
    ref = sum(integrate.quad(dens, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
              for a, b in zip(pts[:-1], pts[1:]))
    assert weighted_energy(s, 0.5) == pytest.approx(ref, rel=1e-9)


def test_weighted_energy_gaussian_oracle():
    # independent oracle: Gauss-Hermite-free direct quadrature on a doubled grid
    x = np.linspace(-12, 12, 240001)
    g = np.exp(-x * x)
    dens = (g * g + (2 * x * g) ** 2) * np.exp(0.5 * np.abs(x))
    ref = integrate.simpson(dens, x=x)
    assert weighted_energy(GAUSS, 0.5) == pytest.approx(ref, rel=1e-8)


def test_weighted_energy_diverges():
    slow = Profile("sech2", width=100.0)
    with pytest.raises(Diverged):
        weighted_energy(slow, 0.9)
    with pytest.raises(NotInClass):
        truncation_radius(slow, 0.9, 1e-3)


def test_truncation_radius_methods():
    r_tail = truncation_radius(GAUSS, 0.5, 1e-3, "tail")
    r_w = truncation_radius(GAUSS, 0.5, 1e-3, "weighted")
    assert r_tail <= r_w
    C = weighted_energy(GAUSS, 0.5)
    assert r_w == pytest.approx(math.log(C / 1e-6) / 0.5, rel=1e-12)


@given(st.integers(1, 40))
def test_approximants_uniformly_bounded(N):
    s = approximate_multipeakon(GAUSS, N, REAL, radius=3.0)
    assert weighted_energy(s, 0.5) < 2 * weighted_energy(GAUSS, 0.5) + 1.0


def test_decay_monitor_traveling_peakon():
    s = MultipeakonState.from_arrays(REAL, [1.0], [0.0])
    tr = simulate(s, 3.0, sample_times=np.linspace(0, 3, 13))
    recs = decay_monitor(tr.samples, 0.5)
    assert all(r.ok for r in recs)
    assert recs[-1].I > recs[0].I


def test_decay_monitor_closed_form():
    a = 0.5
    for t in (0.0, 1.0, 2.5):
        s = MultipeakonState.from_arrays(REAL, [1.0], [t])
        ref = integrate.quad(lambda x: 2 * math.exp(-2 * abs(x - t) + a * abs(x)), -np.inf, 0)[0] \
            + integrate.quad(lambda x: 2 * math.exp(-2 * abs(x - t) + a * abs(x)), 0, t)[0] \
            + integrate.quad(lambda x: 2 * math.exp(-2 * abs(x - t) + a * abs(x)), t, np.inf)[0]
        assert weighted_energy(s, a) == pytest.approx(ref, rel=1e-9)


def test_decay_monitor_empty():
    empty = MultipeakonState.from_arrays(REAL, [], [])
    recs = decay_monitor([empty, empty], 0.5)
    assert all(r.I == 0 and r.K == 0 and r.ux_l1 == 0 for r in recs)


def test_decay_monitor_through_collision():
    s = MultipeakonState.from_arrays(REAL, [1.0, -1.0], [-1.0, 1.0])
    tr = simulate(s, 4.0, IntegratorConfig(rel_tol=1e-9), sample_times=np.linspace(0, 4, 41))
    recs = decay_monitor(tr.samples, 0.5)
    assert all(r.ok for r in recs)
