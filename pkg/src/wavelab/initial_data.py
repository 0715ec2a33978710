"""Multipeakon approximation of initial profiles and X_alpha decay diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import Diverged, NotInClass
from .quadrature import gk15
from .peakons import (MultipeakonState, RealLine, _coef_int, convolve_P, energy, segments,
                      ux_l1_norm)

OVERFLOW_GUARD = 1e200


@dataclass(frozen=True)
class Profile:
    """Closed-form (or sampled) initial profile with its first two derivatives.

    kinds: gaussian (amplitude, width, center) = a exp(-((x-c)/s)^2);
    sech2 (amplitude, width, center); peakon (amplitude, center) = a e^{-|x-c|};
    fourier (coefficients a0, cos, sin) for period-1 data;
    samples (xs, values, periodic) with linear interpolation.
    """

    kind: str
    amplitude: float = 1.0
    width: float = 1.0
    center: float = 0.0
    a0: float = 0.0
    cos: tuple = ()
    sin: tuple = ()
    xs: tuple = ()
    values: tuple = ()
    periodic: bool = False

    def __post_init__(self):
        if self.kind not in ("gaussian", "sech2", "peakon", "fourier", "samples"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.kind == "samples":
            if len(self.xs) < 2 or len(self.xs) != len(self.values):
                raise ValueError("samples need matching xs and values (at least two)")
            if np.any(np.diff(self.xs) <= 0):
                raise ValueError("sample abscissae must increase")

    @classmethod
    def from_dict(cls, d: dict) -> "Profile":
        d = dict(d)
        for key in ("cos", "sin", "xs", "values"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        defaults = Profile(kind="gaussian")
        for name in ("amplitude", "width", "center", "a0", "cos", "sin", "xs", "values",
                     "periodic"):
            val = getattr(self, name)
            if val != getattr(defaults, name):
                out[name] = list(val) if isinstance(val, tuple) else val
        return out

    @property
    def kinks(self) -> tuple:
        if self.kind == "peakon":
            return (self.center,)
        if self.kind == "samples":
            return tuple(self.xs)
        return ()

    def __call__(self, x, der: int = 0):
        x = np.asarray(x, dtype=float)
        a, s, c = self.amplitude, self.width, self.center
        if self.kind == "gaussian":
            y = (x - c) / s
            g = a * np.exp(-y * y)
            return (g, -2 * y * g / s, (4 * y * y - 2) * g / s ** 2)[der]
        if self.kind == "sech2":
            y = (x - c) / s
            sech2 = 1.0 / np.cosh(y) ** 2
            th = np.tanh(y)
            return (a * sech2, -2 * a * sech2 * th / s,
                    a * (4 * sech2 * th * th - 2 * sech2 * sech2) / s ** 2)[der]
        if self.kind == "peakon":
            e = a * np.exp(-np.abs(x - c))
            return (e, -np.sign(x - c) * e, e)[der]
        if self.kind == "fourier":
            out = np.full_like(x, self.a0 if der == 0 else 0.0)
            for k, (ak, bk) in enumerate(zip(_pad(self.cos, self.sin), _pad(self.sin, self.cos)), 1):
                w = 2 * math.pi * k
                cs, sn = np.cos(w * x), np.sin(w * x)
                if der == 0:
                    out = out + ak * cs + bk * sn
                elif der == 1:
                    out = out + w * (-ak * sn + bk * cs)
                else:
                    out = out - w * w * (ak * cs + bk * sn)
            return out
        xs, vs = np.asarray(self.xs), np.asarray(self.values)
        if self.periodic:
            x = np.mod(x - xs[0], 1.0) + xs[0]
            xs = np.append(xs, xs[0] + 1.0)
            vs = np.append(vs, vs[0])
        if der == 0:
            return np.interp(x, xs, vs, left=0.0 if not self.periodic else None,
                             right=0.0 if not self.periodic else None)
        if der == 1:
            slopes = np.diff(vs) / np.diff(xs)
            idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
            inside = (x >= xs[0]) & (x < xs[-1])
            return np.where(inside, slopes[idx], 0.0)
        return np.zeros_like(x)


def _pad(a, b):
    return tuple(a) + (0.0,) * max(0, len(b) - len(a))


# -- mollification ----------------------------------------------------------------

def _bump(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


_BUMP_MASS = integrate.quad(lambda y: float(_bump(np.array([y]))[0]), -1, 1)[0]
_MOLL_X, _MOLL_W = np.polynomial.legendre.leggauss(24)


def mollify(f: Profile, eps: float):
    """Callable (x, der) -> (f * rho_eps)^(der)(x) with the C-infinity bump rho."""
    if eps <= 0:
        return f
    w = _MOLL_W * _bump(_MOLL_X) / _BUMP_MASS

    def g(x, der=0):
        x = np.asarray(x, dtype=float)
        shifts = eps * _MOLL_X
        vals = f(x[..., None] - shifts, min(der, 1))
        if der < 2:
            return vals @ w
        # second derivative of the mollified profile via the bump's derivative
        rho_p = -2 * _MOLL_X / (1 - _MOLL_X ** 2) ** 2 * _bump(_MOLL_X) / _BUMP_MASS
        return (vals @ (_MOLL_W * rho_p)) / eps
    g.kinks = ()
    return g


# -- approximation ------------------------------------------------------------------

def cell_strengths(f, edges) -> np.ndarray:
    """p_i = 1/2 int_{cell} (f - f'') = 1/2 [int f - (f'(b) - f'(a))] per cell.

    The right-hand form is exact for profiles whose f'' has point masses (peakons,
    piecewise-linear samples); int f is adaptive Gauss-Kronrod per cell, split at kinks.
    """
    edges = np.asarray(edges, dtype=float)
    kinks = np.asarray(getattr(f, "kinks", ()), dtype=float)
    total = np.zeros(edges.size - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        cuts = np.concatenate([[a], np.sort(kinks[(kinks > a) & (kinks < b)]), [b]])
        total[i] = gk15(f, cuts[:-1], cuts[1:], abs_tol=1e-15, rel_tol=1e-13)[0]
    fp = np.array([_edge_slope(f, x) for x in edges])
    return 0.5 * (total - np.diff(fp))


def _edge_slope(f, x):
    """f'(x), averaged across a kink so a point mass on a cell edge splits evenly."""
    kinks = getattr(f, "kinks", ())
    if any(abs(x - k) < 1e-14 for k in kinks):
        return 0.5 * float(np.sum(f(np.array([x - 1e-12, x + 1e-12]), 1)))
    return float(f(np.array([x]), 1)[0])


def truncation_radius(f, alpha: float, tol: float, method: str = "weighted") -> float:
    """Half-width R of the real-line window outside which the H1 mass of f is below tol.

    weighted: from the X_alpha tail bound ||f||^2_{H1(|x|>R)} <= e^{-alpha R} C^{alpha,f},
    i.e. R = ln(C^{alpha,f} / tol^2) / alpha.  tail: the smallest R on a 1/16 grid with the
    measured tail mass below tol^2.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    center = getattr(f, "center", 0.0)
    if method == "weighted":
        try:
            C = weighted_energy(f, alpha)
        except Diverged as exc:
            raise NotInClass(str(exc)) from exc
        return max(math.log(max(C, tol * tol) / (tol * tol)) / alpha, 1.0) + abs(center)
    if method == "tail":
        R = 1.0
        while _tail(f, center, R) >= tol * tol:
            R += 1.0 / 16
            if R > 1e3:
                raise NotInClass("tail mass does not decay within |x| < 1000")
        return R + abs(center)
    raise ValueError(f"unknown method {method!r}")


def _tail(f, center, R):
    dens = lambda x: float(f(np.array([x]))[0] ** 2 + f(np.array([x]), 1)[0] ** 2)
    right = integrate.quad(dens, center + R, np.inf, limit=200)[0]
    left = integrate.quad(dens, -np.inf, center - R, limit=200)[0]
    return left + right


def approximate_multipeakon(f, N: int, domain=RealLine(), epsilon_mollify: float = 0.0,
                            radius: Optional[float] = None, tol: float = 1e-3,
                            radius_method: str = "weighted") -> MultipeakonState:
    """Riemann-sum multipeakon: N peakons at cell midpoints, strengths = cell integrals of (f-f'')/2.

    Periodic: cells of [0, 1).  Real line: N cells of [-R, R] (R from ``radius`` or
    ``truncation_radius(f, domain.alpha, tol, radius_method)``).
    """
    if N < 1:
        raise ValueError("N must be positive")
    g = mollify(f, epsilon_mollify)
    if domain.periodic:
        edges = np.linspace(0.0, 1.0, N + 1)
    else:
        R = radius if radius is not None else truncation_radius(f, domain.alpha, tol, radius_method)
        if not R > 0:
            raise ValueError("radius must be positive")
        edges = np.linspace(-R, R, N + 1)
    p = cell_strengths(g, edges)
    q = 0.5 * (edges[:-1] + edges[1:])
    return MultipeakonState.from_arrays(domain, p, q)


def h1_error(f, state: MultipeakonState, lo: float, hi: float, nodes: int = 32) -> float:
    """||f - g||_{H1(lo, hi)} by Gauss-Legendre on the pieces between peaks and kinks."""
    from .peakons import evaluate_u, evaluate_ux
    cuts = np.unique(np.concatenate([[lo, hi], state.q, getattr(f, "kinks", ())]))
    cuts = cuts[(cuts >= lo) & (cuts <= hi)]
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = cuts[:-1, None], cuts[1:, None]
    pts = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
    wts = (0.5 * (b - a) * w).ravel()
    du = f(pts) - evaluate_u(state, pts)
    dux = f(pts, 1) - evaluate_ux(state, pts)
    return math.sqrt(float(np.sum(wts * (du * du + dux * dux))))


# -- weighted energy ------------------------------------------------------------------

def weighted_energy(obj, alpha: float) -> float:
    """C^{alpha,u} = int (u^2 + u_x^2) e^{alpha |x|} dx (closed form for multipeakons)."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if isinstance(obj, MultipeakonState):
        if obj.domain.periodic:
            raise ValueError("weighted energy is defined on the real line")
        val = _weighted_state(obj, alpha)
    else:
        val = _weighted_profile(obj, alpha)
    if not np.isfinite(val) or val > OVERFLOW_GUARD:
        raise Diverged(f"weighted energy exceeds {OVERFLOW_GUARD:g}")
    return val


def _weighted_state(state, alpha):
    if len(state) == 0:
        return 0.0
    s = segments(state)
    tot = 0.0
    # y < 0 carries the weight e^{-alpha y}, y > 0 the weight e^{alpha y}
    halves = ((-1.0, s.L, np.minimum(s.R, 0.0)), (1.0, np.maximum(s.L, 0.0), s.R))
    for sgn, lo, hi in halves:
        a, b = lo - s.c, hi - s.c
        k = sgn * alpha * s.c
        tot += float(np.sum(_coef_int(2 * s.A ** 2, k, 2.0 + sgn * alpha, a, b)))
        tot += float(np.sum(_coef_int(2 * s.B ** 2, k, -2.0 + sgn * alpha, a, b)))
    return tot


def _weighted_profile(f, alpha):
    pts = sorted(set([0.0, *getattr(f, "kinks", ())]))

    def dens(x):
        v = float((f(np.array([x])) ** 2 + f(np.array([x]), 1) ** 2)[0])
        return 0.0 if v == 0.0 else math.exp(min(math.log(v) + alpha * abs(x), 700.0))
    edges = [-np.inf, *pts, np.inf]
    tot = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(dens, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
        tot += val
    return tot


# -- decay monitor -----------------------------------------------------------------------

@dataclass(frozen=True)
class DecayRecord:
    t: float
    I: float
    K: float
    ux_l1: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.I <= self.bound * (1 + 1e-9)


def decay_monitor(states: Sequence[MultipeakonState], alpha: float,
                  x_samples: Optional[np.ndarray] = None) -> list:
    """I(t), K(t) = sup_x P e^{alpha|x|} (sampled), ||u_x||_L1 and the a-priori bound on I.

    The bound is (C^{alpha,u0} + E/2) exp(4 sqrt(E) t / (1 - alpha^2)), t measured from the
    first state.  Energy atoms are counted in I with weight e^{alpha|x|}.
    """
    states = list(states)
    if not states:
        return []
    if x_samples is None:
        x_samples = np.linspace(-20.0, 20.0, 801)
    u0 = states[0]
    E = energy(u0)
    c0 = _with_atoms(u0, alpha)
    out = []
    for st in states:
        I = _with_atoms(st, alpha)
        if len(st):
            P, _ = convolve_P(st, x_samples)
            K = float(np.max(P * np.exp(alpha * np.abs(x_samples))))
        else:
            K = 0.0
        dt = abs(st.time - u0.time)
        bound = (c0 + 0.5 * E) * math.exp(4 * math.sqrt(E) * dt / (1 - alpha * alpha))
        out.append(DecayRecord(st.time, I, K, ux_l1_norm(st) if len(st) else 0.0, bound))
    return out


def _with_atoms(state, alpha):
    return weighted_energy(state, alpha) + sum(m * math.exp(alpha * abs(x))
                                               for x, m in state.energy_atoms)
