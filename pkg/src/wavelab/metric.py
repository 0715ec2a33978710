"""Optimal-transport distance J between multipeakon profiles.

A transport plan is a strictly increasing piecewise-linear map psi given by its
knots.  Its cost is

    J^psi(u, v) = int d((x, u, theta_u), (psi, v o psi, theta_v o psi)) min(m_u, m_v) dx
                  + int |m_u - m_v| dx,

with m_u = 1 + u_x^2, m_v = (1 + v_x^2 o psi) psi' and theta = 2 arctan(u_x).  The
distance is the smallest cost the optimizer finds, hence an upper bound on the infimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import CollisionInWindow, DomainMismatch, PlanInvalid
from .peakons import PER_A, PER_B, MultipeakonState, h1_distance, h1_norm, l1_distance
from .quadrature import gk15

TWO_PI = 2.0 * math.pi
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TAIL = 40.0  # real line: identity-plan tails integrated this far past the outermost cut


@dataclass(frozen=True)
class MetricPoint:
    x: float
    u: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @classmethod
    def of(cls, x, u, ux):
        return cls(x, u, 2.0 * math.atan(ux))


def _arc(t1, t2):
    d = np.mod(np.abs(t1 - t2), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def _diamond(x1, u1, t1, x2, u2, t2):
    return np.minimum(np.abs(x1 - x2) + np.abs(u1 - u2) + _arc(t1, t2), 1.0)


def d_diamond(a: MetricPoint, b: MetricPoint) -> float:
    """min(|x - x'| + |u - u'| + shorter arc |theta - theta'|, 1)."""
    return float(_diamond(a.x, a.u, a.theta, b.x, b.u, b.theta))


# -- plans ------------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanKnots:
    """Piecewise-linear increasing map through the knots (x_k, y_k).

    Real line: the end knots lie on the diagonal and psi is the identity outside them.
    Periodic: knots cover one period, x_last < x_0 + 1, y_last < y_0 + 1, and
    psi(x + 1) = psi(x) + 1.
    """

    x: tuple
    y: tuple
    periodic: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", tuple(float(v) for v in x))
        object.__setattr__(self, "y", tuple(float(v) for v in y))
        if x.size != y.size or x.size < (1 if self.periodic else 2):
            raise PlanInvalid("need matching knot lists (two or more on the real line)")
        if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)):
            raise PlanInvalid("knots must be finite")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise PlanInvalid("knots must be strictly increasing in both coordinates")
        if self.periodic:
            if not (x[-1] < x[0] + 1.0 and y[-1] < y[0] + 1.0):
                raise PlanInvalid("periodic knots must span less than one period")
        else:
            for a, b in ((x[0], y[0]), (x[-1], y[-1])):
                if abs(a - b) > 1e-12 * (1.0 + abs(a)):
                    raise PlanInvalid("real-line plans must start and end on the diagonal")

    @classmethod
    def from_pairs(cls, pairs, periodic=False):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), periodic)

    @classmethod
    def identity(cls, lo=0.0, hi=1.0, n=2, periodic=False):
        if periodic:
            xs = lo + np.arange(n) / n
        else:
            xs = np.linspace(lo, hi, n)
        return cls(tuple(xs), tuple(xs), periodic)

    @property
    def pairs(self):
        return [[a, b] for a, b in zip(self.x, self.y)]

    def _ext(self):
        x, y = np.asarray(self.x), np.asarray(self.y)
        if self.periodic:
            return np.append(x, x[0] + 1.0), np.append(y, y[0] + 1.0)
        return x, y

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        X, Y = self._ext()
        if self.periodic:
            n = np.floor(s - X[0])
            return np.interp(s - n, X, Y) + n
        inside = (s >= X[0]) & (s <= X[-1])
        return np.where(inside, np.interp(s, X, Y), s)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        X, Y = self._ext()
        sl = np.diff(Y) / np.diff(X)
        if self.periodic:
            s = s - np.floor(s - X[0])
        idx = np.clip(np.searchsorted(X, s, side="right") - 1, 0, sl.size - 1)
        if self.periodic:
            return sl[idx]
        inside = (s >= X[0]) & (s < X[-1])
        return np.where(inside, sl[idx], 1.0)

    def inverse(self) -> "PlanKnots":
        return PlanKnots(self.y, self.x, self.periodic)

    def compose(self, outer: "PlanKnots") -> "PlanKnots":
        """outer o self, with knots at the union of both break sets."""
        if outer.periodic != self.periodic:
            raise DomainMismatch("cannot compose plans on different domains")
        xs = np.asarray(self.x)
        extra = self.inverse()(np.asarray(outer.x))
        if self.periodic:
            extra = xs[0] + np.mod(extra - xs[0], 1.0)
        else:
            extra = extra[(extra > xs[0]) & (extra < xs[-1])]
            lo, hi = min(xs[0], outer.x[0]), max(xs[-1], outer.x[-1])
            extra = np.concatenate([extra, [lo, hi], outer.x])
        allx = np.unique(np.concatenate([xs, extra]))
        if not self.periodic:
            allx = allx[(allx >= min(xs[0], outer.x[0])) & (allx <= max(xs[-1], outer.x[-1]))]
        ally = outer(self(allx))
        keep = np.concatenate([[True], (np.diff(allx) > 1e-14) & (np.diff(ally) > 1e-14)])
        return PlanKnots(tuple(allx[keep]), tuple(ally[keep]), self.periodic)


# -- integrand ------------------------------------------------------------------------

def _profile(state, x):
    """(u, u_x) at x with one exponential per peakon pair (u_x = 0 at a crest)."""
    if len(state) == 0:
        z = np.zeros_like(x)
        return z, z
    d = x[..., None] - state.q
    if state.domain.periodic:
        r = np.mod(d, 1.0)
        e = np.exp(r)
        ea, eb = PER_A * e, PER_B / e
        k, kp = ea + eb, np.where(r == 0.0, 0.0, ea - eb)
    else:
        k = np.exp(-np.abs(d))
        kp = -np.sign(d) * k
    return k @ state.p, kp @ state.p


def _density(u, v, x, y, dy):
    """Cost density at x for a plan with psi(x) = y, psi'(x) = dy; also (m_u, m_v)."""
    uu, ux = _profile(u, x)
    vv, vx = _profile(v, y)
    mu = 1.0 + ux * ux
    mv = (1.0 + vx * vx) * dy
    d = _diamond(x, uu, 2.0 * np.arctan(ux), y, vv, 2.0 * np.arctan(vx))
    return d * np.minimum(mu, mv) + np.abs(mu - mv), mu, mv


def phi_weights(u, v, psi: PlanKnots, x):
    """(phi_1(x), phi_2(psi(x))): phi_1 (1 + u_x^2) = phi_2(psi) (1 + v_x^2(psi)) psi'."""
    x = np.asarray(x, dtype=float)
    _, mu, mv = _density(u, v, x, psi(x), psi.slope(x))
    rho = mv / mu
    return np.minimum(1.0, rho), np.minimum(1.0, 1.0 / rho)


def _check_domains(u, v):
    if u.domain.periodic != v.domain.periodic:
        raise DomainMismatch("states live on different domains")


def _cuts(u, v, psi: PlanKnots):
    """Break points of the integrand: knots, peaks of u and preimages of peaks of v."""
    if psi.periodic:
        x0, y0 = psi.x[0], psi.y[0]
        uq = x0 + np.mod(u.q - x0, 1.0)
        vq = y0 + np.mod(v.q - y0, 1.0)
        pts = np.concatenate([psi.x, uq, psi.inverse()(vq)])
        pts = pts[(pts > x0) & (pts < x0 + 1.0)]
        return np.unique(np.concatenate([[x0, x0 + 1.0], pts]))
    pts = np.concatenate([psi.x, u.q, psi.inverse()(v.q)])
    return np.unique(np.concatenate([[pts.min() - TAIL, pts.max() + TAIL], pts]))


def cost(u: MultipeakonState, v: MultipeakonState, psi: PlanKnots, tol: float = 1e-11) -> float:
    """J^psi(u, v) by adaptive Gauss-Kronrod between consecutive break points."""
    _check_domains(u, v)
    if psi.periodic != u.domain.periodic:
        raise PlanInvalid("plan and states live on different domains")
    cuts = _cuts(u, v, psi)
    f = lambda s: _density(u, v, s, psi(s), psi.slope(s))[0]
    return gk15(f, cuts[:-1], cuts[1:], abs_tol=tol, rel_tol=1e-12)[0]


def phi_violations(u, v, psi: PlanKnots, tol: float = 1e-12) -> int:
    """Quadrature nodes where phi_1 (1+u_x^2) != phi_2(psi) (1+v_x^2 o psi) psi' beyond tol."""
    cuts = _cuts(u, v, psi)
    x, _ = np.polynomial.legendre.leggauss(8)
    a, b = cuts[:-1, None], cuts[1:, None]
    pts = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
    p1, p2 = phi_weights(u, v, psi, pts)
    _, mu, mv = _density(u, v, pts, psi(pts), psi.slope(pts))
    return int(np.sum(np.abs(p1 * mu - p2 * mv) > tol * np.maximum(mu, mv)))


# -- optimizer ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricOptions:
    knots: Optional[int] = None        # default 4 (n_u + n_v) + 8
    rel_improvement: float = 1e-6
    max_sweeps: int = 200
    window: float = 3.0                # real line: knot window beyond the outermost peaks
    golden_iters: int = 24
    gl_nodes: int = 6
    final_tol: float = 1e-11

    def __post_init__(self):
        if self.knots is not None and self.knots < 2:
            raise ValueError("need at least two knots")
        if not (self.rel_improvement > 0 and self.max_sweeps >= 0 and self.window > 0):
            raise ValueError("invalid metric options")


@dataclass
class DistanceResult:
    J: float
    plan: PlanKnots
    iterations: int
    phi_violations: int = 0
    history: list = field(default_factory=list)

    def to_dict(self):
        return {"J": self.J, "plan": self.plan.pairs, "iterations": self.iterations,
                "phi_violations": self.phi_violations}


class _Local:
    """Fixed Gauss-Legendre cost of linear plan pieces, vectorized over pieces."""

    def __init__(self, u, v, nodes):
        self.u, self.v = u, v
        self.periodic = u.domain.periodic
        self.gx, self.gw = np.polynomial.legendre.leggauss(nodes)
        self.uq = np.asarray(u.q, dtype=float)
        self.vq = np.asarray(v.q, dtype=float)

    def __call__(self, xa, xb, ya, yb):
        slope = (yb - ya) / (xb - xa)
        # pieces are shorter than a period, so one representative per peak suffices
        if self.periodic:
            cu = xa[:, None] + np.mod(self.uq - xa[:, None], 1.0)
            cy = ya[:, None] + np.mod(self.vq - ya[:, None], 1.0)
        else:
            cu = np.broadcast_to(self.uq, (xa.size, self.uq.size))
            cy = np.broadcast_to(self.vq, (xa.size, self.vq.size))
        cv = xa[:, None] + (cy - ya[:, None]) / slope[:, None]
        inner = np.concatenate([cu, cv], axis=1)
        inside = (inner > xa[:, None]) & (inner < xb[:, None])
        # push cuts outside the piece to its right end, keep only the columns in use
        inner = np.sort(np.where(inside, inner, xb[:, None]), axis=1)
        inner = inner[:, :int(inside.sum(axis=1).max(initial=0))]
        cuts = np.concatenate([xa[:, None], inner, xb[:, None]], axis=1)
        lo, hi = cuts[:, :-1], cuts[:, 1:]
        half = 0.5 * (hi - lo)
        pts = (0.5 * (lo + hi))[..., None] + half[..., None] * self.gx
        y = ya[:, None, None] + slope[:, None, None] * (pts - xa[:, None, None])
        dy = np.broadcast_to(slope[:, None, None], pts.shape)
        dens = _density(self.u, self.v, pts.ravel(), y.ravel(), dy.ravel())[0].reshape(pts.shape)
        return np.sum(half * (dens @ self.gw), axis=1)


def _cumulative(state, grid):
    """Normalized-free cumulative mass of (1 + u_x^2) on a grid (trapezoid on a fine grid)."""
    _, ux = _profile(state, grid)
    dens = 1.0 + ux * ux
    return np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])


def _fine_grid(lo, hi, peaks, n=4000):
    g = np.linspace(lo, hi, n)
    near = peaks[(peaks > lo) & (peaks < hi)]
    if near.size:
        bumps = (near[:, None] + np.linspace(-0.05, 0.05, 41)).ravel()
        g = np.concatenate([g, np.clip(bumps, lo, hi)])
    return np.unique(g)


def _mass_matching(u, v, K, lo, hi, base_y=None):
    """Knots (x_k, y_k) at matched normalized quantiles of (1+u_x^2) and (1+v_x^2)."""
    periodic = u.domain.periodic
    if periodic:
        by = base_y
        gu = _fine_grid(lo, lo + 1.0, np.concatenate([u.q, u.q + 1.0, u.q - 1.0]))
        gv = _fine_grid(by, by + 1.0, np.concatenate([v.q, v.q + 1.0, v.q - 1.0]))
        levels = np.arange(K) / K
    else:
        gu = gv = _fine_grid(lo, hi, np.concatenate([u.q, v.q]))
        levels = np.linspace(0.0, 1.0, K)
    Mu, Mv = _cumulative(u, gu), _cumulative(v, gv)
    xs = np.interp(levels * Mu[-1], Mu, gu)
    ys = np.interp(levels * Mv[-1], Mv, gv)
    if not periodic:
        xs[0], xs[-1], ys[0], ys[-1] = lo, hi, lo, hi
    return xs, ys


def _spread(xs):
    """Force strict increase after interpolation (tiny nudges only)."""
    xs = np.array(xs, dtype=float)
    for i in range(1, xs.size):
        if xs[i] <= xs[i - 1]:
            xs[i] = xs[i - 1] + 1e-9
    return xs


class _Optimizer:
    def __init__(self, u, v, opts: MetricOptions):
        self.u, self.v, self.opts = u, v, opts
        self.periodic = u.domain.periodic
        self.local = _Local(u, v, opts.gl_nodes)

    def pieces(self, xs, ys):
        if self.periodic:
            X = np.append(xs, xs[0] + 1.0)
            Y = np.append(ys, ys[0] + 1.0)
        else:
            X, Y = xs, ys
        return X[:-1], X[1:], Y[:-1], Y[1:]

    def total(self, xs, ys):
        return float(np.sum(self.local(*self.pieces(xs, ys))))

    def _neighbours(self, xs, ys, ks):
        K = xs.size
        if self.periodic:
            xl = np.where(ks == 0, xs[-1] - 1.0, xs[ks - 1])
            yl = np.where(ks == 0, ys[-1] - 1.0, ys[ks - 1])
            xr = np.where(ks == K - 1, xs[0] + 1.0, xs[(ks + 1) % K])
            yr = np.where(ks == K - 1, ys[0] + 1.0, ys[(ks + 1) % K])
        else:
            xl, yl, xr, yr = xs[ks - 1], ys[ks - 1], xs[ks + 1], ys[ks + 1]
        return xl, yl, xr, yr

    def _batch(self, xs, ys, ks):
        """Golden-section on the ordinates y_k for a batch of non-adjacent knots."""
        if ks.size == 0:
            return ys
        xl, yl, xr, yr = self._neighbours(xs, ys, ks)
        xk = xs[ks]

        n = ks.size
        xa, xb = np.concatenate([xl, xk]), np.concatenate([xk, xr])

        def f(y):
            c = self.local(xa, xb, np.concatenate([yl, y]), np.concatenate([y, yr]))
            return c[:n] + c[n:]

        gap = yr - yl
        lo, hi = yl + 1e-9 * gap, yr - 1e-9 * gap
        c, d = hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo)
        fc, fd = f(c), f(d)
        for _ in range(self.opts.golden_iters):
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c_new = hi - GOLDEN * (hi - lo)
            d_new = lo + GOLDEN * (hi - lo)
            c, d, fc, fd = (np.where(left, c_new, d), np.where(left, c, d_new),
                            np.where(left, np.nan, fd), np.where(left, fc, np.nan))
            need_c, need_d = np.isnan(fc), np.isnan(fd)
            if need_c.any() or need_d.any():
                probe = np.where(need_c, c, d)
                fp = f(probe)
                fc = np.where(need_c, fp, fc)
                fd = np.where(need_d, fp, fd)
        best = np.where(fc < fd, c, d)
        fbest = np.minimum(fc, fd)
        fcur = f(ys[ks])
        out = ys.copy()
        better = fbest < fcur
        out[ks[better]] = best[better]
        return out

    def _valid(self, xs, ys):
        if np.any(np.diff(ys) <= 0):
            return False
        if self.periodic:
            return ys[-1] < ys[0] + 1.0
        return ys[0] == xs[0] and ys[-1] == xs[-1]

    def _extrapolate(self, xs, before, after, f_after):
        """Pattern move along the sweep displacement, doubling while the cost drops."""
        step = after - before
        best, fbest = after, f_after
        beta = 1.0
        for _ in range(8):
            trial = after + beta * step
            if not self._valid(xs, trial):
                break
            ft = self.total(xs, trial)
            if ft >= fbest:
                break
            best, fbest = trial, ft
            beta *= 2.0
        return best, fbest

    def run(self, xs, ys):
        K = xs.size
        free = np.arange(K) if self.periodic else np.arange(1, K - 1)
        batches = [free[free % 2 == 0], free[free % 2 == 1]]
        if self.periodic and K % 2 == 1:
            # knots 0 and K-1 are neighbours across the period
            batches = [free[(free % 2 == 0) & (free != K - 1)], free[free % 2 == 1],
                       np.array([K - 1])]
        cur = self.total(xs, ys)
        history = [cur]
        sweeps = 0
        for sweeps in range(1, self.opts.max_sweeps + 1):
            start = ys
            for b in batches:
                ys = self._batch(xs, ys, b)
            new = self.total(xs, ys)
            ys, new = self._extrapolate(xs, start, ys, new)
            history.append(new)
            if cur - new <= self.opts.rel_improvement * max(abs(cur), 1e-300):
                cur = min(cur, new)
                break
            cur = new
        return ys, sweeps, history


def _window(u, v, opts):
    peaks = np.concatenate([u.q, v.q])
    if peaks.size == 0:
        return -1.0, 1.0
    return float(peaks.min() - opts.window), float(peaks.max() + opts.window)


def _optimize(u, v, opts: MetricOptions):
    periodic = u.domain.periodic
    K = opts.knots or 4 * (len(u) + len(v)) + 8
    opt = _Optimizer(u, v, opts)
    if periodic:
        K += K % 2
        x0 = float(u.q[0]) if len(u) else 0.0
        starts = []
        for by in x0 + np.arange(16) / 16.0 + (float(v.q[0] - u.q[0]) if len(v) and len(u) else 0.0):
            xs, ys = _mass_matching(u, v, K, x0, None, base_y=by)
            starts.append((_spread(xs), _spread(ys)))
        xs_id = x0 + np.arange(K) / K
        starts.append((xs_id, xs_id.copy()))
    else:
        lo, hi = _window(u, v, opts)
        xs, ys = _mass_matching(u, v, K, lo, hi)
        xs_id = np.linspace(lo, hi, K)
        starts = [(_spread(xs), _spread(ys)), (xs_id, xs_id.copy())]
    scored = sorted(starts, key=lambda s: opt.total(*s))
    xs, ys = scored[0]
    ys, sweeps, history = opt.run(np.asarray(xs), np.asarray(ys))
    plan = PlanKnots(tuple(xs), tuple(ys), periodic)
    val = cost(u, v, plan, opts.final_tol)
    # the identity plan on the same abscissae is always a candidate
    ident = PlanKnots(tuple(xs_id), tuple(xs_id), periodic)
    val_id = cost(u, v, ident, opts.final_tol)
    if val_id < val:
        plan, val = ident, val_id
    return val, plan, sweeps, history


def _key(state):
    return state.to_json()


def distance(u: MultipeakonState, v: MultipeakonState,
             opts: MetricOptions = MetricOptions()) -> DistanceResult:
    """Upper bound on J(u, v) and the plan achieving it.

    The plan is optimized in both directions (u -> v, and v -> u then inverted,
    which has the same cost) and the better one kept, so the result is symmetric.
    """
    _check_domains(u, v)
    if len(u) == 0 and len(v) == 0:
        ident = PlanKnots.identity(0.0, 1.0, 2, u.domain.periodic)
        return DistanceResult(0.0, ident, 0)
    swap = _key(u) > _key(v)
    a, b = (v, u) if swap else (u, v)
    val1, plan1, it1, h1 = _optimize(a, b, opts)
    val2, plan2, it2, h2 = _optimize(b, a, opts)
    plan2 = plan2.inverse()
    # evaluate both candidates in one fixed orientation
    val2 = cost(a, b, plan2, opts.final_tol)
    if val2 < val1:
        val, plan, hist = val2, plan2, h2
    else:
        val, plan, hist = val1, plan1, h1
    if swap:
        plan = plan.inverse()
    return DistanceResult(max(val, 0.0), plan, it1 + it2, phi_violations(u, v, plan), hist)


def improve_with(u, v, current: DistanceResult, candidates: Sequence[PlanKnots],
                 tol: float = 1e-11) -> DistanceResult:
    """Keep the cheapest of the current plan and extra candidate plans (e.g. compositions)."""
    best = current
    for plan in candidates:
        val = cost(u, v, plan, tol)
        if val < best.J:
            best = DistanceResult(val, plan, current.iterations, phi_violations(u, v, plan),
                                  current.history)
    return best


def stability_fit(ts, Js):
    """Smallest C2 with J(t) <= J(0) e^{C2 t} on the samples, plus a least-squares slope."""
    t = np.asarray(ts, dtype=float)
    lj = np.log(np.maximum(np.asarray(Js, dtype=float), 1e-300)) - math.log(max(Js[0], 1e-300))
    pos = t > 0
    c2 = float(np.max(lj[pos] / t[pos])) if pos.any() else 0.0
    slope = float(np.dot(t, lj) / np.dot(t, t)) if pos.any() else 0.0
    resid = float(np.sqrt(np.mean((lj - slope * t) ** 2)))
    steps = np.diff(lj) / np.maximum(np.diff(t), 1e-300)
    return {"c2": c2, "slope": slope, "residual": resid,
            "max_step_rate": float(np.max(steps)) if steps.size else 0.0}


LIPSCHITZ_CONSTANT = 8.0 * math.pi + 3.0


def lipschitz_bound(u: MultipeakonState, v: MultipeakonState) -> float:
    """(8 pi + 3)(1 + ||u||_H1 + ||v||_H1) ||u - v||_H1, an upper bound on J(u, v)."""
    return LIPSCHITZ_CONSTANT * (1.0 + h1_norm(u) + h1_norm(v)) * h1_distance(u, v)


def sandwich_constant(pairs, Js) -> float:
    """Fitted C with ||u - v||_L1 <= C J over the given pairs (inf if some J vanishes)."""
    ratios = [l1_distance(u, v) / J if J > 0 else (0.0 if l1_distance(u, v) == 0 else math.inf)
              for (u, v), J in zip(pairs, Js)]
    return max(ratios) if ratios else 0.0


# -- characteristics ---------------------------------------------------------------------

def _push(traj, t0, t1, xs):
    """Characteristics x' = u(t, x) from t0 to t1 starting at xs."""
    if t1 == t0:
        return np.asarray(xs, dtype=float)

    def rhs(t, x):
        st = traj.state_at(t)
        return _profile(st, x)[0]
    sol = solve_ivp(rhs, (t0, t1), np.asarray(xs, dtype=float), method="RK45",
                    rtol=1e-10, atol=1e-12)
    return sol.y[:, -1]


def characteristic_plan(traj_u, traj_v, psi0: PlanKnots, t: float) -> PlanKnots:
    """Transport psi0 along characteristics: (y, psi0(y)) -> (xi_u(t, y), xi_v(t, psi0(y)))."""
    t0 = traj_u.initial.time
    for traj in (traj_u, traj_v):
        for ev in traj.collision_events:
            if min(t0, t) <= ev["t"] <= max(t0, t):
                raise CollisionInWindow(f"collision at t={ev['t']:.6g} inside the window")
    if t == t0:
        return psi0
    xs, ys = np.asarray(psi0.x), np.asarray(psi0.y)
    if psi0.periodic:
        nx, ny = _push(traj_u, t0, t, xs), _push(traj_v, t0, t, ys)
        shift = math.floor(nx[0])
        nx, ny = nx - shift, ny - shift
        return PlanKnots(tuple(nx), tuple(ny), True)
    # far knots move by exponentially small amounts; pin them back on the diagonal
    far = 30.0
    lo, hi = xs[0] - far, xs[-1] + far
    nx = _push(traj_u, t0, t, np.concatenate([[lo], xs, [hi]]))
    ny = _push(traj_v, t0, t, np.concatenate([[lo], ys, [hi]]))
    nx[0] = ny[0] = 0.5 * (nx[0] + ny[0])
    nx[-1] = ny[-1] = 0.5 * (nx[-1] + ny[-1])
    return PlanKnots(tuple(nx), tuple(ny), False)
