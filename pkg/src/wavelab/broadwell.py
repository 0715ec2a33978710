"""Two-dimensional Broadwell system in the original and blow-up-rescaled frames.

Original frame:   d_t u_i + c_i . grad u_i = G_i(u)
Rescaled frame:   d_tau w_i + (c_i + eta) . grad w_i = G_i(w) - w_i

with c1 = (1,1), c2 = (1,-1), c3 = (-1,-1), c4 = (-1,1) and G1 = G3 = w2 w4 - w1 w3,
G2 = G4 = -G1.  Time stepping is Strang splitting: half-step semi-Lagrangian
advection, a full source step, half-step advection.  Every foot point is separable
(its x-coordinate depends only on x), so advection is F -> Ix F Iy^T with 1-D
interpolation matrices.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .errors import CFLViolation, FrameMismatch, PastBlowup, WeightInvalid

log = logging.getLogger(__name__)

ORIGINAL = "original"
RESCALED = "rescaled"
FRAMES = (ORIGINAL, RESCALED)
SPEEDS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]])
CFL_NUMBER = 0.9
MAGIC = b"BWG1"


def collision_term(w1, w2, w3, w4):
    g = w2 * w4 - w1 * w3
    return g, -g, g, -g


def _collision(w):
    g = w[1] * w[3] - w[0] * w[2]
    return np.stack([g, -g, g, -g])


# -- grid ------------------------------------------------------------------------------

@dataclass
class BroadwellGrid:
    """Four densities w[i, ix, iy] on a node grid.

    Outflow grids have nodes at both ends of each side (n nodes span [lo, hi]); periodic
    grids (original frame only) have n nodes lo + k (hi - lo)/n.
    """

    frame: str
    w: np.ndarray
    t: float = 0.0
    bounds: tuple = (-1.0, 1.0, -1.0, 1.0)
    periodic: bool = False
    clipped: float = 0.0

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise FrameMismatch(f"unknown frame {self.frame!r}")
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 3 or self.w.shape[0] != 4 or min(self.w.shape[1:]) < 4:
            raise ValueError("w must have shape (4, nx, ny) with nx, ny >= 4")
        if self.periodic and self.frame == RESCALED:
            raise FrameMismatch("the rescaled frame has no periodic halo")
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("empty bounds")

    @classmethod
    def uniform(cls, frame, nx, ny, values, **kw):
        w = np.broadcast_to(np.asarray(values, dtype=float).reshape(-1, 1, 1), (4, nx, ny))
        return cls(frame, w.copy(), **kw)

    @property
    def nx(self):
        return self.w.shape[1]

    @property
    def ny(self):
        return self.w.shape[2]

    def _axis(self, lo, hi, n):
        if self.periodic:
            return lo + (hi - lo) * np.arange(n) / n
        return np.linspace(lo, hi, n)

    @property
    def x(self):
        return self._axis(self.bounds[0], self.bounds[1], self.nx)

    @property
    def y(self):
        return self._axis(self.bounds[2], self.bounds[3], self.ny)

    @property
    def dx(self):
        return (self.bounds[1] - self.bounds[0]) / (self.nx if self.periodic else self.nx - 1)

    @property
    def dy(self):
        return (self.bounds[3] - self.bounds[2]) / (self.ny if self.periodic else self.ny - 1)

    def mass(self) -> float:
        """Sum of all densities times the cell area (exact total mass on periodic grids)."""
        return float(np.sum(self.w) * self.dx * self.dy)

    def max_speed(self) -> float:
        if self.frame == ORIGINAL:
            return math.sqrt(2.0)
        ex = np.max(np.abs(self.bounds[:2])) + 1.0
        ey = np.max(np.abs(self.bounds[2:])) + 1.0
        return math.hypot(ex, ey)

    def cfl_limit(self) -> float:
        return CFL_NUMBER * min(self.dx, self.dy) / self.max_speed()


# -- interpolation ----------------------------------------------------------------------

def _lagrange(t, m):
    """Weights of the m-point Lagrange basis on nodes 0..m-1 at local coordinate t."""
    out = np.ones((t.size, m))
    for j in range(m):
        for k in range(m):
            if k != j:
                out[:, j] *= (t - k) / (j - k)
    return out


def interp_matrix(frac, n, order="cubic", periodic=False):
    """Dense (len(frac), n) matrix interpolating node values at fractional indices.

    Non-periodic: stencils are shifted to stay inside the grid, and points outside
    [0, n-1] get zero (no inflow).
    """
    frac = np.asarray(frac, dtype=float)
    m = 4 if order == "cubic" else 2 if order == "linear" else None
    if m is None:
        raise ValueError(f"unknown interpolation order {order!r}")
    base = np.floor(frac).astype(int) - (1 if m == 4 else 0)
    if not periodic:
        base = np.clip(base, 0, n - m)
    W = _lagrange(frac - base, m)
    M = np.zeros((frac.size, n))
    rows = np.arange(frac.size)
    for j in range(m):
        cols = base + j
        if periodic:
            cols = np.mod(cols, n)
        np.add.at(M, (rows, cols), W[:, j])
    if not periodic:
        tol = 1e-9
        M[(frac < -tol) | (frac > n - 1 + tol)] = 0.0
    return M


def _frac(coord, lo, h):
    return (coord - lo) / h


def _advect(grid: BroadwellGrid, dt: float, order: str) -> np.ndarray:
    x, y = grid.x, grid.y
    out = np.empty_like(grid.w)
    for i, (cx, cy) in enumerate(SPEEDS):
        if grid.frame == ORIGINAL:
            fx, fy = x - cx * dt, y - cy * dt
        else:
            decay = math.exp(-dt)
            fx, fy = -cx + (x + cx) * decay, -cy + (y + cy) * decay
        Ix = interp_matrix(_frac(fx, grid.bounds[0], grid.dx), grid.nx, order, grid.periodic)
        Iy = interp_matrix(_frac(fy, grid.bounds[2], grid.dy), grid.ny, order, grid.periodic)
        out[i] = Ix @ grid.w[i] @ Iy.T
    return out


Source = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _source_step(grid: BroadwellGrid, w, dt, source: Optional[Source]):
    """Heun for w' = G(w) + S; rescaled frame: Lawson-Heun (exact on the damping -w)."""
    t = grid.t
    if source is not None:
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        F = lambda s, v: _collision(v) + source(s, X, Y)
    else:
        F = lambda s, v: _collision(v)
    k1 = F(t, w)
    if grid.frame == ORIGINAL:
        k2 = F(t + dt, w + dt * k1)
        return w + 0.5 * dt * (k1 + k2)
    e = math.exp(-dt)
    w1 = e * (w + dt * k1)
    return e * w + 0.5 * dt * (e * k1 + F(t + dt, w1))


def step(grid: BroadwellGrid, dt: float, order: str = "cubic",
         source: Optional[Source] = None) -> BroadwellGrid:
    """One Strang step; densities are clipped at 0 and the clipped mass accumulated."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > grid.cfl_limit() * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt:.3g} exceeds the CFL limit {grid.cfl_limit():.3g}")
    w = _advect(grid, 0.5 * dt, order)
    w = _source_step(grid, w, dt, source)
    w = _advect(replace(grid, w=w), 0.5 * dt, order)
    neg = w < 0.0
    clipped = 0.0
    if neg.any():
        clipped = float(-np.sum(w[neg]) * grid.dx * grid.dy)
        w[neg] = 0.0
        log.debug("clipped mass %.3e at t=%.6g", clipped, grid.t + dt)
    return replace(grid, w=w, t=grid.t + dt, clipped=grid.clipped + clipped)


# -- rescaling ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RescaleMap:
    t_star: float
    x_star: tuple = (0.0, 0.0)

    def tau(self, t):
        if t >= self.t_star:
            raise PastBlowup(f"t={t} is not before t*={self.t_star}")
        return -math.log(self.t_star - t)

    def time(self, tau):
        return self.t_star - math.exp(-tau)


def _resample(src: BroadwellGrid, fx, fy):
    Ix = interp_matrix(_frac(fx, src.bounds[0], src.dx), src.nx, "linear", src.periodic)
    Iy = interp_matrix(_frac(fy, src.bounds[2], src.dy), src.ny, "linear", src.periodic)
    return np.stack([Ix @ src.w[i] @ Iy.T for i in range(4)])


def rescale(grid: BroadwellGrid, rmap: RescaleMap, bounds=(-1.0, 1.0, -1.0, 1.0),
            nx: Optional[int] = None, ny: Optional[int] = None) -> BroadwellGrid:
    """Original u(t, x) -> rescaled w(tau, eta) = (t*-t) u(t, x* + (t*-t) eta).

    Bilinear resampling; nodes mapping outside the source grid get 0.
    """
    if grid.frame != ORIGINAL:
        raise FrameMismatch("rescale expects an original-frame grid")
    tau = rmap.tau(grid.t)
    s = rmap.t_star - grid.t
    out = BroadwellGrid(RESCALED, np.zeros((4, nx or grid.nx, ny or grid.ny)), tau, bounds)
    w = _resample(grid, rmap.x_star[0] + s * out.x, rmap.x_star[1] + s * out.y)
    return replace(out, w=s * w)


def unrescale(grid: BroadwellGrid, rmap: RescaleMap, bounds=None,
              nx: Optional[int] = None, ny: Optional[int] = None) -> BroadwellGrid:
    """Inverse of rescale; default target is the image of the rescaled box."""
    if grid.frame != RESCALED:
        raise FrameMismatch("unrescale expects a rescaled-frame grid")
    t = rmap.time(grid.t)
    s = rmap.t_star - t
    if bounds is None:
        x0, x1, y0, y1 = grid.bounds
        xs, ys = rmap.x_star
        bounds = (xs + s * x0, xs + s * x1, ys + s * y0, ys + s * y1)
    out = BroadwellGrid(ORIGINAL, np.zeros((4, nx or grid.nx, ny or grid.ny)), t, bounds)
    w = _resample(grid, (out.x - rmap.x_star[0]) / s, (out.y - rmap.x_star[1]) / s)
    return replace(out, w=w / s)


# -- decay functionals ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConstKappa:
    kappa: float


@dataclass(frozen=True)
class LogT:
    theta: float


# (forward component, backward component, integrate along x?) per functional
PAIRS = {"Q14": (0, 3, True), "Q23": (1, 2, True), "Q12": (0, 1, False), "Q34": (3, 2, False)}


def epsilon(kappa):
    return 0.5 * math.exp(-2.0 * kappa)


def _weights(s, mode, t):
    if isinstance(mode, ConstKappa):
        eps = epsilon(mode.kappa)
        return 1.0 - eps * np.exp(2.0 * mode.kappa * s), 1.0 - eps * np.exp(-2.0 * mode.kappa * s)
    k = mode.theta * math.log(t) if t > 0 else -math.inf
    if not k >= 0.5:
        raise WeightInvalid(f"k(t)={k:.4g} < 1/2; need t >= exp(1/(2 theta))")
    return 1.0 - 0.5 * np.exp(2.0 * k * (s - 1.0)), 1.0 - 0.5 * np.exp(-2.0 * k * (s + 1.0))


def _check_mode(grid, mode):
    if isinstance(mode, ConstKappa):
        top = float(np.max(grid.w))
        if mode.kappa < top:
            raise WeightInvalid(f"kappa={mode.kappa:.6g} below sup w={top:.6g}")


def _line(grid, comp, along_x, level):
    """Samples of w[comp] on the segment [-1, 1] of a horizontal (along_x) or vertical line."""
    h = grid.dx if along_x else grid.dy
    m = max(int(round(2.0 / h)), 1) + 1
    s = np.linspace(-1.0, 1.0, m)
    if along_x:
        Ix = interp_matrix(_frac(s, grid.bounds[0], grid.dx), grid.nx, "linear", grid.periodic)
        Iy = interp_matrix(_frac(np.array([level]), grid.bounds[2], grid.dy), grid.ny,
                           "linear", grid.periodic)
    else:
        Ix = interp_matrix(_frac(np.array([level]), grid.bounds[0], grid.dx), grid.nx,
                           "linear", grid.periodic)
        Iy = interp_matrix(_frac(s, grid.bounds[2], grid.dy), grid.ny, "linear", grid.periodic)
    vals = (Ix @ grid.w[comp] @ Iy.T)
    return s, vals.ravel()


def functional(grid: BroadwellGrid, name: str, level: float, mode) -> float:
    """Q14/Q23 on the horizontal line y=level, Q12/Q34 on the vertical line x=level."""
    if not -1.0 <= level <= 1.0:
        raise ValueError("line must lie in [-1, 1]")
    _check_mode(grid, mode)
    fwd, bwd, along_x = PAIRS[name]
    s, a = _line(grid, fwd, along_x, level)
    _, b = _line(grid, bwd, along_x, level)
    wa, wb = _weights(s, mode, grid.t)
    return float(trapezoid(wa * a + wb * b, s))


def q14(grid: BroadwellGrid, y_line: float, mode) -> float:
    return functional(grid, "Q14", y_line, mode)


def functional_sup(grid: BroadwellGrid, name: str, mode) -> float:
    """Sup over lines through the grid nodes in [-1, 1]."""
    _check_mode(grid, mode)
    along_x = PAIRS[name][2]
    nodes = grid.y if along_x else grid.x
    levels = nodes[(nodes >= -1.0) & (nodes <= 1.0)]
    return max(functional(grid, name, float(v), mode) for v in levels)


def q14_sup(grid, mode):
    return functional_sup(grid, "Q14", mode)


def q14_bound(kappa, t):
    return 1.0 / (0.25 / kappa + 0.5 * epsilon(kappa) ** 2 * t)


def mass_bound(kappa, t):
    """Bound on the integral of each w_i over the unit square."""
    return 4.0 / (0.25 / kappa + math.exp(-4.0 * kappa) * t / 8.0)


def a0_constant(theta, t0):
    k0 = theta * math.log(t0)
    return max(2.0 * k0 * t0 ** (1.0 - 4.0 * theta), 8.0 * (1.0 - 3.0 * theta))


def line_bound(theta, t, t0):
    """Bound 2 A0 t^(4 theta - 1) on line integrals of w_i in the log-weight regime."""
    return 2.0 * a0_constant(theta, t0) * t ** (4.0 * theta - 1.0)


def square_integrals(grid: BroadwellGrid) -> np.ndarray:
    """Integral of each w_i over [-1, 1]^2 (bilinear samples, trapezoid rule)."""
    out = np.empty(4)
    m = max(int(round(2.0 / min(grid.dx, grid.dy))), 1) + 1
    s = np.linspace(-1.0, 1.0, m)
    Ix = interp_matrix(_frac(s, grid.bounds[0], grid.dx), grid.nx, "linear", grid.periodic)
    Iy = interp_matrix(_frac(s, grid.bounds[2], grid.dy), grid.ny, "linear", grid.periodic)
    for i in range(4):
        vals = Ix @ grid.w[i] @ Iy.T
        out[i] = trapezoid(trapezoid(vals, s, axis=1), s)
    return out


def a_diagnostic(grid: BroadwellGrid, y_line: float, x_from: float) -> float:
    """A = integral over [x_from, 1] of (w1 + w4) on the line y = y_line."""
    s, a = _line(grid, 0, True, y_line)
    _, b = _line(grid, 3, True, y_line)
    keep = s >= x_from
    return float(trapezoid((a + b)[keep], s[keep])) if keep.sum() > 1 else 0.0


def weight_inequality(k, x):
    """(1 - x) e^{2k(x-1)} <= 1 - e^{2k(x-1)}, valid for k >= 1/2 and x in [-1, 1]."""
    e = np.exp(2.0 * k * (np.asarray(x) - 1.0))
    return (1.0 - np.asarray(x)) * e <= 1.0 - e + 1e-15


@dataclass
class DecayReport:
    t: np.ndarray
    q14: np.ndarray
    q14_bound: np.ndarray
    square: np.ndarray
    square_bound: np.ndarray
    slack: float

    @property
    def q14_ok(self):
        return np.all(self.q14 <= self.q14_bound * (1.0 + self.slack))

    @property
    def square_ok(self):
        return np.all(self.square <= self.square_bound[:, None] * (1.0 + self.slack))

    @property
    def ok(self):
        return bool(self.q14_ok and self.square_ok)


def decay_bounds(grids, kappa: float, slack: float = 1e-3) -> DecayReport:
    """Compare sampled rescaled grids with the Riccati comparison bounds (t from the first)."""
    grids = list(grids)
    t0 = grids[0].t if grids else 0.0
    mode = ConstKappa(kappa)
    t = np.array([g.t - t0 for g in grids])
    q = np.array([q14_sup(g, mode) for g in grids])
    sq = np.array([square_integrals(g) for g in grids]).reshape(-1, 4)
    return DecayReport(t, q, np.array([q14_bound(kappa, s) for s in t]), sq,
                       np.array([mass_bound(kappa, s) for s in t]), slack)


# -- blow-up diagnostics --------------------------------------------------------------------

THRESHOLDS = (0.25, 0.2)


@dataclass
class RateReport:
    t: np.ndarray
    rate: np.ndarray           # sup (t*-t) / ln|ln(t*-t)|, NaN where ln|ln| <= 0
    naive: np.ndarray          # sup (t*-t)
    running_max: np.ndarray
    tail_sup: float            # limsup estimate: max rate over the samples nearest t*
    any_above: dict = field(default_factory=dict)

    def verdict(self, threshold=0.25):
        return "exceeds" if self.tail_sup >= threshold else "below"

    def summary(self):
        return {f"{th:g}": self.verdict(th) for th in THRESHOLDS}


def blowup_rate_monitor(series, t_star: float, tail_fraction: float = 0.1) -> RateReport:
    """Rate r(t) = sup|u| (t*-t)/ln|ln(t*-t)| along (t, sup_norm) samples.

    The limsup is estimated by the largest rate over the final ``tail_fraction`` of the
    samples with a defined rate (closest to t*).
    """
    arr = np.asarray(list(series), dtype=float).reshape(-1, 2)
    t, sup = arr[:, 0], arr[:, 1]
    if np.any(t >= t_star):
        raise PastBlowup("samples must precede t*")
    s = t_star - t
    ll = np.log(np.abs(np.log(s)))
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(ll > 0, sup * s / ll, np.nan)
    valid = np.flatnonzero(np.isfinite(rate))
    running = np.fmax.accumulate(np.where(np.isfinite(rate), rate, -np.inf)) if rate.size else rate
    if valid.size:
        k = max(1, int(math.ceil(tail_fraction * valid.size)))
        tail = float(np.max(rate[valid[np.argsort(s[valid])[:k]]]))
    else:
        tail = float("nan")
    above = {f"{th:g}": bool(valid.size and np.nanmax(rate) > th) for th in THRESHOLDS}
    return RateReport(t, rate, sup * s, running, tail, above)


def estimate_blowup(series_t, series_sup, grid: Optional[BroadwellGrid] = None):
    """t* from a linear fit of 1/sup over the last decade of samples; x* the last argmax."""
    t = np.asarray(series_t, dtype=float)
    inv = 1.0 / np.asarray(series_sup, dtype=float)
    k = max(2, t.size // 10)
    slope, icept = np.polyfit(t[-k:], inv[-k:], 1)
    t_star = -icept / slope if slope < 0 else math.inf
    x_star = None
    if grid is not None:
        tot = np.sum(grid.w, axis=0)
        ix, iy = np.unravel_index(int(np.argmax(tot)), tot.shape)
        x_star = (float(grid.x[ix]), float(grid.y[iy]))
    return t_star, x_star


# -- snapshots ---------------------------------------------------------------------------

def write_snapshot(grid: BroadwellGrid, path) -> None:
    """Header: b"BWG1", int32 nx, int32 ny, int32 frame (0 original, 1 rescaled), float64 t."""
    head = MAGIC + struct.pack("<iiid", grid.nx, grid.ny, FRAMES.index(grid.frame), grid.t)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(grid.w, dtype="<f8").tobytes())


def read_snapshot(path, bounds=(-1.0, 1.0, -1.0, 1.0), periodic=False) -> BroadwellGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError("not a BWG1 snapshot")
    nx, ny, frame, t = struct.unpack("<iiid", raw[4:24])
    w = np.frombuffer(raw[24:], dtype="<f8").reshape(4, nx, ny).copy()
    return BroadwellGrid(FRAMES[frame], w, t, tuple(bounds), periodic)


# -- runs --------------------------------------------------------------------------------

@dataclass(frozen=True)
class BroadwellConfig:
    frame: str = RESCALED
    nx: int = 64
    ny: int = 64
    bounds: tuple = (-1.0, 1.0, -1.0, 1.0)
    periodic: bool = False
    t0: float = 0.0
    t_end: float = 1.0
    dt: Optional[float] = None          # default: 0.5 of the CFL limit
    init: str = "uniform"               # uniform | random | gaussian
    amplitude: float = 1.0
    modes: int = 3
    kappa: Optional[float] = None       # default: initial max density
    sample_every: int = 10
    order: str = "cubic"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if self.init not in ("uniform", "random", "gaussian"):
            raise ValueError("init must be uniform, random or gaussian")
        if self.nx < 4 or self.ny < 4 or not self.t_end > self.t0 or self.amplitude < 0:
            raise ValueError("invalid grid or time window")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


def initial_grid(cfg: BroadwellConfig, rng: np.random.Generator) -> BroadwellGrid:
    g = BroadwellGrid(cfg.frame, np.zeros((4, cfg.nx, cfg.ny)), cfg.t0, tuple(cfg.bounds),
                      cfg.periodic)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    if cfg.init == "uniform":
        w = np.full((4, cfg.nx, cfg.ny), cfg.amplitude)
    elif cfg.init == "gaussian":
        w = np.stack([cfg.amplitude * np.exp(-8.0 * ((X - 0.2 * cx) ** 2 + (Y - 0.2 * cy) ** 2))
                      for cx, cy in SPEEDS])
    else:
        w = np.empty((4, cfg.nx, cfg.ny))
        for i in range(4):
            f = np.ones_like(X)
            for _ in range(cfg.modes):
                kx, ky = rng.integers(1, 4, size=2)
                ph = rng.uniform(0, 2 * math.pi, size=2)
                f = f + rng.uniform(0.1, 0.5) * np.cos(math.pi * kx * X + ph[0]) \
                    * np.cos(math.pi * ky * Y + ph[1])
            f = np.maximum(f, 0.0)
            w[i] = cfg.amplitude * f / np.max(f)
    return replace(g, w=w)


CSV_COLUMNS = ("t", "mass", "sup_w1", "sup_w2", "sup_w3", "sup_w4",
               "Q14_sup", "Q12_sup", "Q23_sup", "Q34_sup", "bound_margin")


@dataclass
class BroadwellRun:
    config: BroadwellConfig
    kappa: float
    rows: list
    final: BroadwellGrid
    grids: list

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r[-1] < -1e-3)

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(f"{v:.17g}" for v in r))
        return "\n".join(lines) + "\n"


def _row(grid: BroadwellGrid, kappa: float, t_rel: float):
    mode = ConstKappa(max(kappa, float(np.max(grid.w))))
    qs = [functional_sup(grid, n, mode) for n in ("Q14", "Q12", "Q23", "Q34")]
    bound = q14_bound(kappa, t_rel)
    margin = min((bound - q) / bound for q in qs)
    sups = [float(np.max(grid.w[i])) for i in range(4)]
    return [grid.t, grid.mass(), *sups, *qs, margin]


def run_broadwell(cfg: BroadwellConfig, rng: Optional[np.random.Generator] = None,
                  keep_grids: bool = False) -> BroadwellRun:
    """Integrate from t0 to t_end, sampling functionals every ``sample_every`` steps.

    The bound margin compares every functional with the Q14 comparison bound; it is
    only meaningful in the rescaled frame.
    """
    rng = rng or np.random.default_rng(0)
    grid = initial_grid(cfg, rng)
    kappa = cfg.kappa if cfg.kappa is not None else max(float(np.max(grid.w)), 1e-300)
    dt_max = cfg.dt or 0.5 * grid.cfl_limit()
    nsteps = max(1, int(math.ceil((cfg.t_end - cfg.t0) / dt_max - 1e-9)))
    dt = (cfg.t_end - cfg.t0) / nsteps
    rows = [_row(grid, kappa, 0.0)]
    grids = [grid] if keep_grids else []
    for k in range(1, nsteps + 1):
        grid = step(grid, dt, cfg.order)
        if k % cfg.sample_every == 0 or k == nsteps:
            rows.append(_row(grid, kappa, grid.t - cfg.t0))
            if keep_grids:
                grids.append(grid)
    return BroadwellRun(cfg, kappa, rows, grid, grids)
