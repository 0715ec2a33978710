"""Conservative (or dissipative) multipeakon dynamics through peakon collisions.

Away from collisions the strengths and positions follow Hamilton's equations
for ``H = 1/2 sum p_i p_j K(q_i - q_j)``.  When a peakon and an antipeakon close
in, the pair is replaced by the chart variables

    z = p1 + p2,  w = 2 arctan(p2 - p1),  eta = q1 + q2,  zeta = (p2 - p1)^2 (q2 - q1)

in which the vector field is smooth across the collision instant ``w = pi``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .errors import (ChartDomainExceeded, CoincidentPositions, StepSizeUnderflow,
                     TripleCollisionAnomaly)
from .peakons import (PER_A, PER_B, MultipeakonState, Peakon, energy, hamiltonian,
                      kernel, kernel_prime)

CONSERVATIVE = "conservative"
DISSIPATIVE = "dissipative"


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    collision_gap: float = 1e-3
    strength_cap: float = 1e3
    max_step: float = 0.1
    mode: str = CONSERVATIVE
    # chart is entered only once |w - pi| < enter_angle; left at |w - pi| >= exit_angle
    enter_angle: float = math.pi / 8
    exit_angle: float = math.pi / 4

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "collision_gap", "strength_cap", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mode not in (CONSERVATIVE, DISSIPATIVE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 < self.enter_angle < self.exit_angle < math.pi / 2:
            raise ValueError("need 0 < enter_angle < exit_angle < pi/2")


@dataclass(frozen=True)
class SingularChart:
    domain: object
    z: float
    w: float
    eta: float
    zeta: float
    background: tuple = ()
    time: float = 0.0
    collision_position: Optional[float] = None
    collision_time: Optional[float] = None
    concentrated_energy: Optional[float] = None

    def vector(self) -> np.ndarray:
        qb = [pk.position for pk in self.background]
        pb = [pk.strength for pk in self.background]
        return np.array([self.z, self.w, self.eta, self.zeta, *qb, *pb], dtype=float)

    def with_vector(self, y, t) -> "SingularChart":
        m = len(self.background)
        bg = tuple(Peakon(float(y[4 + m + k]), float(y[4 + k])) for k in range(m))
        return SingularChart(self.domain, float(y[0]), float(y[1]), float(y[2]), float(y[3]),
                             bg, float(t), self.collision_position, self.collision_time,
                             self.concentrated_energy)


# -- regular chart -------------------------------------------------------------

def _regular_field(domain, q, p):
    d = q[:, None] - q[None, :]
    K = kernel(domain, d)
    Kp = kernel_prime(domain, d)
    np.fill_diagonal(Kp, 0.0)
    return K @ p, -p * (Kp @ p)


def rhs_regular(state: MultipeakonState):
    """Time derivatives (dq, dp) of positions and strengths."""
    q, p = state.q, state.p
    if q.size > 1:
        diffs = np.diff(q)
        if np.any(diffs == 0.0) or (state.domain.periodic and (q[0] + 1.0 - q[-1]) == 0.0):
            raise CoincidentPositions("two peakons share a position; switch to the singular chart")
    return _regular_field(state.domain, q, p)


# -- singular chart ------------------------------------------------------------

_GR_COEF = [(-1) ** n * (n - 1) / math.factorial(n) for n in range(2, 16)]


def _gr(s: float) -> float:
    """(1 - e^-s - s e^-s) / s^2 with its removable singularity at 0 filled."""
    if abs(s) < 0.05:
        acc = 0.0
        for c in reversed(_GR_COEF):
            acc = acc * s + c
        return acc
    return (1.0 - math.exp(-s) - s * math.exp(-s)) / (s * s)


def _sinhc(x: float) -> float:
    if abs(x) < 1e-4:
        return 1.0 + x * x / 6.0
    return math.sinh(x) / x


def _em1c(x: float) -> float:
    return 1.0 if x == 0.0 else math.expm1(x) / x




def _pair_coeffs(domain):
    return (PER_A, PER_B) if domain.periodic else (0.0, 1.0)


@dataclass(frozen=True)
class _Terms:
    """Per-chart shorthands; s is the pair separation, ds = d sinh(s/2)."""
    c: float
    s: float
    ch: float
    sh: float
    ds: float
    zs: float
    k0s: float
    k1s: float
    gs: float
    d0: float
    m: float
    plus: float   # p1 e^{-s/2} + p2 e^{s/2}
    minus: float  # p1 e^{s/2} + p2 e^{-s/2}


def _terms(domain, z, w, eta, zeta) -> _Terms:
    h = 0.5 * w
    c = math.cos(h) / math.sin(h)
    s = zeta * c * c
    ch, sh, shc = math.cosh(0.5 * s), math.sinh(0.5 * s), _sinhc(0.5 * s)
    ds = 0.5 * zeta * c * shc
    a, b = _pair_coeffs(domain)
    return _Terms(c, s, ch, sh, ds, zeta * shc,
                  a * math.exp(s) + b * math.exp(-s),
                  b * math.exp(-s) - a * math.exp(s),
                  a * _gr(-s) + b * _gr(s),
                  -a * _em1c(s) + b * _em1c(-s),
                  0.5 * eta, z * ch + ds, z * ch - ds)


def _coupling(domain, pos):
    """Branch weights: K(x_obs - x_src) = ea + eb split as a e^X + b e^-X, self excluded."""
    X = pos[:, None] - pos[None, :]
    if domain.periodic:
        Xm = np.mod(X, 1.0)
        ea, eb = PER_A * np.exp(Xm), PER_B * np.exp(-Xm)
    else:
        e = np.exp(-np.abs(X))
        ea, eb = np.where(X < 0, e, 0.0), np.where(X > 0, e, 0.0)
    np.fill_diagonal(ea, 0.0)
    np.fill_diagonal(eb, 0.0)
    return ea, eb


def _unpack(y, nc, nr):
    return y[:4 * nc].reshape(nc, 4), y[4 * nc:4 * nc + nr], y[4 * nc + nr:]


def _field(domain, y, nc, nr):
    """Vector field with nc pairs in the singular chart and nr regular peakons.

    Layout of y: (z, w, eta, zeta) per chart, then regular positions, then strengths.
    A chart acts on everything else through its pair sums ``plus`` and ``minus``.
    """
    C, qr, pr = _unpack(y, nc, nr)
    T = [_terms(domain, *row) for row in C]
    pos = np.concatenate([[t.m for t in T], qr])
    A = np.concatenate([[t.minus for t in T], pr])
    B = np.concatenate([[t.plus for t in T], pr])
    ea, eb = _coupling(domain, pos)
    Ep, Em = ea @ A, eb @ B
    a, b = _pair_coeffs(domain)
    out = np.empty_like(y)
    for k, (t, (z, w, _, zeta)) in enumerate(zip(T, C)):
        cos2, sin2, sinw = math.cos(0.5 * w) ** 2, math.sin(0.5 * w) ** 2, math.sin(w)
        ep, em = Ep[k], Em[k]
        out[4 * k] = -ep * t.plus + em * t.minus
        out[4 * k + 1] = ((z * z * cos2 - sin2) * t.k1s
                          - ep * (2 * cos2 * z * t.sh + sinw * t.ch)
                          + em * (sinw * t.ch - 2 * cos2 * z * t.sh))
        out[4 * k + 2] = z * (a + b + t.k0s) + 2 * t.ch * (ep + em)
        out[4 * k + 3] = (zeta * t.c * z * z * t.k1s + zeta * zeta * t.c * t.gs
                          - ep * (2 * zeta * t.c * z * t.sh + 2 * zeta * t.ch - t.zs)
                          + em * (2 * zeta * t.ch - 2 * zeta * t.c * z * t.sh - t.zs))
    out[4 * nc:4 * nc + nr] = Ep[nc:] + Em[nc:] + (a + b) * pr
    out[4 * nc + nr:] = -pr * (Ep[nc:] - Em[nc:])
    return out


def _energy(domain, y, nc, nr):
    C, qr, pr = _unpack(y, nc, nr)
    T = [_terms(domain, *row) for row in C]
    a, b = _pair_coeffs(domain)
    own = sum(z * z * (a + b + t.k0s) + zeta * t.d0 for t, (z, _, _, zeta) in zip(T, C))
    own += 2.0 * (a + b) * float(pr @ pr)
    pos = np.concatenate([[t.m for t in T], qr])
    A = np.concatenate([[t.minus for t in T], pr])
    B = np.concatenate([[t.plus for t in T], pr])
    ea, eb = _coupling(domain, pos)
    # an observing chart sees sources at its two peaks: weights plus (for ea) and minus (for eb)
    cross = B @ ea @ A + A @ eb @ B
    return own + 2.0 * float(cross)


def rhs_singular(chart: SingularChart) -> np.ndarray:
    """d/dt of the chart vector (z, w, eta, zeta, q_bg..., p_bg...)."""
    if not abs(chart.w - math.pi) < math.pi / 2:
        raise ChartDomainExceeded(f"|w - pi| = {abs(chart.w - math.pi):.3g} >= pi/2")
    if not chart.zeta > 0:
        raise ChartDomainExceeded("zeta must be positive")
    return _field(chart.domain, chart.vector(), 1, len(chart.background))


def chart_energy(chart: SingularChart) -> float:
    """Energy of the profile a chart describes; at w = pi this includes the concentrated atom."""
    return _energy(chart.domain, chart.vector(), 1, len(chart.background))


def chart_from_pair(domain, p1, p2, q1, q2):
    d = p2 - p1
    w = 2.0 * math.atan(d)
    if d < 0:
        w += 2.0 * math.pi
    return p1 + p2, w, q1 + q2, d * d * (q2 - q1)


def pair_from_chart(z, w, eta, zeta):
    d = math.tan(0.5 * w)
    s = zeta / (d * d)
    return 0.5 * (z - d), 0.5 * (z + d), 0.5 * (eta - s), 0.5 * (eta + s)


def _at_collision(w):
    return abs(math.cos(0.5 * w)) < 1e-15


def _wrap(domain, x):
    return x % 1.0 if domain.periodic else x


def _chart_peaks(domain, z, w, eta, zeta):
    """(peakons, atoms) described by one chart row."""
    if _at_collision(w):
        qbar = _wrap(domain, 0.5 * eta)
        return [Peakon(z, qbar)], ([(qbar, zeta)] if zeta > 0 else [])
    p1, p2, q1, q2 = pair_from_chart(z, w, eta, zeta)
    return [Peakon(p1, q1), Peakon(p2, q2)], []


def chart_state(chart: SingularChart) -> MultipeakonState:
    """Reconstruct the multipeakon a chart describes (merged peak plus atom at w = pi)."""
    peaks, atoms = _chart_peaks(chart.domain, chart.z, chart.w, chart.eta, chart.zeta)
    return MultipeakonState(chart.domain, chart.background + tuple(peaks), chart.time, tuple(atoms))


# -- collision detection and chart switching --------------------------------------

def _gap(domain, lo, hi):
    return (hi - lo) % 1.0 if domain.periodic else hi - lo


def _trigger(domain, cfg, pi_, pj, qi, qj):
    """Event function of one adjacent pair; crosses zero when the chart should be entered."""
    if pi_ * pj >= 0:
        return 1.0
    d_enter = 1.0 / math.tan(cfg.enter_angle)
    wide = d_enter - abs(pj - pi_)
    close = max(_gap(domain, qi, qj) - cfg.collision_gap, wide)
    cap = max(cfg.strength_cap - max(abs(pi_), abs(pj)), wide)
    return min(close, cap)


def _adjacent(n, periodic):
    if n < 2:
        return []
    pairs = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        pairs.append((n - 1, 0))
    elif periodic:
        pairs.append((1, 0))
    return pairs


def detect_collision(state: MultipeakonState, cfg: IntegratorConfig, direction: int = 1):
    """Adjacent pair (i, j) of ``state.peakons`` that must switch to the singular chart, or None.

    A pair qualifies when its strengths have opposite signs, it is closing in the
    direction of integration, and its gap is below ``collision_gap`` (or a strength
    exceeds ``strength_cap``).  Same-sign pairs never qualify.
    """
    q, p = state.q, state.p
    if q.size < 2:
        return None
    dq, _ = _regular_field(state.domain, q, p)
    for i, j in _adjacent(q.size, state.domain.periodic):
        if p[i] * p[j] >= 0:
            continue
        gap = _gap(state.domain, q[i], q[j])
        closing = direction * (dq[j] - dq[i]) < 0
        near = gap < cfg.collision_gap or max(abs(p[i]), abs(p[j])) > cfg.strength_cap
        if near and closing:
            _check_isolated(state.domain, q, (i, j), cfg)
            return i, j
    return None


def _check_isolated(domain, q, pair, cfg):
    i, j = pair
    lo = q[i]
    hi = lo + _gap(domain, q[i], q[j])
    for k in range(q.size):
        if k in pair:
            continue
        if domain.periodic:
            dist = min((q[k] - hi) % 1.0, (lo - q[k]) % 1.0)
        else:
            dist = max(lo - q[k], q[k] - hi)
        if dist < cfg.collision_gap:
            raise TripleCollisionAnomaly(
                f"three or more peakons within {cfg.collision_gap} of x={lo:.6g}")


def enter_chart(state: MultipeakonState, pair, cfg: IntegratorConfig) -> SingularChart:
    i, j = pair
    p, q = state.p, state.q
    qj = q[i] + _gap(state.domain, q[i], q[j])
    z, w, eta, zeta = chart_from_pair(state.domain, p[i], p[j], q[i], qj)
    bg = tuple(pk for k, pk in enumerate(state.peakons) if k not in (i, j))
    return SingularChart(state.domain, z, w, eta, zeta, bg, state.time)


def exit_chart(chart: SingularChart, cfg: IntegratorConfig):
    """Leave the chart; returns (state, lost_energy).

    Conservative: the two outgoing peakons are rebuilt, which requires
    |w - pi| >= exit_angle.  Dissipative: at w = pi the pair merges into one peakon
    of strength z at the collision point and its concentrated energy is returned
    as lost (never stored as an atom).
    """
    off = abs(chart.w - math.pi)
    if cfg.mode == CONSERVATIVE:
        if off < cfg.exit_angle * (1 - 1e-9):
            raise ChartDomainExceeded("chart not yet far enough past the collision")
        p1, p2, q1, q2 = pair_from_chart(chart.z, chart.w, chart.eta, chart.zeta)
        peaks = chart.background + (Peakon(p1, q1), Peakon(p2, q2))
        return MultipeakonState(chart.domain, peaks, chart.time), 0.0
    if off > 1e-9:
        raise ChartDomainExceeded("dissipative exit only at the collision instant")
    return MultipeakonState(chart.domain, chart.background + _merged(chart.domain, chart.z,
                                                                     chart.eta, chart.background),
                            chart.time), chart.zeta


def _merged(domain, z, eta, others):
    scale = max([1.0] + [abs(pk.strength) for pk in others])
    if abs(z) <= 1e-13 * scale:
        return ()
    return (Peakon(z, _wrap(domain, 0.5 * eta)),)


# -- trajectories ----------------------------------------------------------------

@dataclass
class _Piece:
    t0: float
    t1: float
    dense: Callable
    to_state: Callable
    charted: bool


@dataclass
class Trajectory:
    initial: MultipeakonState
    samples: list = field(default_factory=list)      # MultipeakonState at requested times
    charts: list = field(default_factory=list)       # chart flag per sample
    events: list = field(default_factory=list)       # dicts; collisions carry the state at tau
    drift: list = field(default_factory=list)        # (t, E(t) - E(0)) per accepted step
    pieces: list = field(default_factory=list)
    final: Optional[MultipeakonState] = None

    def _piece(self, t):
        for pc in self.pieces:
            if min(pc.t0, pc.t1) <= t <= max(pc.t0, pc.t1):
                return pc
        if self.pieces and math.isclose(t, self.pieces[-1].t1, rel_tol=1e-12, abs_tol=1e-14):
            return self.pieces[-1]
        raise ValueError(f"t={t} outside the integrated window")

    def state_at(self, t: float) -> MultipeakonState:
        pc = self._piece(t)
        return pc.to_state(pc.dense(t), t)

    def chart_at(self, t: float) -> bool:
        return self._piece(t).charted

    @property
    def collision_events(self):
        return [e for e in self.events if e["type"] == "collision"]

    def max_drift(self) -> float:
        e0 = energy(self.initial)
        return max((abs(d) for _, d in self.drift), default=0.0) / max(e0, 1e-300)

    def events_json(self) -> str:
        keep = ("type", "t", "q_bar", "e_tau", "mode", "lost_energy")
        return json.dumps([{k: e[k] for k in keep if k in e} for e in self.events])

    def to_csv(self) -> str:
        n = max((len(s) for s in self.samples), default=0)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        head = ["t", "E", "H", "n_peakons", "chart"]
        for k in range(1, n + 1):
            head += [f"p{k}", f"q{k}"]
        wr.writerow(head)
        for st, ch in zip(self.samples, self.charts):
            row = [_f(st.time), _f(energy(st)), _f(hamiltonian(st)), len(st), int(ch)]
            for pk in st.peakons:
                row += [_f(pk.strength), _f(pk.position)]
            row += [""] * (len(head) - len(row))
            wr.writerow(row)
        return buf.getvalue()


def _f(x):
    return f"{float(x):.17g}"


@dataclass
class _Active:
    """Bookkeeping for one pair inside the chart."""
    passed: bool = False


class _Layout:
    """Entities of one integration segment: charted pairs, then regular peakons."""

    def __init__(self, domain, charts, nr):
        self.domain, self.charts, self.nr = domain, charts, nr

    @property
    def nc(self):
        return len(self.charts)

    def split(self, y):
        return _unpack(y, self.nc, self.nr)

    def state(self, y, t) -> MultipeakonState:
        C, qr, pr = self.split(y)
        peaks = [Peakon(float(p), float(q)) for p, q in zip(pr, qr)]
        atoms = []
        for row in C:
            pk, at = _chart_peaks(self.domain, *row)
            peaks += pk
            atoms += at
        return MultipeakonState(self.domain, tuple(peaks), float(t), tuple(atoms))

    def spans(self, y):
        """(lo, hi, kind, index) of every entity, sorted by position."""
        C, qr, _ = self.split(y)
        out = []
        for k, (z, w, eta, zeta) in enumerate(C):
            t = 0.5 * zeta / math.tan(0.5 * w) ** 2 if not _at_collision(w) else 0.0
            m = 0.5 * eta
            out.append((m - t, m + t, "chart", k))
        out += [(q, q, "reg", k) for k, q in enumerate(qr)]
        if self.domain.periodic:
            out = [(lo - math.floor(lo), hi - math.floor(lo), kd, k) for lo, hi, kd, k in out]
        out.sort(key=lambda e: e[0])
        return out


def _build(domain, charts, regular):
    """charts: list of (row4, _Active); regular: list of Peakon."""
    lay = _Layout(domain, [a for _, a in charts], len(regular))
    y = np.concatenate([np.array([r for r, _ in charts], float).reshape(-1),
                        [pk.position for pk in regular], [pk.strength for pk in regular]])
    return lay, y


def _entities(lay, y):
    C, qr, pr = lay.split(y)
    charts = [(np.array(C[k]), lay.charts[k]) for k in range(lay.nc)]
    regular = [Peakon(float(p), float(q)) for p, q in zip(pr, qr)]
    return charts, regular


def _neighbours(lay, y):
    sp = lay.spans(y)
    n = len(sp)
    pairs = _adjacent(n, lay.domain.periodic)
    return [(sp[i], sp[j]) for i, j in pairs]


def _entry_pairs(lay, y):
    """Adjacent regular-regular pairs as (k_left, k_right) regular indices."""
    return [(a[3], b[3]) for a, b in _neighbours(lay, y) if a[2] == "reg" and b[2] == "reg"]


def _closing(lay, y, k1, k2, direction):
    f = _field(lay.domain, y, lay.nc, lay.nr)
    off = 4 * lay.nc
    return direction * (f[off + k2] - f[off + k1]) < 0


def simulate(initial: MultipeakonState, t_end: float, cfg: IntegratorConfig = IntegratorConfig(),
             sample_times: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate a multipeakon from ``initial.time`` to ``t_end`` (either direction).

    Every peakon-antipeakon collision is crossed inside the singular chart and
    logged as an event with its time, position and concentrated energy.  Several
    disjoint pairs may be in the chart at once.
    """
    dom = initial.domain
    t0 = float(initial.time)
    direction = 1 if t_end >= t0 else -1
    if sample_times is None:
        sample_times = [t0, t_end]
    pending = sorted((float(s) for s in sample_times), key=lambda s: direction * s)
    if any(direction * (s - t0) < 0 or direction * (s - t_end) > 0 for s in pending):
        raise ValueError("sample times must lie between the initial time and t_end")
    traj = Trajectory(initial=initial)
    e0 = energy(initial)

    lay, y = _build(dom, [], list(initial.peakons))
    t = t0
    while pending and pending[0] == t0:
        pending.pop(0)
        traj.samples.append(initial)
        traj.charts.append(False)

    def emit(t_hi, dense, conv, charted, inclusive=True):
        while pending:
            s = pending[0]
            ahead = direction * (s - t_hi)
            if ahead > 0 or (ahead == 0 and not inclusive):
                break
            pending.pop(0)
            traj.samples.append(conv(dense(s), s))
            traj.charts.append(charted)

    while True:
        lay, y = _enter_pending(lay, y, t, cfg, direction)
        if direction * (t_end - t) <= 0:
            break
        lay, y, t = _segment(lay, y, t, t_end, cfg, direction, traj, emit, e0)
    for s in pending:
        traj.samples.append(lay.state(y, s))
        traj.charts.append(lay.nc > 0)
    traj.final = lay.state(y, t)
    return traj


def _enter_pending(lay, y, t, cfg, direction):
    """Move every qualifying regular pair into the chart."""
    while True:
        C, qr, pr = lay.split(y)
        hit = None
        for k1, k2 in _entry_pairs(lay, y):
            if pr[k1] * pr[k2] >= 0:
                continue
            gap = _gap(lay.domain, qr[k1], qr[k2])
            # slack: a located event sits exactly on the threshold
            near = (gap < cfg.collision_gap * (1 + 1e-9)
                    or max(abs(pr[k1]), abs(pr[k2])) > cfg.strength_cap * (1 - 1e-9))
            if near and _closing(lay, y, k1, k2, direction):
                hit = (k1, k2)
                break
        if hit is None:
            return lay, y
        k1, k2 = hit
        _isolated(lay, y, ("reg", k1), ("reg", k2), cfg)
        charts, regular = _entities(lay, y)
        q2 = qr[k1] + _gap(lay.domain, qr[k1], qr[k2])
        row = np.array(chart_from_pair(lay.domain, pr[k1], pr[k2], qr[k1], q2))
        regular = [pk for k, pk in enumerate(regular) if k not in hit]
        lay, y = _build(lay.domain, charts + [(row, _Active())], regular)


def _isolated(lay, y, left, right, cfg):
    for a, b in _neighbours(lay, y):
        ids = {(a[2], a[3]), (b[2], b[3])}
        touches = len(ids & {left, right}) == 1
        if touches and _gap(lay.domain, a[1], b[0]) < cfg.collision_gap:
            raise TripleCollisionAnomaly(
                f"three or more peakons within {cfg.collision_gap} of x={a[1]:.6g}")


def _segment(lay, y0, t0, t_end, cfg, direction, traj, emit, e0):
    """Integrate one fixed layout until t_end or the first event; returns the new layout."""
    dom, nc, nr = lay.domain, lay.nc, lay.nr
    conv = lay.state
    charted = nc > 0
    pairs = _entry_pairs(lay, y0)
    near = _neighbours(lay, y0)

    def g_entry(y, k):
        _, qr, pr = lay.split(y)
        k1, k2 = pairs[k]
        return _trigger(dom, cfg, pr[k1], pr[k2], qr[k1], qr[k2])

    def g_coll(y, k):
        return y[4 * k + 1] - math.pi

    def g_exit(y, k):
        return cfg.exit_angle - abs(y[4 * k + 1] - math.pi)

    def g_near(y, k):
        sp = _neighbours(lay, y)[k]
        return _gap(dom, sp[0][1], sp[1][0]) - cfg.collision_gap

    near_idx = [k for k, (a, b) in enumerate(near) if "chart" in (a[2], b[2])]
    events = ([("entry", k, g_entry) for k in range(len(pairs))]
              + [("coll", k, g_coll) for k in range(nc) if not lay.charts[k].passed]
              + [("exit", k, g_exit) for k in range(nc) if lay.charts[k].passed]
              + [("near", k, g_near) for k in near_idx])
    # events sitting on their threshold at the segment start must first move away
    armed = [g(y0, k) > 1e-12 for kind, k, g in events]
    side = [math.copysign(1.0, g(y0, k)) if kind == "coll" else 1.0 for kind, k, g in events]

    solver = RK45(lambda t, y: _field(dom, y, nc, nr), t0, y0, t_end,
                  rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(f"step size collapsed at t={solver.t}")
        t_old, t_new, y = solver.t_old, solver.t, solver.y
        for k in range(nc):
            if not abs(y[4 * k + 1] - math.pi) < math.pi / 2 or not y[4 * k + 3] > 0:
                raise ChartDomainExceeded(f"chart left its domain at t={t_new}")
        dense = solver.dense_output()
        hit = None
        for e, (kind, k, g) in enumerate(events):
            val = g(y, k)
            fired = (math.copysign(1.0, val) != side[e]) if kind == "coll" else (armed[e] and val <= 0)
            if fired:
                te = brentq(lambda s: g(dense(s), k), t_old, t_new, xtol=1e-15, rtol=1e-15)
                if hit is None or direction * (te - hit[0]) < 0:
                    hit = (te, e)
            elif kind != "coll" and val > 0:
                armed[e] = True
        if hit is None:
            emit(t_new, dense, conv, charted)
            traj.pieces.append(_Piece(t_old, t_new, dense, conv, charted))
            traj.drift.append((t_new, _energy(dom, y, nc, nr) - e0))
            continue
        te, e = hit
        ye = dense(te)
        kind, k, _ = events[e]
        emit(te, dense, conv, charted, inclusive=kind == "coll")
        traj.pieces.append(_Piece(t_old, te, dense, conv, charted))
        traj.drift.append((te, _energy(dom, ye, nc, nr) - e0))
        return _apply(lay, ye, te, kind, k, pairs, near, cfg, direction, traj)
    return lay, solver.y, solver.t


def _apply(lay, y, t, kind, k, pairs, near, cfg, direction, traj):
    dom = lay.domain
    charts, regular = _entities(lay, y)
    if kind == "entry":
        # the enter check at the next segment start decides (it also checks closing)
        return lay, y, t
    if kind == "coll":
        row, act = charts[k]
        row = row.copy()
        row[1] = math.pi
        z, _, eta, zeta = row
        at_tau = _build(dom, [(row, act)] + [c for i, c in enumerate(charts) if i != k], regular)
        event = {"type": "collision", "t": float(t), "q_bar": _wrap(dom, 0.5 * eta),
                 "e_tau": float(zeta), "mode": cfg.mode, "state": at_tau[0].state(at_tau[1], t)}
        traj.events.append(event)
        if cfg.mode == DISSIPATIVE:
            others = [c for i, c in enumerate(charts) if i != k]
            event["lost_energy"] = float(zeta)
            regular = regular + list(_merged(dom, z, eta, regular))
            lay, y = _build(dom, others, regular)
            return lay, y, t
        charts[k] = (charts[k][0], _Active(passed=True))
        lay, y = _build(dom, charts, regular)
        return lay, y, t
    if kind == "near":
        a, b = near[k]
        for side in (a, b):
            if side[2] == "chart" and not lay.charts[side[3]].passed:
                raise TripleCollisionAnomaly(
                    f"a third peakon reached a colliding pair at x={side[0]:.6g}")
        ks = {side[3] for side in (a, b) if side[2] == "chart"}
    else:
        ks = {k}
    for kk in sorted(ks, reverse=True):
        row, _ = charts.pop(kk)
        p1, p2, q1, q2 = pair_from_chart(*row)
        regular += [Peakon(p1, q1), Peakon(p2, q2)]
    regular.sort(key=lambda pk: pk.position)
    lay, y = _build(dom, charts, regular)
    return lay, y, t
