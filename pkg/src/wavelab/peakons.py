"""Multipeakon profiles on the real line and on the unit circle.

A state is a finite sum ``u(x) = sum_i p_i K(x - q_i)`` where the kernel ``K`` is
``exp(-|x|)`` on the real line and its 1-periodization ``chi`` on the circle.
Everything here is closed form: between consecutive peaks a profile is
``A e^(y-c) + B e^-(y-c)``, so energies, convolutions and norms reduce to sums of
exponential integrals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

E = math.e
# chi(x) = PER_A e^x + PER_B e^-x on [0, 1]
PER_A = 1.0 / (E - 1.0)
PER_B = E / (E - 1.0)
CHI0 = PER_A + PER_B


@dataclass(frozen=True)
class RealLine:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def periodic(self) -> bool:
        return False


@dataclass(frozen=True)
class Periodic:
    period: float = field(default=1.0, init=False)

    @property
    def periodic(self) -> bool:
        return True


Domain = Union[RealLine, Periodic]


@dataclass(frozen=True)
class Peakon:
    strength: float
    position: float


@dataclass(frozen=True)
class MultipeakonState:
    """Immutable multipeakon profile plus the atomic part of its energy measure.

    Construction normalizes the peakon list: zero strengths are pruned,
    periodic positions are reduced to [0, 1), and peakons are sorted by position.
    """

    domain: Domain
    peakons: tuple = ()
    time: float = 0.0
    energy_atoms: tuple = ()

    def __post_init__(self):
        peaks = []
        for pk in self.peakons:
            if not isinstance(pk, Peakon):
                pk = Peakon(*pk)
            p, q = float(pk.strength), float(pk.position)
            if not (math.isfinite(p) and math.isfinite(q)):
                raise ValueError("peakon data must be finite")
            if p == 0.0:
                continue
            if self.domain.periodic:
                q = q % 1.0
                if q >= 1.0:
                    q = 0.0
            peaks.append(Peakon(p, q))
        peaks.sort(key=lambda pk: pk.position)
        atoms = tuple((float(x), float(m)) for x, m in self.energy_atoms)
        if any(m <= 0.0 for _, m in atoms):
            raise ValueError("energy atom masses must be positive")
        object.__setattr__(self, "peakons", tuple(peaks))
        object.__setattr__(self, "energy_atoms", atoms)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_arrays(cls, domain, p, q, time=0.0, energy_atoms=()):
        return cls(domain, tuple(Peakon(a, b) for a, b in zip(p, q)), time, energy_atoms)

    @property
    def p(self) -> np.ndarray:
        return np.array([pk.strength for pk in self.peakons], dtype=float)

    @property
    def q(self) -> np.ndarray:
        return np.array([pk.position for pk in self.peakons], dtype=float)

    def __len__(self):
        return len(self.peakons)

    def replace(self, **changes) -> "MultipeakonState":
        kw = dict(domain=self.domain, peakons=self.peakons, time=self.time,
                  energy_atoms=self.energy_atoms)
        kw.update(changes)
        return MultipeakonState(**kw)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        if self.domain.periodic:
            dom = "periodic"
        else:
            dom = {"real_line": {"alpha": _num(self.domain.alpha)}}
        return {
            "domain": dom,
            "time": _num(self.time),
            "peakons": [{"p": _num(pk.strength), "q": _num(pk.position)} for pk in self.peakons],
            "atoms": [{"x": _num(x), "mass": _num(m)} for x, m in self.energy_atoms],
        }

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MultipeakonState":
        dom = d["domain"]
        if dom == "periodic":
            domain = Periodic()
        else:
            domain = RealLine(float(dom["real_line"]["alpha"]))
        peaks = tuple(Peakon(float(e["p"]), float(e["q"])) for e in d.get("peakons", []))
        atoms = tuple((float(e["x"]), float(e["mass"])) for e in d.get("atoms", []))
        return cls(domain, peaks, float(d.get("time", 0.0)), atoms)

    @classmethod
    def from_json(cls, text: str) -> "MultipeakonState":
        return cls.from_dict(json.loads(text))


def _num(x: float) -> float:
    # 17 significant digits survive the float -> str -> float round trip
    return float(f"{float(x):.17g}")


def _dumps(obj) -> str:
    return _encode(obj)


def _encode(o) -> str:
    if isinstance(o, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in o.items()) + "}"
    if isinstance(o, list):
        return "[" + ", ".join(_encode(v) for v in o) + "]"
    if isinstance(o, float):
        return f"{o:.17g}"
    return json.dumps(o)


# -- kernels -----------------------------------------------------------------

def chi(x):
    """Periodic peakon kernel: sum over n of exp(-|x - n|)."""
    r = np.mod(x, 1.0)
    return (np.exp(r) + np.exp(1.0 - r)) / (E - 1.0)


def chi_prime(x):
    """Derivative of ``chi``; 0 at the integers (symmetric convention)."""
    r = np.mod(x, 1.0)
    out = (np.exp(r) - np.exp(1.0 - r)) / (E - 1.0)
    return np.where(r == 0.0, 0.0, out)


def kernel(domain: Domain, x):
    if domain.periodic:
        return chi(x)
    return np.exp(-np.abs(x))


def kernel_prime(domain: Domain, x):
    if domain.periodic:
        return chi_prime(x)
    return -np.sign(x) * np.exp(-np.abs(x))


# -- pointwise evaluation ----------------------------------------------------

def evaluate_u(state: MultipeakonState, x):
    x = np.asarray(x, dtype=float)
    if not len(state):
        return np.zeros_like(x)
    d = x[..., None] - state.q
    return kernel(state.domain, d) @ state.p


def evaluate_ux(state: MultipeakonState, x):
    x = np.asarray(x, dtype=float)
    if not len(state):
        return np.zeros_like(x)
    d = x[..., None] - state.q
    return kernel_prime(state.domain, d) @ state.p


def gram(state: MultipeakonState) -> np.ndarray:
    q = state.q
    return kernel(state.domain, q[:, None] - q[None, :])


def hamiltonian(state: MultipeakonState) -> float:
    p = state.p
    if not p.size:
        return 0.0
    return 0.5 * float(p @ gram(state) @ p)


def energy(state: MultipeakonState) -> float:
    """Integral of u^2 + u_x^2 over the domain (one period) plus atom masses."""
    atoms = sum(m for _, m in state.energy_atoms)
    return 4.0 * hamiltonian(state) + atoms


def sup_norm(state: MultipeakonState) -> float:
    # |u| attains its max at a peak: between peaks u = A e^t + B e^-t has no
    # interior extremum unless A, B share a sign, where it is a minimum of |u|.
    if not len(state):
        return 0.0
    return float(np.max(np.abs(evaluate_u(state, state.q))))


def combine(u: MultipeakonState, v: MultipeakonState, cu=1.0, cv=-1.0) -> MultipeakonState:
    """The multipeakon ``cu*u + cv*v`` (no atoms); used for norm distances."""
    if u.domain != v.domain:
        from .errors import DomainMismatch
        raise DomainMismatch("states live on different domains")
    peaks = [Peakon(cu * pk.strength, pk.position) for pk in u.peakons]
    peaks += [Peakon(cv * pk.strength, pk.position) for pk in v.peakons]
    # merge coincident positions so norms see a clean profile
    merged = {}
    for pk in peaks:
        merged[pk.position] = merged.get(pk.position, 0.0) + pk.strength
    return MultipeakonState(u.domain, tuple(Peakon(p, q) for q, p in merged.items()), u.time)


# -- piecewise exponential representation ------------------------------------

@dataclass
class Segments:
    """Profile on [L_k, R_k] written as A_k e^(y-c_k) + B_k e^-(y-c_k)."""

    L: np.ndarray
    R: np.ndarray
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray


def segments(state: MultipeakonState, lo=None, hi=None) -> Segments:
    """Split [lo, hi] at the peaks and return the exponential coefficients.

    Real line defaults to the whole line (infinite end segments); the periodic
    default is one period starting at the first peak.
    """
    p, q = state.p, state.q
    if state.domain.periodic:
        if lo is None:
            lo = q[0] if q.size else 0.0
        if hi is None:
            hi = lo + 1.0
        n0, n1 = math.floor(lo) - 1, math.ceil(hi) + 1
        cuts = np.concatenate([q + n for n in range(n0, n1 + 1)]) if q.size else np.array([])
    else:
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        cuts = q
    cuts = np.unique(cuts[(cuts > lo) & (cuts < hi)])
    pts = np.concatenate([[lo], cuts, [hi]])
    L, R = pts[:-1], pts[1:]
    c = np.where(np.isfinite(L), np.where(np.isfinite(R), 0.5 * (L + R), L), R)
    c = np.where(np.isfinite(c), c, 0.0)
    A = np.zeros_like(c)
    B = np.zeros_like(c)
    if p.size:
        if state.domain.periodic:
            qh = q[None, :] + np.floor(c[:, None] - q[None, :])
            A = PER_A * (np.exp(c[:, None] - qh) @ p)
            B = PER_B * (np.exp(qh - c[:, None]) @ p)
        else:
            right = q[None, :] >= R[:, None]
            left = q[None, :] <= L[:, None]
            with np.errstate(over="ignore"):
                A = (np.where(right, np.exp(np.minimum(c[:, None] - q[None, :], 0.0)), 0.0)) @ p
                B = (np.where(left, np.exp(np.minimum(q[None, :] - c[:, None], 0.0)), 0.0)) @ p
    return Segments(L, R, c, A, B)


def int_exp(kappa, nu, a, b):
    """Elementwise integral of exp(kappa + nu*t) for t in [a, b] (a, b may be infinite)."""
    kappa, nu, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (kappa, nu, a, b)))
    out = np.zeros(kappa.shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        zero = nu == 0.0
        fin = np.isfinite(a) & np.isfinite(b)
        out = np.where(zero, (b - a) * np.exp(kappa), out)
        lo_end = np.where(nu > 0, a, b)
        # stable for finite intervals: exp at the smaller end times expm1 of the span
        small = kappa + nu * lo_end
        span = np.abs(nu) * (b - a)
        stable = np.exp(small) * np.expm1(span) / np.abs(nu)
        naive = (np.exp(kappa + nu * b) - np.exp(kappa + nu * a)) / np.where(zero, 1.0, nu)
        out = np.where(zero, out, np.where(fin, stable, naive))
    return np.where(b > a, out, 0.0)


def _coef_int(C, kappa, nu, a, b):
    """C * int exp(kappa + nu t), treating C == 0 as exactly zero (no 0*inf)."""
    val = int_exp(kappa, nu, a, b)
    return np.where(C == 0.0, 0.0, C * np.where(C == 0.0, 0.0, val))


def energy_by_segments(state: MultipeakonState) -> float:
    """Same quantity as ``energy`` (without atoms) integrated segment by segment."""
    s = segments(state)
    a, b = s.L - s.c, s.R - s.c
    tot = _coef_int(2 * s.A ** 2, 0.0, 2.0, a, b) + _coef_int(2 * s.B ** 2, 0.0, -2.0, a, b)
    return float(np.sum(tot))


def _abs_int(s: Segments, sign: float) -> float:
    """Integral of |A e^t + sign*B e^-t| over all segments."""
    total = 0.0
    for L, R, c, A, B in zip(s.L, s.R, s.c, s.A, s.B):
        a, b = L - c, R - c
        cuts = [a, b]
        ratio = -sign * B / A if A != 0.0 else -1.0
        if ratio > 0.0:
            t0 = 0.5 * math.log(ratio)
            if a < t0 < b:
                cuts = [a, t0, b]
        for t1, t2 in zip(cuts[:-1], cuts[1:]):
            v = _coef_int(np.array(A), 0.0, 1.0, t1, t2) + _coef_int(np.array(sign * B), 0.0, -1.0, t1, t2)
            total += abs(float(v))
    return total


def l1_norm(state: MultipeakonState) -> float:
    if not len(state):
        return 0.0
    return _abs_int(segments(state), +1.0)


def ux_l1_norm(state: MultipeakonState) -> float:
    if not len(state):
        return 0.0
    return _abs_int(segments(state), -1.0)


def h1_norm(state: MultipeakonState) -> float:
    return math.sqrt(max(4.0 * hamiltonian(state), 0.0))


def h1_distance(u: MultipeakonState, v: MultipeakonState) -> float:
    return h1_norm(combine(u, v))


def l1_distance(u: MultipeakonState, v: MultipeakonState) -> float:
    return l1_norm(combine(u, v))


# -- nonlocal source term -----------------------------------------------------

def convolve_P(state: MultipeakonState, x):
    """P = 1/2 K * (u^2 + u_x^2/2) and its x-derivative, in closed form."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not len(state):
        z = np.zeros_like(x)
        return z, z
    if state.domain.periodic:
        P = np.empty_like(x)
        Px = np.empty_like(x)
        for k, xk in enumerate(x):
            P[k], Px[k] = _convolve_periodic(state, xk)
        return P, Px
    s = segments(state)
    L, R, c, A, B = (v[None, :] for v in (s.L, s.R, s.c, s.A, s.B))
    X = x[:, None]
    g = ((1.5 * A ** 2, 2.0), (A * B, 0.0), (1.5 * B ** 2, -2.0))
    # y < x: kernel e^{(y-c) + (c-x)};  y > x: kernel e^{-(y-c) + (x-c)}
    la, lb = L - c, np.minimum(R, X) - c
    ra, rb = np.maximum(L, X) - c, R - c
    left = sum(_coef_int(C, c - X, mu + 1.0, la, lb) for C, mu in g)
    right = sum(_coef_int(C, X - c, mu - 1.0, ra, rb) for C, mu in g)
    P = 0.5 * np.sum(left + right, axis=1)
    Px = 0.5 * np.sum(right - left, axis=1)
    return P, Px


def _convolve_periodic(state, x):
    # integrate over the window [x-1, x]; there chi(x-y) = a e^{x-y} + b e^{y-x}
    s = segments(state, x - 1.0, x)
    a, b = s.L - s.c, s.R - s.c
    g = ((1.5 * s.A ** 2, 2.0), (s.A * s.B, 0.0), (1.5 * s.B ** 2, -2.0))
    P = Px = 0.0
    for C, mu in g:
        ta = _coef_int(C, x - s.c, mu - 1.0, a, b)   # e^{x-y}
        tb = _coef_int(C, s.c - x, mu + 1.0, a, b)   # e^{y-x}
        P += np.sum(PER_A * ta + PER_B * tb)
        Px += np.sum(PER_A * ta - PER_B * tb)
    return 0.5 * float(P), 0.5 * float(Px)


def random_state(rng: np.random.Generator, domain: Domain, n_max=4, energy_max=None,
                 spread=2.0) -> MultipeakonState:
    """Random multipeakon with 1..n_max peaks, optionally rescaled to an energy cap."""
    n = int(rng.integers(1, n_max + 1))
    p = rng.uniform(-1.5, 1.5, n)
    p = np.where(np.abs(p) < 0.1, 0.1 * np.sign(p + 1e-300), p)
    if domain.periodic:
        q = rng.uniform(0.0, 1.0, n)
    else:
        q = rng.uniform(-spread, spread, n)
    st = MultipeakonState.from_arrays(domain, p, q)
    if energy_max is not None:
        e = energy(st)
        target = rng.uniform(0.2, 1.0) * energy_max
        if e > 0:
            st = MultipeakonState.from_arrays(domain, st.p * math.sqrt(target / e), st.q)
    return st


def as_states(items: Iterable) -> list:
    return [it if isinstance(it, MultipeakonState) else MultipeakonState.from_dict(it) for it in items]
