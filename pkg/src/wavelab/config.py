"""JSON run configuration: one scenario, one parameter block, a seed and output paths."""

from __future__ import annotations

import json
import math
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields
from typing import Optional

from .errors import ConfigInvalid

SCENARIOS = {
    "peakon_simulate": "peakon",
    "peakon_collide": "peakon",
    "metric_distance": "metric",
    "metric_stability": "metric",
    "broadwell_run": "broadwell",
    "broadwell_rescaled": "broadwell",
    "approximate_data": "approx",
}


@dataclass
class StateSpec:
    p: list = field(default_factory=list)
    q: list = field(default_factory=list)

    def check(self, path):
        if len(self.p) != len(self.q):
            raise ConfigInvalid(f"{path}.q", "p and q must have the same length")
        for i, v in enumerate(self.p + self.q):
            if not math.isfinite(v):
                raise ConfigInvalid(f"{path}", "values must be finite")


@dataclass
class PeakonBlock:
    domain: str = "real"               # real | periodic
    alpha: float = 0.5
    state: StateSpec = field(default_factory=lambda: StateSpec([1.0, -1.0], [-1.0, 1.0]))
    t_end: float = 4.0
    mode: str = "conservative"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    collision_gap: float = 1e-3
    samples: int = 81
    profile_times: list = field(default_factory=list)
    profile_points: int = 201
    profile_window: list = field(default_factory=lambda: [-4.0, 4.0])
    drift_tol: float = 1e-7

    def check(self, path):
        _choice(path, "domain", self.domain, ("real", "periodic"))
        _choice(path, "mode", self.mode, ("conservative", "dissipative"))
        _positive(path, self, "rel_tol", "abs_tol", "collision_gap", "drift_tol")
        if not 0 < self.alpha < 1:
            raise ConfigInvalid(f"{path}.alpha", "must lie in (0, 1)")
        if self.samples < 2 or self.profile_points < 2:
            raise ConfigInvalid(f"{path}.samples", "need at least two samples")
        if len(self.profile_window) != 2 or not self.profile_window[1] > self.profile_window[0]:
            raise ConfigInvalid(f"{path}.profile_window", "need [lo, hi] with lo < hi")
        self.state.check(f"{path}.state")


@dataclass
class MetricBlock:
    domain: str = "real"
    alpha: float = 0.5
    u: StateSpec = field(default_factory=lambda: StateSpec([1.0], [0.0]))
    v: StateSpec = field(default_factory=lambda: StateSpec([1.0], [0.0]))
    knots: Optional[int] = None
    t_end: float = 1.0
    samples: int = 6
    c2_bound: Optional[float] = None    # stability: exit 2 if J(t) > J(0) e^{c2 t}

    def check(self, path):
        _choice(path, "domain", self.domain, ("real", "periodic"))
        if self.knots is not None and self.knots < 2:
            raise ConfigInvalid(f"{path}.knots", "need at least two knots")
        _positive(path, self, "t_end")
        if self.samples < 2:
            raise ConfigInvalid(f"{path}.samples", "need at least two samples")
        self.u.check(f"{path}.u")
        self.v.check(f"{path}.v")


@dataclass
class BroadwellBlock:
    frame: str = "rescaled"
    nx: int = 48
    ny: int = 48
    bounds: list = field(default_factory=lambda: [-1.0, 1.0, -1.0, 1.0])
    periodic: bool = False
    t0: float = 0.0
    t_end: float = 2.0
    dt: Optional[float] = None
    init: str = "uniform"
    amplitude: float = 1.0
    modes: int = 3
    kappa: Optional[float] = None
    sample_every: int = 10
    order: str = "cubic"
    snapshot: bool = True

    def check(self, path):
        _choice(path, "frame", self.frame, ("original", "rescaled"))
        _choice(path, "init", self.init, ("uniform", "random", "gaussian"))
        _choice(path, "order", self.order, ("cubic", "linear"))
        if self.nx < 4 or self.ny < 4:
            raise ConfigInvalid(f"{path}.nx", "grids need at least 4 nodes per side")
        if len(self.bounds) != 4:
            raise ConfigInvalid(f"{path}.bounds", "need [x0, x1, y0, y1]")
        if not self.t_end > self.t0:
            raise ConfigInvalid(f"{path}.t_end", "must exceed t0")
        if self.dt is not None and not self.dt > 0:
            raise ConfigInvalid(f"{path}.dt", "must be positive")
        if self.sample_every < 1:
            raise ConfigInvalid(f"{path}.sample_every", "must be >= 1")


@dataclass
class ApproxBlock:
    profile: dict = field(default_factory=lambda: {"kind": "gaussian"})
    domain: str = "real"
    alpha: float = 0.5
    N: list = field(default_factory=lambda: [8, 16, 32, 64])
    tol: float = 1e-3
    radius: Optional[float] = None
    radius_method: str = "tail"
    epsilon_mollify: float = 0.0

    def check(self, path):
        _choice(path, "domain", self.domain, ("real", "periodic"))
        _choice(path, "radius_method", self.radius_method, ("weighted", "tail"))
        _positive(path, self, "tol")
        if not self.N or any(int(n) < 1 for n in self.N):
            raise ConfigInvalid(f"{path}.N", "need positive cell counts")
        from .initial_data import Profile
        try:
            Profile.from_dict(self.profile)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"{path}.profile", str(exc)) from None


BLOCKS = {"peakon": PeakonBlock, "metric": MetricBlock, "broadwell": BroadwellBlock,
          "approx": ApproxBlock}


@dataclass
class RunConfig:
    scenario: str
    seed: int = 0
    out: Optional[str] = None
    peakon: Optional[PeakonBlock] = None
    metric: Optional[MetricBlock] = None
    broadwell: Optional[BroadwellBlock] = None
    approx: Optional[ApproxBlock] = None

    @property
    def block(self):
        return getattr(self, SCENARIOS[self.scenario])

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigInvalid("scenario", f"unknown scenario {self.scenario!r}")
        present = [k for k in BLOCKS if getattr(self, k) is not None]
        want = SCENARIOS[self.scenario]
        if present != [want]:
            raise ConfigInvalid(want, f"exactly one block, '{want}', must be present "
                                      f"(found {present or 'none'})")
        self.block.check(want)
        return self

    @classmethod
    def default(cls, scenario: str, seed: int = 0) -> "RunConfig":
        if scenario not in SCENARIOS:
            raise ConfigInvalid("scenario", f"unknown scenario {scenario!r}")
        key = SCENARIOS[scenario]
        block = BLOCKS[key]()
        if scenario == "peakon_simulate":
            block.state = StateSpec([1.0], [0.0])
            block.t_end = 3.0
        if scenario == "metric_stability":
            block.u = StateSpec([1.0, 0.5], [-1.0, 1.0])
            block.v = StateSpec([1.05, 0.5], [-1.0, 1.05])
        if scenario == "broadwell_run":
            block.frame = "original"
            block.periodic = True
            block.init = "random"
        return cls(scenario=scenario, seed=seed, **{key: block}).validate()

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "seed": self.seed}
        if self.out is not None:
            out["out"] = self.out
        for k in BLOCKS:
            if getattr(self, k) is not None:
                out[k] = asdict(getattr(self, k))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigInvalid("", "config must be a JSON object")
        return _build(cls, d, "").validate()

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


# -- schema plumbing ------------------------------------------------------------------------

def _choice(path, name, value, allowed):
    if value not in allowed:
        raise ConfigInvalid(f"{path}.{name}", f"must be one of {list(allowed)}")


def _positive(path, obj, *names):
    for n in names:
        if not getattr(obj, n) > 0:
            raise ConfigInvalid(f"{path}.{n}", "must be positive")


def _join(path, key):
    return f"{path}.{key}" if path else key


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if isinstance(tp, type) and hasattr(tp, "__dataclass_fields__"):
        if not isinstance(value, dict):
            raise ConfigInvalid(path, "expected an object")
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(path, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(path, "expected a string")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigInvalid(path, "expected a list")
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigInvalid(f"{path}[{i}]", "expected a number")
        return [float(v) if isinstance(v, float) else v for v in value]
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigInvalid(path, "expected an object")
        return value
    return value


def _build(cls, data: dict, path: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigInvalid(_join(path, key), "unknown field")
    kw = {}
    for f in fields(cls):
        if f.name in data:
            kw[f.name] = _coerce(hints[f.name], data[f.name], _join(path, f.name))
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigInvalid(_join(path, f.name), "required field missing")
    return cls(**kw)
