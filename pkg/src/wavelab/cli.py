"""``wavelab`` command line: peakon run|collide, metric distance|stability, broadwell run, approx.

Exit codes: 0 success, 1 error, 2 the run finished but a monitored bound was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import broadwell as bw
from .config import RunConfig, StateSpec
from .dynamics import IntegratorConfig, simulate
from .errors import ConfigInvalid, WavelabError
from .initial_data import Profile, approximate_multipeakon, h1_error
from .metric import MetricOptions, characteristic_plan, cost, distance, stability_fit
from .peakons import (MultipeakonState, Periodic, RealLine, energy, evaluate_u, hamiltonian)

OK, ERROR, VIOLATION = 0, 1, 2

COMMANDS = {
    ("peakon", "run"): "peakon_simulate",
    ("peakon", "collide"): "peakon_collide",
    ("metric", "distance"): "metric_distance",
    ("metric", "stability"): "metric_stability",
    ("broadwell", "run"): "broadwell_run",
    ("approx", None): "approximate_data",
}


def _num(x):
    return f"{float(x):.17g}"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _domain(name, alpha):
    return Periodic() if name == "periodic" else RealLine(alpha)


def _state(spec: StateSpec, domain) -> MultipeakonState:
    return MultipeakonState.from_arrays(domain, spec.p, spec.q)


class Outputs:
    """Output layout: a directory, or a primary file whose siblings take the rest."""

    def __init__(self, out: str, primary: str):
        p = Path(out)
        if p.suffix in (".csv", ".json"):
            self.dir, self.primary = p.parent, p
        else:
            self.dir, self.primary = p, p / primary
        self.written = []

    def write(self, name, text, primary=False):
        path = self.primary if primary else self.dir / name
        _write(path, text)
        self.written.append(str(path))
        return path


# -- plot data ------------------------------------------------------------------------------

def emit_plotdata(traj, block, out: Outputs):
    """Profile slices u(t, x), world-lines q_i(t) and functional series as separate CSVs."""
    times = list(block.profile_times) or [s.time for s in traj.samples[:: max(1, len(traj.samples) // 4)]]
    lo, hi = block.profile_window
    xs = np.linspace(lo, hi, block.profile_points)
    rows = []
    for t in times:
        st = traj.state_at(float(t))
        if len(st):
            rows += [(float(t), float(x), float(u)) for x, u in zip(xs, evaluate_u(st, xs))]
    out.write("profiles.csv", _csv(["t", "x", "u"], rows))
    rows = []
    for st in traj.samples:
        rows += [(st.time, i, pk.strength, pk.position) for i, pk in enumerate(st.peakons)]
    out.write("worldlines.csv", _csv(["t", "index", "p", "q"], rows))
    rows = [(st.time, energy(st), hamiltonian(st), len(st),
             float(sum(m for _, m in st.energy_atoms))) for st in traj.samples]
    out.write("series.csv", _csv(["t", "E", "H", "n_peakons", "atom_mass"], rows))


# -- scenarios ----------------------------------------------------------------------------------

def run_peakon(cfg: RunConfig, out: Outputs):
    b = cfg.peakon
    u0 = _state(b.state, _domain(b.domain, b.alpha))
    icfg = IntegratorConfig(rel_tol=b.rel_tol, abs_tol=b.abs_tol, collision_gap=b.collision_gap,
                            mode=b.mode)
    times = list(np.linspace(0.0, b.t_end, b.samples))
    traj = simulate(u0, b.t_end, icfg, times)
    out.write("trajectory.csv", traj.to_csv(), primary=True)
    out.write("events.json", traj.events_json() + "\n")
    emit_plotdata(traj, b, out)
    drift = traj.max_drift()
    ncoll = len(traj.collision_events)
    violations = []
    if b.mode == "conservative" and drift > b.drift_tol:
        violations.append(f"energy drift {drift:.3g} > {b.drift_tol:g}")
    if cfg.scenario == "peakon_collide" and ncoll == 0:
        violations.append("no collision in the window")
    summary = {"scenario": cfg.scenario, "drift": drift, "collisions": ncoll,
               "final_energy": energy(traj.final), "violations": violations}
    out.write("summary.json", _json(summary))
    line = f"{cfg.scenario}: drift={drift:.3e} events={ncoll} violations={len(violations)}"
    return summary, line, violations


def run_metric_distance(cfg: RunConfig, out: Outputs):
    b = cfg.metric
    dom = _domain(b.domain, b.alpha)
    res = distance(_state(b.u, dom), _state(b.v, dom), MetricOptions(knots=b.knots))
    out.write("distance.json", _json(res.to_dict()), primary=True)
    return res.to_dict(), f"metric_distance: J={res.J:.6e} iterations={res.iterations}", []


def run_metric_stability(cfg: RunConfig, out: Outputs):
    b = cfg.metric
    dom = _domain(b.domain, b.alpha)
    u0, v0 = _state(b.u, dom), _state(b.v, dom)
    times = list(np.linspace(0.0, b.t_end, b.samples))
    tu, tv = simulate(u0, b.t_end, sample_times=times), simulate(v0, b.t_end, sample_times=times)
    opts = MetricOptions(knots=b.knots)
    first = distance(u0, v0, opts)
    free = not (tu.collision_events or tv.collision_events)
    rows = []
    for t, su, sv in zip(times, tu.samples, tv.samples):
        J = first.J if t == 0 else distance(su, sv, opts).J
        Jc = cost(su, sv, characteristic_plan(tu, tv, first.plan, t)) if free else float("nan")
        rows.append((t, J, Jc))
    fit = stability_fit([r[0] for r in rows], [r[1] for r in rows])
    violations = []
    if b.c2_bound is not None and fit["c2"] > b.c2_bound:
        violations.append(f"growth rate {fit['c2']:.3g} > {b.c2_bound:g}")
    out.write("stability.csv", _csv(["t", "J", "J_characteristic"], rows), primary=True)
    summary = {"collision_free": free, **fit, "violations": violations}
    out.write("summary.json", _json(summary))
    return summary, f"metric_stability: C2={fit['c2']:.4g} residual={fit['residual']:.3g}", violations


def run_broadwell(cfg: RunConfig, out: Outputs):
    b = cfg.broadwell
    frame = bw.RESCALED if cfg.scenario == "broadwell_rescaled" else b.frame
    bcfg = bw.BroadwellConfig(frame=frame, nx=b.nx, ny=b.ny, bounds=tuple(b.bounds),
                              periodic=b.periodic, t0=b.t0, t_end=b.t_end, dt=b.dt, init=b.init,
                              amplitude=b.amplitude, modes=b.modes, kappa=b.kappa,
                              sample_every=b.sample_every, order=b.order)
    run = bw.run_broadwell(bcfg, np.random.default_rng(cfg.seed))
    out.write("run.csv", run.to_csv(), primary=True)
    if b.snapshot:
        path = out.dir / "final.bwg"
        path.parent.mkdir(parents=True, exist_ok=True)
        bw.write_snapshot(run.final, path)
        out.written.append(str(path))
    violations = []
    if frame == bw.RESCALED:
        if run.violations:
            violations.append(f"{run.violations} samples above the Q14 comparison bound")
        if b.init == "uniform":
            cap = b.amplitude * math.exp(-(b.t_end - b.t0)) * 1.01
            top = float(np.max(run.final.w))
            if top > cap:
                violations.append(f"final max {top:.6g} above the decay envelope {cap:.6g}")
    summary = {"frame": frame, "kappa": run.kappa, "final_mass": run.final.mass(),
               "final_max": float(np.max(run.final.w)), "clipped_mass": run.final.clipped,
               "samples": len(run.rows), "violations": violations}
    out.write("summary.json", _json(summary))
    line = (f"{cfg.scenario}: t={run.final.t:.4g} mass={run.final.mass():.6g} "
            f"violations={len(violations)}")
    return summary, line, violations


def run_approx(cfg: RunConfig, out: Outputs):
    b = cfg.approx
    f = Profile.from_dict(b.profile)
    dom = _domain(b.domain, b.alpha)
    rows = []
    for n in b.N:
        st = approximate_multipeakon(f, int(n), dom, b.epsilon_mollify, b.radius, b.tol,
                                     b.radius_method)
        if dom.periodic:
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(st.q.min()) - 20.0, float(st.q.max()) + 20.0
        err = h1_error(f, st, lo, hi)
        rows.append((int(n), len(st), err))
        out.write(f"approx_N{int(n)}.json", st.to_json() + "\n")
    errs = [r[2] for r in rows]
    monotone = all(b2 <= a2 * 1.05 for a2, b2 in zip(errs, errs[1:]))
    out.write("approx.csv", _csv(["N", "n_peakons", "h1_error"], rows), primary=True)
    summary = {"errors": errs, "monotone": monotone, "violations": []}
    out.write("summary.json", _json(summary))
    return summary, f"approximate_data: h1 errors {', '.join(f'{e:.3g}' for e in errs)}", []


RUNNERS = {
    "peakon_simulate": (run_peakon, "trajectory.csv"),
    "peakon_collide": (run_peakon, "trajectory.csv"),
    "metric_distance": (run_metric_distance, "distance.json"),
    "metric_stability": (run_metric_stability, "stability.csv"),
    "broadwell_run": (run_broadwell, "run.csv"),
    "broadwell_rescaled": (run_broadwell, "run.csv"),
    "approximate_data": (run_approx, "approx.csv"),
}


def run(cfg: RunConfig, out_dir: str = "wavelab_out"):
    """Execute a validated config; returns (exit code, summary dict, one-line report)."""
    fn, primary = RUNNERS[cfg.scenario]
    out = Outputs(cfg.out or out_dir, primary)
    out.write("config.json", cfg.to_json() + "\n")
    summary, line, violations = fn(cfg, out)
    return (VIOLATION if violations else OK), summary, line


# -- argument parsing -------------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (or primary .csv/.json file)")
    common.add_argument("--seed", type=int, help="seed for randomized initial data")
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")

    ap = argparse.ArgumentParser(prog="wavelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="group", required=True)
    pk = sub.add_parser("peakon", help="multipeakon runs").add_subparsers(dest="action", required=True)
    pk.add_parser("run", parents=[common], help="simulate a multipeakon")
    pk.add_parser("collide", parents=[common], help="simulate through a collision")
    mt = sub.add_parser("metric", help="transport metric").add_subparsers(dest="action", required=True)
    d = mt.add_parser("distance", parents=[common], help="J(u, v) and its plan")
    d.add_argument("--u", help="state JSON for u")
    d.add_argument("--v", help="state JSON for v")
    d.add_argument("--knots", type=int, help="number of plan knots")
    mt.add_parser("stability", parents=[common], help="J(u(t), v(t)) along two runs")
    br = sub.add_parser("broadwell", help="Broadwell solver").add_subparsers(dest="action", required=True)
    r = br.add_parser("run", parents=[common], help="run the Broadwell solver")
    r.add_argument("--rescaled", action="store_true", help="force the rescaled frame")
    sub.add_parser("approx", parents=[common], help="multipeakon approximation of a profile")
    return ap


def _load_state_spec(path):
    data = json.loads(Path(path).read_text())
    if "peakons" in data:
        st = MultipeakonState.from_dict(data)
        return StateSpec(list(map(float, st.p)), list(map(float, st.q))), \
            ("periodic" if st.domain.periodic else "real")
    return StateSpec(list(data.get("p", [])), list(data.get("q", []))), None


def build_config(args) -> RunConfig:
    scenario = COMMANDS[(args.group, getattr(args, "action", None))]
    if getattr(args, "rescaled", False):
        scenario = "broadwell_rescaled"
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigInvalid("config", str(exc)) from None
        data = json.loads(text) if text.strip() else {}
        if not isinstance(data, dict):
            raise ConfigInvalid("", "config must be a JSON object")
        data.setdefault("scenario", scenario)
        if data["scenario"] == "broadwell_rescaled" and scenario == "broadwell_run":
            scenario = "broadwell_rescaled"
        if data["scenario"] != scenario:
            raise ConfigInvalid("scenario", f"config is for {data['scenario']!r}, "
                                            f"command runs {scenario!r}")
        cfg = RunConfig.from_dict(data)
    else:
        cfg = RunConfig.default(scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if scenario == "metric_distance":
        for name in ("u", "v"):
            path = getattr(args, name, None)
            if path:
                spec, dom = _load_state_spec(path)
                setattr(cfg.metric, name, spec)
                if dom:
                    cfg.metric.domain = dom
        if args.knots is not None:
            cfg.metric.knots = args.knots
        cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        code, summary, line = run(cfg, args.out or cfg.out or "wavelab_out")
    except ConfigInvalid as exc:
        print(f"wavelab: invalid config: {exc}", file=sys.stderr)
        return ERROR
    except (WavelabError, ValueError, OSError) as exc:
        print(f"wavelab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR
    if not args.quiet:
        print(line + ("" if code == OK else "  [bound violated]"))
    return code


if __name__ == "__main__":
    sys.exit(main())
