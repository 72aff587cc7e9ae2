"""Command-line driver for convergence studies and single runs.

    asgs study  --case stokes --method asgs --grids 10,20,40 --out results/
    asgs single --case interface --grid 20 --probe 0.5,0.5 --out run/

Settings come from built-in defaults, then an optional ``key = value``
file (``--config``), then command-line flags.
"""
import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import plotting
from .analysis import error_norms, eoc, estimate_trajectory, exact_trajectory
from .linalg import ConvergenceError, SingularMatrixError
from .mesh import build_structured_mesh, partition_interface, write_mesh
from .problem import make_case
from .spaces import build_layout
from .stabilization import GENERAL, BENCHMARK
from .timestepper import ASGS, GALERKIN, TimeLoopConfig, initial_state, run, save_checkpoint

logger = logging.getLogger("asgsfem")

CASES = ("stokes", "brinkman", "interface")
DEFAULT_GRIDS = (10, 20, 40, 80)
FLOAT_FMT = "{:.12e}"


@dataclass
class RunConfig:
    case: str = "stokes"
    method: str = ASGS
    grids: list = field(default_factory=lambda: list(DEFAULT_GRIDS))
    theta: float = 1.0
    t_final: float = 1.0
    dt: str = "h"  # "h": one step per grid cell (dt = T/n), or a fixed step size
    stab_mode: str = BENCHMARK
    out: str = "results"
    probe: tuple = (0.5, 0.5)
    pin_pressure: int | None = 0
    picard: bool = False
    solver: str = "gmres"
    velocity_order: int = 1
    alpha_bjs: float = 1.0
    plots: bool = True
    estimator: bool = True

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {', '.join(CASES)}")
        if self.method not in (ASGS, GALERKIN):
            raise ValueError(f"unknown method {self.method!r}")
        if self.stab_mode not in (BENCHMARK, GENERAL):
            raise ValueError(f"unknown stabilization mode {self.stab_mode!r}")
        if not self.grids:
            raise ValueError("grid list is empty")
        if any(n < 2 for n in self.grids):
            raise ValueError("every grid needs at least 2 cells per side")
        if list(self.grids) != sorted(set(self.grids)):
            raise ValueError("grids must be strictly ascending")
        self.steps(self.grids[0])

    def steps(self, n):
        """Number of time steps on an n x n grid."""
        if self.dt == "h":
            return n
        dt = float(self.dt)
        N = self.t_final / dt
        if not dt > 0 or abs(N - round(N)) > 1e-9 * N:
            raise ValueError(f"time step {dt} does not divide the final time {self.t_final}")
        return int(round(N))


# ---------------------------------------------------------------------------
# configuration parsing


def _parse_grids(text):
    if isinstance(text, (list, tuple)):
        return [int(g) for g in text]
    return [int(g) for g in str(text).replace(" ", "").split(",") if g]


def _parse_point(text):
    vals = [float(v) for v in str(text).split(",")]
    if len(vals) != 2:
        raise ValueError(f"probe must be 'x,y', got {text!r}")
    return tuple(vals)


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pin(text):
    if text is None or str(text).strip().lower() in ("none", "off", "-1"):
        return None
    return int(text)


_CONVERTERS = {
    "grids": _parse_grids,
    "theta": float,
    "t_final": float,
    "dt": lambda v: "h" if str(v).strip() == "h" else str(float(v)),
    "probe": _parse_point,
    "pin_pressure": _parse_pin,
    "picard": _parse_bool,
    "plots": _parse_bool,
    "estimator": _parse_bool,
    "velocity_order": int,
    "alpha_bjs": float,
}


def read_config_file(path):
    """Plain ``key = value`` lines; ``#`` starts a comment; dashes in keys map to underscores."""
    known = {f.name for f in fields(RunConfig)} | {"grid"}
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _convert(values):
    out = {}
    for key, value in values.items():
        if key == "grid":
            key, value = "grids", str(value)
        conv = _CONVERTERS.get(key)
        out[key] = conv(value) if conv and isinstance(value, str) else value
    return out


def build_config(args):
    settings = {}
    if args.config:
        settings.update(read_config_file(args.config))
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            settings[f.name] = val
    if getattr(args, "grid", None) is not None:
        settings["grids"] = str(args.grid)
    if getattr(args, "include_160", False):
        grids = _parse_grids(settings.get("grids", ",".join(map(str, DEFAULT_GRIDS))))
        settings["grids"] = sorted(set(grids) | {160})
    return RunConfig(**_convert(settings))


# ---------------------------------------------------------------------------
# runs


class StageError(RuntimeError):
    def __init__(self, grid, stage, exc):
        super().__init__(f"grid {grid}: stage '{stage}' failed: {exc}")
        self.grid, self.stage = grid, stage


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT.format(float(x) + 0.0)  # no "-0"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _setup(cfg, n):
    case = make_case(cfg.case, alpha_bjs=cfg.alpha_bjs, T=cfg.t_final)
    mesh = build_structured_mesh(n, n)
    if case.is_interface:
        mesh = partition_interface(mesh)
    return case, mesh


def _loop_config(cfg, n):
    return TimeLoopConfig(
        T=cfg.t_final, N=cfg.steps(n), theta=cfg.theta, method=cfg.method, picard=cfg.picard,
        pin_pressure=cfg.pin_pressure, solver=cfg.solver, stab_mode=cfg.stab_mode,
    )


def _orders(cfg):
    return {"u1": cfg.velocity_order, "u2": cfg.velocity_order, "p": 1, "c": 1}


def run_grid(cfg, n):
    """One row of a convergence study."""
    stage = "mesh"
    try:
        case, mesh = _setup(cfg, n)
        stage = "spaces"
        layout = build_layout(mesh, _orders(cfg))
        stage = "configuration"
        loop = _loop_config(cfg, n)
        stage = "time loop"
        t0 = time.perf_counter()
        traj = run(initial_state(layout, case), loop, case, probe=cfg.probe)
        stage = "error norms"
        report = error_norms(traj, case)
        eta_total = None
        if cfg.estimator:
            stage = "estimator"
            eta_total, _ = estimate_trajectory(traj, case)
    except (ConvergenceError, SingularMatrixError, ValueError, FloatingPointError) as exc:
        raise StageError(n, stage, exc) from exc
    logger.info("grid %d done in %.1fs: error %.6e", n, time.perf_counter() - t0, report.v_norm_sq)
    row = {
        "grid": n,
        "h": mesh.h,
        "dt": loop.dt,
        "dofs": layout.total,
        "error": report.v_norm_sq,
        "v_norm": report.v_norm,
        "error_u1": report.u1,
        "error_u2": report.u2,
        "error_p": report.p,
        "error_c": report.c,
        "eta": eta_total,
        "iterations": max((d.iterations for d in traj.diagnostics), default=0),
    }
    return row, traj


STUDY_HEADER = ["grid", "error", "eoc", "h", "dt", "dofs", "v_norm", "error_u1", "error_u2", "error_p", "error_c"]
ESTIMATOR_HEADER = ["grid", "eta", "eoc_eta"]
PROBE_HEADER = ["t", "u1", "u2", "p", "c"]


def _with_eoc(rows, key, out_key):
    for prev, cur in zip(rows, rows[1:]):
        if prev.get(key) and cur.get(key):
            cur[out_key] = eoc(prev[key], cur[key], cur["grid"] / prev["grid"])
    return rows


def _write_study(cfg, rows, traces):
    out = cfg.out
    _with_eoc(rows, "error", "eoc")
    _write_csv(os.path.join(out, "convergence.csv"), STUDY_HEADER, rows)
    if cfg.estimator:
        _with_eoc(rows, "eta", "eoc_eta")
        _write_csv(os.path.join(out, "estimator.csv"), ESTIMATOR_HEADER, rows)
    for n, trace in traces.items():
        _write_csv(os.path.join(out, f"probe_{n}.csv"), PROBE_HEADER, [dict(v, t=t) for t, v in trace])
    with open(os.path.join(out, "table.txt"), "w") as fh:
        fh.write(format_table(cfg, rows))
    if cfg.plots and rows:
        plotting.plot_convergence(rows, os.path.join(out, "error_vs_dofs.png"))
        if len(rows) > 1:
            plotting.plot_eoc(rows, os.path.join(out, "eoc.png"))
        for n, trace in traces.items():
            plotting.plot_probe(trace, os.path.join(out, f"probe_{n}.png"))


def format_table(cfg, rows):
    lines = [f"case={cfg.case} method={cfg.method} theta={cfg.theta:g} T={cfg.t_final:g}",
             f"{'grid':>10} {'error':>14} {'eoc':>9}"]
    for r in rows:
        e = r.get("eoc")
        lines.append(f"{r['grid']:>4} x {r['grid']:<3} {r['error']:>14.6e} {'' if e is None else f'{e:9.5f}':>9}")
    return "\n".join(lines) + "\n"


def run_convergence_study(cfg):
    """Run every grid in order; returns ``(rows, failure)``. Partial results are always written."""
    _ensure_dir(cfg.out)
    rows, traces = [], {}
    failure = None
    for n in cfg.grids:
        try:
            row, traj = run_grid(cfg, n)
        except StageError as exc:
            failure = exc
            logger.error("%s", exc)
            break
        rows.append(row)
        traces[n] = traj.probe
    _write_study(cfg, rows, traces)
    return rows, failure


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {path!r} is not writable: {exc}") from exc


def nodal_values(state):
    """Vertex values of every field (vertex dofs come first in every element)."""
    mesh = state.layout.mesh
    out = {}
    for f in ("u1", "u2", "p", "c"):
        space = state.layout.spaces[f]
        dof_of_vertex = np.empty(mesh.nvertices, dtype=np.int64)
        dof_of_vertex[mesh.triangles.ravel()] = space.cell_dofs[:, :3].ravel()
        out[f] = np.asarray(state[f])[dof_of_vertex]
    return out


def run_single(cfg, exact=False):
    """One grid: checkpoint, probe trace, per-step estimator, nodal dump and figures."""
    if len(cfg.grids) != 1:
        raise ValueError("a single run needs exactly one grid")
    n = cfg.grids[0]
    _ensure_dir(cfg.out)
    out = cfg.out
    case, mesh = _setup(cfg, n)
    layout = build_layout(mesh, _orders(cfg))
    loop = _loop_config(cfg, n)
    if exact:
        traj = exact_trajectory(layout, case, loop.N, loop.T, loop.theta)
        traj.probe = [(s.t, s.probe(cfg.probe)) for s in traj.states]
    else:
        try:
            traj = run(initial_state(layout, case), loop, case, probe=cfg.probe)
        except (ConvergenceError, SingularMatrixError) as exc:
            raise StageError(n, "time loop", exc) from exc
    _write_csv(os.path.join(out, "probe.csv"), PROBE_HEADER, [dict(v, t=t) for t, v in traj.probe])
    rows = []
    eta_total, est = estimate_trajectory(traj, case)
    for k, rf in enumerate(est):
        rows.append({"step": k + 1, "t": rf.t, "eta": rf.eta_sq, "r1": float(np.linalg.norm(rf.r1)),
                     "r2": float(np.linalg.norm(rf.r2)), "r3": float(np.linalg.norm(rf.r3)),
                     "r4": float(np.linalg.norm(rf.r4))})
    _write_csv(os.path.join(out, "estimator.csv"), ["step", "t", "eta", "r1", "r2", "r3", "r4"], rows)
    report = error_norms(traj, case)
    summary = [{"grid": n, "error": report.v_norm_sq, "v_norm": report.v_norm, "error_u1": report.u1,
                "error_u2": report.u2, "error_p": report.p, "error_c": report.c, "eta": eta_total,
                "h": mesh.h, "dt": loop.dt, "dofs": layout.total}]
    _write_csv(os.path.join(out, "summary.csv"),
               ["grid", "error", "v_norm", "error_u1", "error_u2", "error_p", "error_c", "eta", "h", "dt", "dofs"],
               summary)
    write_mesh(mesh, os.path.join(out, "mesh.txt"))
    final = traj.final
    nodal = None
    if not exact:
        save_checkpoint(final, os.path.join(out, "checkpoint.bin"))
        nodal = nodal_values(final)
        node_rows = [{"x": x, "y": y, **{f: nodal[f][i] for f in nodal}}
                     for i, (x, y) in enumerate(mesh.vertices)]
        _write_csv(os.path.join(out, "fields.csv"), ["x", "y", "u1", "u2", "p", "c"], node_rows)
    if cfg.plots:
        plotting.plot_probe(traj.probe, os.path.join(out, "probe.png"))
        plotting.plot_mesh(mesh, os.path.join(out, "mesh.png"))
        if nodal is not None:
            plotting.plot_fields(mesh, nodal, os.path.join(out, "fields.png"))
        if est:
            plotting.plot_indicators(mesh, est[-1].indicators, os.path.join(out, "indicators.png"))
    return traj, summary[0]


# ---------------------------------------------------------------------------
# entry point


def _add_common(p):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--case", choices=CASES)
    p.add_argument("--method", choices=(ASGS, GALERKIN))
    p.add_argument("--theta", type=float, help="1 = backward Euler, 0 = Crank-Nicolson")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--dt", help="'h' for dt = T/n, or a fixed step size")
    p.add_argument("--stab-mode", dest="stab_mode", choices=(BENCHMARK, GENERAL))
    p.add_argument("--out")
    p.add_argument("--probe", type=_parse_point, help="x,y")
    p.add_argument("--pin-pressure", dest="pin_pressure", type=_parse_pin,
                   help="pressure dof fixed to the exact value, or 'none'")
    p.add_argument("--picard", action="store_const", const=True, help="iterate the lagged coefficients")
    p.add_argument("--solver", choices=("gmres", "direct"))
    p.add_argument("--velocity-order", dest="velocity_order", type=int, choices=(1, 2))
    p.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser():
    parser = argparse.ArgumentParser(prog="asgs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    study = sub.add_parser("study", help="convergence study over several grids")
    _add_common(study)
    study.add_argument("--grids", type=_parse_grids, help="comma-separated n values, e.g. 10,20,40")
    study.add_argument("--include-160", dest="include_160", action="store_true",
                       help="add the 160 x 160 grid (slow)")
    study.add_argument("--no-estimator", dest="estimator", action="store_const", const=False)
    single = sub.add_parser("single", help="one grid with probe trace, dumps and figures")
    _add_common(single)
    single.add_argument("--grid", type=int, default=None)
    single.add_argument("--exact", action="store_true", help="inject the exact solution instead of solving")
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "single" and args.grid is None and not args.config:
            args.grid = 20
        cfg = build_config(args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    try:
        if args.command == "study":
            rows, failure = run_convergence_study(cfg)
            print(format_table(cfg, rows), end="")
            if failure is not None:
                print(f"error: {failure}", file=sys.stderr)
                return 1
            return 0
        _, summary = run_single(cfg, exact=args.exact)
        print(f"grid {summary['grid']}: error {summary['error']:.6e}, eta {summary['eta']:.6e}")
        return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
