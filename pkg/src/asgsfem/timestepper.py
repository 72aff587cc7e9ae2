"""Theta-scheme time loop for the coupled flow/transport system."""
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    add_pressure_regularization,
    apply_dirichlet,
    assemble_asgs,
    assemble_galerkin,
    assemble_interface_bjs,
    bjs_load,
)
from .linalg import ConvergenceError, solve
from .mesh import Subdomain
from .spaces import FIELDS, State, interpolate
from .stabilization import BENCHMARK, StabConstants, build_stabilization

logger = logging.getLogger(__name__)

GALERKIN = "galerkin"
ASGS = "asgs"


@dataclass
class TimeLoopConfig:
    """``theta = 1`` is backward Euler, ``theta = 0`` Crank-Nicolson."""

    T: float = 1.0
    N: int = 10
    theta: float = 1.0
    method: str = ASGS
    picard: bool = False
    picard_tol: float = 1e-10
    picard_max: int = 25
    series_terms: str = "closed"  # or "finite"
    pin_pressure: int | None = 0  # pressure dof pinned to the exact value; None disables
    solver: str = "gmres"
    solver_tol: float = 1e-10
    quad_degree: int = 4
    workers: int | None = None
    stab_mode: str = BENCHMARK
    stab_constants: StabConstants = field(default_factory=StabConstants)
    # equal-order Galerkin leaves spurious pressure modes; eps * (p, q) picks one solution
    galerkin_pressure_eps: float = 1e-10

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"step count must be a positive integer, got {self.N}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.T > 0:
            raise ValueError("final time must be positive")
        if self.method not in (GALERKIN, ASGS):
            raise ValueError(f"unknown method {self.method!r}")
        self.N = int(self.N)

    @property
    def dt(self):
        return self.T / self.N


@dataclass
class StepInfo:
    step: int
    t: float
    iterations: int
    residual: float
    picard_iterations: int = 0


@dataclass
class Trajectory:
    states: list
    diagnostics: list
    probe: list = field(default_factory=list)
    theta: float = 1.0

    @property
    def final(self):
        return self.states[-1]

    @property
    def dt(self):
        return self.states[1].t - self.states[0].t if len(self.states) > 1 else 0.0


def initial_state(layout, case, t=0.0):
    """Exact fields at ``t`` interpolated, or the case's own initial data."""
    values = {}
    for k, f in enumerate(FIELDS):
        space = layout.spaces[f]
        if case.initial is not None:
            values[f] = interpolate(space, lambda x, y, _t, f=f: case.initial(f, x, y))
        else:
            values[f] = interpolate(space, lambda x, y, tt, f=f: case.solution.evaluate(x, y, tt)[f], t)
    return State(layout, values, t)


def stabilization_for(layout, case, cfg, step_index=0):
    if cfg.method != ASGS:
        return None
    n_terms = None if cfg.series_terms == "closed" else step_index + 1
    return build_stabilization(layout.mesh, case, cfg.dt, cfg.stab_mode, cfg.stab_constants, n_terms,
                               velocity_order=layout.spaces["u1"].order,
                               concentration_order=layout.spaces["c"].order)


def _dirichlet(layout, case, t):
    dofs, vals = [], []
    for f in ("u1", "u2"):
        space = layout.spaces[f]
        bd = space.all_boundary_dofs()
        x, y = space.dof_coords[bd, 0], space.dof_coords[bd, 1]
        dofs.append(layout.global_dofs(f, bd))
        vals.append(case.solution.evaluate(x, y, t)[f])
    return dofs, vals


def _pin(layout, case, cfg, t):
    if cfg.pin_pressure is None:
        return [], []
    k = int(cfg.pin_pressure)
    x, y = layout.spaces["p"].dof_coords[k]
    return [layout.global_dofs("p", [k])], [np.atleast_1d(case.solution.evaluate(x, y, t)["p"])]


def _brinkman_sigma(case):
    return case.coefficients[Subdomain.BRINKMAN].sigma


def build_step_system(state_n, cfg, case, stab, lin_state=None):
    layout = state_n.layout
    t_new = state_n.t + cfg.dt
    kw = {"quad_degree": cfg.quad_degree, "workers": cfg.workers}
    if cfg.method == ASGS:
        system = assemble_asgs(layout, case, state_n, t_new, cfg.dt, cfg.theta, stab, lin_state, **kw)
    else:
        system = assemble_galerkin(layout, case, state_n, t_new, cfg.dt, cfg.theta, lin_state, **kw)
        if layout.spaces["u1"].order == layout.spaces["p"].order:
            system = add_pressure_regularization(system, layout, cfg.galerkin_pressure_eps)
    if case.is_interface and case.alpha_bjs != 0.0:
        sigma_B = _brinkman_sigma(case)
        load = bjs_load(layout, case, sigma_B, t_new, cfg.dt, cfg.theta)
        system = assemble_interface_bjs(system, layout, case.alpha_bjs, sigma_B, cfg.theta, state_n, load)
    dofs, vals = _dirichlet(layout, case, t_new)
    pd, pv = _pin(layout, case, cfg, t_new)
    return apply_dirichlet(system, np.concatenate(dofs + pd), np.concatenate(vals + pv))


def _solve(system, cfg):
    kwargs = {"tol": cfg.solver_tol} if cfg.solver == "gmres" else {}
    return solve(system.matrix, system.rhs, method=cfg.solver, **kwargs)


def step(state_n, cfg, case, stab=None, step_index=0):
    """Advance one step; returns ``(state, StepInfo)``."""
    layout = state_n.layout
    if stab is None and cfg.method == ASGS:
        stab = stabilization_for(layout, case, cfg, step_index)
    t_new = state_n.t + cfg.dt
    try:
        system = build_step_system(state_n, cfg, case, stab)
        x, info = _solve(system, cfg)
        picard_its = 0
        if cfg.picard:
            for picard_its in range(1, cfg.picard_max + 1):
                lin = State.from_vector(layout, x, t_new)
                system = build_step_system(state_n, cfg, case, stab, lin_state=lin)
                x_new, info = _solve(system, cfg)
                change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
                x = x_new
                if change <= cfg.picard_tol:
                    break
            else:
                logger.warning("Picard loop did not converge at step %d (change %.3e)", step_index, change)
    except ConvergenceError as exc:
        raise ConvergenceError(f"step {step_index} (t={t_new:g}): {exc}", exc.residual, exc.iterations) from exc
    new = State.from_vector(layout, x, t_new)
    return new, StepInfo(step_index, t_new, info["iterations"], info["residual"], picard_its)


def run(initial, cfg, case, stab=None, probe=None, callback=None):
    """Run ``cfg.N`` steps from ``initial``.

    ``probe`` is an optional point; its field values are recorded after every
    step (and at the initial time).
    """
    states = [initial]
    diagnostics = []
    trace = [(initial.t, initial.probe(probe))] if probe is not None else []
    fixed_stab = stab
    state = initial
    for n in range(cfg.N):
        if fixed_stab is None and cfg.method == ASGS and (n == 0 or cfg.series_terms != "closed"):
            stab = stabilization_for(initial.layout, case, cfg, n)
        state, info = step(state, cfg, case, stab, n)
        states.append(state)
        diagnostics.append(info)
        if probe is not None:
            trace.append((state.t, state.probe(probe)))
        if callback is not None:
            callback(state, info)
        logger.debug("step %d t=%.4f its=%d res=%.2e", n, state.t, info.iterations, info.residual)
    return Trajectory(states, diagnostics, trace, cfg.theta)


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"ASGSCKPT"


def save_checkpoint(state, path):
    """Binary dump: magic, time, four uint64 field lengths, then little-endian doubles per field."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<d", state.t))
        fh.write(struct.pack("<4Q", *(len(state[f]) for f in FIELDS)))
        for f in FIELDS:
            fh.write(np.asarray(state[f], dtype="<f8").tobytes())


def load_checkpoint(layout, path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (t,) = struct.unpack("<d", fh.read(8))
        sizes = struct.unpack("<4Q", fh.read(32))
        values = {}
        for f, n in zip(FIELDS, sizes):
            if n != layout.spaces[f].ndofs:
                raise ValueError(f"checkpoint field {f} has {n} values, layout expects {layout.spaces[f].ndofs}")
            values[f] = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    return State(layout, values, t)
