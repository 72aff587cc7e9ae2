"""Space-time error norms, convergence orders and the residual estimator."""
from dataclasses import dataclass

import numpy as np

from .problem import mms_forcing
from .quadrature import triangle_rule
from .spaces import FIELDS
from .timestepper import Trajectory


class ExactState:
    """Manufactured solution at time ``t``, evaluated like a discrete :class:`State`."""

    def __init__(self, layout, case, t):
        self.layout = layout
        self.case = case
        self.t = float(t)

    def fields_at(self, bary):
        xq = self.layout.spaces["c"].physical_points(bary)
        ex = self.case.solution.evaluate(xq[..., 0], xq[..., 1], self.t)
        out = {}
        for f in FIELDS:
            grad = np.stack([ex[f"{f}_x"], ex[f"{f}_y"]], axis=-1)
            hess = np.empty(grad.shape + (2,))
            hess[..., 0, 0] = ex[f"{f}_xx"]
            hess[..., 1, 1] = ex[f"{f}_yy"]
            hess[..., 0, 1] = hess[..., 1, 0] = ex[f"{f}_xy"]
            out[f] = (ex[f], grad, hess)
        return out

    def probe(self, point):
        ex = self.case.solution.evaluate(point[0], point[1], self.t)
        return {f: float(ex[f]) for f in FIELDS}


def exact_trajectory(layout, case, N, T=None, theta=1.0):
    """Trajectory whose levels are the exact fields themselves (error-free injection)."""
    T = case.T if T is None else T
    states = [ExactState(layout, case, n * T / N) for n in range(N + 1)]
    return Trajectory(states, [], [], theta)


@dataclass
class ErrorReport:
    """Space-time errors.

    ``u1``, ``u2`` are L2(H1) norms, ``p`` the L2(L2) norm and ``c`` the
    norm max_n ||e^n|| + L2(H1) (combined in squares). ``v_norm_sq`` is the
    squared combined norm, which is the quantity tabulated in convergence
    studies; ``v_norm`` is its square root.
    """

    u1: float
    u2: float
    p: float
    c: float
    c_max_l2: float
    c_l2h1: float
    grid: str = ""
    ndofs: int = 0
    h: float = 0.0

    @property
    def v_norm_sq(self):
        return self.u1**2 + self.u2**2 + self.p**2 + self.c**2

    @property
    def v_norm(self):
        return float(np.sqrt(self.v_norm_sq))

    def scaled(self, s):
        s = abs(s)
        return ErrorReport(self.u1 * s, self.u2 * s, self.p * s, self.c * s, self.c_max_l2 * s,
                           self.c_l2h1 * s, self.grid, self.ndofs, self.h)


def _field_errors(state, exact, bary):
    got = state.fields_at(bary)
    ref = exact.fields_at(bary)
    return {f: (got[f][0] - ref[f][0], got[f][1] - ref[f][1]) for f in FIELDS}


def error_norms(trajectory, case, quad_degree=6, scale=1.0):
    """Discrete space-time error norms of a trajectory against the exact solution.

    Time integrals are the sums ``dt * ||e^{n,theta}||^2`` over the steps.
    ``scale`` multiplies the error field (used to check homogeneity).
    """
    states = trajectory.states
    if len(states) < 2:
        raise ValueError("trajectory needs at least two time levels")
    times = np.array([s.t for s in states])
    steps = np.diff(times)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
        raise ValueError("trajectory time levels must be uniformly increasing")
    if times[-1] > case.T * (1 + 1e-12) + 1e-12:
        raise ValueError(f"trajectory ends at t={times[-1]} beyond the case final time {case.T}")
    layout = states[0].layout
    rule = triangle_rule(quad_degree)
    wdet = rule.weights[None, :] * np.abs(layout.spaces["c"].detJ)[:, None]
    a, b = 0.5 * (1 + trajectory.theta), 0.5 * (1 - trajectory.theta)
    dt = steps[0]

    def sq(v):
        return float(np.sum(wdet * v * v))

    def sq_grad(g):
        return float(np.sum(wdet[..., None] * g * g))

    acc = {f: 0.0 for f in FIELDS}
    prev = _field_errors(states[0], ExactState(layout, case, times[0]), rule.points)
    c_max = sq(scale * prev["c"][0])
    for n in range(1, len(states)):
        cur = _field_errors(states[n], ExactState(layout, case, times[n]), rule.points)
        c_max = max(c_max, sq(scale * cur["c"][0]))
        for f in FIELDS:
            v = scale * (a * cur[f][0] + b * prev[f][0])
            if f == "p":
                acc[f] += dt * sq(v)
            else:
                g = scale * (a * cur[f][1] + b * prev[f][1])
                acc[f] += dt * (sq(v) + sq_grad(g))
        prev = cur
    c_total = np.sqrt(c_max + acc["c"])
    return ErrorReport(
        u1=float(np.sqrt(acc["u1"])),
        u2=float(np.sqrt(acc["u2"])),
        p=float(np.sqrt(acc["p"])),
        c=float(c_total),
        c_max_l2=float(np.sqrt(c_max)),
        c_l2h1=float(np.sqrt(acc["c"])),
        ndofs=layout.total,
        h=layout.mesh.h,
    )


def eoc(e_coarse, e_fine, ratio=2.0):
    """Observed order log(e_coarse / e_fine) / log(ratio)."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError(f"errors must be positive, got {e_coarse}, {e_fine}")
    return float(np.log(e_coarse / e_fine) / np.log(ratio))


def eoc_sequence(errors, ratio=2.0):
    return [eoc(errors[i], errors[i + 1], ratio) for i in range(len(errors) - 1)]


@dataclass
class ResidualField:
    """Element L2 norms of the four strong residuals at one step.

    ``eta_sq = sum_k h_k^2 (|R1|^2 + |R2|^2 + |R3|^2 + |R4|^2)_k``.
    """

    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray
    h: np.ndarray
    t: float = 0.0

    @property
    def indicators(self):
        return self.h**2 * (self.r1**2 + self.r2**2 + self.r3**2 + self.r4**2)

    @property
    def eta_sq(self):
        return float(np.sum(self.indicators))

    @property
    def eta(self):
        return float(np.sqrt(self.eta_sq))


def aposteriori_estimate(state_n, state_np1, case, theta=1.0, quad_degree=4):
    """Strong residuals of the computed pair (t^n, t^{n+1}) at the theta level."""
    layout = state_np1.layout
    mesh = layout.mesh
    dt = state_np1.t - state_n.t
    if not dt > 0:
        raise ValueError("states must be ordered in time")
    a, b = 0.5 * (1 + theta), 0.5 * (1 - theta)
    rule = triangle_rule(quad_degree)
    bary = rule.points
    wdet = rule.weights[None, :] * np.abs(layout.spaces["c"].detJ)[:, None]
    xq = layout.spaces["c"].physical_points(bary)
    X, Y = xq[..., 0], xq[..., 1]
    t_theta = a * state_np1.t + b * state_n.t

    new, old = state_np1.fields_at(bary), state_n.fields_at(bary)
    th = {f: tuple(a * new[f][k] + b * old[f][k] for k in range(3)) for f in FIELDS}
    dcdt = (new["c"][0] - old["c"][0]) / dt

    shape = X.shape
    R = [np.zeros(shape) for _ in range(4)]
    for region in np.unique(mesh.subdomain_of):
        sel = mesh.subdomain_of == region
        s = case.coeffs_for(int(region))
        f = mms_forcing(case, X[sel], Y[sel], state_np1.t, int(region))
        if b > 0:
            fo = mms_forcing(case, X[sel], Y[sel], state_n.t, int(region))
            f = [a * fn + b * fv for fn, fv in zip(f, fo)]
        u1, g1, h1 = (v[sel] for v in th["u1"])
        u2, g2, h2 = (v[sel] for v in th["u2"])
        _, gp, _ = (v[sel] for v in th["p"])
        c, gc, hc = (v[sel] for v in th["c"])
        mu = s.viscosity_a * np.exp(s.viscosity_b * c)
        lap1 = h1[..., 0, 0] + h1[..., 1, 1]
        lap2 = h2[..., 0, 0] + h2[..., 1, 1]
        R[0][sel] = f[0] - (-mu * lap1 + s.sigma * u1 + gp[..., 0])
        R[1][sel] = f[1] - (-mu * lap2 + s.sigma * u2 + gp[..., 1])
        R[2][sel] = f[2] - (g1[..., 0] + g2[..., 1])
        d1, d2, d1x, d2y = s.diffusion(X[sel], Y[sel], t_theta)
        div_flux = d1x * gc[..., 0] + d1 * hc[..., 0, 0] + d2y * gc[..., 1] + d2 * hc[..., 1, 1]
        transport = -div_flux + u1 * gc[..., 0] + u2 * gc[..., 1] + s.alpha * c
        R[3][sel] = f[3] - s.phi * dcdt[sel] - transport
    norms = [np.sqrt(np.sum(wdet * r * r, axis=1)) for r in R]
    return ResidualField(*norms, h=mesh.diameters(), t=state_np1.t)


def estimate_trajectory(trajectory, case, quad_degree=4):
    """Per-step estimators and the time-integrated ``sum_n dt * eta_sq^n``."""
    fields = []
    total = 0.0
    states = trajectory.states
    for n in range(len(states) - 1):
        rf = aposteriori_estimate(states[n], states[n + 1], case, trajectory.theta, quad_degree)
        fields.append(rf)
        total += (states[n + 1].t - states[n].t) * rf.eta_sq
    return total, fields
