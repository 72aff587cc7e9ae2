"""Coefficient laws, manufactured solutions and forcing for the experiment cases."""
from dataclasses import dataclass, field

import numpy as np

from .mesh import Subdomain

PI = np.pi
VISCOSITY_A = 0.954
VISCOSITY_B = 27.93 * 0.028
C_MAX = 0.0625  # max of the manufactured concentration over the unit square at t = 1


class BenchmarkDiffusion:
    """D1 = t^2 sin^4(pi x) sin^2(2 pi y), D2 = t^2 sin^2(2 pi x) sin^4(pi y)."""

    lower_bound = 0.0

    def __call__(self, x, y, t):
        sx, cx, s2x = np.sin(PI * x), np.cos(PI * x), np.sin(2 * PI * x)
        sy, cy, s2y = np.sin(PI * y), np.cos(PI * y), np.sin(2 * PI * y)
        t2 = t * t
        d1 = t2 * sx**4 * s2y**2
        d2 = t2 * s2x**2 * sy**4
        d1_x = t2 * 4 * PI * sx**3 * cx * s2y**2
        d2_y = t2 * 4 * PI * s2x**2 * sy**3 * cy
        return d1, d2, d1_x, d2_y


@dataclass(frozen=True)
class ConstantDiffusion:
    d1: float = 1.0
    d2: float = 1.0

    @property
    def lower_bound(self):
        return min(self.d1, self.d2)

    def __call__(self, x, y, t):
        z = np.zeros(np.broadcast(x, y).shape)
        return z + self.d1, z + self.d2, z, z


@dataclass(frozen=True)
class CoefficientSet:
    sigma: float = 0.0
    alpha: float = 0.01
    phi: float = 1.0
    viscosity_a: float = VISCOSITY_A
    viscosity_b: float = VISCOSITY_B
    diffusion: object = field(default_factory=BenchmarkDiffusion)
    mu_l: float = VISCOSITY_A
    mu_u: float = VISCOSITY_A * np.exp(VISCOSITY_B * C_MAX)

    def __post_init__(self):
        if not 0 < self.mu_l <= self.mu_u:
            raise ValueError(f"need 0 < mu_l <= mu_u, got {self.mu_l}, {self.mu_u}")
        if self.sigma < 0 or self.phi <= 0 or self.alpha < 0:
            raise ValueError("need sigma >= 0, phi > 0, alpha >= 0")
        if self.diffusion.lower_bound < 0:
            raise ValueError("diffusion lower bound must be non-negative")

    @property
    def D_l(self):
        return self.diffusion.lower_bound


def viscosity(coeffs, c):
    return coeffs.viscosity_a * np.exp(coeffs.viscosity_b * np.asarray(c))


def diffusion(coeffs, x, y, t):
    d1, d2, _, _ = coeffs.diffusion(x, y, t)
    return d1, d2


class ManufacturedSolution:
    """Manufactured fields shared by all three experiment cases.

    With ``stationary=True`` the linear time factor is replaced by 1.
    Derivative keys: ``u1_x``, ``u1_xx``, ``lap_u1``, ``c_t`` and so on.
    """

    def __init__(self, stationary=False):
        self.stationary = stationary

    def evaluate(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        T = np.ones_like(x) if self.stationary else np.full_like(x, t)
        dT = np.zeros_like(x) if self.stationary else np.ones_like(x)
        sx, s2x, c2x = np.sin(PI * x), np.sin(2 * PI * x), np.cos(2 * PI * x)
        sy, s2y, c2y = np.sin(PI * y), np.sin(2 * PI * y), np.cos(2 * PI * y)
        q = x * (x - 1) * y * (y - 1)
        div_part = 0.5 * PI * T * s2x * s2y
        out = {
            "u1": 0.5 * T * sx**2 * s2y,
            "u2": -0.5 * T * s2x * sy**2,
            "p": T * s2x * s2y,
            "c": T * q,
            "u1_x": div_part,
            "u1_y": PI * T * sx**2 * c2y,
            "u2_x": -PI * T * c2x * sy**2,
            "u2_y": -div_part,
            "p_x": 2 * PI * T * c2x * s2y,
            "p_y": 2 * PI * T * s2x * c2y,
            "c_x": T * (2 * x - 1) * y * (y - 1),
            "c_y": T * x * (x - 1) * (2 * y - 1),
            "c_t": dT * q,
            "u1_xx": PI**2 * T * c2x * s2y,
            "u1_yy": -2 * PI**2 * T * sx**2 * s2y,
            "u1_xy": PI**2 * T * s2x * c2y,
            "u2_xx": 2 * PI**2 * T * s2x * sy**2,
            "u2_yy": -PI**2 * T * s2x * c2y,
            "u2_xy": -PI**2 * T * c2x * s2y,
            "c_xx": 2 * T * y * (y - 1),
            "c_yy": 2 * T * x * (x - 1),
            "c_xy": T * (2 * x - 1) * (2 * y - 1),
        }
        out["p_xx"] = -4 * PI**2 * out["p"]
        out["p_yy"] = -4 * PI**2 * out["p"]
        out["p_xy"] = 4 * PI**2 * T * c2x * c2y
        out["lap_u1"] = out["u1_xx"] + out["u1_yy"]
        out["lap_u2"] = out["u2_xx"] + out["u2_yy"]
        return out


class ZeroSolution:
    """Homogeneous solution; every field and derivative vanishes."""

    stationary = True

    def evaluate(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        keys = ["u1", "u2", "p", "c", "c_t", "lap_u1", "lap_u2"]
        for f in ("u1", "u2", "p", "c"):
            keys += [f"{f}_x", f"{f}_y", f"{f}_xx", f"{f}_yy", f"{f}_xy"]
        return {k: np.zeros_like(x) for k in keys}


@dataclass
class ProblemCase:
    """One experiment: coefficient sets per subdomain, exact fields, final time.

    ``coefficients`` maps a :class:`Subdomain` to its :class:`CoefficientSet`.
    ``forced`` switches the manufactured forcing on; ``initial`` optionally
    overrides the initial state with a callable ``(field, x, y) -> values``.
    """

    label: str
    coefficients: dict
    solution: object = field(default_factory=ManufacturedSolution)
    T: float = 1.0
    alpha_bjs: float = 1.0
    split: tuple = ("x", 0.5)
    forced: bool = True
    neumann_remainder: bool = False
    initial: object = None

    @property
    def is_interface(self):
        return Subdomain.STOKES in self.coefficients

    def coeffs_for(self, region):
        if region in self.coefficients:
            return self.coefficients[region]
        return next(iter(self.coefficients.values()))

    def element_coefficients(self, mesh):
        """Per-element sigma, phi, alpha arrays and the coefficient set of each element."""
        sets = [self.coeffs_for(int(r)) for r in mesh.subdomain_of]
        return {
            "sigma": np.array([s.sigma for s in sets]),
            "phi": np.array([s.phi for s in sets]),
            "alpha": np.array([s.alpha for s in sets]),
            "sets": sets,
        }


def exact_solution(case, x, y, t):
    """(u1, u2, p, c) of the manufactured solution."""
    e = case.solution.evaluate(x, y, t)
    return e["u1"], e["u2"], e["p"], e["c"]


def strong_forcing(coeffs, ex, x, y, t):
    """Apply the strong operators to exact-field data ``ex`` (a dict from ``evaluate``)."""
    mu = viscosity(coeffs, ex["c"])
    f1x = -mu * ex["lap_u1"] + coeffs.sigma * ex["u1"] + ex["p_x"]
    f1y = -mu * ex["lap_u2"] + coeffs.sigma * ex["u2"] + ex["p_y"]
    f2 = ex["u1_x"] + ex["u2_y"]
    d1, d2, d1_x, d2_y = coeffs.diffusion(x, y, t)
    div_flux = d1_x * ex["c_x"] + d1 * ex["c_xx"] + d2_y * ex["c_y"] + d2 * ex["c_yy"]
    g = (
        coeffs.phi * ex["c_t"]
        - div_flux
        + ex["u1"] * ex["c_x"]
        + ex["u2"] * ex["c_y"]
        + coeffs.alpha * ex["c"]
    )
    return f1x, f1y, f2, g


def mms_forcing(case, x, y, t, region=Subdomain.UNIFIED):
    """(f1x, f1y, f2, g) at points of one subdomain; zeros for unforced cases."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if not case.forced:
        z = np.zeros_like(x)
        return z, z.copy(), z.copy(), z.copy()
    ex = case.solution.evaluate(x, y, t)
    return strong_forcing(case.coeffs_for(region), ex, x, y, t)


def benchmark_coefficients(sigma=0.0, phi=1.0, alpha=0.01):
    return CoefficientSet(sigma=sigma, phi=phi, alpha=alpha)


def make_case(name, alpha_bjs=1.0, split=("x", 0.5), T=1.0):
    """Named presets: ``stokes``, ``brinkman``, ``interface``."""
    if name == "stokes":
        return ProblemCase("Stokes", {Subdomain.UNIFIED: benchmark_coefficients(0.0, 1.0)}, T=T)
    if name == "brinkman":
        return ProblemCase("Brinkman", {Subdomain.UNIFIED: benchmark_coefficients(1.0, 2.0)}, T=T)
    if name == "interface":
        return ProblemCase(
            "InterfaceStokesBrinkman",
            {
                Subdomain.STOKES: benchmark_coefficients(0.0, 1.0),
                Subdomain.BRINKMAN: benchmark_coefficients(1.0, 2.0),
            },
            T=T,
            alpha_bjs=alpha_bjs,
            split=split,
        )
    raise ValueError(f"unknown case {name!r}; expected stokes, brinkman or interface")


def constant_case(sigma=0.0, phi=1.0, alpha=0.0, mu=1.0, D=(1.0, 1.0), T=1.0,
                  solution=None, forced=False, initial=None, label="Constant"):
    """Constant-coefficient case (constant viscosity, constant diffusion)."""
    coeffs = CoefficientSet(
        sigma=sigma, alpha=alpha, phi=phi, viscosity_a=mu, viscosity_b=0.0,
        diffusion=ConstantDiffusion(*D), mu_l=mu, mu_u=mu,
    )
    return ProblemCase(label, {Subdomain.UNIFIED: coeffs},
                       solution=solution or ZeroSolution(), T=T, forced=forced, initial=initial)
