"""Stabilization parameters of the algebraic subgrid-scale method."""
from dataclasses import dataclass

import numpy as np

BENCHMARK = "benchmark"
GENERAL = "general"


@dataclass(frozen=True)
class StabConstants:
    c1_u: float = 4.0
    c2_u: float = 1.0
    c1_p: float = 1.0
    tau3_scale: float = 19.0
    diffusion_scale: float = 1.0
    advective_scale: float = 1.0


def compute_taus(coeffs, h, mode=BENCHMARK, constants=StabConstants()):
    """(tau1, tau2, tau3) for one coefficient set and mesh size ``h``.

    ``benchmark`` uses the constants of the numerical experiments
    (c1 = 4, tau2 proportional to h, the factor 19 in tau3); ``general`` uses the
    general form with ``constants``.
    """
    if not h > 0:
        raise ValueError(f"mesh size must be positive, got {h}")
    mu = coeffs.mu_u
    if mode == BENCHMARK:
        tau1 = 1.0 / (4.0 * mu / h**2 + coeffs.sigma)
        tau2 = 4.0 * mu * h
        tau3 = constants.tau3_scale / (9.0 / (4.0 * h**2) + 3.0 / (2.0 * h) + coeffs.alpha)
    elif mode == GENERAL:
        tau1 = 1.0 / (constants.c1_u * mu / h**2 + constants.c2_u * coeffs.sigma)
        tau2 = constants.c1_p * mu
        tau3 = 1.0 / (
            9.0 * constants.diffusion_scale / (4.0 * h**2)
            + 3.0 * constants.advective_scale / (2.0 * h)
            + coeffs.alpha
        )
    else:
        raise ValueError(f"unknown stabilization mode {mode!r}")
    return tau1, tau2, tau3


def compute_tau_prime(tau3, dt, phi=1.0):
    """tau3' = (phi/dt + 1/tau3)^-1, written so that tau3 = 0 and dt = inf are safe."""
    tau3 = np.asarray(tau3, dtype=float)
    if np.isinf(dt):
        return tau3 * 1.0
    return tau3 * dt / (dt + phi * tau3)


def subscale_series_factor(tau3_prime, dt, n_terms=None, phi=1.0):
    """Sum of r^i, i = 1..n_terms, with r = phi tau3'/dt; closed form r/(1-r) if ``n_terms`` is None."""
    r = np.asarray(phi * tau3_prime / dt, dtype=float)
    if np.any(r >= 1.0) or np.any(r < 0):
        raise ValueError(f"subscale series diverges: ratio {np.max(r)} >= 1")
    if n_terms is None:
        return r / (1.0 - r)
    if n_terms < 0:
        raise ValueError("n_terms must be non-negative")
    return r * (1.0 - r**n_terms) / (1.0 - r)


@dataclass(frozen=True)
class StabilizationParams:
    """Per-element parameters for one mesh and time step.

    ``mass_factor`` is the coefficient of the element mass-type term
    ``(1 - tau3'/tau3) - (tau3'/tau3) * series_factor`` which vanishes for the
    closed-form series.
    """

    tau1: np.ndarray
    tau2: np.ndarray
    tau3: np.ndarray
    tau3_prime: np.ndarray
    series_factor: np.ndarray
    mass_factor: np.ndarray
    mode: str = BENCHMARK
    constants: StabConstants = StabConstants()

    @property
    def transport_weight(self):
        """tau3' (1 + series factor): weight of the transport residual against the adjoint."""
        return self.tau3_prime * (1.0 + self.series_factor)


def _assemble_params(tau1, tau2, tau3, phi, dt, n_terms, mode, constants, use_series=True):
    tau3p = compute_tau_prime(tau3, dt, phi)
    if np.isinf(dt):
        ratio = np.ones_like(tau3)
        series = np.zeros_like(tau3)
    else:
        ratio = dt / (dt + phi * tau3)  # tau3'/tau3
        series = subscale_series_factor(tau3p, dt, n_terms, phi) if use_series else np.zeros_like(tau3)
    mass = (1.0 - ratio) - ratio * series
    return StabilizationParams(tau1, tau2, tau3, tau3p, series, mass, mode, constants)


def build_stabilization(mesh, case, dt, mode=BENCHMARK, constants=StabConstants(),
                        n_terms=None, use_series=True, velocity_order=1, concentration_order=1):
    """Per-element parameters; elements of different subdomains use their own coefficients.

    For higher-order spaces the element size entering the formulas is ``h / order``.
    """
    ne = mesh.ntriangles
    tau1, tau2, tau3, phi = (np.empty(ne) for _ in range(4))
    h_u, h_c = mesh.h / velocity_order, mesh.h / concentration_order
    for region in np.unique(mesh.subdomain_of):
        sel = mesh.subdomain_of == region
        coeffs = case.coeffs_for(int(region))
        tau1[sel], tau2[sel], _ = compute_taus(coeffs, h_u, mode, constants)
        tau3[sel] = compute_taus(coeffs, h_c, mode, constants)[2]
        phi[sel] = coeffs.phi
    return _assemble_params(tau1, tau2, tau3, phi, dt, n_terms, mode, constants, use_series)


def zero_stabilization(mesh):
    z = np.zeros(mesh.ntriangles)
    return StabilizationParams(z, z, z, z, z, z.copy(), mode="none")
