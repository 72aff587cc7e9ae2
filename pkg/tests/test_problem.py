import numpy as np
import pytest

from asgsfem.mesh import Subdomain
from asgsfem.problem import (
    CoefficientSet,
    ConstantDiffusion,
    BenchmarkDiffusion,
    ManufacturedSolution,
    constant_case,
    diffusion,
    exact_solution,
    make_case,
    mms_forcing,
    viscosity,
)

H = 1e-4


def d1(f, x, h=H):
    """Fourth-order central first derivative along one coordinate."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def test_viscosity_law():
    c = CoefficientSet()
    assert viscosity(c, 0.0) == pytest.approx(0.954, rel=1e-15)
    assert viscosity(c, 0.0625) == pytest.approx(1.001788, abs=1e-6)
    flat = CoefficientSet(viscosity_b=0.0)
    assert np.all(viscosity(flat, np.linspace(-3, 3, 7)) == 0.954)
    cs = np.linspace(0, 0.0625, 50)
    assert np.all(np.diff(viscosity(c, cs)) > 0)


def test_viscosity_within_bounds_on_exact_range():
    c = CoefficientSet()
    x, y = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41))
    for t in np.linspace(0, 1, 11):
        conc = exact_solution(make_case("stokes"), x, y, t)[3]
        mu = viscosity(c, conc)
        assert np.all(mu >= c.mu_l - 1e-15) and np.all(mu <= c.mu_u + 1e-12)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        CoefficientSet(mu_l=2.0, mu_u=1.0)
    with pytest.raises(ValueError):
        CoefficientSet(sigma=-1.0)
    with pytest.raises(ValueError):
        CoefficientSet(phi=0.0)


def test_exact_values():
    case = make_case("stokes")
    rng = np.random.default_rng(0)
    x, y = rng.random(20), rng.random(20)
    assert all(np.all(v == 0) for v in exact_solution(case, x, y, 0.0))
    u1, u2, p, c = exact_solution(case, 0.5, 0.5, 1.0)
    assert abs(u1) < 1e-15 and abs(u2) < 1e-15 and abs(p) < 1e-15
    assert c == pytest.approx(0.0625)


def test_exact_velocity_divergence_free(rng):
    sol = ManufacturedSolution()
    x, y, t = rng.random(1000), rng.random(1000), rng.random(1000)
    ex = sol.evaluate(x, y, t[0])
    assert np.max(np.abs(ex["u1_x"] + ex["u2_y"])) <= 1e-12
    # and by finite differences of the values alone
    div = d1(lambda s: sol.evaluate(s, y, t[0])["u1"], x) + d1(lambda s: sol.evaluate(x, s, t[0])["u2"], y)
    assert np.max(np.abs(div)) < 1e-9


def test_diffusion_values():
    coeffs = CoefficientSet()
    assert diffusion(coeffs, 0.3, 0.7, 0.0) == (0.0, 0.0)
    D1, D2 = diffusion(coeffs, 0.5, 0.25, 1.0)
    assert D1 == pytest.approx(1.0)
    # sin^2(2 pi * 0.5) = 0, so D2 vanishes at this point
    assert D2 == pytest.approx(0.0, abs=1e-30)
    D1, D2 = diffusion(coeffs, 0.0, np.linspace(0, 1, 5), 0.7)
    assert np.all(D1 == 0) and np.allclose(D2, 0, atol=1e-30)


def test_diffusion_nonnegative_and_derivatives(rng):
    D = BenchmarkDiffusion()
    x, y, t = rng.random(200), rng.random(200), 0.8
    d1v, d2v, d1x, d2y = D(x, y, t)
    assert np.all(d1v >= 0) and np.all(d2v >= 0)
    assert np.allclose(d1(lambda s: D(s, y, t)[0], x), d1x, atol=1e-8)
    assert np.allclose(d1(lambda s: D(x, s, t)[1], y), d2y, atol=1e-8)


def test_analytic_derivatives_match_finite_differences(rng):
    sol = ManufacturedSolution()
    x, y, t = rng.random(100), rng.random(100), 0.6
    ex = sol.evaluate(x, y, t)
    for f in ("u1", "u2", "p", "c"):
        fx = lambda s, f=f: sol.evaluate(s, y, t)[f]  # noqa: E731
        fy = lambda s, f=f: sol.evaluate(x, s, t)[f]  # noqa: E731
        assert np.allclose(d1(fx, x), ex[f"{f}_x"], atol=1e-6)
        assert np.allclose(d1(fy, y), ex[f"{f}_y"], atol=1e-6)
        assert np.allclose(d1(lambda s, f=f: sol.evaluate(s, y, t)[f"{f}_x"], x), ex[f"{f}_xx"], atol=1e-6)
        assert np.allclose(d1(lambda s, f=f: sol.evaluate(x, s, t)[f"{f}_y"], y), ex[f"{f}_yy"], atol=1e-6)
        assert np.allclose(d1(lambda s, f=f: sol.evaluate(x, s, t)[f"{f}_x"], y), ex[f"{f}_xy"], atol=1e-6)
    assert np.allclose(d1(lambda s: sol.evaluate(x, y, s)["c"], t), ex["c_t"], atol=1e-6)


@pytest.mark.parametrize("name,region", [("stokes", Subdomain.UNIFIED), ("brinkman", Subdomain.UNIFIED),
                                         ("interface", Subdomain.STOKES), ("interface", Subdomain.BRINKMAN)])
def test_forcing_matches_finite_difference_operator(name, region, rng):
    """Apply the strong operators with 4th-order differences of the field values only."""
    case = make_case(name)
    co = case.coeffs_for(region)
    sol = case.solution
    n = 200
    x, y, t = 0.05 + 0.9 * rng.random(n), 0.05 + 0.9 * rng.random(n), 0.05 + 0.9 * rng.random(n)

    def F(f, xx, yy, tt):
        return sol.evaluate(xx, yy, tt)[f]

    def lap(f):
        fxx = (-F(f, x + 2 * H, y, t) + 16 * F(f, x + H, y, t) - 30 * F(f, x, y, t)
               + 16 * F(f, x - H, y, t) - F(f, x - 2 * H, y, t)) / (12 * H * H)
        fyy = (-F(f, x, y + 2 * H, t) + 16 * F(f, x, y + H, t) - 30 * F(f, x, y, t)
               + 16 * F(f, x, y - H, t) - F(f, x, y - 2 * H, t)) / (12 * H * H)
        return fxx + fyy

    def dx(f):
        return d1(lambda s: F(f, s, y, t), x)

    def dy(f):
        return d1(lambda s: F(f, x, s, t), y)

    c = F("c", x, y, t)
    mu = co.viscosity_a * np.exp(co.viscosity_b * c)
    f1x = -mu * lap("u1") + co.sigma * F("u1", x, y, t) + dx("p")
    f1y = -mu * lap("u2") + co.sigma * F("u2", x, y, t) + dy("p")
    f2 = dx("u1") + dy("u2")

    def flux_x(s):
        cx = d1(lambda q: F("c", q, y, t), s)
        return co.diffusion(s, y, t)[0] * cx

    def flux_y(s):
        cy = d1(lambda q: F("c", x, q, t), s)
        return co.diffusion(x, s, t)[1] * cy

    div_flux = d1(flux_x, x) + d1(flux_y, y)
    ct = d1(lambda s: F("c", x, y, s), t)
    g = co.phi * ct - div_flux + F("u1", x, y, t) * dx("c") + F("u2", x, y, t) * dy("c") + co.alpha * c
    got = mms_forcing(case, x, y, t, region)
    for ref, val in zip((f1x, f1y, f2, g), got):
        assert np.max(np.abs(ref - val)) <= 1e-6


def test_forcing_at_time_zero(rng):
    case = make_case("brinkman")
    x, y = rng.random(50), rng.random(50)
    f1x, f1y, f2, g = mms_forcing(case, x, y, 0.0)
    assert np.all(f1x == 0) and np.all(f1y == 0) and np.all(f2 == 0)
    assert np.allclose(g, 2.0 * x * y * (x - 1) * (y - 1), atol=1e-15)


def test_stokes_f2_identically_zero(rng):
    case = make_case("stokes")
    f2 = mms_forcing(case, rng.random(1000), rng.random(1000), 0.37)[2]
    assert np.max(np.abs(f2)) <= 1e-12


def test_exact_velocity_and_flux_vanish_on_boundary():
    case = make_case("stokes")
    s = np.linspace(0, 1, 33)
    z, o = np.zeros_like(s), np.ones_like(s)
    for x, y, n in ((z, s, (-1, 0)), (o, s, (1, 0)), (s, z, (0, -1)), (s, o, (0, 1))):
        ex = case.solution.evaluate(x, y, 0.9)
        assert np.max(np.abs(ex["u1"])) < 1e-15 and np.max(np.abs(ex["u2"])) < 1e-15
        D1, D2, _, _ = case.coeffs_for(Subdomain.UNIFIED).diffusion(x, y, 0.9)
        flux = D1 * ex["c_x"] * n[0] + D2 * ex["c_y"] * n[1]
        assert np.max(np.abs(flux)) < 1e-15


def test_case_presets():
    st = make_case("stokes")
    co = st.coeffs_for(Subdomain.UNIFIED)
    assert co.sigma == 0 and co.phi == 1 and co.alpha == 0.01
    br = make_case("brinkman").coeffs_for(Subdomain.UNIFIED)
    assert br.sigma == 1 and br.phi == 2
    it = make_case("interface")
    assert it.is_interface and not st.is_interface
    assert it.coeffs_for(Subdomain.STOKES).sigma == 0
    assert it.coeffs_for(Subdomain.BRINKMAN).sigma == 1
    assert it.alpha_bjs == 1.0
    with pytest.raises(ValueError):
        make_case("darcy")


def test_constant_case_unforced():
    case = constant_case(D=(2.0, 3.0))
    f = mms_forcing(case, np.array([0.2]), np.array([0.3]), 0.5)
    assert all(np.all(v == 0) for v in f)
    co = case.coeffs_for(Subdomain.UNIFIED)
    assert isinstance(co.diffusion, ConstantDiffusion) and co.D_l == 2.0
