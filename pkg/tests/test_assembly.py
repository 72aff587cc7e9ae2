import numpy as np
import pytest
import scipy.sparse as sp

from asgsfem.assembly import (
    AssembledSystem,
    apply_dirichlet,
    assemble_asgs,
    assemble_galerkin,
    assemble_operators,
    bjs_load,
    bjs_matrix,
)
from asgsfem.linalg import solve_dense_oracle
from asgsfem.mesh import build_structured_mesh, partition_interface
from asgsfem.problem import make_case
from asgsfem.spaces import build_layout
from asgsfem.stabilization import build_stabilization, zero_stabilization
from asgsfem.timestepper import TimeLoopConfig, build_step_system, initial_state

DT = 0.25


def _state(layout, case, t=0.5):
    return initial_state(layout, case, t)


def _blocks(M, layout, f, g):
    return M.tocsr()[layout.block(f), :][:, layout.block(g)].toarray()


@pytest.mark.parametrize("name", ["stokes", "brinkman"])
def test_zero_tau_reduces_to_galerkin(small_layout, name):
    case = make_case(name)
    st = _state(small_layout, case)
    gal = assemble_galerkin(small_layout, case, st, 0.75, DT)
    asgs = assemble_asgs(small_layout, case, st, 0.75, DT, 1.0, zero_stabilization(small_layout.mesh))
    assert abs(gal.matrix - asgs.matrix).max() <= 1e-14
    assert np.max(np.abs(gal.rhs - asgs.rhs)) <= 1e-14


@pytest.mark.parametrize("name", ["stokes", "interface"])
def test_naive_and_skip_paths_agree(name):
    mesh = build_structured_mesh(4, 4)
    case = make_case(name)
    if case.is_interface:
        mesh = partition_interface(mesh)
    layout = build_layout(mesh)
    st = _state(layout, case)
    stab = build_stabilization(mesh, case, DT)
    fast = assemble_operators(layout, case, st, 0.75, DT, 1.0, stab)
    slow = assemble_operators(layout, case, st, 0.75, DT, 1.0, stab, naive=True)
    for A, B in zip(fast[:2], slow[:2]):
        assert abs(A - B).max() <= 1e-13 * max(1.0, abs(B).max())
    assert np.max(np.abs(fast[2] - slow[2])) <= 1e-13


def test_galerkin_coupling_blocks_are_negative_transposes(small_layout):
    case = make_case("stokes")
    K, _, _ = assemble_operators(small_layout, case, _state(small_layout, case), 0.75, DT)
    for u in ("u1", "u2"):
        up = _blocks(K, small_layout, u, "p")
        pu = _blocks(K, small_layout, "p", u)
        assert np.allclose(up, -pu.T, atol=1e-14)
        assert np.abs(up).max() > 0


def test_velocity_block_symmetric_positive_definite(small_layout):
    case = make_case("brinkman")
    K, Mt, _ = assemble_operators(small_layout, case, _state(small_layout, case), 0.75, DT)
    A = _blocks(K, small_layout, "u1", "u1")
    assert np.allclose(A, A.T, atol=1e-14)
    # Brinkman term makes it positive definite even without boundary conditions
    assert np.linalg.eigvalsh(A).min() > 0
    M = _blocks(Mt, small_layout, "c", "c")
    assert np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() > 0


def test_asgs_matrix_differs_from_galerkin(small_layout):
    case = make_case("stokes")
    st = _state(small_layout, case)
    gal = assemble_galerkin(small_layout, case, st, 0.75, DT)
    stab = build_stabilization(small_layout.mesh, case, DT)
    asgs = assemble_asgs(small_layout, case, st, 0.75, DT, 1.0, stab)
    # pressure-pressure block only appears through the stabilization
    assert np.abs(_blocks(gal.matrix, small_layout, "p", "p")).max() == 0
    assert np.abs(_blocks(asgs.matrix, small_layout, "p", "p")).max() > 0


def test_asgs_requires_parameters(small_layout):
    case = make_case("stokes")
    with pytest.raises(ValueError):
        assemble_asgs(small_layout, case, _state(small_layout, case), 0.75, DT, 1.0, None)
    with pytest.raises(ValueError):
        assemble_operators(small_layout, case, _state(small_layout, case), 0.75, 0.0)


def test_bjs_zero_alpha(interface_layout):
    G = bjs_matrix(interface_layout, 0.0, 1.0)
    assert G.nnz == 0 and G.shape == (interface_layout.total,) * 2


def test_bjs_energy_of_unit_tangential_velocity(interface_layout):
    G = bjs_matrix(interface_layout, 0.1, 1.0)
    v = np.zeros(interface_layout.total)
    v[interface_layout.block("u2")] = 1.0
    # interface x = 0.5 has unit length and tangent (0, 1)
    assert v @ G @ v == pytest.approx(0.1, rel=1e-13)
    w = np.zeros(interface_layout.total)
    w[interface_layout.block("u1")] = 1.0
    assert abs(w @ G @ w) < 1e-15
    assert abs(G - G.T).max() < 1e-15


def test_bjs_scales_with_inverse_root_sigma(interface_layout):
    G1 = bjs_matrix(interface_layout, 1.0, 1.0)
    G4 = bjs_matrix(interface_layout, 1.0, 4.0)
    assert abs(G1 - 2.0 * G4).max() < 1e-14
    with pytest.raises(ValueError):
        bjs_matrix(interface_layout, 1.0, 0.0)


def test_bjs_requires_interface(small_layout):
    with pytest.raises(ValueError):
        bjs_matrix(small_layout, 1.0, 1.0)


def test_bjs_load_vanishes_for_zero_tangential_velocity(interface_layout):
    case = make_case("interface")
    ex = case.solution.evaluate(np.full(9, 0.5), np.linspace(0, 1, 9), 0.75)
    load = bjs_load(interface_layout, case, 1.0, 0.75, DT, 1.0)
    if np.max(np.abs(ex["u2"])) < 1e-15:
        assert np.max(np.abs(load)) < 1e-15
    else:
        assert np.max(np.abs(load)) > 0


def _toy_system(n, rng):
    A = rng.random((n, n)) + n * np.eye(n)
    return AssembledSystem(sp.csr_matrix(A), rng.random(n)), A


def test_dirichlet_matches_dense_reduction(rng):
    system, A = _toy_system(8, rng)
    fixed, vals = np.array([1, 5]), np.array([0.3, -2.0])
    red = apply_dirichlet(system, fixed, vals)
    x = solve_dense_oracle(red.matrix, red.rhs)
    free = np.setdiff1d(np.arange(8), fixed)
    ref = np.zeros(8)
    ref[fixed] = vals
    ref[free] = np.linalg.solve(A[np.ix_(free, free)], system.rhs[free] - A[np.ix_(free, fixed)] @ vals)
    assert np.allclose(x, ref, rtol=1e-12)


def test_dirichlet_conflicts(rng):
    system, _ = _toy_system(5, rng)
    with pytest.raises(ValueError):
        apply_dirichlet(system, [2, 2], [1.0, 2.0])
    once = apply_dirichlet(system, [2, 2], [1.0, 1.0])
    with pytest.raises(ValueError):
        apply_dirichlet(once, [2], [3.0])
    twice = apply_dirichlet(once, [2, 3], [1.0, 0.5])
    assert list(twice.constrained) == [2, 3]


def test_step_system_full_rank_with_pin():
    case = make_case("stokes")
    layout = build_layout(build_structured_mesh(2, 2))
    cfg = TimeLoopConfig(T=1.0, N=4)
    stab = build_stabilization(layout.mesh, case, cfg.dt)
    system = build_step_system(initial_state(layout, case), cfg, case, stab)
    assert np.linalg.matrix_rank(system.matrix.toarray()) == layout.total


def test_field_order_permutation_invariance():
    mesh = build_structured_mesh(4, 4)
    case = make_case("brinkman")
    a = build_layout(mesh)
    b = build_layout(mesh, field_order=("c", "p", "u2", "u1"))
    stab = build_stabilization(mesh, case, DT)
    Ka, Ma, Fa = assemble_operators(a, case, _state(a, case), 0.75, DT, 1.0, stab)
    Kb, Mb, Fb = assemble_operators(b, case, _state(b, case), 0.75, DT, 1.0, stab)
    for f in ("u1", "u2", "p", "c"):
        assert np.allclose(Fa[a.block(f)], Fb[b.block(f)], atol=1e-15)
        for g in ("u1", "u2", "p", "c"):
            assert np.allclose(_blocks(Ka, a, f, g), _blocks(Kb, b, f, g), atol=1e-14)
            assert np.allclose(_blocks(Ma, a, f, g), _blocks(Mb, b, f, g), atol=1e-14)


@pytest.mark.parametrize("workers", [2, 3, 7])
def test_worker_count_is_bitwise_deterministic(workers):
    mesh = partition_interface(build_structured_mesh(6, 6))
    case = make_case("interface")
    layout = build_layout(mesh)
    st = _state(layout, case)
    stab = build_stabilization(mesh, case, DT)
    ref = assemble_operators(layout, case, st, 0.75, DT, 1.0, stab, workers=1)
    got = assemble_operators(layout, case, st, 0.75, DT, 1.0, stab, workers=workers)
    for A, B in zip(ref[:2], got[:2]):
        assert np.array_equal(A.indptr, B.indptr) and np.array_equal(A.indices, B.indices)
        assert np.array_equal(A.data, B.data)
    assert np.array_equal(ref[2], got[2])


def test_exact_solution_nearly_satisfies_discrete_system():
    """Consistency: the interpolated exact pair leaves a residual that shrinks with h."""
    case = make_case("stokes")
    res = []
    for n in (8, 16):
        layout = build_layout(build_structured_mesh(n, n))
        cfg = TimeLoopConfig(T=1.0, N=n)
        stab = build_stabilization(layout.mesh, case, cfg.dt)
        prev = initial_state(layout, case, 0.5)
        system = build_step_system(prev, cfg, case, stab)
        exact = initial_state(layout, case, 0.5 + cfg.dt)
        r = system.matrix @ exact.vector() - system.rhs
        res.append(np.linalg.norm(r[layout.block("c")]) / np.linalg.norm(system.rhs[layout.block("c")]))
    assert res[1] < res[0]
