import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asgsfem.analysis import (
    ErrorReport,
    aposteriori_estimate,
    eoc,
    eoc_sequence,
    error_norms,
    estimate_trajectory,
    exact_trajectory,
)
from asgsfem.mesh import build_structured_mesh, partition_interface
from asgsfem.problem import constant_case, make_case
from asgsfem.spaces import State, build_layout
from asgsfem.timestepper import Trajectory, TimeLoopConfig, initial_state, run


def _interpolated_trajectory(layout, case, N):
    states = [initial_state(layout, case, k / N) for k in range(N + 1)]
    return Trajectory(states, [])


@pytest.mark.parametrize("name", ["stokes", "brinkman", "interface"])
def test_exact_injection_has_zero_error(name):
    case = make_case(name)
    mesh = build_structured_mesh(6, 6)
    if case.is_interface:
        mesh = partition_interface(mesh)
    traj = exact_trajectory(build_layout(mesh), case, 6)
    rep = error_norms(traj, case)
    assert rep.v_norm_sq <= 1e-24 and rep.v_norm <= 1e-12
    total, fields = estimate_trajectory(traj, case)
    assert total <= 1e-20 and len(fields) == 6


def test_interpolant_converges_at_second_order_on_squared_scale(stokes_case):
    errs = []
    for n in (8, 16, 32):
        traj = _interpolated_trajectory(build_layout(build_structured_mesh(n, n)), stokes_case, 4)
        errs.append(error_norms(traj, stokes_case).v_norm_sq)
    rates = eoc_sequence(errs)
    assert all(r == pytest.approx(2.0, abs=0.15) for r in rates)


def test_eoc_examples():
    assert eoc(1.0, 0.25) == pytest.approx(2.0)
    assert eoc(0.1, 0.1) == 0.0
    assert eoc(9.0, 1.0, ratio=3) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        eoc(0.0, 1.0)
    with pytest.raises(ValueError):
        eoc(1.0, -1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-12, 1e3), min_size=3, max_size=8))
def test_eoc_telescopes(errors):
    rates = eoc_sequence(errors)
    assert sum(rates) == pytest.approx(np.log2(errors[0] / errors[-1]), abs=1e-9)


@pytest.mark.parametrize("s", [2.0, -0.5, 10.0])
def test_error_norm_homogeneity(stokes_case, s):
    layout = build_layout(build_structured_mesh(4, 4))
    traj = run(initial_state(layout, stokes_case), TimeLoopConfig(N=2), stokes_case)
    base = error_norms(traj, stokes_case)
    scaled = error_norms(traj, stokes_case, scale=s)
    assert scaled.v_norm == pytest.approx(abs(s) * base.v_norm, rel=1e-12)
    assert scaled.v_norm_sq == pytest.approx(base.scaled(s).v_norm_sq, rel=1e-12)


def test_error_norms_invariant_under_field_order(stokes_case):
    mesh = build_structured_mesh(5, 5)
    a = build_layout(mesh)
    b = build_layout(mesh, field_order=("c", "u2", "p", "u1"))
    ta = run(initial_state(a, stokes_case), TimeLoopConfig(N=2, solver="direct"), stokes_case)
    states = [State(b, dict(s.values), s.t) for s in ta.states]
    tb = Trajectory(states, [])
    assert error_norms(tb, stokes_case).v_norm_sq == pytest.approx(error_norms(ta, stokes_case).v_norm_sq,
                                                                    rel=1e-13)


def test_error_norm_input_checks(stokes_case):
    layout = build_layout(build_structured_mesh(2, 2))
    s = [initial_state(layout, stokes_case, t) for t in (0.0, 0.1, 0.3)]
    with pytest.raises(ValueError):
        error_norms(Trajectory(s[:1], []), stokes_case)
    with pytest.raises(ValueError):
        error_norms(Trajectory(s, []), stokes_case)
    late = [initial_state(layout, stokes_case, t) for t in (1.0, 2.0)]
    with pytest.raises(ValueError):
        error_norms(Trajectory(late, []), stokes_case)


def test_error_report_properties():
    r = ErrorReport(u1=1.0, u2=2.0, p=2.0, c=4.0, c_max_l2=0.0, c_l2h1=4.0)
    assert r.v_norm_sq == 25.0 and r.v_norm == 5.0
    assert r.scaled(-2).v_norm == 10.0


def test_estimator_zero_problem():
    case = constant_case()
    layout = build_layout(build_structured_mesh(4, 4))
    traj = run(initial_state(layout, case), TimeLoopConfig(N=2), case)
    total, fields = estimate_trajectory(traj, case)
    assert total == 0.0
    assert all(f.eta == 0.0 for f in fields)


def test_estimator_indicators_and_ordering(stokes_case):
    layout = build_layout(build_structured_mesh(4, 4))
    traj = run(initial_state(layout, stokes_case), TimeLoopConfig(N=2), stokes_case)
    rf = aposteriori_estimate(traj.states[1], traj.states[2], stokes_case)
    assert rf.indicators.shape == (layout.mesh.ntriangles,)
    assert np.all(rf.indicators >= 0)
    assert rf.eta_sq == pytest.approx(np.sum(rf.indicators))
    with pytest.raises(ValueError):
        aposteriori_estimate(traj.states[2], traj.states[1], stokes_case)


def test_estimator_decreases_with_refinement(stokes_case):
    etas = []
    for n in (4, 8, 16):
        layout = build_layout(build_structured_mesh(n, n))
        traj = run(initial_state(layout, stokes_case), TimeLoopConfig(N=n), stokes_case)
        etas.append(estimate_trajectory(traj, stokes_case)[0])
    assert etas[2] < etas[1] < etas[0]
