"""Monolithic assembly of the Galerkin and ASGS-stabilized coupled systems.

One time step of the theta scheme reads

    (Mt + a K) U^{n+1} = Mt U^n - b K U^n + F^{n,theta},
    a = (1 + theta) / 2,  b = (1 - theta) / 2,

where ``K`` holds the spatial operator (Galerkin part plus residual-based
terms), ``Mt`` every term multiplying the discrete time derivative and ``F``
the load. The viscosity and the advecting velocity are taken from a
linearization state (the previous time level unless Picard iterates are used).
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .linalg import csr_from_triplets
from .problem import mms_forcing, viscosity
from .quadrature import gauss_line, triangle_rule
from .spaces import FIELDS

_FIELD_RANK = {f: i for i, f in enumerate(FIELDS)}


@dataclass(frozen=True)
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    parts: dict = field(default_factory=dict)


def default_workers():
    try:
        return max(1, int(os.environ.get("ASGS_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# element data


def _theta_weights(theta):
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return 0.5 * (1.0 + theta), 0.5 * (1.0 - theta)


def _element_data(layout, case, lin_state, t_new, dt, theta, rule):
    """Coefficients, forcing and basis data at the quadrature points of every element."""
    mesh = layout.mesh
    a, b = _theta_weights(theta)
    t_old = t_new - dt if np.isfinite(dt) else t_new
    t_theta = a * t_new + b * t_old
    bary = rule.points
    space_c = layout.spaces["c"]
    xq = space_c.physical_points(bary)
    X, Y = xq[..., 0], xq[..., 1]
    wdet = rule.weights[None, :] * np.abs(space_c.detJ)[:, None]

    coef = case.element_coefficients(mesh)
    visc_a = np.array([s.viscosity_a for s in coef["sets"]])[:, None]
    visc_b = np.array([s.viscosity_b for s in coef["sets"]])[:, None]

    lin = lin_state.fields_at(bary)
    c_lin = lin["c"][0]
    mu = visc_a * np.exp(visc_b * c_lin)
    adv = np.stack([lin["u1"][0], lin["u2"][0]], axis=-1)

    shape = X.shape
    D1, D2, D1x, D2y = (np.zeros(shape) for _ in range(4))
    forcing = [np.zeros(shape) for _ in range(4)]
    for region in np.unique(mesh.subdomain_of):
        sel = mesh.subdomain_of == region
        s = case.coeffs_for(int(region))
        D1[sel], D2[sel], D1x[sel], D2y[sel] = s.diffusion(X[sel], Y[sel], t_theta)
        new = mms_forcing(case, X[sel], Y[sel], t_new, int(region))
        if b > 0:
            old = mms_forcing(case, X[sel], Y[sel], t_old, int(region))
            new = [a * fn + b * fo for fn, fo in zip(new, old)]
        for k in range(4):
            forcing[k][sel] = new[k]

    basis = {}
    for f in FIELDS:
        space = layout.spaces[f]
        if id(space) not in basis:
            phi, grads, hess = space.tabulate(bary)
            basis[id(space)] = {
                "phi": phi,
                "grad": grads,
                "xx": hess[:, :, 0, 0],
                "yy": hess[:, :, 1, 1],
                "order": space.order,
            }
    return {
        "wdet": wdet,
        "mu": mu,
        "adv": adv,
        "D": (D1, D2, D1x, D2y),
        "forcing": forcing,
        "sigma": coef["sigma"],
        "phi": coef["phi"],
        "alpha": coef["alpha"],
        "inv_dt": 0.0 if np.isinf(dt) else 1.0 / dt,
        "basis": {f: basis[id(layout.spaces[f])] for f in FIELDS},
    }


def _slice(data, sel):
    out = {}
    for key, val in data.items():
        if key == "basis":
            out[key] = {
                f: {"phi": d["phi"], "grad": d["grad"][sel], "xx": d["xx"][sel], "yy": d["yy"][sel],
                    "order": d["order"]}
                for f, d in val.items()
            }
        elif key == "D" or key == "forcing":
            out[key] = [v[sel] for v in val]
        elif isinstance(val, np.ndarray):
            out[key] = val[sel]
        else:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# local kernels


def _chunk_blocks(d, stab, naive):
    """Local matrices for one chunk of elements.

    Returns dicts keyed by (test field, trial field) for K and Mt, and by
    field for the load.
    """
    wdet = d["wdet"]
    ne, nq = wdet.shape
    K, Mt, F = {}, {}, {}

    def mat(coef, test, trial):
        return np.einsum("eq,eqa,eqb->eab", coef * wdet, test, trial)

    def vec(coef, test):
        return np.einsum("eq,eqa->ea", coef * wdet, test)

    def add(store, key, val):
        store[key] = store[key] + val if key in store else val

    B = d["basis"]

    def val(f):
        phi = B[f]["phi"]
        return np.broadcast_to(phi[None], (ne,) + phi.shape)

    def dx(f, i):
        return B[f]["grad"][..., i]

    def second(f, key):
        return np.broadcast_to(B[f][key][:, None, :], (ne, nq, B[f][key].shape[1]))

    def use_second(f):
        return naive or B[f]["order"] > 1

    ones = np.ones((ne, nq))
    col = lambda arr: np.broadcast_to(np.asarray(arr)[:, None], (ne, nq))  # noqa: E731
    mu, adv = d["mu"], d["adv"]
    sigma, phi, alpha = col(d["sigma"]), col(d["phi"]), col(d["alpha"])
    D1, D2, D1x, D2y = d["D"]
    f1x, f1y, f2, g = d["forcing"]
    inv_dt = d["inv_dt"]
    vel = ("u1", "u2")
    fvel = (f1x, f1y)

    # Galerkin --------------------------------------------------------------
    for i, u in enumerate(vel):
        add(K, (u, u), mat(mu, dx(u, 0), dx(u, 0)) + mat(mu, dx(u, 1), dx(u, 1)) + mat(sigma, val(u), val(u)))
        add(K, (u, "p"), mat(-ones, dx(u, i), val("p")))
        add(K, ("p", u), mat(ones, val("p"), dx(u, i)))
        add(F, u, vec(fvel[i], val(u)))
    add(F, "p", vec(f2, val("p")))

    def adv_grad(f):
        return adv[..., 0:1] * dx(f, 0) + adv[..., 1:2] * dx(f, 1)

    add(K, ("c", "c"),
        mat(D1, dx("c", 0), dx("c", 0)) + mat(D2, dx("c", 1), dx("c", 1))
        + mat(ones, val("c"), adv_grad("c")) + mat(alpha, val("c"), val("c")))
    add(Mt, ("c", "c"), mat(phi * inv_dt, val("c"), val("c")))
    add(F, "c", vec(g, val("c")))

    if stab is None:
        return K, Mt, F

    # momentum residual against mu lap v - sigma v + grad q
    tau1 = col(stab.tau1)
    tau2 = col(stab.tau2)
    for i, u in enumerate(vel):
        test_u = -sigma[..., None] * val(u)
        trial_u = sigma[..., None] * val(u)
        if use_second(u):
            lap = second(u, "xx") + second(u, "yy")
            test_u = test_u + mu[..., None] * lap
            trial_u = trial_u - mu[..., None] * lap
        add(K, (u, u), mat(tau1, test_u, trial_u))
        add(K, (u, "p"), mat(tau1, test_u, dx("p", i)))
        add(K, ("p", u), mat(tau1, dx("p", i), trial_u))
        add(K, ("p", "p"), mat(tau1, dx("p", i), dx("p", i)))
        add(F, u, vec(tau1 * fvel[i], test_u))
        add(F, "p", vec(tau1 * fvel[i], dx("p", i)))
        # continuity residual against div v
        for j, w in enumerate(vel):
            add(K, (u, w), mat(tau2, dx(u, i), dx(w, j)))
        add(F, u, vec(tau2 * f2, dx(u, i)))

    # transport residual against div(D grad d) + a.grad d - alpha d
    weight = col(stab.transport_weight)
    kappa = col(stab.mass_factor)
    test_c = adv_grad("c") - alpha[..., None] * val("c")
    trial_c = adv_grad("c") + alpha[..., None] * val("c")
    if use_second("c"):
        # P1: the flux divergence is dropped as a whole, like the viscous term
        div = D1[..., None] * second("c", "xx") + D2[..., None] * second("c", "yy")
        if B["c"]["order"] > 1:
            div = div + D1x[..., None] * dx("c", 0) + D2y[..., None] * dx("c", 1)
        test_c = test_c + div
        trial_c = trial_c - div
    add(K, ("c", "c"), mat(weight, test_c, trial_c) - mat(kappa, val("c"), trial_c))
    add(Mt, ("c", "c"), mat(weight * phi * inv_dt, test_c, val("c")) - mat(kappa * phi * inv_dt, val("c"), val("c")))
    add(F, "c", vec(weight * g, test_c) - vec(kappa * g, val("c")))
    return K, Mt, F


def _slice_stab(stab, sel):
    if stab is None:
        return None
    arrays = ("tau1", "tau2", "tau3", "tau3_prime", "series_factor", "mass_factor")
    return replace(stab, **{k: getattr(stab, k)[sel] for k in arrays})


def _run_chunks(data, stab, naive, workers):
    ne = data["wdet"].shape[0]
    workers = max(1, min(workers, ne))
    chunks = np.array_split(np.arange(ne), workers)
    if workers == 1:
        return [_chunk_blocks(data, stab, naive)], chunks
    sliced = [(_slice(data, c), _slice_stab(stab, c)) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda job: _chunk_blocks(job[0], job[1], naive), sliced))
    return results, chunks


def _scatter(layout, results, chunks, which):
    """Merge local blocks into CSR in canonical (block, element) order."""
    keys = sorted({k for r in results for k in r[which]}, key=lambda k: (_FIELD_RANK[k[0]], _FIELD_RANK[k[1]]))
    rows, cols, vals = [], [], []
    for key in keys:
        fr, fc = key
        dr = layout.spaces[fr].cell_dofs
        dc = layout.spaces[fc].cell_dofs
        for res, chunk in zip(results, chunks):
            local = res[which].get(key)
            if local is None:
                continue
            r = layout.offsets[fr] + dr[chunk]
            c = layout.offsets[fc] + dc[chunk]
            rows.append(np.broadcast_to(r[:, :, None], local.shape).ravel())
            cols.append(np.broadcast_to(c[:, None, :], local.shape).ravel())
            vals.append(local.ravel())
    n = layout.total
    if not rows:
        return sp.csr_matrix((n, n))
    return csr_from_triplets(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)


def _scatter_load(layout, results, chunks):
    n = layout.total
    rows, vals = [], []
    for f in FIELDS:
        dofs = layout.spaces[f].cell_dofs
        for res, chunk in zip(results, chunks):
            local = res[2].get(f)
            if local is None:
                continue
            rows.append((layout.offsets[f] + dofs[chunk]).ravel())
            vals.append(local.ravel())
    return np.bincount(np.concatenate(rows), weights=np.concatenate(vals), minlength=n)


# ---------------------------------------------------------------------------
# boundary and interface integrals


def _edge_tabulation(space, edges, triangles, npoints):
    """Basis values on edges, via the barycentric coordinates inside an adjacent triangle."""
    mesh = space.mesh
    s, w = gauss_line(npoints)
    tris = mesh.triangles[triangles]
    phis, pts, wts = [], [], []
    for (va, vb), k, tri in zip(edges, triangles, tris):
        ia, ib = int(np.flatnonzero(tri == va)[0]), int(np.flatnonzero(tri == vb)[0])
        bary = np.zeros((len(s), 3))
        bary[:, ia] = 1.0 - s
        bary[:, ib] = s
        phi, _, _ = space.tabulate(bary, elements=[k])
        phis.append(phi)
        pa, pb = mesh.vertices[va], mesh.vertices[vb]
        pts.append(pa[None] + s[:, None] * (pb - pa)[None])
        wts.append(w * np.linalg.norm(pb - pa))
    return np.array(phis), np.array(pts), np.array(wts), space.cell_dofs[triangles]


def _stokes_side_triangles(mesh):
    from .mesh import Subdomain

    out = []
    for e in mesh.interface_edges:
        tris = mesh.triangles_on_edge(e)
        stokes = [k for k in tris if mesh.subdomain_of[k] == Subdomain.STOKES]
        if len(tris) != 2 or len(stokes) != 1:
            raise ValueError(f"interface edge {tuple(e)} does not separate a Stokes and a Brinkman triangle")
        out.append(stokes[0])
    return np.array(out, dtype=np.int64)


def interface_tangent(mesh):
    nx, ny = mesh.interface_normal
    return np.array([-ny, nx])


def bjs_matrix(layout, alpha_bjs, sigma_B, npoints=3):
    """Matrix of (alpha/sqrt(sigma)) * integral over the interface of (u.t)(v.t)."""
    mesh = layout.mesh
    n = layout.total
    if alpha_bjs == 0.0:
        return sp.csr_matrix((n, n))
    if len(mesh.interface_edges) == 0:
        raise ValueError("mesh has no interface edges")
    if not sigma_B > 0:
        raise ValueError("BJS coefficient needs sigma_B > 0")
    tris = _stokes_side_triangles(mesh)
    tangent = interface_tangent(mesh)
    coef = alpha_bjs / np.sqrt(sigma_B)
    rows, cols, vals = [], [], []
    for i, fi in enumerate(("u1", "u2")):
        for j, fj in enumerate(("u1", "u2")):
            ti_tj = tangent[i] * tangent[j]
            if ti_tj == 0.0:
                continue
            phi_i, _, w, dofs_i = _edge_tabulation(layout.spaces[fi], mesh.interface_edges, tris, npoints)
            phi_j, _, _, dofs_j = _edge_tabulation(layout.spaces[fj], mesh.interface_edges, tris, npoints)
            local = coef * ti_tj * np.einsum("eq,eqa,eqb->eab", w, phi_i, phi_j)
            r = layout.offsets[fi] + dofs_i
            c = layout.offsets[fj] + dofs_j
            rows.append(np.broadcast_to(r[:, :, None], local.shape).ravel())
            cols.append(np.broadcast_to(c[:, None, :], local.shape).ravel())
            vals.append(local.ravel())
    return csr_from_triplets(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)


def bjs_load(layout, case, sigma_B, t_new, dt, theta, npoints=3):
    """Right-hand side (alpha/sqrt(sigma)) (u_exact.t, v.t) on the interface at the theta level.

    Keeps the manufactured solution consistent with the slip term; it vanishes
    when the exact tangential velocity is zero on the interface.
    """
    mesh = layout.mesh
    out = np.zeros(layout.total)
    if case.alpha_bjs == 0.0 or not case.forced:
        return out
    a, b = _theta_weights(theta)
    tris = _stokes_side_triangles(mesh)
    tangent = interface_tangent(mesh)
    coef = case.alpha_bjs / np.sqrt(sigma_B)
    phi, pts, w, _ = _edge_tabulation(layout.spaces["u1"], mesh.interface_edges, tris, npoints)
    ex = case.solution.evaluate(pts[..., 0], pts[..., 1], t_new)
    ut = tangent[0] * ex["u1"] + tangent[1] * ex["u2"]
    if b > 0:
        exo = case.solution.evaluate(pts[..., 0], pts[..., 1], t_new - dt)
        ut = a * ut + b * (tangent[0] * exo["u1"] + tangent[1] * exo["u2"])
    for i, f in enumerate(("u1", "u2")):
        if tangent[i] == 0.0:
            continue
        phi_f, _, _, dofs = _edge_tabulation(layout.spaces[f], mesh.interface_edges, tris, npoints)
        local = coef * tangent[i] * np.einsum("eq,eq,eqa->ea", w, ut, phi_f)
        np.add.at(out, layout.offsets[f] + dofs, local)
    return out


def neumann_remainder_load(layout, case, t_new, dt, theta, npoints=3):
    """Boundary load (D grad c_exact . n, d) for cases whose exact flux does not vanish."""
    mesh = layout.mesh
    out = np.zeros(layout.total)
    a, b = _theta_weights(theta)
    space = layout.spaces["c"]
    edges = mesh.boundary_edges
    tris = np.array([mesh.triangles_on_edge(e)[0] for e in edges], dtype=np.int64)
    phi, pts, w, dofs = _edge_tabulation(space, edges, tris, npoints)
    normals = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}
    n = np.array([normals[tag] for tag in mesh.boundary_tags])

    def flux(t):
        vals = np.zeros(pts.shape[:2])
        for region in np.unique(mesh.subdomain_of[tris]):
            sel = mesh.subdomain_of[tris] == region
            s = case.coeffs_for(int(region))
            X, Y = pts[sel, :, 0], pts[sel, :, 1]
            ex = case.solution.evaluate(X, Y, t)
            d1, d2, _, _ = s.diffusion(X, Y, t)
            vals[sel] = d1 * ex["c_x"] * n[sel, 0:1] + d2 * ex["c_y"] * n[sel, 1:2]
        return vals

    q = a * flux(t_new) + (b * flux(t_new - dt) if b > 0 else 0.0)
    np.add.at(out, layout.offsets["c"] + dofs, np.einsum("eq,eq,eqa->ea", w, q, phi))
    return out


def pressure_mass_matrix(layout, quad_degree=2):
    """Mass matrix of the pressure space embedded in the coupled numbering."""
    space = layout.spaces["p"]
    rule = triangle_rule(quad_degree)
    phi, _, _ = space.tabulate(rule.points)
    ref = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    local = ref[None] * np.abs(space.detJ)[:, None, None]
    dofs = layout.offsets["p"] + space.cell_dofs
    rows = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
    return csr_from_triplets(rows, cols, local.ravel(), layout.total)


def add_pressure_regularization(system, layout, eps):
    """Add ``eps * (p, q)``; selects one solution of the singular equal-order Galerkin system."""
    if eps == 0.0:
        return system
    P = pressure_mass_matrix(layout)
    return replace(system, matrix=(system.matrix + eps * P).tocsr())


# ---------------------------------------------------------------------------
# public assembly


def assemble_operators(layout, case, lin_state, t_new, dt, theta=1.0, stab=None,
                       quad_degree=4, naive=False, workers=None):
    """Return ``(K, Mt, F)`` for one step; ``stab=None`` gives the Galerkin form."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    rule = triangle_rule(quad_degree)
    data = _element_data(layout, case, lin_state, t_new, dt, theta, rule)
    workers = default_workers() if workers is None else workers
    results, chunks = _run_chunks(data, stab, naive, workers)
    K = _scatter(layout, results, chunks, 0)
    Mt = _scatter(layout, results, chunks, 1)
    F = _scatter_load(layout, results, chunks)
    if case.neumann_remainder:
        F = F + neumann_remainder_load(layout, case, t_new, dt, theta)
    return K, Mt, F


def _system(layout, case, state_prev, t_new, dt, theta, stab, lin_state, **kw):
    lin_state = state_prev if lin_state is None else lin_state
    K, Mt, F = assemble_operators(layout, case, lin_state, t_new, dt, theta, stab, **kw)
    a, b = _theta_weights(theta)
    Un = state_prev.vector()
    A = (Mt + a * K).tocsr()
    rhs = Mt @ Un + F
    if b > 0:
        rhs = rhs - b * (K @ Un)
    return AssembledSystem(A, rhs, parts={"K": K, "Mt": Mt, "F": F})


def assemble_galerkin(layout, case, state_prev, t_target, dt, theta=1.0, lin_state=None, **kw):
    """Standard Galerkin system for the step ``t_target - dt -> t_target``."""
    return _system(layout, case, state_prev, t_target, dt, theta, None, lin_state, **kw)


def assemble_asgs(layout, case, state_prev, t_target, dt, theta, stab, lin_state=None, **kw):
    """Galerkin system plus the element-wise subgrid-scale terms."""
    if stab is None:
        raise ValueError("ASGS assembly needs stabilization parameters")
    return _system(layout, case, state_prev, t_target, dt, theta, stab, lin_state, **kw)


def assemble_interface_bjs(system, layout, alpha_bjs, sigma_B, theta=1.0, state_prev=None, load=None):
    """Add the Beavers-Joseph-Saffman slip term on the Stokes side of the interface.

    The term is theta-weighted like the rest of the spatial operator; ``load``
    is an optional right-hand-side contribution (see :func:`bjs_load`).
    """
    G = bjs_matrix(layout, alpha_bjs, sigma_B)
    a, b = _theta_weights(theta)
    rhs = system.rhs.copy()
    if b > 0 and state_prev is not None:
        rhs -= b * (G @ state_prev.vector())
    if load is not None:
        rhs += load
    parts = dict(system.parts, bjs=G)
    return replace(system, matrix=(system.matrix + a * G).tocsr(), rhs=rhs, parts=parts)


def apply_dirichlet(system, dofs, values):
    """Eliminate constrained rows and columns, moving known contributions to the right-hand side."""
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    uniq, inverse = np.unique(dofs, return_inverse=True)
    merged = np.full(len(uniq), np.nan)
    for k, v in zip(inverse, values):
        if np.isnan(merged[k]):
            merged[k] = v
        elif merged[k] != v:
            raise ValueError(f"conflicting Dirichlet values for dof {uniq[k]}: {merged[k]} vs {v}")
    if len(system.constrained):
        both = np.intersect1d(uniq, system.constrained)
        for dof in both:
            old = system.values[np.flatnonzero(system.constrained == dof)[0]]
            new = merged[np.flatnonzero(uniq == dof)[0]]
            if old != new:
                raise ValueError(f"conflicting Dirichlet values for dof {dof}: {old} vs {new}")
    A = system.matrix.tocsr()
    n = A.shape[0]
    xc = np.zeros(n)
    xc[uniq] = merged
    mask = np.zeros(n)
    mask[uniq] = 1.0
    rhs = system.rhs - A @ xc
    rhs[uniq] = merged
    keep = sp.diags(1.0 - mask)
    A = (keep @ A @ keep + sp.diags(mask)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    constrained = np.concatenate([system.constrained, uniq])
    vals = np.concatenate([system.values, merged])
    order = np.argsort(constrained, kind="stable")
    constrained, idx = np.unique(constrained[order], return_index=True)
    return replace(system, matrix=A, rhs=rhs, constrained=constrained, values=vals[order][idx])
