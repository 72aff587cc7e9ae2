"""Scalar Lagrange spaces (P1/P2) and the block layout of the coupled unknown."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

FIELDS = ("u1", "u2", "p", "c")
_BARY_TOL = 1e-12


def _reference_derivatives(order, bary):
    """Basis values and barycentric derivatives at points ``bary`` (nq, 3).

    Returns ``phi`` (nq, na), ``dphi`` (nq, na, 3) and ``d2phi`` (na, 3, 3);
    the second derivatives are constant for order <= 2.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    nq = len(bary)
    if order == 1:
        phi = bary.copy()
        dphi = np.broadcast_to(np.eye(3), (nq, 3, 3)).copy()
        d2phi = np.zeros((3, 3, 3))
        return phi, dphi, d2phi
    if order == 2:
        phi = np.empty((nq, 6))
        dphi = np.zeros((nq, 6, 3))
        d2phi = np.zeros((6, 3, 3))
        for i in range(3):
            li = bary[:, i]
            phi[:, i] = li * (2.0 * li - 1.0)
            dphi[:, i, i] = 4.0 * li - 1.0
            d2phi[i, i, i] = 4.0
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            phi[:, 3 + k] = 4.0 * bary[:, a] * bary[:, b]
            dphi[:, 3 + k, a] = 4.0 * bary[:, b]
            dphi[:, 3 + k, b] = 4.0 * bary[:, a]
            d2phi[3 + k, a, b] = d2phi[3 + k, b, a] = 4.0
        return phi, dphi, d2phi
    raise ValueError(f"unsupported polynomial order {order}")


class ScalarSpace:
    """Continuous Lagrange space of order 1 or 2 on a triangle mesh.

    Local dof ordering on a triangle is the three vertices followed, for
    order 2, by the edge midpoints opposite vertex 0, 1, 2.
    """

    def __init__(self, mesh, order):
        if order not in (1, 2):
            raise ValueError(f"unsupported polynomial order {order}")
        self.mesh = mesh
        self.order = order
        nv = mesh.nvertices
        if order == 1:
            self.cell_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
            self._edges = None
        else:
            edges, tri_edges = mesh.edges()
            self._edges = edges
            self.cell_dofs = np.hstack([mesh.triangles, nv + tri_edges])
            mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])
        self.ndofs = len(self.dof_coords)
        self.boundary_dofs = {tag: self._boundary(tag) for tag in np.unique(mesh.boundary_tags)}

    def _boundary(self, tag):
        mesh = self.mesh
        sel = mesh.boundary_edges[mesh.boundary_tags == tag]
        dofs = [np.unique(sel)]
        if self.order == 2:
            key = {tuple(e): k for k, e in enumerate(self._edges)}
            dofs.append(np.array([mesh.nvertices + key[tuple(sorted(e))] for e in sel], dtype=np.int64))
        return np.unique(np.concatenate(dofs))

    def all_boundary_dofs(self):
        return np.unique(np.concatenate(list(self.boundary_dofs.values())))

    @property
    def nlocal(self):
        return self.cell_dofs.shape[1]

    # geometry -----------------------------------------------------------
    @cached_property
    def _geometry(self):
        p = self.mesh.vertices[self.mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        grad_lambda = np.empty((len(p), 3, 2))
        grad_lambda[:, 1] = inv[:, 0]
        grad_lambda[:, 2] = inv[:, 1]
        grad_lambda[:, 0] = -(inv[:, 0] + inv[:, 1])
        return p, det, grad_lambda

    @property
    def detJ(self):
        return self._geometry[1]

    @property
    def grad_lambda(self):
        return self._geometry[2]

    def physical_points(self, bary):
        """Physical coordinates (nel, nq, 2) of barycentric points."""
        p = self._geometry[0]
        return np.einsum("qm,emd->eqd", np.atleast_2d(bary), p)

    def tabulate(self, bary, elements=None):
        """Basis data at barycentric points for every (or the selected) element.

        Returns ``phi`` (nq, na), physical gradients (nel, nq, na, 2) and
        Hessians (nel, na, 2, 2).
        """
        phi, dphi, d2phi = _reference_derivatives(self.order, bary)
        G = self.grad_lambda if elements is None else self.grad_lambda[elements]
        grads = np.einsum("qam,emd->eqad", dphi, G)
        if self.order == 1:
            hess = np.zeros((len(G), phi.shape[1], 2, 2))
        else:
            hess = np.einsum("aml,emd,elf->eadf", d2phi, G, G)
        return phi, grads, hess

    def function_at(self, coeffs, bary):
        """Value (nel, nq), gradient (nel, nq, 2) and Hessian (nel, nq, 2, 2) of a discrete function."""
        phi, grads, hess = self.tabulate(bary)
        local = np.asarray(coeffs)[self.cell_dofs]
        val = local @ phi.T
        grad = np.einsum("ea,eqad->eqd", local, grads)
        h = np.einsum("ea,eadf->edf", local, hess)
        return val, grad, np.broadcast_to(h[:, None], (len(h), len(phi), 2, 2))


def build_space(mesh, order):
    return ScalarSpace(mesh, order)


def evaluate_basis(space, triangle, ref_point):
    """Values, physical gradients and Hessians of the local basis at one barycentric point."""
    lam = np.asarray(ref_point, dtype=float)
    if lam.shape != (3,):
        raise ValueError("reference point must be a barycentric triple")
    if abs(lam.sum() - 1.0) > _BARY_TOL or np.any(lam < -_BARY_TOL) or np.any(lam > 1 + _BARY_TOL):
        raise ValueError(f"point {lam} lies outside the reference triangle")
    if not 0 <= triangle < space.mesh.ntriangles:
        raise IndexError(f"triangle {triangle} out of range")
    phi, grads, hess = space.tabulate(lam[None, :], elements=[triangle])
    return phi[0], grads[0, 0], hess[0]


def interpolate(space, f, t=0.0):
    """Nodal interpolant of ``f(x, y, t)``."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    vals = np.broadcast_to(np.asarray(f(x, y, t), dtype=float), x.shape)
    return np.array(vals)


def locate(mesh, point, tol=1e-12):
    """Triangle index and barycentric coordinates of ``point``."""
    p = mesh.vertices[mesh.triangles]
    x = np.asarray(point, dtype=float)
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    r = x - p[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    lam = np.column_stack([1.0 - l1 - l2, l1, l2])
    inside = np.flatnonzero(np.all(lam >= -tol, axis=1))
    if len(inside) == 0:
        raise ValueError(f"point {point} is outside the mesh")
    k = inside[0]
    return k, np.clip(lam[k], 0.0, 1.0) / np.clip(lam[k], 0.0, 1.0).sum()


@dataclass(frozen=True)
class CoupledLayout:
    """Block numbering of the monolithic unknown, one block per field."""

    fields: tuple
    spaces: dict
    offsets: dict
    total: int

    @property
    def mesh(self):
        return self.spaces[self.fields[0]].mesh

    def block(self, name):
        start = self.offsets[name]
        return slice(start, start + self.spaces[name].ndofs)

    def global_dofs(self, name, local):
        return self.offsets[name] + np.asarray(local)

    def split(self, vector):
        return {f: np.array(vector[self.block(f)]) for f in self.fields}

    def join(self, values):
        out = np.zeros(self.total)
        for f in self.fields:
            out[self.block(f)] = values[f]
        return out


def build_layout(mesh, orders=None, field_order=FIELDS):
    """Default is equal-order P1 for every field."""
    orders = {f: 1 for f in FIELDS} | dict(orders or {})
    if sorted(field_order) != sorted(FIELDS):
        raise ValueError(f"field order must be a permutation of {FIELDS}")
    cache = {}
    spaces = {}
    for f in FIELDS:
        o = orders[f]
        if o not in cache:
            cache[o] = ScalarSpace(mesh, o)
        spaces[f] = cache[o]
    offsets, pos = {}, 0
    for f in field_order:
        offsets[f] = pos
        pos += spaces[f].ndofs
    return CoupledLayout(tuple(field_order), spaces, offsets, pos)


@dataclass
class State:
    """Nodal coefficient vectors of (u1, u2, p, c) at time ``t``."""

    layout: CoupledLayout
    values: dict
    t: float

    def __post_init__(self):
        for f in FIELDS:
            v = np.asarray(self.values[f], dtype=float)
            if v.shape != (self.layout.spaces[f].ndofs,):
                raise ValueError(f"field {f}: expected {self.layout.spaces[f].ndofs} values, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"field {f} has non-finite entries")
            self.values[f] = v

    def __getitem__(self, name):
        return self.values[name]

    def vector(self):
        return self.layout.join(self.values)

    @classmethod
    def from_vector(cls, layout, vec, t):
        return cls(layout, layout.split(vec), float(t))

    @classmethod
    def zeros(cls, layout, t=0.0):
        return cls(layout, {f: np.zeros(layout.spaces[f].ndofs) for f in FIELDS}, float(t))

    def fields_at(self, bary):
        """Per-field (value, gradient, Hessian) at barycentric points of every element."""
        return {f: self.layout.spaces[f].function_at(self.values[f], bary) for f in FIELDS}

    def probe(self, point):
        k, lam = locate(self.layout.mesh, point)
        out = {}
        for f in FIELDS:
            space = self.layout.spaces[f]
            phi, _, _ = evaluate_basis(space, k, lam)
            out[f] = float(phi @ self.values[f][space.cell_dofs[k]])
        return out
