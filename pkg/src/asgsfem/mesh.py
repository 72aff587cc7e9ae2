"""Structured triangulations of rectangles with boundary and interface tags."""
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np


class Subdomain(IntEnum):
    UNIFIED = 0
    STOKES = 1
    BRINKMAN = 2


BOUNDARY_TAGS = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh of an axis-aligned rectangle.

    ``boundary_tags[i]`` is the tag of ``boundary_edges[i]``. Triangles are
    counter-clockwise. ``interface_normal`` is the outward normal of the
    Stokes subdomain on the interface (the Brinkman one is its negative).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    subdomain_of: np.ndarray
    h: float
    nx: int
    ny: int
    rect: tuple
    interface_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    interface_normal: tuple = (0.0, 0.0)

    @property
    def nvertices(self):
        return len(self.vertices)

    @property
    def ntriangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self):
        p = self.vertices[self.triangles]
        lengths = [np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)]
        return np.max(lengths, axis=0)

    def edges(self):
        """Unique undirected edges (sorted vertex pairs) and the triangle->edge map.

        Local edge ``k`` of a triangle is opposite local vertex ``k``.
        """
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    def boundary_vertices(self, tag=None):
        mask = np.ones(len(self.boundary_edges), bool) if tag is None else self.boundary_tags == tag
        return np.unique(self.boundary_edges[mask])

    def triangles_on_edge(self, edge):
        """Indices of the triangles containing both vertices of ``edge``."""
        a, b = edge
        hit = np.any(self.triangles == a, axis=1) & np.any(self.triangles == b, axis=1)
        return np.flatnonzero(hit)


def build_structured_mesh(nx, ny, rect=((0.0, 0.0), (1.0, 1.0))):
    """Split an ``nx`` x ``ny`` grid of rectangles along the bottom-left to top-right diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"resolution must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    (x0, y0), (x1, y1) = rect
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j <-> y_j
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bedges, btags = [], []
    for k in range(ny):
        bedges.append((vid(0, k), vid(0, k + 1)))
        btags.append("left")
    for k in range(ny):
        bedges.append((vid(nx, k), vid(nx, k + 1)))
        btags.append("right")
    for k in range(nx):
        bedges.append((vid(k, 0), vid(k + 1, 0)))
        btags.append("bottom")
    for k in range(nx):
        bedges.append((vid(k, ny), vid(k + 1, ny)))
        btags.append("top")

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.array(bedges, dtype=np.int64),
        boundary_tags=np.array(btags),
        subdomain_of=np.full(len(triangles), Subdomain.UNIFIED, dtype=np.int64),
        h=0.0,
        nx=nx,
        ny=ny,
        rect=((float(x0), float(y0)), (float(x1), float(y1))),
    )
    return replace(mesh, h=float(mesh.diameters().max()))


def partition_interface(mesh, axis="x", value=0.5, tol=1e-12):
    """Label triangles left of (below) the line ``axis = value`` Stokes, the rest Brinkman.

    The line must coincide with a grid line so the interface is mesh-conforming.
    """
    k = {"x": 0, "y": 1}[axis]
    lo, hi = mesh.rect[0][k], mesh.rect[1][k]
    n = mesh.nx if k == 0 else mesh.ny
    s = (value - lo) / (hi - lo) * n
    if not (0 < value - lo and value < hi) or abs(s - round(s)) * (hi - lo) / n > tol:
        raise ValueError(f"split {axis}={value} is not an interior grid line of the mesh")

    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    labels = np.where(centroids[:, k] < value, Subdomain.STOKES, Subdomain.BRINKMAN).astype(np.int64)

    edges, _ = mesh.edges()
    coords = mesh.vertices[edges]
    on_line = np.all(np.abs(coords[:, :, k] - value) <= tol, axis=1)
    interface = edges[on_line]
    normal = (1.0, 0.0) if k == 0 else (0.0, 1.0)
    return replace(mesh, subdomain_of=labels, interface_edges=interface, interface_normal=normal)


def write_mesh(mesh, path):
    """Plain-text dump: vertex count, ``x y`` lines, triangle count, ``i j k`` lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.nvertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"{mesh.ntriangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


def read_mesh_arrays(path):
    with open(path) as fh:
        nv = int(fh.readline())
        verts = np.array([[float(v) for v in fh.readline().split()] for _ in range(nv)])
        nt = int(fh.readline())
        tris = np.array([[int(v) for v in fh.readline().split()] for _ in range(nt)], dtype=np.int64)
    return verts, tris
