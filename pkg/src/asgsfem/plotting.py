"""Figures for convergence studies and single runs.

Uses the object-oriented ``Figure`` API so no interactive backend or global
pyplot state is touched.
"""
import numpy as np
from matplotlib.figure import Figure
from matplotlib.tri import Triangulation

_STYLE = {"marker": "o", "linewidth": 1.2, "markersize": 4}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def _triangulation(mesh):
    return Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)


def plot_convergence(rows, path, label="error"):
    """Error against number of unknowns on log-log axes, with an O(h^2) guide."""
    dofs = np.array([r["dofs"] for r in rows], dtype=float)
    err = np.array([r["error"] for r in rows], dtype=float)
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.loglog(dofs, err, label=label, **_STYLE)
    if len(rows) > 1:
        # h^2 ~ 1/dofs in two dimensions
        ax.loglog(dofs, err[0] * dofs[0] / dofs, "k--", linewidth=0.8, label="slope of h$^2$")
    ax.set_xlabel("unknowns")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_eoc(rows, path):
    grids = [r["grid"] for r in rows if r.get("eoc") is not None]
    eocs = [r["eoc"] for r in rows if r.get("eoc") is not None]
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.plot(grids, eocs, **_STYLE)
    ax.axhline(2.0, color="k", linestyle="--", linewidth=0.8)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid n (n x n)")
    ax.set_ylabel("observed order")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_probe(trace, path, fields=("u1", "u2", "p", "c")):
    """Time history of the fields at the probe point; ``trace`` is a list of ``(t, values)``."""
    t = np.array([row[0] for row in trace])
    fig = Figure(figsize=(6, 4))
    axes = fig.subplots(2, 2, sharex=True)
    for ax, f in zip(axes.ravel(), fields):
        ax.plot(t, [row[1][f] for row in trace], linewidth=1.2)
        ax.set_title(f)
        ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("t")
    return _save(fig, path)


def plot_fields(mesh, nodal, path):
    """Concentration colour map with velocity arrows, from vertex values."""
    tri = _triangulation(mesh)
    fig = Figure(figsize=(9, 4))
    ax_c, ax_p = fig.subplots(1, 2)
    im = ax_c.tripcolor(tri, nodal["c"], shading="gouraud", cmap="viridis")
    step = max(1, mesh.nvertices // 400)
    v = mesh.vertices[::step]
    ax_c.quiver(v[:, 0], v[:, 1], nodal["u1"][::step], nodal["u2"][::step], color="w")
    ax_c.set_title("concentration and velocity")
    fig.colorbar(im, ax=ax_c)
    im = ax_p.tripcolor(tri, nodal["p"], shading="gouraud", cmap="coolwarm")
    ax_p.set_title("pressure")
    fig.colorbar(im, ax=ax_p)
    for ax in (ax_c, ax_p):
        ax.set_aspect("equal")
    return _save(fig, path)


def plot_mesh(mesh, path):
    tri = _triangulation(mesh)
    fig = Figure(figsize=(4.5, 4.5))
    ax = fig.add_subplot()
    ax.triplot(tri, color="0.5", linewidth=0.4)
    if len(np.unique(mesh.subdomain_of)) > 1:
        ax.tripcolor(tri, facecolors=mesh.subdomain_of.astype(float), cmap="Pastel1", alpha=0.6)
    for a, b in mesh.interface_edges:
        ax.plot(*mesh.vertices[[a, b]].T, color="r", linewidth=1.5)
    ax.set_aspect("equal")
    return _save(fig, path)


def plot_indicators(mesh, indicators, path):
    tri = _triangulation(mesh)
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    im = ax.tripcolor(tri, facecolors=np.sqrt(np.maximum(indicators, 0.0)), cmap="magma")
    fig.colorbar(im, ax=ax, label="element indicator")
    ax.set_aspect("equal")
    return _save(fig, path)
