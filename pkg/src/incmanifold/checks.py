"""Brute-force invariant checks used by the tests and ``check`` command.

Every function returns a list of human-readable violations; an empty list
means the invariant holds. The Delaunay check screens all vertex/cell
pairs with numpy and settles every near-boundary pair with the exact
predicate.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .geometry import Box, in_sphere, orient3d
from .manifold import SurfaceMesh, link_is_single_cycle
from .triangulation import FACET_OUT, INFINITE, Triangulation, VertexKind


def delaunay_violations(tri: Triangulation, chunk: int = 512) -> List[str]:
    """Finite cells whose open circumsphere contains a vertex, and hull
    facets with a vertex strictly beyond them."""
    P = tri.points
    vids = np.array(sorted(P), dtype=np.int64)
    if len(vids) == 0:
        return []
    X = np.array([P[v] for v in vids], dtype=float)
    finite = [c for c in tri.cells.values() if not c.inf]
    out: List[str] = []
    for s in range(0, len(finite), chunk):
        block = finite[s:s + chunk]
        T = np.array([[P[x] for x in c.v] for c in block], dtype=float)
        a = T[:, 0]
        A = T[:, 1:] - a[:, None, :]
        rhs = 0.5 * np.einsum("nij,nij->ni", A, A)
        with np.errstate(all="ignore"):
            try:
                u = np.linalg.solve(A, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                u = np.full_like(a, np.nan)
        r2 = np.einsum("ni,ni->n", u, u)
        centre = a + u
        d2 = ((X[None, :, :] - centre[:, None, :]) ** 2).sum(-1)
        tol = 1e-6 * (r2[:, None] + 1.0)
        suspect = ~(d2 > r2[:, None] + tol)
        for i, j in zip(*np.nonzero(suspect)):
            c = block[i]
            v = int(vids[j])
            if v in c.v:
                continue
            pa, pb, pc, pd = (P[x] for x in c.v)
            if in_sphere(pa, pb, pc, pd, P[v]) > 0:
                out.append(f"vertex {v} inside circumsphere of cell {c.id}")
    for c in tri.cells.values():
        if not c.inf:
            continue
        i = c.v.index(INFINITE)
        f = [c.v[k] for k in FACET_OUT[i]]
        fa, fb, fc = (P[x] for x in f)
        # The finite neighbour lies on the inner side; nothing may lie beyond.
        for v in P:
            if v not in f and orient3d(fa, fb, fc, P[v]) < 0:
                out.append(f"vertex {v} beyond hull facet of cell {c.id}")
                break
    return out


def structure_violations(tri: Triangulation) -> List[str]:
    out: List[str] = []
    cells = tri.cells
    P = tri.points
    for c in cells.values():
        if len(set(c.v)) != 4:
            out.append(f"cell {c.id} repeats a vertex")
        for i, nid in enumerate(c.n):
            n = cells.get(nid)
            if n is None:
                out.append(f"cell {c.id} has dangling neighbour {nid}")
                continue
            if c.id not in n.n:
                out.append(f"cells {c.id} and {nid} disagree on adjacency")
                continue
            mine = {c.v[k] for k in range(4) if k != i}
            j = n.n.index(c.id)
            theirs = {n.v[k] for k in range(4) if k != j}
            if mine != theirs:
                out.append(f"cells {c.id} and {nid} do not share a facet")
        if not c.inf:
            if orient3d(*(P[x] for x in c.v)) <= 0:
                out.append(f"cell {c.id} is not positively oriented")
    used = {x for c in cells.values() for x in c.v if x != INFINITE}
    for v in P:
        if cells and v not in used:
            out.append(f"vertex {v} belongs to no cell")
    return out


def surface_violations(mesh: SurfaceMesh, closed_chi: int = 2) -> List[str]:
    """Edge-manifold, vertex-regular, consistently oriented, and each
    component of the expected Euler characteristic."""
    out: List[str] = []
    for (a, b), k in mesh.edges().items():
        if k != 2:
            out.append(f"edge ({a},{b}) on {k} triangles")
    directed: Dict[Tuple[int, int], int] = {}
    links: Dict[int, List[Tuple[int, int]]] = {}
    for f in mesh.faces:
        for a, b, c in ((f[0], f[1], f[2]), (f[1], f[2], f[0]), (f[2], f[0], f[1])):
            directed[(a, b)] = directed.get((a, b), 0) + 1
            links.setdefault(a, []).append((b, c))
    for e, k in directed.items():
        if k > 1:
            out.append(f"directed edge {e} used {k} times (inconsistent orientation)")
    for v, edges in links.items():
        if not link_is_single_cycle(edges):
            out.append(f"vertex {v} link is not a single cycle")
    for comp in mesh.components():
        chi = comp.euler_characteristic()
        if chi != closed_chi:
            out.append(f"component with {len(comp)} triangles has Euler characteristic {chi}")
    return out


def box_violations(tri: Triangulation, box: Box) -> List[str]:
    return [f"vertex {v} at {tri.points[v]} outside the scene box"
            for v in tri.vertices_of_kind(VertexKind.RECONSTRUCTION)
            if not box.contains(tri.points[v])]


def outside_violations(engine) -> List[str]:
    out: List[str] = []
    cells = engine.tri.cells
    for cid in engine.manifold.outside:
        c = cells.get(cid)
        if c is None:
            out.append(f"outside set holds dead cell {cid}")
        elif c.inf:
            out.append(f"outside set holds infinite cell {cid}")
    return out


def engine_violations(engine, delaunay: bool = True) -> List[str]:
    """The full per-keyframe suite for an :class:`~incmanifold.pipeline.Engine`."""
    out = structure_violations(engine.tri)
    if delaunay:
        out += delaunay_violations(engine.tri)
    out += outside_violations(engine)
    out += surface_violations(engine.surface())
    out += box_violations(engine.tri, engine.box)
    return out


def brute_force_delaunay_violations(points: Dict[int, Sequence[float]],
                                    cells: List[Sequence[int]]) -> int:
    """Exact all-pairs count, for small inputs only."""
    bad = 0
    for v in cells:
        if INFINITE in v:
            continue
        pa, pb, pc, pd = (points[x] for x in v)
        for u, p in points.items():
            if u not in v and in_sphere(pa, pb, pc, pd, p) > 0:
                bad += 1
    return bad
