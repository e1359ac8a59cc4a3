"""Outside-set maintenance and boundary surface extraction.

The outside set ``O`` is grown from free-space cells one tetrahedron at a
time and shrunk the same way, each step allowed only if every vertex of
the toggled cell stays regular: the link edges of its surface triangles
form exactly one simple cycle, or the vertex is off the surface.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .carving import Carver
from .geometry import Point3
from .triangulation import FACET_OUT, INFINITE, Triangulation


class Action(enum.Enum):
    ADD = "add"
    REMOVE = "remove"


@dataclass
class SurfaceMesh:
    """Triangles between outside cells and the rest, oriented from O into I."""

    faces: List[Tuple[int, int, int]] = field(default_factory=list)
    positions: Dict[int, Point3] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.faces)

    def triangles(self) -> List[Tuple[Point3, Point3, Point3]]:
        P = self.positions
        return [(P[a], P[b], P[c]) for a, b, c in self.faces]

    def edges(self) -> Dict[Tuple[int, int], int]:
        counts: Dict[Tuple[int, int], int] = {}
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def euler_characteristic(self) -> int:
        verts = {x for f in self.faces for x in f}
        return len(verts) - len(self.edges()) + len(self.faces)

    def components(self) -> List["SurfaceMesh"]:
        """Split into edge-connected components."""
        parent: Dict[int, int] = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, c in self.faces:
            ra, rb, rc = find(a), find(b), find(c)
            parent[rb] = ra
            parent[find(rc)] = ra
        groups: Dict[int, SurfaceMesh] = {}
        for f in self.faces:
            g = groups.setdefault(find(f[0]), SurfaceMesh(positions=self.positions))
            g.faces.append(f)
        return list(groups.values())


def link_is_single_cycle(edges: List[Tuple[int, int]]) -> bool:
    """True if ``edges`` form one simple closed cycle (or are empty)."""
    if not edges:
        return True
    adj: Dict[int, List[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for nbrs in adj.values():
        if len(nbrs) != 2:
            return False
    start = edges[0][0]
    prev, cur = start, adj[start][0]
    steps = 1
    while cur != start:
        a, b = adj[cur]
        prev, cur = cur, (b if a == prev else a)
        steps += 1
        if steps > len(edges):
            return False
    return steps == len(edges)


# For vertex slot iv: each other slot k with the two remaining slots.
_LINK_PAIRS = tuple(
    tuple((k, tuple(j for j in range(4) if j not in (iv, k))) for k in range(4) if k != iv)
    for iv in range(4))


class Manifold:
    def __init__(self, tri: Triangulation, carver: Carver):
        self.tri = tri
        self.carver = carver
        self.outside: Set[int] = set()
        self.regularity_tests = 0
        self._stars: Optional[Dict[int, list]] = None

    # ------------------------------------------------------------- membership

    def contains(self, cid: int) -> bool:
        return cid in self.outside

    def _set(self, cid: int, flag: bool) -> None:
        self.tri.cells[cid].outside = flag
        if flag:
            self.outside.add(cid)
        else:
            self.outside.discard(cid)

    def discard_dead(self, cells: Iterable) -> None:
        """Forget cells that were destroyed by a retriangulation."""
        for c in cells:
            self.outside.discard(c.id)

    # ------------------------------------------------------------- regularity

    def _star(self, v: int):
        cache = self._stars
        if cache is None:
            return self.tri.incident_cells(v)
        star = cache.get(v)
        if star is None:
            star = cache[v] = self.tri.incident_cells(v)
        return star

    def vertex_link_edges(self, v: int, toggled: int = -1) -> List[Tuple[int, int]]:
        """Link edges of ``v`` on the surface of O with ``toggled`` flipped."""
        O = self.outside
        edges = []
        for x in self._star(v):
            if (x.id in O) == (x.id == toggled):
                continue
            xv = x.v
            xn = x.n
            iv = xv.index(v)
            for k, (i, j) in _LINK_PAIRS[iv]:
                nid = xn[k]
                if (nid in O) != (nid == toggled):
                    continue
                edges.append((xv[i], xv[j]))
        return edges

    def _vertex_regular(self, v: int, toggled: int) -> bool:
        # Same answer as link_is_single_cycle(vertex_link_edges(v, toggled)),
        # bailing out at the first vertex of degree three.
        O = self.outside
        adj: Dict[int, List[int]] = {}
        n_edges = 0
        for x in self._star(v):
            xid = x.id
            if (xid in O) == (xid == toggled):
                continue
            xv = x.v
            xn = x.n
            for k, (i, j) in _LINK_PAIRS[xv.index(v)]:
                nid = xn[k]
                if (nid in O) != (nid == toggled):
                    continue
                a = xv[i]
                b = xv[j]
                la = adj.get(a)
                if la is None:
                    adj[a] = [b]
                elif len(la) == 2:
                    return False
                else:
                    la.append(b)
                lb = adj.get(b)
                if lb is None:
                    adj[b] = [a]
                elif len(lb) == 2:
                    return False
                else:
                    lb.append(a)
                n_edges += 1
        if not n_edges:
            return True
        for nb in adj.values():
            if len(nb) != 2:
                return False
        start = next(iter(adj))
        prev, cur = start, adj[start][0]
        steps = 1
        while cur != start:
            a, b = adj[cur]
            prev, cur = cur, (b if a == prev else a)
            steps += 1
        return steps == n_edges

    def is_regular_after(self, cid: int, action: Action) -> bool:
        c = self.tri.cells[cid]
        if c.inf:
            return False
        if (action is Action.ADD) == (cid in self.outside):
            raise ValueError(f"cannot {action.value} cell {cid}")
        self.regularity_tests += 1
        for v in c.v:
            if not self._vertex_regular(v, cid):
                return False
        return True

    # ------------------------------------------------------------- growing

    def grow(self, seeds: Iterable[int]) -> int:
        """Greedy growing from ``seeds``, heaviest first. Returns cells added."""
        self._stars = {}
        try:
            return self._grow(seeds)
        finally:
            self._stars = None

    def _grow(self, seeds: Iterable[int]) -> int:
        cells = self.tri.cells
        O = self.outside
        free = self.carver.is_free_space
        heap = []
        for cid in seeds:
            c = cells.get(cid)
            if c is not None and not c.inf and cid not in O:
                heap.append((-c.weight, cid))
        heapq.heapify(heap)
        added = 0
        while heap:
            negw, cid = heapq.heappop(heap)
            c = cells.get(cid)
            if c is None or cid in O:
                continue
            if -negw != c.weight:
                heapq.heappush(heap, (-c.weight, cid))
                continue
            if not free(cid) or not self.is_regular_after(cid, Action.ADD):
                continue
            self._set(cid, True)
            added += 1
            for nid in c.n:
                if nid not in O:
                    n = cells[nid]
                    if not n.inf:
                        heapq.heappush(heap, (-n.weight, nid))
        return added

    def best_cell(self) -> Optional[int]:
        best = None
        best_w = None
        for c in self.tri.finite_cells():
            if c.id in self.outside:
                continue
            if best_w is None or c.weight > best_w or (c.weight == best_w and c.id < best):
                best, best_w = c.id, c.weight
        return best

    def grow_from_best(self) -> int:
        best = self.best_cell()
        return 0 if best is None else self.grow([best])

    def surface_vertices(self) -> Set[int]:
        cells = self.tri.cells
        O = self.outside
        verts: Set[int] = set()
        for cid in O:
            c = cells[cid]
            for i in range(4):
                if c.n[i] not in O:
                    verts.update(c.v[k] for k in range(4) if k != i)
        return verts

    def boundary_seeds(self) -> List[int]:
        """Non-outside finite cells sharing at least a vertex with the surface."""
        verts = self.surface_vertices()
        O = self.outside
        seeds: Dict[int, None] = {}
        for c in self.tri.finite_cells():
            if c.id in O:
                continue
            v = c.v
            if v[0] in verts or v[1] in verts or v[2] in verts or v[3] in verts:
                seeds[c.id] = None
        return sorted(seeds)

    def grow_incremental(self) -> int:
        if not self.outside:
            return self.grow_from_best()
        free = self.carver.is_free_space
        return self.grow([cid for cid in self.boundary_seeds() if free(cid)])

    # ------------------------------------------------------------- shrinking

    def shrink(self, candidates: Iterable[int]) -> Set[int]:
        """Remove cells of ``candidates`` from O, lightest first, while
        regularity allows. Iterates to a fixpoint; returns removed ids."""
        self._stars = {}
        try:
            return self._shrink(candidates)
        finally:
            self._stars = None

    def _shrink(self, candidates: Iterable[int]) -> Set[int]:
        cells = self.tri.cells
        pool = [cid for cid in dict.fromkeys(candidates) if cid in self.outside]
        removed: Set[int] = set()
        progress = True
        while progress and pool:
            progress = False
            pool.sort(key=lambda cid: (cells[cid].weight, cid))
            rest = []
            for cid in pool:
                if self.is_regular_after(cid, Action.REMOVE):
                    self._set(cid, False)
                    removed.add(cid)
                    progress = True
                else:
                    rest.append(cid)
            pool = rest
        return removed

    # ------------------------------------------------------------- extraction

    def extract_surface(self) -> SurfaceMesh:
        cells = self.tri.cells
        P = self.tri.points
        O = self.outside
        mesh = SurfaceMesh()
        for cid in sorted(O):
            c = cells[cid]
            for i in range(4):
                if c.n[i] in O:
                    continue
                f = tuple(c.v[k] for k in FACET_OUT[i])
                mesh.faces.append(f)
                for x in f:
                    mesh.positions[x] = P[x]
        return mesh
