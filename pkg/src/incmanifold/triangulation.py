"""Incremental 3D Delaunay triangulation with vertex removal.

The convex hull is closed with a single symbolic infinite vertex, so every
facet is shared by exactly two cells. Finite cells are stored positively
oriented (``orient3d`` of their four vertices is positive); an infinite
cell is oriented as if its infinite vertex were a point far outside the
hull facet it caps.

Ties between cospherical (and, on the hull, cocircular) vertex sets are
broken by a symbolic perturbation ordered by vertex id, so that a later
vertex is treated as lying outside the sphere of earlier ones. Under this
rule the triangulation of a point set is unique, which is what lets vertex
removal rebuild a hole from a fresh local triangulation of its boundary.

Every insertion and removal returns a :class:`RetriangulationEvent`
listing the destroyed cells (with their payloads) and the ids of the
created ones, whose payloads start empty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .geometry import (
    Point3,
    collinear,
    in_circle_coplanar,
    in_sphere,
    is_finite_point,
    off_plane_point,
    orient3d,
)

INFINITE = -1


class TriangulationError(Exception):
    pass


class DuplicatePoint(TriangulationError):
    pass


class UnknownVertex(TriangulationError, KeyError):
    pass


class TooFewVertices(TriangulationError):
    pass


class DegenerateRemoval(TriangulationError):
    """Removing the vertex would leave a flat hole on the hull."""


class VertexKind(enum.Enum):
    RECONSTRUCTION = "reconstruction"
    STEINER = "steiner"


class Cell:
    """A tetrahedron with its facet-adjacent neighbours and visibility payload.

    ``n[i]`` is the neighbour across the facet opposite ``v[i]``. ``rays``
    maps each recorded view ray to the weight delta it contributed and is
    only populated by the ray-list policy.
    """

    __slots__ = ("id", "v", "n", "inf", "weight", "rays", "outside")

    def __init__(self, cid: int, v: List[int]):
        self.id = cid
        self.v = v
        self.n = [-1, -1, -1, -1]
        self.inf = INFINITE in v
        self.weight = 0.0
        self.rays: Optional[dict] = None
        self.outside = False

    def __repr__(self) -> str:
        return f"Cell({self.id}, v={self.v})"


@dataclass
class RetriangulationEvent:
    """Cells destroyed and created by one insertion or removal.

    ``removed`` holds the detached cell objects, so their payloads can be
    read; ``removed_points`` has the vertex positions of each removed
    finite cell (``None`` for infinite ones) captured before the change.
    """

    removed: List[Cell] = field(default_factory=list)
    removed_points: List[Optional[Tuple[Point3, Point3, Point3, Point3]]] = field(
        default_factory=list)
    added: List[int] = field(default_factory=list)


# Outward-facing facet of a positively oriented cell, per opposite vertex.
FACET_OUT = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


def _facet_key(v: Sequence[int], i: int) -> Tuple[int, int, int]:
    return tuple(sorted(v[k] for k in range(4) if k != i))


def _same_orientation(a: Sequence[int], b: Sequence[int]) -> bool:
    """True if ``b`` is an even permutation of ``a``."""
    perm = [b.index(x) for x in a]
    inversions = 0
    for i in range(4):
        for j in range(i + 1, 4):
            if perm[i] > perm[j]:
                inversions += 1
    return inversions % 2 == 0


class Triangulation:
    def __init__(self) -> None:
        self.points: Dict[int, Point3] = {}
        self.kind: Dict[int, VertexKind] = {}
        self.cells: Dict[int, Cell] = {}
        self.relocated: Dict[int, int] = {}
        self._vcell: Dict[int, int] = {}
        self._pending: List[int] = []
        self._next_vid = 0
        self._next_cid = 0
        self._hint: Optional[int] = None
        self._rot = 0

    # ------------------------------------------------------------------ queries

    @property
    def dimension(self) -> int:
        return 3 if self.cells else -1

    def __len__(self) -> int:
        return len(self.points)

    def finite_cells(self) -> Iterator[Cell]:
        return (c for c in self.cells.values() if not c.inf)

    def cell_points(self, c: Cell) -> List[Point3]:
        p = self.points
        return [p[x] for x in c.v]

    def incident_cells(self, v: int) -> List[Cell]:
        """All cells (finite and infinite) having ``v`` as a vertex."""
        if v not in self.points:
            raise UnknownVertex(v)
        if not self.cells:
            return []
        cells = self.cells
        start = cells[self._vcell[v]]
        seen = {start.id}
        out = [start]
        stack = [start]
        while stack:
            c = stack.pop()
            i = c.v.index(v)
            for k in range(4):
                if k == i:
                    continue
                nid = c.n[k]
                if nid not in seen:
                    seen.add(nid)
                    nc = cells[nid]
                    out.append(nc)
                    stack.append(nc)
        return out

    def _any_finite_cell(self) -> Cell:
        if self._hint is not None:
            c = self.cells.get(self._hint)
            if c is not None:
                if not c.inf:
                    return c
                return self.cells[c.n[c.v.index(INFINITE)]]
        for c in self.cells.values():
            if not c.inf:
                return c
        raise TriangulationError("no finite cell")

    def locate(self, p: Point3, hint: Optional[int] = None) -> int:
        """Id of a cell whose closure contains ``p``, by visibility walk.

        Returns an infinite cell when ``p`` lies outside the convex hull.
        """
        cells = self.cells
        if not cells:
            raise TriangulationError("triangulation has no cells")
        c = cells.get(hint) if hint is not None else None
        if c is None:
            c = self._any_finite_cell()
        elif c.inf:
            c = cells[c.n[c.v.index(INFINITE)]]
        P = self.points
        prev = -1
        while True:
            v = c.v
            q = [P[v[0]], P[v[1]], P[v[2]], P[v[3]]]
            self._rot = r = (self._rot + 1) & 3
            for k in range(4):
                i = (r + k) & 3
                if c.n[i] == prev:
                    continue
                saved = q[i]
                q[i] = p
                o = orient3d(q[0], q[1], q[2], q[3])
                q[i] = saved
                if o < 0:
                    prev = c.id
                    c = cells[c.n[i]]
                    break
            else:
                return c.id
            if c.inf:
                return c.id

    # ------------------------------------------------------------ predicates

    def _sphere_side(self, v: Sequence[int], p: Point3, pid: int) -> int:
        """Perturbed in-sphere sign of ``p`` (id ``pid``) w.r.t. finite cell ``v``."""
        P = self.points
        pts = [P[v[0]], P[v[1]], P[v[2]], P[v[3]]]
        s = in_sphere(pts[0], pts[1], pts[2], pts[3], p)
        if s:
            return s
        order = sorted((v[0], v[1], v[2], v[3], pid))
        for k in (4, 3):
            top = order[k]
            if top == pid:
                return -1
            j = v.index(top)
            q = list(pts)
            q[j] = p
            o = orient3d(q[0], q[1], q[2], q[3])
            if o:
                return o
        return -1

    def _circle_side(self, f: Sequence[int], p: Point3, pid: int) -> int:
        """Perturbed in-circle sign of coplanar ``p`` w.r.t. hull facet ``f``."""
        P = self.points
        tri = [P[f[0]], P[f[1]], P[f[2]]]
        s = in_circle_coplanar(tri[0], tri[1], tri[2], p)
        if s:
            return s
        apex = off_plane_point(tri[0], tri[1], tri[2])
        local = orient3d(tri[0], tri[1], tri[2], apex)
        order = sorted((f[0], f[1], f[2], pid))
        for k in (3, 2, 1):
            top = order[k]
            if top == pid:
                return -1
            j = f.index(top)
            q = list(tri)
            q[j] = p
            o = orient3d(q[0], q[1], q[2], apex)
            if o:
                return o * local
        return -1

    def _in_conflict(self, c: Cell, p: Point3, pid: int) -> bool:
        v = c.v
        if not c.inf:
            return self._sphere_side(v, p, pid) > 0
        P = self.points
        i = v.index(INFINITE)
        q = [p if k == i else P[v[k]] for k in range(4)]
        o = orient3d(q[0], q[1], q[2], q[3])
        if o:
            return o > 0
        return self._circle_side([v[k] for k in range(4) if k != i], p, pid) > 0

    # -------------------------------------------------------------- mutation

    def _new_cell(self, v: List[int]) -> Cell:
        c = Cell(self._next_cid, v)
        self._next_cid += 1
        self.cells[c.id] = c
        return c

    def _link_new(self, new: Sequence[Cell], skip: Optional[Dict[int, int]] = None) -> None:
        """Pair up facets shared by cells in ``new``; ``skip[cid]`` names a
        facet index of that cell already linked outside the set."""
        open_facets: Dict[Tuple[int, int, int], Tuple[Cell, int]] = {}
        for c in new:
            s = skip.get(c.id, -1) if skip else -1
            for k in range(4):
                if k == s:
                    continue
                key = _facet_key(c.v, k)
                other = open_facets.pop(key, None)
                if other is None:
                    open_facets[key] = (c, k)
                else:
                    oc, ok = other
                    c.n[k] = oc.id
                    oc.n[ok] = c.id
        if open_facets:
            raise TriangulationError("unpaired facets while linking new cells")

    def _register(self, new: Sequence[Cell]) -> None:
        vc = self._vcell
        for c in new:
            for x in c.v:
                if x != INFINITE:
                    vc[x] = c.id
        if new:
            self._hint = new[-1].id

    def _find_duplicate(self, cid: int, p: Point3, ignore: int = INFINITE) -> Optional[int]:
        P = self.points
        for x in self.cells[cid].v:
            if x != INFINITE and x != ignore and P[x] == p:
                return x
        return None

    def conflict_region(self, p: Point3, hint: Optional[int] = None) -> List[int]:
        """Ids of cells in conflict with a prospective vertex at ``p``.

        Infinite cells in the result mean ``p`` extends the hull.
        """
        p = _as_point(p)
        c0 = self.locate(p, hint)
        if self._find_duplicate(c0, p) is not None:
            raise DuplicatePoint(p)
        conflict, _ = self._conflict_cells(p, self._next_vid, self.cells[c0])
        return [c.id for c in conflict]

    def _conflict_cells(self, p: Point3, pid: int, c0: Cell):
        cells = self.cells
        found = [c0]
        inside = {c0.id}
        outside = set()
        boundary: List[Tuple[Cell, int]] = []
        stack = [c0]
        while stack:
            c = stack.pop()
            for i in range(4):
                nid = c.n[i]
                if nid in inside:
                    continue
                if nid in outside:
                    boundary.append((c, i))
                    continue
                n = cells[nid]
                if self._in_conflict(n, p, pid):
                    inside.add(nid)
                    found.append(n)
                    stack.append(n)
                else:
                    outside.add(nid)
                    boundary.append((c, i))
        return found, boundary

    def insert(self, p: Point3, kind: VertexKind = VertexKind.RECONSTRUCTION,
               hint: Optional[int] = None) -> Tuple[int, RetriangulationEvent]:
        p = _as_point(p)
        if not self.cells:
            return self._insert_low_dim(p, kind)
        c0 = self.cells[self.locate(p, hint)]
        if self._find_duplicate(c0.id, p) is not None:
            raise DuplicatePoint(p)
        vid = self._add_vertex(p, kind)
        return vid, self._insert_at(vid, p, c0)

    def _add_vertex(self, p: Point3, kind: VertexKind, vid: Optional[int] = None) -> int:
        if vid is None:
            vid = self._next_vid
        self._next_vid = max(self._next_vid, vid + 1)
        self.points[vid] = p
        self.kind[vid] = kind
        return vid

    def _insert_at(self, vid: int, p: Point3, c0: Cell) -> RetriangulationEvent:
        conflict, boundary = self._conflict_cells(p, vid, c0)
        if not self._in_conflict(c0, p, vid):
            raise TriangulationError("located cell not in conflict")
        cells = self.cells
        new: List[Cell] = []
        skip: Dict[int, int] = {}
        for c, i in boundary:
            v = list(c.v)
            v[i] = vid
            nc = self._new_cell(v)
            n = cells[c.n[i]]
            nc.n[i] = n.id
            n.n[n.n.index(c.id)] = nc.id
            skip[nc.id] = i
            new.append(nc)
        self._link_new(new, skip)
        P = self.points
        ev = RetriangulationEvent()
        for c in conflict:
            del cells[c.id]
            ev.removed.append(c)
            ev.removed_points.append(None if c.inf else tuple(P[x] for x in c.v))
        ev.added = [c.id for c in new]
        self._register(new)
        return ev

    def _insert_low_dim(self, p: Point3, kind: VertexKind) -> Tuple[int, RetriangulationEvent]:
        P = self.points
        for x in self._pending:
            if P[x] == p:
                raise DuplicatePoint(p)
        vid = self._add_vertex(p, kind)
        self._pending.append(vid)
        simplex = self._find_simplex(self._pending)
        ev = RetriangulationEvent()
        if simplex is None:
            return vid, ev
        rest = [x for x in self._pending if x not in simplex]
        self._pending = []
        self._build_simplex(*simplex)
        for x in sorted(rest):
            c0 = self.cells[self.locate(P[x])]
            self._insert_at(x, P[x], c0)
        ev.added = list(self.cells)
        return vid, ev

    def _find_simplex(self, ids: Sequence[int]):
        if len(ids) < 4:
            return None
        P = self.points
        a, b = ids[0], ids[1]
        c = next((x for x in ids[2:] if not collinear(P[a], P[b], P[x])), None)
        if c is None:
            return None
        d = next((x for x in ids[2:] if x != c and orient3d(P[a], P[b], P[c], P[x]) != 0), None)
        if d is None:
            return None
        return a, b, c, d

    def _build_simplex(self, a: int, b: int, c: int, d: int) -> None:
        P = self.points
        if orient3d(P[a], P[b], P[c], P[d]) < 0:
            c, d = d, c
        t = self._new_cell([a, b, c, d])
        caps = []
        for i in range(4):
            v = list(t.v)
            v[i] = INFINITE
            j, k = [x for x in range(4) if x != i][:2]
            v[j], v[k] = v[k], v[j]
            cap = self._new_cell(v)
            t.n[i] = cap.id
            cap.n[i] = t.id
            caps.append(cap)
        self._link_new(caps, {cap.id: i for i, cap in enumerate(caps)})
        self._register([t] + caps)

    def remove(self, v: int) -> RetriangulationEvent:
        if v not in self.points:
            raise UnknownVertex(v)
        if not self.cells:
            self._pending.remove(v)
            self._drop_vertex(v)
            return RetriangulationEvent()
        if len(self.points) < 5:
            raise TooFewVertices(len(self.points))
        cells = self.cells
        P = self.points
        star = self.incident_cells(v)
        boundary: Dict[Tuple[int, int, int], Tuple[Cell, int, Cell, int]] = {}
        link = set()
        for c in star:
            i = c.v.index(v)
            n = cells[c.n[i]]
            boundary[_facet_key(c.v, i)] = (c, i, n, n.n.index(c.id))
            link.update(c.v)
        link.discard(v)
        link.discard(INFINITE)

        local = Triangulation()
        for x in sorted(link):
            local._insert_existing(x, P[x])
        if not local.cells:
            # coplanar finite link: v is a hull vertex and the hole closes up
            # with infinite cells capping the link triangles
            return self._remove_flat_link(v, star)

        by_facet: Dict[Tuple[int, int, int], List[Tuple[Cell, int]]] = {}
        for lc in local.cells.values():
            for k in range(4):
                by_facet.setdefault(_facet_key(lc.v, k), []).append((lc, k))

        hole: Dict[int, Cell] = {}
        stack = []
        for key, (c, i, _, _) in boundary.items():
            chosen = None
            for lc, k in by_facet.get(key, ()):
                target = list(c.v)
                target[i] = lc.v[k]
                if _same_orientation(target, lc.v):
                    chosen = lc
                    break
            if chosen is None:
                raise TriangulationError(f"hole facet {key} missing from local triangulation")
            if chosen.id not in hole:
                hole[chosen.id] = chosen
                stack.append(chosen)
        while stack:
            lc = stack.pop()
            for k in range(4):
                if _facet_key(lc.v, k) in boundary:
                    continue
                nb = lc.n[k]
                if nb not in hole:
                    ln = local.cells[nb]
                    hole[nb] = ln
                    stack.append(ln)

        mapping: Dict[int, Cell] = {}
        new: List[Cell] = []
        for lid, lc in hole.items():
            nc = self._new_cell(list(lc.v))
            mapping[lid] = nc
            new.append(nc)
        for lid, lc in hole.items():
            nc = mapping[lid]
            for k in range(4):
                key = _facet_key(lc.v, k)
                b = boundary.get(key)
                if b is not None:
                    _, _, n, j = b
                    nc.n[k] = n.id
                    n.n[j] = nc.id
                else:
                    nc.n[k] = mapping[lc.n[k]].id

        ev = RetriangulationEvent()
        for c in star:
            del cells[c.id]
            ev.removed.append(c)
            ev.removed_points.append(None if c.inf else tuple(P[x] for x in c.v))
        ev.added = [c.id for c in new]
        self._drop_vertex(v)
        self._register(new)
        return ev

    def _remove_flat_link(self, v: int, star: List[Cell]) -> RetriangulationEvent:
        cells = self.cells
        P = self.points
        ev = RetriangulationEvent()
        finite = [c for c in star if not c.inf]
        if len(finite) == sum(1 for c in cells.values() if not c.inf):
            # every remaining point lies in one plane: fall back to the
            # pending state, which rebuilds once a simplex reappears
            rest = sorted(x for x in P if x != v)
            for c in list(cells.values()):
                ev.removed.append(c)
                ev.removed_points.append(None if c.inf else tuple(P[x] for x in c.v))
            cells.clear()
            self._vcell.clear()
            self._hint = None
            self._drop_vertex(v)
            self._pending = rest
            return ev
        if not finite or not any(c.inf for c in star):
            raise DegenerateRemoval(v)
        star_ids = {c.id for c in star}
        mapping: Dict[int, Cell] = {}
        for c in finite:
            verts = list(c.v)
            verts[verts.index(v)] = INFINITE  # INFINITE takes v's side of the link
            mapping[c.id] = self._new_cell(verts)
        for c in finite:
            nc = mapping[c.id]
            i = c.v.index(v)
            for k in range(4):
                nid = c.n[k]
                if k == i:
                    n = cells[nid]
                    nc.n[k] = n.id
                    n.n[n.n.index(c.id)] = nc.id
                elif nid in mapping:
                    nc.n[k] = mapping[nid].id
                else:
                    s = cells[nid]
                    if nid not in star_ids or not s.inf:
                        raise DegenerateRemoval(v)
                    out = cells[s.n[s.v.index(v)]]
                    nc.n[k] = out.id
                    out.n[out.n.index(s.id)] = nc.id
        new = list(mapping.values())
        for c in star:
            del cells[c.id]
            ev.removed.append(c)
            ev.removed_points.append(None if c.inf else tuple(P[x] for x in c.v))
        ev.added = [c.id for c in new]
        self._drop_vertex(v)
        self._register(new)
        return ev

    def _insert_existing(self, vid: int, p: Point3) -> None:
        """Insert ``p`` under a caller-chosen id (used for local rebuilds)."""
        if not self.cells:
            self._add_vertex(p, VertexKind.RECONSTRUCTION, vid)
            self._pending.append(vid)
            simplex = self._find_simplex(self._pending)
            if simplex is not None:
                rest = [x for x in self._pending if x not in simplex]
                self._pending = []
                self._build_simplex(*simplex)
                for x in sorted(rest):
                    self._insert_at(x, self.points[x], self.cells[self.locate(self.points[x])])
            return
        c0 = self.cells[self.locate(p)]
        self._add_vertex(p, VertexKind.RECONSTRUCTION, vid)
        self._insert_at(vid, p, c0)

    def _drop_vertex(self, v: int) -> None:
        del self.points[v]
        del self.kind[v]
        self._vcell.pop(v, None)

    def move(self, v: int, p_new: Point3,
             on_event: Optional[Callable[[RetriangulationEvent], None]] = None,
             ) -> Tuple[int, RetriangulationEvent, RetriangulationEvent]:
        """Relocate ``v`` by removal followed by re-insertion.

        Returns the fresh vertex id and both events in order. ``on_event``
        runs after each of the two steps, before the next one starts, so
        payloads of cells created by the removal can be filled in time to
        be read back if the insertion destroys them again.
        """
        if v not in self.points:
            raise UnknownVertex(v)
        p_new = _as_point(p_new)
        if self.cells:
            cid = self.locate(p_new, self._vcell.get(v))
            if self._find_duplicate(cid, p_new, ignore=v) is not None:
                raise DuplicatePoint(p_new)
        kind = self.kind[v]
        hint = None
        ev_remove = self.remove(v)
        if on_event is not None:
            on_event(ev_remove)
        if ev_remove.added:
            hint = ev_remove.added[0]
        new_v, ev_insert = self.insert(p_new, kind, hint)
        if on_event is not None:
            on_event(ev_insert)
        self.relocated[v] = new_v
        return new_v, ev_remove, ev_insert

    def vertices_of_kind(self, kind: VertexKind) -> List[int]:
        return [v for v, k in self.kind.items() if k is kind]

    @classmethod
    def from_points(cls, points: Iterable[Point3],
                    kind: VertexKind = VertexKind.RECONSTRUCTION) -> "Triangulation":
        t = cls()
        for p in points:
            t.insert(p, kind)
        return t

    @classmethod
    def rebuild(cls, other: "Triangulation") -> "Triangulation":
        """Fresh triangulation of ``other``'s vertices keeping their ids."""
        t = cls()
        for v in sorted(other.points):
            t._insert_existing(v, other.points[v])
            t.kind[v] = other.kind[v]
        t._next_vid = other._next_vid
        return t


def _as_point(p) -> Point3:
    p = (float(p[0]), float(p[1]), float(p[2])) if len(p) == 3 else None
    if p is None or not is_finite_point(p):
        raise ValueError("points must have three finite coordinates")
    return p
