"""Visibility carving: ray traversal and per-cell weight accumulation.

A cast walks the camera-to-point segment through the triangulation and
adds ``w_hit`` to the cells it crosses, ``w_near`` to their facet
neighbours and ``w_far`` to the next ring. A cell touched by several rings
of the same ray only receives the largest delta, which makes a negative
cast the exact inverse of a positive one on an unchanged triangulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Tuple

from .geometry import Point3, orient3d
from .triangulation import FACET_OUT, Cell, Triangulation


class OutsideHull(Exception):
    pass


@dataclass(frozen=True)
class WeightScheme:
    w_hit: float = 1.0
    w_near: float = 0.8
    w_far: float = 0.2
    t_w: float = 1.0

    def __post_init__(self) -> None:
        if not (self.w_hit > self.w_near > self.w_far > 0.0):
            raise ValueError("weights must satisfy w_hit > w_near > w_far > 0")
        if not self.t_w > 0.0:
            raise ValueError("free-space threshold must be positive")


class ViewRay(NamedTuple):
    camera_id: int
    point_id: int
    keyframe_index: int


def _edge_sign(s0, s1, a, b, ia, ib) -> int:
    o = orient3d(s0, s1, a, b)
    if o:
        return o
    return 1 if ia < ib else -1


def _exit_facet(P, c: Cell, cands: List[int], s0: Point3, s1: Point3) -> int:
    v = c.v
    hits = []
    for i in cands:
        a, b, d = (v[k] for k in FACET_OUT[i])
        pa, pb, pd = P[a], P[b], P[d]
        e0 = _edge_sign(s0, s1, pa, pb, a, b)
        if e0 == _edge_sign(s0, s1, pb, pd, b, d) == _edge_sign(s0, s1, pd, pa, d, a):
            hits.append(i)
    if len(hits) == 1:
        return hits[0]
    # Through-vertex degeneracy: leave through the first plane crossed.
    best, best_t = cands[0], float("inf")
    dx, dy, dz = s1[0] - s0[0], s1[1] - s0[1], s1[2] - s0[2]
    for i in cands:
        pa, pb, pd = (P[v[k]] for k in FACET_OUT[i])
        ux, uy, uz = pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]
        wx, wy, wz = pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2]
        nx, ny, nz = uy * wz - uz * wy, uz * wx - ux * wz, ux * wy - uy * wx
        den = nx * dx + ny * dy + nz * dz
        if den == 0.0:
            continue
        t = (nx * (pa[0] - s0[0]) + ny * (pa[1] - s0[1]) + nz * (pa[2] - s0[2])) / den
        if t < best_t:
            best, best_t = i, t
    return best


def _general_exit(P, c: Cell, prev: int, s0: Point3, s1: Point3) -> Optional[int]:
    """Exit facet of ``c`` for the segment, or None if it ends inside ``c``."""
    v = c.v
    q = [P[v[0]], P[v[1]], P[v[2]], P[v[3]]]
    cands = []
    for i in range(4):
        if c.n[i] == prev:
            continue
        saved = q[i]
        q[i] = s1
        if orient3d(q[0], q[1], q[2], q[3]) < 0:
            cands.append(i)
        q[i] = saved
    if not cands:
        return None
    return cands[0] if len(cands) == 1 else _exit_facet(P, c, cands, s0, s1)


def _is_inside_closed(P, c: Cell, p: Point3) -> Tuple[bool, List[int]]:
    """Whether ``p`` is in the closure of finite cell ``c``, and the facets it lies on."""
    v = c.v
    on = []
    for i in range(4):
        a, b, d = (P[v[k]] for k in FACET_OUT[i])
        o = orient3d(a, b, d, p)
        if o > 0:
            return False, []
        if o == 0:
            on.append(i)
    return True, on


def start_cell(tri: Triangulation, p: Point3, hint: Optional[int] = None) -> Cell:
    """The lowest-id finite cell whose closure contains ``p``.

    Independent of the walk that found it, so repeated traces of one
    segment agree even when ``p`` sits on a facet, edge or vertex.
    """
    cells = tri.cells
    P = tri.points
    c = cells[tri.locate(p, hint)]
    if c.inf:
        raise OutsideHull(p)
    inside, on = _is_inside_closed(P, c, p)
    if inside and not on:
        return c
    best = c
    seen = {c.id}
    stack = [c]
    while stack:
        x = stack.pop()
        ok, faces = _is_inside_closed(P, x, p)
        if not ok:
            continue
        if x.id < best.id:
            best = x
        for i in faces:
            nid = x.n[i]
            if nid not in seen:
                seen.add(nid)
                n = cells[nid]
                if not n.inf:
                    stack.append(n)
    return best


def trace_ray(tri: Triangulation, camera: Point3, target: Point3,
              hint: Optional[int] = None) -> List[int]:
    """Finite cells crossed by the segment ``camera -> target``, in order.

    The walk starts at the cell containing the camera and stops at the
    cell whose closure contains the target; it is clipped at the hull.
    """
    cells = tri.cells
    P = tri.points
    s0, s1 = camera, target
    c = start_cell(tri, camera, hint)
    path = [c.id]
    prev = -1
    # Entry facet (x, y, z) of the current cell, labelled so that the line
    # turns the same way ``sigma`` around each of its edges.
    entry: Optional[Tuple[int, int, int, int]] = None
    for _ in range(4 * len(cells) + 8):
        v = c.v
        i = None
        if entry is not None:
            x, y, z, sigma = entry
            e = c.n.index(prev)
            d = v[e]
            pd = P[d]
            tx = _edge_sign(s0, s1, pd, P[x], d, x)
            ty = _edge_sign(s0, s1, pd, P[y], d, y)
            tz = _edge_sign(s0, s1, pd, P[z], d, z)
            if ty == sigma and tz != sigma:
                i, entry = v.index(x), (d, y, z, sigma)
            elif tz == sigma and tx != sigma:
                i, entry = v.index(y), (d, z, x, sigma)
            elif tx == sigma and ty != sigma:
                i, entry = v.index(z), (d, x, y, sigma)
        if i is not None:
            a, b, f = (P[v[k]] for k in FACET_OUT[i])
            if orient3d(a, b, f, s1) <= 0:
                if _is_inside_closed(P, c, s1)[0]:
                    return path
                # degenerate turn (segment along a facet plane): decide afresh
                i = None
        if i is None:
            i = _general_exit(P, c, prev, s0, s1)
            if i is None:
                return path
            x, y, z = (v[k] for k in FACET_OUT[i])
            entry = (x, y, z, _edge_sign(s0, s1, P[x], P[y], x, y))
        n = cells[c.n[i]]
        if n.inf:
            return path
        prev = c.id
        c = n
        path.append(c.id)
    raise RuntimeError("ray walk did not terminate")


class RayStore:
    """Per-cell ray lists for the ray-list (baseline) policy.

    Each cell's ``rays`` dict maps a ray to the delta it contributed, in
    arrival order. Reverse indices give the cells holding a ray and the
    rays ending at a point, so rays can be withdrawn without scanning the
    whole triangulation.
    """

    def __init__(self, tri: Triangulation, k_forget: Optional[int] = None):
        if k_forget is not None and k_forget < 1:
            raise ValueError("k_forget must be positive or None")
        self.tri = tri
        self.k_forget = k_forget
        self.cells_of: Dict[ViewRay, Dict[int, None]] = {}
        self.rays_of_point: Dict[int, Dict[ViewRay, None]] = {}

    def record(self, cell: Cell, ray: ViewRay, delta: float) -> None:
        rays = cell.rays
        if rays is None:
            rays = cell.rays = {}
        rays[ray] = delta
        self.cells_of.setdefault(ray, {})[cell.id] = None
        self.rays_of_point.setdefault(ray.point_id, {})[ray] = None
        if self.k_forget is not None and len(rays) > self.k_forget:
            oldest = next(iter(rays))
            del rays[oldest]
            self._detach(oldest, cell.id)

    def _detach(self, ray: ViewRay, cid: int) -> None:
        holders = self.cells_of.get(ray)
        if holders is None:
            return
        holders.pop(cid, None)
        if not holders:
            del self.cells_of[ray]
            pr = self.rays_of_point.get(ray.point_id)
            if pr is not None:
                pr.pop(ray, None)
                if not pr:
                    del self.rays_of_point[ray.point_id]

    def withdraw(self, ray: ViewRay) -> int:
        """Remove ``ray`` from every list holding it, subtracting its deltas.

        Returns the number of cells touched.
        """
        holders = self.cells_of.pop(ray, None)
        if not holders:
            return 0
        cells = self.tri.cells
        touched = 0
        for cid in holders:
            c = cells.get(cid)
            if c is None or c.rays is None:
                continue
            d = c.rays.pop(ray, None)
            if d is not None:
                c.weight -= d
                touched += 1
        pr = self.rays_of_point.get(ray.point_id)
        if pr is not None:
            pr.pop(ray, None)
            if not pr:
                del self.rays_of_point[ray.point_id]
        return touched

    def rays_in(self, cells: Iterable[Cell]) -> List[ViewRay]:
        out: Dict[ViewRay, None] = {}
        for c in cells:
            if c.rays:
                for r in c.rays:
                    out[r] = None
        return list(out)

    def forget_cells(self, cells: Iterable[Cell]) -> None:
        """Drop index entries of cells that left the triangulation."""
        for c in cells:
            if c.rays:
                for r in list(c.rays):
                    self._detach(r, c.id)

    def rays_ending_at(self, point_id: int) -> List[ViewRay]:
        return list(self.rays_of_point.get(point_id, ()))

    def all_rays(self) -> List[ViewRay]:
        return list(self.cells_of)


class Carver:
    """Casts view rays into a triangulation's cell weights.

    ``resolve`` maps a ray to its ``(camera position, point position)``;
    with a :class:`RayStore` attached every positive cast is also recorded
    in the touched cells' ray lists.
    """

    def __init__(self, tri: Triangulation, scheme: WeightScheme = WeightScheme(),
                 resolve: Optional[Callable[[ViewRay], Tuple[Point3, Point3]]] = None,
                 store: Optional[RayStore] = None):
        self.tri = tri
        self.scheme = scheme
        self.resolve = resolve
        self.store = store
        self.casts = 0
        self.cells_touched = 0
        self._start_hint: Dict[Point3, int] = {}

    def rings(self, path: List[int]) -> Tuple[List[int], List[int], List[int]]:
        cells = self.tri.cells
        hit = list(dict.fromkeys(path))
        seen = set(hit)
        near = []
        for cid in hit:
            for nid in cells[cid].n:
                if nid not in seen and not cells[nid].inf:
                    seen.add(nid)
                    near.append(nid)
        far = []
        for cid in near:
            for nid in cells[cid].n:
                if nid not in seen and not cells[nid].inf:
                    seen.add(nid)
                    far.append(nid)
        return hit, near, far

    def cast(self, ray: ViewRay, sign: int = 1, origin: Optional[Point3] = None,
             target: Optional[Point3] = None) -> List[Tuple[int, float]]:
        """Apply one ray's deltas (``sign`` +1 or -1) and return them."""
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if origin is None or target is None:
            origin, target = self.resolve(ray)
        path = trace_ray(self.tri, origin, target, self._start_hint.get(origin))
        self._start_hint[origin] = path[0]
        hit, near, far = self.rings(path)
        s = self.scheme
        cells = self.tri.cells
        applied = []
        record = self.store.record if (self.store is not None and sign > 0) else None
        for ring, w in ((hit, s.w_hit), (near, s.w_near), (far, s.w_far)):
            d = sign * w
            for cid in ring:
                c = cells[cid]
                c.weight += d
                applied.append((cid, d))
                if record is not None:
                    record(c, ray, d)
        self.casts += 1
        self.cells_touched += len(applied)
        return applied

    def recast(self, ray: ViewRay, origin: Optional[Point3] = None,
               target: Optional[Point3] = None) -> List[Tuple[int, float]]:
        """Replace a recorded ray's contribution by a fresh cast."""
        self.cells_touched += self.store.withdraw(ray)
        return self.cast(ray, 1, origin, target)

    def weight(self, cid: int) -> float:
        w = self.tri.cells[cid].weight
        return w if w > 0.0 else 0.0

    def is_free_space(self, cid: int) -> bool:
        c = self.tri.cells[cid]
        return not c.inf and c.weight > self.scheme.t_w


def record_ray(store: RayStore, cell: Cell, ray: ViewRay, delta: float) -> None:
    store.record(cell, ray, delta)
