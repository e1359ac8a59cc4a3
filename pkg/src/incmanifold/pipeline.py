"""The incremental reconstruction loop.

An :class:`Engine` owns one triangulation and everything layered on it.
It is bootstrapped from the first keyframes of a stream and then fed one
keyframe at a time; within a keyframe the order is shrink, moves,
insertions, ray casting, growing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .carving import Carver, ViewRay, WeightScheme
from .geometry import Box, DegenerateBox, Point3
from .manifold import Manifold, SurfaceMesh
from .moving_points import MovePolicy, MoveReport, MoveRequest, MoveStatus, PointBook, PointMover
from .sim_ingest import Keyframe, SceneStream
from .triangulation import INFINITE, DuplicatePoint, Triangulation, VertexKind


class OutsideBox(ValueError):
    pass


def build_steiner_grid(box: Box, spacing: float) -> List[Point3]:
    """Axis-aligned lattice over ``box`` at ``spacing``, always including
    both ends of every axis."""
    if not spacing > 0.0 or not math.isfinite(spacing):
        raise ValueError("spacing must be positive")
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        if not hi > lo:
            raise DegenerateBox(f"empty extent [{lo}, {hi}]")
        n = int(math.floor((hi - lo) / spacing))
        vals = [lo + k * spacing for k in range(n + 1)]
        vals = [v for v in vals if v < hi - 1e-9 * spacing] + [hi]
        axes.append(vals)
    return [(x, y, z) for x in axes[0] for y in axes[1] for z in axes[2]]


@dataclass
class EngineConfig:
    scheme: WeightScheme = field(default_factory=WeightScheme)
    policy: MovePolicy = field(default_factory=MovePolicy)
    steiner_spacing: float = 5.0
    box: Optional[Box] = None
    bootstrap_keyframes: int = 2
    record_moves: bool = False

    def __post_init__(self) -> None:
        if not self.steiner_spacing > 0.0:
            raise ValueError("steiner_spacing must be positive")
        if self.bootstrap_keyframes < 1:
            raise ValueError("bootstrap_keyframes must be at least 1")


@dataclass
class DroppedPoint:
    keyframe: int
    point_id: int
    position: Point3
    reason: str


@dataclass
class KeyframeReport:
    index: int
    inserted: int = 0
    dropped: int = 0
    moved: int = 0
    skipped_moves: int = 0
    rays_cast: int = 0
    shrunk: int = 0
    grown: int = 0
    outside_cells: int = 0
    surface_triangles: int = 0
    vertices: int = 0
    move_casts: int = 0
    move_cells_touched: int = 0
    seconds: float = 0.0
    moves: List[MoveReport] = field(default_factory=list, repr=False)

    COUNT_FIELDS = ("index", "inserted", "dropped", "moved", "skipped_moves", "rays_cast",
                    "shrunk", "grown", "outside_cells", "surface_triangles", "vertices",
                    "move_casts", "move_cells_touched")


class Engine:
    def __init__(self, config: EngineConfig, box: Optional[Box] = None):
        self.config = config
        box = box or config.box
        if box is None:
            raise ValueError("a scene bounding box is required")
        self.box = box.validate()
        self.tri = Triangulation()
        self.book = PointBook(self.tri)
        self.carver = Carver(self.tri, config.scheme, self.book.resolve)
        self.manifold = Manifold(self.tri, self.carver)
        self.mover = PointMover(self.tri, self.carver, self.manifold, self.book, config.policy)
        self.dropped: List[DroppedPoint] = []
        self._dropped_ids: Set[int] = set()
        self.pending_obs: Dict[int, List[ViewRay]] = {}
        self.reports: List[KeyframeReport] = []
        self.bootstrapped = False
        self._last_index: Optional[int] = None
        for p in build_steiner_grid(self.box, config.steiner_spacing):
            self.tri.insert(p, VertexKind.STEINER)

    # ------------------------------------------------------------ helpers

    def _check_keyframe(self, kf: Keyframe) -> None:
        if self._last_index is not None and kf.index <= self._last_index:
            raise ValueError(f"keyframe index {kf.index} not increasing")
        self._last_index = kf.index
        for cid, c in kf.cameras.items():
            if not self.box.contains(c):
                raise OutsideBox(f"camera {cid} at {c} outside the scene box")
        for pid, p in kf.new_points:
            if not self.box.contains(p):
                raise OutsideBox(f"point {pid} at {p} outside the scene box")
        for m in kf.moved_points:
            if not self.box.contains(m.p_new):
                raise OutsideBox(f"point {m.point_id} moved to {m.p_new} outside the scene box")

    def _drop(self, kf: int, pid: int, p: Point3, reason: str) -> None:
        self.dropped.append(DroppedPoint(kf, pid, p, reason))
        self._dropped_ids.add(pid)

    def _observe(self, ray: ViewRay) -> bool:
        if ray.camera_id not in self.book.cameras:
            raise KeyError(f"observation from unknown camera {ray.camera_id}")
        if ray.point_id in self.book.vertex_of:
            self.carver.cast(ray, 1)
            self.book.observations.setdefault(ray.point_id, []).append(ray)
            return True
        self.pending_obs.setdefault(ray.point_id, []).append(ray)
        return False

    def _flush_pending(self, pid: int) -> int:
        n = 0
        for ray in self.pending_obs.pop(pid, ()):
            n += self._observe(ray)
        return n

    def _finish(self, rep: KeyframeReport, t0: float) -> KeyframeReport:
        rep.outside_cells = len(self.manifold.outside)
        rep.surface_triangles = sum(
            1 for cid in self.manifold.outside
            for nid in self.tri.cells[cid].n if nid not in self.manifold.outside)
        rep.vertices = len(self.tri.points)
        rep.seconds = time.perf_counter() - t0
        self.reports.append(rep)
        return rep

    # ------------------------------------------------------------ bootstrap

    def bootstrap(self, keyframes: Sequence[Keyframe]) -> KeyframeReport:
        """Insert every point estimated in ``keyframes``, cast all their
        rays, then grow from the heaviest cell."""
        t0 = time.perf_counter()
        latest: Dict[int, Point3] = {}
        rays: List[ViewRay] = []
        for kf in keyframes:
            self._check_keyframe(kf)
            self.book.cameras.update(kf.cameras)
            for pid, p in kf.new_points:
                latest[pid] = p
            for m in kf.moved_points:
                if m.point_id not in latest:
                    raise KeyError(f"move of unknown point {m.point_id}")
                latest[m.point_id] = m.p_new
            rays.extend(kf.observations)
        last = keyframes[-1].index if keyframes else -1
        rep = KeyframeReport(index=last)
        for pid, p in latest.items():
            try:
                self.mover.insert_point(pid, p)
                rep.inserted += 1
            except DuplicatePoint:
                self._drop(last, pid, p, "duplicate")
                rep.dropped += 1
        for ray in rays:
            rep.rays_cast += self._observe(ray)
        rep.grown = self.manifold.grow_from_best()
        self.bootstrapped = True
        return self._finish(rep, t0)

    # ------------------------------------------------------------ keyframes

    def _conflict_cells(self, p: Point3) -> Optional[List[int]]:
        try:
            return self.tri.conflict_region(p)
        except DuplicatePoint:
            return None

    def _vertex_star_inflation(self, cells: Iterable[int]) -> List[int]:
        tri = self.tri
        verts: Dict[int, None] = {}
        for cid in cells:
            for x in tri.cells[cid].v:
                if x != INFINITE:
                    verts[x] = None
        out: Dict[int, None] = {}
        for x in verts:
            for c in tri.incident_cells(x):
                if not c.inf:
                    out[c.id] = None
        return list(out)

    def process_keyframe(self, kf: Keyframe) -> KeyframeReport:
        if not self.bootstrapped:
            raise RuntimeError("bootstrap the engine first")
        t0 = time.perf_counter()
        self._check_keyframe(kf)
        self.book.cameras.update(kf.cameras)
        rep = KeyframeReport(index=kf.index)
        tri = self.tri
        O = self.manifold.outside

        present = self.book.vertex_of
        insertions: List[Tuple[int, Point3]] = list(kf.new_points)
        moves: List[MoveRequest] = []
        for m in kf.moved_points:
            if m.point_id in present:
                moves.append(m)
            elif m.point_id in self._dropped_ids:
                # a dropped point gets another chance at its refined estimate
                insertions.append((m.point_id, m.p_new))
            else:
                raise KeyError(f"move of unknown point {m.point_id}")

        # conflict cells of everything about to change
        D: Dict[int, None] = {}
        for _, p in insertions:
            for cid in self._conflict_cells(p) or ():
                D[cid] = None
        for m in moves:
            for c in tri.incident_cells(present[m.point_id]):
                D[c.id] = None
            if tuple(m.p_new) != tri.points[present[m.point_id]]:
                for cid in self._conflict_cells(m.p_new) or ():
                    D[cid] = None
        finite_D = [cid for cid in D if not tri.cells[cid].inf]
        if O and finite_D:
            rep.shrunk = len(self.manifold.shrink(self._vertex_star_inflation(finite_D)))

        for m in moves:
            cams = tuple(r.camera_id for r in self.book.observations.get(m.point_id, ()))
            mr = self.mover.apply_move(MoveRequest(m.point_id, tuple(m.p_new), cams))
            if mr.status is MoveStatus.MOVED:
                rep.moved += 1
                rep.move_casts += mr.casts
                rep.move_cells_touched += mr.cells_touched
            else:
                rep.skipped_moves += 1
            if self.config.record_moves:
                rep.moves.append(mr)

        inserted: List[int] = []
        for pid, p in insertions:
            if pid in present:
                raise ValueError(f"point {pid} introduced twice")
            conflict = self._conflict_cells(p)
            if conflict is None:
                self._drop(kf.index, pid, p, "duplicate")
                rep.dropped += 1
                continue
            if any(cid in O for cid in conflict):
                self._drop(kf.index, pid, p, "conflicts with outside set")
                rep.dropped += 1
                continue
            self.mover.insert_point(pid, p)
            inserted.append(pid)
            rep.inserted += 1

        for pid in inserted:
            rep.rays_cast += self._flush_pending(pid)
        for ray in kf.observations:
            rep.rays_cast += self._observe(ray)

        rep.grown = self.manifold.grow_incremental()
        return self._finish(rep, t0)

    def run(self, stream: SceneStream) -> List[KeyframeReport]:
        kfs = stream.keyframes
        if not kfs:
            return []
        n = min(self.config.bootstrap_keyframes, len(kfs))
        reports = [self.bootstrap(kfs[:n])]
        for kf in kfs[n:]:
            reports.append(self.process_keyframe(kf))
        return reports

    # ------------------------------------------------------------ outputs

    def surface(self) -> SurfaceMesh:
        return self.manifold.extract_surface()

    def reconstruction_points(self) -> Dict[int, Point3]:
        return {pid: self.tri.points[v] for pid, v in self.book.vertex_of.items()}


def reconstruct(stream: SceneStream, config: Optional[EngineConfig] = None) -> Engine:
    """Run a whole stream through a fresh engine."""
    config = config or EngineConfig()
    engine = Engine(config, stream.box or config.box)
    engine.run(stream)
    return engine
