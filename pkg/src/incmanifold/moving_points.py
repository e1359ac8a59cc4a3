"""Relocating reconstruction points while keeping visibility coherent.

Two policies are provided. The ray-list policy keeps every cell's list of
contributing rays; a move gathers the rays of all destroyed cells,
withdraws the moved point's rays everywhere and recasts the gathered set.
The weight-transfer policy keeps only weights: it casts the moved point's
recent rays backwards, fills the cells created by each retriangulation
from the weights of the destroyed ones, then casts forwards again.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .carving import Carver, RayStore, ViewRay
from .geometry import Point3, centroid
from .manifold import Manifold
from .triangulation import (
    DuplicatePoint,
    RetriangulationEvent,
    Triangulation,
    VertexKind,
)


class UnknownPoint(KeyError):
    pass


class TransferRule(enum.Enum):
    MEAN = "mean"
    WEIGHTED_MEAN = "wmean"
    MIN_DISTANCE = "mindist"


class PolicyKind(enum.Enum):
    STRAIGHTFORWARD = "straightforward"
    EFFICIENT = "efficient"


@dataclass(frozen=True)
class MovePolicy:
    kind: PolicyKind = PolicyKind.EFFICIENT
    rule: TransferRule = TransferRule.MIN_DISTANCE
    k_forget: Optional[int] = 5
    window: Optional[int] = 15

    def __post_init__(self) -> None:
        if self.window is not None and self.window < 1:
            raise ValueError("window must be positive or None")
        if self.k_forget is not None and self.k_forget < 1:
            raise ValueError("k_forget must be positive or None")

    @classmethod
    def straightforward(cls, k_forget: Optional[int] = 5, window: Optional[int] = 15) -> "MovePolicy":
        return cls(PolicyKind.STRAIGHTFORWARD, TransferRule.MIN_DISTANCE, k_forget, window)

    @classmethod
    def efficient(cls, rule: TransferRule = TransferRule.MIN_DISTANCE,
                  window: Optional[int] = 15) -> "MovePolicy":
        return cls(PolicyKind.EFFICIENT, rule, None, window)

    @property
    def name(self) -> str:
        if self.kind is PolicyKind.STRAIGHTFORWARD:
            k = "inf" if self.k_forget is None else self.k_forget
            return f"straightforward-k{k}"
        return self.rule.value


@dataclass(frozen=True)
class MoveRequest:
    point_id: int
    p_new: Point3
    observing_cameras: Tuple[int, ...] = ()


class MoveStatus(enum.Enum):
    MOVED = "moved"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class MoveReport:
    kind: str
    point_id: int
    status: MoveStatus = MoveStatus.MOVED
    rays_collected: int = 0
    backward_casts: int = 0
    forward_casts: int = 0
    cells_touched: int = 0
    cells_created: int = 0

    @property
    def casts(self) -> int:
        return self.backward_casts + self.forward_casts


def transfer_weights(removed: Sequence[Tuple[Point3, float]], added: Sequence[Point3],
                     rule: TransferRule) -> List[float]:
    """Weights for new cells (by centroid) from destroyed ``(centroid, weight)`` pairs.

    MEAN spreads the total removed weight evenly over the new cells.
    WEIGHTED_MEAN blends removed weights by inverse centroid distance and
    MIN_DISTANCE copies the weight of the nearest removed centroid; under
    either, a zero distance copies that entry's weight.
    """
    if not removed or not added:
        raise ValueError("transfer needs removed and added cells")
    if rule is TransferRule.MEAN:
        w = math.fsum(w for _, w in removed) / len(added)
        return [w] * len(added)
    out = []
    for a in added:
        ax, ay, az = a
        dists = [math.sqrt((ax - c[0]) ** 2 + (ay - c[1]) ** 2 + (az - c[2]) ** 2)
                 for c, _ in removed]
        if rule is TransferRule.MIN_DISTANCE:
            j = min(range(len(dists)), key=dists.__getitem__)
            out.append(removed[j][1])
            continue
        zero = next((j for j, d in enumerate(dists) if d == 0.0), None)
        if zero is not None:
            out.append(removed[zero][1])
            continue
        num = math.fsum(w / d for (_, w), d in zip(removed, dists))
        den = math.fsum(1.0 / d for d in dists)
        out.append(num / den)
    return out


@dataclass
class PointBook:
    """Where each reconstruction point lives and which rays observed it."""

    tri: Triangulation
    cameras: Dict[int, Point3] = field(default_factory=dict)
    vertex_of: Dict[int, int] = field(default_factory=dict)
    point_of: Dict[int, int] = field(default_factory=dict)
    observations: Dict[int, List[ViewRay]] = field(default_factory=dict)

    def bind(self, point_id: int, vid: int) -> None:
        old = self.vertex_of.get(point_id)
        if old is not None:
            self.point_of.pop(old, None)
        self.vertex_of[point_id] = vid
        self.point_of[vid] = point_id

    def position(self, point_id: int) -> Point3:
        return self.tri.points[self.vertex_of[point_id]]

    def resolve(self, ray: ViewRay) -> Tuple[Point3, Point3]:
        return self.cameras[ray.camera_id], self.position(ray.point_id)

    def recent(self, point_id: int, window: Optional[int]) -> List[ViewRay]:
        rays = self.observations.get(point_id, [])
        return list(rays) if window is None else rays[-window:]


class PointMover:
    """Applies insertions and moves of reconstruction points under one policy."""

    def __init__(self, tri: Triangulation, carver: Carver, manifold: Manifold,
                 book: PointBook, policy: MovePolicy):
        self.tri = tri
        self.carver = carver
        self.manifold = manifold
        self.book = book
        self.policy = policy
        self.events: List[RetriangulationEvent] = []
        self.keep_events = False
        if policy.kind is PolicyKind.STRAIGHTFORWARD:
            if carver.store is None:
                carver.store = RayStore(tri, policy.k_forget)
        self.store = carver.store

    # ----------------------------------------------------------- weights

    def _fill(self, ev: RetriangulationEvent) -> None:
        self.manifold.discard_dead(ev.removed)
        if self.keep_events:
            self.events.append(ev)
        if self.policy.kind is PolicyKind.STRAIGHTFORWARD:
            return
        cells = self.tri.cells
        P = self.tri.points
        R = [(centroid(pts), c.weight)
             for c, pts in zip(ev.removed, ev.removed_points) if pts is not None]
        new = [cells[cid] for cid in ev.added if not cells[cid].inf]
        if not new:
            return
        if not R:
            for c in new:
                c.weight = 0.0
            return
        A = [centroid([P[x] for x in c.v]) for c in new]
        for c, w in zip(new, transfer_weights(R, A, self.policy.rule)):
            c.weight = w
        self.carver.cells_touched += len(new)

    # ----------------------------------------------------------- gate

    def move_gate(self, point_id: int, p_new: Point3) -> bool:
        if point_id not in self.book.vertex_of:
            raise UnknownPoint(point_id)
        v = self.book.vertex_of[point_id]
        O = self.manifold.outside
        if not O:
            return True
        star = self.tri.incident_cells(v)
        if any(c.id in O for c in star):
            return False
        if tuple(p_new) == self.tri.points[v]:
            return True
        try:
            conflict = self.tri.conflict_region(p_new, star[0].id)
        except DuplicatePoint:
            return False
        return not any(cid in O for cid in conflict)

    # ----------------------------------------------------------- insertion

    def insert_point(self, point_id: int, p: Point3,
                     kind: VertexKind = VertexKind.RECONSTRUCTION) -> RetriangulationEvent:
        vid, ev = self.tri.insert(p, kind)
        self.book.bind(point_id, vid)
        self._fill(ev)
        if self.store is not None:
            gathered = self.store.rays_in(ev.removed)
            self.store.forget_cells(ev.removed)
            for r in gathered:
                self.carver.recast(r, *self.book.resolve(r))
        return ev

    # ----------------------------------------------------------- moves

    def apply_move(self, req: MoveRequest) -> MoveReport:
        if not self.move_gate(req.point_id, req.p_new):
            return MoveReport("SKIPPED", req.point_id, MoveStatus.SKIPPED)
        if self.policy.kind is PolicyKind.STRAIGHTFORWARD:
            return self.move_straightforward(req)
        return self.move_efficient(req)

    def _window(self, req: MoveRequest) -> List[ViewRay]:
        rays = self.book.recent(req.point_id, None)
        if req.observing_cameras:
            allowed = set(req.observing_cameras)
            rays = [r for r in rays if r.camera_id in allowed]
        w = self.policy.window
        return rays if w is None else rays[-w:]

    def move_efficient(self, req: MoveRequest) -> MoveReport:
        book = self.book
        if req.point_id not in book.vertex_of:
            raise UnknownPoint(req.point_id)
        carver = self.carver
        touched0 = carver.cells_touched
        v_old = book.vertex_of[req.point_id]
        p_old = self.tri.points[v_old]
        window = self._window(req)
        for r in window:
            carver.cast(r, -1, book.cameras[r.camera_id], p_old)
        new_v, ev1, ev2 = self.tri.move(v_old, req.p_new, on_event=self._fill)
        book.bind(req.point_id, new_v)
        p_new = self.tri.points[new_v]
        for r in window:
            carver.cast(r, 1, book.cameras[r.camera_id], p_new)
        return MoveReport(
            "EFFICIENT", req.point_id, MoveStatus.MOVED,
            rays_collected=0,
            backward_casts=len(window), forward_casts=len(window),
            cells_touched=carver.cells_touched - touched0,
            cells_created=len(ev1.added) + len(ev2.added))

    def move_straightforward(self, req: MoveRequest) -> MoveReport:
        book = self.book
        if req.point_id not in book.vertex_of:
            raise UnknownPoint(req.point_id)
        store = self.store
        carver = self.carver
        touched0 = carver.cells_touched
        pt = req.point_id
        v_old = book.vertex_of[pt]

        gathered: Dict[ViewRay, None] = dict.fromkeys(store.rays_in(self.tri.incident_cells(v_old)))

        def on_event(ev: RetriangulationEvent) -> None:
            self._fill(ev)
            for r in store.rays_in(ev.removed):
                gathered[r] = None
            store.forget_cells(ev.removed)

        new_v, ev1, ev2 = self.tri.move(v_old, req.p_new, on_event=on_event)
        book.bind(pt, new_v)

        own = store.rays_ending_at(pt)
        for r in own:
            carver.cells_touched += store.withdraw(r)
        keep = set(self._window(req))
        for r in own:
            if r not in keep:
                gathered.pop(r, None)
        for r in keep:
            gathered.setdefault(r, None)

        for r in gathered:
            carver.recast(r, *book.resolve(r))
        return MoveReport(
            "STRAIGHTFORWARD", pt, MoveStatus.MOVED,
            rays_collected=len(gathered),
            forward_casts=len(gathered),
            cells_touched=carver.cells_touched - touched0,
            cells_created=len(ev1.added) + len(ev2.added))
