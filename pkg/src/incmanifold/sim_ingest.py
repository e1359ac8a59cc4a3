"""Synthetic structure-from-motion frontend and the scene stream format.

:func:`generate` simulates a camera moving through a known scene. At every
keyframe it introduces fresh surface points seen from the camera and
re-estimates the points it already tracks; each re-estimate is closer to
ground truth, so the engine sees points that move. Occlusion is resolved
against the ground-truth triangles, so every emitted ray is physically
unobstructed.

Streams round-trip through a line-oriented text format::

    BOX x0 y0 z0 x1 y1 z1
    GT  <pt_id> x y z
    KF  <index>
    CAM <cam_id> x y z
    PT  <pt_id> x y z
    MV  <pt_id> x y z
    OBS <cam_id> <pt_id>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .carving import ViewRay
from .geometry import Box, Point3
from .moving_points import MoveRequest


class InvalidSpec(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass
class Keyframe:
    index: int
    cameras: Dict[int, Point3] = field(default_factory=dict)
    new_points: List[Tuple[int, Point3]] = field(default_factory=list)
    moved_points: List[MoveRequest] = field(default_factory=list)
    observations: List[ViewRay] = field(default_factory=list)

    @property
    def camera(self) -> Optional[Point3]:
        """The keyframe's camera position (the first, if several)."""
        return next(iter(self.cameras.values()), None)


@dataclass
class SceneStream:
    keyframes: List[Keyframe] = field(default_factory=list)
    ground_truth: Dict[int, Point3] = field(default_factory=dict)
    box: Optional[Box] = None

    @property
    def move_count(self) -> int:
        return sum(len(kf.moved_points) for kf in self.keyframes)

    @property
    def point_count(self) -> int:
        return sum(len(kf.new_points) for kf in self.keyframes)

    def without_moves(self) -> "SceneStream":
        """Same stream with every relocation dropped; points keep their first estimate."""
        kfs = [Keyframe(kf.index, dict(kf.cameras), list(kf.new_points), [], list(kf.observations))
               for kf in self.keyframes]
        return SceneStream(kfs, dict(self.ground_truth), self.box)

    def truncated(self, n_keyframes: int) -> "SceneStream":
        return SceneStream(self.keyframes[:n_keyframes], dict(self.ground_truth), self.box)

    def all_positions(self) -> List[Point3]:
        out: List[Point3] = []
        for kf in self.keyframes:
            out.extend(kf.cameras.values())
            out.extend(p for _, p in kf.new_points)
            out.extend(m.p_new for m in kf.moved_points)
        return out


# --------------------------------------------------------------------- scenes

@dataclass(frozen=True)
class GroundTruth:
    """A triangle soup describing the real surface."""

    vertices: np.ndarray
    faces: np.ndarray

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def bounds(self) -> Box:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return Box(tuple(map(float, lo)), tuple(map(float, hi)))


def _quad(faces: List[Tuple[int, int, int]], a: int, b: int, c: int, d: int) -> None:
    faces.append((a, b, c))
    faces.append((a, c, d))


def _cuboid(lo: Sequence[float], hi: Sequence[float]) -> GroundTruth:
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array([(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
                  (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)], dtype=float)
    f: List[Tuple[int, int, int]] = []
    for q in ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)):
        _quad(f, *q)
    return GroundTruth(v, np.array(f, dtype=np.int64))


def box_room(size: Sequence[float] = (16.0, 10.0, 4.0)) -> GroundTruth:
    """The six walls of a closed room with one corner at the origin."""
    return _cuboid((0.0, 0.0, 0.0), size)


def extruded_polygon(poly: Sequence[Tuple[float, float]], height: float,
                     floor_tris: Sequence[Tuple[int, int, int]]) -> GroundTruth:
    """Walls, floor and ceiling of a vertical prism over ``poly``."""
    n = len(poly)
    v = [(x, y, 0.0) for x, y in poly] + [(x, y, height) for x, y in poly]
    f: List[Tuple[int, int, int]] = []
    for i in range(n):
        j = (i + 1) % n
        _quad(f, i, j, j + n, i + n)
    for a, b, c in floor_tris:
        f.append((a, c, b))
        f.append((a + n, b + n, c + n))
    return GroundTruth(np.array(v, dtype=float), np.array(f, dtype=np.int64))


def corridor(width: float = 4.0, length: float = 20.0, leg: float = 12.0,
             height: float = 3.0) -> GroundTruth:
    """An L-shaped corridor: along +x, then a turn along +y at the far end."""
    L, W, H = length, width, leg
    poly = [(0.0, 0.0), (L - W, 0.0), (L, 0.0), (L, W), (L, H), (L - W, H), (L - W, W), (0.0, W)]
    floor = [(0, 1, 6), (0, 6, 7), (1, 2, 3), (1, 3, 6), (6, 3, 4), (6, 4, 5)]
    return extruded_polygon(poly, height, floor)


def load_mesh(path: str) -> GroundTruth:
    """Read vertices and triangles from an ASCII OBJ or PLY file."""
    text = Path(path).read_text()
    if text.startswith("ply"):
        lines = text.splitlines()
        nv = nf = 0
        i = 0
        for i, line in enumerate(lines):
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                nv = int(parts[2])
            elif parts[:2] == ["element", "face"]:
                nf = int(parts[2])
            elif parts and parts[0] == "end_header":
                break
        body = lines[i + 1:]
        verts = [tuple(map(float, body[k].split()[:3])) for k in range(nv)]
        faces = []
        for k in range(nv, nv + nf):
            idx = list(map(int, body[k].split()))[1:]
            faces.extend((idx[0], idx[j], idx[j + 1]) for j in range(1, len(idx) - 1))
    else:
        verts, faces = [], []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append(tuple(map(float, parts[1:4])))
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                faces.extend((idx[0], idx[j], idx[j + 1]) for j in range(1, len(idx) - 1))
    if not verts or not faces:
        raise InvalidSpec(f"{path}: no triangles")
    return GroundTruth(np.array(verts, dtype=float), np.array(faces, dtype=np.int64))


def occluded(tris: np.ndarray, origin: Sequence[float], targets: np.ndarray,
             eps: float = 1e-6) -> np.ndarray:
    """For each target, whether the open segment from ``origin`` hits a triangle.

    Hits within ``eps`` (relative) of either end are ignored, so a point
    lying on the surface does not occlude itself.
    """
    o = np.asarray(origin, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    e1 = b - a
    e2 = c - a
    out = np.zeros(len(targets), dtype=bool)
    for k, t in enumerate(targets):
        d = t - o
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o - a
        u = np.einsum("ij,ij->i", s, pvec) * inv
        q = np.cross(s, e1)
        v = (q @ d) * inv
        tt = np.einsum("ij,ij->i", e2, q) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (tt > eps) & (tt < 1 - eps)
        out[k] = bool(hit.any())
    return out


# --------------------------------------------------------------------- generator

@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a simulated capture.

    ``path`` is a closed polyline walked at ``speed`` meters per frame;
    a keyframe is taken every ``keyframe_every`` frames. A point is
    observed by every keyframe camera within ``max_range`` that sees it, at
    most ``max_observations`` times in total. Each observation re-estimates
    the point until it has been estimated ``max_estimates`` times (default
    ``max_observations``); later sightings only add rays.
    """

    scene: str = "box"
    frames: int = 200
    keyframe_every: int = 5
    points_per_keyframe: int = 20
    sigma0: float = 0.3
    gamma: float = 0.5
    seed: int = 0
    speed: float = 0.25
    max_range: float = 8.0
    max_observations: int = 4
    max_estimates: Optional[int] = None
    margin: float = 2.0
    room: Tuple[float, float, float] = (16.0, 10.0, 4.0)
    path: Optional[Tuple[Point3, ...]] = None
    mesh_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.sigma0 < 0:
            raise InvalidSpec("sigma0 must be non-negative")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidSpec("gamma must lie in (0, 1)")
        if self.frames < 1 or self.keyframe_every < 1:
            raise InvalidSpec("frames and keyframe_every must be positive")
        if self.points_per_keyframe < 0 or self.max_observations < 1:
            raise InvalidSpec("bad point budget")
        if self.max_estimates is not None and self.max_estimates < 1:
            raise InvalidSpec("max_estimates must be positive")
        if self.max_range <= 0 or self.speed < 0:
            raise InvalidSpec("max_range must be positive and speed non-negative")
        if self.scene not in ("box", "corridor", "mesh"):
            raise InvalidSpec(f"unknown scene {self.scene!r}")
        if self.scene == "mesh" and not self.mesh_path:
            raise InvalidSpec("mesh scene needs mesh_path")

    @property
    def keyframes(self) -> int:
        return (self.frames - 1) // self.keyframe_every + 1


def scene_geometry(spec: SceneSpec) -> Tuple[GroundTruth, Tuple[Point3, ...]]:
    """Ground-truth surface and default camera loop for ``spec``."""
    if spec.scene == "box":
        gt = box_room(spec.room)
        lx, ly, lz = spec.room
        # a loop 3/16 of the way in from the walls, at 3/8 of the height
        x0, x1, y0, y1, z = 0.1875 * lx, 0.8125 * lx, 0.3 * ly, 0.7 * ly, 0.375 * lz
        path = ((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z))
    elif spec.scene == "corridor":
        gt = corridor()
        path = ((2.0, 2.0, 1.5), (18.0, 2.0, 1.5), (18.0, 10.0, 1.5))
    else:
        gt = load_mesh(spec.mesh_path)
        b = gt.bounds()
        cx, cy, cz = ((l + h) / 2 for l, h in zip(b.lo, b.hi))
        r = 1.5 * max(h - l for l, h in zip(b.lo, b.hi))
        path = tuple((cx + r * math.cos(2 * math.pi * k / 12), cy + r * math.sin(2 * math.pi * k / 12), cz)
                     for k in range(12))
    return gt, (spec.path or path)


def _closed_polyline_sampler(path: Sequence[Point3]):
    pts = np.asarray(path, dtype=float)
    if len(pts) == 1:
        return lambda s: tuple(map(float, pts[0]))
    segs = np.roll(pts, -1, axis=0) - pts
    lens = np.linalg.norm(segs, axis=1)
    total = float(lens.sum())
    cum = np.concatenate([[0.0], np.cumsum(lens)])

    def at(s: float) -> Point3:
        s = s % total if total > 0 else 0.0
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(pts) - 1)
        f = (s - cum[i]) / lens[i] if lens[i] > 0 else 0.0
        return tuple(map(float, pts[i] + f * segs[i]))

    return at


def _sample_surface(gt: GroundTruth, rng: np.random.Generator, n: int) -> np.ndarray:
    tris = gt.triangles()
    area = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    idx = rng.choice(len(tris), size=n, p=area / area.sum())
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    w0, w1, w2 = 1 - s, s * (1 - r2), s * r2
    t = tris[idx]
    return w0[:, None] * t[:, 0] + w1[:, None] * t[:, 1] + w2[:, None] * t[:, 2]


def _tup(a) -> Point3:
    return (float(a[0]), float(a[1]), float(a[2]))


def generate(spec: SceneSpec) -> SceneStream:
    """Simulate the capture described by ``spec``.

    A point's estimate after its n-th re-observation is
    ``truth + sigma0 * gamma**n * g`` with a fresh standard Gaussian ``g``;
    the first estimate uses n = 0. Camera ids equal keyframe indices.
    """
    gt, path = scene_geometry(spec)
    tris = gt.triangles()
    rng = np.random.default_rng(spec.seed)
    at = _closed_polyline_sampler(path)
    # the box covers the surface and the camera path (an orbit may lie outside the mesh)
    box = Box.around([_tup(v) for v in gt.vertices] + [tuple(map(float, c)) for c in path],
                     margin=spec.margin)

    max_est = spec.max_observations if spec.max_estimates is None else spec.max_estimates
    truth: Dict[int, np.ndarray] = {}
    seen: Dict[int, int] = {}
    estimate: Dict[int, Point3] = {}
    stream = SceneStream(box=box)
    next_id = 0
    for k in range(spec.keyframes):
        cam = at(k * spec.keyframe_every * spec.speed)
        kf = Keyframe(index=k, cameras={k: cam})
        c = np.asarray(cam)

        # re-observe tracked points
        live = [pid for pid in sorted(truth) if seen[pid] < spec.max_observations]
        if live:
            P = np.array([truth[pid] for pid in live])
            near = np.linalg.norm(P - c, axis=1) <= spec.max_range
            cand = [pid for pid, ok in zip(live, near) if ok]
            if cand:
                vis = ~occluded(tris, cam, np.array([truth[pid] for pid in cand]))
                for pid, ok in zip(cand, vis):
                    if not ok:
                        continue
                    n = seen[pid]
                    seen[pid] = n + 1
                    if n < max_est:
                        g = rng.standard_normal(3)
                        est = box.clamp(_tup(truth[pid] + spec.sigma0 * spec.gamma ** n * g))
                        if est != estimate[pid]:
                            estimate[pid] = est
                            kf.moved_points.append(MoveRequest(pid, est))
                    kf.observations.append(ViewRay(k, pid, k))

        # introduce new points
        need = spec.points_per_keyframe
        tries = 0
        while need > 0 and tries < 20:
            tries += 1
            cands = _sample_surface(gt, rng, 8 * need + 8)
            cands = cands[np.linalg.norm(cands - c, axis=1) <= spec.max_range]
            if len(cands) == 0:
                continue
            cands = cands[~occluded(tris, cam, cands)][:need]
            for x in cands:
                pid = next_id
                next_id += 1
                truth[pid] = x
                seen[pid] = 1
                est = box.clamp(_tup(x + spec.sigma0 * rng.standard_normal(3)))
                estimate[pid] = est
                kf.new_points.append((pid, est))
                kf.observations.append(ViewRay(k, pid, k))
                stream.ground_truth[pid] = _tup(x)
            need -= len(cands)
        stream.keyframes.append(kf)
    return stream


# --------------------------------------------------------------------- text format

def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, trim="-")


def _fmt_pt(p: Sequence[float]) -> str:
    return " ".join(_fmt(x) for x in p)


def write_stream(stream: SceneStream) -> str:
    out: List[str] = []
    if stream.box is not None:
        out.append(f"BOX {_fmt_pt(stream.box.lo)} {_fmt_pt(stream.box.hi)}")
    for pid in sorted(stream.ground_truth):
        out.append(f"GT {pid} {_fmt_pt(stream.ground_truth[pid])}")
    for kf in stream.keyframes:
        out.append(f"KF {kf.index}")
        for cid, c in kf.cameras.items():
            out.append(f"CAM {cid} {_fmt_pt(c)}")
        for pid, p in kf.new_points:
            out.append(f"PT {pid} {_fmt_pt(p)}")
        for m in kf.moved_points:
            out.append(f"MV {m.point_id} {_fmt_pt(m.p_new)}")
        for r in kf.observations:
            out.append(f"OBS {r.camera_id} {r.point_id}")
    return "\n".join(out) + ("\n" if out else "")


_ARITY = {"BOX": 6, "KF": 1, "CAM": 4, "PT": 4, "MV": 4, "OBS": 2, "GT": 4}


def _id(tok: str, ln: int) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(ln, f"bad id {tok!r}") from None
    if v < 0:
        raise ParseError(ln, f"negative id {v}")
    return v


def _float(tok: str, ln: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(ln, f"bad number {tok!r}") from None
    if not math.isfinite(v):
        raise ParseError(ln, f"non-finite number {tok!r}")
    return v


def parse_stream(text: str) -> SceneStream:
    """Parse the line format. Structural problems raise :class:`ParseError`;
    referential ones are left to :func:`validate_stream`."""
    stream = SceneStream()
    kf: Optional[Keyframe] = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *args = line.split()
        if tag not in _ARITY:
            raise ParseError(ln, f"unknown record {tag!r}")
        if len(args) != _ARITY[tag]:
            raise ParseError(ln, f"{tag} takes {_ARITY[tag]} fields, got {len(args)}")
        if tag == "BOX":
            if stream.box is not None:
                raise ParseError(ln, "second BOX record")
            v = [_float(a, ln) for a in args]
            box = Box(tuple(v[:3]), tuple(v[3:]))
            if box.degenerate:
                raise ParseError(ln, "degenerate BOX")
            stream.box = box
        elif tag == "GT":
            stream.ground_truth[_id(args[0], ln)] = tuple(_float(a, ln) for a in args[1:])
        elif tag == "KF":
            idx = _id(args[0], ln)
            if kf is not None and idx <= kf.index:
                raise ParseError(ln, f"keyframe index {idx} not increasing")
            kf = Keyframe(idx)
            stream.keyframes.append(kf)
        else:
            if kf is None:
                raise ParseError(ln, f"{tag} outside a KF block")
            if tag == "CAM":
                kf.cameras[_id(args[0], ln)] = tuple(_float(a, ln) for a in args[1:])
            elif tag == "PT":
                kf.new_points.append((_id(args[0], ln), tuple(_float(a, ln) for a in args[1:])))
            elif tag == "MV":
                kf.moved_points.append(MoveRequest(_id(args[0], ln), tuple(_float(a, ln) for a in args[1:])))
            else:
                kf.observations.append(ViewRay(_id(args[0], ln), _id(args[1], ln), kf.index))
    return stream


def read_stream(path: str) -> SceneStream:
    return parse_stream(Path(path).read_text(encoding="utf-8"))


def validate_stream(stream: SceneStream) -> List[str]:
    """Referential and geometric problems, one message per offence."""
    issues: List[str] = []
    points: Dict[int, int] = {}
    cams: Dict[int, int] = {}
    box = stream.box
    for kf in stream.keyframes:
        for cid, c in kf.cameras.items():
            cams.setdefault(cid, kf.index)
            if box is not None and not box.contains(c):
                issues.append(f"KF {kf.index}: camera {cid} outside BOX")
        for pid, p in kf.new_points:
            if pid in points:
                issues.append(f"KF {kf.index}: point {pid} introduced again")
            points.setdefault(pid, kf.index)
            if box is not None and not box.contains(p):
                issues.append(f"KF {kf.index}: point {pid} outside BOX")
        for m in kf.moved_points:
            if m.point_id not in points:
                issues.append(f"KF {kf.index}: MV of point {m.point_id} before its PT")
            if box is not None and not box.contains(m.p_new):
                issues.append(f"KF {kf.index}: point {m.point_id} moved outside BOX")
        for r in kf.observations:
            if r.point_id not in points:
                issues.append(f"KF {kf.index}: OBS of point {r.point_id} before its PT")
            if r.camera_id not in cams:
                issues.append(f"KF {kf.index}: OBS from unknown camera {r.camera_id}")
    return issues
