"""Accuracy and overhead measurement, policy comparison and mesh export."""

from __future__ import annotations

import csv
import gc
import io
import statistics
import time
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Point3
from .manifold import SurfaceMesh
from .moving_points import MovePolicy
from .pipeline import Engine, EngineConfig, KeyframeReport
from .sim_ingest import SceneStream


class EmptyMesh(ValueError):
    pass


class NoMoves(ValueError):
    pass


# --------------------------------------------------------------------- accuracy

def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                                c: np.ndarray) -> np.ndarray:
    """Closest point to ``p`` on each triangle ``(a[i], b[i], c[i])``.

    Voronoi-region classification of the point against vertices, edges
    and the face, vectorised over triangles.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    out = a + v_face[:, None] * ab + w_face[:, None] * ac

    # later assignments take precedence, so go from least to most specific
    m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    out = np.where(m[:, None], b + t_bc[:, None] * (c - b), out)
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(m[:, None], a + t_ac[:, None] * ac, out)
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(m[:, None], a + t_ab[:, None] * ab, out)
    m = (d6 >= 0) & (d5 <= d6)
    out = np.where(m[:, None], c, out)
    m = (d3 >= 0) & (d4 <= d3)
    out = np.where(m[:, None], b, out)
    m = (d1 <= 0) & (d2 <= 0)
    out = np.where(m[:, None], a, out)
    return out


def point_to_mesh_error(points: Sequence[Point3], mesh: SurfaceMesh) -> Tuple[float, List[float]]:
    """Mean and per-point Euclidean distance to the nearest mesh triangle."""
    if not mesh.faces:
        raise EmptyMesh("mesh has no triangles")
    T = np.array(mesh.triangles(), dtype=float)
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    per = []
    for p in np.asarray(points, dtype=float).reshape(-1, 3):
        q = closest_points_on_triangles(p, a, b, c)
        per.append(float(np.sqrt(((q - p) ** 2).sum(axis=1).min())))
    mean = float(np.mean(per)) if per else 0.0
    return mean, per


def distinct_weight_levels(weights: Sequence[float], tol: float = 1e-9) -> int:
    """Number of clusters of values at least ``tol`` apart."""
    levels = 0
    last = None
    for w in sorted(weights):
        if last is None or w - last > tol:
            levels += 1
        last = w
    return levels


# --------------------------------------------------------------------- timing

def overhead(t_mov: float, t_non_mov: float, n_mov: int) -> float:
    """Per-move overhead ``(t_mov - t_non_mov) / n_mov``."""
    if n_mov <= 0:
        raise NoMoves("no moves to divide by")
    return (t_mov - t_non_mov) / n_mov


def timed_run(stream: SceneStream, config: EngineConfig) -> Tuple[float, Engine, List[KeyframeReport]]:
    """Build an engine and run ``stream`` through it; the clock covers
    engine construction and processing only.

    As with :mod:`timeit`, garbage is collected first and the cyclic
    collector is paused while timing, so unrelated live objects do not
    add collection passes to the measurement.
    """
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        engine = Engine(config, stream.box or config.box)
        reports = engine.run(stream)
        elapsed = time.perf_counter() - t0
    finally:
        if was_enabled:
            gc.enable()
    return elapsed, engine, reports


def per_move_overhead(stream: SceneStream, config: EngineConfig, repeats: int = 3) -> float:
    """Median-timed ``T_mov`` against the same stream with moves removed."""
    n = stream.move_count
    if n == 0:
        raise NoMoves("stream contains no MV records")
    still = stream.without_moves()
    t_mov = statistics.median(timed_run(stream, config)[0] for _ in range(repeats))
    t_non = statistics.median(timed_run(still, config)[0] for _ in range(repeats))
    return overhead(t_mov, t_non, n)


# --------------------------------------------------------------------- comparison

@dataclass(frozen=True)
class PolicyRow:
    policy: str
    mean_error_m: float
    overhead_s_per_move: float
    cells_per_move: float
    dropped_points: int


CSV_FIELDS = ("policy", "mean_error_m", "overhead_s_per_move", "cells_per_move", "dropped_points")
TIMING_NOTE = ("# timing covers engine construction and keyframe processing; "
               "stream parsing and mesh export excluded; median of {n} runs")


def evaluate_policy(stream: SceneStream, config: EngineConfig, repeats: int = 3) -> PolicyRow:
    _, engine, reports = timed_run(stream, config)
    mesh = engine.surface()
    truth = list(stream.ground_truth.values())
    err = point_to_mesh_error(truth, mesh)[0] if truth and mesh.faces else float("nan")
    moved = sum(r.moved for r in reports)
    touched = sum(r.move_cells_touched for r in reports)
    ovh = per_move_overhead(stream, config, repeats) if stream.move_count else float("nan")
    return PolicyRow(config.policy.name, err, ovh,
                     touched / moved if moved else 0.0, len(engine.dropped))


def compare_policies(stream: SceneStream, policies: Sequence[MovePolicy],
                     base: Optional[EngineConfig] = None, repeats: int = 3) -> List[PolicyRow]:
    if len(policies) < 2:
        raise ValueError("compare at least two policies")
    base = base or EngineConfig()
    return [evaluate_policy(stream, replace(base, policy=p), repeats) for p in policies]


def rows_to_csv(rows: Sequence[PolicyRow], repeats: int = 3) -> str:
    buf = io.StringIO()
    buf.write(TIMING_NOTE.format(n=repeats) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.policy, repr(r.mean_error_m), repr(r.overhead_s_per_move),
                    repr(r.cells_per_move), r.dropped_points])
    return buf.getvalue()


def summarize(rows: Sequence[PolicyRow]) -> str:
    lines = [f"{'policy':<22} {'error (m)':>10} {'overhead (ms/move)':>19} {'cells/move':>11} {'dropped':>8}"]
    for r in rows:
        lines.append(f"{r.policy:<22} {r.mean_error_m:>10.4f} {1e3 * r.overhead_s_per_move:>19.3f} "
                     f"{r.cells_per_move:>11.1f} {r.dropped_points:>8d}")
    return "\n".join(lines)


def reports_to_csv(reports: Sequence[KeyframeReport]) -> str:
    """Per-keyframe counters; wall-clock columns are left out so that
    identical runs give identical files."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KeyframeReport.COUNT_FIELDS)
    for r in reports:
        w.writerow([getattr(r, f) for f in KeyframeReport.COUNT_FIELDS])
    return buf.getvalue()


# --------------------------------------------------------------------- export

def _mesh_arrays(mesh: SurfaceMesh):
    ids = sorted({x for f in mesh.faces for x in f})
    index = {v: i for i, v in enumerate(ids)}
    return ids, index


def export_mesh(mesh: SurfaceMesh, fmt: str = "ply") -> str:
    """ASCII PLY or Wavefront OBJ text for ``mesh``."""
    fmt = fmt.lower()
    ids, index = _mesh_arrays(mesh)
    P = mesh.positions
    if fmt == "ply":
        out = ["ply", "format ascii 1.0",
               f"element vertex {len(ids)}",
               "property float x", "property float y", "property float z",
               f"element face {len(mesh.faces)}",
               "property list uchar int vertex_indices", "end_header"]
        out += [" ".join(repr(float(x)) for x in P[v]) for v in ids]
        out += ["3 " + " ".join(str(index[x]) for x in f) for f in mesh.faces]
    elif fmt == "obj":
        out = ["v " + " ".join(repr(float(x)) for x in P[v]) for v in ids]
        out += ["f " + " ".join(str(index[x] + 1) for x in f) for f in mesh.faces]
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")
    return "\n".join(out) + "\n"
