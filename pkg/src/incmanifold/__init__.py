"""Incremental manifold reconstruction on a Delaunay triangulation with
visibility carving and moving points."""

from .carving import Carver, ViewRay, WeightScheme
from .eval_bench import compare_policies, export_mesh, per_move_overhead, point_to_mesh_error
from .geometry import Box
from .manifold import Manifold, SurfaceMesh
from .moving_points import MovePolicy, MoveRequest, TransferRule, transfer_weights
from .pipeline import Engine, EngineConfig, KeyframeReport, build_steiner_grid, reconstruct
from .sim_ingest import Keyframe, SceneSpec, SceneStream, generate, parse_stream, read_stream, write_stream
from .triangulation import Triangulation, VertexKind

__all__ = [
    "Box", "Carver", "Engine", "EngineConfig", "Keyframe", "KeyframeReport", "Manifold",
    "MovePolicy", "MoveRequest", "SceneSpec", "SceneStream", "SurfaceMesh", "TransferRule",
    "Triangulation", "VertexKind", "ViewRay", "WeightScheme", "build_steiner_grid",
    "compare_policies", "export_mesh", "generate", "parse_stream", "per_move_overhead",
    "point_to_mesh_error", "read_stream", "reconstruct", "transfer_weights", "write_stream",
]
