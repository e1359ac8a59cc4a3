import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incmanifold.eval_bench import (
    CSV_FIELDS,
    EmptyMesh,
    NoMoves,
    closest_points_on_triangles,
    compare_policies,
    distinct_weight_levels,
    export_mesh,
    overhead,
    per_move_overhead,
    point_to_mesh_error,
    reports_to_csv,
    rows_to_csv,
    summarize,
)
from incmanifold.manifold import SurfaceMesh
from incmanifold.moving_points import MovePolicy
from incmanifold.pipeline import EngineConfig, reconstruct
from incmanifold.sim_ingest import SceneSpec, generate

TRI = SurfaceMesh([(0, 1, 2)], {0: (0.0, 0.0, 0.0), 1: (1.0, 0.0, 0.0), 2: (0.0, 1.0, 0.0)})


def mesh_from(tris):
    pos = {}
    faces = []
    for t in tris:
        ids = []
        for p in t:
            ids.append(len(pos))
            pos[len(pos)] = tuple(map(float, p))
        faces.append(tuple(ids))
    return SurfaceMesh(faces, pos)


def brute_distance(p, a, b, c, n=60):
    """Dense barycentric sampling plus exact edge projections: an upper bound
    that converges to the true distance."""
    p, a, b, c = map(np.asarray, (p, a, b, c))
    best = math.inf
    for u, v in [(i / n, j / n) for i in range(n + 1) for j in range(n + 1 - i)]:
        q = a + u * (b - a) + v * (c - a)
        best = min(best, float(np.linalg.norm(p - q)))
    for s, e in ((a, b), (b, c), (c, a)):
        t = np.clip(np.dot(p - s, e - s) / np.dot(e - s, e - s), 0, 1)
        best = min(best, float(np.linalg.norm(p - (s + t * (e - s)))))
    # exact face projection when it lands inside
    nrm = np.cross(b - a, c - a)
    nrm = nrm / np.linalg.norm(nrm)
    q = p - np.dot(p - a, nrm) * nrm
    m = np.array([b - a, c - a]).T
    uv = np.linalg.lstsq(m, q - a, rcond=None)[0]
    if uv.min() >= 0 and uv.sum() <= 1:
        best = min(best, float(np.linalg.norm(p - q)))
    return best


class TestDistance:
    def test_face_region(self):
        assert point_to_mesh_error([(0.0, 0.0, 1.0)], TRI)[0] == pytest.approx(1.0)

    def test_vertex_region(self):
        assert point_to_mesh_error([(2.0, 0.0, 0.0)], TRI)[0] == pytest.approx(1.0)

    def test_edge_region(self):
        assert point_to_mesh_error([(0.5, -1.0, 0.0)], TRI)[0] == pytest.approx(1.0)
        d = point_to_mesh_error([(1.0, 1.0, 0.0)], TRI)[0]
        assert d == pytest.approx(math.sqrt(0.5))

    def test_empty(self):
        with pytest.raises(EmptyMesh):
            point_to_mesh_error([(0.0, 0.0, 0.0)], SurfaceMesh())

    def test_per_point(self):
        mean, per = point_to_mesh_error([(0.0, 0.0, 1.0), (0.0, 0.0, 3.0)], TRI)
        assert per == pytest.approx([1.0, 3.0]) and mean == pytest.approx(2.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        tris = rng.uniform(-2, 2, size=(25, 3, 3))
        mesh = mesh_from(tris)
        pts = rng.uniform(-3, 3, size=(10, 3))
        _, per = point_to_mesh_error(pts, mesh)
        for p, d in zip(pts, per):
            oracle = min(brute_distance(p, *t) for t in tris)
            # sampling only bounds the true distance from above
            assert d <= oracle + 1e-12
            assert d == pytest.approx(oracle, abs=2e-2)

    def test_exact_against_sampling_minimum(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a, b, c = rng.uniform(-1, 1, size=(3, 3))
            p = rng.uniform(-2, 2, size=3)
            q = closest_points_on_triangles(p, a[None], b[None], c[None])[0]
            d = np.linalg.norm(p - q)
            # q lies on the triangle and no sample is closer
            assert d <= brute_distance(p, a, b, c) + 1e-12


def rotation(seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    tris = rng.uniform(-1, 1, size=(8, 3, 3))
    pts = rng.uniform(-2, 2, size=(5, 3))
    R = rotation(seed)
    t = rng.uniform(-10, 10, size=3)
    d0 = point_to_mesh_error(pts, mesh_from(tris))[1]
    d1 = point_to_mesh_error(pts @ R.T + t, mesh_from(tris @ R.T + t))[1]
    assert d1 == pytest.approx(d0, abs=1e-9)


class TestOverhead:
    def test_formula(self):
        assert overhead(10.0, 4.0, 3) == pytest.approx(2.0)

    def test_no_moves(self):
        with pytest.raises(NoMoves):
            overhead(1.0, 1.0, 0)
        s = generate(SceneSpec(frames=20, points_per_keyframe=5, sigma0=0.0))
        with pytest.raises(NoMoves):
            per_move_overhead(s, EngineConfig(), repeats=1)

    def test_without_moves_keeps_first_estimates(self):
        s = generate(SceneSpec(frames=30, points_per_keyframe=5))
        still = s.without_moves()
        assert s.move_count > 0 and still.move_count == 0
        assert [kf.new_points for kf in still.keyframes] == [kf.new_points for kf in s.keyframes]

    def test_per_move_overhead_runs(self):
        s = generate(SceneSpec(frames=30, points_per_keyframe=5))
        assert math.isfinite(per_move_overhead(s, EngineConfig(), repeats=1))


@pytest.fixture(scope="module")
def tiny():
    return generate(SceneSpec(frames=40, points_per_keyframe=8, seed=1))


class TestCompare:
    def test_duplicated_policy_rows_match(self, tiny):
        rows = compare_policies(tiny, [MovePolicy.efficient(), MovePolicy.efficient()], repeats=1)
        strip = lambda r: (r.policy, r.mean_error_m, r.cells_per_move, r.dropped_points)
        assert strip(rows[0]) == strip(rows[1])

    def test_needs_two(self, tiny):
        with pytest.raises(ValueError):
            compare_policies(tiny, [MovePolicy.efficient()])

    def test_csv_and_summary(self, tiny):
        rows = compare_policies(tiny, [MovePolicy.efficient(), MovePolicy.straightforward(None)],
                                repeats=1)
        text = rows_to_csv(rows, 1)
        lines = text.splitlines()
        assert lines[0].startswith("# timing covers")
        assert lines[1] == ",".join(CSV_FIELDS)
        assert len(lines) == 4
        assert "mindist" in summarize(rows)

    def test_tiny_scene_accuracy_within_two(self, tiny):
        # the ray-list run is the oracle baseline
        rows = compare_policies(tiny, [MovePolicy.straightforward(None, None), MovePolicy.efficient()],
                                repeats=1)
        base, eff = rows
        assert eff.mean_error_m <= 2 * base.mean_error_m

    def test_report_csv_has_no_timing(self, tiny):
        engine = reconstruct(tiny)
        text = reports_to_csv(engine.reports)
        assert "seconds" not in text.splitlines()[0]
        assert len(text.splitlines()) == len(engine.reports) + 1


class TestWeightLevels:
    def test_levels(self):
        assert distinct_weight_levels([]) == 0
        assert distinct_weight_levels([0.0, 0.0, 2.0, 2.0 + 1e-12, 5.0]) == 3


def parse_ply(text):
    lines = text.splitlines()
    nv = int(next(l for l in lines if l.startswith("element vertex")).split()[2])
    nf = int(next(l for l in lines if l.startswith("element face")).split()[2])
    body = lines[lines.index("end_header") + 1:]
    V = [tuple(map(float, l.split())) for l in body[:nv]]
    F = [tuple(int(x) for x in l.split()[1:]) for l in body[nv:nv + nf]]
    return [tuple(V[i] for i in f) for f in F]


def parse_obj(text):
    V, F = [], []
    for l in text.splitlines():
        parts = l.split()
        if parts[0] == "v":
            V.append(tuple(map(float, parts[1:])))
        elif parts[0] == "f":
            F.append(tuple(int(x) - 1 for x in parts[1:]))
    return [tuple(V[i] for i in f) for f in F]


class TestExport:
    def test_single_triangle_ply(self):
        text = export_mesh(TRI, "ply")
        assert "element vertex 3" in text and "element face 1" in text
        assert parse_ply(text) == TRI.triangles()

    def test_empty(self):
        text = export_mesh(SurfaceMesh(), "ply")
        assert "element vertex 0" in text and "element face 0" in text
        assert text.splitlines()[-1] == "end_header"
        assert export_mesh(SurfaceMesh(), "obj").strip() == ""

    def test_bad_format(self):
        with pytest.raises(ValueError):
            export_mesh(TRI, "stl")

    def test_round_trip(self):
        engine = reconstruct(generate(SceneSpec(frames=25, points_per_keyframe=8, seed=3)))
        mesh = engine.surface()
        assert len(mesh) > 0
        want = sorted(mesh.triangles())
        assert sorted(parse_ply(export_mesh(mesh, "ply"))) == want
        assert sorted(parse_obj(export_mesh(mesh, "obj"))) == want

    def test_vertices_deduplicated(self):
        engine = reconstruct(generate(SceneSpec(frames=25, points_per_keyframe=8, seed=3)))
        mesh = engine.surface()
        text = export_mesh(mesh, "obj")
        nv = sum(1 for l in text.splitlines() if l.startswith("v "))
        assert nv == len({x for f in mesh.faces for x in f})
