from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incmanifold.geometry import (
    Box,
    DegenerateBox,
    Sign,
    centroid,
    in_sphere,
    orient3d,
    segment_crosses_facet,
)

from conftest import UNIT_TET

coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord)


def orient_oracle(a, b, c, d):
    m = [[Fraction(p[i]) - Fraction(a[i]) for i in range(3)] for p in (b, c, d)]
    det = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
           - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
           + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    return (det > 0) - (det < 0)


def insphere_oracle(a, b, c, d, e):
    rows = []
    for p in (a, b, c, d):
        r = [Fraction(p[i]) - Fraction(e[i]) for i in range(3)]
        rows.append(r + [r[0] ** 2 + r[1] ** 2 + r[2] ** 2])

    def det3(m):
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))

    det = sum((-1) ** j * rows[0][j] * det3([[r[k] for k in range(4) if k != j] for r in rows[1:]])
              for j in range(4))
    return -((det > 0) - (det < 0))


class TestOrient3d:
    def test_canonical_positive(self):
        assert orient3d(*UNIT_TET) == Sign.POSITIVE

    def test_coplanar_zero(self):
        assert orient3d((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)) == Sign.ZERO

    def test_mirror_negative(self):
        assert orient3d((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, -1)) == Sign.NEGATIVE

    @given(point, point, point, point)
    def test_odd_permutation_flips(self, a, b, c, d):
        s = orient3d(a, b, c, d)
        assert orient3d(b, a, c, d) == -s
        assert orient3d(a, b, d, c) == -s
        assert orient3d(b, c, a, d) == s

    @given(point, point, point, st.floats(0, 1), st.floats(0, 1),
           st.sampled_from([0.0, 1e-300, -1e-300, 1e-30, 5e-324]))
    @settings(max_examples=300)
    def test_near_coplanar_matches_rational_oracle(self, a, b, c, s, t, off):
        d = tuple(a[i] + s * (b[i] - a[i]) + t * (c[i] - a[i]) + off for i in range(3))
        assert orient3d(a, b, c, d) == orient_oracle(a, b, c, d)

    def test_tiny_offsets_exact(self):
        a, b, c = (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
        assert orient3d(a, b, c, (0.3, 0.3, 1e-300)) == 1
        assert orient3d(a, b, c, (0.3, 0.3, -1e-300)) == -1
        assert orient3d(a, b, c, (0.3, 0.3, 0.0)) == 0


class TestInSphere:
    def test_interior_point(self):
        assert in_sphere(*UNIT_TET, (0.25, 0.25, 0.25)) == Sign.POSITIVE

    def test_far_point(self):
        assert in_sphere(*UNIT_TET, (100, 100, 100)) == Sign.NEGATIVE

    @pytest.mark.parametrize("k", range(4))
    def test_own_vertex_zero(self, k):
        assert in_sphere(*UNIT_TET, UNIT_TET[k]) == Sign.ZERO

    def test_cospherical_zero(self):
        # (1,1,1) lies on the sphere through the unit cube corners
        assert in_sphere(*UNIT_TET, (1.0, 1.0, 1.0)) == 0

    @given(point, point, point, point, point)
    @settings(max_examples=200)
    def test_matches_rational_oracle(self, a, b, c, d, e):
        if orient3d(a, b, c, d) <= 0:
            a, b = b, a
        if orient3d(a, b, c, d) <= 0:
            return
        assert in_sphere(a, b, c, d, e) == insphere_oracle(a, b, c, d, e)

    @given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4),
           st.sampled_from([0.0, 1e-300, -1e-300, 2.0 ** -60]))
    def test_near_cospherical_exact(self, i, j, k, off):
        # lattice points near the circumsphere of the unit cube corners
        e = (0.5 + 0.5 * i / 4 + off, 0.5 + j / 8.0, 0.5 + k / 8.0)
        assert in_sphere(*UNIT_TET, e) == insphere_oracle(*UNIT_TET, e)


class TestSegmentCrossesFacet:
    TRI = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))

    def test_transversal(self):
        assert segment_crosses_facet((0.2, 0.2, -1), (0.2, 0.2, 1), self.TRI)

    def test_miss(self):
        assert not segment_crosses_facet((5, 5, -1), (5, 5, 1), self.TRI)

    def test_coplanar_miss(self):
        assert not segment_crosses_facet((2, 2, 0), (3, 2, 0), self.TRI)

    def test_through_edge_is_deterministic(self):
        s0, s1 = (0.5, 0.0, -1.0), (0.5, 0.0, 1.0)
        first = segment_crosses_facet(s0, s1, self.TRI)
        assert all(segment_crosses_facet(s0, s1, self.TRI) == first for _ in range(5))

    def test_shared_edge_claimed_by_exactly_one_side(self):
        # two triangles sharing the edge x = y; a segment through that edge
        # must be assigned to exactly one of them
        a, b = (0.0, 0.0, 0.0), (1.0, 1.0, 0.0)
        left, right = (0.0, 1.0, 0.0), (1.0, 0.0, 0.0)
        s0, s1 = (0.5, 0.5, -1.0), (0.5, 0.5, 1.0)
        hits = [segment_crosses_facet(s0, s1, (a, b, left), (0, 1, 2)),
                segment_crosses_facet(s0, s1, (a, right, b), (0, 3, 1))]
        assert sum(hits) == 1


class TestCentroid:
    def test_unit_tet(self):
        assert centroid(UNIT_TET) == (0.25, 0.25, 0.25)

    def test_regular_tet_at_origin(self):
        reg = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))
        assert centroid(reg) == (0.0, 0.0, 0.0)

    def test_repeated_point(self):
        p = (0.5, -2.0, 7.25)
        assert centroid([p] * 4) == p


class TestBox:
    def test_contains_closed(self):
        b = Box((0, 0, 0), (1, 2, 3))
        assert b.contains((1, 2, 3)) and b.contains((0, 0, 0))
        assert not b.contains((1.0000001, 0, 0))

    def test_degenerate(self):
        with pytest.raises(DegenerateBox):
            Box((0, 0, 0), (1, 0, 1)).validate()
