"""Geometric predicates and primitives.

Points are plain ``(x, y, z)`` tuples of floats. The two determinant
predicates are evaluated in double precision first; when the result is
within the forward error bound of the floating point evaluation the sign
is recomputed exactly with rational arithmetic, so every decision is
exact on finite inputs.
"""

from __future__ import annotations

import math
from enum import IntEnum
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

Point3 = Tuple[float, float, float]

_EPS = 2.0 ** -53
# Shewchuk's static bounds for the first (non-adaptive) stage, doubled for margin.
_O3D_ERRBOUND = 2.0 * (7.0 + 56.0 * _EPS) * _EPS
_ISP_ERRBOUND = 2.0 * (16.0 + 224.0 * _EPS) * _EPS
# Below this magnitude products may be subnormal and the bounds no longer hold.
_UNDERFLOW_GUARD = 1e-200


class Sign(IntEnum):
    NEGATIVE = -1
    ZERO = 0
    POSITIVE = 1


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def is_finite_point(p: Sequence[float]) -> bool:
    return len(p) == 3 and all(math.isfinite(c) for c in p)


def _to_ints(pts):
    """Scale float coordinates to integers sharing one power-of-two denominator."""
    ratios = [v.as_integer_ratio() for p in pts for v in p]
    shift = max(d.bit_length() for _, d in ratios) - 1
    ints = [n << (shift - d.bit_length() + 1) for n, d in ratios]
    return [ints[i:i + 3] for i in range(0, len(ints), 3)]


def _orient3d_exact(a, b, c, d) -> int:
    (ax, ay, az), (bx, by, bz), (cx, cy, cz), (dx, dy, dz) = _to_ints(
        [tuple(map(float, p)) for p in (a, b, c, d)])
    m00, m01, m02 = bx - ax, by - ay, bz - az
    m10, m11, m12 = cx - ax, cy - ay, cz - az
    m20, m21, m22 = dx - ax, dy - ay, dz - az
    det = (m00 * (m11 * m22 - m12 * m21)
           - m01 * (m10 * m22 - m12 * m20)
           + m02 * (m10 * m21 - m11 * m20))
    return _sign(det)


def orient3d(a: Point3, b: Point3, c: Point3, d: Point3) -> int:
    """Sign of ``det[b - a, c - a, d - a]``.

    Positive when ``d`` lies on the side of plane ``(a, b, c)`` that its
    right-handed normal points to; ``(0,0,0), (1,0,0), (0,1,0), (0,0,1)``
    is positive.
    """
    adx = a[0] - d[0]
    ady = a[1] - d[1]
    adz = a[2] - d[2]
    bdx = b[0] - d[0]
    bdy = b[1] - d[1]
    bdz = b[2] - d[2]
    cdx = c[0] - d[0]
    cdy = c[1] - d[1]
    cdz = c[2] - d[2]

    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    cdxady = cdx * ady
    adxcdy = adx * cdy
    adxbdy = adx * bdy
    bdxady = bdx * ady

    det = (adz * (bdxcdy - cdxbdy)
           + bdz * (cdxady - adxcdy)
           + cdz * (adxbdy - bdxady))
    permanent = ((abs(bdxcdy) + abs(cdxbdy)) * abs(adz)
                 + (abs(cdxady) + abs(adxcdy)) * abs(bdz)
                 + (abs(adxbdy) + abs(bdxady)) * abs(cdz))
    if permanent > _UNDERFLOW_GUARD:
        errbound = _O3D_ERRBOUND * permanent
        # the expression above is the negated determinant
        if det > errbound:
            return -1
        if -det > errbound:
            return 1
    if a == b or a == c or a == d or b == c or b == d or c == d:
        return 0
    return _orient3d_exact(a, b, c, d)


def _insphere_exact(a, b, c, d, e) -> int:
    pts = _to_ints([tuple(map(float, p)) for p in (a, b, c, d, e)])
    ex, ey, ez = pts[4]
    rows = []
    for px, py, pz in pts[:4]:
        x, y, z = px - ex, py - ey, pz - ez
        rows.append((x, y, z, x * x + y * y + z * z))
    det = _det4(rows)
    # sign flipped so that "inside a positively oriented sphere" is positive
    return -_sign(det)


def _det3(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _det4(m):
    total = 0
    for col in range(4):
        minor = [[row[j] for j in range(4) if j != col] for row in m[1:]]
        term = m[0][col] * _det3(minor)
        total = total + term if col % 2 == 0 else total - term
    return total


def in_sphere(a: Point3, b: Point3, c: Point3, d: Point3, e: Point3) -> int:
    """Positive iff ``e`` is strictly inside the circumsphere of the
    positively oriented tetrahedron ``(a, b, c, d)``; zero if cospherical."""
    aex = a[0] - e[0]
    aey = a[1] - e[1]
    aez = a[2] - e[2]
    bex = b[0] - e[0]
    bey = b[1] - e[1]
    bez = b[2] - e[2]
    cex = c[0] - e[0]
    cey = c[1] - e[1]
    cez = c[2] - e[2]
    dex = d[0] - e[0]
    dey = d[1] - e[1]
    dez = d[2] - e[2]

    aexbey = aex * bey
    bexaey = bex * aey
    bexcey = bex * cey
    cexbey = cex * bey
    cexdey = cex * dey
    dexcey = dex * cey
    dexaey = dex * aey
    aexdey = aex * dey
    aexcey = aex * cey
    cexaey = cex * aey
    bexdey = bex * dey
    dexbey = dex * bey

    ab = aexbey - bexaey
    bc = bexcey - cexbey
    cd = cexdey - dexcey
    da = dexaey - aexdey
    ac = aexcey - cexaey
    bd = bexdey - dexbey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezp = abs(aez)
    bezp = abs(bez)
    cezp = abs(cez)
    dezp = abs(dez)
    aexbeyp = abs(aexbey)
    bexaeyp = abs(bexaey)
    bexceyp = abs(bexcey)
    cexbeyp = abs(cexbey)
    cexdeyp = abs(cexdey)
    dexceyp = abs(dexcey)
    dexaeyp = abs(dexaey)
    aexdeyp = abs(aexdey)
    aexceyp = abs(aexcey)
    cexaeyp = abs(cexaey)
    bexdeyp = abs(bexdey)
    dexbeyp = abs(dexbey)
    permanent = (((cexdeyp + dexceyp) * bezp
                  + (dexbeyp + bexdeyp) * cezp
                  + (bexceyp + cexbeyp) * dezp) * alift
                 + ((dexaeyp + aexdeyp) * cezp
                    + (aexceyp + cexaeyp) * dezp
                    + (cexdeyp + dexceyp) * aezp) * blift
                 + ((aexbeyp + bexaeyp) * dezp
                    + (bexdeyp + dexbeyp) * aezp
                    + (dexaeyp + aexdeyp) * bezp) * clift
                 + ((bexceyp + cexbeyp) * aezp
                    + (cexaeyp + aexceyp) * bezp
                    + (aexbeyp + bexaeyp) * cezp) * dlift)
    if permanent > _UNDERFLOW_GUARD:
        errbound = _ISP_ERRBOUND * permanent
        if det > errbound:
            return -1
        if -det > errbound:
            return 1
    if e == a or e == b or e == c or e == d:
        return 0
    return _insphere_exact(a, b, c, d, e)


def coplanar_orient(a: Point3, b: Point3, c: Point3, apex: Point3) -> int:
    """Orientation of coplanar ``a, b, c`` as seen from ``apex`` off their plane."""
    return orient3d(a, b, c, apex)


def off_plane_point(a: Point3, b: Point3, c: Point3) -> Point3:
    """Some point not on the plane of the non-collinear triangle ``abc``."""
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    scale = max(abs(nx), abs(ny), abs(nz))
    if scale > 0.0:
        size = max(abs(ux), abs(uy), abs(uz), abs(vx), abs(vy), abs(vz), 1e-300)
        f = size / scale
        q = (a[0] + nx * f, a[1] + ny * f, a[2] + nz * f)
        if orient3d(a, b, c, q) != 0:
            return q
    for q in ((a[0] + 1.0, a[1], a[2]), (a[0], a[1] + 1.0, a[2]), (a[0], a[1], a[2] + 1.0)):
        if orient3d(a, b, c, q) != 0:
            return q
    raise ValueError("degenerate triangle")


def in_circle_coplanar(a: Point3, b: Point3, c: Point3, p: Point3) -> int:
    """For ``p`` coplanar with triangle ``abc``: positive iff strictly inside
    its circumcircle, zero if on it."""
    q = off_plane_point(a, b, c)
    # any sphere through a, b, c meets their plane in the circumcircle
    if orient3d(a, b, c, q) > 0:
        return in_sphere(a, b, c, q, p)
    return in_sphere(a, c, b, q, p)


def collinear(a: Point3, b: Point3, c: Point3) -> bool:
    ax, ay, az = (Fraction(v) for v in a)
    ux, uy, uz = Fraction(b[0]) - ax, Fraction(b[1]) - ay, Fraction(b[2]) - az
    vx, vy, vz = Fraction(c[0]) - ax, Fraction(c[1]) - ay, Fraction(c[2]) - az
    return uy * vz == uz * vy and uz * vx == ux * vz and ux * vy == uy * vx


def _perturbed_edge_sign(s0, s1, a, b, ida, idb) -> int:
    o = orient3d(s0, s1, a, b)
    if o != 0:
        return o
    # symbolic shift of the segment, antisymmetric in the edge's endpoints
    return 1 if ida < idb else -1


def segment_crosses_facet(s0: Point3, s1: Point3, tri: Sequence[Point3],
                          ids: Sequence[int] = (0, 1, 2)) -> bool:
    """True iff the open segment ``(s0, s1)`` meets the closed triangle.

    Segments touching an edge or vertex are resolved by a symbolic
    perturbation keyed on the triangle's vertex ids, so every crossing of a
    triangulated surface is attributed to exactly one of the incident
    facets. Coplanar segments never cross.
    """
    a, b, c = tri
    o0 = orient3d(a, b, c, s0)
    o1 = orient3d(a, b, c, s1)
    if o0 == 0 or o1 == 0 or o0 == o1:
        return False
    ia, ib, ic = ids
    e0 = _perturbed_edge_sign(s0, s1, a, b, ia, ib)
    e1 = _perturbed_edge_sign(s0, s1, b, c, ib, ic)
    e2 = _perturbed_edge_sign(s0, s1, c, a, ic, ia)
    return e0 == e1 == e2


def centroid(pts: Sequence[Point3]) -> Point3:
    n = len(pts)
    return (sum(p[0] for p in pts) / n,
            sum(p[1] for p in pts) / n,
            sum(p[2] for p in pts) / n)


def dist(p: Point3, q: Point3) -> float:
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2)


class DegenerateBox(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: Point3
    hi: Point3

    @property
    def degenerate(self) -> bool:
        return not all(h > l for l, h in zip(self.lo, self.hi))

    def validate(self) -> "Box":
        if self.degenerate:
            raise DegenerateBox(f"box {self.lo} .. {self.hi} has an empty extent")
        return self

    def contains(self, p: Sequence[float]) -> bool:
        return all(l <= x <= h for l, x, h in zip(self.lo, p, self.hi))

    def clamp(self, p: Sequence[float]) -> Point3:
        return tuple(min(max(x, l), h) for l, x, h in zip(self.lo, p, self.hi))

    def expanded(self, margin: float) -> "Box":
        return Box(tuple(x - margin for x in self.lo), tuple(x + margin for x in self.hi))

    @classmethod
    def around(cls, pts: Iterable[Sequence[float]], margin: float = 0.0) -> "Box":
        pts = list(pts)
        if not pts:
            raise DegenerateBox("no points to bound")
        lo = tuple(min(p[i] for p in pts) - margin for i in range(3))
        hi = tuple(max(p[i] for p in pts) + margin for i in range(3))
        return cls(lo, hi)
