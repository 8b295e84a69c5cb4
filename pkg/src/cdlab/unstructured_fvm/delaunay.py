"""Bowyer-Watson Delaunay triangulation with exactness-hardened predicates.

Both predicates are evaluated in floating point first; when the result is
within a forward error bound of zero it is recomputed exactly with rational
arithmetic (every double is an exact rational).  A point lying exactly on a
circumcircle counts as *outside*, so cocircular configurations keep the
triangles created by earlier (lower-index) insertions.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import DegenerateGeometryError, MeshInputError, MeshQualityError

MIN_ANGLE = 1e-6


def orient_exact(a, b, c) -> int:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]), Fraction(b[1])
    cx, cy = Fraction(c[0]), Fraction(c[1])
    det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (det > 0) - (det < 0)


def orient(a, b, c) -> int:
    """Sign of the signed area of ``abc`` (+1 counter-clockwise)."""
    l = (b[0] - a[0]) * (c[1] - a[1])
    r = (b[1] - a[1]) * (c[0] - a[0])
    det = l - r
    bound = 1e-14 * (abs(l) + abs(r))
    if abs(det) > bound:
        return 1 if det > 0 else -1
    return orient_exact(a, b, c)


def incircle_exact(a, b, c, d) -> int:
    rows = []
    for p in (a, b, c):
        px, py = Fraction(p[0]) - Fraction(d[0]), Fraction(p[1]) - Fraction(d[1])
        rows.append((px, py, px * px + py * py))
    (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = rows
    det = a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0)
    return (det > 0) - (det < 0)


def incircle_many(P: np.ndarray, tris: np.ndarray, d: np.ndarray) -> np.ndarray:
    """In-circle signs of point ``d`` against many CCW triangles (+1 strictly inside)."""
    A = P[tris[:, 0]] - d
    B = P[tris[:, 1]] - d
    C = P[tris[:, 2]] - d
    a2 = (A * A).sum(1)
    b2 = (B * B).sum(1)
    c2 = (C * C).sum(1)
    t1 = A[:, 0] * (B[:, 1] * c2 - b2 * C[:, 1])
    t2 = A[:, 1] * (B[:, 0] * c2 - b2 * C[:, 0])
    t3 = a2 * (B[:, 0] * C[:, 1] - B[:, 1] * C[:, 0])
    det = t1 - t2 + t3
    permanent = (np.abs(A[:, 0]) * (np.abs(B[:, 1]) * c2 + b2 * np.abs(C[:, 1]))
                 + np.abs(A[:, 1]) * (np.abs(B[:, 0]) * c2 + b2 * np.abs(C[:, 0]))
                 + a2 * (np.abs(B[:, 0] * C[:, 1]) + np.abs(B[:, 1] * C[:, 0])))
    sign = np.sign(det).astype(int)
    unsure = np.abs(det) <= 1e-12 * permanent
    for k in np.flatnonzero(unsure):
        t = tris[k]
        sign[k] = incircle_exact(P[t[0]], P[t[1]], P[t[2]], d)
    return sign


def triangulate(points: np.ndarray) -> np.ndarray:
    """Delaunay triangles (CCW, indices into ``points``) of a planar point set."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MeshInputError("points must be an (n, 2) array")
    if n < 3:
        raise DegenerateGeometryError("need at least three points")
    if not np.all(np.isfinite(pts)):
        raise MeshInputError("points must be finite")
    uniq = np.unique(pts, axis=0)
    if len(uniq) != n:
        raise MeshInputError("duplicate points")
    a = pts[0]
    far = np.argmax(((pts - a) ** 2).sum(1))
    b = pts[far]
    if all(orient(a, b, p) == 0 for p in pts):
        raise DegenerateGeometryError("all points are collinear")

    lo = pts.min(0)
    span = float(np.max(pts.max(0) - lo))
    mid = lo + 0.5 * (pts.max(0) - lo)
    big = 64.0 * span
    # exactly representable super-triangle enclosing every input point
    S = np.array([[mid[0] - 2 * big, mid[1] - big], [mid[0] + 2 * big, mid[1] - big], [mid[0], mid[1] + 2 * big]])
    P = np.vstack([pts, S])
    tris = np.array([[n, n + 1, n + 2]], dtype=np.int64)

    for i in range(n):
        p = P[i]
        bad = incircle_many(P, tris, p) > 0
        if not bad.any():
            raise DegenerateGeometryError(f"point {i} is outside every circumcircle")
        cavity = tris[bad]
        edges: dict[tuple[int, int], int] = {}
        for t in cavity:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                key = (min(e), max(e))
                edges[key] = edges.get(key, 0) + 1
        new = []
        for t in cavity:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                if edges[(min(e), max(e))] == 1:
                    new.append((e[0], e[1], i))
        tris = np.vstack([tris[~bad], np.array(new, dtype=np.int64)])

    keep = np.all(tris < n, axis=1)
    tris = tris[keep]
    # drop zero-area triangles produced by collinear hull points
    good = [orient(P[t[0]], P[t[1]], P[t[2]]) > 0 for t in tris]
    tris = tris[np.array(good, dtype=bool)]
    if len(tris) == 0:
        raise DegenerateGeometryError("triangulation is empty")
    return tris


def min_angles(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    out = np.full(len(tris), np.pi)
    for k in range(3):
        a = P[tris[:, k]]
        b = P[tris[:, (k + 1) % 3]]
        c = P[tris[:, (k + 2) % 3]]
        u = b - a
        v = c - a
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = (u * v).sum(1)
        out = np.minimum(out, np.arctan2(cross, dot))
    return out


def check_quality(points: np.ndarray, tris: np.ndarray, min_angle: float = MIN_ANGLE) -> None:
    ang = min_angles(points, tris)
    if np.any(ang < min_angle):
        k = int(np.argmin(ang))
        raise MeshQualityError(f"triangle {k} has minimum angle {ang[k]:.3e} rad")


def delaunay_violations(points: np.ndarray, tris: np.ndarray, rtol: float = 1e-12) -> list[tuple[int, int]]:
    """Pairs ``(triangle, point)`` with the point strictly inside the circumcircle.

    The in-circle determinant is compared against ``rtol`` times its
    permanent (the sum of the absolute values of its expansion terms), so the
    test is scale free.
    """
    P = np.asarray(points, dtype=float)
    out = []
    for k, t in enumerate(np.asarray(tris)):
        a, b, c = P[t[0]], P[t[1]], P[t[2]]
        centre, radius = circumcircle(a, b, c)
        near = np.flatnonzero(((P - centre) ** 2).sum(1) <= (radius * (1 + 1e-6)) ** 2)
        near = near[~np.isin(near, t)]
        if near.size == 0:
            continue
        A = a - P[near]
        B = b - P[near]
        C = c - P[near]
        a2, b2, c2 = (A * A).sum(1), (B * B).sum(1), (C * C).sum(1)
        det = (A[:, 0] * (B[:, 1] * c2 - b2 * C[:, 1]) - A[:, 1] * (B[:, 0] * c2 - b2 * C[:, 0])
               + a2 * (B[:, 0] * C[:, 1] - B[:, 1] * C[:, 0]))
        perm = (np.abs(A[:, 0]) * (np.abs(B[:, 1]) * c2 + b2 * np.abs(C[:, 1]))
                + np.abs(A[:, 1]) * (np.abs(B[:, 0]) * c2 + b2 * np.abs(C[:, 0]))
                + a2 * (np.abs(B[:, 0] * C[:, 1]) + np.abs(B[:, 1] * C[:, 0])))
        out.extend((k, int(j)) for j in near[det > rtol * perm])
    return out


def circumcircle(a, b, c) -> tuple[np.ndarray, float]:
    ax, ay = b[0] - a[0], b[1] - a[1]
    bx, by = c[0] - a[0], c[1] - a[1]
    d = 2.0 * (ax * by - ay * bx)
    if d == 0:
        raise DegenerateGeometryError("collinear triangle has no circumcircle")
    a2, b2 = ax * ax + ay * ay, bx * bx + by * by
    ux = (by * a2 - ay * b2) / d
    uy = (ax * b2 - bx * a2) / d
    return np.array([a[0] + ux, a[1] + uy]), float(np.hypot(ux, uy))
