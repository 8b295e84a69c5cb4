"""Triangular meshes with their Voronoi dual (control volumes).

Each Voronoi cell is the convex domain clipped by the perpendicular-bisector
half-planes of the node's Delaunay neighbours.  Clipping keeps a label on every
polygon edge, either the neighbour index or ``-1`` for a piece of the domain
boundary, so face lengths ``l_ij`` fall out of the clipped polygons directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateGeometryError, MeshInputError
from .delaunay import check_quality, delaunay_violations, orient, triangulate

DOMAIN = -1


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain, collinear points dropped)."""
    P = sorted(map(tuple, np.asarray(points, dtype=float)))

    def half(seq):
        out: list = []
        for p in seq:
            while len(out) >= 2 and orient(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower, upper = half(P), half(P[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _as_convex_polygon(domain) -> np.ndarray:
    poly = np.asarray(domain, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise MeshInputError("domain must be a polygon given as an (m, 2) vertex array")
    if polygon_area(poly) < 0:
        poly = poly[::-1]
    m = len(poly)
    for k in range(m):
        if orient(poly[k], poly[(k + 1) % m], poly[(k + 2) % m]) < 0:
            raise MeshInputError("domain polygon must be convex")
    if polygon_area(poly) <= 0:
        raise DegenerateGeometryError("domain polygon has zero area")
    return poly


def clip_halfplane(poly: np.ndarray, labels: np.ndarray, a: np.ndarray, c: float, label: int,
                   tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Keep the part of a convex polygon with ``a . x <= c``.

    ``labels[k]`` tags the edge from vertex ``k`` to ``k + 1``; edges created by
    the cut get ``label``.
    """
    s = poly @ a - c
    if np.all(s <= 0):
        return poly, labels
    if np.all(s > 0):
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    out, lab = [], []
    m = len(poly)
    for k in range(m):
        P, Q = poly[k], poly[(k + 1) % m]
        sp_, sq = s[k], s[(k + 1) % m]
        if sp_ <= 0:
            out.append(P)
            lab.append(labels[k])
            if sq > 0:
                out.append(P + (sp_ / (sp_ - sq)) * (Q - P))
                lab.append(label)
        elif sq <= 0:
            out.append(P + (sp_ / (sp_ - sq)) * (Q - P))
            lab.append(labels[k])
    pts = np.array(out)
    labs = np.array(lab, dtype=np.int64)
    # remove zero-length edges left by vertices lying on the cutting line
    keep = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1) > tol
    if keep.sum() < 3:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    return pts[keep], labs[keep]


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Delaunay triangulation of a convex domain with its clipped Voronoi dual.

    Faces are stored once per undirected Delaunay edge ``(i, j)`` with
    ``i < j``; only edges whose Voronoi face has positive length inside the
    domain are kept, so ``neighbors(i)`` is the set ``W(i)``.  ``normal[e]``
    points from ``i`` to ``j``.
    """

    nodes: np.ndarray
    boundary: np.ndarray
    triangles: np.ndarray
    domain: np.ndarray
    edges: np.ndarray
    l: np.ndarray
    d: np.ndarray
    midpoint: np.ndarray
    normal: np.ndarray
    V: np.ndarray
    closed: np.ndarray
    cells: tuple = field(repr=False)
    cell_labels: tuple = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.boundary))

    @property
    def unknown_index(self) -> np.ndarray:
        """Map from node index to interior unknown index (``-1`` on the boundary)."""
        out = np.full(self.n_nodes, -1, dtype=np.int64)
        out[self.interior_nodes] = np.arange(self.n_interior)
        return out

    @property
    def measure(self) -> np.ndarray:
        return self.V[self.interior_nodes]

    @property
    def bounding_box(self) -> tuple[float, float]:
        span = self.domain.max(0) - self.domain.min(0)
        return float(span[0]), float(span[1])

    @property
    def interior_closed(self) -> np.ndarray:
        """Interior nodes (node indices) whose Voronoi cell does not touch the boundary."""
        return np.flatnonzero(~self.boundary & self.closed)

    def neighbors(self, i: int) -> np.ndarray:
        e = self.edges
        return np.concatenate([e[e[:, 0] == i, 1], e[e[:, 1] == i, 0]])

    def directed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(i, j, e, sign)`` for both orientations of every face; ``sign`` is +1
        when ``normal[e]`` points from ``i`` to ``j``."""
        E = len(self.edges)
        i = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        j = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        e = np.concatenate([np.arange(E), np.arange(E)])
        sign = np.concatenate([np.ones(E), -np.ones(E)])
        return i, j, e, sign

    def node_function(self, fn) -> np.ndarray:
        """Sample ``fn(x1, x2)`` at every node."""
        return np.broadcast_to(np.asarray(fn(self.nodes[:, 0], self.nodes[:, 1]), dtype=float),
                               (self.n_nodes,)).copy()

    def interior_values(self, fn) -> np.ndarray:
        return self.node_function(fn)[self.interior_nodes]


def _on_boundary(points: np.ndarray, poly: np.ndarray, tol: float) -> np.ndarray:
    m = len(poly)
    dist = np.full(len(points), np.inf)
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        ab = b - a
        t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(points - (a + t[:, None] * ab), axis=1))
    return dist <= tol


def _inside(points: np.ndarray, poly: np.ndarray, tol: float) -> np.ndarray:
    m = len(poly)
    ok = np.ones(len(points), dtype=bool)
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        ab = b - a
        cross = ab[0] * (points[:, 1] - a[1]) - ab[1] * (points[:, 0] - a[0])
        ok &= cross >= -tol * np.linalg.norm(ab)
    return ok


def _assemble(points: np.ndarray, boundary: np.ndarray, tris: np.ndarray, poly: np.ndarray) -> TriMesh:
    diam = float(np.max(poly.max(0) - poly.min(0)))
    tol = 1e-12 * diam
    n = len(points)

    pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        adj[a].append(int(b))
        adj[b].append(int(a))

    cells, cell_labels = [], []
    V = np.zeros(n)
    closed = np.zeros(n, dtype=bool)
    for i in range(n):
        poly_i = poly.copy()
        labs = np.full(len(poly), DOMAIN, dtype=np.int64)
        xi = points[i]
        for j in adj[i]:
            a = points[j] - xi
            c = float(a @ (0.5 * (points[j] + xi)))
            poly_i, labs = clip_halfplane(poly_i, labs, a, c, j, tol)
            if len(poly_i) == 0:
                raise DegenerateGeometryError(f"Voronoi cell of node {i} is empty")
        cells.append(poly_i)
        cell_labels.append(labs)
        V[i] = polygon_area(poly_i)
        lengths = np.linalg.norm(np.roll(poly_i, -1, axis=0) - poly_i, axis=1)
        closed[i] = not np.any((labs == DOMAIN) & (lengths > tol))

    area = polygon_area(poly)
    if abs(V.sum() - area) > 1e-10 * area:
        raise DegenerateGeometryError(f"Voronoi cells cover {V.sum():.15g}, domain area is {area:.15g}")
    tri_area = sum(polygon_area(points[t]) for t in tris)
    if abs(tri_area - area) > 1e-10 * area:
        raise DegenerateGeometryError("triangulation does not cover the domain")

    keep, lvals = [], []
    for a, b in pairs:
        poly_a, labs = cells[a], cell_labels[a]
        lengths = np.linalg.norm(np.roll(poly_a, -1, axis=0) - poly_a, axis=1)
        lab = float(lengths[labs == b].sum())
        if lab > tol:
            keep.append((a, b))
            lvals.append(lab)
    edges = np.array(keep, dtype=np.int64).reshape(-1, 2)
    l = np.array(lvals)
    diff = points[edges[:, 1]] - points[edges[:, 0]]
    d = np.linalg.norm(diff, axis=1)
    for arr in (points, boundary, tris, poly, edges, l, d, V, closed):
        arr.setflags(write=False)
    normal = diff / d[:, None]
    midpoint = 0.5 * (points[edges[:, 0]] + points[edges[:, 1]])
    normal.setflags(write=False)
    midpoint.setflags(write=False)
    return TriMesh(points, boundary, tris, poly, edges, l, d, midpoint, normal, V, closed, tuple(cells),
                   tuple(cell_labels))


def build_mesh(points, domain) -> TriMesh:
    """Delaunay mesh of ``points`` with Voronoi cells clipped to the convex ``domain``.

    Points on the domain boundary become boundary (Dirichlet) nodes.  The
    polygon vertices must be part of the point set.
    """
    pts = np.array(points, dtype=float)
    poly = _as_convex_polygon(domain)
    diam = float(np.max(poly.max(0) - poly.min(0)))
    tol = 1e-12 * diam
    tris = triangulate(pts)
    if not np.all(_inside(pts, poly, tol)):
        raise MeshInputError("every point must lie in the closed domain")
    have = {tuple(p) for p in pts}
    if any(tuple(v) not in have for v in poly):
        raise MeshInputError("domain vertices must be included in the point set")
    check_quality(pts, tris)
    return _assemble(pts, _on_boundary(pts, poly, tol), tris, poly)


def rectangle(l1: float = 1.0, l2: float = 1.0) -> np.ndarray:
    return np.array([[0.0, 0.0], [l1, 0.0], [l1, l2], [0.0, l2]])


def random_mesh(n_side: int, seed: int | np.random.Generator | None = 0, l1: float = 1.0, l2: float = 1.0,
                jitter: float = 0.3) -> TriMesh:
    """Jittered-lattice mesh of the rectangle ``[0,l1] x [0,l2]``.

    ``n_side + 1`` equally spaced nodes lie on each side; the ``(n_side - 1)^2``
    interior lattice nodes are displaced by up to ``jitter`` cell widths.
    """
    if n_side < 2:
        raise MeshInputError("n_side must be at least 2")
    if not 0 <= jitter < 0.5:
        raise MeshInputError("jitter must lie in [0, 0.5)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, n_side + 1)
    bnd = [(x, 0.0) for x in s] + [(x, 1.0) for x in s] + [(0.0, y) for y in s[1:-1]] + [(1.0, y) for y in s[1:-1]]
    g = s[1:-1]
    X, Y = np.meshgrid(g, g, indexing="ij")
    inner = np.column_stack([X.ravel(), Y.ravel()])
    inner = inner + rng.uniform(-jitter, jitter, size=inner.shape) / n_side
    pts = np.vstack([np.array(bnd), inner]) * np.array([l1, l2])
    return build_mesh(pts, rectangle(l1, l2))


def write_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Plain-text mesh file: header, node lines ``x y flag``, triangle lines ``i j k``."""
    lines = [f"nodes {mesh.n_nodes} triangles {len(mesh.triangles)}"]
    lines += [f"{x!r} {y!r} {int(b)}" for (x, y), b in zip(mesh.nodes.tolist(), mesh.boundary)]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> TriMesh:
    """Read a mesh file; the domain is the convex hull of the nodes.

    The triangulation is validated (orientation, quality, empty circumcircles)
    and the Voronoi dual is rebuilt from it.
    """
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    if not rows:
        raise MeshInputError(f"{path}: empty mesh file")
    head = rows[0]
    if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
        raise MeshInputError(f"{path}: header must read 'nodes <N> triangles <T>'")
    try:
        n, t = int(head[1]), int(head[3])
    except ValueError as exc:
        raise MeshInputError(f"{path}: bad counts in header") from exc
    if len(rows) != 1 + n + t:
        raise MeshInputError(f"{path}: expected {n} node and {t} triangle lines, found {len(rows) - 1} lines")
    try:
        node_rows = [(float(r[0]), float(r[1]), int(r[2])) for r in rows[1:1 + n] if len(r) == 3 or _bad(r)]
        tri_rows = [tuple(int(v) for v in r) for r in rows[1 + n:] if len(r) == 3 or _bad(r)]
    except ValueError as exc:
        raise MeshInputError(f"{path}: {exc}") from exc
    pts = np.array([r[:2] for r in node_rows])
    flags = np.array([r[2] for r in node_rows])
    if not np.all(np.isin(flags, (0, 1))):
        raise MeshInputError(f"{path}: boundary flags must be 0 or 1")
    tris = np.array(tri_rows, dtype=np.int64).reshape(-1, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise MeshInputError(f"{path}: triangle index out of range")
    if len(np.unique(pts, axis=0)) != n:
        raise MeshInputError(f"{path}: duplicate nodes")
    for k, tri in enumerate(tris):
        o = orient(*pts[tri])
        if o == 0:
            raise DegenerateGeometryError(f"{path}: triangle {k} is degenerate")
        if o < 0:
            tris[k] = tri[[0, 2, 1]]
    check_quality(pts, tris)
    bad = delaunay_violations(pts, tris)
    if bad:
        raise MeshInputError(f"{path}: triangle {bad[0][0]} violates the empty-circumcircle property")
    poly = convex_hull(pts)
    return _assemble(pts, flags.astype(bool), tris, poly)


def _bad(row) -> bool:
    raise ValueError(f"malformed line {' '.join(row)!r}")
