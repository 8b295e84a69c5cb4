"""Independent reference implementations used as test oracles.

Everything here is written node by node with plain loops, sharing no code
with the package, so that agreement with the vectorized assembly is a
meaningful check.
"""

import math

import numpy as np

from cdlab.core_grid import Grid1D


def _layout(grid):
    if isinstance(grid, Grid1D):
        hs, Ns = (grid.h,), (grid.N,)
    else:
        hs, Ns = (grid.h1, grid.h2), (grid.N1, grid.N2)
    interior = [range(1, N) for N in Ns]
    if len(Ns) == 1:
        nodes = [(i,) for i in interior[0]]
    else:
        nodes = [(i, j) for i in interior[0] for j in interior[1]]
    index = {node: n for n, node in enumerate(nodes)}
    return hs, Ns, nodes, index


def _point(node, hs, alpha=None, shift=0.0):
    x = [i * h for i, h in zip(node, hs)]
    if alpha is not None:
        x[alpha] += shift * hs[alpha]
    return x


def _neighbour(node, alpha, step):
    nb = list(node)
    nb[alpha] += step
    return tuple(nb)


def diffusion_matrix(grid, k):
    """``-(k(x - h/2) y_xbar)_x`` summed over directions, zero Dirichlet closure."""
    hs, Ns, nodes, index = _layout(grid)
    A = np.zeros((len(nodes), len(nodes)))
    for node in nodes:
        r = index[node]
        for a, h in enumerate(hs):
            km = k(*_point(node, hs, a, -0.5))
            kp = k(*_point(node, hs, a, +0.5))
            A[r, r] += (km + kp) / h**2
            for step, kk in ((-1, km), (+1, kp)):
                nb = _neighbour(node, a, step)
                if nb in index:
                    A[r, index[nb]] -= kk / h**2
    return A


def convection_matrix(grid, v, form, staggered=False):
    """Central convection in ``form`` ("nondivergent", "divergent", "skew"); ``v(*x)`` returns components."""
    hs, Ns, nodes, index = _layout(grid)
    n = len(nodes)
    C1, C2 = np.zeros((n, n)), np.zeros((n, n))
    for node in nodes:
        r = index[node]
        for a, h in enumerate(hs):
            if not staggered:
                b = v(*_point(node, hs))[a]
                for step in (-1, 1):
                    nb = _neighbour(node, a, step)
                    if nb in index:
                        C1[r, index[nb]] += step * b / (2 * h)
                        C2[r, index[nb]] += step * v(*_point(nb, hs))[a] / (2 * h)
            else:
                bm = v(*_point(node, hs, a, -0.5))[a]
                bp = v(*_point(node, hs, a, +0.5))[a]
                # C1: average of one-sided differences weighted by face velocities
                C1[r, r] += (bm - bp) / (2 * h)
                C2[r, r] += (bp - bm) / (2 * h)
                for step, bb in ((-1, bm), (1, bp)):
                    nb = _neighbour(node, a, step)
                    if nb in index:
                        C1[r, index[nb]] += step * bb / (2 * h)
                        C2[r, index[nb]] += step * bb / (2 * h)
    if form == "nondivergent":
        return C1
    if form == "divergent":
        return C2
    return 0.5 * (C1 + C2)


def upwind_matrix(grid, v, form):
    """First-order upwind with face velocities ``b(x +- h/2)``."""
    hs, Ns, nodes, index = _layout(grid)
    n = len(nodes)
    A = np.zeros((n, n))
    for node in nodes:
        r = index[node]
        for a, h in enumerate(hs):
            bm = v(*_point(node, hs, a, -0.5))[a]
            bp = v(*_point(node, hs, a, +0.5))[a]
            if form == "nondivergent":
                # b y_x with the difference taken against the flow
                A[r, r] += (max(bm, 0.0) - min(bp, 0.0)) / h
            else:
                # flux difference of the upwinded face fluxes
                A[r, r] += (max(bp, 0.0) - min(bm, 0.0)) / h
            lo, hi = _neighbour(node, a, -1), _neighbour(node, a, 1)
            if lo in index:
                A[r, index[lo]] -= max(bm, 0.0) / h
            if hi in index:
                A[r, index[hi]] += min(bp, 0.0) / h
    return A


def exponential_matrix_1d(grid, k, v, form):
    """Exponentially fitted three-point operator on a 1D grid, written from the stencil formulas."""
    h, N = grid.h, grid.N
    n = N - 1
    A = np.zeros((n, n))
    theta = [v(i * h) / (2 * k(i * h)) for i in range(N + 1)]
    for r, i in enumerate(range(1, N)):
        km, kp = k((i - 0.5) * h) / h**2, k((i + 0.5) * h) / h**2
        th = theta[i] * h
        if form == "nondivergent":
            A[r, r] = kp * math.exp(-th) + km * math.exp(th)
            lo, hi = -km * math.exp(th), -kp * math.exp(-th)
        else:
            A[r, r] = kp * math.exp(th) + km * math.exp(-th)
            lo, hi = -km * math.exp(theta[i - 1] * h), -kp * math.exp(-theta[i + 1] * h)
        if r > 0:
            A[r, r - 1] = lo
        if r < n - 1:
            A[r, r + 1] = hi
    return A


def exponential_matrix(grid, k, v, form):
    """Exponentially fitted operator on any tensor grid, one direction at a time.

    ``v(*x)`` returns the velocity components; ``theta_a = v_a / (2k)`` is taken
    at the node for the nondivergent form and at the neighbours for the divergent one.
    """
    hs, Ns, nodes, index = _layout(grid)
    A = np.zeros((len(nodes), len(nodes)))

    def theta_h(node, a):
        x = _point(node, hs)
        return v(*x)[a] / (2 * k(*x)) * hs[a]

    for node in nodes:
        r = index[node]
        for a, h in enumerate(hs):
            km = k(*_point(node, hs, a, -0.5)) / h**2
            kp = k(*_point(node, hs, a, +0.5)) / h**2
            th = theta_h(node, a)
            lo, hi = _neighbour(node, a, -1), _neighbour(node, a, 1)
            if form == "nondivergent":
                A[r, r] += kp * math.exp(-th) + km * math.exp(th)
                w_lo, w_hi = -km * math.exp(th), -kp * math.exp(-th)
            else:
                A[r, r] += kp * math.exp(th) + km * math.exp(-th)
                w_lo, w_hi = -km * math.exp(theta_h(lo, a)), -kp * math.exp(-theta_h(hi, a))
            if lo in index:
                A[r, index[lo]] += w_lo
            if hi in index:
                A[r, index[hi]] += w_hi
    return A


def fvm_matrices(mesh, k, v):
    """Diffusion, central ``C1``/``C2``/``C0`` and upwind nondivergent/divergent
    operators on a Voronoi mesh, face by face.

    Only the raw face data (``l``, ``d``, midpoint, unit normal, ``V``) are taken
    from the mesh; ``k(x1, x2)`` and ``v(x1, x2)`` are evaluated here.
    """
    inner = [int(i) for i in mesh.interior_nodes]
    index = {node: n for n, node in enumerate(inner)}
    n = len(inner)
    names = ("D", "C1", "C2", "C0", "U1", "U2")
    out = {name: np.zeros((n, n)) for name in names}
    for e, (a, b) in enumerate(mesh.edges.tolist()):
        x = mesh.midpoint[e]
        vel = v(x[0], x[1])
        bn = float(vel[0] * mesh.normal[e, 0] + vel[1] * mesh.normal[e, 1])
        kk = float(k(x[0], x[1]))
        l, d = float(mesh.l[e]), float(mesh.d[e])
        for i, j, bij in ((a, b, bn), (b, a, -bn)):
            if i not in index:
                continue
            r = index[i]
            Vi = float(mesh.V[i])
            bp, bm = max(bij, 0.0), min(bij, 0.0)
            # (row entry on i, row entry on j) per operator
            terms = {
                "D": (l * kk / d, -l * kk / d),
                "C1": (-0.5 * l * bij, 0.5 * l * bij),
                "C2": (0.5 * l * bij, 0.5 * l * bij),
                "C0": (0.0, 0.5 * l * bij),
                "U1": (-l * bm, l * bm),
                "U2": (l * bp, l * bm),
            }
            for name, (wi, wj) in terms.items():
                out[name][r, r] += wi / Vi
                if j in index:
                    out[name][r, index[j]] += wj / Vi
    return out


def thomas(sub, diag, sup, rhs):
    """Textbook Thomas algorithm for a single system."""
    n = len(diag)
    c, d = [0.0] * n, [0.0] * n
    c[0], d[0] = sup[0] / diag[0], rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - sub[i] * c[i - 1]
        c[i] = sup[i] / m if i < n - 1 else 0.0
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m
    x = [0.0] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return np.array(x)


def max_rel_diff(A, B):
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    B = B.toarray() if hasattr(B, "toarray") else np.asarray(B)
    return float(np.max(np.abs(A - B)) / max(np.max(np.abs(B)), 1e-300))


def circumcircle_intruders(nodes, triangles):
    """(triangle, node) pairs with the node strictly inside the circumcircle, by circumcentre distance."""
    bad = []
    for t, (a, b, c) in enumerate(triangles):
        (ax, ay), (bx, by), (cx, cy) = nodes[a], nodes[b], nodes[c]
        d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
        r = math.hypot(ax - ux, ay - uy)
        for p, (px, py) in enumerate(nodes):
            if p not in (a, b, c) and math.hypot(px - ux, py - uy) < r * (1 - 1e-9):
                bad.append((t, p))
    return bad
