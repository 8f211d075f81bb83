"""Reference computations that share no code with the package.

The disk distance is recomputed as a shortest path in the visibility graph
of a fine inscribed polygon, using scipy's Dijkstra.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


def _clear_from_vertex(v, prev, nxt, p):
    # convex polygon: [v, p] enters the interior iff p - v lies strictly in the interior cone at v
    a, b, w = prev - v, nxt - v, p - v
    M = np.array([[a[0], b[0]], [a[1], b[1]]])
    s, t = np.linalg.solve(M, w)
    return not (s > 1e-12 and t > 1e-12)


def _segment_clear(c, R, p, q):
    d = q - p
    t = np.clip(np.dot(c - p, d) / np.dot(d, d), 0.0, 1.0)
    return np.linalg.norm(p + t * d - c) >= R


def polygon_distance(center, R, k0, x, n=8192):
    """Length of the shortest path from ``x`` to ``k0`` around the disk."""
    c = np.asarray(center, float)
    k0 = np.asarray(k0, float)
    x = np.asarray(x, float)
    if _segment_clear(c, R, x, k0):
        return float(np.linalg.norm(x - k0))
    th = 2 * np.pi * np.arange(n) / n
    V = c + R * np.stack([np.cos(th), np.sin(th)], axis=1)
    rows, cols, w = [], [], []
    for i in range(n):
        j = (i + 1) % n
        rows.append(i)
        cols.append(j)
        w.append(np.linalg.norm(V[i] - V[j]))
    for node, p in ((n, x), (n + 1, k0)):
        for i in range(n):
            if _clear_from_vertex(V[i], V[i - 1], V[(i + 1) % n], p):
                rows.append(node)
                cols.append(i)
                w.append(np.linalg.norm(V[i] - p))
    G = coo_matrix((w, (rows, cols)), shape=(n + 2, n + 2)).tocsr()
    dist = dijkstra(G, directed=False, indices=n)
    return float(dist[n + 1])


def involute_points(R, r):
    r = np.asarray(r, float)
    return R * np.stack([np.cos(r) + r * np.sin(r), np.sin(r) - r * np.cos(r)], axis=-1)


def polyline_curvature(P):
    """Menger curvature of consecutive triples."""
    a = np.linalg.norm(P[1:-1] - P[:-2], axis=1)
    b = np.linalg.norm(P[2:] - P[1:-1], axis=1)
    c = np.linalg.norm(P[2:] - P[:-2], axis=1)
    u, v = P[1:-1] - P[:-2], P[2:] - P[1:-1]
    cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    return 2 * cross / (a * b * c)
