"""Independent reference values for the spectrum tests.

Builds the same geometries as the C++ generators with numpy only, assembles the cotangent
stiffness and barycentric masses, and solves the generalized problem with scipy's dense solver.
The printed numbers are frozen into tests/laplace_spectrum_test.cpp.
"""

import numpy as np
import scipy.linalg


def icosphere(level):
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return np.array(verts), np.array(f)


def square_grid(n):
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([(x, y, 0.0) for y in xs for x in xs])
    faces = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 1, a + n + 2
            faces += [(a, b, d), (a, d, c)]
    return verts, np.array(faces)


def operators(verts, faces):
    n = len(verts)
    W = np.zeros((n, n))
    m = np.zeros(n)
    for tri in faces:
        p = verts[tri]
        area = 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
        m[tri] += area / 3.0
        for k in range(3):
            i, j, o = tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]
            u, w = verts[i] - verts[o], verts[j] - verts[o]
            cot = np.dot(u, w) / np.linalg.norm(np.cross(u, w))
            W[i, j] -= 0.5 * cot
            W[j, i] -= 0.5 * cot
    W -= np.diag(W.sum(axis=1))
    return W, m


def lowest(verts, faces, count):
    W, m = operators(verts, faces)
    vals = scipy.linalg.eigh(W, np.diag(m), eigvals_only=True, subset_by_index=[0, count])
    return vals, m.sum()


if __name__ == "__main__":
    vals, area = lowest(*icosphere(3), 15)
    print("icosphere level 3 area", repr(area))
    print("icosphere level 3 eigenvalues", [repr(x) for x in vals])
    vals, area = lowest(*square_grid(16), 8)
    print("square grid 16 eigenvalues", [repr(x) for x in vals])
