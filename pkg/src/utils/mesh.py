"""Wavefront OBJ export of the band grid.

Vertices are the grid nodes in row-major (s, theta) order, so there are
n_s * n_theta of them, projected from R^5 to R^3:

    drop0   (x1, x2, x3) = (y cos t, y sin t, z cos 2t)
    stereo  stereographic projection from -e0 onto the hyperplane x0 = 0,
            then the last coordinate dropped

Faces are quads of neighbouring nodes split into two triangles; columns close
periodically in theta. The grid covers the fundamental domain [0, s_r] only.
The rest of the cylinder is its image under (s, t) -> (-s, t + pi), so no
faces are needed for it. Row 0 is the core circle traversed twice: vertices j
and j + n_theta/2 of that row coincide, and the Moebius seam is exactly there.
Vertices are not merged. The mesh may self-intersect.
"""
import logging

import numpy as np

logger = logging.getLogger(__name__)

PROJECTIONS = ('drop0', 'stereo')


def project(nodes, projection='drop0'):
    nodes = np.asarray(nodes, dtype=float)
    if projection == 'drop0':
        return nodes[..., 1:4]
    if projection == 'stereo':
        # the cap stays away from -e0, so 1 + x0 > 0
        scale = 1.0 / (1.0 + nodes[..., 0:1])
        return (nodes[..., 1:] * scale)[..., :3]
    raise ValueError(f"unknown projection {projection!r}; expected one of {PROJECTIONS}")


def triangles(n_s, n_theta):
    """Zero-based vertex triples; vertex (i, j) has index i * n_theta + j."""
    faces = []
    for i in range(n_s - 1):
        for j in range(n_theta):
            a = i * n_theta + j
            b = i * n_theta + (j + 1) % n_theta
            c = (i + 1) * n_theta + (j + 1) % n_theta
            d = (i + 1) * n_theta + j
            faces.append((a, b, c))
            faces.append((a, c, d))
    return faces


def write_obj(grid, path, projection='drop0'):
    vertices = project(grid.nodes, projection).reshape(-1, 3)
    faces = triangles(grid.n_s, grid.n_theta)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write("# capband Moebius band, fundamental domain [0, s_r] x [0, 2pi)\n")
        f.write(f"# r {grid.cap_radius!r} s_r {grid.s_r!r} n_s {grid.n_s} n_theta {grid.n_theta}\n")
        f.write(f"# projection {projection}; row 0 is the doubly covered core circle\n")
        for v in vertices:
            f.write("v {!r} {!r} {!r}\n".format(*(float(c) for c in v)))
        for a, b, c in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")
    logger.info("wrote %d vertices and %d faces to %s", len(vertices), len(faces), path)
    return len(vertices), len(faces)
