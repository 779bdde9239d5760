"""
Built-in triangulations used by the experiments and tests
"""
from typing import Dict, List, Tuple

import numpy as np

from vfhodge.mesh import SimplicialComplex


def single_triangle() -> SimplicialComplex:
    return SimplicialComplex.from_triangles([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def triangle_pair() -> SimplicialComplex:
    """
    Unit square split along its anti-diagonal
    """
    vertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    return SimplicialComplex.from_triangles(vertices, [[0, 1, 2], [1, 3, 2]])


def octahedron() -> SimplicialComplex:
    vertices = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
    triangles = [
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ]
    return SimplicialComplex.from_triangles(vertices, triangles)


def sphere(subdivisions: int = 1) -> SimplicialComplex:
    """
    Unit sphere by midpoint subdivision of the octahedron
    :param subdivisions: number of 1-to-4 refinements
    :return: SimplicialComplex
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be non-negative")
    base = octahedron()
    vertices: List[np.ndarray] = list(base.vertices)
    triangles = base.triangles.tolist()
    for _ in range(subdivisions):
        midpoints: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                p = vertices[i] + vertices[j]
                vertices.append(p / np.linalg.norm(p))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in triangles:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        triangles = refined
    return SimplicialComplex.from_triangles(np.array(vertices), triangles)


def _grid_triangles(nx: int, ny: int, index) -> List[List[int]]:
    triangles = []
    for j in range(ny):
        for i in range(nx):
            a, b = index(i, j), index(i + 1, j)
            c, d = index(i + 1, j + 1), index(i, j + 1)
            triangles += [[a, b, c], [a, c, d]]
    return triangles


def flat_torus(n: int = 8, length: float = 2 * np.pi) -> SimplicialComplex:
    """
    Periodic n x n grid of right triangles on [0, length)^2
    """
    if n < 3:
        raise ValueError(f"flat torus needs at least 3 cells per side, got {n}")
    h = length / n
    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    vertices = np.stack([ii.ravel() * h, jj.ravel() * h], axis=1)
    triangles = _grid_triangles(n, n, lambda i, j: (i % n) + n * (j % n))
    return SimplicialComplex.from_triangles(vertices, triangles, periods=(length, length))


def rectangle(nx: int = 4, ny: int = 4, lx: float = 1.0, ly: float = 1.0) -> SimplicialComplex:
    if nx < 1 or ny < 1:
        raise ValueError("rectangle needs at least one cell per side")
    jj, ii = np.meshgrid(np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    vertices = np.stack([ii.ravel() * lx / nx, jj.ravel() * ly / ny], axis=1)
    triangles = _grid_triangles(nx, ny, lambda i, j: i + (nx + 1) * j)
    return SimplicialComplex.from_triangles(vertices, triangles)


def torus3d(
    n_major: int = 12, n_minor: int = 8, major: float = 2.0, minor: float = 0.75
) -> SimplicialComplex:
    """
    Torus of revolution about the z axis embedded in R^3
    """
    if n_major < 3 or n_minor < 3:
        raise ValueError("torus needs at least 3 segments in each direction")
    theta = 2 * np.pi * np.arange(n_major) / n_major
    phi = 2 * np.pi * np.arange(n_minor) / n_minor
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ring = major + minor * np.cos(pp)
    vertices = np.stack(
        [(ring * np.cos(tt)).ravel(), (ring * np.sin(tt)).ravel(), (minor * np.sin(pp)).ravel()],
        axis=1,
    )
    triangles = _grid_triangles(
        n_major, n_minor, lambda i, j: (i % n_major) * n_minor + (j % n_minor)
    )
    return SimplicialComplex.from_triangles(vertices, triangles)


def _rings(radii: np.ndarray, sectors: int) -> np.ndarray:
    angle = 2 * np.pi * np.arange(sectors) / sectors
    return np.concatenate([np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1) for r in radii])


def disk(rings: int = 3, sectors: int = 12, radius: float = 1.0) -> SimplicialComplex:
    """
    Polar triangulation of a disk: a center vertex fanned to the first ring
    """
    if rings < 1 or sectors < 3:
        raise ValueError("disk needs at least one ring and three sectors")
    radii = radius * np.arange(1, rings + 1) / rings
    vertices = np.vstack([np.zeros((1, 2)), _rings(radii, sectors)])

    def index(r: int, j: int) -> int:
        return 1 + r * sectors + (j % sectors)

    triangles = [[0, index(0, j), index(0, j + 1)] for j in range(sectors)]
    for r in range(rings - 1):
        for j in range(sectors):
            a, b = index(r, j), index(r + 1, j)
            c, d = index(r + 1, j + 1), index(r, j + 1)
            triangles += [[a, b, c], [a, c, d]]
    return SimplicialComplex.from_triangles(vertices, triangles)


def annulus(
    rings: int = 2, sectors: int = 16, inner: float = 1.0, outer: float = 2.0
) -> SimplicialComplex:
    """
    Polar triangulation of {inner <= |x| <= outer} with rings + 1 vertex circles
    """
    if rings < 1 or sectors < 3:
        raise ValueError("annulus needs at least one ring and three sectors")
    if not 0 < inner < outer:
        raise ValueError("annulus radii must satisfy 0 < inner < outer")
    radii = inner + (outer - inner) * np.arange(rings + 1) / rings
    vertices = _rings(radii, sectors)
    triangles = _grid_triangles(sectors, rings, lambda j, r: r * sectors + (j % sectors))
    return SimplicialComplex.from_triangles(vertices, triangles)


def mobius(segments: int = 12, width: float = 0.5) -> SimplicialComplex:
    """
    Moebius strip; construction fails with the orientability error
    """
    if segments < 3:
        raise ValueError("strip needs at least 3 segments")
    theta = 2 * np.pi * np.arange(segments) / segments
    vertices = []
    for t in theta:
        for s in (-0.5 * width, 0.5 * width):
            radius = 1.0 + s * np.cos(t / 2)
            vertices.append([radius * np.cos(t), radius * np.sin(t), s * np.sin(t / 2)])

    triangles = []
    for i in range(segments):
        a, d = 2 * i, 2 * i + 1
        if i + 1 < segments:
            b, c = 2 * (i + 1), 2 * (i + 1) + 1
        else:
            b, c = 1, 0
        triangles += [[a, b, c], [a, c, d]]
    return SimplicialComplex.from_triangles(vertices, triangles)


GENERATORS = {
    "triangle": single_triangle,
    "triangle_pair": triangle_pair,
    "octahedron": octahedron,
    "sphere": sphere,
    "flat_torus": flat_torus,
    "torus3d": torus3d,
    "rectangle": rectangle,
    "disk": disk,
    "annulus": annulus,
    "mobius": mobius,
}


def builtin(name: str, **params) -> SimplicialComplex:
    if name not in GENERATORS:
        raise ValueError(f"Mesh {name} not found")
    return GENERATORS[name](**params)
