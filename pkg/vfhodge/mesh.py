"""
Oriented triangle meshes as simplicial complexes: skeletons, signed
incidence matrices, boundary loops, tangent fields and file formats.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import meshio
import numpy as np
from scipy import sparse

LOCAL_EDGES = ((0, 1), (0, 2), (1, 2))
FIELD_KINDS = ("constant", "rotational", "radial", "gradient", "explicit", "random")


def _skeleton(triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Derive the edge list and the triangle/edge orientation signs
    :param triangles: F x 3 vertex indices, oriented by their order
    :return: edges (E x 2, sorted pairs, lexicographic), triangle_edges (F x 3
        edge index of local pairs (0,1),(0,2),(1,2)), signs (F x 3)
    """
    local = triangles[:, LOCAL_EDGES]
    pairs = np.sort(local, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    triangle_edges = np.asarray(inverse).reshape(len(triangles), 3)

    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    # boundary of (a, b, c) runs a->b, b->c, c->a; stored edges run low->high
    signs = np.stack(
        [np.where(a < b, 1, -1), np.where(c < a, 1, -1), np.where(b < c, 1, -1)], axis=1
    )
    return edges.astype(int), triangle_edges.astype(int), signs.astype(int)


def _incidence(
    n_vertices: int, edges: np.ndarray, triangle_edges: np.ndarray, signs: np.ndarray
) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    n_edges, n_triangles = len(edges), len(triangle_edges)
    rows = np.repeat(np.arange(n_edges), 2)
    data = np.tile([-1, 1], n_edges)
    d0 = sparse.csr_matrix(
        (data, (rows, edges.ravel())), shape=(n_edges, n_vertices), dtype=np.int64
    )
    d1 = sparse.csr_matrix(
        (signs.ravel(), (np.repeat(np.arange(n_triangles), 3), triangle_edges.ravel())),
        shape=(n_triangles, n_edges),
        dtype=np.int64,
    )
    return d0, d1


@dataclass(frozen=True)
class TriangleFrames:
    """
    Per-triangle geometry: edge vectors from the first vertex, their Gram
    matrix, area and unit normal (3D ambient only)
    """

    edges: np.ndarray
    metric: np.ndarray
    area: np.ndarray
    normals: Optional[np.ndarray]


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """
    Oriented triangle mesh with its skeletons and signed incidence matrices.
    Flat periodic meshes carry the lengths of their periods; their edge
    vectors are taken as minimum images.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    triangle_signs: np.ndarray
    d0: sparse.csr_matrix
    d1: sparse.csr_matrix
    boundary_edges: np.ndarray
    boundary_vertices: np.ndarray
    periods: Optional[np.ndarray] = None

    @classmethod
    def from_triangles(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        periods: Optional[Sequence[float]] = None,
    ) -> "SimplicialComplex":
        """
        Build and validate a complex
        :param vertices: V x d positions, d in (2, 3)
        :param triangles: F x 3 vertex indices
        :param periods: lengths of the periodic identification (flat tori)
        :return: SimplicialComplex
        """
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=int).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise ValueError(f"vertices must be V x 2 or V x 3, got {vertices.shape}")
        if len(triangles) == 0:
            raise ValueError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise ValueError("triangle references a missing vertex")
        if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(
            triangles[:, 1] == triangles[:, 2]
        ) or np.any(triangles[:, 0] == triangles[:, 2]):
            raise ValueError("triangle repeats a vertex")

        edges, triangle_edges, signs = _skeleton(triangles)
        d0, d1 = _incidence(len(vertices), edges, triangle_edges, signs)

        counts = np.bincount(triangle_edges.ravel(), minlength=len(edges))
        if np.any(counts > 2):
            bad = edges[np.argmax(counts > 2)]
            raise ValueError(f"edge {tuple(bad)} belongs to more than two triangles")
        orientation = np.asarray(d1.sum(axis=0)).ravel()
        if np.any((counts == 2) & (orientation != 0)):
            raise ValueError("mesh not orientable")

        boundary_edges = np.flatnonzero(counts == 1)
        boundary_vertices = np.unique(edges[boundary_edges].ravel())
        if periods is not None:
            periods = np.array(periods, dtype=float)
            if periods.shape != (vertices.shape[1],):
                raise ValueError("one period per ambient coordinate is required")

        return cls(
            vertices=vertices,
            triangles=triangles,
            edges=edges,
            triangle_edges=triangle_edges,
            triangle_signs=signs,
            d0=d0,
            d1=d1,
            boundary_edges=boundary_edges,
            boundary_vertices=boundary_vertices,
            periods=periods,
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    def count(self, k: int) -> int:
        if k < 0 or k > 2:
            return 0
        return (self.n_vertices, self.n_edges, self.n_triangles)[k]

    def incidence(self, k: int) -> sparse.csr_matrix:
        """
        Discrete exterior derivative from k- to (k+1)-cochains as a float matrix
        """
        if k == 0:
            return self.d0.astype(float)
        if k == 1:
            return self.d1.astype(float)
        raise ValueError(f"no incidence matrix from degree {k}")

    def interior_simplices(self, k: int) -> np.ndarray:
        """
        Indices of k-simplices not contained in the boundary
        """
        if k == 0:
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[self.boundary_vertices] = False
            return np.flatnonzero(mask)
        if k == 1:
            mask = np.ones(self.n_edges, dtype=bool)
            mask[self.boundary_edges] = False
            return np.flatnonzero(mask)
        return np.arange(self.count(k))

    def displacement(self, start: np.ndarray, end: np.ndarray) -> np.ndarray:
        """
        Vectors from vertices start to vertices end (minimum image on periodic meshes)
        """
        vec = self.vertices[end] - self.vertices[start]
        if self.periods is not None:
            vec = vec - self.periods * np.round(vec / self.periods)
        return vec

    def edge_vectors(self) -> np.ndarray:
        return self.displacement(self.edges[:, 0], self.edges[:, 1])

    def triangle_frames(self) -> TriangleFrames:
        tri = self.triangles
        e1 = self.displacement(tri[:, 0], tri[:, 1])
        e2 = self.displacement(tri[:, 0], tri[:, 2])
        edges = np.stack([e1, e2], axis=1)
        metric = np.einsum("fid,fjd->fij", edges, edges)
        metric = 0.5 * (metric + np.transpose(metric, (0, 2, 1)))
        area = triangle_areas(edges)
        normals = None
        if self.ambient_dim == 3:
            cross = np.cross(e1, e2)
            length = np.linalg.norm(cross, axis=1, keepdims=True)
            normals = cross / np.where(length > 0, length, 1.0)
        return TriangleFrames(edges=edges, metric=metric, area=area, normals=normals)

    def barycenters(self) -> np.ndarray:
        frames = self.triangle_frames()
        return self.vertices[self.triangles[:, 0]] + frames.edges.sum(axis=1) / 3.0

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "SimplicialComplex":
        """
        Image of the complex under the rigid motion x -> R x + t
        """
        vertices = self.vertices @ np.asarray(rotation, dtype=float).T + np.asarray(
            translation, dtype=float
        )
        return replace(self, vertices=vertices)


def triangle_areas(edges: np.ndarray) -> np.ndarray:
    """
    Areas from the cross product of the two edge vectors of each triangle
    :param edges: F x 2 x d, d in (2, 3)
    """
    a, b = edges[:, 0], edges[:, 1]
    if edges.shape[-1] == 2:
        return 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


def build_incidence(complex: SimplicialComplex) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """
    Signed incidence matrices D0 (vertices -> edges) and D1 (edges -> triangles).
    The row of D0 for edge (i, j), i < j, has -1 at i and +1 at j; D1 carries
    the sign of each edge in the oriented boundary of its triangles.
    """
    return _incidence(
        complex.n_vertices, complex.edges, complex.triangle_edges, complex.triangle_signs
    )


@dataclass(frozen=True)
class BoundaryComplex:
    """
    Boundary polylines with trace maps into the global numbering:
    vertices[i] / edges[i] are global indices of the i-th boundary vertex / edge
    """

    vertices: np.ndarray
    edges: np.ndarray
    loops: List[np.ndarray]
    edge_loops: List[np.ndarray]

    @property
    def n_loops(self) -> int:
        return len(self.loops)


def boundary_extract(complex: SimplicialComplex) -> BoundaryComplex:
    """
    Split the boundary into closed polylines oriented as induced by the triangles
    :param complex: SimplicialComplex
    :return: BoundaryComplex
    """
    b_edges = complex.boundary_edges
    if len(b_edges) == 0:
        return BoundaryComplex(
            vertices=np.zeros(0, dtype=int), edges=b_edges, loops=[], edge_loops=[]
        )

    signs = np.asarray(complex.d1[:, b_edges].sum(axis=0)).ravel()
    ends = complex.edges[b_edges]
    start = np.where(signs > 0, ends[:, 0], ends[:, 1])
    stop = np.where(signs > 0, ends[:, 1], ends[:, 0])

    outgoing: Dict[int, int] = {}
    for pos, vertex in enumerate(start):
        if vertex in outgoing:
            raise ValueError(
                f"boundary is not a disjoint union of closed polylines at vertex {vertex}"
            )
        outgoing[int(vertex)] = pos

    visited = np.zeros(len(b_edges), dtype=bool)
    loops, edge_loops = [], []
    for first in range(len(b_edges)):
        if visited[first]:
            continue
        loop, edge_loop = [], []
        pos = first
        while not visited[pos]:
            visited[pos] = True
            loop.append(int(start[pos]))
            edge_loop.append(int(b_edges[pos]))
            nxt = outgoing.get(int(stop[pos]))
            if nxt is None:
                raise ValueError("boundary polyline is not closed")
            pos = nxt
        loops.append(np.array(loop))
        edge_loops.append(np.array(edge_loop))

    return BoundaryComplex(
        vertices=complex.boundary_vertices, edges=b_edges, loops=loops, edge_loops=edge_loops
    )


# Parsers


def _strip(text: str) -> List[Tuple[int, List[str]]]:
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            records.append((number, line.split()))
    return records


def _check_face(number: int, face: List[int], n_vertices: int) -> None:
    if len(face) != 3:
        raise ValueError(f"unsupported face arity {len(face)} on line {number}")
    for idx in face:
        if idx < 0 or idx >= n_vertices:
            raise ValueError(f"line {number}: vertex index {idx} out of range")


def _planar(vertices: np.ndarray) -> np.ndarray:
    if vertices.shape[1] == 3 and np.all(vertices[:, 2] == 0):
        return vertices[:, :2]
    return vertices


def parse_off(text: str) -> SimplicialComplex:
    """
    ASCII OFF with triangular faces. Meshes lying in the plane z = 0 are
    stored with 2D coordinates.
    """
    records = _strip(text)
    if not records or not records[0][1][0].upper().endswith("OFF"):
        raise ValueError("line 1: missing OFF header")
    header = records[0][1][1:]
    pos = 1
    if not header:
        if len(records) < 2:
            raise ValueError("missing counts line")
        header = records[1][1]
        pos = 2
    try:
        n_vertices, n_faces = int(header[0]), int(header[1])
    except (IndexError, ValueError):
        raise ValueError(f"line {records[pos - 1][0]}: malformed counts line")

    if len(records) < pos + n_vertices + n_faces:
        raise ValueError("file ends before all vertices and faces are read")

    vertices = []
    for number, tokens in records[pos : pos + n_vertices]:
        try:
            vertices.append([float(t) for t in tokens[:3]])
        except ValueError:
            raise ValueError(f"line {number}: malformed vertex")
        if len(tokens) < 3:
            raise ValueError(f"line {number}: vertex needs three coordinates")

    faces = []
    for number, tokens in records[pos + n_vertices : pos + n_vertices + n_faces]:
        try:
            arity = int(tokens[0])
            face = [int(t) for t in tokens[1 : 1 + arity]]
        except ValueError:
            raise ValueError(f"line {number}: malformed face")
        if len(face) != arity:
            raise ValueError(f"line {number}: face lists fewer than {arity} vertices")
        _check_face(number, face, n_vertices)
        faces.append(face)

    return SimplicialComplex.from_triangles(_planar(np.array(vertices)), np.array(faces))


def parse_obj(text: str) -> SimplicialComplex:
    """
    OBJ restricted to `v` and `f` records; other records are skipped.
    Face tokens may carry texture/normal references (v/vt/vn).
    """
    vertices, faces = [], []
    for number, tokens in _strip(text):
        if tokens[0] == "v":
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise ValueError(f"line {number}: malformed vertex")
            if len(tokens) < 4:
                raise ValueError(f"line {number}: vertex needs three coordinates")
        elif tokens[0] == "f":
            face = []
            for token in tokens[1:]:
                try:
                    idx = int(token.split("/")[0])
                except ValueError:
                    raise ValueError(f"line {number}: malformed face")
                face.append(idx - 1 if idx > 0 else len(vertices) + idx)
            _check_face(number, face, len(vertices))
            faces.append(face)
    if not vertices:
        raise ValueError("no vertices found")
    return SimplicialComplex.from_triangles(_planar(np.array(vertices)), np.array(faces))


def read_mesh(path: Union[str, Path]) -> SimplicialComplex:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")
    if path.suffix.lower() == ".off":
        return parse_off(path.read_text())
    if path.suffix.lower() == ".obj":
        return parse_obj(path.read_text())
    raise ValueError(f"Unknown mesh format {path.suffix}, expected .off or .obj")


def _coords(complex: SimplicialComplex) -> np.ndarray:
    if complex.ambient_dim == 2:
        return np.hstack([complex.vertices, np.zeros((complex.n_vertices, 1))])
    return complex.vertices


def write_off(complex: SimplicialComplex) -> str:
    lines = ["OFF", f"{complex.n_vertices} {complex.n_triangles} {complex.n_edges}"]
    lines += [" ".join(f"{x:.17g}" for x in p) for p in _coords(complex)]
    lines += ["3 " + " ".join(str(i) for i in t) for t in complex.triangles]
    return "\n".join(lines) + "\n"


def write_obj(complex: SimplicialComplex) -> str:
    lines = ["v " + " ".join(f"{x:.17g}" for x in p) for p in _coords(complex)]
    lines += ["f " + " ".join(str(i + 1) for i in t) for t in complex.triangles]
    return "\n".join(lines) + "\n"


def write_vtk(
    path: Union[str, Path],
    complex: SimplicialComplex,
    point_scalars: Optional[Dict[str, np.ndarray]] = None,
    cell_scalars: Optional[Dict[str, np.ndarray]] = None,
    cell_vectors: Optional[Dict[str, np.ndarray]] = None,
) -> None:
    """
    Legacy ASCII VTK unstructured grid with optional point and cell attributes
    :param path: output file
    :param complex: mesh
    :param point_scalars: name -> V values
    :param cell_scalars: name -> F values
    :param cell_vectors: name -> F x d vectors (padded to 3D)
    """
    cell_data = {}
    for name, values in (cell_vectors or {}).items():
        values = np.asarray(values, dtype=float)
        assert values.shape[0] == complex.n_triangles, f"{name}: one vector per triangle expected"
        if values.shape[1] == 2:
            values = np.hstack([values, np.zeros((len(values), 1))])
        cell_data[name] = [values]
    for name, values in (cell_scalars or {}).items():
        assert len(values) == complex.n_triangles, f"{name}: one value per triangle expected"
        cell_data[name] = [np.asarray(values, dtype=float)]
    point_data = {}
    for name, values in (point_scalars or {}).items():
        assert len(values) == complex.n_vertices, f"{name}: one value per vertex expected"
        point_data[name] = np.asarray(values, dtype=float)

    output = meshio.Mesh(_coords(complex), [("triangle", complex.triangles)], point_data=point_data, cell_data=cell_data)
    meshio.write(path, output, file_format="vtk", binary=False)


# Tangent fields


def _optional_tuple(value) -> Optional[Tuple]:
    if value is None:
        return None
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_optional_tuple(x) if isinstance(x, (list, tuple, np.ndarray)) else float(x) for x in value)
    raise ValueError(f"expected a list of numbers, got {value!r}")


@dataclass(frozen=True)
class FieldSpec:
    """
    Description of a tangent vector field.
    constant: components; rotational: rate * axis x (p - center) (2D: rate * J (p - center));
    radial: rate * (p - center); gradient: samples at vertices or coefficients
    of a linear function; explicit: one vector per triangle; random: seeded
    standard normal vectors times scale
    """

    kind: str
    components: Optional[Tuple[float, ...]] = None
    center: Optional[Tuple[float, ...]] = None
    axis: Optional[Tuple[float, ...]] = None
    rate: float = 1.0
    samples: Optional[Tuple[float, ...]] = None
    coefficients: Optional[Tuple[float, ...]] = None
    vectors: Optional[Tuple[Tuple[float, ...], ...]] = None
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"Unknown field kind {self.kind}, expected one of {FIELD_KINDS}")
        if self.kind == "constant" and self.components is None:
            raise ValueError("constant field needs components")
        if self.kind == "gradient" and self.samples is None and self.coefficients is None:
            raise ValueError("gradient field needs samples or coefficients")
        if self.kind == "explicit" and self.vectors is None:
            raise ValueError("explicit field needs vectors")

    @classmethod
    def from_dict(cls, data: Dict) -> "FieldSpec":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ValueError("field spec needs a kind")
        data.pop("path", None)
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if f != "kind"}
        if unknown:
            raise ValueError(f"Unknown field spec keys {sorted(unknown)}")
        for key in ("components", "center", "axis", "samples", "coefficients", "vectors"):
            data[key] = _optional_tuple(data.get(key))
        for key in ("rate", "scale"):
            if data.get(key) is None:
                data.pop(key, None)
        if data.get("seed") is None:
            data.pop("seed", None)
        return cls(kind=kind, **data)

    @classmethod
    def zero(cls, dim: int = 2) -> "FieldSpec":
        return cls(kind="constant", components=(0.0,) * dim)


def load_field_spec(path: Union[str, Path]) -> FieldSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"field spec not found: {path}")
    return FieldSpec.from_dict(json.loads(path.read_text()))


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """
    Per-triangle tangent vectors (ambient coordinates) realizing a field.
    Closed-form kinds keep a sampler to evaluate the field at arbitrary points.
    """

    vectors: np.ndarray
    kind: str
    projection_residual: float = 0.0
    sampler: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def sample(self, points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        """
        Field at points lying in the given triangles
        """
        if self.sampler is None:
            return self.vectors[triangles]
        return self.sampler(np.atleast_2d(points))

    def local_components(self, frames: TriangleFrames) -> np.ndarray:
        """
        Components of each vector in the basis of the triangle's edge vectors
        """
        inverse = np.linalg.pinv(np.transpose(frames.edges, (0, 2, 1)))
        return np.einsum("fid,fd->fi", inverse, self.vectors)

    def flipped(self) -> "DiscreteField":
        sampler = None
        if self.sampler is not None:
            base = self.sampler
            sampler = lambda points: -base(points)  # noqa: E731
        return DiscreteField(
            vectors=-self.vectors,
            kind=self.kind,
            projection_residual=self.projection_residual,
            sampler=sampler,
        )


def _point_sampler(spec: FieldSpec, dim: int) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    center = np.zeros(dim) if spec.center is None else np.array(spec.center, dtype=float)
    if spec.kind in ("rotational", "radial") and center.shape != (dim,):
        raise ValueError(f"field center needs {dim} coordinates")

    if spec.kind == "constant":
        comp = np.array(spec.components, dtype=float)
        if comp.shape != (dim,):
            raise ValueError(f"constant field needs {dim} components, got {len(comp)}")
        return lambda points: np.broadcast_to(comp, points.shape).copy()
    if spec.kind == "radial":
        return lambda points: spec.rate * (points - center)
    if spec.kind == "rotational":
        if dim == 2:
            return lambda points: spec.rate * np.stack(
                [-(points[:, 1] - center[1]), points[:, 0] - center[0]], axis=1
            )
        axis = np.array((0.0, 0.0, 1.0) if spec.axis is None else spec.axis, dtype=float)
        if axis.shape != (3,):
            raise ValueError("rotation axis needs 3 components")
        return lambda points: spec.rate * np.cross(axis, points - center)
    return None


def realize_field(complex: SimplicialComplex, spec: FieldSpec) -> DiscreteField:
    """
    Per-triangle tangent vectors of a field spec. In 3D ambient space the
    vectors are projected onto the triangle planes and the largest removed
    normal component is reported.
    :param complex: mesh
    :param spec: FieldSpec
    :return: DiscreteField
    """
    dim = complex.ambient_dim
    frames = complex.triangle_frames()
    sampler = _point_sampler(spec, dim)

    if sampler is not None:
        vectors = sampler(complex.barycenters())
    elif spec.kind == "gradient":
        if spec.coefficients is not None:
            coeff = np.array(spec.coefficients, dtype=float)
            if coeff.shape != (dim,):
                raise ValueError(f"gradient coefficients need {dim} entries")
            rise = np.einsum("fid,d->fi", frames.edges, coeff)
        else:
            samples = np.array(spec.samples, dtype=float)
            if samples.shape != (complex.n_vertices,):
                raise ValueError(
                    f"gradient samples must match vertex count {complex.n_vertices}, got {len(samples)}"
                )
            tri = complex.triangles
            rise = np.stack([samples[tri[:, 1]] - samples[tri[:, 0]], samples[tri[:, 2]] - samples[tri[:, 0]]], axis=1)
        local = np.linalg.solve(frames.metric, rise[..., None])[..., 0]
        vectors = np.einsum("fi,fid->fd", local, frames.edges)
    elif spec.kind == "explicit":
        vectors = np.array(spec.vectors, dtype=float)
        if vectors.shape != (complex.n_triangles, dim):
            raise ValueError(
                f"explicit field must list one {dim}-vector per triangle ({complex.n_triangles}), got {vectors.shape}"
            )
    else:
        rng = np.random.default_rng(spec.seed)
        vectors = spec.scale * rng.standard_normal((complex.n_triangles, dim))

    residual = 0.0
    if frames.normals is not None:
        normal_part = np.einsum("fd,fd->f", vectors, frames.normals)
        residual = float(np.max(np.abs(normal_part))) if len(normal_part) else 0.0
        vectors = vectors - normal_part[:, None] * frames.normals

    return DiscreteField(
        vectors=np.ascontiguousarray(vectors),
        kind=spec.kind,
        projection_residual=residual,
        sampler=sampler if frames.normals is None else None,
    )


def edge_cochain_of_field(complex: SimplicialComplex, field: DiscreteField) -> np.ndarray:
    """
    1-cochain integrating the flat of a per-triangle field over the edges,
    averaged over the triangles incident to each edge
    """
    vectors = complex.edge_vectors()
    total = np.zeros(complex.n_edges)
    count = np.zeros(complex.n_edges)
    for local in range(3):
        idx = complex.triangle_edges[:, local]
        np.add.at(total, idx, np.einsum("fd,fd->f", field.vectors, vectors[idx]))
        np.add.at(count, idx, 1.0)
    return total / count
