"""
Whitney finite elements for the standard and v-induced inner products.

Local coordinates on a triangle are the barycentric coordinates (s, t) of
its second and third vertex; the element metric is E E^T with E the edge
vectors from the first vertex. Element integrals use the three-point edge
midpoint rule, exact for the quadratic integrands arising here.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import io, sparse
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from vfhodge import extalg
from vfhodge.mesh import LOCAL_EDGES, DiscreteField, SimplicialComplex, TriangleFrames, triangle_areas
from vfhodge.util import resolve_workers

log = logging.getLogger(__name__)

BOUNDARY_CONDITIONS = ("closed", "normal", "tangential")
MAX_DENSE = 20000
DEGENERATE_TOL = 1e-14

QUAD_POINTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
QUAD_WEIGHT = 1.0 / 6.0
REF_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def whitney_one_forms(bary: np.ndarray) -> np.ndarray:
    """
    Local Whitney 1-forms lambda_a d lambda_b - lambda_b d lambda_a of the
    edges (0,1), (0,2), (1,2) at a barycentric point
    :param bary: barycentric coordinates (3,)
    :return: 3 x 2 coefficients in (ds, dt)
    """
    return np.stack(
        [bary[a] * REF_GRADIENTS[b] - bary[b] * REF_GRADIENTS[a] for a, b in LOCAL_EDGES]
    )


def local_edge_signs(triangles: np.ndarray) -> np.ndarray:
    """
    +1 where a local edge (a, b) runs along the global low->high orientation
    """
    first = triangles[:, [0, 0, 1]]
    second = triangles[:, [1, 2, 2]]
    return np.where(first < second, 1.0, -1.0)


def element_metric(points: np.ndarray) -> extalg.PointMetric:
    """
    Pullback metric of a triangle in its barycentric chart
    :param points: 3 x d vertex positions
    :return: PointMetric
    """
    points = np.asarray(points, dtype=float)
    edges = points[1:] - points[0]
    _check_degenerate(edges[None], 0)
    return extalg.PointMetric.from_frame(edges)


def _check_degenerate(edges: np.ndarray, offset: int = 0) -> None:
    # area below DEGENERATE_TOL times the squared longest edge
    area = triangle_areas(edges)
    lengths = np.stack([edges[:, 0], edges[:, 1], edges[:, 1] - edges[:, 0]], axis=1)
    scale = np.einsum("fed,fed->fe", lengths, lengths).max(axis=1)
    bad = np.flatnonzero(area < DEGENERATE_TOL * scale)
    if len(bad):
        raise ValueError(f"degenerate element {offset + bad[0]}")


def _reference_blocks(k: int) -> List[np.ndarray]:
    """
    Basis values at the quadrature points: list over points of (n_local x C(2,k))
    """
    if k == 0:
        return [q[:, None] for q in QUAD_POINTS]
    if k == 1:
        return [whitney_one_forms(q) for q in QUAD_POINTS]
    return [np.array([[2.0]]) for _ in QUAD_POINTS]


def _element_chunk(
    frames: TriangleFrames, local_v: np.ndarray, k: int, idx: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    blocks = _reference_blocks(k)
    n_local = blocks[0].shape[0]
    standard = np.empty((len(idx), n_local, n_local))
    induced = np.empty((len(idx), n_local, n_local))
    zero = np.zeros(2)
    for pos, t in enumerate(idx):
        metric = extalg.PointMetric.from_frame(frames.edges[t])
        for out, vec in ((standard, zero), (induced, local_v[t])):
            form = extalg.inner_gv_matrix(vec, metric, k)
            out[pos] = metric.sqrt_det * QUAD_WEIGHT * sum(b @ form @ b.T for b in blocks)
    return standard, induced


def element_matrices(
    complex: SimplicialComplex, field: DiscreteField, k: int, workers: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Element mass matrices of degree k for the standard and v-induced inner
    products, in local (unsigned) Whitney bases. Chunks of elements are
    evaluated on joblib threads and merged in chunk order.
    :return: (standard, induced), each F x n_local x n_local
    """
    frames = complex.triangle_frames()
    _check_degenerate(frames.edges)
    local_v = field.local_components(frames)
    workers = resolve_workers(workers)
    chunks = np.array_split(np.arange(complex.n_triangles), max(1, 4 * workers))
    chunks = [c for c in chunks if len(c)]
    parts = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_element_chunk)(frames, local_v, k, c) for c in chunks
    )
    standard = np.concatenate([p[0] for p in parts])
    induced = np.concatenate([p[1] for p in parts])
    return standard, induced


def _local_dofs(complex: SimplicialComplex, k: int) -> Tuple[np.ndarray, np.ndarray]:
    if k == 0:
        return complex.triangles, np.ones((complex.n_triangles, 3))
    if k == 1:
        return complex.triangle_edges, local_edge_signs(complex.triangles)
    return np.arange(complex.n_triangles)[:, None], np.ones((complex.n_triangles, 1))


def _scatter(complex: SimplicialComplex, k: int, blocks: np.ndarray) -> sparse.csr_matrix:
    dofs, signs = _local_dofs(complex, k)
    values = blocks * signs[:, :, None] * signs[:, None, :]
    n_local = dofs.shape[1]
    rows = np.repeat(dofs, n_local, axis=1).ravel()
    cols = np.tile(dofs, (1, n_local)).ravel()
    size = complex.count(k)
    return sparse.coo_matrix((values.ravel(), (rows, cols)), shape=(size, size)).tocsr()


@dataclass(frozen=True, eq=False)
class MassMatrices:
    k: int
    standard: sparse.csr_matrix
    induced: sparse.csr_matrix


def assemble_mass(
    complex: SimplicialComplex, field: DiscreteField, k: int, workers: Optional[int] = None
) -> MassMatrices:
    """
    Global mass matrices M_k and Mv_k in the oriented Whitney basis
    :param complex: mesh
    :param field: per-triangle vector field
    :param k: degree 0, 1 or 2
    :param workers: element threads (None reads VFHODGE_NUM_THREADS)
    :return: MassMatrices
    """
    if k not in (0, 1, 2):
        raise ValueError(f"degree must be 0, 1 or 2, got {k}")
    standard, induced = element_matrices(complex, field, k, workers)
    return MassMatrices(k=k, standard=_scatter(complex, k, standard), induced=_scatter(complex, k, induced))


def _factorize(matrix: Optional[sparse.spmatrix]):
    if matrix is None or matrix.shape[0] == 0:
        return None
    if matrix.shape[0] > MAX_DENSE:
        raise ValueError(f"{matrix.shape[0]} DOFs exceed the dense limit of {MAX_DENSE}")
    try:
        return cho_factor(matrix.toarray(), lower=True)
    except LinAlgError:
        raise RuntimeError("mass matrix not SPD")


def _solve(factor, rhs: np.ndarray) -> np.ndarray:
    if factor is None:
        return np.zeros_like(rhs, dtype=float)
    return cho_solve(factor, rhs)


@dataclass(eq=False)
class OperatorSet:
    """
    Operators of one degree k under one boundary condition, restricted to
    the admissible DOFs: derivatives into and out of degree k, the adjacent
    v-induced mass matrices and their Cholesky factors
    """

    k: int
    bc: str
    dofs: np.ndarray
    dofs_prev: np.ndarray
    dofs_next: np.ndarray
    d_prev: Optional[sparse.csr_matrix]
    d_next: Optional[sparse.csr_matrix]
    mass_prev: Optional[sparse.csr_matrix]
    mass: sparse.csr_matrix
    mass_next: Optional[sparse.csr_matrix]
    n_global: int
    _factor: tuple = field(init=False, repr=False)
    _factor_prev: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._factor = _factorize(self.mass)
        self._factor_prev = _factorize(self.mass_prev)

    @property
    def size(self) -> int:
        return len(self.dofs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """
        Mv_k^{-1} rhs
        """
        return _solve(self._factor, rhs)

    def solve_prev(self, rhs: np.ndarray) -> np.ndarray:
        return _solve(self._factor_prev, rhs)

    def cholesky(self) -> np.ndarray:
        """
        Lower triangular L with L L^T = Mv_k
        """
        if self._factor is None:
            return np.zeros((0, 0))
        return np.tril(self._factor[0])

    def exterior(self, x: np.ndarray) -> np.ndarray:
        if self.d_next is None:
            return np.zeros(0)
        return self.d_next @ x

    def codifferential(self, x: np.ndarray) -> np.ndarray:
        """
        Weak v-codifferential Mv_{k-1}^{-1} D_{k-1}^T Mv_k x
        """
        if self.d_prev is None:
            return np.zeros(0)
        return self.solve_prev(self.d_prev.T @ (self.mass @ x))

    def a_form(self) -> np.ndarray:
        if self.d_next is None:
            return np.zeros((self.size, self.size))
        return (self.d_next.T @ self.mass_next @ self.d_next).toarray()

    def b_form(self) -> np.ndarray:
        if self.d_prev is None or self.d_prev.shape[1] == 0:
            return np.zeros((self.size, self.size))
        coupling = (self.d_prev.T @ self.mass).toarray()
        form = coupling.T @ self.solve_prev(coupling)
        return 0.5 * (form + form.T)

    def laplacian(self) -> np.ndarray:
        """
        Stiffness of the v-Hodge Laplacian, A_k + B_k (dense, symmetric)
        """
        form = self.a_form() + self.b_form()
        return 0.5 * (form + form.T)

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ (self.mass @ y))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def norm_prev(self, x: np.ndarray) -> float:
        if self.mass_prev is None:
            return 0.0
        return float(np.sqrt(max(x @ (self.mass_prev @ x), 0.0)))

    def norm_next(self, x: np.ndarray) -> float:
        if self.mass_next is None:
            return 0.0
        return float(np.sqrt(max(x @ (self.mass_next @ x), 0.0)))

    def energy(self, x: np.ndarray) -> float:
        return self.norm_next(self.exterior(x)) ** 2 + self.norm_prev(self.codifferential(x)) ** 2

    def expand(self, x: np.ndarray) -> np.ndarray:
        """
        Embed restricted coefficients into the global numbering
        """
        out = np.zeros((self.n_global,) + x.shape[1:])
        out[self.dofs] = x
        return out

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return x[self.dofs]


def resolve_bc(complex: SimplicialComplex, bc: Optional[str]) -> str:
    if bc is None:
        return "closed" if complex.is_closed else "tangential"
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"Unknown boundary condition {bc}, expected one of {BOUNDARY_CONDITIONS}")
    if bc == "closed" and not complex.is_closed:
        raise ValueError("bc closed requires a mesh without boundary; use normal or tangential")
    return bc


@dataclass(eq=False)
class HodgeOperators:
    """
    Assembled mass matrices of all degrees for one mesh and field
    """

    complex: SimplicialComplex
    field: DiscreteField
    mass: Tuple[MassMatrices, MassMatrices, MassMatrices]
    _sets: Dict = field(default_factory=dict, repr=False)

    def d(self, k: int) -> sparse.csr_matrix:
        return self.complex.incidence(k)

    def dofs(self, k: int, bc: str) -> np.ndarray:
        if k < 0 or k > 2:
            return np.zeros(0, dtype=int)
        if bc == "normal":
            return self.complex.interior_simplices(k)
        return np.arange(self.complex.count(k))

    def _mass(self, k: int, dofs: np.ndarray) -> Optional[sparse.csr_matrix]:
        if k < 0 or k > 2:
            return None
        return self.mass[k].induced[dofs][:, dofs]

    def restrict(self, k: int, bc: Optional[str] = None) -> OperatorSet:
        """
        Operators of degree k with boundary condition bc (normal: interior
        simplices of every degree; tangential and closed: all simplices)
        """
        bc = resolve_bc(self.complex, bc)
        if k not in (0, 1, 2):
            raise ValueError(f"degree must be 0, 1 or 2, got {k}")
        key = (k, bc)
        if key not in self._sets:
            dofs, prev, nxt = self.dofs(k, bc), self.dofs(k - 1, bc), self.dofs(k + 1, bc)
            self._sets[key] = OperatorSet(
                k=k,
                bc=bc,
                dofs=dofs,
                dofs_prev=prev,
                dofs_next=nxt,
                d_prev=self.d(k - 1)[dofs][:, prev] if k > 0 else None,
                d_next=self.d(k)[nxt][:, dofs] if k < 2 else None,
                mass_prev=self._mass(k - 1, prev),
                mass=self._mass(k, dofs),
                mass_next=self._mass(k + 1, nxt),
                n_global=self.complex.count(k),
            )
        return self._sets[key]

    def standard(self) -> "HodgeOperators":
        """
        Same mesh with the v-induced masses replaced by the standard ones
        """
        mass = tuple(MassMatrices(k=m.k, standard=m.standard, induced=m.standard) for m in self.mass)
        return HodgeOperators(complex=self.complex, field=self.field, mass=mass)


def assemble(
    complex: SimplicialComplex, field: DiscreteField, workers: Optional[int] = None
) -> HodgeOperators:
    if field.vectors.shape != (complex.n_triangles, complex.ambient_dim):
        raise ValueError("field does not match the mesh")
    mass = tuple(assemble_mass(complex, field, k, workers) for k in range(3))
    return HodgeOperators(complex=complex, field=field, mass=mass)


def restrict_normal(operators: HodgeOperators, k: int) -> OperatorSet:
    """
    Operators on cochains vanishing on the boundary (all cochains on closed meshes)
    """
    return operators.restrict(k, None if operators.complex.is_closed else "normal")


def weak_codifferential_apply(
    operators: HodgeOperators, k: int, cochain: np.ndarray, bc: Optional[str] = None
) -> np.ndarray:
    return operators.restrict(k, bc).codifferential(cochain)


def adjointness_residual(
    operators: HodgeOperators, k: int, rng: np.random.Generator, bc: Optional[str] = None
) -> float:
    """
    Relative defect of (D a, b)_v = (a, delta_v b)_v for random a, b
    """
    if k < 1:
        raise ValueError("adjointness needs k >= 1")
    ops = operators.restrict(k, bc)
    a = rng.standard_normal(len(ops.dofs_prev))
    b = rng.standard_normal(ops.size)
    lhs = ops.inner(ops.d_prev @ a, b)
    rhs = float(a @ (ops.mass_prev @ ops.codifferential(b)))
    scale = ops.norm(ops.d_prev @ a) * ops.norm(b)
    return abs(lhs - rhs) / max(scale, np.finfo(float).tiny)


def codifferential_square_residual(
    operators: HodgeOperators, k: int, rng: np.random.Generator, bc: Optional[str] = None
) -> float:
    """
    ||delta_v delta_v x|| / ||x|| for a random k-cochain x
    """
    if k < 2:
        raise ValueError("composition needs k >= 2")
    upper, lower = operators.restrict(k, bc), operators.restrict(k - 1, bc)
    x = rng.standard_normal(upper.size)
    twice = lower.codifferential(upper.codifferential(x))
    return lower.norm_prev(twice) / max(upper.norm(x), np.finfo(float).tiny)


def export_matrices(operators: HodgeOperators, directory: Union[str, Path]) -> List[Path]:
    """
    Write M_k, Mv_k, D0 and D1 in Matrix Market format
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for m in operators.mass:
        for name, mat in ((f"M{m.k}", m.standard), (f"Mv{m.k}", m.induced)):
            paths.append(directory / f"{name}.mtx")
            io.mmwrite(str(paths[-1]), mat)
    for k in (0, 1):
        paths.append(directory / f"D{k}.mtx")
        io.mmwrite(str(paths[-1]), operators.d(k))
    return paths


@dataclass
class BoundaryComparison:
    """
    Outcome of comparing the standard normal/tangential trace conditions with
    their v-twisted counterparts at boundary-edge midpoints
    """

    hypothesis_holds: bool
    tangent_defect: float
    normal_defect: float
    max_discrepancy: float
    max_subspace_angle: float
    samples: int
    counterexample: Optional[Dict] = None

    def to_dict(self) -> Dict:
        return {
            "hypothesis_holds": self.hypothesis_holds,
            "tangent_defect": self.tangent_defect,
            "normal_defect": self.normal_defect,
            "max_discrepancy": self.max_discrepancy,
            "max_subspace_angle": self.max_subspace_angle,
            "samples": self.samples,
            "counterexample": self.counterexample,
        }


def bc_compare(
    complex: SimplicialComplex, field: DiscreteField, tol: float = 1e-10
) -> BoundaryComparison:
    """
    At every boundary-edge midpoint take the in-plane outward normal n and the
    field v. A 1-form w with w(n) = 0 satisfies the twisted condition
    (T_v w)(n) = 0 iff <v, n> w(v) = 0. Boundary Whitney forms projected to
    w(n) = 0 measure the mismatch; the conditions agree when v is
    everywhere tangent or everywhere normal to the boundary.
    :param complex: mesh with boundary
    :param field: DiscreteField (closed-form kinds are sampled exactly)
    :param tol: threshold for the hypothesis and the counterexample
    :return: BoundaryComparison
    """
    if complex.is_closed:
        raise ValueError("mesh has no boundary")
    flat = complex.triangle_edges.ravel()
    positions = np.flatnonzero(np.isin(flat, complex.boundary_edges))
    positions = positions[np.argsort(flat[positions], kind="stable")]
    owner, slot = positions // 3, positions % 3

    frames = complex.triangle_frames()
    origin = complex.vertices[complex.triangles[owner, 0]]
    corners = origin[:, None, :] + np.concatenate(
        [np.zeros((len(owner), 1, complex.ambient_dim)), frames.edges[owner]], axis=1
    )
    pairs = np.array(LOCAL_EDGES)[slot]
    rows = np.arange(len(owner))
    pa, pb = corners[rows, pairs[:, 0]], corners[rows, pairs[:, 1]]
    pc = corners[rows, 3 - pairs.sum(axis=1)]

    mid = 0.5 * (pa + pb)
    tau = (pb - pa) / np.linalg.norm(pb - pa, axis=1, keepdims=True)
    outward = mid - pc
    outward = outward - np.einsum("bd,bd->b", outward, tau)[:, None] * tau
    normal = outward / np.linalg.norm(outward, axis=1, keepdims=True)

    v = np.asarray(field.sample(mid, owner), dtype=float)
    speed = np.linalg.norm(v, axis=1)
    vn = np.einsum("bd,bd->b", v, normal)
    tangential = v - vn[:, None] * normal
    safe = np.where(speed > 0, speed, 1.0)
    tangent_defect = np.where(speed > 0, np.abs(vn) / safe, 0.0)
    normal_defect = np.where(speed > 0, np.linalg.norm(tangential, axis=1) / safe, 0.0)
    twisted = normal + vn[:, None] * v
    twisted_len = np.linalg.norm(twisted, axis=1)
    angle = np.abs(vn) * np.linalg.norm(tangential, axis=1) / twisted_len

    # ambient gradients of the barycentric coordinates
    local = np.linalg.solve(frames.metric[owner], np.broadcast_to(REF_GRADIENTS.T, (len(owner), 2, 3)))
    grads = np.einsum("bid,bij->bjd", frames.edges[owner], local)
    bary = np.zeros((len(owner), 3))
    bary[rows, pairs[:, 0]] = 0.5
    bary[rows, pairs[:, 1]] = 0.5

    discrepancy = np.zeros((len(owner), 3))
    for e, (a, b) in enumerate(LOCAL_EDGES):
        form = bary[:, a, None] * grads[:, b] - bary[:, b, None] * grads[:, a]
        form = form - np.einsum("bd,bd->b", form, normal)[:, None] * normal
        size = np.linalg.norm(form, axis=1)
        value = np.abs(vn * np.einsum("bd,bd->b", form, v))
        discrepancy[:, e] = np.where(size > 0, value / (np.where(size > 0, size, 1.0) * twisted_len), 0.0)

    worst = np.unravel_index(np.argmax(discrepancy), discrepancy.shape)
    max_discrepancy = float(discrepancy[worst])
    counterexample = None
    if max_discrepancy > tol:
        t = int(owner[worst[0]])
        counterexample = {
            "triangle": t,
            "boundary_edge": int(flat[positions[worst[0]]]),
            "basis_edge": int(complex.triangle_edges[t, worst[1]]),
            "value": max_discrepancy,
        }
    tangent, normal_d = float(tangent_defect.max()), float(normal_defect.max())
    holds = tangent <= tol or normal_d <= tol
    if holds and max_discrepancy > tol:
        log.warning(f"trace conditions differ by {max_discrepancy:.3e} although the field is aligned")
    return BoundaryComparison(
        hypothesis_holds=holds,
        tangent_defect=tangent,
        normal_defect=normal_d,
        max_discrepancy=max_discrepancy,
        max_subspace_angle=float(angle.max()),
        samples=len(owner),
        counterexample=counterexample,
    )
