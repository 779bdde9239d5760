"""
Cross-checks of the v-induced Laplacian on functions over flat domains.

Sign convention: the Laplacian is delta d, positive semidefinite, so on the
flat plane Delta u = -(u_xx + u_yy).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve
from tqdm.auto import tqdm

from vfhodge import meshgen
from vfhodge.assembly import assemble, assemble_mass, resolve_bc
from vfhodge.mesh import FieldSpec, SimplicialComplex, edge_cochain_of_field, realize_field

log = logging.getLogger(__name__)

Fn = Callable[[np.ndarray], np.ndarray]


def _sine(p: np.ndarray) -> np.ndarray:
    return np.sin(p[0]) * np.sin(p[1])


def _sine_grad(p: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(p[0]) * np.sin(p[1]), np.sin(p[0]) * np.cos(p[1])])


def _sine_hess(p: np.ndarray) -> np.ndarray:
    ss, cc = np.sin(p[0]) * np.sin(p[1]), np.cos(p[0]) * np.cos(p[1])
    return np.stack([np.stack([-ss, cc]), np.stack([cc, -ss])])


@dataclass(frozen=True)
class AnalyticCase:
    """
    Closed-form u and v on a flat periodic square [0, 2 pi)^2. Points are
    arrays of shape (2, ...); gradients (2, ...), Hessians and Jacobians
    (2, 2, ...) with jac_v[i, j] = d v_i / d x_j. Gradient fields also carry
    the potential's gradient and Hessian. Without a field spec, v is sampled at
    triangle barycenters.
    """

    name: str
    u: Fn
    grad_u: Fn
    hess_u: Fn
    v: Fn
    jac_v: Fn
    field_spec: Optional[FieldSpec]
    grad_f: Optional[Fn] = None
    hess_f: Optional[Fn] = None


def _constant(vec: Sequence[float]) -> Fn:
    vec = np.asarray(vec, dtype=float)
    return lambda p: np.broadcast_to(vec.reshape((2,) + (1,) * (np.ndim(p) - 1)), np.shape(p)).copy()


def _zero_matrix(p: np.ndarray) -> np.ndarray:
    return np.zeros((2, 2) + np.shape(p)[1:])


def constant_case(v: Sequence[float] = (1.0, 0.0)) -> AnalyticCase:
    """
    u = sin x sin y with a constant field
    """
    return AnalyticCase(
        name=f"constant_{v[0]:g}_{v[1]:g}",
        u=_sine,
        grad_u=_sine_grad,
        hess_u=_sine_hess,
        v=_constant(v),
        jac_v=_zero_matrix,
        field_spec=FieldSpec(kind="constant", components=tuple(float(x) for x in v)),
    )


def gradient_case(coefficients: Sequence[float] = (1.0, 1.0)) -> AnalyticCase:
    """
    u = sin x sin y with v the gradient of the linear function a . x
    """
    return AnalyticCase(
        name=f"gradient_{coefficients[0]:g}_{coefficients[1]:g}",
        u=_sine,
        grad_u=_sine_grad,
        hess_u=_sine_hess,
        v=_constant(coefficients),
        jac_v=_zero_matrix,
        field_spec=FieldSpec(kind="gradient", coefficients=tuple(float(x) for x in coefficients)),
        grad_f=_constant(coefficients),
        hess_f=_zero_matrix,
    )


def shear_case(amplitude: float = 0.5) -> AnalyticCase:
    """
    u = sin x sin y with the divergence-free shear v = (a sin y, 0)
    """

    def v(p):
        return np.stack([amplitude * np.sin(p[1]), np.zeros_like(p[1])])

    def jac(p):
        out = _zero_matrix(p)
        out[0, 1] = amplitude * np.cos(p[1])
        return out

    return AnalyticCase(
        name=f"shear_{amplitude:g}",
        u=_sine,
        grad_u=_sine_grad,
        hess_u=_sine_hess,
        v=v,
        jac_v=jac,
        field_spec=None,
    )


CASES = {"constant": constant_case, "sine": constant_case, "gradient": gradient_case, "shear": shear_case}


def _terms(grad_u, hess_u, v, jac_v):
    lap = -(hess_u[0, 0] + hess_u[1, 1])
    div = jac_v[0, 0] + jac_v[1, 1]
    vu = np.einsum("i...,i...->...", v, grad_u)
    vvu = np.einsum("i...,ij...,j...->...", v, hess_u, v) + np.einsum(
        "ij...,j...,i...->...", jac_v, v, grad_u
    )
    return lap, div, vu, vvu


def analytic_vlap(case: AnalyticCase, point: np.ndarray) -> np.ndarray:
    """
    Delta u + v(u) delta(v_flat) - v(v(u)), with delta(v_flat) = -div v
    """
    point = np.asarray(point, dtype=float)
    lap, div, vu, vvu = _terms(case.grad_u(point), case.hess_u(point), case.v(point), case.jac_v(point))
    return lap - vu * div - vvu


def coordinate_vlap(case: AnalyticCase, point: np.ndarray) -> np.ndarray:
    """
    -d_i ((delta^ij + v^i v^j) d_j u) expanded by the product rule
    """
    point = np.asarray(point, dtype=float)
    grad, hess, v, jac = case.grad_u(point), case.hess_u(point), case.v(point), case.jac_v(point)
    metric = np.eye(2).reshape((2, 2) + (1,) * (point.ndim - 1)) + np.einsum("i...,j...->ij...", v, v)
    second = np.einsum("ij...,ij...->...", metric, hess)
    # d_i (v^i v^j) = (div v) v^j + (d_i v^j) v^i
    flux = (jac[0, 0] + jac[1, 1]) * v + np.einsum("ji...,i...->j...", jac, v)
    return -second - np.einsum("j...,j...->...", flux, grad)


def gradient_vlap(case: AnalyticCase, point: np.ndarray) -> np.ndarray:
    """
    Delta phi + <grad f, grad phi> Delta f - Hess phi(grad f, grad f) - Hess f(grad f, grad phi)
    """
    if case.grad_f is None:
        raise ValueError(f"case {case.name} has no potential")
    point = np.asarray(point, dtype=float)
    grad, hess = case.grad_u(point), case.hess_u(point)
    gf, hf = case.grad_f(point), case.hess_f(point)
    lap = -(hess[0, 0] + hess[1, 1])
    lap_f = -(hf[0, 0] + hf[1, 1])
    return (
        lap
        + np.einsum("i...,i...->...", gf, grad) * lap_f
        - np.einsum("i...,ij...,j...->...", gf, hess, gf)
        - np.einsum("i...,ij...,j...->...", gf, hf, grad)
    )


def finite_difference_check(case: AnalyticCase, points: np.ndarray, step: float = 1e-4) -> float:
    """
    Largest deviation between analytic_vlap and the same expression with all
    derivatives replaced by central differences
    :param case: AnalyticCase
    :param points: 2 x P evaluation points
    :param step: difference step
    :return: max absolute deviation
    """
    points = np.asarray(points, dtype=float)
    shifts = step * np.eye(2)
    grad = np.stack([(case.u(points + s[:, None]) - case.u(points - s[:, None])) / (2 * step) for s in shifts])
    hess = np.empty((2, 2, points.shape[1]))
    for i, si in enumerate(shifts):
        for j, sj in enumerate(shifts):
            pp = case.u(points + (si + sj)[:, None])
            pm = case.u(points + (si - sj)[:, None])
            mp = case.u(points + (-si + sj)[:, None])
            mm = case.u(points - (si + sj)[:, None])
            hess[i, j] = (pp - pm - mp + mm) / (4 * step**2)
    jac = np.stack(
        [(case.v(points + s[:, None]) - case.v(points - s[:, None])) / (2 * step) for s in shifts], axis=1
    )
    lap, div, vu, vvu = _terms(grad, hess, case.v(points), jac)
    return float(np.max(np.abs(lap - vu * div - vvu - analytic_vlap(case, points))))


def sample_points(count: int = 16, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 2 * np.pi, size=(2, count))


def _realize(case: AnalyticCase, complex: SimplicialComplex):
    if case.field_spec is None:
        vectors = case.v(complex.barycenters().T).T
        return realize_field(complex, FieldSpec(kind="explicit", vectors=tuple(map(tuple, vectors))))
    return realize_field(complex, case.field_spec)


@dataclass
class ConvergenceTable:
    case: str
    rows: List[Dict]
    orders: List[float]
    fitted_order: float
    monotone: bool

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows)
        frame["order"] = [np.nan] + self.orders
        return frame

    def to_dict(self) -> Dict:
        return {
            "case": self.case,
            "rows": self.rows,
            "orders": self.orders,
            "fitted_order": self.fitted_order,
            "monotone": self.monotone,
        }


def convergence_study(
    case: AnalyticCase,
    levels: int = 4,
    base_resolution: int = 16,
    workers: Optional[int] = None,
    progress: bool = False,
) -> ConvergenceTable:
    """
    Manufactured-solution study on nested flat tori: solve L0 u_h = M0 f
    with a zero-mean constraint and measure the Mv-weighted L2 error
    against the interpolated u
    :param case: AnalyticCase
    :param levels: number of refinements (>= 2)
    :param base_resolution: cells per side on the coarsest torus
    :return: ConvergenceTable
    """
    if levels < 2:
        raise ValueError("need ≥ 2 levels")
    rows = []
    for level in tqdm(range(levels), desc=case.name, disable=not progress):
        n = base_resolution * 2**level
        complex = meshgen.flat_torus(n)
        field = _realize(case, complex)
        m0 = assemble_mass(complex, field, 0, workers).induced
        m1 = assemble_mass(complex, field, 1, workers).induced
        d0 = complex.incidence(0)
        stiffness = (d0.T @ m1 @ d0).tocsr()

        points = complex.vertices.T
        load = m0 @ analytic_vlap(case, points)
        ones = m0 @ np.ones(complex.n_vertices)
        system = sparse.bmat(
            [[stiffness, sparse.csr_matrix(ones[:, None])], [sparse.csr_matrix(ones[None, :]), None]]
        ).tocsc()
        solution = spsolve(system, np.append(load, 0.0))[:-1]

        exact = case.u(points)
        exact = exact - (ones @ exact) / ones.sum()
        diff = solution - exact
        rows.append(
            {
                "level": level,
                "resolution": n,
                "h": 2 * np.pi / n,
                "dofs": complex.n_vertices,
                "error": float(np.sqrt(max(diff @ (m0 @ diff), 0.0))),
            }
        )

    errors = np.array([r["error"] for r in rows])
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(levels - 1)]
    fitted = float(np.polyfit(np.log([r["h"] for r in rows]), np.log(errors), 1)[0])
    monotone = bool(np.all(np.diff(errors) < 0))
    if not monotone:
        log.warning(f"non-monotone errors in study {case.name}: {errors}")
    return ConvergenceTable(case=case.name, rows=rows, orders=orders, fitted_order=fitted, monotone=monotone)


@dataclass
class HarmonicityReport:
    d_residual: float
    codifferential_residual: float
    tol: float

    @property
    def satisfied(self) -> bool:
        return self.d_residual <= self.tol and self.codifferential_residual <= self.tol

    def to_dict(self) -> Dict:
        return {
            "d_residual": self.d_residual,
            "codifferential_residual": self.codifferential_residual,
            "satisfied": self.satisfied,
            "tol": self.tol,
        }


def harmonicity_check(
    complex: SimplicialComplex, spec: FieldSpec, tol: float = 1e-10, workers: Optional[int] = None
) -> HarmonicityReport:
    """
    Residuals of d and the weak delta_v on the 1-cochain integrating v_flat
    over the edges
    """
    field = realize_field(complex, spec)
    cochain = edge_cochain_of_field(complex, field)
    ops = assemble(complex, field, workers).restrict(1, resolve_bc(complex, None))
    d_res = float(np.linalg.norm(complex.incidence(1) @ cochain))
    codiff = ops.codifferential(cochain)
    report = HarmonicityReport(d_res, ops.norm_prev(codiff), tol)
    if not report.satisfied:
        log.info(f"v_flat is not v-harmonic: d {report.d_residual:.3e}, delta_v {report.codifferential_residual:.3e}")
    return report


@dataclass
class GradientCaseReport:
    table: ConvergenceTable
    formula_residual: float
    coordinate_residual: float
    finite_difference_residual: float

    def to_dict(self) -> Dict:
        return {
            "table": self.table.to_dict(),
            "formula_residual": self.formula_residual,
            "coordinate_residual": self.coordinate_residual,
            "finite_difference_residual": self.finite_difference_residual,
        }


def gradient_case_check(
    coefficients: Sequence[float] = (1.0, 1.0),
    levels: int = 4,
    base_resolution: int = 16,
    workers: Optional[int] = None,
    progress: bool = False,
) -> GradientCaseReport:
    """
    Gradient-field case: the general and simplified formulas agree and the
    discrete operator converges to them
    """
    case = gradient_case(coefficients)
    points = sample_points()
    reference = analytic_vlap(case, points)
    return GradientCaseReport(
        table=convergence_study(case, levels, base_resolution, workers, progress),
        formula_residual=float(np.max(np.abs(gradient_vlap(case, points) - reference))),
        coordinate_residual=float(np.max(np.abs(coordinate_vlap(case, points) - reference))),
        finite_difference_residual=finite_difference_check(case, points),
    )
