"""
v-harmonic fields, Betti numbers and the v-induced Hodge-Morrey-Friedrichs
decomposition of Whitney cochains.

Kernels are extracted in Mv-whitened coordinates (L L^T = Mv), where the
v-inner product becomes Euclidean and minimum-norm solutions implement the
least v-norm gauge of the potentials.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.linalg import norm
from scipy.linalg import solve_triangular, svd

from vfhodge.assembly import HodgeOperators, OperatorSet, local_edge_signs, whitney_one_forms
from vfhodge.util import fix_signs, minimum_norm_solve

log = logging.getLogger(__name__)

RANK_TOL = 1e-8
GAP = 1e3
HARMONIC_TOL = 1e-8


def full_bc(operators: HodgeOperators) -> str:
    return "closed" if operators.complex.is_closed else "tangential"


def _whitening(ops: OperatorSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    L with L L^T = Mv and L^{-T}
    """
    lower = ops.cholesky()
    inv_t = solve_triangular(lower, np.eye(len(lower)), lower=True).T
    return lower, inv_t


def _kernel(stack: np.ndarray, n: int, rank_tol: float, gap: float) -> Tuple[np.ndarray, float, float]:
    """
    Orthonormal basis of the numerical null space of stack (columns), with
    the smallest retained and largest discarded singular values
    """
    if stack.shape[0] == 0:
        return np.eye(n), np.inf, 0.0
    _, s, vh = svd(stack, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return np.eye(n), np.inf, 0.0
    rank = int(np.sum(s > rank_tol * s[0]))
    retained = float(s[rank - 1])
    discarded = float(s[rank]) if rank < len(s) else 0.0
    if discarded > 0 and retained / discarded < gap:
        raise RuntimeError("rank ambiguous; refine mesh or tolerance")
    return vh[rank:].T, retained, discarded


@dataclass(eq=False)
class HarmonicBasis:
    """
    Mv-orthonormal basis of discrete v-harmonic fields of degree k under a
    boundary condition, stored in the global numbering
    """

    k: int
    bc: str
    vectors: np.ndarray
    smallest_retained: float
    largest_discarded: float

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def project(self, operators: HodgeOperators, x: np.ndarray) -> np.ndarray:
        """
        Mv-orthogonal projection of a global cochain onto the span
        """
        coeffs = self.vectors.T @ (operators.mass[self.k].induced @ x)
        return self.vectors @ coeffs

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "bc": self.bc,
            "dimension": self.dimension,
            "smallest_retained": self.smallest_retained,
            "largest_discarded": self.largest_discarded,
        }


def harmonic_basis(
    operators: HodgeOperators,
    k: int,
    bc: Optional[str] = None,
    rank_tol: float = RANK_TOL,
    gap: float = GAP,
) -> HarmonicBasis:
    """
    Kernel of [D_k ; D_{k-1}^T Mv_k] on the bc-restricted space
    :param operators: assembled operators
    :param k: degree
    :param bc: closed, normal or tangential (None: closed or tangential)
    :param rank_tol: relative singular value cut
    :param gap: required ratio between retained and discarded singular values
    :return: HarmonicBasis
    """
    ops = operators.restrict(k, bc)
    if ops.size == 0:
        return HarmonicBasis(k, ops.bc, np.zeros((ops.n_global, 0)), np.inf, 0.0)
    lower, inv_t = _whitening(ops)
    blocks = []
    if ops.d_next is not None and ops.d_next.shape[0]:
        blocks.append(np.asarray(ops.d_next @ inv_t))
    if ops.d_prev is not None and ops.d_prev.shape[1]:
        blocks.append(np.asarray(ops.d_prev.T @ lower))
    stack = np.vstack(blocks) if blocks else np.zeros((0, ops.size))
    null, retained, discarded = _kernel(stack, ops.size, rank_tol, gap)
    vectors = fix_signs(inv_t @ null)
    return HarmonicBasis(k, ops.bc, ops.expand(vectors), retained, discarded)


def betti_numbers(operators: HodgeOperators, bc: Optional[str] = None, **kwargs) -> Tuple[int, int, int]:
    return tuple(harmonic_basis(operators, k, bc, **kwargs).dimension for k in range(3))


def _codifferential_normal(operators: HodgeOperators, k: int, x: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Weak delta_v of a full-space cochain tested against zero-trace (k-1)-cochains,
    with its Mv norm
    """
    if k == 0:
        return np.zeros(0), 0.0
    low = operators.restrict(k - 1, "normal" if not operators.complex.is_closed else None)
    d = operators.d(k - 1)[:, low.dofs]
    y = low.solve(d.T @ (operators.mass[k].induced @ x))
    return y, low.norm(y)


def harmonic_residuals(operators: HodgeOperators, h: np.ndarray, k: int) -> Tuple[float, float]:
    """
    (||D_k h||_Mv, ||weak delta_v h||_Mv) with normal test functions
    """
    d_res = 0.0
    if k < 2:
        dh = operators.d(k) @ h
        d_res = float(np.sqrt(max(dh @ (operators.mass[k + 1].induced @ dh), 0.0)))
    return d_res, _codifferential_normal(operators, k, h)[1]


def _vnorm(operators: HodgeOperators, k: int, x: np.ndarray) -> float:
    return float(np.sqrt(max(x @ (operators.mass[k].induced @ x), 0.0)))


def _vinner(operators: HodgeOperators, k: int, x: np.ndarray, y: np.ndarray) -> float:
    return float(x @ (operators.mass[k].induced @ y))


@dataclass(eq=False)
class HodgeDecomposition:
    k: int
    omega: np.ndarray
    exact: np.ndarray
    coexact: np.ndarray
    harmonic: np.ndarray
    alpha: np.ndarray
    alpha_dofs: np.ndarray
    beta: np.ndarray
    residuals: Dict[str, float]
    conditioning: Dict[str, Dict] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "residuals": self.residuals,
            "conditioning": self.conditioning,
        }


def decompose(
    operators: HodgeOperators, omega: np.ndarray, k: int, rtol: float = RANK_TOL
) -> HodgeDecomposition:
    """
    Split omega into D alpha + delta_v beta + h with alpha a zero-trace
    potential and beta a full-space potential, both of least v-norm
    :param operators: assembled operators
    :param omega: global k-cochain
    :param k: degree
    :param rtol: relative singular value cut of the least-squares solves
    :return: HodgeDecomposition with relative residuals
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (operators.complex.count(k),):
        raise ValueError(f"cochain of degree {k} needs {operators.complex.count(k)} entries, got {omega.shape}")
    full = operators.restrict(k, full_bc(operators))
    lower_k = full.cholesky()
    rhs = lower_k.T @ omega
    conditioning = {}

    low = operators.restrict(k - 1, "normal" if not operators.complex.is_closed else None) if k > 0 else None
    if low is None or low.size == 0:
        alpha, alpha_dofs = np.zeros(0), np.zeros(0, dtype=int)
        exact = np.zeros_like(omega)
    else:
        d = operators.d(k - 1)[:, low.dofs]
        _, inv_t = _whitening(low)
        system = lower_k.T @ np.asarray(d @ inv_t)
        a, conditioning["alpha"] = minimum_norm_solve(system, rhs, rtol)
        alpha, alpha_dofs = inv_t @ a, low.dofs
        exact = d @ alpha

    if k == 2:
        beta = np.zeros(0)
        coexact = np.zeros_like(omega)
    else:
        up = operators.restrict(k + 1, full_bc(operators))
        d = operators.d(k)
        lower_up, inv_t_up = _whitening(up)
        system = solve_triangular(lower_k, np.asarray(d.T @ lower_up), lower=True)
        b, conditioning["beta"] = minimum_norm_solve(system, rhs, rtol)
        beta = inv_t_up @ b
        coexact = full.solve(d.T @ (up.mass @ beta))

    harmonic = omega - exact - coexact
    scale = _vnorm(operators, k, omega) or 1.0
    d_res, c_res = harmonic_residuals(operators, harmonic, k)
    parts = {"exact": exact, "coexact": coexact, "harmonic": harmonic}
    names = list(parts)
    orthogonality = max(
        abs(_vinner(operators, k, parts[a], parts[b]))
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    )
    residuals = {
        "reconstruction": _vnorm(operators, k, omega - exact - coexact - harmonic) / scale,
        "orthogonality": orthogonality / scale**2,
        "harmonic_d": d_res / scale,
        "harmonic_codifferential": c_res / scale,
    }
    return HodgeDecomposition(
        k=k,
        omega=omega,
        exact=exact,
        coexact=coexact,
        harmonic=harmonic,
        alpha=alpha,
        alpha_dofs=alpha_dofs,
        beta=beta,
        residuals=residuals,
        conditioning=conditioning,
    )


@dataclass(eq=False)
class FriedrichsSplit:
    mode: str
    boundary_part: np.ndarray
    remainder: np.ndarray
    potential: np.ndarray
    certification_residual: float
    orthogonality: float

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "certification_residual": self.certification_residual,
            "orthogonality": self.orthogonality,
        }


def friedrichs_split(
    operators: HodgeOperators,
    h: np.ndarray,
    k: int,
    mode: str = "normal",
    tol: float = HARMONIC_TOL,
    rtol: float = RANK_TOL,
) -> FriedrichsSplit:
    """
    Split a harmonic field into its normal (resp. tangential) harmonic part
    and a remainder that is v-coexact (resp. exact). The remainder is
    certified by solving for its potential.
    :param operators: assembled operators
    :param h: global harmonic k-cochain
    :param k: degree
    :param mode: normal or tangential
    :param tol: relative harmonicity threshold for h
    :return: FriedrichsSplit
    """
    if mode not in ("normal", "tangential"):
        raise ValueError(f"Unknown split mode {mode}, expected normal or tangential")
    h = np.asarray(h, dtype=float)
    scale = _vnorm(operators, k, h) or 1.0
    d_res, c_res = harmonic_residuals(operators, h, k)
    if max(d_res, c_res) > tol * scale:
        raise ValueError(f"not a harmonic field (residuals {d_res:.3e}, {c_res:.3e})")
    if operators.complex.is_closed:
        return FriedrichsSplit(mode, h.copy(), np.zeros_like(h), np.zeros(0), 0.0, 0.0)

    basis = harmonic_basis(operators, k, mode, rank_tol=rtol)
    part = basis.project(operators, h)
    rest = h - part

    if mode == "tangential":
        # rest = D gamma for a full-space (k-1)-cochain gamma
        if k == 0:
            potential, residual = np.zeros(0), _vnorm(operators, k, rest)
        else:
            low = operators.restrict(k - 1, "tangential")
            lower_k = operators.restrict(k, "tangential").cholesky()
            _, inv_t = _whitening(low)
            d = operators.d(k - 1)
            z, _ = minimum_norm_solve(lower_k.T @ np.asarray(d @ inv_t), lower_k.T @ rest, rtol)
            potential = inv_t @ z
            residual = _vnorm(operators, k, rest - d @ potential)
    else:
        # weakly rest = delta_v gamma: (D gamma', ...) tested against zero-trace k-cochains
        normal = operators.restrict(k, "normal")
        target = (operators.mass[k].induced @ rest)[normal.dofs]
        lower_n = normal.cholesky()
        y = solve_triangular(lower_n, target, lower=True) if normal.size else np.zeros(0)
        if k == 2:
            potential, residual = np.zeros(0), float(norm(y))
        else:
            up = operators.restrict(k + 1, "tangential")
            lower_up, inv_t_up = _whitening(up)
            d = operators.d(k)[:, normal.dofs]
            system = solve_triangular(lower_n, np.asarray(d.T @ lower_up), lower=True)
            z, _ = minimum_norm_solve(system, y, rtol)
            potential = inv_t_up @ z
            residual = float(norm(system @ z - y))

    return FriedrichsSplit(
        mode=mode,
        boundary_part=part,
        remainder=rest,
        potential=potential,
        certification_residual=residual / scale,
        orthogonality=abs(_vinner(operators, k, part, rest)) / scale**2,
    )


@dataclass(eq=False)
class FourComponentDecomposition:
    k: int
    exact: np.ndarray
    coexact: np.ndarray
    normal_harmonic: np.ndarray
    coexact_harmonic: np.ndarray
    residuals: Dict[str, float]

    def to_dict(self) -> Dict:
        return {"k": self.k, "residuals": self.residuals}


def decompose_four(
    operators: HodgeOperators, omega: np.ndarray, k: int, rtol: float = RANK_TOL
) -> FourComponentDecomposition:
    """
    omega = D alpha + delta_v beta + h_n + h_co with h_n a normal harmonic
    field and h_co a v-coexact harmonic field
    """
    base = decompose(operators, omega, k, rtol)
    split = friedrichs_split(operators, base.harmonic, k, "normal", rtol=rtol)
    parts = {
        "exact": base.exact,
        "coexact": base.coexact,
        "normal_harmonic": split.boundary_part,
        "coexact_harmonic": split.remainder,
    }
    scale = _vnorm(operators, k, base.omega) or 1.0
    names = list(parts)
    orthogonality = max(
        abs(_vinner(operators, k, parts[a], parts[b]))
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    )
    residuals = dict(base.residuals)
    residuals.update(
        {
            "reconstruction": _vnorm(operators, k, base.omega - sum(parts.values())) / scale,
            "orthogonality": orthogonality / scale**2,
            "certification": split.certification_residual,
        }
    )
    return FourComponentDecomposition(k=k, residuals=residuals, **parts)


@dataclass(eq=False)
class HarmonicRepresentative:
    k: int
    representative: np.ndarray
    potential: np.ndarray
    exactness_residual: float

    def to_dict(self) -> Dict:
        return {"k": self.k, "exactness_residual": self.exactness_residual}


def harmonic_representative(
    operators: HodgeOperators, omega: np.ndarray, k: int, tol: float = HARMONIC_TOL, rtol: float = RANK_TOL
) -> HarmonicRepresentative:
    """
    The v-harmonic field (tangential on meshes with boundary) cohomologous
    to a closed cochain; omega minus it is certified exact
    """
    omega = np.asarray(omega, dtype=float)
    scale = _vnorm(operators, k, omega) or 1.0
    if k < 2:
        dw = operators.d(k) @ omega
        closedness = float(np.sqrt(max(dw @ (operators.mass[k + 1].induced @ dw), 0.0)))
        if closedness > tol * scale:
            raise ValueError("cochain is not closed")
    basis = harmonic_basis(operators, k, full_bc(operators), rank_tol=rtol)
    rep = basis.project(operators, omega)
    rest = omega - rep
    if k == 0:
        return HarmonicRepresentative(k, rep, np.zeros(0), _vnorm(operators, k, rest) / scale)
    low = operators.restrict(k - 1, full_bc(operators))
    lower_k = operators.restrict(k, full_bc(operators)).cholesky()
    _, inv_t = _whitening(low)
    d = operators.d(k - 1)
    z, _ = minimum_norm_solve(lower_k.T @ np.asarray(d @ inv_t), lower_k.T @ rest, rtol)
    potential = inv_t @ z
    return HarmonicRepresentative(k, rep, potential, _vnorm(operators, k, rest - d @ potential) / scale)


@dataclass
class DualityTable:
    tangential: Tuple[int, int, int]
    normal: Tuple[int, int, int]

    @property
    def passed(self) -> bool:
        return all(self.tangential[k] == self.normal[2 - k] for k in range(3))

    def to_dict(self) -> Dict:
        return {"tangential": list(self.tangential), "normal": list(self.normal), "passed": self.passed}


def duality_dimensions(operators: HodgeOperators, **kwargs) -> DualityTable:
    """
    Harmonic dimensions under both boundary conditions; dim H^k_t = dim H^{2-k}_n
    """
    if operators.complex.is_closed:
        dims = betti_numbers(operators, None, **kwargs)
        table = DualityTable(dims, dims)
    else:
        table = DualityTable(
            betti_numbers(operators, "tangential", **kwargs), betti_numbers(operators, "normal", **kwargs)
        )
    if not table.passed:
        log.warning(f"duality mismatch: tangential {table.tangential}, normal {table.normal}")
    return table


def cochain_vectors(operators: HodgeOperators, x: np.ndarray, k: int) -> Dict[str, np.ndarray]:
    """
    Viewable data of a cochain: 0-cochains as point scalars, 1-cochains as
    sharp vectors of the Whitney interpolant at triangle barycenters,
    2-cochains as densities per unit area
    """
    complex = operators.complex
    if k == 0:
        return {"point_scalars": np.asarray(x, dtype=float)}
    frames = complex.triangle_frames()
    if k == 2:
        return {"cell_scalars": np.asarray(x, dtype=float) / frames.area}
    forms = whitney_one_forms(np.full(3, 1.0 / 3.0))
    signed = local_edge_signs(complex.triangles) * np.asarray(x, dtype=float)[complex.triangle_edges]
    local = signed @ forms
    coeffs = np.linalg.solve(frames.metric, local[..., None])[..., 0]
    return {"cell_vectors": np.einsum("fi,fid->fd", coeffs, frames.edges)}
