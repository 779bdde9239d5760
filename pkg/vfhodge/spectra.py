"""
Spectra of the v-Hodge Laplacian and their invariance under rigid motions
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.linalg import LinAlgError, eigh, subspace_angles
from scipy.spatial.transform import Rotation

from vfhodge.assembly import HodgeOperators, assemble
from vfhodge.mesh import DiscreteField, FieldSpec, SimplicialComplex, realize_field
from vfhodge.util import fix_signs

log = logging.getLogger(__name__)

ZERO_TOL = 1e-8
SIMPLE_GAP = 1e-6


@dataclass(eq=False)
class SpectrumReport:
    k: int
    bc: str
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    lambda_max: float
    zero_tol: float = ZERO_TOL

    @property
    def zero_threshold(self) -> float:
        return self.zero_tol * max(self.lambda_max, np.finfo(float).tiny)

    @property
    def zero_multiplicity(self) -> int:
        return int(np.sum(self.eigenvalues <= self.zero_threshold))

    @property
    def min_ratio(self) -> float:
        """
        Smallest eigenvalue relative to the largest one
        """
        return float(self.eigenvalues[0] / max(self.lambda_max, np.finfo(float).tiny))

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "bc": self.bc,
            "eigenvalues": self.eigenvalues,
            "residuals": self.residuals,
            "lambda_max": self.lambda_max,
            "zero_multiplicity": self.zero_multiplicity,
            "min_ratio": self.min_ratio,
        }


def eigen(
    operators: HodgeOperators,
    k: int,
    bc: Optional[str] = None,
    count: int = 10,
    zero_tol: float = ZERO_TOL,
) -> SpectrumReport:
    """
    Lowest eigenpairs of the pencil (A_k + B_k, Mv_k) on the bc-restricted space
    :param operators: assembled operators
    :param k: degree
    :param bc: boundary condition (None: closed or tangential)
    :param count: number of eigenpairs
    :param zero_tol: eigenvalues below zero_tol * lambda_max count as zero
    :return: SpectrumReport with Mv-orthonormal eigen-cochains in the global numbering
    """
    ops = operators.restrict(k, bc)
    if count < 1 or count > ops.size:
        raise ValueError(f"count {count} must lie in [1, {ops.size}] (DOFs of degree {k}, bc {ops.bc})")
    stiffness = ops.laplacian()
    mass = ops.mass.toarray()
    try:
        values, vectors = eigh(stiffness, mass)
    except LinAlgError as e:
        raise RuntimeError(f"eigensolver failed for k={k}, bc={ops.bc}, {ops.size} DOFs: {e}")
    vectors = fix_signs(vectors[:, :count])
    lam = values[:count]
    applied = mass @ vectors
    residuals = np.linalg.norm(stiffness @ vectors - applied * lam, axis=0) / np.linalg.norm(applied, axis=0)
    return SpectrumReport(
        k=k,
        bc=ops.bc,
        eigenvalues=lam,
        vectors=ops.expand(vectors),
        residuals=residuals,
        lambda_max=float(values[-1]),
        zero_tol=zero_tol,
    )


def random_rotation(seed: int = 0, dim: int = 3) -> np.ndarray:
    """
    Uniformly random proper rotation
    """
    if dim == 3:
        return Rotation.random(random_state=seed).as_matrix()
    if dim == 2:
        angle = np.random.default_rng(seed).uniform(0.0, 2 * np.pi)
        c, s = np.cos(angle), np.sin(angle)
        return np.array([[c, -s], [s, c]])
    raise ValueError(f"rotations are available in 2 and 3 dimensions, got {dim}")


@dataclass
class IsometryReport:
    k: int
    count: int
    pushforward: bool
    eigenvalues: np.ndarray
    moved_eigenvalues: np.ndarray
    max_relative_discrepancy: float
    max_principal_angle: float
    simple_pairs: int
    bitwise_equal: bool

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "count": self.count,
            "pushforward": self.pushforward,
            "eigenvalues": self.eigenvalues,
            "moved_eigenvalues": self.moved_eigenvalues,
            "max_relative_discrepancy": self.max_relative_discrepancy,
            "max_principal_angle": self.max_principal_angle,
            "simple_pairs": self.simple_pairs,
            "bitwise_equal": self.bitwise_equal,
        }


def _check_motion(rotation: np.ndarray, translation: np.ndarray, dim: int) -> None:
    if rotation.shape != (dim, dim) or translation.shape != (dim,):
        raise ValueError(f"rigid motion must act on R^{dim}")
    if not np.allclose(rotation.T @ rotation, np.eye(dim), atol=1e-12) or np.linalg.det(rotation) <= 0:
        raise ValueError("rotation must be proper orthogonal")


def isometry_test(
    complex: SimplicialComplex,
    spec: FieldSpec,
    rotation: np.ndarray,
    translation: np.ndarray,
    k: int,
    count: int = 20,
    bc: Optional[str] = None,
    pushforward: bool = True,
    zero_tol: float = ZERO_TOL,
    workers: Optional[int] = None,
) -> IsometryReport:
    """
    Compare the spectrum on a mesh with that on its rigidly moved copy. The
    field is pushed forward by the rotation unless pushforward is False,
    which serves as a control that must break the invariance.
    :return: IsometryReport
    """
    if complex.periods is not None:
        raise ValueError("rigid motion of a periodic mesh is not supported")
    rotation = np.asarray(rotation, dtype=float)
    translation = np.asarray(translation, dtype=float)
    _check_motion(rotation, translation, complex.ambient_dim)

    field = realize_field(complex, spec)
    moved = complex.transformed(rotation, translation)
    moved_vectors = field.vectors @ rotation.T if pushforward else field.vectors
    # both sides go through the same explicit realization
    base = realize_field(complex, FieldSpec(kind="explicit", vectors=field.vectors))
    image = realize_field(moved, FieldSpec(kind="explicit", vectors=moved_vectors))

    first = eigen(assemble(complex, base, workers), k, bc, count, zero_tol)
    second = eigen(assemble(moved, image, workers), k, bc, count, zero_tol)

    lam, mu = first.eigenvalues, second.eigenvalues
    floor = first.zero_threshold
    relative = np.abs(lam - mu) / np.maximum(np.maximum(np.abs(lam), np.abs(mu)), floor)
    # pairs of numerically zero eigenvalues agree
    relative[(np.abs(lam) <= floor) & (np.abs(mu) <= floor)] = 0.0

    angles, simple = [0.0], 0
    for i in range(count):
        neighbours = [lam[j] for j in (i - 1, i + 1) if 0 <= j < count]
        scale = max(abs(lam[i]), floor)
        if all(abs(lam[i] - other) > SIMPLE_GAP * scale for other in neighbours) and i + 1 < count:
            simple += 1
            angles.append(float(subspace_angles(first.vectors[:, i : i + 1], second.vectors[:, i : i + 1])[0]))

    return IsometryReport(
        k=k,
        count=count,
        pushforward=pushforward,
        eigenvalues=lam,
        moved_eigenvalues=mu,
        max_relative_discrepancy=float(relative.max()),
        max_principal_angle=max(angles),
        simple_pairs=simple,
        bitwise_equal=bool(np.array_equal(lam, mu)),
    )


@dataclass
class SignFlipReport:
    k: int
    mass_equal: bool
    spectrum_equal: bool

    @property
    def passed(self) -> bool:
        return self.mass_equal and self.spectrum_equal

    def to_dict(self) -> Dict:
        return {"k": self.k, "mass_equal": self.mass_equal, "spectrum_equal": self.spectrum_equal}


def _same(a, b) -> bool:
    return a.shape == b.shape and (a != b).nnz == 0


def sign_flip_test(
    complex: SimplicialComplex,
    spec: FieldSpec,
    k: int,
    count: int = 10,
    bc: Optional[str] = None,
    workers: Optional[int] = None,
) -> SignFlipReport:
    """
    Fields v and -v give bitwise equal v-induced masses and spectra
    """
    field: DiscreteField = realize_field(complex, spec)
    forward = assemble(complex, field, workers)
    backward = assemble(complex, field.flipped(), workers)
    mass_equal = all(_same(a.induced, b.induced) for a, b in zip(forward.mass, backward.mass))
    spectrum_equal = bool(
        np.array_equal(
            eigen(forward, k, bc, count).eigenvalues, eigen(backward, k, bc, count).eigenvalues
        )
    )
    if not (mass_equal and spectrum_equal):
        log.warning(f"sign flip changed the degree {k} operators")
    return SignFlipReport(k=k, mass_equal=mass_equal, spectrum_equal=spectrum_equal)
