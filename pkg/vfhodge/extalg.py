"""
Pointwise exterior algebra over an n-dimensional inner-product space.

Forms are stored as dense coefficient vectors over the lexicographic basis
dx^{i_1} ^ ... ^ dx^{i_k} with i_1 < ... < i_k (zero-based indices).
Every operator has a matrix realization so that assembly can use the same
kernel element-wise.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.linalg import norm
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr, solve_triangular
from scipy.special import comb
from tqdm.auto import tqdm

MAX_DIM = 8
METRIC_EPS = 1e-3


def check_dimension(n: int) -> None:
    if n > MAX_DIM:
        raise ValueError("dimension cap exceeded")
    if n < 2:
        raise ValueError(f"dimension must be at least 2, got {n}")


def binomial(n: int, k: int) -> int:
    return int(comb(n, k, exact=True))


def _parity(seq: Sequence[int]) -> int:
    """
    Sign of the permutation sorting seq (entries distinct)
    :param seq: sequence of distinct integers
    :return: +1 or -1
    """
    inversions = sum(
        1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j]
    )
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def basis_indices(n: int, k: int) -> Tuple[Tuple[int, ...], ...]:
    """
    Strictly increasing k-subsets of range(n) in lexicographic order
    """
    check_dimension(n)
    if not 0 <= k <= n:
        raise ValueError("degree exceeds dimension")
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def basis_position(n: int, k: int) -> Dict[Tuple[int, ...], int]:
    return {idx: pos for pos, idx in enumerate(basis_indices(n, k))}


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, q: int) -> Tuple[np.ndarray, ...]:
    """
    Index table of the product of the degree p and degree q bases
    :return: (left positions, right positions, output positions, signs)
    """
    out_pos = basis_position(n, p + q)
    rows = []
    for ia, a in enumerate(basis_indices(n, p)):
        for ib, b in enumerate(basis_indices(n, q)):
            if set(a) & set(b):
                continue
            merged = a + b
            rows.append((ia, ib, out_pos[tuple(sorted(merged))], _parity(merged)))
    table = np.array(rows, dtype=int).reshape(-1, 4)
    return tuple(np.ascontiguousarray(table[:, c]) for c in range(4))


@lru_cache(maxsize=None)
def _interior_table(n: int, k: int) -> Tuple[np.ndarray, ...]:
    """
    i_v dx^I = sum_s (-1)^s v^{i_s} dx^{I without i_s}
    :return: (input positions, output positions, vector components, signs)
    """
    out_pos = basis_position(n, k - 1)
    rows = []
    for i_in, idx in enumerate(basis_indices(n, k)):
        for s, comp in enumerate(idx):
            rest = idx[:s] + idx[s + 1 :]
            rows.append((i_in, out_pos[rest], comp, -1 if s % 2 else 1))
    table = np.array(rows, dtype=int).reshape(-1, 4)
    return tuple(np.ascontiguousarray(table[:, c]) for c in range(4))


@lru_cache(maxsize=None)
def _complement_table(n: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    For every k-index J: position of its complement among (n-k)-indices and
    the sign of the permutation (J, complement of J)
    """
    out_pos = basis_position(n, n - k)
    positions, signs = [], []
    for idx in basis_indices(n, k):
        rest = tuple(i for i in range(n) if i not in idx)
        positions.append(out_pos[rest])
        signs.append(_parity(idx + rest))
    return np.array(positions, dtype=int), np.array(signs, dtype=float)


@dataclass(frozen=True, eq=False)
class PointMetric:
    """
    Symmetric positive definite inner product at a point
    """

    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: float

    @classmethod
    def from_matrix(cls, g: np.ndarray) -> "PointMetric":
        """
        Validate g and cache its inverse and volume density
        :param g: n x n symmetric positive definite matrix
        :return: PointMetric
        """
        g = np.array(g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"metric must be square, got shape {g.shape}")
        if not np.array_equal(g, g.T):
            raise ValueError("metric not symmetric")
        try:
            factor = cho_factor(g, lower=True)
        except LinAlgError:
            raise ValueError("metric not positive definite")
        g_inv = cho_solve(factor, np.eye(len(g)))
        g_inv = 0.5 * (g_inv + g_inv.T)
        sqrt_det = float(np.prod(np.diag(factor[0])))
        return cls(g=g, g_inv=g_inv, sqrt_det=sqrt_det)

    @classmethod
    def from_frame(cls, edges: np.ndarray) -> "PointMetric":
        """
        Pullback metric E E^T of a frame, inverted through the QR factor of E^T
        so that thin frames keep an accurate inverse and volume
        :param edges: n x d frame vectors, n <= d
        :return: PointMetric
        """
        edges = np.asarray(edges, dtype=float)
        r = qr(edges.T, mode="economic")[1]
        if np.any(np.diag(r) == 0):
            raise ValueError("frame is rank deficient")
        r_inv = solve_triangular(r, np.eye(len(r)))
        g = r.T @ r
        g_inv = r_inv @ r_inv.T
        return cls(
            g=0.5 * (g + g.T), g_inv=0.5 * (g_inv + g_inv.T), sqrt_det=float(np.abs(np.prod(np.diag(r))))
        )

    @classmethod
    def identity(cls, n: int) -> "PointMetric":
        return cls.from_matrix(np.eye(n))

    @property
    def n(self) -> int:
        return len(self.g)

    def gram(self, k: int) -> np.ndarray:
        """
        Inner products of the degree k basis forms: determinants of the
        k x k submatrices of g_inv (compound matrix), exactly symmetric
        :param k: degree
        :return: C(n,k) x C(n,k) matrix
        """
        c = compound_matrix(self.g_inv, k)
        return 0.5 * (c + c.T)


@dataclass(frozen=True, eq=False)
class KFormValue:
    n: int
    degree: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.degree <= self.n:
            raise ValueError("degree exceeds dimension")
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        expected = binomial(self.n, self.degree)
        if coeffs.shape != (expected,):
            raise ValueError(
                f"degree {self.degree} form in dimension {self.n} needs {expected} coefficients, got {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, n: int, k: int) -> "KFormValue":
        return cls(n, k, np.zeros(binomial(n, k)))

    @classmethod
    def scalar(cls, n: int, value: float) -> "KFormValue":
        return cls(n, 0, np.array([value], dtype=float))

    @classmethod
    def basis_form(cls, n: int, idx: Sequence[int]) -> "KFormValue":
        k = len(idx)
        coeffs = np.zeros(binomial(n, k))
        coeffs[basis_position(n, k)[tuple(idx)]] = 1.0
        return cls(n, k, coeffs)

    def _same_space(self, other: "KFormValue") -> None:
        if self.n != other.n or self.degree != other.degree:
            raise ValueError(
                f"forms live in different spaces: (n={self.n}, k={self.degree}) and (n={other.n}, k={other.degree})"
            )

    def __add__(self, other: "KFormValue") -> "KFormValue":
        self._same_space(other)
        return KFormValue(self.n, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "KFormValue") -> "KFormValue":
        self._same_space(other)
        return KFormValue(self.n, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, factor: float) -> "KFormValue":
        return KFormValue(self.n, self.degree, self.coeffs * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "KFormValue":
        return KFormValue(self.n, self.degree, -self.coeffs)


@dataclass(frozen=True, eq=False)
class TangentVector:
    components: np.ndarray

    def __post_init__(self) -> None:
        components = np.atleast_1d(np.asarray(self.components, dtype=float))
        if components.ndim != 1:
            raise ValueError("tangent vector must be one-dimensional")
        if not np.all(np.isfinite(components)):
            raise ValueError("tangent vector has non-finite entries")
        object.__setattr__(self, "components", components)

    @property
    def n(self) -> int:
        return len(self.components)


def _vector(v) -> np.ndarray:
    return v.components if isinstance(v, TangentVector) else np.asarray(v, dtype=float)


def compound_matrix(a: np.ndarray, k: int) -> np.ndarray:
    """
    k-th compound matrix: C[I, J] = det(a[I, J]) over lexicographic k-subsets
    :param a: n x n matrix
    :param k: order
    :return: C(n,k) x C(n,k) matrix
    """
    n = len(a)
    if k == 0:
        return np.ones((1, 1))
    idx = np.array(basis_indices(n, k), dtype=int)
    sub = a[idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def wedge_matrix(u, n: int, k: int) -> np.ndarray:
    """
    Matrix of left multiplication by a 1-form u, from degree k to degree k+1
    """
    u = u.coeffs if isinstance(u, KFormValue) else np.asarray(u, dtype=float)
    mat = np.zeros((binomial(n, k + 1), binomial(n, k)))
    if k + 1 > n:
        return mat
    ia, ib, iout, sign = _wedge_table(n, 1, k)
    np.add.at(mat, (iout, ib), sign * u[ia])
    return mat


def interior_matrix(v, n: int, k: int) -> np.ndarray:
    """
    Matrix of the interior product with v, from degree k to degree k-1
    """
    v = _vector(v)
    if k == 0:
        return np.zeros((1, 1))
    mat = np.zeros((binomial(n, k - 1), binomial(n, k)))
    i_in, i_out, comp, sign = _interior_table(n, k)
    np.add.at(mat, (i_out, i_in), sign * v[comp])
    return mat


def star_matrix(g: PointMetric, k: int) -> np.ndarray:
    """
    Hodge star from degree k to degree n-k defined by
    w ^ *eta = <w, eta>_g mu_g with mu_g = sqrt_det dx^1 ^ ... ^ dx^n
    """
    n = g.n
    positions, signs = _complement_table(n, k)
    gram = g.gram(k)
    mat = np.zeros((binomial(n, n - k), binomial(n, k)))
    mat[positions] = (signs * g.sqrt_det)[:, None] * gram
    return mat


def norm_sq(v, g: PointMetric) -> float:
    v = _vector(v)
    return float(v @ g.g @ v)


def t_v_matrix(v, g: PointMetric, k: int) -> np.ndarray:
    """
    T_v = id + v_flat ^ i_v on degree k forms
    """
    n = g.n
    v = _vector(v)
    eye = np.eye(binomial(n, k))
    if k == 0:
        return eye
    return eye + wedge_matrix(g.g @ v, n, k - 1) @ interior_matrix(v, n, k)


def t_v_inv_matrix(v, g: PointMetric, k: int) -> np.ndarray:
    n = g.n
    v = _vector(v)
    eye = np.eye(binomial(n, k))
    if k == 0:
        return eye
    proj = wedge_matrix(g.g @ v, n, k - 1) @ interior_matrix(v, n, k)
    return eye - proj / (1.0 + norm_sq(v, g))


def inner_gv_matrix(v, g: PointMetric, k: int) -> np.ndarray:
    """
    Bilinear form of the v-induced inner product <T_v a, b>_g on degree k,
    symmetrized to remove rounding asymmetry
    """
    form = t_v_matrix(v, g, k).T @ g.gram(k)
    return 0.5 * (form + form.T)


def wedge(a: KFormValue, b: KFormValue) -> KFormValue:
    if a.n != b.n:
        raise ValueError(f"dimensions differ: {a.n} and {b.n}")
    n, p, q = a.n, a.degree, b.degree
    if p + q > n:
        raise ValueError("degree exceeds dimension")
    ia, ib, iout, sign = _wedge_table(n, p, q)
    out = np.zeros(binomial(n, p + q))
    np.add.at(out, iout, sign * a.coeffs[ia] * b.coeffs[ib])
    return KFormValue(n, p + q, out)


def interior(v, w: KFormValue) -> KFormValue:
    """
    Insert v into the first slot; zero on functions
    """
    if w.degree == 0:
        return KFormValue.scalar(w.n, 0.0)
    return KFormValue(w.n, w.degree - 1, interior_matrix(v, w.n, w.degree) @ w.coeffs)


def flat(v, g: PointMetric) -> KFormValue:
    return KFormValue(g.n, 1, g.g @ _vector(v))


def sharp(w: KFormValue, g: PointMetric) -> TangentVector:
    if w.degree != 1:
        raise ValueError(f"sharp expects a 1-form, got degree {w.degree}")
    return TangentVector(g.g_inv @ w.coeffs)


def inner_g(a: KFormValue, b: KFormValue, g: PointMetric) -> float:
    if a.degree != b.degree:
        raise ValueError(f"degrees differ: {a.degree} and {b.degree}")
    return float(a.coeffs @ g.gram(a.degree) @ b.coeffs)


def hodge_star(w: KFormValue, g: PointMetric) -> KFormValue:
    return KFormValue(w.n, w.n - w.degree, star_matrix(g, w.degree) @ w.coeffs)


def t_v(w: KFormValue, v, g: PointMetric) -> KFormValue:
    if w.degree == 0:
        return KFormValue(w.n, 0, w.coeffs.copy())
    return w + wedge(flat(v, g), interior(v, w))


def t_v_inv(w: KFormValue, v, g: PointMetric) -> KFormValue:
    if w.degree == 0:
        return KFormValue(w.n, 0, w.coeffs.copy())
    return w - wedge(flat(v, g), interior(v, w)) * (1.0 / (1.0 + norm_sq(v, g)))


def star_v(w: KFormValue, v, g: PointMetric) -> KFormValue:
    return hodge_star(t_v(w, v, g), g)


def star_v_inv(w: KFormValue, v, g: PointMetric) -> KFormValue:
    """
    Inverse of star_v: T_v^{-1} applied after the inverse Hodge star,
    where *^{-1} = (-1)^{k(n-k)} * on degree n-k forms
    """
    n, j = w.n, w.degree
    sign = (-1) ** (j * (n - j))
    return t_v_inv(hodge_star(w, g) * sign, v, g)


def inner_gv(a: KFormValue, b: KFormValue, v, g: PointMetric) -> float:
    return inner_g(t_v(a, v, g), b, g)


def random_metric(rng: np.random.Generator, n: int, eps: float = METRIC_EPS) -> PointMetric:
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    g = a.T @ a + eps * np.eye(n)
    return PointMetric.from_matrix(0.5 * (g + g.T))


def random_form(rng: np.random.Generator, n: int, k: int) -> KFormValue:
    return KFormValue(n, k, rng.standard_normal(binomial(n, k)))


def random_vector(rng: np.random.Generator, n: int) -> TangentVector:
    return TangentVector(rng.standard_normal(n))


@dataclass
class IdentityRecord:
    name: str
    k: int
    trials: int = 0
    max_abs: float = 0.0
    max_rel: float = 0.0

    def update(self, residual: float, scale: float) -> None:
        residual = abs(float(residual))
        self.trials += 1
        self.max_abs = max(self.max_abs, residual)
        self.max_rel = max(self.max_rel, residual / scale if scale > 0 else residual)


@dataclass
class IdentityReport:
    """
    Residuals of the pointwise identities, per identity and degree
    """

    n: int
    trials: int
    seed: int
    records: List[IdentityRecord] = field(default_factory=list)

    @property
    def identities(self) -> Dict[str, Dict[str, float]]:
        summary = {}
        for rec in self.records:
            entry = summary.setdefault(rec.name, {"trials": 0, "max_abs": 0.0, "max_rel": 0.0})
            entry["trials"] += rec.trials
            entry["max_abs"] = max(entry["max_abs"], rec.max_abs)
            entry["max_rel"] = max(entry["max_rel"], rec.max_rel)
        return summary

    def failures(self, threshold: float = 1e-10) -> List[str]:
        return sorted(
            name for name, entry in self.identities.items() if entry["max_rel"] > threshold
        )

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "identities": self.identities,
            "by_degree": [
                {
                    "identity": rec.name,
                    "k": rec.k,
                    "trials": rec.trials,
                    "max_abs": rec.max_abs,
                    "max_rel": rec.max_rel,
                }
                for rec in self.records
            ],
        }


def _op(mat: np.ndarray) -> float:
    return float(norm(mat, 2)) if mat.size else 0.0


def verify_identities(n: int, trials: int, seed: int = 0, progress: bool = False) -> IdentityReport:
    """
    Check the algebraic identities of the v-induced structure on random data.
    Relative residuals are taken against the magnitude of the operands
    (operator norms times input norms), the natural floor of rounding errors.
    :param n: dimension, 2 <= n <= 8
    :param trials: number of random (metric, vector) draws
    :param seed: generator seed
    :param progress: show a tqdm progress bar
    :return: IdentityReport
    """
    check_dimension(n)
    if trials < 1:
        raise ValueError("trials must be positive")

    rng = np.random.default_rng(seed)
    records: Dict[Tuple[str, int], IdentityRecord] = {}

    def record(name: str, k: int, residual: float, scale: float) -> None:
        key = (name, k)
        if key not in records:
            records[key] = IdentityRecord(name, k)
        records[key].update(residual, scale)

    for _ in tqdm(range(trials), desc=f"identities n={n}", disable=not progress):
        g = random_metric(rng, n)
        v = random_vector(rng, n)
        vf = flat(v, g)
        s = norm_sq(v, g)
        grams = [g.gram(k) for k in range(n + 1)]
        stars = [star_matrix(g, k) for k in range(n + 1)]
        tvs = [t_v_matrix(v, g, k) for k in range(n + 1)]
        tv_invs = [t_v_inv_matrix(v, g, k) for k in range(n + 1)]
        ints = [interior_matrix(v, n, k) for k in range(n + 1)]
        wedges = [wedge_matrix(vf, n, k) for k in range(n)]

        back = sharp(vf, g).components
        record("sharp_flat_roundtrip", 1, norm(back - v.components),
               _op(g.g_inv) * _op(g.g) * norm(v.components))

        for k in range(n + 1):
            w = random_form(rng, n, k)
            a = random_form(rng, n, k)
            b = random_form(rng, n, k)
            sk, tk, tik, gk = stars[k], tvs[k], tv_invs[k], grams[k]
            sign_kk = (-1) ** (k * (n - k))

            # T_v symmetric, positive, invertible
            lhs, rhs = inner_gv(a, b, v, g), inner_gv(b, a, v, g)
            record("tv_self_adjoint", k, lhs - rhs, _op(tk) * _op(gk) * norm(a.coeffs) * norm(b.coeffs))
            expand = inner_g(a, b, g) + inner_g(interior(v, a), interior(v, b), g)
            record("tv_expansion", k, lhs - expand,
                   (_op(tk) * _op(gk) + _op(ints[k]) ** 2 * _op(grams[max(k - 1, 0)]))
                   * norm(a.coeffs) * norm(b.coeffs))
            ratio = inner_gv(w, w, v, g) / inner_g(w, w, g)
            record("tv_positive", k, max(0.0, 1.0 - ratio), 1.0)
            record("tv_inverse_left", k, norm(t_v_inv(t_v(w, v, g), v, g).coeffs - w.coeffs),
                   _op(tik) * _op(tk) * norm(w.coeffs))
            record("tv_inverse_right", k, norm(t_v(t_v_inv(w, v, g), v, g).coeffs - w.coeffs),
                   _op(tik) * _op(tk) * norm(w.coeffs))

            # Hodge star
            star_w = hodge_star(w, g)
            record("star_star", k, norm(hodge_star(star_w, g).coeffs - sign_kk * w.coeffs),
                   _op(stars[n - k]) * _op(sk) * norm(w.coeffs))
            i, j = rng.integers(binomial(n, k), size=2)
            e_i = KFormValue(n, k, np.eye(binomial(n, k))[i])
            e_j = KFormValue(n, k, np.eye(binomial(n, k))[j])
            top = wedge(e_i, hodge_star(e_j, g)).coeffs[0]
            record("star_defining", k, top - gk[i, j] * g.sqrt_det, g.sqrt_det * _op(gk))
            scaled = hodge_star(t_v(w, v, g), g).coeffs
            target = (1.0 + s) * t_v_inv(star_w, v, g).coeffs
            record("star_tv", k, norm(scaled - target),
                   (_op(sk) * _op(tk) + (1.0 + s) * _op(tv_invs[n - k]) * _op(sk)) * norm(w.coeffs))
            twice = star_v(star_v(w, v, g), v, g).coeffs
            record("star_v_star_v", k, norm(twice - sign_kk * (1.0 + s) * w.coeffs),
                   _op(stars[n - k]) * _op(tvs[n - k]) * _op(sk) * _op(tk) * norm(w.coeffs))
            record("star_v_inverse", k, norm(star_v_inv(star_v(w, v, g), v, g).coeffs - w.coeffs),
                   _op(tv_invs[k]) * _op(stars[n - k]) * _op(sk) * _op(tk) * norm(w.coeffs))

            # wedge
            q = int(rng.integers(0, n - k + 1))
            u = random_form(rng, n, q)
            ab = wedge(w, u).coeffs
            ba = wedge(u, w).coeffs
            record("wedge_anticommute", k, norm(ab - (-1) ** (k * q) * ba),
                   np.sqrt(binomial(n, k + q)) * norm(w.coeffs) * norm(u.coeffs))

            if k == 0:
                continue

            # interior and the adjoint pair (v_flat ^ ., i_v)
            wk1 = wedges[k - 1]
            zeta = random_form(rng, n, k - 1)
            record("interior_twice", k, norm(interior(v, interior(v, w)).coeffs),
                   _op(ints[k - 1]) * _op(ints[k]) * norm(w.coeffs))
            lhs = inner_g(wedge(vf, zeta), w, g)
            rhs = inner_g(zeta, interior(v, w), g)
            record("wedge_interior_adjoint", k, lhs - rhs,
                   (_op(wk1) * _op(gk) + _op(grams[k - 1]) * _op(ints[k]))
                   * norm(zeta.coeffs) * norm(w.coeffs))
            lhs = hodge_star(wedge(vf, zeta), g).coeffs
            rhs = (-1) ** (k - 1) * interior(v, hodge_star(zeta, g)).coeffs
            record("star_of_wedge_flat", k, norm(lhs - rhs),
                   (_op(sk) * _op(wk1) + _op(ints[n - k + 1]) * _op(stars[k - 1])) * norm(zeta.coeffs))
            lhs = hodge_star(interior(v, w), g).coeffs
            rhs = (-1) ** (k - 1) * wedge(vf, star_w).coeffs
            record("star_of_interior", k, norm(lhs - rhs),
                   (_op(stars[k - 1]) * _op(ints[k]) + _op(wedges[n - k]) * _op(sk)) * norm(w.coeffs))

    report = IdentityReport(n=n, trials=trials, seed=seed)
    report.records = sorted(records.values(), key=lambda rec: (rec.name, rec.k))
    return report
