import unittest
from unittest import mock

import numpy as np
from scipy.linalg import LinAlgError, null_space

from vfhodge import meshgen
from vfhodge.assembly import assemble
from vfhodge.hodge import (
    betti_numbers,
    cochain_vectors,
    decompose,
    decompose_four,
    duality_dimensions,
    friedrichs_split,
    harmonic_basis,
    harmonic_representative,
    harmonic_residuals,
)
from vfhodge.mesh import FieldSpec, realize_field
from vfhodge.spectra import eigen
from vfhodge.util import fix_signs, minimum_norm_solve


def operators_for(complex, spec):
    return assemble(complex, realize_field(complex, spec), workers=1)


class BettiTestCase(unittest.TestCase):
    def test_torus(self):
        ops = operators_for(meshgen.flat_torus(4), FieldSpec(kind="random", seed=0))
        self.assertEqual(betti_numbers(ops), (1, 2, 1))

    def test_torus3d(self):
        ops = operators_for(meshgen.torus3d(8, 5), FieldSpec(kind="rotational", axis=(0.0, 0.0, 1.0)))
        self.assertEqual(betti_numbers(ops), (1, 2, 1))

    def test_sphere(self):
        ops = operators_for(meshgen.sphere(1), FieldSpec(kind="random", scale=0.5, seed=2))
        self.assertEqual(betti_numbers(ops), (1, 0, 1))

    def test_annulus(self):
        ops = operators_for(meshgen.annulus(2, 10), FieldSpec(kind="random", seed=1))
        self.assertEqual(betti_numbers(ops, "tangential"), (1, 1, 0))
        self.assertEqual(betti_numbers(ops, "normal"), (0, 1, 1))

    def test_disk(self):
        ops = operators_for(meshgen.disk(2, 8), FieldSpec(kind="radial"))
        self.assertEqual(betti_numbers(ops, "tangential"), (1, 0, 0))
        self.assertEqual(betti_numbers(ops, "normal"), (0, 0, 1))

    def test_field_independence(self):
        torus = meshgen.flat_torus(5)
        for seed in range(5):
            ops = operators_for(torus, FieldSpec(kind="random", scale=2.0, seed=seed))
            self.assertEqual(betti_numbers(ops), (1, 2, 1))

    def test_field_independence_with_boundary(self):
        expected = {
            "annulus": {"tangential": (1, 1, 0), "normal": (0, 1, 1)},
            "disk": {"tangential": (1, 0, 0), "normal": (0, 0, 1)},
        }
        meshes = {"annulus": meshgen.annulus(2, 10), "disk": meshgen.disk(2, 8)}
        for name, complex in meshes.items():
            for seed in range(5):
                ops = operators_for(complex, FieldSpec(kind="random", seed=seed))
                for bc, dims in expected[name].items():
                    self.assertEqual(betti_numbers(ops, bc), dims, f"{name} {bc} seed={seed}")

    def test_basis_is_orthonormal_and_harmonic(self):
        ops = operators_for(meshgen.flat_torus(5), FieldSpec(kind="random", seed=3))
        basis = harmonic_basis(ops, 1)
        mass = ops.mass[1].induced
        self.assertTrue(np.allclose(basis.vectors.T @ mass @ basis.vectors, np.eye(2), atol=1e-10))
        for h in basis.vectors.T:
            d_res, c_res = harmonic_residuals(ops, h, 1)
            self.assertLess(max(d_res, c_res), 1e-10)

    def test_duality(self):
        for complex in (meshgen.annulus(2, 10), meshgen.disk(2, 8)):
            table = duality_dimensions(operators_for(complex, FieldSpec(kind="random", seed=5)))
            self.assertTrue(table.passed)

    def test_zero_field_reduction(self):
        torus = meshgen.flat_torus(4)
        zero = operators_for(torus, FieldSpec.zero())
        standard = operators_for(torus, FieldSpec(kind="random", seed=6)).standard()
        for k in (0, 1, 2):
            diff = zero.mass[k].induced - standard.mass[k].induced
            self.assertLessEqual(np.abs(diff.toarray()).max(), 1e-14)
        diff = harmonic_basis(zero, 1).vectors - harmonic_basis(standard, 1).vectors
        self.assertLessEqual(np.abs(diff).max(), 1e-12)


class DecomposeTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.rng = np.random.default_rng(0)
        self.torus = meshgen.flat_torus(5)
        self.annulus = meshgen.annulus(2, 10)

    def test_random_cochain(self):
        for complex in (self.torus, self.annulus):
            ops = operators_for(complex, FieldSpec(kind="random", seed=1))
            for k in (0, 1, 2):
                for _ in range(50):
                    omega = self.rng.standard_normal(complex.count(k))
                    result = decompose(ops, omega, k)
                    self.assertLessEqual(result.residuals["reconstruction"], 1e-10, f"k={k}")
                    self.assertLessEqual(result.residuals["orthogonality"], 1e-10, f"k={k}")
                    for name, value in result.residuals.items():
                        self.assertLess(value, 1e-8, f"{name} for k={k}")

    def test_exact_cochain(self):
        ops = operators_for(self.torus, FieldSpec(kind="rotational", center=(1.0, 2.0)))
        omega = ops.d(0) @ self.rng.standard_normal(self.torus.n_vertices)
        result = decompose(ops, omega, 1)
        scale = np.linalg.norm(omega)
        self.assertLess(np.linalg.norm(result.coexact) / scale, 1e-8)
        self.assertLess(np.linalg.norm(result.harmonic) / scale, 1e-8)
        self.assertTrue(np.allclose(result.exact, omega))

    def test_gauge(self):
        ops = operators_for(self.torus, FieldSpec(kind="random", seed=2))
        omega = self.rng.standard_normal(self.torus.n_edges)
        result = decompose(ops, omega, 1)
        constants = np.ones(self.torus.n_vertices)
        alpha_mass = result.alpha @ (ops.mass[0].induced @ constants)
        self.assertLess(abs(alpha_mass), 1e-8 * np.linalg.norm(result.alpha) * self.torus.n_vertices)

    def test_gauge_against_kernel(self):
        ops = operators_for(self.annulus, FieldSpec(kind="random", seed=2))
        omega = self.rng.standard_normal(self.annulus.n_triangles)
        result = decompose(ops, omega, 2)
        low = ops.restrict(1, "normal")
        self.assertTrue(np.array_equal(result.alpha_dofs, low.dofs))
        d = ops.d(1)[:, low.dofs]
        kernel = null_space(d.toarray())
        self.assertGreater(kernel.shape[1], 0)
        base = result.alpha @ (low.mass @ result.alpha)
        for _ in range(20):
            perturbed = result.alpha + kernel @ self.rng.standard_normal(kernel.shape[1])
            self.assertGreaterEqual(perturbed @ (low.mass @ perturbed), base * (1 - 1e-10))
            self.assertTrue(np.allclose(d @ perturbed, d @ result.alpha, atol=1e-10))

    def test_zero_field_reduction(self):
        zero = operators_for(self.annulus, FieldSpec.zero())
        standard = operators_for(self.annulus, FieldSpec(kind="random", seed=6)).standard()
        omega = self.rng.standard_normal(self.annulus.n_edges)
        a, b = decompose(zero, omega, 1), decompose(standard, omega, 1)
        for name in ("exact", "coexact", "harmonic"):
            self.assertLessEqual(np.abs(getattr(a, name) - getattr(b, name)).max(), 1e-12, name)
        for k in (0, 1, 2):
            lam = eigen(zero, k, "tangential", count=4).eigenvalues
            mu = eigen(standard, k, "tangential", count=4).eigenvalues
            self.assertLessEqual(np.abs(lam - mu).max(), 1e-12, f"k={k}")

    def test_zero_cochain(self):
        ops = operators_for(self.torus, FieldSpec.zero())
        result = decompose(ops, np.zeros(self.torus.n_edges), 1)
        self.assertEqual(np.abs(result.harmonic).max(), 0.0)

    def test_wrong_size(self):
        ops = operators_for(self.torus, FieldSpec.zero())
        with self.assertRaises(ValueError):
            decompose(ops, np.zeros(3), 1)

    def test_four_components(self):
        ops = operators_for(self.annulus, FieldSpec(kind="random", seed=3))
        omega = self.rng.standard_normal(self.annulus.n_edges)
        result = decompose_four(ops, omega, 1)
        for name in ("reconstruction", "orthogonality", "certification"):
            self.assertLess(result.residuals[name], 1e-8, name)


class SolverTestCase(unittest.TestCase):
    def test_minimum_norm(self):
        a = np.array([[1.0, 1.0], [1.0, 1.0]])
        x, report = minimum_norm_solve(a, np.array([2.0, 2.0]))
        self.assertTrue(np.allclose(x, [1.0, 1.0]))
        self.assertEqual(report["rank"], 1)

    def test_failure_reports_conditioning(self):
        a = np.array([[2.0, 0.0], [0.0, 1e-3]])
        side_effect = [LinAlgError("SVD did not converge"), np.array([2.0, 1e-3])]
        with mock.patch("vfhodge.util.svd", side_effect=side_effect):
            with self.assertRaisesRegex(RuntimeError, r"condition 2\.000e\+03"):
                minimum_norm_solve(a, np.ones(2))

    def test_fix_signs(self):
        vectors = np.array([[0.0, 1.0], [-2.0, -1.0], [1.0, 0.0]])
        fixed = fix_signs(vectors)
        self.assertTrue(np.array_equal(fixed, [[0.0, 1.0], [2.0, -1.0], [-1.0, 0.0]]))
        self.assertTrue(np.array_equal(vectors[1], [-2.0, -1.0]))


class FriedrichsTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.annulus = meshgen.annulus(2, 10)
        self.ops = operators_for(self.annulus, FieldSpec(kind="random", seed=4))

    def test_normal_split(self):
        h = harmonic_basis(self.ops, 1, "tangential").vectors[:, 0]
        split = friedrichs_split(self.ops, h, 1, "normal")
        self.assertLess(split.certification_residual, 1e-8)
        self.assertLess(split.orthogonality, 1e-8)
        self.assertTrue(np.allclose(split.boundary_part + split.remainder, h))

    def test_tangential_split(self):
        h = harmonic_basis(self.ops, 1, "tangential").vectors[:, 0]
        split = friedrichs_split(self.ops, h, 1, "tangential")
        self.assertLess(split.certification_residual, 1e-8)

    def test_closed_mesh(self):
        torus = meshgen.flat_torus(4)
        ops = operators_for(torus, FieldSpec(kind="random", seed=0))
        h = harmonic_basis(ops, 1).vectors[:, 1]
        split = friedrichs_split(ops, h, 1)
        self.assertTrue(np.array_equal(split.boundary_part, h))
        self.assertEqual(np.abs(split.remainder).max(), 0.0)

    def test_not_harmonic(self):
        omega = np.random.default_rng(1).standard_normal(self.annulus.n_edges)
        with self.assertRaisesRegex(ValueError, "not a harmonic field"):
            friedrichs_split(self.ops, omega, 1)


class RepresentativeTestCase(unittest.TestCase):
    def test_cohomologous(self):
        torus = meshgen.flat_torus(5)
        ops = operators_for(torus, FieldSpec(kind="random", seed=8))
        h = harmonic_basis(ops, 1).vectors[:, 0]
        omega = h + ops.d(0) @ np.random.default_rng(2).standard_normal(torus.n_vertices)
        result = harmonic_representative(ops, omega, 1)
        self.assertTrue(np.allclose(result.representative, h, atol=1e-8))
        self.assertLess(result.exactness_residual, 1e-8)

    def test_not_closed(self):
        torus = meshgen.flat_torus(4)
        ops = operators_for(torus, FieldSpec.zero())
        omega = np.random.default_rng(3).standard_normal(torus.n_edges)
        with self.assertRaisesRegex(ValueError, "cochain is not closed"):
            harmonic_representative(ops, omega, 1)


class CochainVectorsTestCase(unittest.TestCase):
    def test_constant_form(self):
        torus = meshgen.flat_torus(4)
        ops = operators_for(torus, FieldSpec.zero())
        data = cochain_vectors(ops, torus.edge_vectors()[:, 0], 1)
        self.assertTrue(np.allclose(data["cell_vectors"], [1.0, 0.0]))

    def test_densities(self):
        pair = meshgen.triangle_pair()
        ops = operators_for(pair, FieldSpec.zero())
        data = cochain_vectors(ops, np.ones(2), 2)
        self.assertTrue(np.allclose(data["cell_scalars"], 2.0))


if __name__ == "__main__":
    unittest.main()
