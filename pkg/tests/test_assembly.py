import tempfile
import unittest
from pathlib import Path

import numpy as np

from vfhodge import meshgen
from vfhodge.assembly import (
    adjointness_residual,
    assemble,
    assemble_mass,
    bc_compare,
    codifferential_square_residual,
    element_metric,
    export_matrices,
    resolve_bc,
    restrict_normal,
    weak_codifferential_apply,
)
from vfhodge.mesh import FieldSpec, SimplicialComplex, realize_field


def operators_for(complex, spec, workers=1):
    return assemble(complex, realize_field(complex, spec), workers=workers)


class ElementTestCase(unittest.TestCase):
    def test_right_triangle_metric(self):
        metric = element_metric([[0, 0], [1, 0], [0, 1]])
        self.assertTrue(np.allclose(metric.g, np.eye(2)))
        self.assertAlmostEqual(metric.sqrt_det, 1.0, delta=1e-15)

    def test_equilateral_metric(self):
        metric = element_metric([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        self.assertTrue(np.allclose(metric.g, [[1.0, 0.5], [0.5, 1.0]]))

    def test_collinear(self):
        with self.assertRaisesRegex(ValueError, "degenerate element"):
            element_metric([[0, 0], [1, 0], [2, 0]])

    def test_thin_triangle(self):
        metric = element_metric([[0, 0], [1, 0], [0.5, 2e-9]])
        self.assertAlmostEqual(metric.sqrt_det / 2e-9, 1.0, delta=1e-9)
        self.assertAlmostEqual(metric.g_inv[1, 1] * 4e-18, 1.0, delta=1e-9)
        with self.assertRaisesRegex(ValueError, "degenerate element"):
            element_metric([[0, 0], [1, 0], [0.5, 2e-16]])

    def test_thin_triangle_mass(self):
        complex = SimplicialComplex.from_triangles([[0.0, 0.0], [1.0, 0.0], [0.5, 2e-9]], [[0, 1, 2]])
        field = realize_field(complex, FieldSpec.zero())
        scalar = assemble_mass(complex, field, 0, workers=1).standard.toarray()
        self.assertAlmostEqual(scalar.sum() / 1e-9, 1.0, delta=1e-9)
        top = assemble_mass(complex, field, 2, workers=1).standard.toarray()
        self.assertAlmostEqual(top[0, 0] * 1e-9, 1.0, delta=1e-9)

    def test_scalar_mass(self):
        complex = meshgen.single_triangle()
        mass = assemble_mass(complex, realize_field(complex, FieldSpec.zero()), 0, workers=1)
        expected = (np.ones((3, 3)) + np.eye(3)) / 24.0
        self.assertTrue(np.allclose(mass.standard.toarray(), expected, atol=1e-15))

    def test_area_form_mass(self):
        complex = meshgen.single_triangle()
        mass = assemble_mass(complex, realize_field(complex, FieldSpec.zero()), 2, workers=1)
        self.assertAlmostEqual(mass.standard[0, 0], 2.0, delta=1e-14)


class AssemblyTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.torus = meshgen.flat_torus(4)
        self.annulus = meshgen.annulus(2, 10)

    def test_zero_field_matches_standard(self):
        ops = operators_for(self.torus, FieldSpec.zero())
        for m in ops.mass:
            self.assertEqual(abs(m.induced - m.standard).max(), 0.0)

    def test_constant_field_scaling(self, a: float = 0.8):
        ops = operators_for(self.torus, FieldSpec(kind="constant", components=(a, 0.0)))
        m0, m2 = ops.mass[0], ops.mass[2]
        self.assertTrue(np.allclose(m0.induced.toarray(), m0.standard.toarray(), atol=1e-15))
        self.assertTrue(np.allclose(m2.induced.toarray(), (1 + a**2) * m2.standard.toarray()))

    def test_induced_dominates_standard(self):
        ops = operators_for(self.annulus, FieldSpec(kind="random", seed=4))
        for m in ops.mass:
            gap = (m.induced - m.standard).toarray()
            self.assertTrue(np.allclose(gap, gap.T))
            self.assertGreater(np.linalg.eigvalsh(gap).min(), -1e-12)
            self.assertGreater(np.linalg.eigvalsh(m.induced.toarray()).min(), 0.0)

    def test_adjointness(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        for complex in (self.torus, self.annulus):
            ops = operators_for(complex, FieldSpec(kind="random", seed=1))
            for bc in (None, "normal") if not complex.is_closed else (None,):
                for k in (1, 2):
                    self.assertLess(adjointness_residual(ops, k, rng, bc), 1e-11)

    def test_codifferential_twice(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        ops = operators_for(self.annulus, FieldSpec(kind="rotational", rate=2.0))
        for bc in ("tangential", "normal"):
            self.assertLess(codifferential_square_residual(ops, 2, rng, bc), 1e-10)
        with self.assertRaises(ValueError):
            codifferential_square_residual(ops, 1, rng)

    def test_energy_identity(self, seed: int = 2):
        rng = np.random.default_rng(seed)
        ops = operators_for(self.annulus, FieldSpec(kind="random", seed=3))
        for k in (0, 1, 2):
            s = ops.restrict(k)
            x = rng.standard_normal(s.size)
            self.assertAlmostEqual(x @ s.laplacian() @ x, s.energy(x), delta=1e-9 * s.energy(x))

    def test_weak_codifferential(self):
        ops = operators_for(self.torus, FieldSpec.zero())
        constant = np.ones(self.torus.n_vertices)
        self.assertTrue(np.allclose(ops.restrict(1).codifferential(ops.d(0) @ constant), 0.0))
        x = np.arange(self.torus.n_edges, dtype=float)
        self.assertTrue(
            np.array_equal(weak_codifferential_apply(ops, 1, x), ops.restrict(1).codifferential(x))
        )

    def test_restrict_normal_sizes(self):
        ops = operators_for(self.annulus, FieldSpec.zero())
        interior = self.annulus.n_edges - len(self.annulus.boundary_edges)
        self.assertEqual(restrict_normal(ops, 1).size, interior)
        self.assertEqual(restrict_normal(ops, 2).size, self.annulus.n_triangles)
        self.assertEqual(
            restrict_normal(ops, 0).size, self.annulus.n_vertices - len(self.annulus.boundary_vertices)
        )
        self.assertEqual(ops.restrict(1, "tangential").size, self.annulus.n_edges)

    def test_resolve_bc(self):
        self.assertEqual(resolve_bc(self.torus, None), "closed")
        self.assertEqual(resolve_bc(self.annulus, None), "tangential")
        with self.assertRaises(ValueError):
            resolve_bc(self.annulus, "closed")
        with self.assertRaises(ValueError):
            resolve_bc(self.torus, "dirichlet")

    def test_workers_bitwise(self):
        spec = FieldSpec(kind="random", seed=7)
        serial = operators_for(self.annulus, spec, workers=1)
        for workers in (2, 3):
            threaded = operators_for(self.annulus, spec, workers=workers)
            for a, b in zip(serial.mass, threaded.mass):
                self.assertTrue(np.array_equal(a.induced.toarray(), b.induced.toarray()))
                self.assertTrue(np.array_equal(a.standard.toarray(), b.standard.toarray()))

    def test_field_mismatch(self):
        field = realize_field(self.torus, FieldSpec.zero())
        with self.assertRaises(ValueError):
            assemble(self.annulus, field)

    def test_export(self):
        ops = operators_for(meshgen.triangle_pair(), FieldSpec.zero())
        with tempfile.TemporaryDirectory() as tmp:
            paths = export_matrices(ops, tmp)
            names = sorted(p.name for p in paths)
            self.assertTrue(all(Path(p).is_file() for p in paths))
        self.assertEqual(names, sorted(["M0.mtx", "M1.mtx", "M2.mtx", "Mv0.mtx", "Mv1.mtx", "Mv2.mtx", "D0.mtx", "D1.mtx"]))


class BoundaryCompareTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.annulus = meshgen.annulus(2, 12)

    def compare(self, spec):
        return bc_compare(self.annulus, realize_field(self.annulus, spec))

    def test_tangent_field(self):
        result = self.compare(FieldSpec(kind="rotational"))
        self.assertTrue(result.hypothesis_holds)
        self.assertLess(result.max_discrepancy, 1e-10)
        self.assertIsNone(result.counterexample)
        self.assertEqual(result.samples, len(self.annulus.boundary_edges))

    def test_normal_field(self):
        result = self.compare(FieldSpec(kind="radial"))
        self.assertTrue(result.hypothesis_holds)
        self.assertLess(result.max_discrepancy, 1e-10)

    def test_off_center_field(self):
        result = self.compare(FieldSpec(kind="radial", center=(0.3, 0.1)))
        self.assertFalse(result.hypothesis_holds)
        self.assertGreater(result.max_discrepancy, 1e-3)
        self.assertIn(result.counterexample["boundary_edge"], self.annulus.boundary_edges)

    def test_zero_field(self):
        result = self.compare(FieldSpec.zero())
        self.assertTrue(result.hypothesis_holds)
        self.assertEqual(result.max_discrepancy, 0.0)

    def test_closed_mesh(self):
        torus = meshgen.flat_torus(4)
        with self.assertRaisesRegex(ValueError, "mesh has no boundary"):
            bc_compare(torus, realize_field(torus, FieldSpec.zero()))


if __name__ == "__main__":
    unittest.main()
