import unittest

import numpy as np

from vfhodge import meshgen
from vfhodge.assembly import assemble
from vfhodge.mesh import FieldSpec, realize_field
from vfhodge.spectra import eigen, isometry_test, random_rotation, sign_flip_test


def operators_for(complex, spec):
    return assemble(complex, realize_field(complex, spec), workers=1)


class EigenTestCase(unittest.TestCase):
    def test_flat_torus_functions(self):
        ops = operators_for(meshgen.flat_torus(8), FieldSpec.zero())
        report = eigen(ops, 0, count=5)
        self.assertAlmostEqual(report.eigenvalues[0], 0.0, delta=1e-10)
        for value in report.eigenvalues[1:]:
            self.assertAlmostEqual(value, 1.0, delta=0.1)
        self.assertEqual(report.zero_multiplicity, 1)
        self.assertLess(report.residuals.max(), 1e-8)

    def test_one_form_kernel(self):
        ops = operators_for(meshgen.flat_torus(5), FieldSpec(kind="random", seed=0))
        report = eigen(ops, 1, count=4)
        self.assertEqual(report.zero_multiplicity, 2)
        self.assertGreater(report.eigenvalues[0], -1e-10 * report.lambda_max)

    def test_positive_semidefinite(self):
        ops = operators_for(meshgen.annulus(2, 10), FieldSpec(kind="random", seed=1))
        for k in (0, 1, 2):
            for bc in ("tangential", "normal"):
                report = eigen(ops, k, bc, count=3)
                self.assertGreaterEqual(report.min_ratio, -1e-10)

    def test_eigenvectors_orthonormal(self):
        ops = operators_for(meshgen.sphere(1), FieldSpec(kind="random", seed=2))
        report = eigen(ops, 1, count=6)
        mass = ops.mass[1].induced
        self.assertTrue(np.allclose(report.vectors.T @ mass @ report.vectors, np.eye(6), atol=1e-10))

    def test_count_range(self):
        ops = operators_for(meshgen.triangle_pair(), FieldSpec.zero())
        with self.assertRaisesRegex(ValueError, "count"):
            eigen(ops, 0, count=5)
        with self.assertRaises(ValueError):
            eigen(ops, 0, count=0)


class IsometryTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.torus = meshgen.torus3d(6, 4)
        self.spec = FieldSpec(kind="rotational", axis=(0.0, 0.0, 1.0))

    def test_random_motion(self):
        rotation = random_rotation(seed=0)
        for k in (0, 1, 2):
            report = isometry_test(self.torus, self.spec, rotation, [0.3, -0.2, 0.5], k, count=20, workers=1)
            self.assertLess(report.max_relative_discrepancy, 1e-9)
            self.assertLess(report.max_principal_angle, 1e-6)

    def test_identity_motion(self):
        report = isometry_test(self.torus, self.spec, np.eye(3), np.zeros(3), 1, count=20, workers=1)
        self.assertTrue(report.bitwise_equal)

    def test_control(self):
        rotation = random_rotation(seed=1)
        report = isometry_test(
            self.torus, self.spec, rotation, np.zeros(3), 1, count=20, pushforward=False, workers=1
        )
        self.assertGreater(report.max_relative_discrepancy, 1e-6)

    def test_rejections(self):
        with self.assertRaisesRegex(ValueError, "periodic"):
            isometry_test(meshgen.flat_torus(4), FieldSpec.zero(), np.eye(2), np.zeros(2), 0, count=3)
        reflection = np.diag([1.0, 1.0, -1.0])
        with self.assertRaisesRegex(ValueError, "proper orthogonal"):
            isometry_test(self.torus, self.spec, reflection, np.zeros(3), 0, count=3)

    def test_random_rotation(self):
        rotation = random_rotation(seed=3)
        self.assertTrue(np.allclose(rotation.T @ rotation, np.eye(3)))
        self.assertAlmostEqual(np.linalg.det(rotation), 1.0, delta=1e-12)


class SignFlipTestCase(unittest.TestCase):
    def test_sign_flip(self):
        complex = meshgen.annulus(2, 8)
        for k in (0, 1, 2):
            report = sign_flip_test(complex, FieldSpec(kind="random", seed=k), k, count=4, workers=1)
            self.assertTrue(report.passed)


if __name__ == "__main__":
    unittest.main()
