import unittest

import numpy as np

from vfhodge import extalg
from vfhodge.extalg import KFormValue, PointMetric


class ExtAlgTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.g = PointMetric.identity(2)
        self.dx = KFormValue.basis_form(2, (0,))
        self.dy = KFormValue.basis_form(2, (1,))

    def test_hodge_star_plane(self):
        self.assertTrue(np.allclose(extalg.hodge_star(self.dx, self.g).coeffs, self.dy.coeffs))
        self.assertTrue(np.allclose(extalg.hodge_star(self.dy, self.g).coeffs, -self.dx.coeffs))

    def test_interior_of_area_form(self, a: float = 0.7, b: float = -1.3):
        area = extalg.wedge(self.dx, self.dy)
        out = extalg.interior([a, b], area)
        self.assertTrue(np.allclose(out.coeffs, [-b, a]))

    def test_t_v_examples(self):
        v = [1.0, 0.0]
        self.assertTrue(np.allclose(extalg.t_v(self.dx, v, self.g).coeffs, 2 * self.dx.coeffs))
        self.assertTrue(np.allclose(extalg.t_v(self.dy, v, self.g).coeffs, self.dy.coeffs))
        top = extalg.wedge(self.dx, self.dy)
        self.assertTrue(np.allclose(extalg.t_v(top, v, self.g).coeffs, 2 * top.coeffs))

    def test_star_v_twice(self):
        v = [1.0, 0.0]
        twice = extalg.star_v(extalg.star_v(self.dx, v, self.g), v, self.g)
        self.assertTrue(np.allclose(twice.coeffs, -2 * self.dx.coeffs))

    def test_star_v_inverse(self, seed: int = 3):
        rng = np.random.default_rng(seed)
        g = extalg.random_metric(rng, 4)
        v = extalg.random_vector(rng, 4)
        for k in range(5):
            w = extalg.random_form(rng, 4, k)
            back = extalg.star_v_inv(extalg.star_v(w, v, g), v, g)
            self.assertTrue(np.allclose(back.coeffs, w.coeffs, atol=1e-10))

    def test_matrix_matches_pointwise(self, seed: int = 5):
        rng = np.random.default_rng(seed)
        g = extalg.random_metric(rng, 3)
        v = extalg.random_vector(rng, 3)
        for k in range(4):
            w = extalg.random_form(rng, 3, k)
            self.assertTrue(
                np.allclose(extalg.t_v_matrix(v, g, k) @ w.coeffs, extalg.t_v(w, v, g).coeffs)
            )
            u = extalg.random_form(rng, 3, k)
            self.assertAlmostEqual(
                w.coeffs @ extalg.inner_gv_matrix(v, g, k) @ u.coeffs,
                extalg.inner_gv(w, u, v, g),
                delta=1e-10,
            )

    def test_basis_indices(self):
        for n in (2, 3, 5):
            for k in range(n + 1):
                indices = extalg.basis_indices(n, k)
                self.assertEqual(len(indices), extalg.binomial(n, k))
                self.assertEqual(list(indices), sorted(indices))
                self.assertTrue(all(list(idx) == sorted(set(idx)) for idx in indices))
                position = extalg.basis_position(n, k)
                self.assertEqual([position[idx] for idx in indices], list(range(len(indices))))
        self.assertEqual(extalg.basis_indices(3, 2), ((0, 1), (0, 2), (1, 2)))
        with self.assertRaisesRegex(ValueError, "degree exceeds dimension"):
            extalg.basis_indices(3, 4)
        with self.assertRaisesRegex(ValueError, "dimension cap exceeded"):
            extalg.basis_indices(9, 1)

    def test_compound_of_identity(self):
        for k in range(4):
            self.assertTrue(np.allclose(extalg.compound_matrix(np.eye(3), k), np.eye(extalg.binomial(3, k))))

    def test_wedge_degree_overflow(self):
        area = extalg.wedge(self.dx, self.dy)
        with self.assertRaises(ValueError):
            extalg.wedge(area, self.dx)

    def test_metric_validation(self):
        with self.assertRaises(ValueError):
            PointMetric.from_matrix([[1.0, 0.5], [0.4, 1.0]])
        with self.assertRaises(ValueError):
            PointMetric.from_matrix([[1.0, 0.0], [0.0, -1.0]])

    def test_verify_identities(self, trials: int = 50):
        for n in (2, 3, 4):
            report = extalg.verify_identities(n, trials, seed=n)
            self.assertEqual(report.failures(1e-10), [])
            self.assertIn("star_v_star_v", report.identities)
            self.assertIn("star_of_interior", report.identities)

    def test_verify_identities_contract(self):
        with self.assertRaises(ValueError):
            extalg.verify_identities(3, 0)
        with self.assertRaisesRegex(ValueError, "dimension cap exceeded"):
            extalg.verify_identities(9, 1)

    def test_verify_identities_deterministic(self):
        first = extalg.verify_identities(3, 5, seed=1).to_dict()
        second = extalg.verify_identities(3, 5, seed=1).to_dict()
        self.assertEqual(first, second)


if __name__ == "__main__":
    unittest.main()
