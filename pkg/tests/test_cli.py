import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd
from hydra import compose, initialize

from vfhodge import cli


class CliTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def run_with(self, *overrides: str):
        with initialize(config_path="../config", version_base=None):
            cfg = compose(config_name="config", overrides=[f"output.dir={self.out}", "workers=1", *overrides])
        code = cli.run(cfg)
        report = json.loads((self.out / "report.json").read_text())
        self.assertEqual(report["exit_code"], code)
        self.assertEqual(report["schema_version"], cli.SCHEMA_VERSION)
        return code, report

    def test_verify_algebra(self):
        code, report = self.run_with("+experiment=verify_algebra", "algebra.dim=2", "algebra.trials=10")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(report["failures"], [])
        self.assertTrue((self.out / "table.csv").is_file())

    def test_betti(self):
        code, report = self.run_with("+experiment=torus_betti", "mesh.resolution=4", "hodge.fields=2")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual([report["k0"], report["k1"], report["k2"]], [1, 2, 1])
        self.assertTrue(report["stable"])
        self.assertEqual(len(pd.read_csv(self.out / "table.csv")), 2)
        self.assertEqual([b["dimension"] for b in report["bases"]], [1, 2, 1])
        for basis in report["bases"]:
            self.assertIn("smallest_retained", basis)
            self.assertIn("largest_discarded", basis)

    def test_betti_with_boundary(self):
        code, report = self.run_with("+experiment=annulus_normal", "mesh.sectors=8", "hodge.fields=1")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(report["duality"][0]["passed"])

    def test_expected_mismatch(self):
        code, _ = self.run_with("+experiment=torus_betti", "mesh.resolution=4", "hodge.fields=1", "hodge.expected=[1,1,1]")
        self.assertEqual(code, cli.EXIT_CHECK)

    def test_decompose(self):
        code, report = self.run_with("+experiment=decompose_torus", "mesh.resolution=4", f"output.vtk={self.out / 'parts.vtk'}")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(report["failed"], [])
        self.assertTrue((self.out / "parts.vtk").is_file())

    def test_spectrum(self):
        code, report = self.run_with("+experiment=spectrum_torus", "mesh.resolution=6")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(report["spectrum"]["zero_multiplicity"], 1)

    def test_isometry(self):
        code, report = self.run_with("+experiment=isometry_torus", "mesh.resolution=6", "mesh.minor=4", "isometry.count=20")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(report["failed"], [])
        self.assertEqual([e["pushforward"]["k"] for e in report["degrees"]], [0, 1, 2])
        for entry in report["degrees"]:
            self.assertLessEqual(entry["pushforward"]["max_relative_discrepancy"], 1e-9)
            self.assertGreater(entry["control"]["max_relative_discrepancy"], 1e-6)
        self.assertEqual(len(pd.read_csv(self.out / "table.csv")), 3)

    def test_isometry_identity(self):
        code, report = self.run_with(
            "+experiment=isometry_torus", "mesh.resolution=6", "mesh.minor=4", "isometry.identity=True", "isometry.degrees=[1]"
        )
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(report["failed"], [])

    def test_harmonicity(self):
        code, _ = self.run_with("+experiment=harmonicity", "mesh.resolution=4")
        self.assertEqual(code, cli.EXIT_OK)
        code, report = self.run_with(
            "command=scalar", "scalar.study=harmonicity", "mesh.name=annulus", "field.kind=rotational", "scalar.expect_harmonic=False"
        )
        self.assertEqual(code, cli.EXIT_OK)
        self.assertFalse(report["satisfied"])

    def test_bc_compare(self):
        code, report = self.run_with("+experiment=bc_compare")
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(report["comparison"]["hypothesis_holds"])

    def test_algebra_errors(self):
        code, report = self.run_with("+experiment=verify_algebra", "algebra.dim=9")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn("dimension cap exceeded", report["error"])
        code, report = self.run_with("+experiment=verify_algebra", "algebra.trials=0")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertEqual(report["error_type"], "ValueError")

    def test_malformed_field_file(self):
        path = self.out / "field.json"
        path.write_text('{"kind": "constant", "components": [1.0, ')
        code, report = self.run_with("+experiment=torus_betti", "mesh.resolution=4", f"field.path={path}")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertEqual(report["error_type"], "JSONDecodeError")

    def test_usage_errors(self):
        code, report = self.run_with("command=unknown")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn("error", report)
        code, _ = self.run_with("command=scalar", "hodge.bc=normal")
        self.assertEqual(code, cli.EXIT_USAGE)
        code, _ = self.run_with("command=betti", "mesh.name=annulus", "hodge.bc=closed")
        self.assertEqual(code, cli.EXIT_USAGE)
        code, _ = self.run_with("command=spectrum", "mesh.name=triangle", "hodge.k=0", "hodge.count=10")
        self.assertEqual(code, cli.EXIT_USAGE)
        code, report = self.run_with("command=betti", "mesh.name=missing.off")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertEqual(report["error_type"], "FileNotFoundError")


if __name__ == "__main__":
    unittest.main()
