"""
Commands behind run.py. Each command returns an exit code and a report;
`run` writes the report (plus tables and optional VTK / MatrixMarket files)
into the output directory even when a check fails.

Exit codes: 0 success, 1 usage or input error, 2 failed numerical check.
"""
import json
import logging
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import wandb
from hydra.utils import to_absolute_path
from omegaconf import DictConfig, OmegaConf
from tqdm.auto import tqdm

from vfhodge import extalg, hodge, scalarlab, spectra, util
from vfhodge.assembly import HodgeOperators, assemble, bc_compare, export_matrices, resolve_bc
from vfhodge.getter import get_complex, get_field_spec
from vfhodge.mesh import realize_field, write_vtk

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2
MESH_COMMANDS = ("betti", "decompose", "spectrum", "isometry", "bc_compare")


@dataclass
class RunConfig:
    """
    Validated view of the resolved configuration
    """

    command: str
    seed: int
    k: int
    bc: Optional[str]
    count: int
    workers: Optional[int]
    tolerance: Dict[str, float]
    output: Dict[str, Optional[str]]
    resolved: Dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_config(cls, cfg: DictConfig) -> "RunConfig":
        command = cfg.get("command")
        if command not in COMMANDS:
            raise ValueError(f"Unknown command {command}, expected one of {sorted(COMMANDS)}")
        bc = cfg.hodge.bc
        if bc is not None and command not in MESH_COMMANDS:
            raise ValueError(f"hodge.bc is only valid for the commands {MESH_COMMANDS}")
        if cfg.hodge.k not in (0, 1, 2):
            raise ValueError(f"hodge.k must be 0, 1 or 2, got {cfg.hodge.k}")
        if cfg.workers is not None:
            util.resolve_workers(cfg.workers)
        resolved = OmegaConf.to_container(cfg, resolve=True)
        resolved.pop("hydra", None)
        return cls(
            command=command,
            seed=int(cfg.seed),
            k=int(cfg.hodge.k),
            bc=bc,
            count=int(cfg.hodge.count),
            workers=cfg.workers,
            tolerance=dict(resolved["tolerance"]),
            output=dict(resolved["output"]),
            resolved=resolved,
        )


@dataclass
class CommandResult:
    code: int
    report: Dict
    table: Optional[pd.DataFrame] = None


def _operators(cfg: DictConfig, rc: RunConfig) -> HodgeOperators:
    complex = get_complex(cfg.mesh)
    field = realize_field(complex, get_field_spec(cfg.field))
    if field.projection_residual > 0:
        print(f"Field projected onto the triangle planes, largest normal part {field.projection_residual:.3e}")
    operators = assemble(complex, field, rc.workers)
    if rc.output.get("matrices"):
        export_matrices(operators, rc.output["matrices"])
    return operators


def cmd_verify_algebra(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    report = extalg.verify_identities(cfg.algebra.dim, cfg.algebra.trials, rc.seed, progress=True)
    failures = report.failures(rc.tolerance["algebra"])
    payload = {"identities": report.to_dict(), "failures": failures}
    if failures:
        payload["reproduce"] = {"dim": report.n, "trials": report.trials, "seed": report.seed}
        log.error(f"identities above {rc.tolerance['algebra']:.0e}: {', '.join(failures)} (seed {rc.seed})")
    table = pd.DataFrame(report.to_dict()["by_degree"])
    return CommandResult(EXIT_CHECK if failures else EXIT_OK, payload, table)


def cmd_betti(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    complex = get_complex(cfg.mesh)
    base = get_field_spec(cfg.field)
    bc = resolve_bc(complex, rc.bc)
    kwargs = dict(rank_tol=rc.tolerance["rank"], gap=rc.tolerance["gap"])
    fields = cfg.hodge.fields if base.kind == "random" else 1

    rows, dualities, bases = [], [], []
    for i in tqdm(range(fields), desc="fields"):
        spec = replace(base, seed=base.seed + i) if base.kind == "random" else base
        operators = assemble(complex, realize_field(complex, spec), rc.workers)
        basis = [hodge.harmonic_basis(operators, k, bc, **kwargs) for k in range(3)]
        dims = [b.dimension for b in basis]
        if not bases:
            bases = [b.to_dict() for b in basis]
        rows.append({"seed": spec.seed, "k0": dims[0], "k1": dims[1], "k2": dims[2]})
        if not complex.is_closed:
            dualities.append(hodge.duality_dimensions(operators, **kwargs).to_dict())

    table = pd.DataFrame(rows)
    stable = len({(r["k0"], r["k1"], r["k2"]) for r in rows}) == 1
    first = rows[0]
    payload = {
        "bc": bc,
        "k0": first["k0"],
        "k1": first["k1"],
        "k2": first["k2"],
        "stable": stable,
        "fields": rows,
        "bases": bases,
        "euler_characteristic": complex.euler_characteristic,
    }
    code = EXIT_OK if stable else EXIT_CHECK
    if dualities:
        payload["duality"] = dualities
        if not all(d["passed"] for d in dualities):
            code = EXIT_CHECK
    expected = cfg.hodge.get("expected")
    if expected is not None:
        payload["expected"] = list(expected)
        if [first["k0"], first["k1"], first["k2"]] != list(expected):
            log.error(f"harmonic dimensions {first} differ from expected {list(expected)}")
            code = EXIT_CHECK
    if not stable:
        log.error("harmonic dimensions depend on the field")
    return CommandResult(code, payload, table)


def _read_form(path: str, size: int) -> np.ndarray:
    path = Path(to_absolute_path(path))
    if not path.is_file():
        raise FileNotFoundError(f"form file not found: {path}")
    data = json.loads(path.read_text())
    values = np.asarray(data["values"] if isinstance(data, dict) else data, dtype=float)
    if values.shape != (size,):
        raise ValueError(f"form needs {size} values, got {values.shape}")
    return values


def cmd_decompose(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    operators = _operators(cfg, rc)
    complex, k = operators.complex, rc.k
    if cfg.hodge.form:
        omega = _read_form(cfg.hodge.form, complex.count(k))
    else:
        omega = np.random.default_rng(rc.seed).standard_normal(complex.count(k))

    result = hodge.decompose(operators, omega, k, rc.tolerance["rank"])
    payload = {"decomposition": result.to_dict()}
    residuals = dict(result.residuals)
    parts = {"exact": result.exact, "coexact": result.coexact, "harmonic": result.harmonic}
    if not complex.is_closed:
        four = hodge.decompose_four(operators, omega, k, rc.tolerance["rank"])
        payload["four_component"] = four.to_dict()
        residuals.update({f"four_{key}": value for key, value in four.residuals.items()})
        parts.update({"normal_harmonic": four.normal_harmonic, "coexact_harmonic": four.coexact_harmonic})
    payload["norms"] = {name: float(np.sqrt(max(x @ (operators.mass[k].induced @ x), 0.0))) for name, x in parts.items()}

    failed = sorted(name for name, value in residuals.items() if value > rc.tolerance["decomposition"])
    payload["failed"] = failed
    if failed:
        log.error(f"decomposition residuals above tolerance: {failed}")

    if rc.output.get("vtk"):
        _write_cochains(rc.output["vtk"], operators, k, parts)
    return CommandResult(EXIT_CHECK if failed else EXIT_OK, payload)


def _write_cochains(path: str, operators: HodgeOperators, k: int, parts: Dict[str, np.ndarray]) -> None:
    data = {"point_scalars": {}, "cell_scalars": {}, "cell_vectors": {}}
    for name, x in parts.items():
        for kind, values in hodge.cochain_vectors(operators, x, k).items():
            data[kind][name] = values
    data["cell_vectors"]["field"] = operators.field.vectors
    write_vtk(path, operators.complex, **data)


def cmd_spectrum(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    operators = _operators(cfg, rc)
    report = spectra.eigen(operators, rc.k, rc.bc, rc.count, rc.tolerance["zero"])
    basis = hodge.harmonic_basis(operators, rc.k, rc.bc, rc.tolerance["rank"], rc.tolerance["gap"])
    checks = {
        "residuals": bool(report.residuals.max() <= rc.tolerance["eigen_residual"]),
        "semidefinite": bool(report.min_ratio >= -rc.tolerance["psd"]),
        "zero_multiplicity": report.zero_multiplicity == min(basis.dimension, rc.count),
    }
    payload = {"spectrum": report.to_dict(), "harmonic_dimension": basis.dimension, "checks": checks}
    if not checks["zero_multiplicity"]:
        log.warning(
            f"zero multiplicity {report.zero_multiplicity} differs from harmonic dimension {basis.dimension}"
        )
    table = pd.DataFrame(
        {"index": np.arange(rc.count), "eigenvalue": report.eigenvalues, "residual": report.residuals}
    )
    if rc.output.get("vtk"):
        pick = min(report.zero_multiplicity, rc.count - 1)
        _write_cochains(rc.output["vtk"], operators, rc.k, {f"eigen_{pick}": report.vectors[:, pick]})
    return CommandResult(EXIT_OK if all(checks.values()) else EXIT_CHECK, payload, table)


def cmd_isometry(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    complex = get_complex(cfg.mesh)
    spec = get_field_spec(cfg.field)
    dim = complex.ambient_dim
    identity = bool(cfg.isometry.identity)
    if identity:
        rotation, translation = np.eye(dim), np.zeros(dim)
    else:
        rotation = spectra.random_rotation(cfg.isometry.rotation_seed, dim)
        translation = np.asarray(cfg.isometry.translation, dtype=float)[:dim]

    rows, failed = [], []
    for k in tqdm(list(cfg.isometry.degrees), desc="degrees"):
        moved = spectra.isometry_test(
            complex, spec, rotation, translation, k, cfg.isometry.count, rc.bc, True, rc.tolerance["zero"], rc.workers
        )
        entry = {"pushforward": moved.to_dict()}
        if identity:
            if not moved.bitwise_equal:
                failed.append(f"k{k}: identity motion changed the spectrum")
        elif moved.max_relative_discrepancy > rc.tolerance["isometry"]:
            failed.append(f"k{k}: discrepancy {moved.max_relative_discrepancy:.3e}")
        if cfg.isometry.control and not identity:
            control = spectra.isometry_test(
                complex, spec, rotation, translation, k, cfg.isometry.count, rc.bc, False, rc.tolerance["zero"], rc.workers
            )
            entry["control"] = control.to_dict()
            if control.max_relative_discrepancy <= rc.tolerance["control"]:
                failed.append(f"k{k}: control without pushforward is invariant")
        rows.append(entry)

    payload = {"rotation": rotation, "translation": translation, "degrees": rows, "failed": failed}
    table = pd.DataFrame(
        [
            {
                "k": e["pushforward"]["k"],
                "discrepancy": e["pushforward"]["max_relative_discrepancy"],
                "principal_angle": e["pushforward"]["max_principal_angle"],
                "control_discrepancy": e.get("control", {}).get("max_relative_discrepancy", np.nan),
            }
            for e in rows
        ]
    )
    for message in failed:
        log.error(message)
    return CommandResult(EXIT_CHECK if failed else EXIT_OK, payload, table)


def _case(cfg: DictConfig) -> scalarlab.AnalyticCase:
    name = cfg.scalar.case
    if name in ("sine", "constant"):
        return scalarlab.constant_case(tuple(cfg.scalar.v))
    elif name == "gradient":
        return scalarlab.gradient_case(tuple(cfg.scalar.gradient))
    elif name == "shear":
        return scalarlab.shear_case(cfg.scalar.amplitude)
    raise ValueError(f"Case {name} not found")


def _formula_checks(case: scalarlab.AnalyticCase) -> Dict[str, float]:
    points = scalarlab.sample_points()
    reference = scalarlab.analytic_vlap(case, points)
    return {
        "coordinate_residual": float(np.max(np.abs(scalarlab.coordinate_vlap(case, points) - reference))),
        "finite_difference_residual": scalarlab.finite_difference_check(case, points),
    }


def _order_ok(table: scalarlab.ConvergenceTable, tol: Dict[str, float]) -> bool:
    return all(tol["order_min"] <= o <= tol["order_max"] for o in (table.fitted_order, *table.orders))


def cmd_scalar(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    study = cfg.scalar.study
    tol = rc.tolerance
    if study == "convergence":
        case = _case(cfg)
        formulas = _formula_checks(case)
        table = scalarlab.convergence_study(case, cfg.scalar.levels, cfg.scalar.base_resolution, rc.workers, True)
        payload = {"study": study, "table": table.to_dict(), "formulas": formulas}
        ok = _order_ok(table, tol) and table.monotone
        if cfg.scalar.control:
            control = scalarlab.convergence_study(
                scalarlab.constant_case((0.0, 0.0)), cfg.scalar.levels, cfg.scalar.base_resolution, rc.workers, True
            )
            payload["control"] = control.to_dict()
            ok = ok and _order_ok(control, tol)
        ok = ok and formulas["coordinate_residual"] <= tol["formula"] and formulas["finite_difference_residual"] <= tol["finite_difference"]
        return CommandResult(EXIT_OK if ok else EXIT_CHECK, payload, table.to_frame())
    elif study == "gradient":
        report = scalarlab.gradient_case_check(
            tuple(cfg.scalar.gradient), cfg.scalar.levels, cfg.scalar.base_resolution, rc.workers, True
        )
        ok = (
            _order_ok(report.table, tol)
            and report.formula_residual <= tol["formula"]
            and report.coordinate_residual <= tol["formula"]
            and report.finite_difference_residual <= tol["finite_difference"]
        )
        return CommandResult(EXIT_OK if ok else EXIT_CHECK, {"study": study, **report.to_dict()}, report.table.to_frame())
    elif study == "harmonicity":
        complex = get_complex(cfg.mesh)
        report = scalarlab.harmonicity_check(complex, get_field_spec(cfg.field), tol["harmonicity"], rc.workers)
        expected = bool(cfg.scalar.expect_harmonic)
        payload = {"study": study, "expect_harmonic": expected, **report.to_dict()}
        return CommandResult(EXIT_OK if report.satisfied == expected else EXIT_CHECK, payload)
    raise ValueError(f"Unknown study {study}, expected convergence, gradient or harmonicity")


def cmd_bc_compare(cfg: DictConfig, rc: RunConfig) -> CommandResult:
    complex = get_complex(cfg.mesh)
    field = realize_field(complex, get_field_spec(cfg.field))
    report = bc_compare(complex, field, rc.tolerance["bc"])
    code = EXIT_OK
    if report.hypothesis_holds and report.max_discrepancy > rc.tolerance["bc"]:
        code = EXIT_CHECK
    return CommandResult(code, {"comparison": report.to_dict()})


COMMANDS: Dict[str, Callable[[DictConfig, RunConfig], CommandResult]] = {
    "verify_algebra": cmd_verify_algebra,
    "betti": cmd_betti,
    "decompose": cmd_decompose,
    "spectrum": cmd_spectrum,
    "isometry": cmd_isometry,
    "scalar": cmd_scalar,
    "bc_compare": cmd_bc_compare,
}


def _scalars(report: Dict, prefix: str = "") -> Dict[str, float]:
    out = {}
    for key, value in report.items():
        if isinstance(value, dict):
            out.update(_scalars(value, f"{prefix}{key}."))
        elif isinstance(value, (bool, int, float)) and not isinstance(value, np.ndarray):
            out[f"{prefix}{key}"] = value
    return out


def run(cfg: DictConfig) -> int:
    """
    Run the configured command and write its report
    :param cfg: resolved hydra config
    :return: exit code
    """
    print(OmegaConf.to_yaml(cfg))
    util.fix_seed(cfg.seed)
    out_dir = Path(cfg.output.dir)
    resolved = OmegaConf.to_container(cfg, resolve=True)
    resolved.pop("hydra", None)
    report = {"schema_version": SCHEMA_VERSION, "command": cfg.get("command"), "config": resolved}

    try:
        rc = RunConfig.from_config(cfg)
        result = COMMANDS[rc.command](cfg, rc)
    except (ValueError, FileNotFoundError, KeyError) as e:
        log.error(f"{type(e).__name__}: {e}")
        result = CommandResult(EXIT_USAGE, {"error": str(e), "error_type": type(e).__name__})
    except RuntimeError as e:
        traceback.print_exc()
        result = CommandResult(EXIT_CHECK, {"error": str(e), "error_type": type(e).__name__})

    report.update(result.report)
    report["exit_code"] = result.code
    util.write_json(out_dir / cfg.output.report, report)
    if result.table is not None:
        result.table.to_csv(out_dir / cfg.output.table, index=False)
    print(f"{cfg.get('command')}: exit code {result.code}, report in {out_dir / cfg.output.report}")

    if cfg.wandb:
        wandb.init(project=cfg.project, config=util.flatten_config(cfg))
        wandb.run.summary.update(_scalars(util.to_builtin(result.report)))
        wandb.finish()
    return result.code
