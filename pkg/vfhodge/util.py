import json
import os
import random
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from omegaconf import DictConfig, OmegaConf
from scipy.linalg import LinAlgError, svd

NUM_THREADS_ENV = "VFHODGE_NUM_THREADS"


def fix_seed(seed: int = 0) -> None:
    """
    Fix all random seeds for reproducibility
    :param seed:
    :return:
    """
    random.seed(seed)
    os.environ["PYTHONHASHSEED"] = str(seed)
    np.random.seed(seed)


def resolve_workers(workers: Optional[int] = None) -> int:
    """
    Number of element threads: explicit value, else VFHODGE_NUM_THREADS, else 1
    """
    if workers is None:
        workers = int(os.environ.get(NUM_THREADS_ENV, "1"))
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    return workers


def flatten_config(cfg: Union[DictConfig, Dict]) -> Dict[str, Any]:
    """
    Two-level config flattened to dotted keys (for experiment trackers)
    """
    if isinstance(cfg, DictConfig):
        cfg = OmegaConf.to_container(cfg, resolve=True)
    flat = {}
    for key, value in cfg.items():
        if key == "hydra":
            continue
        if isinstance(value, dict):
            for sub, sub_value in value.items():
                flat[f"{key}.{sub}"] = sub_value
        else:
            flat[key] = value
    return flat


def to_builtin(obj: Any) -> Any:
    """
    Convert numpy scalars and arrays nested in obj to JSON-compatible types
    """
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path: Union[str, Path], payload: Dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(to_builtin(payload), indent=2, sort_keys=True) + "\n")


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """
    Flip columns so that their first significant coefficient is positive
    """
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        significant = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if len(significant) and col[significant[0]] < 0:
            out[:, j] = -col
    return out


def _conditioning(a: np.ndarray) -> str:
    """
    Conditioning summary for error messages, from the bidiagonal SVD driver
    """
    finite = np.isfinite(a)
    if not finite.all():
        return f"{int(np.sum(~finite))} non-finite entries"
    try:
        s = svd(a, compute_uv=False, lapack_driver="gesvd")
    except LinAlgError:
        return f"condition unavailable, frobenius norm {np.linalg.norm(a):.3e}"
    ratio = s[0] / s[-1] if s[-1] > 0 else np.inf
    return f"sigma_max {s[0]:.3e}, sigma_min {s[-1]:.3e}, condition {ratio:.3e}"


def minimum_norm_solve(
    a: np.ndarray, b: np.ndarray, rtol: float = 1e-8
) -> Tuple[np.ndarray, Dict[str, float]]:
    """
    Minimum-norm least-squares solution of a x = b through a truncated SVD
    :param a: m x n matrix
    :param b: right-hand side (m,)
    :param rtol: singular values below rtol * s_max are treated as zero
    :return: solution (n,), conditioning summary
    """
    if a.size == 0:
        return np.zeros(a.shape[1]), {"rank": 0, "sigma_max": 0.0, "sigma_min": 0.0}
    try:
        u, s, vh = svd(a, full_matrices=False)
    except LinAlgError as e:
        raise RuntimeError(f"least-squares solve failed on a {a.shape} system: {e}; {_conditioning(a)}")
    if s[0] == 0:
        return np.zeros(a.shape[1]), {"rank": 0, "sigma_max": 0.0, "sigma_min": 0.0}
    rank = int(np.sum(s > rtol * s[0]))
    x = vh[:rank].T @ ((u[:, :rank].T @ b) / s[:rank])
    return x, {"rank": rank, "sigma_max": float(s[0]), "sigma_min": float(s[rank - 1])}
