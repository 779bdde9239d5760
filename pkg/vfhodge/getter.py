from pathlib import Path

from hydra.utils import to_absolute_path
from omegaconf import DictConfig, OmegaConf

from vfhodge import meshgen
from vfhodge.mesh import FieldSpec, SimplicialComplex, load_field_spec, read_mesh


def get_complex(cfg: DictConfig) -> SimplicialComplex:
    """
    Built-in generator by name, otherwise a path to an OFF/OBJ file
    """
    name = str(cfg.name)

    if name.lower() in ("flat_torus", "torus"):
        return meshgen.flat_torus(cfg.resolution)
    elif name.lower() == "torus3d":
        return meshgen.torus3d(cfg.resolution, cfg.minor)
    elif name.lower() == "rectangle":
        return meshgen.rectangle(cfg.resolution, cfg.resolution)
    elif name.lower() == "sphere":
        return meshgen.sphere(cfg.subdivisions)
    elif name.lower() in ("disk", "annulus"):
        return meshgen.builtin(name.lower(), rings=cfg.rings, sectors=cfg.sectors)
    elif name.lower() in ("triangle", "triangle_pair", "octahedron", "mobius"):
        return meshgen.builtin(name.lower())

    path = Path(to_absolute_path(name))
    if path.suffix.lower() in (".off", ".obj"):
        return read_mesh(path)
    raise ValueError(f"Mesh {cfg.name} not found")


def get_field_spec(cfg: DictConfig) -> FieldSpec:
    """
    Field from a JSON file when `path` is set, otherwise from the inline keys
    """
    if cfg.get("path"):
        return load_field_spec(to_absolute_path(cfg.path))
    data = OmegaConf.to_container(cfg, resolve=True)
    return FieldSpec.from_dict({k: v for k, v in data.items() if v is not None})
