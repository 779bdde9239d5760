import sys

import hydra
from omegaconf import DictConfig

from vfhodge import cli


@hydra.main(config_path="config", config_name="config", version_base=None)
def main(cfg: DictConfig) -> None:

    if cfg.get("command") is None:
        print("Please specify a command with `command=name` or an experiment with `+experiment=name`")
        sys.exit(cli.EXIT_USAGE)

    sys.exit(cli.run(cfg))


if __name__ == "__main__":
    main()
